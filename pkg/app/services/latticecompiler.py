"""
Stroboscopic gate schedule of qubit plus bath on an optical lattice.

The qubit sits at lattice position 0 and the bath spins at 1..N (open chain,
qubit linked to spin 1). One step of length tau = t / n reads, in time order,

    U^z_bath(J lambda tau / 2), U^z_0(omega_e tau), U^zz_all(-eps tau),
    [sz_0 U^yy_all(th3)]^2, [sz_0 U^xx_all(th2)]^2, [sx_0 U^zz_all(th1)]^2

with th1 = (eps - J Delta / 2) tau / 2, th2 = -J (gamma + 1) tau / 4 and
th3 = J (gamma - 1) tau / 4. Conjugating a global two-site rotation with a
Pauli on the qubit removes the qubit-bath bond, so the squares act on the
bath bonds only. Rotations are U^z(th) = exp(i th sz) and
U^ab(th) = exp(i th sa sb).

Three levels are produced:

* step: global rotations and Paulis on the qubit,
* gate: single-bond rotations with basis changes V = (1 - i sigma)/sqrt(2),
* pulse: laser pulses exp(-i area (cos phi sx - sin phi sy)) and lattice
  displacements that add a phase exp(-i phi) to |down up> of every bond.

Levels agree up to a global phase; all comparisons are phase-aligned.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from app.config import settings
from app.exceptions import InvalidScheduleError, SizeLimitError, UnsupportedLayoutError
from app.models import (Boundary, ChainSpec, ConvergenceReport, CouplingSpec, Gate, GateKind, Level,
                        ScheduleResponse)
from app.services.model import resolve_sites

logger = logging.getLogger(__name__)

IDENTITY = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"x": SX, "y": SY, "z": SZ}

VX = (IDENTITY - 1j * SX) / np.sqrt(2.0)
VY = (IDENTITY - 1j * SY) / np.sqrt(2.0)
BASIS_CHANGE = {
    GateKind.VX: VX,
    GateKind.VX_DAG: VX.conj().T,
    GateKind.VY: VY,
    GateKind.VY_DAG: VY.conj().T,
}

# laser realisation (area, phase) of the fixed single-site gates
HALF_PI = 0.5 * np.pi
PULSES = {
    GateKind.VX: (0.25 * np.pi, 0.0),
    GateKind.VX_DAG: (0.25 * np.pi, np.pi),
    GateKind.VY: (0.25 * np.pi, 1.5 * np.pi),
    GateKind.VY_DAG: (0.25 * np.pi, HALF_PI),
    GateKind.PAULI_X: (HALF_PI, 0.0),
}

_TWO_SITE = {GateKind.UXX: "x", GateKind.UYY: "y", GateKind.UZZ: "z",
             GateKind.GLOBAL_UXX: "x", GateKind.GLOBAL_UYY: "y", GateKind.GLOBAL_UZZ: "z"}


def rotation(theta: float) -> np.ndarray:
    """exp(i theta sz)."""
    return np.diag([np.exp(1j * theta), np.exp(-1j * theta)])


def pair_rotation(axis: str, theta: float) -> np.ndarray:
    """exp(i theta s^a s^a) on one bond, computed from the involution s^a s^a."""
    P = np.kron(PAULI[axis], PAULI[axis])
    return np.cos(theta) * np.eye(4) + 1j * np.sin(theta) * P


def laser(area: float, phase: float) -> np.ndarray:
    """Single-site pulse exp(-i area (cos phase sx - sin phase sy))."""
    n = np.cos(phase) * SX - np.sin(phase) * SY
    return np.cos(area) * IDENTITY - 1j * np.sin(area) * n


def displacement(phi: float) -> np.ndarray:
    return np.diag([1.0, 1.0, np.exp(-1j * phi), 1.0])


@dataclass(frozen=True)
class GateSequence:
    gates: List[Gate]
    n_steps: int
    tau: float
    chain: ChainSpec
    coupling: CouplingSpec
    t: float
    level: Level = Level.STEP
    meta: dict = field(default_factory=dict)

    @property
    def n_sites(self) -> int:
        """Lattice positions, qubit included."""
        return self.chain.N + 1

    @property
    def gates_per_step(self) -> int:
        return len(self.gates) // self.n_steps

    def step(self, k: int = 0) -> "GateSequence":
        """The gates of step ``k`` as a one-step sequence."""
        return GateSequence(gates=[g for g in self.gates if g.step == k], n_steps=1, tau=self.tau,
                            chain=self.chain, coupling=self.coupling, t=self.tau, level=self.level)


def _bath(N: int) -> Tuple[int, ...]:
    return tuple(range(1, N + 1))


def _lattice(N: int) -> Tuple[int, ...]:
    return tuple(range(0, N + 1))


def _step_gates(chain: ChainSpec, coupling: CouplingSpec, tau: float) -> List[Gate]:
    J, eps = chain.J, coupling.epsilon
    th1 = (eps - 0.5 * J * chain.delta) * tau / 2.0
    th2 = -J * (chain.gamma + 1.0) * tau / 4.0
    th3 = J * (chain.gamma - 1.0) * tau / 4.0
    bath, lattice = _bath(chain.N), _lattice(chain.N)

    gates = []
    if chain.lambda_ != 0:
        gates.append(Gate(kind=GateKind.GLOBAL_UZ, sites=bath, angle=J * chain.lambda_ * tau / 2.0))
    if coupling.omega_e != 0:
        gates.append(Gate(kind=GateKind.UZ, sites=(0,), angle=coupling.omega_e * tau))
    if eps != 0:
        gates.append(Gate(kind=GateKind.GLOBAL_UZZ, sites=lattice, angle=-eps * tau))
    for kind, angle, pauli in ((GateKind.GLOBAL_UYY, th3, GateKind.PAULI_Z),
                               (GateKind.GLOBAL_UXX, th2, GateKind.PAULI_Z),
                               (GateKind.GLOBAL_UZZ, th1, GateKind.PAULI_X)):
        if angle == 0:
            continue
        for _ in range(2):
            gates.append(Gate(kind=kind, sites=lattice, angle=angle))
            gates.append(Gate(kind=pauli, sites=(0,)))
    return gates


def _expand_gate(gate: Gate) -> List[Gate]:
    """Single-bond rotations with basis changes for the global two-site gates."""
    sites = gate.sites
    bonds = list(zip(sites, sites[1:]))
    if gate.kind == GateKind.GLOBAL_UZ:
        return [Gate(kind=GateKind.UZ, sites=(s,), angle=gate.angle) for s in sites]
    if gate.kind in (GateKind.GLOBAL_UXX, GateKind.GLOBAL_UYY, GateKind.GLOBAL_UZZ):
        core = [Gate(kind=GateKind.UZZ, sites=b, angle=gate.angle) for b in bonds]
        if gate.kind == GateKind.GLOBAL_UXX:
            return [Gate(kind=GateKind.VY_DAG, sites=sites)] + core + [Gate(kind=GateKind.VY, sites=sites)]
        if gate.kind == GateKind.GLOBAL_UYY:
            return [Gate(kind=GateKind.VX, sites=sites)] + core + [Gate(kind=GateKind.VX_DAG, sites=sites)]
        return core
    return [gate]


def _pulse_z(sites: Tuple[int, ...], theta: float) -> List[Gate]:
    return [Gate(kind=GateKind.LASER, sites=sites, angle=HALF_PI, phase=0.0),
            Gate(kind=GateKind.LASER, sites=sites, angle=HALF_PI, phase=np.pi + theta)]


def _expand_pulse(gate: Gate) -> List[Gate]:
    """Laser pulses and lattice displacements for a step-level gate."""
    sites = gate.sites
    if gate.kind in (GateKind.GLOBAL_UZ, GateKind.UZ):
        return _pulse_z(sites, gate.angle)
    if gate.kind == GateKind.PAULI_Z:
        return _pulse_z(sites, HALF_PI)
    if gate.kind in PULSES:
        area, phase = PULSES[gate.kind]
        return [Gate(kind=GateKind.LASER, sites=sites, angle=area, phase=phase)]
    if gate.kind == GateKind.GLOBAL_UZZ:
        flip = Gate(kind=GateKind.LASER, sites=sites, angle=HALF_PI, phase=0.0)
        shift = Gate(kind=GateKind.DISPLACEMENT, sites=sites, angle=2.0 * gate.angle)
        return [flip, shift, flip, shift]
    if gate.kind in (GateKind.GLOBAL_UXX, GateKind.GLOBAL_UYY):
        before, after = ((GateKind.VY_DAG, GateKind.VY) if gate.kind == GateKind.GLOBAL_UXX
                         else (GateKind.VX, GateKind.VX_DAG))
        core = Gate(kind=GateKind.GLOBAL_UZZ, sites=sites, angle=gate.angle)
        return (_expand_pulse(Gate(kind=before, sites=sites)) + _expand_pulse(core)
                + _expand_pulse(Gate(kind=after, sites=sites)))
    raise InvalidScheduleError(f"no pulse realisation for {gate.kind.value}")


def compile(chain: ChainSpec, coupling: CouplingSpec, t: float, n_steps: int,
            level: Level = Level.STEP) -> GateSequence:
    """
    Stroboscopic schedule of n_steps repetitions of the step above.

    Blocks whose angle is exactly zero are left out.

    Raises:
        UnsupportedLayoutError: Unless the chain is open and the qubit couples to spin 1 only
        InvalidScheduleError: If n_steps < 1
    """
    if n_steps < 1:
        raise InvalidScheduleError(f"n_steps must be at least 1, got {n_steps}")
    if chain.boundary != Boundary.OPEN:
        raise UnsupportedLayoutError("the lattice schedule targets open chains")
    if coupling.m != 1 or resolve_sites(chain, coupling) != (1,):
        raise UnsupportedLayoutError("the lattice schedule couples the qubit to bath spin 1 only (m=1)")

    tau = t / n_steps
    step = _step_gates(chain, coupling, tau)
    if level == Level.GATE:
        step = [g for gate in step for g in _expand_gate(gate)]
    elif level == Level.PULSE:
        step = [g for gate in step for g in _expand_pulse(gate)]

    gates = [g.model_copy(update={"step": k}) for k in range(n_steps) for g in step]
    logger.debug(f"Compiled {level.value} schedule: N={chain.N} n={n_steps} gates/step={len(step)}")
    return GateSequence(gates=gates, n_steps=n_steps, tau=tau, chain=chain, coupling=coupling, t=t, level=level)


def local_operators(gate: Gate) -> List[Tuple[np.ndarray, Tuple[int, ...]]]:
    """The gate as commuting (matrix, sites) factors on one or two lattice sites."""
    sites = gate.sites
    bonds = list(zip(sites, sites[1:]))
    kind = gate.kind
    if kind in (GateKind.UZ, GateKind.GLOBAL_UZ):
        return [(rotation(gate.angle), (s,)) for s in sites]
    if kind in _TWO_SITE:
        U = pair_rotation(_TWO_SITE[kind], gate.angle)
        return [(U, b) for b in bonds]
    if kind == GateKind.PAULI_X:
        return [(SX, (s,)) for s in sites]
    if kind == GateKind.PAULI_Z:
        return [(SZ, (s,)) for s in sites]
    if kind in BASIS_CHANGE:
        return [(BASIS_CHANGE[kind], (s,)) for s in sites]
    if kind == GateKind.LASER:
        U = laser(gate.angle, gate.phase)
        return [(U, (s,)) for s in sites]
    if kind == GateKind.DISPLACEMENT:
        D = displacement(gate.angle)
        return [(D, b) for b in bonds]
    raise InvalidScheduleError(f"unknown gate kind {kind}")


def _apply(U: np.ndarray, matrix: np.ndarray, sites: Tuple[int, ...], n_sites: int) -> np.ndarray:
    """Left-multiply U (tensor with n_sites row legs, one column leg) by a local matrix."""
    k = len(sites)
    local = matrix.reshape((2,) * (2 * k))
    U = np.tensordot(local, U, axes=(list(range(k, 2 * k)), list(sites)))
    return np.moveaxis(U, list(range(k)), list(sites))


def contract(sequence: GateSequence, n_sites: Optional[int] = None) -> np.ndarray:
    """Ordered product of the gate matrices, first gate acting first."""
    n_sites = n_sites or sequence.n_sites
    if n_sites - 1 > settings.COMPILER_MAX_SITES:
        raise SizeLimitError(f"contraction limited to N <= {settings.COMPILER_MAX_SITES}, got N={n_sites - 1}")
    dim = 2 ** n_sites
    U = np.eye(dim, dtype=complex).reshape((2,) * n_sites + (dim,))
    for gate in sequence.gates:
        for matrix, sites in local_operators(gate):
            U = _apply(U, matrix, sites, n_sites)
    return U.reshape(dim, dim)


def contract_steps(sequence: GateSequence) -> np.ndarray:
    """Contract one step and raise it to the n_steps power."""
    return np.linalg.matrix_power(contract(sequence.step(0)), sequence.n_steps)


def embed(factors: dict, n_sites: int) -> np.ndarray:
    """Dense tensor product with ``factors[site]`` on the given sites, identity elsewhere."""
    out = np.ones((1, 1), dtype=complex)
    for s in range(n_sites):
        out = np.kron(out, factors.get(s, IDENTITY))
    return out


def step_generator(chain: ChainSpec, coupling: CouplingSpec) -> np.ndarray:
    """
    Hamiltonian generated by one step in the tau -> 0 limit:

        J Delta/2 sum zz + J(1+gamma)/2 sum xx + J(1-gamma)/2 sum yy
        + eps sz_0 sz_1 - omega_e sz_0 - J lambda/2 sum_j sz_j

    with the two-site sums over bath bonds and the last sum over bath spins.
    """
    N, J = chain.N, chain.J
    n_sites = N + 1
    H = np.zeros((2 ** n_sites,) * 2, dtype=complex)
    weights = {"z": 0.5 * J * chain.delta, "x": 0.5 * J * (1 + chain.gamma), "y": 0.5 * J * (1 - chain.gamma)}
    for j in range(1, N):
        for axis, w in weights.items():
            if w:
                H += w * embed({j: PAULI[axis], j + 1: PAULI[axis]}, n_sites)
    H += coupling.epsilon * embed({0: SZ, 1: SZ}, n_sites)
    H -= coupling.omega_e * embed({0: SZ}, n_sites)
    for j in range(1, N + 1):
        H -= 0.5 * J * chain.lambda_ * embed({j: SZ}, n_sites)
    return H


def phase_aligned_distance(U1: np.ndarray, U2: np.ndarray) -> float:
    """||U1 - exp(i phi) U2||_2 with phi = arg tr(U2^dag U1)."""
    overlap = np.trace(U2.conj().T @ U1)
    phase = np.exp(1j * np.angle(overlap)) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(U1 - phase * U2, ord=2))


def verify(chain: ChainSpec, coupling: CouplingSpec, t: float, n_list: Sequence[int] = (10, 20, 40, 80),
           level: Level = Level.STEP) -> ConvergenceReport:
    """
    Phase-aligned distance between the contracted schedule and exp(-i H t),
    H the step generator, for every n; the order is minus the log-log slope.
    """
    if chain.N > settings.COMPILER_MAX_SITES:
        raise SizeLimitError(f"verification limited to N <= {settings.COMPILER_MAX_SITES}, got N={chain.N}")
    exact = scipy.linalg.expm(-1j * t * step_generator(chain, coupling))
    distances = []
    for n in n_list:
        U = contract_steps(compile(chain, coupling, t, n, level))
        distances.append(phase_aligned_distance(U, exact))
        logger.debug(f"verify n={n}: distance={distances[-1]:.3e}")

    n_arr, d_arr = np.array(n_list, dtype=float), np.array(distances)
    usable = d_arr > 1e-13
    order = None
    if usable.sum() >= 2:
        order = float(-np.polyfit(np.log(n_arr[usable]), np.log(d_arr[usable]), 1)[0])
    return ConvergenceReport(level=level, t=t, n_list=list(n_list), distances=distances, order=order)


def export_text(sequence: GateSequence) -> str:
    """One gate per line: ``STEP k | GATE kind | SITES i,j | ANGLE theta`` (plus ``| PHASE phi`` for lasers)."""
    lines = [f"# schedule schema_version={settings.SCHEMA_VERSION} level={sequence.level.value} "
             f"n_steps={sequence.n_steps} tau={float(sequence.tau)!r}"]
    for g in sequence.gates:
        sites = ",".join(map(str, g.sites))
        line = f"STEP {g.step} | GATE {g.kind.value} | SITES {sites} | ANGLE {float(g.angle)!r}"
        if g.kind == GateKind.LASER:
            line += f" | PHASE {float(g.phase)!r}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def schedule(sequence: GateSequence) -> ScheduleResponse:
    return ScheduleResponse(level=sequence.level, n_steps=sequence.n_steps, tau=sequence.tau, gates=sequence.gates)


def export_json(sequence: GateSequence) -> str:
    return json.dumps(schedule(sequence).model_dump(mode="json"), indent=2)


def parse_text(text: str) -> List[Gate]:
    """Read back the gates of an ``export_text`` schedule."""
    gates = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        fields = dict(part.strip().split(" ", 1) for part in line.split("|"))
        sites = tuple(int(s) for s in fields["SITES"].split(",") if s)
        gates.append(Gate(kind=GateKind(fields["GATE"]), sites=sites, angle=float(fields["ANGLE"]),
                          phase=float(fields.get("PHASE", 0.0)), step=int(fields["STEP"])))
    return gates


def gate_counts(gates: Iterable[Gate]) -> dict:
    counts: dict = {}
    for g in gates:
        counts[g.kind.value] = counts.get(g.kind.value, 0) + 1
    return counts
