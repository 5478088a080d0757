"""
Dense exact diagonalization of the spin bath (N <= ED_MAX_SITES).

Basis states are bit strings with site 1 as the most significant bit; bit 0 is
spin up (sigma^z = +1), so the two-site canonical order is
(up up, up down, down up, down down).

    H = -J/2 sum_<jk> [(1+gamma) X_j X_k + (1-gamma) Y_j Y_k + Delta Z_j Z_k]
        - J lambda sum_j Z_j - sum_j eps_j Z_j
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import ArpackError, eigsh, expm_multiply

from app.config import settings
from app.exceptions import InvalidSitesError, NumericalFailureError, SizeLimitError
from app.models import (Boundary, ChainSpec, CouplingSpec, Method, PlateauEstimate,
                        SectorRule)
from app.services.echo import EchoSeries
from app.services.model import site_fields

logger = logging.getLogger(__name__)


def spin_z(n_sites: int) -> np.ndarray:
    """Array (n_sites, 2**n_sites) of sigma^z eigenvalues, site 1 first."""
    index = np.arange(2 ** n_sites)
    shifts = n_sites - 1 - np.arange(n_sites)
    return 1 - 2 * ((index[None, :] >> shifts[:, None]) & 1)


def bonds(chain: ChainSpec) -> Tuple[Tuple[int, int], ...]:
    """Nearest-neighbor bonds (j, k), 1-based, numbered by j."""
    pairs = [(j, j + 1) for j in range(1, chain.N)]
    if chain.boundary == Boundary.PERIODIC:
        pairs.append((chain.N, 1))
    return tuple(pairs)


@dataclass(frozen=True, eq=False)
class DenseState:
    amplitudes: np.ndarray
    N: int

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "DenseState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def expectation(self, H: "DenseHamiltonian") -> float:
        return float(np.real(np.vdot(self.amplitudes, H.matrix @ self.amplitudes)))


@dataclass(frozen=True, eq=False)
class DenseHamiltonian:
    """Sparse real symmetric matrix; explicit spectrum only below ED_DENSE_MAX_SITES."""
    matrix: sparse.csr_matrix
    N: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_dense(self) -> bool:
        return self.N <= settings.ED_DENSE_MAX_SITES

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(np.max(np.abs(diff.data), initial=0.0))

    @cached_property
    def spectrum(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.is_dense:
            raise SizeLimitError(
                f"full spectrum limited to N <= {settings.ED_DENSE_MAX_SITES}, got N={self.N}"
            )
        try:
            return scipy.linalg.eigh(self.matrix.toarray())
        except np.linalg.LinAlgError as e:
            raise NumericalFailureError(f"eigh failed for N={self.N}: {e}") from e


def _check_size(N: int) -> None:
    if N > settings.ED_MAX_SITES:
        raise SizeLimitError(f"dense ED limited to N <= {settings.ED_MAX_SITES}, got N={N}")


def _assemble(chain: ChainSpec, eps: np.ndarray, onsite: bool,
              keep_bond: Callable[[int], bool]) -> sparse.csr_matrix:
    N, J, gamma = chain.N, chain.J, chain.gamma
    dim = 2 ** N
    z = spin_z(N)
    index = np.arange(dim)

    diagonal = np.zeros(dim)
    if onsite:
        diagonal -= ((J * chain.lambda_ + eps)[:, None] * z).sum(axis=0)

    rows, cols, data = [index], [index], []
    for j, k in bonds(chain):
        if not keep_bond(j):
            continue
        zz = z[j - 1] * z[k - 1]
        diagonal -= 0.5 * J * chain.delta * zz
        # X X flips both spins; Y Y does the same with sign -z_j z_k
        coefficient = -0.5 * J * ((1.0 + gamma) - (1.0 - gamma) * zz)
        flip = (1 << (N - j)) | (1 << (N - k))
        rows.append(index)
        cols.append(index ^ flip)
        data.append(coefficient)
    data.insert(0, diagonal)

    H = sparse.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(dim, dim))
    return H.tocsr()


def dense_hamiltonian(chain: ChainSpec, perturbation: Optional[CouplingSpec] = None) -> DenseHamiltonian:
    """
    Spin Hamiltonian of the bath, with -eps sigma^z on the linked sites if a
    perturbation is given.

    Raises:
        SizeLimitError: If N exceeds ED_MAX_SITES
    """
    _check_size(chain.N)
    matrix = _assemble(chain, site_fields(chain, perturbation), onsite=True, keep_bond=lambda j: True)
    matrix.eliminate_zeros()
    return DenseHamiltonian(matrix=matrix, N=chain.N)


def default_sector_rule(chain: ChainSpec) -> SectorRule:
    if chain.delta >= 1.0:
        return SectorRule.MAX_SZ
    if chain.delta < -1.0:
        return SectorRule.STAGGERED
    if chain.delta == 0.0:
        return SectorRule.EVEN_PARITY
    return SectorRule.LOWEST


def _fix_phase(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    pivot = v[int(np.argmax(np.abs(v) > np.abs(v).max() * (1 - 1e-9)))]
    v = v * (np.conj(pivot) / abs(pivot))
    v = v / np.linalg.norm(v)
    if np.max(np.abs(v.imag)) < 1e-14:
        v = v.real.astype(complex)
    return v


def _lowest(matrix: sparse.csr_matrix, k: int, dense: bool) -> Tuple[np.ndarray, np.ndarray]:
    dim = matrix.shape[0]
    try:
        if dense or dim <= 64:
            w, V = scipy.linalg.eigh(matrix.toarray())
            return w[:k], V[:, :k]
        w, V = eigsh(matrix, k=min(k, dim - 2), which="SA")
    except (np.linalg.LinAlgError, ArithmeticError, ArpackError) as e:
        raise NumericalFailureError(f"ground-state search failed (dim={dim}): {e}") from e
    order = np.argsort(w)
    return w[order], V[:, order]


def quasi_degenerate_doublet(w: np.ndarray) -> bool:
    """
    True when the two lowest levels split by less than QUASI_DEGENERATE_GAP,
    or by less than QUASI_DEGENERATE_RATIO of the gap to the third level.
    """
    if w.shape[0] < 2:
        return False
    split = w[1] - w[0]
    if split < settings.QUASI_DEGENERATE_GAP:
        return True
    return bool(w.shape[0] > 2 and split < settings.QUASI_DEGENERATE_RATIO * (w[2] - w[0]))


def _pick_in_manifold(V: np.ndarray, observable: np.ndarray) -> np.ndarray:
    """Eigenvector of the (diagonal) observable projected on span(V) with largest eigenvalue."""
    projected = V.conj().T @ (observable[:, None] * V)
    _, coefficients = scipy.linalg.eigh(projected)
    return V @ coefficients[:, -1]


def ground_state(H: DenseHamiltonian, sector_rule: SectorRule = SectorRule.LOWEST) -> DenseState:
    """
    Lowest eigenvector of H, with degenerate ground spaces resolved by ``sector_rule``.

    MAX_SZ picks maximal total sigma^z in the ground manifold. EVEN_PARITY
    searches the two sectors of P = prod_j sigma^z_j and keeps the lower one,
    preferring P = +1 on ties. STAGGERED rotates a quasi-degenerate lowest doublet (see
    quasi_degenerate_doublet) to maximal staggered magnetization. LOWEST fixes the
    phase so the first largest amplitude is real positive.
    """
    z = spin_z(H.N)
    tol = settings.DEGENERACY_ATOL

    if sector_rule == SectorRule.EVEN_PARITY:
        parity = np.prod(z, axis=0)
        best = None
        for sign in (1, -1):
            idx = np.flatnonzero(parity == sign)
            block = H.matrix[idx][:, idx]
            w, V = _lowest(block, 1, H.is_dense)
            if best is None or w[0] < best[0] - tol * max(1.0, abs(best[0])):
                full = np.zeros(H.dim)
                full[idx] = V[:, 0]
                best = (w[0], full)
        return DenseState(amplitudes=_fix_phase(best[1]), N=H.N)

    k = 3 if sector_rule == SectorRule.STAGGERED else min(16, H.dim)
    w, V = _lowest(H.matrix, k, H.is_dense)

    if sector_rule == SectorRule.MAX_SZ:
        manifold = np.abs(w - w[0]) <= tol * max(1.0, abs(w[0]))
        vector = _pick_in_manifold(V[:, manifold], z.sum(axis=0).astype(float))
    elif sector_rule == SectorRule.STAGGERED and quasi_degenerate_doublet(w):
        stagger = (((-1) ** np.arange(H.N))[:, None] * z).sum(axis=0).astype(float)
        vector = _pick_in_manifold(V[:, :2], stagger)
        logger.debug(f"Staggered rule combined a doublet split by {w[1] - w[0]:.3e}")
    else:
        vector = V[:, 0]
    return DenseState(amplitudes=_fix_phase(vector), N=H.N)


def evolve_exact(state: DenseState, H: DenseHamiltonian, t: float) -> DenseState:
    """exp(-i H t) applied through the eigendecomposition (sparse Krylov above the dense cap)."""
    if t == 0:
        return DenseState(amplitudes=state.amplitudes.copy(), N=state.N)
    if H.is_dense:
        w, V = H.spectrum
        coefficients = V.T @ state.amplitudes
        amplitudes = V @ (np.exp(-1j * w * t) * coefficients)
    else:
        amplitudes = expm_multiply(-1j * t * H.matrix, state.amplitudes.astype(complex))
    return DenseState(amplitudes=amplitudes, N=state.N)


def _is_stationary(state: DenseState, H: DenseHamiltonian, atol: float = 1e-8) -> bool:
    Hv = H.matvec(state.amplitudes)
    energy = np.vdot(state.amplitudes, Hv)
    return bool(np.linalg.norm(Hv - energy * state.amplitudes) < atol)


def _uniform(times: np.ndarray) -> bool:
    if times.shape[0] < 3:
        return False
    steps = np.diff(times)
    return bool(np.allclose(steps, steps[0], rtol=1e-12, atol=1e-14) and steps[0] > 0)


def _krylov_trajectory(H: DenseHamiltonian, v: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Rows are exp(-i H t) v for every t."""
    A = -1j * H.matrix
    v = v.astype(complex)
    if _uniform(times):
        return expm_multiply(A, v, start=times[0], stop=times[-1], num=times.shape[0], endpoint=True)
    return np.array([expm_multiply(A * t, v) for t in times])


def decoherence_amplitude(G: DenseState, H_g: DenseHamiltonian, H_e: DenseHamiltonian,
                          times: np.ndarray) -> np.ndarray:
    """<G| exp(i H_g t) exp(-i H_e t) |G> up to a global phase when G is stationary."""
    times = np.asarray(times, dtype=float)
    stationary = _is_stationary(G, H_g)
    if H_e.is_dense:
        w_e, V_e = H_e.spectrum
        c_e = V_e.T @ G.amplitudes
        if stationary:
            return np.exp(-1j * np.outer(times, w_e)) @ (np.abs(c_e) ** 2)
        w_g, V_g = H_g.spectrum
        c_g = V_g.T @ G.amplitudes
        overlap = V_g.T @ V_e
        out = np.empty(times.shape[0], dtype=complex)
        for n, t in enumerate(times):
            left = c_g * np.exp(-1j * w_g * t)
            right = c_e * np.exp(-1j * w_e * t)
            out[n] = np.vdot(left, overlap @ right)
        return out
    evolved_e = _krylov_trajectory(H_e, G.amplitudes, times)
    if stationary:
        return evolved_e @ G.amplitudes.conj()
    evolved_g = _krylov_trajectory(H_g, G.amplitudes, times)
    return np.einsum("ti,ti->t", evolved_g.conj(), evolved_e)


def echo_ed(chain: ChainSpec, coupling: CouplingSpec, times: np.ndarray,
            sector_rule: Optional[SectorRule] = None) -> EchoSeries:
    """
    L(t) = |<G| exp(i H_g t) exp(-i H_e t) |G>|^2 by exact diagonalization, any Delta.

    For a stationary G this is |<G|exp(-i H_e t)|G>|^2.
    """
    times = np.asarray(times, dtype=float)
    rule = sector_rule or default_sector_rule(chain)
    H_g = dense_hamiltonian(chain)
    H_e = dense_hamiltonian(chain, coupling)
    G = ground_state(H_g, rule)
    values = np.abs(decoherence_amplitude(G, H_g, H_e, times)) ** 2
    logger.debug(f"ED echo N={chain.N} delta={chain.delta} rule={rule.value} points={times.shape[0]}")
    return EchoSeries(times=times, values=values, method=Method.ED, chain=chain, coupling=coupling,
                      meta={"sector_rule": rule.value})


class TrotterPropagator:
    """
    Second-order splitting exp(-iF dt/2) exp(-iG dt) exp(-iF dt/2) with F the
    on-site terms plus even bonds and G the odd bonds.
    """

    def __init__(self, chain: ChainSpec, coupling: Optional[CouplingSpec] = None):
        _check_size(chain.N)
        self.chain = chain
        eps = site_fields(chain, coupling)
        self.F = _assemble(chain, eps, onsite=True, keep_bond=lambda j: j % 2 == 0)
        self.G = _assemble(chain, eps, onsite=False, keep_bond=lambda j: j % 2 == 1)
        self._dense = chain.N <= settings.ED_DENSE_MAX_SITES
        self._cache: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}

    def _factors(self, dt: float):
        if dt not in self._cache:
            self._cache[dt] = (scipy.linalg.expm(-0.5j * dt * self.F.toarray()),
                               scipy.linalg.expm(-1j * dt * self.G.toarray()))
        return self._cache[dt]

    def apply(self, v: np.ndarray, t: float, steps: int) -> np.ndarray:
        if steps < 1:
            raise ValueError("steps must be >= 1")
        dt = t / steps
        v = v.astype(complex)
        if self._dense:
            half, full = self._factors(dt)
            for _ in range(steps):
                v = half @ (full @ (half @ v))
            return v
        for _ in range(steps):
            v = expm_multiply(-0.5j * dt * self.F, v)
            v = expm_multiply(-1j * dt * self.G, v)
            v = expm_multiply(-0.5j * dt * self.F, v)
        return v


def evolve_trotter(state: DenseState, chain: ChainSpec, coupling: Optional[CouplingSpec],
                   t: float, steps: int) -> DenseState:
    propagator = TrotterPropagator(chain, coupling)
    return DenseState(amplitudes=propagator.apply(state.amplitudes, t, steps), N=state.N)


def echo_trotter(chain: ChainSpec, coupling: CouplingSpec, times: np.ndarray, dt: float = 0.01,
                 sector_rule: Optional[SectorRule] = None) -> EchoSeries:
    """Echo with both branches evolved by the second-order splitting, time step at most ``dt``."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be non-decreasing")
    rule = sector_rule or default_sector_rule(chain)
    H_g = dense_hamiltonian(chain)
    G = ground_state(H_g, rule)
    stationary = _is_stationary(G, H_g)
    branch_e = TrotterPropagator(chain, coupling)
    branch_g = None if stationary else TrotterPropagator(chain, None)

    psi_e = G.amplitudes.astype(complex)
    psi_g = G.amplitudes.astype(complex)
    values = np.empty(times.shape[0])
    previous = 0.0
    for n, t in enumerate(times):
        interval = t - previous
        if interval > 0:
            steps = max(1, int(np.ceil(interval / dt - 1e-9)))
            psi_e = branch_e.apply(psi_e, interval, steps)
            if branch_g is not None:
                psi_g = branch_g.apply(psi_g, interval, steps)
        values[n] = abs(np.vdot(psi_g, psi_e)) ** 2
        previous = t
    return EchoSeries(times=times, values=values, method=Method.TROTTER, chain=chain, coupling=coupling,
                      meta={"sector_rule": rule.value, "dt": dt})


def reduced_density_matrix(state: DenseState, i: int, j: int) -> np.ndarray:
    """Two-site density matrix of sites i and j (1-based), site i as the first factor."""
    if i == j:
        raise InvalidSitesError(f"sites must differ, got i=j={i}")
    if not (1 <= i <= state.N and 1 <= j <= state.N):
        raise InvalidSitesError(f"sites ({i}, {j}) out of range [1, {state.N}]")
    psi = state.amplitudes.reshape((2,) * state.N)
    psi = np.moveaxis(psi, (i - 1, j - 1), (0, 1)).reshape(4, -1)
    return psi @ psi.conj().T


def magnetization(state: DenseState, sites: Sequence[int]) -> np.ndarray:
    """<sigma^z_j> for the given 1-based sites."""
    z = spin_z(state.N)
    probabilities = np.abs(state.amplitudes) ** 2
    return np.array([float(probabilities @ z[s - 1]) for s in sites])


@dataclass(frozen=True)
class SpectralPlateau:
    window_average: float
    ground_overlap: float
    window: Tuple[float, float]

    def as_estimate(self) -> PlateauEstimate:
        return PlateauEstimate(value=float(np.clip(self.window_average, 0.0, 1.0)), window=self.window,
                               source="spectral")


def plateau_spectral(chain: ChainSpec, coupling: CouplingSpec, T: float, width: float,
                     sector_rule: Optional[SectorRule] = None) -> SpectralPlateau:
    """
    Saturation value from the expansion of |G> on the eigenbasis of H_e.

    Averaging the decoherence factor over [T, T + width], energies measured
    from the ground energy of H_e, gives
    |sum_k |c_k|^2 exp(-i E_k (T + width/2)) sinc(E_k width / 2)|^2;
    keeping only k = 0 gives |c_0|^4.
    """
    if chain.N > settings.ED_DENSE_MAX_SITES:
        raise SizeLimitError(f"spectral plateau needs N <= {settings.ED_DENSE_MAX_SITES}")
    H_g = dense_hamiltonian(chain)
    H_e = dense_hamiltonian(chain, coupling)
    G = ground_state(H_g, sector_rule or default_sector_rule(chain))
    w, V = H_e.spectrum
    weights = np.abs(V.T @ G.amplitudes) ** 2
    energies = w - w[0]
    terms = weights * np.exp(-1j * energies * (T + 0.5 * width)) * np.sinc(energies * width / (2.0 * np.pi))
    return SpectralPlateau(window_average=float(abs(terms.sum()) ** 2),
                           ground_overlap=float(weights[0] ** 2),
                           window=(T, T + width))
