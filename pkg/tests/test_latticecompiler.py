import json
import re

import numpy as np
import pytest

from app.exceptions import InvalidScheduleError, SizeLimitError, UnsupportedLayoutError
from app.models import Boundary, ChainSpec, CouplingSpec, Gate, GateKind, Geometry, Level
from app.services import latticecompiler as lc
from app.services.latticecompiler import (IDENTITY, PULSES, SX, SY, SZ, VX, VY, GateSequence, contract,
                                          contract_steps, export_json, export_text, gate_counts, laser,
                                          pair_rotation, parse_text, phase_aligned_distance, rotation,
                                          step_generator, verify)
from tests.conftest import ising


def _sequence(gates, n_sites_chain: int = 2) -> GateSequence:
    return GateSequence(gates=gates, n_steps=1, tau=1.0, chain=ChainSpec(N=n_sites_chain),
                        coupling=CouplingSpec(), t=1.0)


def _xy_chain(N: int = 3) -> ChainSpec:
    return ChainSpec(N=N, gamma=0.5, delta=0.3, lambda_=0.4)


def _coupling(epsilon: float = 0.3, omega_e: float = 0.7) -> CouplingSpec:
    return CouplingSpec(epsilon=epsilon, m=1, omega_e=omega_e)


class TestPrimitives:
    def test_quarter_turn_rotations(self):
        assert np.allclose(rotation(np.pi / 2), 1j * SZ, atol=1e-14)
        assert phase_aligned_distance(rotation(-np.pi / 2), 1j * SZ) < 1e-12

    def test_half_area_laser_is_x_flip(self):
        assert np.allclose(laser(np.pi / 2, 0.0), -1j * SX, atol=1e-14)

    @pytest.mark.parametrize("theta", [0.0, 0.37, -1.2, 2.5])
    def test_two_lasers_make_z_rotation(self, theta):
        U = laser(np.pi / 2, np.pi + theta) @ laser(np.pi / 2, 0.0)
        assert np.allclose(U, rotation(theta), atol=1e-12)

    def test_basis_change_pulses(self):
        expected = {GateKind.VX: VX, GateKind.VX_DAG: VX.conj().T,
                    GateKind.VY: VY, GateKind.VY_DAG: VY.conj().T}
        for kind, V in expected.items():
            assert np.allclose(laser(*PULSES[kind]), V, atol=1e-14)
        assert phase_aligned_distance(laser(*PULSES[GateKind.PAULI_X]), SX) < 1e-12

    def test_basis_changes_rotate_z(self):
        assert np.allclose(VY @ SZ @ VY.conj().T, SX, atol=1e-14)
        assert np.allclose(VX.conj().T @ SZ @ VX, SY, atol=1e-14)

    @pytest.mark.parametrize("axis", ["x", "y", "z"])
    def test_pair_rotation_is_unitary(self, axis):
        U = pair_rotation(axis, 0.81)
        assert np.allclose(U @ U.conj().T, np.eye(4), atol=1e-14)


class TestContraction:
    @pytest.mark.parametrize("before,after,axis", [
        (GateKind.VY_DAG, GateKind.VY, "x"),
        (GateKind.VX, GateKind.VX_DAG, "y"),
    ])
    def test_conjugated_zz_bond(self, before, after, axis):
        theta = 0.43
        gates = [Gate(kind=before, sites=(0, 1)), Gate(kind=GateKind.UZZ, sites=(0, 1), angle=theta),
                 Gate(kind=after, sites=(0, 1))]
        U = contract(_sequence(gates), n_sites=2)
        assert np.allclose(U, pair_rotation(axis, theta), atol=1e-12)

    def test_global_zz_is_diagonal(self):
        U = contract(_sequence([Gate(kind=GateKind.GLOBAL_UZZ, sites=(0, 1), angle=0.3)]), n_sites=2)
        assert np.allclose(U, np.diag(np.diag(U)), atol=1e-14)
        assert np.allclose(U, pair_rotation("z", 0.3), atol=1e-14)

    def test_empty_sequence_is_identity(self):
        assert np.allclose(contract(_sequence([]), n_sites=3), np.eye(8))

    def test_pauli_conjugation_cancels_single_bond(self):
        block = [Gate(kind=GateKind.UZZ, sites=(0, 1), angle=0.61), Gate(kind=GateKind.PAULI_X, sites=(0,))]
        assert np.allclose(contract(_sequence(block * 2), n_sites=2), np.eye(4), atol=1e-12)

    def test_pauli_conjugation_removes_qubit_bond(self):
        theta = 0.29
        block = [Gate(kind=GateKind.GLOBAL_UZZ, sites=(0, 1, 2), angle=theta),
                 Gate(kind=GateKind.PAULI_X, sites=(0,))]
        U = contract(_sequence(block * 2), n_sites=3)
        assert np.allclose(U, np.kron(IDENTITY, pair_rotation("z", 2 * theta)), atol=1e-12)

    def test_flips_and_displacements_make_zz(self):
        theta = -0.52
        sites = (0, 1, 2)
        flip = Gate(kind=GateKind.LASER, sites=sites, angle=np.pi / 2, phase=0.0)
        shift = Gate(kind=GateKind.DISPLACEMENT, sites=sites, angle=2 * theta)
        pulses = contract(_sequence([flip, shift, flip, shift]), n_sites=3)
        target = contract(_sequence([Gate(kind=GateKind.GLOBAL_UZZ, sites=sites, angle=theta)]), n_sites=3)
        assert phase_aligned_distance(pulses, target) < 1e-12

    def test_size_limit(self, monkeypatch):
        monkeypatch.setattr(lc.settings, "COMPILER_MAX_SITES", 2)
        seq = lc.compile(ising(3, 0.5), _coupling(), 1.0, 1)
        with pytest.raises(SizeLimitError):
            contract(seq)


class TestCompile:
    def test_ising_step_has_no_yy_block(self):
        seq = lc.compile(ising(4, 0.5), _coupling(0.25, 1.0), t=2.0, n_steps=5)
        assert GateKind.GLOBAL_UYY.value not in gate_counts(seq.gates)
        assert seq.gates_per_step == 11
        assert seq.tau * seq.n_steps == pytest.approx(2.0)
        assert len(seq.gates) == 55
        assert [g.step for g in seq.gates[::11]] == [0, 1, 2, 3, 4]

    def test_zero_angles_are_dropped(self):
        chain = ChainSpec(N=3, gamma=0.5, delta=0.0, lambda_=0.0)
        seq = lc.compile(chain, _coupling(0.2, 0.0), t=1.0, n_steps=1)
        counts = gate_counts(seq.gates)
        assert GateKind.GLOBAL_UZ.value not in counts
        assert GateKind.UZ.value not in counts
        assert seq.gates_per_step == 13

    def test_zero_steps_rejected(self):
        with pytest.raises(InvalidScheduleError):
            lc.compile(ising(3, 0.5), _coupling(), 1.0, 0)

    @pytest.mark.parametrize("chain,coupling", [
        (ising(4, 0.5), CouplingSpec(epsilon=0.2, m=2)),
        (ising(4, 0.5), CouplingSpec(epsilon=0.2, m=1, geometry=Geometry.EXPLICIT, sites=(2,))),
        (ising(4, 0.5, Boundary.PERIODIC), CouplingSpec(epsilon=0.2, m=1)),
    ])
    def test_unsupported_layouts(self, chain, coupling):
        with pytest.raises(UnsupportedLayoutError):
            lc.compile(chain, coupling, 1.0, 2)

    def test_levels_agree(self):
        chain, coupling = _xy_chain(3), _coupling()
        step = contract(lc.compile(chain, coupling, 1.2, 2, Level.STEP))
        gate = contract(lc.compile(chain, coupling, 1.2, 2, Level.GATE))
        pulse = contract(lc.compile(chain, coupling, 1.2, 2, Level.PULSE))
        assert np.allclose(gate, step, atol=1e-10)
        assert phase_aligned_distance(pulse, step) < 1e-10
        assert np.allclose(step @ step.conj().T, np.eye(16), atol=1e-10)

    def test_pulse_level_uses_only_lasers_and_displacements(self):
        seq = lc.compile(_xy_chain(3), _coupling(), 1.0, 1, Level.PULSE)
        assert set(gate_counts(seq.gates)) == {GateKind.LASER.value, GateKind.DISPLACEMENT.value}

    def test_step_power_matches_full_contraction(self):
        seq = lc.compile(_xy_chain(3), _coupling(), 0.9, 3)
        assert np.allclose(contract_steps(seq), contract(seq), atol=1e-10)


class TestVerify:
    def test_generator_is_hermitian(self):
        H = step_generator(_xy_chain(3), _coupling())
        assert np.allclose(H, H.conj().T)

    def test_commuting_step_is_exact(self):
        chain = ChainSpec(N=2, gamma=1.0, delta=0.0, lambda_=0.0)
        report = verify(chain, CouplingSpec(epsilon=0.0, m=1), t=1.3, n_list=[1])
        assert report.distances[0] < 1e-12
        assert report.order is None

    def test_first_order_convergence(self):
        report = verify(ising(4, 0.5), _coupling(0.25, 1.0), t=1.0, n_list=[10, 20, 40, 80])
        assert all(a > b for a, b in zip(report.distances, report.distances[1:]))
        assert 0.8 <= report.order <= 1.2

    def test_size_limit(self, monkeypatch):
        monkeypatch.setattr(lc.settings, "COMPILER_MAX_SITES", 3)
        with pytest.raises(SizeLimitError):
            verify(ising(4, 0.5), _coupling(), t=1.0)


class TestExport:
    LINE = re.compile(r"^STEP \d+ \| GATE \w+ \| SITES [\d,]+ \| ANGLE \S+( \| PHASE \S+)?$")

    def test_text_format(self):
        seq = lc.compile(_xy_chain(3), _coupling(), 1.0, 2, Level.PULSE)
        lines = export_text(seq).splitlines()
        assert lines[0].startswith("# schedule schema_version=1 level=pulse n_steps=2")
        assert all(self.LINE.match(line) for line in lines[1:])
        assert len(lines) == len(seq.gates) + 1
        assert [g.model_dump() for g in parse_text(export_text(seq))] == [g.model_dump() for g in seq.gates]

    def test_json_document(self):
        seq = lc.compile(ising(3, 0.5), _coupling(), 1.0, 2)
        doc = json.loads(export_json(seq))
        assert doc["schema_version"] == "1"
        assert doc["level"] == "step"
        assert doc["n_steps"] == 2
        assert len(doc["gates"]) == len(seq.gates)
        assert doc["gates"][0]["kind"] == GateKind.GLOBAL_UZ.value
