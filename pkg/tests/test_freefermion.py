import numpy as np
import pytest

from app.exceptions import InvalidFormError
from app.models import Boundary
from app.services.ed_oracle import dense_hamiltonian, ground_state, magnetization
from app.services.freefermion import BogoliubovBasis, correlation_matrix, diagonalize, nambu
from app.services.model import QuadraticForm, build_quadratic_form
from tests.conftest import ising, single_link

CHAINS = [
    ising(2, 0.0),
    ising(8, 0.5),
    ising(8, 1.0),
    ising(9, 1.7, gamma=0.3),
    ising(10, 0.5, boundary=Boundary.PERIODIC),
    ising(12, 0.0, boundary=Boundary.PERIODIC, gamma=0.0),
]


class TestDiagonalize:
    @pytest.mark.parametrize("chain", CHAINS)
    def test_canonical_constraints(self, chain):
        basis = diagonalize(build_quadratic_form(chain))
        normal, anti = basis.constraint_errors()
        assert normal < 1e-10
        assert anti < 1e-10

    @pytest.mark.parametrize("chain", CHAINS)
    def test_energies_sorted_non_negative(self, chain):
        energies = diagonalize(build_quadratic_form(chain)).energies
        assert np.all(energies >= 0)
        assert np.all(np.diff(energies) >= 0)

    def test_two_site_spectrum(self):
        energies = diagonalize(build_quadratic_form(ising(2, 0.0))).energies
        assert np.allclose(energies, [0.0, 2.0], atol=1e-12)

    def test_mode_equations(self):
        form = build_quadratic_form(ising(7, 0.6, gamma=0.5), single_link(0.3))
        basis = diagonalize(form)
        E = basis.energies[:, None]
        assert np.allclose(basis.phi @ (form.A - form.B), E * basis.psi, atol=1e-10)
        assert np.allclose(basis.psi @ (form.A + form.B), E * basis.phi, atol=1e-10)

    def test_rejects_non_symmetric_form(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(InvalidFormError):
            diagonalize(QuadraticForm(A=A, B=np.zeros((2, 2))))

    def test_polarized_limit(self):
        basis = diagonalize(build_quadratic_form(ising(4, -1e3)))
        r = correlation_matrix(basis).r
        expected = np.diag([0.0] * 4 + [1.0] * 4)
        assert np.max(np.abs(basis.h)) < 1e-2
        assert np.allclose(r, expected, atol=1e-3)

    def test_mode_sign_flip_keeps_correlations(self):
        basis = diagonalize(build_quadratic_form(ising(6, 0.8)))
        flip = np.ones(6)
        flip[[1, 4]] = -1.0
        flipped = BogoliubovBasis(g=flip[:, None] * basis.g, h=flip[:, None] * basis.h, energies=basis.energies)
        assert np.allclose(correlation_matrix(basis).r, correlation_matrix(flipped).r, atol=1e-14)


class TestCorrelations:
    @pytest.mark.parametrize("chain", CHAINS[1:])
    def test_projector_with_trace_N(self, chain):
        r = correlation_matrix(diagonalize(build_quadratic_form(chain))).r
        assert np.allclose(r @ r, r, atol=1e-10)
        assert np.allclose(r, r.conj().T, atol=1e-12)
        assert np.trace(r).real == pytest.approx(chain.N, abs=1e-10)

    def test_density_matches_exact_ground_state(self):
        chain = ising(8, 1.5)
        density = correlation_matrix(diagonalize(build_quadratic_form(chain))).density
        state = ground_state(dense_hamiltonian(chain))
        occupation = 0.5 * (1.0 + magnetization(state, range(1, 9)))
        assert np.allclose(density, occupation, atol=1e-8)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 1.5])
    def test_ground_energy_matches_exact_diagonalization(self, lam):
        chain = ising(8, lam)
        basis = diagonalize(build_quadratic_form(chain))
        w, _ = dense_hamiltonian(chain).spectrum
        assert basis.ground_energy == pytest.approx(w[0], abs=1e-8)


class TestNambu:
    def test_reconstruction(self):
        form = build_quadratic_form(ising(6, 0.7, gamma=0.4, boundary=Boundary.PERIODIC))
        nm = nambu(form)
        assert np.allclose(nm.U @ nm.U.T, np.eye(12), atol=1e-10)
        assert np.allclose(nm.U.T @ np.diag(nm.D) @ nm.U, nm.C, atol=1e-10)

    def test_spectrum_comes_in_pairs(self):
        nm = nambu(build_quadratic_form(ising(5, 0.3)))
        eigenvalues = np.sort(np.linalg.eigvalsh(nm.C))
        assert np.allclose(eigenvalues, np.sort(nm.D), atol=1e-10)
        assert np.allclose(eigenvalues, -eigenvalues[::-1], atol=1e-10)

    def test_propagator_unitary(self):
        nm = nambu(build_quadratic_form(ising(6, 1.2), single_link(0.25)))
        assert np.allclose(nm.propagator(0.0), np.eye(12))
        P = nm.propagator(10.0)
        assert np.allclose(P @ P.conj().T, np.eye(12), atol=1e-10)
