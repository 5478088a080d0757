"""
Bogoliubov diagonalization of quadratic fermionic forms.

Normal modes eta_k = sum_i g_ki c_i + h_ki c_i^dag with energies E_k >= 0 so that
H = sum_k E_k (eta_k^dag eta_k - 1/2). In Nambu notation Psi = (c, c^dag),
H = 1/2 Psi^dag C Psi with C = [[A, B], [-B, -A]] = U^T diag(E, -E) U and
U = [[g, h], [h, g]].
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from app.config import settings
from app.exceptions import InvalidFormError, NumericalFailureError
from app.services.model import QuadraticForm, validate_form

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BogoliubovBasis:
    """Rows of ``g`` and ``h`` are modes, columns are lattice sites."""
    g: np.ndarray
    h: np.ndarray
    energies: np.ndarray

    @property
    def N(self) -> int:
        return self.energies.shape[0]

    @property
    def phi(self) -> np.ndarray:
        return self.g + self.h

    @property
    def psi(self) -> np.ndarray:
        return self.g - self.h

    @property
    def ground_energy(self) -> float:
        return -0.5 * float(np.sum(self.energies))

    def constraint_errors(self) -> tuple:
        """Max deviations of g g^T + h h^T from I and of g h^T + h g^T from 0."""
        eye = np.eye(self.N)
        normal = np.max(np.abs(self.g @ self.g.T + self.h @ self.h.T - eye))
        anti = np.max(np.abs(self.g @ self.h.T + self.h @ self.g.T))
        return float(normal), float(anti)


@dataclass(frozen=True)
class CorrelationMatrix:
    """r_ab = <Psi_a^dag Psi_b> of the Gaussian ground state."""
    r: np.ndarray

    @property
    def N(self) -> int:
        return self.r.shape[0] // 2

    @property
    def density(self) -> np.ndarray:
        """<c_j^dag c_j> for every site."""
        return np.real(np.diag(self.r)[: self.N])


@dataclass(frozen=True)
class NambuMatrix:
    C: np.ndarray
    U: np.ndarray
    D: np.ndarray

    def propagator(self, t: float) -> np.ndarray:
        """exp(-i C t) = U^T diag(exp(-i D t)) U."""
        return self.U.T @ (np.exp(-1j * self.D * t)[:, None] * self.U)


def diagonalize(form: QuadraticForm, zero_mode_rtol: Optional[float] = None) -> BogoliubovBasis:
    """
    Solve phi_k (A - B) = E_k psi_k and psi_k (A + B) = E_k phi_k.

    The pairs (phi_k, psi_k) are the left and right singular vectors of A - B,
    which keeps zero modes well defined. Energies come back in ascending order;
    values below ``zero_mode_rtol * max(E)`` are set to zero. Each pair is
    signed so that the first nonzero component of psi_k is positive.

    Raises:
        InvalidFormError: If A is not symmetric or B not antisymmetric
        NumericalFailureError: If the SVD does not converge
    """
    problems = validate_form(form, atol=1e-12 * max(1.0, float(np.max(np.abs(form.A), initial=0.0))))
    if problems:
        raise InvalidFormError("; ".join(problems))

    rtol = settings.ZERO_MODE_RTOL if zero_mode_rtol is None else zero_mode_rtol
    M = form.A - form.B
    try:
        left, singular, right_t = scipy.linalg.svd(M)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalFailureError(f"SVD of A - B failed for N={form.N}: {e}") from e

    order = np.argsort(singular, kind="stable")
    energies = singular[order].copy()
    phi = left[:, order].T.copy()
    psi = right_t[order, :].copy()

    scale = energies.max(initial=0.0)
    zero = energies < rtol * scale if scale > 0 else np.ones_like(energies, dtype=bool)
    energies[zero] = 0.0
    if zero.any():
        logger.debug(f"{int(zero.sum())} zero mode(s) in N={form.N} form")

    tiny = 1e-12
    for k in range(psi.shape[0]):
        nonzero = np.flatnonzero(np.abs(psi[k]) > tiny)
        if nonzero.size and psi[k, nonzero[0]] < 0:
            psi[k] *= -1.0
            phi[k] *= -1.0

    g = 0.5 * (phi + psi)
    h = 0.5 * (phi - psi)
    return BogoliubovBasis(g=g, h=h, energies=energies)


def correlation_matrix(basis_g: BogoliubovBasis) -> CorrelationMatrix:
    """Ground-state (eta vacuum) correlations [[h^T h, h^T g], [g^T h, g^T g]]."""
    g, h = basis_g.g, basis_g.h
    r = np.block([[h.T @ h, h.T @ g], [g.T @ h, g.T @ g]])
    return CorrelationMatrix(r=r)


def nambu(form: QuadraticForm, basis: Optional[BogoliubovBasis] = None) -> NambuMatrix:
    """Nambu matrix C with its diagonalizing U and spectrum D = (E, -E)."""
    if basis is None:
        basis = diagonalize(form)
    C = np.block([[form.A, form.B], [-form.B, -form.A]])
    U = np.block([[basis.g, basis.h], [basis.h, basis.g]])
    D = np.concatenate([basis.energies, -basis.energies])
    return NambuMatrix(C=C, U=U, D=D)
