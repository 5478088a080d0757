"""
Loschmidt echo of the qubit: determinant formula and central-spin closed form.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import scipy.linalg

from app.config import settings
from app.exceptions import NumericalFailureError, UnsupportedModelError
from app.models import Boundary, ChainSpec, CouplingSpec, Geometry, Method
from app.services.freefermion import correlation_matrix, diagonalize, nambu
from app.services.model import build_quadratic_form

logger = logging.getLogger(__name__)

# L = |det(I - r + r exp(-iCt))|**p; the 2N-dimensional Nambu determinant
# already equals |<G|exp(-i H_e t)|G>|^2, calibrated against ED in the tests.
DETERMINANT_EXPONENT = 1


@dataclass(frozen=True)
class EchoSeries:
    times: np.ndarray
    values: np.ndarray
    method: Method
    chain: ChainSpec
    coupling: Optional[CouplingSpec] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.times.shape[0]

    def bounds_ok(self, atol: float = 1e-12) -> bool:
        return bool(np.all(self.values >= -atol) and np.all(self.values <= 1.0 + atol))

    def to_csv(self, path: Union[str, Path], digits: Optional[int] = None) -> Path:
        digits = digits or settings.CSV_SIGNIFICANT_DIGITS
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, np.column_stack([self.times, self.values]), fmt=f"%.{digits}g",
                   delimiter=",", header="t,L", comments="")
        return path


class DeterminantEcho:
    """
    Echo engine for one (chain, coupling) pair.

    With r = W W^T and W = [h^T; g^T] (2N x N) of the unperturbed basis, the
    determinant det(I - r + r exp(-i C_e t)) equals det(Y^T diag(exp(-i D t)) Y)
    with Y = U_e W, an N x N determinant per time point. Instances are
    read-only after construction and safe to evaluate from several threads.
    """

    def __init__(self, chain: ChainSpec, coupling: CouplingSpec,
                 parity_exact: bool = False, exponent: int = DETERMINANT_EXPONENT):
        self.chain = chain
        self.coupling = coupling
        self.exponent = exponent
        self.parity_exact = parity_exact

        form_g = build_quadratic_form(chain, None, parity_exact=parity_exact)
        form_e = build_quadratic_form(chain, coupling, parity_exact=parity_exact)
        self.basis_g = diagonalize(form_g)
        self.nambu_e = nambu(form_e)
        self.correlations = correlation_matrix(self.basis_g)

        W = np.vstack([self.basis_g.h.T, self.basis_g.g.T])
        self._Y = self.nambu_e.U @ W
        logger.debug(f"Determinant engine ready: N={chain.N}, epsilon={coupling.epsilon}, "
                     f"E_min={self.basis_g.energies[0]:.3e}")

    def log_abs_det(self, t: float) -> float:
        z = np.exp(-1j * self.nambu_e.D * t)
        M = self._Y.T @ (z[:, None] * self._Y)
        try:
            lu, _ = scipy.linalg.lu_factor(M, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise NumericalFailureError(f"LU factorization failed at t={t} (N={self.chain.N}): {e}") from e
        pivots = np.abs(np.diag(lu))
        if np.any(pivots == 0.0):
            return -np.inf
        return float(np.sum(np.log(pivots)))

    def loschmidt_matrix(self, t: float) -> np.ndarray:
        """The full 2N x 2N matrix I - r + r exp(-i C_e t)."""
        r = self.correlations.r
        return np.eye(r.shape[0]) - r + r @ self.nambu_e.propagator(t)

    def evaluate(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        logs = np.array([self.log_abs_det(t) for t in times])
        return np.exp(self.exponent * logs)

    def series(self, times: np.ndarray) -> EchoSeries:
        times = np.asarray(times, dtype=float)
        return EchoSeries(times=times, values=self.evaluate(times), method=Method.DETERMINANT,
                          chain=self.chain, coupling=self.coupling,
                          meta={"determinant_exponent": self.exponent, "parity_exact": self.parity_exact})


def echo_determinant(chain: ChainSpec, coupling: CouplingSpec, times: np.ndarray,
                     parity_exact: bool = False) -> EchoSeries:
    """
    L(t) = |det(I - r + r exp(-i C_e t))|**p for Delta = 0 baths.

    Raises:
        UnsupportedModelError: If chain.delta != 0
        NumericalFailureError: If a factorization fails
    """
    times = np.asarray(times, dtype=float)
    if not np.all(np.isfinite(times)) or np.any(times < 0):
        raise ValueError("times must be finite and non-negative")
    return DeterminantEcho(chain, coupling, parity_exact=parity_exact).series(times)


@dataclass(frozen=True)
class CentralSpinModes:
    k: np.ndarray
    theta0: np.ndarray
    theta_eps: np.ndarray
    alpha: np.ndarray
    energies: np.ndarray


def _require_central_spin(chain: ChainSpec) -> None:
    if chain.boundary != Boundary.PERIODIC:
        raise UnsupportedModelError("central-spin closed form needs a periodic chain")
    if not chain.is_free_fermion:
        raise UnsupportedModelError(f"central-spin closed form needs delta=0, got {chain.delta}")
    if chain.N % 2:
        raise UnsupportedModelError(f"central-spin closed form pairs (k, -k) and needs even N, got {chain.N}")


def bogoliubov_angle(chain: ChainSpec, x: float, q: np.ndarray) -> np.ndarray:
    return np.arctan2(-chain.gamma * np.sin(q), np.cos(q) - x)


def dispersion(chain: ChainSpec, epsilon: float, k: np.ndarray) -> np.ndarray:
    """Single quasi-particle energies at momenta q = 2 pi k / N with field lambda + epsilon/J."""
    q = 2.0 * np.pi * np.asarray(k, dtype=float) / chain.N
    x = chain.lambda_ + epsilon / chain.J
    return 2.0 * chain.J * np.sqrt((np.cos(q) - x) ** 2 + (chain.gamma * np.sin(q)) ** 2)


def central_spin_modes(chain: ChainSpec, epsilon: float) -> CentralSpinModes:
    _require_central_spin(chain)
    k = np.arange(1, chain.N // 2 + 1)
    q = 2.0 * np.pi * k / chain.N
    theta0 = bogoliubov_angle(chain, chain.lambda_, q)
    theta_eps = bogoliubov_angle(chain, chain.lambda_ + epsilon / chain.J, q)
    return CentralSpinModes(k=k, theta0=theta0, theta_eps=theta_eps,
                            alpha=0.5 * (theta0 - theta_eps), energies=dispersion(chain, epsilon, k))


def echo_central_spin(chain: ChainSpec, epsilon: float, times: np.ndarray) -> EchoSeries:
    """L(t) = prod_k [1 - sin^2(2 alpha_k) sin^2(E_k t)] for the qubit coupled to every spin."""
    times = np.asarray(times, dtype=float)
    modes = central_spin_modes(chain, epsilon)
    weight = np.sin(2.0 * modes.alpha) ** 2
    factors = 1.0 - weight[None, :] * np.sin(np.outer(times, modes.energies)) ** 2
    coupling = CouplingSpec(epsilon=epsilon, m=chain.N, geometry=Geometry.STAR_A)
    return EchoSeries(times=times, values=np.prod(factors, axis=1), method=Method.CENTRAL_SPIN,
                      chain=chain, coupling=coupling)


@dataclass(frozen=True)
class SplitChainComparison:
    times: np.ndarray
    two_open: np.ndarray
    periodic_double: np.ndarray

    @property
    def max_difference(self) -> float:
        return float(np.max(np.abs(self.two_open - self.periodic_double)))


def split_chain_echo(chain: ChainSpec, epsilon: float, times: np.ndarray) -> SplitChainComparison:
    """
    Qubit linked to the middle spins of two separate open N-chains versus two
    opposite spins of one periodic 2N-chain.
    """
    times = np.asarray(times, dtype=float)
    middle = -(-chain.N // 2)
    open_chain = chain.with_updates(boundary=Boundary.OPEN)
    single = DeterminantEcho(open_chain, CouplingSpec(epsilon=epsilon, m=1, geometry=Geometry.EXPLICIT,
                                                      sites=(middle,))).evaluate(times)

    ring = chain.with_updates(N=2 * chain.N, boundary=Boundary.PERIODIC)
    coupling = CouplingSpec(epsilon=epsilon, m=2, geometry=Geometry.EXPLICIT, sites=(middle, middle + chain.N))
    double = DeterminantEcho(ring, coupling).evaluate(times)
    return SplitChainComparison(times=times, two_open=single ** 2, periodic_double=double)
