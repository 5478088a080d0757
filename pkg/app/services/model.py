"""
Link-site placement and the quadratic fermionic form of the bath.

After the Jordan-Wigner mapping (n_j = |up><up|_j) the bath Hamiltonian reads

    H = sum_jk c_j^dag A_jk c_k + 1/2 sum_jk (c_j^dag B_jk c_k^dag + h.c.) + const

with A_jk = -J (delta_{k,j+1} + delta_{j,k+1}) - 2 (J lambda + eps_j) delta_jk and
B_jk = -gamma J (delta_{k,j+1} - delta_{j,k+1}).
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from app.config import settings
from app.exceptions import InvalidCouplingError, UnsupportedModelError
from app.models import Boundary, ChainSpec, CouplingSpec, Geometry

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadraticForm:
    """Real symmetric A and real antisymmetric B, both N x N."""
    A: np.ndarray
    B: np.ndarray

    @property
    def N(self) -> int:
        return self.A.shape[0]


def link_sites(N: int, m: int, geometry: Geometry, boundary: Boundary = Boundary.OPEN) -> Tuple[int, ...]:
    """
    Sites (1-based, sorted) linked to the qubit.

    Args:
        N: Number of bath spins
        m: Number of links
        geometry: STAR_A for equal spacing, CONTIGUOUS_B for a packed block
        boundary: Block placement for CONTIGUOUS_B

    Returns:
        Tuple of m distinct site indices in increasing order

    Raises:
        InvalidCouplingError: If m is not in [1, N] or geometry is EXPLICIT
    """
    if m < 1 or m > N:
        raise InvalidCouplingError(f"link number m={m} must lie in [1, N={N}]")

    if geometry == Geometry.STAR_A:
        taken = set()
        sites = []
        for k in range(m):
            # round-half-up of k*N/m in integer arithmetic
            site = 1 + (2 * k * N + m) // (2 * m)
            while site in taken:
                site += 1
            if site > N:
                raise InvalidCouplingError(f"cannot place {m} equally spaced links on {N} sites")
            taken.add(site)
            sites.append(site)
        return tuple(sorted(sites))

    if geometry == Geometry.CONTIGUOUS_B:
        if boundary == Boundary.OPEN:
            return tuple(range(1, m + 1))
        center = -(-N // 2)
        start = center - (m - 1) // 2
        return tuple(sorted(((start - 1 + k) % N) + 1 for k in range(m)))

    raise InvalidCouplingError("explicit geometry carries its own sites")


def resolve_sites(chain: ChainSpec, coupling: CouplingSpec) -> Tuple[int, ...]:
    """Linked sites of ``coupling`` on ``chain``, validated against N."""
    if coupling.m > chain.N:
        raise InvalidCouplingError(f"link number m={coupling.m} exceeds N={chain.N}")
    if coupling.geometry == Geometry.EXPLICIT:
        sites = tuple(coupling.sites or ())
        if any(s < 1 or s > chain.N for s in sites):
            raise InvalidCouplingError(f"sites {sites} out of range [1, {chain.N}]")
        return sites
    return link_sites(chain.N, coupling.m, coupling.geometry, chain.boundary)


def site_fields(chain: ChainSpec, coupling: Optional[CouplingSpec]) -> np.ndarray:
    """Extra field eps_j on every site (zero when unperturbed)."""
    eps = np.zeros(chain.N)
    if coupling is not None and coupling.epsilon != 0.0:
        for s in resolve_sites(chain, coupling):
            eps[s - 1] = coupling.epsilon
    return eps


def build_quadratic_form(chain: ChainSpec,
                         perturbation: Optional[CouplingSpec] = None,
                         parity_exact: bool = False) -> QuadraticForm:
    """
    Build A and B for H_g (no perturbation) or H_e (perturbation given).

    Periodic chains use the c-cyclic convention, plain corner couplings. With
    ``parity_exact`` the corner couplings change sign, which is the exact
    mapping inside the even fermion-parity sector; this needs an even N below
    PARITY_EXACT_MAX_SITES.

    Raises:
        UnsupportedModelError: If delta != 0 or parity_exact is not applicable
        InvalidCouplingError: If the perturbation does not fit the chain
    """
    if not chain.is_free_fermion:
        raise UnsupportedModelError(
            f"delta={chain.delta} is not a free-fermion model; use the ED oracle (method=ed)"
        )
    if parity_exact:
        if chain.boundary != Boundary.PERIODIC:
            raise UnsupportedModelError("parity_exact applies to periodic chains only")
        if chain.N % 2 or chain.N > settings.PARITY_EXACT_MAX_SITES:
            raise UnsupportedModelError(
                f"parity_exact needs even N <= {settings.PARITY_EXACT_MAX_SITES}, got N={chain.N}"
            )

    N, J, gamma = chain.N, chain.J, chain.gamma
    eps = site_fields(chain, perturbation)

    A = np.diag(-2.0 * (J * chain.lambda_ + eps))
    B = np.zeros((N, N))
    bonds = [(j, j + 1, 1.0) for j in range(N - 1)]
    if chain.boundary == Boundary.PERIODIC:
        bonds.append((N - 1, 0, -1.0 if parity_exact else 1.0))
    for j, k, sign in bonds:
        A[j, k] += -J * sign
        A[k, j] += -J * sign
        B[j, k] += -gamma * J * sign
        B[k, j] += gamma * J * sign

    logger.debug(f"Quadratic form N={N} boundary={chain.boundary.value} parity_exact={parity_exact} "
                 f"linked={np.flatnonzero(eps) + 1}")
    return QuadraticForm(A=A, B=B)


def validate_form(form: QuadraticForm, atol: float = 0.0) -> Sequence[str]:
    """Return the violated symmetry conditions of ``form`` (empty if valid)."""
    problems = []
    if form.A.ndim != 2 or form.A.shape != form.B.shape or form.A.shape[0] != form.A.shape[1]:
        return ["A and B must be square matrices of equal size"]
    if not np.allclose(form.A, form.A.T, rtol=0.0, atol=atol):
        problems.append("A is not symmetric")
    if not np.allclose(form.B, -form.B.T, rtol=0.0, atol=atol):
        problems.append("B is not antisymmetric")
    return problems
