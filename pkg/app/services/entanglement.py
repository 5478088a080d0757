"""
Two-site entanglement of bath ground states (Wootters concurrence).
"""
import logging
from typing import List, Literal, Optional, Sequence

import numpy as np

from app.exceptions import InvalidStateError, UnsupportedEstimateError
from app.models import AlphaConcurrenceRow, Boundary, ChainSpec, ConcurrenceProfile, CouplingSpec, SectorRule
from app.services.ed_oracle import (DenseState, default_sector_rule, dense_hamiltonian, ground_state,
                                    reduced_density_matrix)
from app.services.freefermion import diagonalize
from app.services.model import build_quadratic_form, resolve_sites
from app.services.perturbation import alpha_perturbative, alpha_variance

logger = logging.getLogger(__name__)

SIGMA_Y = np.array([[0.0, -1j], [1j, 0.0]])
SPIN_FLIP = np.kron(SIGMA_Y, SIGMA_Y)


def _check_physical(rho: np.ndarray, atol: float = 1e-8) -> None:
    if rho.shape != (4, 4):
        raise InvalidStateError(f"expected a 4x4 density matrix, got shape {rho.shape}")
    if not np.allclose(rho, rho.conj().T, atol=atol):
        raise InvalidStateError("density matrix is not Hermitian")
    trace = np.trace(rho).real
    if abs(trace - 1.0) > atol:
        raise InvalidStateError(f"density matrix trace {trace:.3e} != 1")
    lowest = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lowest < -atol:
        raise InvalidStateError(f"density matrix has negative eigenvalue {lowest:.3e}")


def concurrence(rho: np.ndarray) -> float:
    """
    Wootters concurrence max(l1 - l2 - l3 - l4, 0) of a two-qubit state.

    The l_i are the square roots of the eigenvalues of rho (sy x sy) rho* (sy x sy),
    sorted descending; rho is written in the (up up, up down, down up, down down) basis.

    Raises:
        InvalidStateError: If rho is not a density matrix within 1e-8
    """
    rho = np.asarray(rho, dtype=complex)
    _check_physical(rho)
    flipped = SPIN_FLIP @ rho.conj() @ SPIN_FLIP
    eigenvalues = np.clip(np.linalg.eigvals(rho @ flipped).real, 0.0, None)
    roots = np.sort(np.sqrt(eigenvalues))[::-1]
    return float(np.clip(roots[0] - roots[1:].sum(), 0.0, 1.0))


def nearest_neighbor_pairs(chain: ChainSpec) -> List[tuple]:
    pairs = [(j, j + 1) for j in range(1, chain.N)]
    if chain.boundary == Boundary.PERIODIC and chain.N > 2:
        pairs.append((chain.N, 1))
    return pairs


def state_concurrences(state: DenseState, pairs: Sequence[tuple]) -> List[float]:
    return [concurrence(reduced_density_matrix(state, i, j)) for i, j in pairs]


def nn_concurrence_scan(chain: ChainSpec, sector_rule: Optional[SectorRule] = None) -> ConcurrenceProfile:
    """C(1) for every nearest-neighbor pair of the ED ground state."""
    rule = sector_rule or default_sector_rule(chain)
    state = ground_state(dense_hamiltonian(chain), rule)
    pairs = nearest_neighbor_pairs(chain)
    values = state_concurrences(state, pairs)
    logger.debug(f"C(1) scan N={chain.N} lambda={chain.lambda_} delta={chain.delta}: mean={np.mean(values):.4f}")
    return ConcurrenceProfile(pairs=pairs, values=values, chain=chain)


def alpha_vs_concurrence(chains: Sequence[ChainSpec], coupling: CouplingSpec,
                         param: Literal["lambda", "delta", "gamma"] = "lambda",
                         sector_rule: Optional[SectorRule] = None,
                         estimator: Literal["variance", "perturbative"] = "variance") -> List[AlphaConcurrenceRow]:
    """
    Rows (param, mean C(1), alpha) over a grid of chains.

    ``variance`` evaluates alpha on the same ED ground state as the
    concurrence; ``perturbative`` uses the free-fermion closed form (Delta = 0, m = 1).
    """
    rows = []
    for chain in chains:
        rule = sector_rule or default_sector_rule(chain)
        state = ground_state(dense_hamiltonian(chain), rule)
        c1 = float(np.mean(state_concurrences(state, nearest_neighbor_pairs(chain))))
        sites = resolve_sites(chain, coupling)
        if estimator == "variance":
            alpha = alpha_variance(state, sites, coupling.epsilon).alpha
        elif estimator == "perturbative":
            basis = diagonalize(build_quadratic_form(chain))
            alpha = alpha_perturbative(basis, coupling.epsilon, sites).alpha
        else:
            raise UnsupportedEstimateError(f"unknown alpha estimator {estimator!r}")
        value = {"lambda": chain.lambda_, "delta": chain.delta, "gamma": chain.gamma}[param]
        rows.append(AlphaConcurrenceRow(param=value, C1=c1, alpha=alpha))
    return rows
