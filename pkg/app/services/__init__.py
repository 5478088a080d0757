"""
Computational services: bath model, echo engines, estimators, ED oracle,
entanglement, lattice compiler and the run driver.
"""

from .echo import DETERMINANT_EXPONENT, echo_central_spin, echo_determinant
from .ed_oracle import echo_ed, echo_trotter

__all__ = [
    'DETERMINANT_EXPONENT',
    'echo_central_spin',
    'echo_determinant',
    'echo_ed',
    'echo_trotter',
]
