"""
Spin Bath Decoherence Toolkit

Loschmidt echo of a qubit dephasing-coupled to spin-1/2 chain baths: free-fermion
determinant engine, central-spin closed form, perturbative estimates, a dense
exact-diagonalization oracle and a stroboscopic gate compiler.
"""

__version__ = "0.1.0"
