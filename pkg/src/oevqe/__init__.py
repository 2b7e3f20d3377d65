"""Orbital-expansion variational eigensolver toolkit.

Electronic-structure pipeline over integrals in an orthonormal localized
orbital basis: restricted Hartree-Fock, density-matrix embedding into a
fragment/bath impurity, MP2-ranked expansion of the unentangled environment,
projected subspace Hamiltonians, and adaptive ansatz-growth eigensolvers on
an exact Jordan-Wigner statevector simulator.
"""

__version__ = "0.1.0"
