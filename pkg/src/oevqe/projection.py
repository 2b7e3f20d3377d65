"""Projected subspace Hamiltonians with frozen-core corrections.

A stage projector C (an L x k column isometry) restricts the electronic
Hamiltonian to an active space.  Core orbitals left outside contribute a
mean-field potential V_eff to the projected one-body term and a scalar core
energy, so that the assembled total

    E_g = E_sub + E_core + E_nuc

of the uncorrelated reference reproduces the full-system HF energy at every
stage, exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .integrals import IntegralSet
from .scf import build_fock

__all__ = ["SubspaceHamiltonian", "core_density", "build_subspace_hamiltonian",
           "core_energy", "subspace_energy", "assemble_energy", "to_integral_set"]

CORE = "core"
VIRTUAL = "virtual"


@dataclass(eq=False)
class SubspaceHamiltonian:
    """Active-space integrals plus the frozen-core and nuclear energy shifts.

    ``h1_sub`` already includes the effective Coulomb/exchange field of the
    frozen core.  ``occ_pattern`` tags each appended environment orbital
    (positions after the impurity block) as ``core`` (occupied in the
    reference) or ``virtual`` (empty).
    """

    k: int
    h1_sub: np.ndarray
    eri_sub: np.ndarray
    e_core: float
    e_nuc: float
    n_elec_sub: int
    occ_pattern: tuple = ()
    label: str = ""
    _frozen_electrons: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("subspace must contain at least one orbital")
        if self.h1_sub.shape != (self.k, self.k):
            raise ValueError("h1_sub shape mismatch")
        if self.eri_sub.shape != (self.k,) * 4:
            raise ValueError("eri_sub shape mismatch")
        if self.n_elec_sub % 2 != 0 or self.n_elec_sub < 0:
            raise ValueError(f"subspace electron count {self.n_elec_sub} must be even")
        scale = max(np.abs(self.h1_sub).max(), 1.0)
        if np.abs(self.h1_sub - self.h1_sub.T).max() > 1e-10 * scale:
            raise ValueError("h1_sub is not symmetric")

    @property
    def n_qubits(self):
        return 2 * self.k


def core_density(core_remainder):
    """Spin-summed density of fully occupied core columns: 2 * U U^T."""
    U = np.asarray(core_remainder, dtype=float)
    if U.ndim != 2:
        raise ValueError("core_remainder must be a column block")
    return 2.0 * U @ U.T


def core_energy(ints, d_core, d_full=None):
    """Energy carried by frozen core orbitals.

    E_core = 1/2 sum_ij (h1 + F[d_core])_ij d_core_ij, with the Fock matrix
    built from the core density itself; the h1 term and the 1/2 prefactor
    cancel the double counting of the core-core Coulomb/exchange interaction.
    Together with V_eff inside the subspace one-body term this makes the
    staged energies exactly consistent with the full mean field.  When the
    converged full density ``d_full`` is supplied, the precondition that the
    core lies inside its fully occupied space is checked.
    """
    d_core = np.asarray(d_core, dtype=float)
    if not np.any(d_core):
        return 0.0
    if d_full is not None:
        err = np.abs(d_full @ d_core - 2.0 * d_core).max()
        if err > 1e-5:
            raise ValueError(
                f"core density is not inside the occupied space of d_full "
                f"(deviation {err:.2e})")
    F_core = build_fock(d_core, ints)
    return 0.5 * float(np.sum((ints.h1 + F_core) * d_core))


def _effective_potential(ints, d_core):
    """V_eff_pq = sum_rs d_core_sr ( (pq|rs) - (pr|sq)/2 )."""
    g = ints.eri_dense()
    J = np.einsum("pqrs,sr->pq", g, d_core)
    K = np.einsum("prsq,sr->pq", g, d_core)
    V = J - 0.5 * K
    return 0.5 * (V + V.T)


def build_subspace_hamiltonian(ints, C, core_remainder, n_elec_sub,
                               occ_pattern=(), label=""):
    """Project the integrals through C and fold in the frozen-core field.

    h1_sub = C^T (h1 + V_eff) C and eri_sub is the four-index transform of
    the two-body integrals, performed as four successive one-index
    contractions.  ``core_remainder`` holds the orthonormal core columns left
    outside the subspace; they generate V_eff and E_core.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != ints.L or C.shape[1] == 0:
        raise ValueError(f"projector shape {C.shape} invalid for L={ints.L}")
    k = C.shape[1]
    d_core = core_density(core_remainder)
    m = core_remainder.shape[1] if core_remainder is not None else 0
    if n_elec_sub + 2 * m != ints.n_elec:
        raise ValueError(
            f"electron bookkeeping broken: {n_elec_sub} in subspace plus "
            f"2*{m} frozen != {ints.n_elec}")

    h_eff = ints.h1 + (_effective_potential(ints, d_core) if m else 0.0)
    h1_sub = C.T @ h_eff @ C

    g = ints.eri_dense()
    g1 = np.tensordot(C, g, axes=(0, 0))          # (i, q, r, s)
    g2 = np.tensordot(C, g1, axes=(0, 1))         # (j, i, r, s)
    g3 = np.tensordot(C, g2, axes=(0, 2))         # (r', j, i, s)
    g4 = np.tensordot(C, g3, axes=(0, 3))         # (s', r', j, i)
    eri_sub = g4.transpose(3, 2, 1, 0)

    return SubspaceHamiltonian(
        k=k, h1_sub=0.5 * (h1_sub + h1_sub.T), eri_sub=eri_sub,
        e_core=core_energy(ints, d_core), e_nuc=ints.e_nuc,
        n_elec_sub=n_elec_sub, occ_pattern=tuple(occ_pattern), label=label,
        _frozen_electrons=2 * m)


def subspace_energy(ham, rdm1, rdm2):
    """Contract subspace integrals with spin-summed RDMs.

    E_sub = sum_ij h1_sub_ij D1_ij + 1/2 sum_pqrs eri_sub[p,q,r,s] D2[p,q,r,s]
    with D2 in the chemist index order documented in :mod:`oevqe.integrals`.
    """
    rdm1 = np.asarray(rdm1)
    rdm2 = np.asarray(rdm2)
    k = ham.k
    if rdm1.shape != (k, k) or rdm2.shape != (k,) * 4:
        raise ValueError("RDM dimensions do not match the subspace")
    e1 = np.einsum("ij,ij->", ham.h1_sub, rdm1)
    e2 = 0.5 * np.einsum("pqrs,pqrs->", ham.eri_sub, rdm2)
    return float((e1 + e2).real)


def assemble_energy(e_sub, e_core, e_nuc):
    """Total energy from its subspace, core, and nuclear pieces."""
    return float(e_sub) + float(e_core) + float(e_nuc)


def to_integral_set(ham, label=None):
    """Export a subspace Hamiltonian as an IntegralSet (e.g. for FCIDUMP).

    The core and nuclear shifts are folded into the scalar energy slot, so an
    external diagonalization of the export yields the assembled total E_g.
    """
    return IntegralSet.from_dense(
        h1=ham.h1_sub, eri_dense=ham.eri_sub, n_elec=ham.n_elec_sub,
        e_nuc=ham.e_core + ham.e_nuc,
        label=label if label is not None else (ham.label or "subspace"))
