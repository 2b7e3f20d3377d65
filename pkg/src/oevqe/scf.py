"""Restricted Hartree-Fock in the orthonormal localized-orbital basis.

The basis is orthonormal, so the Roothaan step is a plain symmetric
eigenproblem.  Convergence is judged on the max-abs Fock/density commutator
together with the energy change, both basis-independent quantities.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["ScfError", "ScfConvergenceError", "RhfSolution", "build_fock", "run_rhf"]


class ScfError(RuntimeError):
    pass


class ScfConvergenceError(ScfError):
    """SCF failed to converge; carries the last commutator residual."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(eq=False)
class RhfSolution:
    """Converged mean field: orbitals, energies, spin-summed density, total energy."""

    C: np.ndarray
    eps: np.ndarray
    D: np.ndarray
    e_hf: float
    n_iter: int = 0
    energies: tuple = ()  # per-iteration total energies, for diagnostics


def build_fock(D, ints):
    """Closed-shell Fock matrix F = h1 + J(D) - K(D)/2 for a spin-summed density.

    J_ij = sum_kl (ij|lk) D_kl and K_ij = sum_kl (ik|lj) D_kl, chemist
    notation throughout.
    """
    D = np.asarray(D, dtype=float)
    L = ints.L
    if D.shape != (L, L):
        raise ValueError(f"density shape {D.shape} does not match L={L}")
    g = ints.eri_dense()
    J = np.einsum("ijlk,kl->ij", g, D)
    K = np.einsum("iklj,kl->ij", g, D)
    F = ints.h1 + J - 0.5 * K
    return 0.5 * (F + F.T)


def _density_from_orbitals(C, n_occ):
    Cocc = C[:, :n_occ]
    return 2.0 * Cocc @ Cocc.T


def _total_energy(ints, D, F):
    return 0.5 * float(np.sum((ints.h1 + F) * D)) + ints.e_nuc


def run_rhf(ints, max_iter=500, conv_tol=1e-10, mixing=0.5):
    """Solve RHF by repeated Fock diagonalization with linear density mixing.

    The n_elec/2 lowest orbitals are doubly occupied each cycle.  Raises
    :class:`ScfConvergenceError` after ``max_iter`` unconverged cycles and
    :class:`ScfError` on a degenerate HOMO/LUMO pair at the Fermi level,
    which would break the idempotency the downstream embedding relies on.
    """
    if ints.n_elec % 2 != 0:
        raise ScfError("restricted solver requires an even electron count")
    n_occ = ints.n_elec // 2
    L = ints.L

    # uniform-occupation guess; the bare-h1 core guess overshoots badly on
    # stretched chains and breaks the monotone descent of the damped iteration
    D_work = (ints.n_elec / L) * np.eye(L)
    e_prev = None
    energies = []
    resid = np.inf
    for it in range(max_iter):
        F = build_fock(D_work, ints)
        eps, C = np.linalg.eigh(F)
        if n_occ < L and eps[n_occ] - eps[n_occ - 1] < 1e-8:
            raise ScfError(
                f"degenerate HOMO/LUMO at the Fermi level (gap "
                f"{eps[n_occ] - eps[n_occ - 1]:.2e}); fractional occupation unsupported")
        D_pure = _density_from_orbitals(C, n_occ)
        F_pure = build_fock(D_pure, ints)
        resid = np.abs(F_pure @ D_pure - D_pure @ F_pure).max()
        energy = _total_energy(ints, D_pure, F_pure)
        energies.append(energy)
        if e_prev is not None and resid < conv_tol and abs(energy - e_prev) < conv_tol:
            eps, C = np.linalg.eigh(F_pure)
            return RhfSolution(C=C, eps=eps, D=D_pure, e_hf=energy,
                               n_iter=it + 1, energies=tuple(energies))
        e_prev = energy
        D_work = D_pure if it == 0 else (1.0 - mixing) * D_work + mixing * D_pure

    raise ScfConvergenceError(
        f"SCF not converged after {max_iter} iterations (|[F,D]|max = {resid:.3e})",
        residual=float(resid))
