"""MP2 ranking of the unentangled environment and the staged projectors.

The environment orbitals left outside the impurity carry no mean-field
entanglement, so they are ordered by the particle number they exchange with
the impurity at the MP2 level: occupied impurity orbitals excite into the
environment virtuals, environment cores excite into the unoccupied impurity
orbitals.  Diagonalizing the resulting one-body density blocks yields both
the exchange scores and the rotated environment columns.
"""

from dataclasses import dataclass

import numpy as np

from .embedding import _sign_fix
from .scf import build_fock, run_rhf

__all__ = ["RankingError", "RankedBasis", "impurity_fock_split", "mp2_amplitudes",
           "mp2_block_rdm", "rank_environment", "stage_projector"]

CORE = "core"
VIRTUAL = "virtual"


class RankingError(RuntimeError):
    pass


@dataclass(eq=False)
class RankedBasis:
    """Full LO rotation [impurity | ranked environment] with exchange scores.

    ``u_full`` is L x L orthonormal; its first ``l_occ`` columns are the
    occupied impurity orbitals (ascending orbital energy), followed by the
    unoccupied impurity orbitals, followed by the N environment columns in
    descending ``delta_lambda`` order.  ``class_of[i]`` tags environment
    column i as ``core`` or ``virtual``.
    """

    u_full: np.ndarray
    delta_lambda: np.ndarray
    class_of: tuple
    l_occ: int
    n_imp: int

    @property
    def L(self):
        return self.u_full.shape[0]

    @property
    def n_env(self):
        return len(self.class_of)


def _occupation_resolved_eigh(F_sub, D_sub, cluster_tol=1e-9):
    """Eigendecompose F_sub, resolving degenerate clusters by occupation.

    Within a degenerate eigenvalue cluster the density block is diagonalized
    and columns are ordered by descending occupation, which keeps occupied
    orbitals ahead of empty ones when the split point falls inside a cluster.
    """
    eps, V = np.linalg.eigh(F_sub)
    i = 0
    n = len(eps)
    while i < n:
        j = i + 1
        while j < n and eps[j] - eps[i] <= cluster_tol:
            j += 1
        if j - i > 1:
            block = V[:, i:j]
            occ = block.T @ D_sub @ block
            lam, W = np.linalg.eigh(0.5 * (occ + occ.T))
            V[:, i:j] = block @ W[:, ::-1]
        i = j
    return eps, _sign_fix(V)


def impurity_fock_split(ints, basis, rhf=None):
    """Split the impurity into occupied/unoccupied orbitals via its Fock block.

    The full-system Fock (built from the converged HF density) is projected
    onto the impurity columns and diagonalized; the lowest floor(l/2)
    eigenvectors are occupied, where l is the impurity electron count read
    off the projected density.  Returns LO-basis column blocks
    ``(u_occ, u_unocc, energies)``.
    """
    if rhf is None:
        rhf = run_rhf(ints)
    C_imp = basis.impurity()
    F = build_fock(rhf.D, ints)
    F_imp = C_imp.T @ F @ C_imp
    D_imp = C_imp.T @ rhf.D @ C_imp

    l_float = float(np.trace(D_imp))
    l = int(round(l_float))
    if abs(l_float - l) > 1e-6:
        raise RankingError(
            f"impurity electron count {l_float:.8f} is not integral; "
            "the fragment/bath partition is inconsistent")
    l_occ = l // 2

    eps, V = _occupation_resolved_eigh(0.5 * (F_imp + F_imp.T), D_imp)
    cols = C_imp @ V
    return cols[:, :l_occ], cols[:, l_occ:], eps


def _block_fock(ints, cols, fock):
    b = cols.T @ fock @ cols
    return 0.5 * (b + b.T)


def mp2_amplitudes(ints, occ_cols, vir_cols, fock=None):
    """Closed-shell MP2 amplitudes over two disjoint orthonormal column spans.

    Each block of the supplied LO-basis Fock matrix is canonicalized
    internally; amplitudes are t[i,a,j,b] = (ia|jb) / (e_i + e_j - e_a - e_b)
    over the canonical orbitals.  Returns (t, e_occ, e_vir, c_occ, c_vir)
    with the canonical coefficient columns in the LO basis.  When ``fock`` is
    omitted it is built from the closed-shell density implied by
    ``occ_cols``.
    """
    occ_cols = np.asarray(occ_cols, dtype=float)
    vir_cols = np.asarray(vir_cols, dtype=float)
    n_o, n_v = occ_cols.shape[1], vir_cols.shape[1]
    if n_o and n_v and np.abs(occ_cols.T @ vir_cols).max() > 1e-10:
        raise ValueError("occupied and virtual spans are not disjoint")
    if fock is None:
        fock = build_fock(2.0 * occ_cols @ occ_cols.T, ints)
    if n_o == 0 or n_v == 0:
        return (np.zeros((n_o, n_v, n_o, n_v)), np.zeros(n_o), np.zeros(n_v),
                occ_cols, vir_cols)

    e_o, W_o = np.linalg.eigh(_block_fock(ints, occ_cols, fock))
    e_v, W_v = np.linalg.eigh(_block_fock(ints, vir_cols, fock))
    c_occ = occ_cols @ _sign_fix(W_o)
    c_vir = vir_cols @ _sign_fix(W_v)

    g = ints.eri_dense()
    # (ia|jb) in the canonical blocks, via one-index transforms
    g_iajb = np.einsum("pqrs,pi,qa,rj,sb->iajb", g, c_occ, c_vir, c_occ, c_vir,
                       optimize=True)
    denom = (e_o[:, None, None, None] + e_o[None, None, :, None]
             - e_v[None, :, None, None] - e_v[None, None, None, :])
    small = np.abs(denom) < 1e-10
    if small.any():
        i, a, j, b = (int(x[0]) for x in np.nonzero(small))
        raise RankingError(
            f"vanishing MP2 denominator for quartet (i={i}, a={a}, j={j}, b={b})")
    return g_iajb / denom, e_o, e_v, c_occ, c_vir


def mp2_block_rdm(ints, occ_cols, vir_cols, fock=None):
    """Unrelaxed MP2 one-body density blocks, in the input column bases.

    D_occ = 2*I plus a negative-semidefinite correction, D_vir a
    positive-semidefinite correction:

        dD_ab = 2 sum_ijc t[i,a,j,c] (2 t[i,b,j,c] - t[i,c,j,b])
        dD_ij = -2 sum_kab t[i,a,k,b] (2 t[j,a,k,b] - t[j,b,k,a])
    """
    t, _, _, c_occ, c_vir = mp2_amplitudes(ints, occ_cols, vir_cols, fock=fock)
    n_o, n_v = t.shape[0], t.shape[1]
    d_occ_corr = -2.0 * (2.0 * np.einsum("iakb,jakb->ij", t, t, optimize=True)
                         - np.einsum("iakb,jbka->ij", t, t, optimize=True))
    d_vir_corr = 2.0 * (2.0 * np.einsum("iajc,ibjc->ab", t, t, optimize=True)
                        - np.einsum("iajc,icjb->ab", t, t, optimize=True))

    occ_cols = np.asarray(occ_cols, dtype=float)
    vir_cols = np.asarray(vir_cols, dtype=float)
    # rotate back from the canonical blocks to the caller's column basis
    R_o = occ_cols.T @ c_occ if n_o else np.zeros((0, 0))
    R_v = vir_cols.T @ c_vir if n_v else np.zeros((0, 0))
    d_occ = 2.0 * np.eye(n_o) + R_o @ d_occ_corr @ R_o.T
    d_vir = R_v @ d_vir_corr @ R_v.T
    return d_occ, d_vir


def rank_environment(ints, basis, rhf=None):
    """Rank core/virtual environment orbitals by MP2 particle-number exchange.

    Two MP2 problems are solved: impurity-occupied with environment-virtual,
    and environment-core with impurity-unoccupied.  The environment density
    blocks are diagonalized; virtual eigenvalues and 2-minus-core eigenvalues
    are the exchange scores, sorted descending into the ranked basis.
    """
    if rhf is None:
        rhf = run_rhf(ints)
    fock = build_fock(rhf.D, ints)
    u_occ, u_unocc, _ = impurity_fock_split(ints, basis, rhf=rhf)

    _, d_vir = mp2_block_rdm(ints, u_occ, basis.u_vir, fock=fock)
    d_core, _ = mp2_block_rdm(ints, basis.u_core, u_unocc, fock=fock)

    entries = []
    if basis.L_vir:
        lam, W = np.linalg.eigh(0.5 * (d_vir + d_vir.T))
        cols = basis.u_vir @ _sign_fix(W)
        for j in range(len(lam)):
            entries.append((max(lam[j], 0.0), VIRTUAL, cols[:, j]))
    if basis.L_core:
        lam, W = np.linalg.eigh(0.5 * (d_core + d_core.T))
        cols = basis.u_core @ _sign_fix(W)
        for j in range(len(lam)):
            entries.append((max(2.0 - lam[j], 0.0), CORE, cols[:, j]))

    # descending score; ties resolved virtual-first, then by closeness of the
    # orbital's Fock expectation to the Fermi level
    n_occ_full = ints.n_elec // 2
    e_fermi = 0.5 * (rhf.eps[n_occ_full - 1] + rhf.eps[n_occ_full]) \
        if n_occ_full < ints.L else rhf.eps[-1]

    def sort_key(entry):
        score, cls, col = entry
        e_orb = float(col @ fock @ col)
        return (-score, 0 if cls == VIRTUAL else 1, abs(e_orb - e_fermi))

    entries.sort(key=sort_key)

    imp = np.hstack([u_occ, u_unocc])
    env = np.column_stack([e[2] for e in entries]) if entries else np.zeros((ints.L, 0))
    u_full = np.hstack([imp, env])
    return RankedBasis(u_full=u_full,
                       delta_lambda=np.asarray([e[0] for e in entries]),
                       class_of=tuple(e[1] for e in entries),
                       l_occ=u_occ.shape[1],
                       n_imp=imp.shape[1])


def stage_projector(ranked, n_s):
    """First n_imp + n_s columns of the ranked frame, plus the leftover core.

    Returns ``(C, core_remainder)``: the stage projector and the environment
    columns still outside the subspace that carry two frozen electrons each.
    """
    if not 0 <= n_s <= ranked.n_env:
        raise ValueError(f"stage size {n_s} out of range [0, {ranked.n_env}]")
    k = ranked.n_imp + n_s
    C = ranked.u_full[:, :k]
    rest = [ranked.n_imp + j for j in range(n_s, ranked.n_env)
            if ranked.class_of[j] == CORE]
    core_remainder = ranked.u_full[:, rest] if rest else np.zeros((ranked.L, 0))
    return C, core_remainder
