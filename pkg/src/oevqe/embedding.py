"""Fragment/bath/core/virtual partition of the mean-field density.

Diagonalizing the environment block of the spin-summed HF density sorts the
environment into bath orbitals (fractional occupation, entangled with the
fragment), core orbitals (occupation 2) and virtual orbitals (occupation 0).
Fragment plus bath form the impurity, the initial active space.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["FragmentSpec", "EmbeddingBasis", "partition_density", "build_bath",
           "impurity_hamiltonian"]


@dataclass(frozen=True)
class FragmentSpec:
    """Ordered localized-orbital indices defining the fragment."""

    indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if len(self.indices) == 0:
            raise ValueError("fragment must contain at least one orbital")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("duplicate fragment index")
        if min(self.indices) < 0:
            raise ValueError("negative fragment index")

    @property
    def size(self):
        return len(self.indices)

    def validate(self, L):
        if max(self.indices) >= L:
            raise ValueError(f"fragment index {max(self.indices)} out of range [0, {L})")


@dataclass(eq=False)
class EmbeddingBasis:
    """Orthonormal frame [u_frag | u_bath | u_core | u_vir] in the LO basis.

    ``occ_env`` holds the environment occupation eigenvalues aligned with the
    concatenated [bath | core | vir] columns; ``delta`` is the classification
    threshold that was applied.
    """

    u_frag: np.ndarray
    u_bath: np.ndarray
    u_core: np.ndarray
    u_vir: np.ndarray
    occ_env: np.ndarray
    delta: float
    fragment: FragmentSpec

    @property
    def L(self):
        return self.u_frag.shape[0]

    @property
    def L_A(self):
        return self.u_frag.shape[1]

    @property
    def L_B(self):
        return self.u_bath.shape[1]

    @property
    def L_core(self):
        return self.u_core.shape[1]

    @property
    def L_vir(self):
        return self.u_vir.shape[1]

    def impurity(self):
        return np.hstack([self.u_frag, self.u_bath])

    def full_frame(self):
        return np.hstack([self.u_frag, self.u_bath, self.u_core, self.u_vir])


def partition_density(D, frag):
    """Split D into fragment/cross/environment blocks by index permutation.

    Returns ``(D_A, D_inter, D_B, env_index_map)`` where ``env_index_map``
    lists the original LO index of every environment row, in ascending order.
    """
    D = np.asarray(D, dtype=float)
    L = D.shape[0]
    frag.validate(L)
    fidx = list(frag.indices)
    env = [i for i in range(L) if i not in set(fidx)]
    D_A = D[np.ix_(fidx, fidx)]
    D_inter = D[np.ix_(fidx, env)]
    D_B = D[np.ix_(env, env)]
    return D_A, D_inter, D_B, tuple(env)


def _sign_fix(vectors):
    """Flip eigenvector signs so the largest-magnitude entry is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def _order_class(lams, vecs, D_inter, env_map, tie_tol=1e-9):
    """Order one occupation class by descending eigenvalue.

    Near-degenerate eigenvalues are resolved deterministically: first by
    descending coupling to the fragment through D_inter, then by the LO index
    of the dominant eigenvector component.
    """
    if len(lams) == 0:
        return lams, vecs
    coupling = np.linalg.norm(D_inter @ vecs, axis=0)
    dominant = [env_map[int(np.argmax(np.abs(vecs[:, j])))] for j in range(vecs.shape[1])]
    order = sorted(range(len(lams)),
                   key=lambda j: (-round(lams[j] / tie_tol), -coupling[j], dominant[j]))
    return lams[order], vecs[:, order]


def build_bath(D, frag, delta=1e-6):
    """Classify the environment by occupation and assemble the embedding frame.

    Eigenvalues of the environment density block within ``(delta, 2-delta)``
    become bath orbitals; values at the top/bottom edge become core/virtual.
    Within each class, columns are ordered by descending occupation.
    """
    D = np.asarray(D, dtype=float)
    L = D.shape[0]
    frag.validate(L)
    _, D_inter, D_B, env_map = partition_density(D, frag)
    L_A = frag.size

    u_frag = np.zeros((L, L_A))
    for col, i in enumerate(frag.indices):
        u_frag[i, col] = 1.0

    n_env = L - L_A
    if n_env == 0:
        empty = np.zeros((L, 0))
        return EmbeddingBasis(u_frag=u_frag, u_bath=empty, u_core=empty.copy(),
                              u_vir=empty.copy(), occ_env=np.zeros(0),
                              delta=delta, fragment=frag)

    lams, vecs = np.linalg.eigh(D_B)
    vecs = _sign_fix(vecs)
    is_core = lams >= 2.0 - delta
    is_vir = lams <= delta
    is_bath = ~(is_core | is_vir)

    blocks = {}
    occ = []
    for name, mask in (("bath", is_bath), ("core", is_core), ("vir", is_vir)):
        cls_lams, cls_vecs = _order_class(lams[mask], vecs[:, mask], D_inter, env_map)
        scattered = np.zeros((L, cls_vecs.shape[1]))
        scattered[list(env_map), :] = cls_vecs
        blocks[name] = scattered
        occ.extend(cls_lams)

    return EmbeddingBasis(u_frag=u_frag, u_bath=blocks["bath"], u_core=blocks["core"],
                          u_vir=blocks["vir"], occ_env=np.asarray(occ),
                          delta=delta, fragment=frag)


def impurity_hamiltonian(ints, basis):
    """Project onto the impurity columns, treating every core orbital as frozen.

    Returns the initial active-space Hamiltonian with its effective Coulomb
    correction and core energy (see :mod:`oevqe.projection`).
    """
    from . import projection

    C = basis.impurity()
    n_elec_sub = ints.n_elec - 2 * basis.L_core
    return projection.build_subspace_hamiltonian(ints, C, basis.u_core, n_elec_sub)
