"""Independent brute-force references for the simulator and solver stack.

Everything here is deliberately implemented from scratch rather than on top
of the production kernels: the configuration-interaction Hamiltonian is
assembled determinant-by-determinant from Slater-Condon rules, operator
exponentials are Taylor series over the Pauli expansion, and MP2 is written
against canonical molecular orbitals.  Agreement with the fast paths is what
the test suite asserts.
"""

import itertools
import math

import numpy as np
from scipy import sparse

from .fermisim import Statevector
from .integrals import IntegralSet
from .projection import SubspaceHamiltonian

__all__ = ["OracleError", "fci_ground_state", "dense_exponential",
           "mp2_total_energy", "bp_variance_experiment", "bp_pool_gradients"]


class OracleError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# full CI by exact diagonalization

def _sector_determinants(k, n_alpha, n_beta):
    """All (n_alpha, n_beta) determinants as spin-interleaved bit integers."""
    if not (0 <= n_alpha <= k and 0 <= n_beta <= k):
        raise OracleError(f"empty determinant sector ({n_alpha},{n_beta}) for k={k}")
    dets = []
    for alpha in itertools.combinations(range(k), n_alpha):
        abits = sum(1 << (2 * i) for i in alpha)
        for beta in itertools.combinations(range(k), n_beta):
            dets.append(abits + sum(1 << (2 * j + 1) for j in beta))
    return np.asarray(sorted(dets), dtype=np.int64)


def _parity_between(det, a, b):
    """Sign from moving one particle between spin orbitals a and b of det."""
    lo, hi = (a, b) if a < b else (b, a)
    mask = ((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1)
    return -1.0 if (int(det) & mask).bit_count() & 1 else 1.0


def _occupied(det, spin, k):
    return [p for p in range(k) if (det >> (2 * p + spin)) & 1]


def _diagonal_element(h1, g, occ_a, occ_b):
    e = sum(h1[p, p] for p in occ_a) + sum(h1[p, p] for p in occ_b)
    for occ in (occ_a, occ_b):
        for p in occ:
            for q in occ:
                e += 0.5 * (g[p, p, q, q] - g[p, q, q, p])
    for p in occ_a:
        for q in occ_b:
            e += g[p, p, q, q]
    return e


def _single_element(h1, g, i, a, occ_same, occ_other):
    val = h1[i, a]
    for p in occ_same:
        if p != i:
            val += g[i, a, p, p] - g[i, p, p, a]
    for p in occ_other:
        val += g[i, a, p, p]
    return val


def _row_connections(det, k, h1, g):
    """Yield (ket, value) pairs of H|det> via Slater-Condon rules."""
    occ_a = _occupied(det, 0, k)
    occ_b = _occupied(det, 1, k)
    vir_a = [p for p in range(k) if p not in occ_a]
    vir_b = [p for p in range(k) if p not in occ_b]
    yield det, _diagonal_element(h1, g, occ_a, occ_b)

    def spinorb(p, spin):
        return 2 * p + spin

    singles = []
    for spin, occ, vir, other in ((0, occ_a, vir_a, occ_b), (1, occ_b, vir_b, occ_a)):
        for i in occ:
            for a in vir:
                so_i, so_a = spinorb(i, spin), spinorb(a, spin)
                sgn = _parity_between(det, so_i, so_a)
                ket = det ^ (1 << so_i) ^ (1 << so_a)
                same = occ_a if spin == 0 else occ_b
                yield ket, sgn * _single_element(h1, g, i, a, same, other)
                singles.append((spin, i, a, so_i, so_a))

    # same-spin doubles
    for spin, occ, vir in ((0, occ_a, vir_a), (1, occ_b, vir_b)):
        for i, j in itertools.combinations(occ, 2):
            for a, b in itertools.combinations(vir, 2):
                so_i, so_a = spinorb(i, spin), spinorb(a, spin)
                mid = det ^ (1 << so_i) ^ (1 << so_a)
                sgn = _parity_between(det, so_i, so_a)
                so_j, so_b = spinorb(j, spin), spinorb(b, spin)
                sgn *= _parity_between(mid, so_j, so_b)
                ket = mid ^ (1 << so_j) ^ (1 << so_b)
                yield ket, sgn * (g[i, a, j, b] - g[i, b, j, a])

    # opposite-spin doubles
    for i in occ_a:
        for a in vir_a:
            so_i, so_a = spinorb(i, 0), spinorb(a, 0)
            mid = det ^ (1 << so_i) ^ (1 << so_a)
            sgn_a = _parity_between(det, so_i, so_a)
            for j in occ_b:
                for b in vir_b:
                    so_j, so_b = spinorb(j, 1), spinorb(b, 1)
                    sgn = sgn_a * _parity_between(mid, so_j, so_b)
                    ket = mid ^ (1 << so_j) ^ (1 << so_b)
                    yield ket, sgn * g[i, a, j, b]


def _build_sector_matrix(k, h1, g, dets):
    lookup = {int(d): i for i, d in enumerate(dets)}
    rows, cols, vals = [], [], []
    for col, det in enumerate(dets):
        for ket, val in _row_connections(int(det), k, h1, g):
            if val != 0.0:
                rows.append(lookup[int(ket)])
                cols.append(col)
                vals.append(val)
    return sparse.coo_matrix((vals, (rows, cols)), shape=(len(dets),) * 2).tocsr()


def _lanczos_ground(matvec, dim, tol=1e-13, max_iter=400, seed=1234):
    """Lowest eigenpair via Lanczos with full reorthogonalization."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    basis = [v]
    alphas, betas = [], []
    e_prev = np.inf
    for it in range(min(max_iter, dim)):
        w = matvec(basis[-1])
        alpha = float(basis[-1] @ w)
        alphas.append(alpha)
        w = w - alpha * basis[-1]
        if len(basis) > 1:
            w = w - betas[-1] * basis[-2]
        for _ in range(2):  # full reorthogonalization, twice for safety
            for u in basis:
                w = w - (u @ w) * u
        evals, evecs = np.linalg.eigh(_tridiag(alphas, betas))
        e0 = float(evals[0])
        beta = float(np.linalg.norm(w))
        if (it >= 2 and abs(e0 - e_prev) < tol * max(1.0, abs(e0))) or beta < 1e-13:
            x = np.zeros(dim)
            for c, u in zip(evecs[:, 0], basis):
                x += c * u
            x /= np.linalg.norm(x)
            return e0, x
        basis.append(w / beta)
        betas.append(beta)
        e_prev = e0
    raise OracleError(f"Lanczos did not converge within {max_iter} iterations")


def _tridiag(alphas, betas):
    n = len(alphas)
    T = np.diag(alphas)
    for i, b in enumerate(betas[:n - 1]):
        T[i, i + 1] = T[i + 1, i] = b
    return T


def fci_ground_state(obj, method="auto"):
    """Exact ground state in the (n_elec, S_z=0) sector.

    Accepts an :class:`IntegralSet` or a :class:`SubspaceHamiltonian`; the
    returned energy includes the nuclear (and, for subspaces, core) shifts.
    ``method`` is "auto" (dense up to dimension 4000, Lanczos beyond),
    "dense", or "lanczos".
    """
    if isinstance(obj, SubspaceHamiltonian):
        k, h1, g = obj.k, obj.h1_sub, obj.eri_sub
        n_elec, shift = obj.n_elec_sub, obj.e_core + obj.e_nuc
    elif isinstance(obj, IntegralSet):
        k, h1, g = obj.L, obj.h1, obj.eri_dense()
        n_elec, shift = obj.n_elec, obj.e_nuc
    else:
        raise TypeError(f"cannot diagonalize {type(obj).__name__}")
    if k > 10:
        raise OracleError(f"exact diagonalization limited to 10 spatial orbitals, got {k}")
    if n_elec % 2 != 0:
        raise OracleError("S_z=0 sector requires an even electron count")

    dets = _sector_determinants(k, n_elec // 2, n_elec // 2)
    H = _build_sector_matrix(k, h1, g, dets)
    if method == "dense" or (method == "auto" and len(dets) <= 4000):
        evals, evecs = np.linalg.eigh(H.toarray())
        e0, x = float(evals[0]), evecs[:, 0]
    elif method in ("lanczos", "auto"):
        e0, x = _lanczos_ground(lambda v: H @ v, len(dets))
    else:
        raise ValueError(f"unknown method {method!r}")

    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    amps = np.zeros(1 << (2 * k), dtype=complex)
    amps[dets] = x
    return e0 + shift, Statevector(2 * k, amps)


# ---------------------------------------------------------------------------
# dense exponential of an excitation generator

def _pauli_string_action(string, n_qubits):
    """(dst, value) arrays of a Pauli string acting on all basis states."""
    xmask = ymask = zmask = 0
    for qubit, ch in enumerate(string):
        bit = 1 << qubit
        if ch == "X":
            xmask |= bit
        elif ch == "Y":
            ymask |= bit
        elif ch == "Z":
            zmask |= bit
        elif ch != "I":
            raise ValueError(f"bad Pauli letter {ch!r}")
    src = np.arange(1 << n_qubits, dtype=np.int64)
    dst = src ^ (xmask | ymask)
    n_y = bin(ymask).count("1")
    signs = 1.0 - 2.0 * (np.bitwise_count(src & (ymask | zmask)) & 1)
    return dst, (1j ** n_y) * signs


def _dense_generator(op, n_qubits):
    dim = 1 << n_qubits
    G = np.zeros((dim, dim), dtype=complex)
    src = np.arange(dim)
    for coeff, string in op.pauli_terms:
        padded = string + "I" * (n_qubits - len(string))
        dst, vals = _pauli_string_action(padded, n_qubits)
        G[dst, src] = G[dst, src] + coeff * vals
    return G


def dense_exponential(psi, op, theta):
    """exp(theta*tau)|psi> from the Pauli expansion, by scaled Taylor series."""
    n = psi.n_qubits
    if n > 10:
        raise OracleError("dense exponential limited to 10 qubits")
    if op.min_qubits > n:
        raise ValueError(f"operator on {op.indices} exceeds register {n}")
    G = _dense_generator(op, n)
    if np.abs(G + G.conj().T).max() > 1e-13:
        raise OracleError("generator is not anti-Hermitian")
    A = theta * G
    scale = max(1, int(math.ceil(np.abs(A).sum(axis=0).max())))
    steps = 1
    while steps < scale:
        steps *= 2
    A = A / steps
    v = psi.amps.copy()
    for _ in range(steps):
        term = v.copy()
        acc = v.copy()
        for order in range(1, 60):
            term = A @ term / order
            acc += term
            if np.linalg.norm(term) < 1e-16:
                break
        v = acc
    return Statevector(n, v / np.linalg.norm(v))


# ---------------------------------------------------------------------------
# MP2 over canonical molecular orbitals

def mp2_total_energy(ints, sol):
    """E_HF plus the closed-shell MP2 correlation energy."""
    n_occ = ints.n_elec // 2
    C, eps = sol.C, sol.eps
    if n_occ == ints.L:
        return sol.e_hf
    c_o, c_v = C[:, :n_occ], C[:, n_occ:]
    e_o, e_v = eps[:n_occ], eps[n_occ:]
    g = ints.eri_dense()
    g_iajb = np.einsum("pqrs,pi,qa,rj,sb->iajb", g, c_o, c_v, c_o, c_v, optimize=True)
    denom = (e_o[:, None, None, None] + e_o[None, None, :, None]
             - e_v[None, :, None, None] - e_v[None, None, None, :])
    if np.abs(denom).min() < 1e-10:
        raise OracleError("degenerate MP2 denominator")
    t = g_iajb / denom
    e_corr = float(np.einsum("iajb,iajb->", t, 2.0 * g_iajb)
                   - np.einsum("iajb,ibja->", t, g_iajb))
    return sol.e_hf + e_corr


# ---------------------------------------------------------------------------
# barren-plateau variance experiment

def _apply_ladder_chain(det, chain):
    """Apply (index, dagger) operators right-to-left to a basis integer."""
    sign = 1.0
    for index, dagger in reversed(chain):
        occupied = (det >> index) & 1
        if dagger == occupied:
            return None, 0.0
        if (det & ((1 << index) - 1)).bit_count() & 1:
            sign = -sign
        det ^= 1 << index
    return det, sign


def _pool_moves(n_qubits):
    """For each pool operator, the (target, amplitude) of tau|reference>."""
    from .solver import build_pool

    k = n_qubits // 2
    l_occ = max(1, k // 2)
    ref = 0
    for j in range(l_occ):
        ref |= 0b11 << (2 * j)
    moves = []
    for op in build_pool(k):
        if op.kind == "single":
            p, q = op.indices
            fwd = [(p, True), (q, False)]
            bwd = [(q, True), (p, False)]
        else:
            p, q, r, s = op.indices
            fwd = [(p, True), (q, True), (r, False), (s, False)]
            bwd = [(s, True), (r, True), (q, False), (p, False)]
        dst, sgn = _apply_ladder_chain(ref, fwd)
        if dst is None:
            dst, sgn = _apply_ladder_chain(ref, bwd)
            sgn = -sgn
        moves.append((dst, sgn))
    return ref, moves


def bp_pool_gradients(H, n_qubits):
    """<ref|[H, tau]|ref> for every pool operator, H given as a dense matrix.

    The reference is the half-filled determinant used throughout the
    variance experiment.
    """
    ref, moves = _pool_moves(n_qubits)
    out = np.zeros(len(moves))
    for i, (dst, sgn) in enumerate(moves):
        if dst is not None:
            out[i] = 2.0 * sgn * float(np.real(H[ref, dst]))
    return out


def bp_variance_experiment(n_qubits, n_hamiltonians, seed=0):
    """Pooled gradient statistics over random iso-spectral Hamiltonians.

    Each sample is H = V H0 V^dag with V exactly Haar (QR of a complex
    Gaussian with phase-fixed diagonal) and H0 diagonal, entries uniform in
    [-1, 1] shifted to zero trace, which keeps the trace inside the required
    polynomial bound.  Gradients of every pool operator at the half-filled
    reference determinant are pooled over (H, tau); returns (mean, variance).
    """
    if n_qubits > 10:
        raise OracleError("variance experiment limited to 10 qubits")
    if n_qubits % 2 != 0 or n_qubits < 4:
        raise ValueError("need an even register of at least 4 qubits")
    rng = np.random.default_rng(seed)
    dim = 1 << n_qubits
    ref, moves = _pool_moves(n_qubits)

    grads = np.empty((n_hamiltonians, len(moves)))
    for h in range(n_hamiltonians):
        Z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        Q, R = np.linalg.qr(Z)
        Q = Q * (np.diag(R) / np.abs(np.diag(R)))
        h0 = rng.uniform(-1.0, 1.0, dim)
        h0 -= h0.mean()
        # only row <ref| of H = V H0 V^dag is ever needed
        row = (Q[ref, :] * h0) @ Q.conj().T
        for i, (dst, sgn) in enumerate(moves):
            grads[h, i] = 2.0 * sgn * row[dst].real if dst is not None else 0.0
    flat = grads.ravel()
    return float(flat.mean()), float(flat.var())
