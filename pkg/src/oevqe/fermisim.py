"""Exact statevector simulation of Jordan-Wigner encoded fermions.

Spin orbital q of spatial orbital j is qubit 2j (alpha) or 2j+1 (beta), and
bit q of a basis index stores its occupation, so freshly appended orbitals
occupy the high-index tail.  Jordan-Wigner parity strings only touch
lower-indexed qubits, which is what makes register extension a pure tensor
product: every previously encoded operator acts identically afterwards.

Excitation exponentials are applied exactly.  The anti-Hermitian generator
of a single or double excitation squares to -1 on the two-dimensional
determinant pairs it couples, so exp(theta*tau) is a Givens rotation with
Jordan-Wigner parity signs on exactly those pairs.

Hamiltonian expectations act with the second-quantized h1/eri terms directly
on the amplitudes (no Pauli decomposition of H); the resulting sparse action
is cached per Hamiltonian and per particle-number sector.
"""

import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

__all__ = ["Statevector", "ExcitationOp", "jw_encode", "reference_state",
           "extend_register", "apply_excitation", "expectation",
           "pool_gradient", "pool_gradients", "energy_gradient", "rdm12"]

CORE = "core"
VIRTUAL = "virtual"

_FULL_REGISTER_LIMIT = 13  # above this, Hamiltonian action is sector-restricted


@dataclass(eq=False)
class Statevector:
    """Normalized amplitudes over 2**n_qubits Jordan-Wigner basis states."""

    n_qubits: int
    amps: np.ndarray

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        if self.amps.shape != (2 ** self.n_qubits,):
            raise ValueError("amplitude vector does not match the register size")
        norm = np.linalg.norm(self.amps)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"statevector norm {norm!r} deviates from 1")

    def copy(self):
        return Statevector(self.n_qubits, self.amps.copy())


@dataclass(frozen=True)
class ExcitationOp:
    """Anti-Hermitian single or double excitation generator.

    ``indices`` is (p, q) for a^dag_p a_q - a^dag_q a_p, or (p, q, r, s) for
    a^dag_p a^dag_q a_r a_s minus its conjugate; all spin-orbital indices.
    ``pauli_terms`` is the Jordan-Wigner image as (coefficient, string) pairs
    with purely imaginary coefficients.
    """

    kind: str
    indices: tuple
    n_qubits: int
    pauli_terms: tuple = field(compare=False, repr=False)

    @property
    def min_qubits(self):
        return max(self.indices) + 1

    def spin_balance(self):
        if self.kind == "single":
            return (self.indices[0] % 2,), (self.indices[1] % 2,)
        p, q, r, s = self.indices
        return tuple(sorted((p % 2, q % 2))), tuple(sorted((r % 2, s % 2)))


# ---------------------------------------------------------------------------
# Jordan-Wigner encoding

_PAULI_MUL = {
    ("X", "X"): (1.0, "I"), ("Y", "Y"): (1.0, "I"), ("Z", "Z"): (1.0, "I"),
    ("X", "Y"): (1j, "Z"), ("Y", "X"): (-1j, "Z"),
    ("Y", "Z"): (1j, "X"), ("Z", "Y"): (-1j, "X"),
    ("Z", "X"): (1j, "Y"), ("X", "Z"): (-1j, "Y"),
}


def _pauli_product(term_a, term_b):
    phase = 1.0 + 0.0j
    out = dict(term_a)
    for qubit, op in term_b.items():
        if qubit not in out:
            out[qubit] = op
            continue
        cur = out[qubit]
        if cur == op:
            del out[qubit]
        else:
            ph, res = _PAULI_MUL[(cur, op)]
            phase *= ph
            out[qubit] = res
    return phase, out


def _ladder_terms(q, dagger):
    """a_q or a^dag_q as two Pauli products with the parity Z string."""
    zs = {j: "Z" for j in range(q)}
    sign = -1j if dagger else 1j
    return [(0.5, {**zs, q: "X"}), (0.5 * sign, {**zs, q: "Y"})]


def _operator_product(ladder_spec):
    terms = [(1.0 + 0.0j, {})]
    for q, dagger in ladder_spec:
        new_terms = []
        for coeff, paulis in terms:
            for c2, p2 in _ladder_terms(q, dagger):
                ph, prod = _pauli_product(paulis, p2)
                new_terms.append((coeff * c2 * ph, prod))
        terms = new_terms
    return terms


def jw_encode(op_indices, n_qubits):
    """Encode an excitation generator; returns an :class:`ExcitationOp`.

    A 2-tuple builds a single excitation, a 4-tuple (p, q, r, s) the double
    a^dag_p a^dag_q a_r a_s minus its Hermitian conjugate.  Indices must be
    distinct, inside the register, and spin-projection balanced.
    """
    idx = tuple(int(i) for i in op_indices)
    if len(idx) not in (2, 4):
        raise ValueError("excitation needs 2 or 4 spin-orbital indices")
    if len(set(idx)) != len(idx):
        raise ValueError(f"repeated spin-orbital index in {idx}")
    if max(idx) >= n_qubits or min(idx) < 0:
        raise ValueError(f"indices {idx} outside register of {n_qubits} qubits")

    if len(idx) == 2:
        kind = "single"
        p, q = idx
        if p % 2 != q % 2:
            raise ValueError(f"single excitation {idx} flips spin")
        forward = [(p, True), (q, False)]
        backward = [(q, True), (p, False)]
    else:
        kind = "double"
        p, q, r, s = idx
        if sorted((p % 2, q % 2)) != sorted((r % 2, s % 2)):
            raise ValueError(f"double excitation {idx} changes spin projection")
        forward = [(p, True), (q, True), (r, False), (s, False)]
        backward = [(s, True), (r, True), (q, False), (p, False)]

    combined = {}
    for coeff, paulis in _operator_product(forward):
        key = tuple(sorted(paulis.items()))
        combined[key] = combined.get(key, 0.0) + coeff
    for coeff, paulis in _operator_product(backward):
        key = tuple(sorted(paulis.items()))
        combined[key] = combined.get(key, 0.0) - coeff

    terms = []
    for key, coeff in sorted(combined.items()):
        if abs(coeff) < 1e-14:
            continue
        if abs(coeff.real) > 1e-14:
            raise AssertionError("generator expansion is not anti-Hermitian")
        string = ["I"] * n_qubits
        for qubit, op in key:
            string[qubit] = op
        terms.append((coeff, "".join(string)))
    return ExcitationOp(kind=kind, indices=idx, n_qubits=n_qubits,
                        pauli_terms=tuple(terms))


# ---------------------------------------------------------------------------
# bit kernels

def _parity(values, mask):
    return (np.bitwise_count(values & mask) & 1).astype(np.int8)


def _below(q):
    return (1 << q) - 1


_givens_cache = {}


def _givens_data(op, n_qubits):
    """(src, dst, sign) index triplets of the determinant pairs op couples."""
    key = (op.kind, op.indices, n_qubits)
    hit = _givens_cache.get(key)
    if hit is not None:
        return hit
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    if op.kind == "single":
        p, q = op.indices
        cond = ((idx >> q) & 1 == 1) & ((idx >> p) & 1 == 0)
        src = idx[cond]
        parity = _parity(src, _below(q)) ^ _parity(src ^ (1 << q), _below(p))
        dst = src ^ ((1 << p) | (1 << q))
    else:
        p, q, r, s = op.indices
        set_mask = (1 << r) | (1 << s)
        clr_mask = (1 << p) | (1 << q)
        cond = ((idx & set_mask) == set_mask) & ((idx & clr_mask) == 0)
        src = idx[cond]
        b1 = src ^ (1 << s)
        b2 = b1 ^ (1 << r)
        b3 = b2 | (1 << q)
        parity = (_parity(src, _below(s)) ^ _parity(b1, _below(r))
                  ^ _parity(b2, _below(q)) ^ _parity(b3, _below(p)))
        dst = b3 | (1 << p)
    sign = (1 - 2 * parity.astype(np.int64)).astype(np.float64)
    data = (src, dst, sign)
    if len(_givens_cache) > 20000:
        _givens_cache.clear()
    _givens_cache[key] = data
    return data


def _rotate_raw(amps, op, theta, n_qubits):
    """exp(theta * tau) applied to a raw amplitude array; returns a new array."""
    out = amps.copy()
    if theta == 0.0:
        return out
    src, dst, sign = _givens_data(op, n_qubits)
    a_src = amps[src]
    a_dst = amps[dst]
    c, s = np.cos(theta), np.sin(theta)
    out[src] = c * a_src - s * sign * a_dst
    out[dst] = c * a_dst + s * sign * a_src
    return out


def apply_excitation(psi, op, theta):
    """Exact exp(theta * tau) |psi>; untouched amplitudes are preserved bit-exactly."""
    if op.min_qubits > psi.n_qubits:
        raise ValueError(f"operator on {op.indices} exceeds register {psi.n_qubits}")
    return Statevector(psi.n_qubits, _rotate_raw(psi.amps, op, theta, psi.n_qubits))


def _apply_generator(amps, op, n_qubits):
    """tau |psi> as a raw amplitude vector."""
    src, dst, sign = _givens_data(op, n_qubits)
    out = np.zeros_like(amps)
    out[dst] = sign * amps[src]
    out[src] = -sign * amps[dst]
    return out


# ---------------------------------------------------------------------------
# reference states and register extension

def reference_state(k, l_occ, occ_pattern=()):
    """Determinant with l_occ doubly occupied impurity orbitals plus tagged tail.

    Spatial orbitals [0, l_occ) are doubly occupied; each appended
    environment orbital (the last len(occ_pattern) spatial slots) is doubly
    occupied iff its tag is ``core``.
    """
    occ_pattern = tuple(occ_pattern)
    n_imp = k - len(occ_pattern)
    if l_occ < 0 or l_occ > n_imp or n_imp < 0:
        raise ValueError(f"occupation l_occ={l_occ} does not fit {n_imp} impurity slots")
    index = 0
    for j in range(l_occ):
        index |= 0b11 << (2 * j)
    for j, tag in enumerate(occ_pattern):
        if tag == CORE:
            index |= 0b11 << (2 * (n_imp + j))
        elif tag != VIRTUAL:
            raise ValueError(f"unknown occupation tag {tag!r}")
    amps = np.zeros(1 << (2 * k), dtype=complex)
    amps[index] = 1.0
    return Statevector(2 * k, amps)


def extend_register(psi, appended_tags):
    """Tensor-extend with new spatial orbitals at the high-index tail.

    Core-tagged orbitals enter doubly occupied, virtual-tagged ones empty.
    Existing operators act identically on the extended register because
    their parity strings never reach the new qubits.
    """
    tags = tuple(appended_tags)
    if not tags:
        return psi.copy()
    n_old = psi.n_qubits
    occ_bits = 0
    for j, tag in enumerate(tags):
        if tag == CORE:
            occ_bits |= 0b11 << (n_old + 2 * j)
        elif tag != VIRTUAL:
            raise ValueError(f"unknown occupation tag {tag!r}")
    n_new = n_old + 2 * len(tags)
    amps = np.zeros(1 << n_new, dtype=complex)
    amps[np.arange(1 << n_old) + occ_bits] = psi.amps
    return Statevector(n_new, amps)


# ---------------------------------------------------------------------------
# Hamiltonian action

_EVEN_BITS = sum(1 << b for b in range(0, 64, 2))
_ODD_BITS = sum(1 << b for b in range(1, 64, 2))


def sector_indices(n_qubits, n_alpha, n_beta):
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    na = np.bitwise_count(idx & _EVEN_BITS)
    nb = np.bitwise_count(idx & _ODD_BITS)
    return idx[(na == n_alpha) & (nb == n_beta)]


def _support_sectors(amps, n_qubits):
    nz = np.nonzero(np.abs(amps) > 1e-14)[0]
    if len(nz) == 0:
        return []
    na = np.bitwise_count(nz & _EVEN_BITS)
    nb = np.bitwise_count(nz & _ODD_BITS)
    return sorted({(int(a), int(b)) for a, b in zip(na, nb)})


def _hamiltonian_terms(ham):
    """Spin-orbital second-quantized terms (index tuples plus coefficients)."""
    k = ham.k
    one_body = []
    for p in range(k):
        for q in range(k):
            val = ham.h1_sub[p, q]
            if abs(val) < 1e-14:
                continue
            for sp in (0, 1):
                one_body.append((2 * p + sp, 2 * q + sp, val))
    two_body = []
    g = ham.eri_sub
    for p in range(k):
        for q in range(k):
            for r in range(k):
                for s in range(k):
                    val = g[p, q, r, s]
                    if abs(val) < 1e-14:
                        continue
                    for sp in (0, 1):
                        for tp in (0, 1):
                            two_body.append((2 * p + sp, 2 * q + sp,
                                             2 * r + tp, 2 * s + tp, 0.5 * val))
    return one_body, two_body


def _emit_action(ham, basis_states, position_of):
    """COO triplets of H restricted to ``basis_states`` (H preserves it)."""
    one_body, two_body = _hamiltonian_terms(ham)
    rows, cols, vals = [], [], []
    states = basis_states
    npos = np.arange(len(states))

    for a, b, coeff in one_body:
        if a == b:
            occ = ((states >> a) & 1).astype(bool)
            rows.append(npos[occ])
            cols.append(npos[occ])
            vals.append(np.full(occ.sum(), coeff))
            continue
        ok = (((states >> b) & 1) == 1) & (((states >> a) & 1) == 0)
        src = states[ok]
        parity = _parity(src, _below(b)) ^ _parity(src ^ (1 << b), _below(a))
        dst = src ^ ((1 << a) | (1 << b))
        rows.append(position_of(dst))
        cols.append(npos[ok])
        vals.append(coeff * (1.0 - 2.0 * parity))

    for a, b, c, d, coeff in two_body:
        # a^dag_a a^dag_c a_d a_b applied right-to-left
        state = states
        ok = ((state >> b) & 1) == 1
        parity = _parity(state, _below(b))
        s1 = state ^ (1 << b)
        ok &= ((s1 >> d) & 1) == 1
        parity = parity ^ _parity(s1, _below(d))
        s2 = s1 ^ (1 << d)
        ok &= ((s2 >> c) & 1) == 0
        parity = parity ^ _parity(s2, _below(c))
        s3 = s2 | (1 << c)
        ok &= ((s3 >> a) & 1) == 0
        parity = parity ^ _parity(s3, _below(a))
        dst = s3 | (1 << a)
        rows.append(position_of(dst[ok]))
        cols.append(npos[ok])
        vals.append(coeff * (1.0 - 2.0 * parity[ok]))

    dim = len(states)
    mat = sparse.coo_matrix(
        (np.concatenate(vals),
         (np.concatenate(rows).astype(np.int64), np.concatenate(cols).astype(np.int64))),
        shape=(dim, dim)).tocsr()
    mat.sum_duplicates()
    return mat


_action_cache = weakref.WeakKeyDictionary()


def _cached_actions(ham):
    store = _action_cache.get(ham)
    if store is None:
        store = {}
        _action_cache[ham] = store
    return store


def _full_action(ham, n_qubits):
    store = _cached_actions(ham)
    key = ("full", n_qubits)
    if key not in store:
        states = np.arange(1 << n_qubits, dtype=np.int64)
        store[key] = _emit_action(ham, states, lambda d: d)
    return store[key]


def _sector_action(ham, n_qubits, sector):
    store = _cached_actions(ham)
    key = ("sector", n_qubits, sector)
    if key not in store:
        states = sector_indices(n_qubits, *sector)
        pos = np.full(1 << n_qubits, -1, dtype=np.int64)
        pos[states] = np.arange(len(states))
        store[key] = (states, _emit_action(ham, states, lambda d: pos[d]))
    return store[key]


def _apply_hamiltonian(ham, amps, n_qubits):
    if n_qubits <= _FULL_REGISTER_LIMIT:
        return _full_action(ham, n_qubits) @ amps
    out = np.zeros_like(amps)
    for sector in _support_sectors(amps, n_qubits):
        states, mat = _sector_action(ham, n_qubits, sector)
        out[states] += mat @ amps[states]
    return out


def expectation(psi, ham):
    """<psi| H_sub |psi> by direct second-quantized action; real by assertion."""
    if psi.n_qubits != ham.n_qubits:
        raise ValueError(f"register {psi.n_qubits} does not match 2k={ham.n_qubits}")
    hpsi = _apply_hamiltonian(ham, psi.amps, psi.n_qubits)
    val = np.vdot(psi.amps, hpsi)
    if abs(val.imag) > 1e-10:
        raise AssertionError(f"expectation acquired imaginary part {val.imag:.3e}")
    return float(val.real)


def pool_gradient(psi, ham, op):
    """<psi|[H, tau]|psi> = 2 Re <H psi | tau psi>, evaluated exactly."""
    if psi.n_qubits != ham.n_qubits:
        raise ValueError(f"register {psi.n_qubits} does not match 2k={ham.n_qubits}")
    hpsi = _apply_hamiltonian(ham, psi.amps, psi.n_qubits)
    tpsi = _apply_generator(psi.amps, op, psi.n_qubits)
    return 2.0 * float(np.vdot(hpsi, tpsi).real)


def pool_gradients(psi, ham, ops):
    """Gradients for a whole pool, sharing one Hamiltonian application."""
    if psi.n_qubits != ham.n_qubits:
        raise ValueError(f"register {psi.n_qubits} does not match 2k={ham.n_qubits}")
    hpsi = _apply_hamiltonian(ham, psi.amps, psi.n_qubits)
    out = np.empty(len(ops))
    for i, op in enumerate(ops):
        tpsi = _apply_generator(psi.amps, op, psi.n_qubits)
        out[i] = 2.0 * np.vdot(hpsi, tpsi).real
    return out


def energy_gradient(direction, psi0, ham):
    """Analytic dE/dtheta for every ansatz parameter.

    One forward sweep builds the final state; one adjoint backward sweep
    peels the circuit off both the state and H|psi>, so the cost is two
    statevector passes regardless of the parameter count.
    """
    records = list(direction.records)
    if not records:
        return np.zeros(0)
    n = psi0.n_qubits
    f = psi0.amps
    for rec in records:
        f = _rotate_raw(f, rec.op, rec.theta, n)
    lam = _apply_hamiltonian(ham, f, n)
    grads = np.zeros(len(records))
    for i in range(len(records) - 1, -1, -1):
        rec = records[i]
        tf = _apply_generator(f, rec.op, n)
        grads[i] = 2.0 * np.vdot(lam, tf).real
        if i > 0:
            f = _rotate_raw(f, rec.op, -rec.theta, n)
            lam = _rotate_raw(lam, rec.op, -rec.theta, n)
    return grads


# ---------------------------------------------------------------------------
# reduced density matrices

def _excitation_vectors(amps, states, pos, k):
    """E_rs |psi> for all spatial pairs, restricted to ``states`` coordinates."""
    dim = len(states)
    vecs = np.zeros((k, k, dim), dtype=complex)
    npos = np.arange(dim)
    for r in range(k):
        for s in range(k):
            acc = np.zeros(dim, dtype=complex)
            for sp in (0, 1):
                a, b = 2 * r + sp, 2 * s + sp
                if a == b:
                    occ = ((states >> a) & 1).astype(bool)
                    acc[npos[occ]] += amps[occ]
                else:
                    ok = (((states >> b) & 1) == 1) & (((states >> a) & 1) == 0)
                    src = states[ok]
                    parity = _parity(src, _below(b)) ^ _parity(src ^ (1 << b), _below(a))
                    dst = src ^ ((1 << a) | (1 << b))
                    acc[pos(dst)] += (1.0 - 2.0 * parity) * amps[ok]
            vecs[r, s] = acc
    return vecs


def rdm12(psi, k):
    """Spin-summed 1- and 2-RDM in the chemist index order.

    rdm1[p,q] = sum_s <a^dag_{ps} a_{qs}>, and rdm2[p,q,r,s] pairs with
    (pq|rs) so that sum(h1*rdm1) + sum(eri*rdm2)/2 is the energy.  Entries
    are real, which holds for all states reachable here (real integrals,
    real rotations of a basis-state reference).
    """
    if psi.n_qubits != 2 * k:
        raise ValueError(f"register {psi.n_qubits} does not match 2k={2 * k}")
    n = psi.n_qubits
    if n <= _FULL_REGISTER_LIMIT:
        states = np.arange(1 << n, dtype=np.int64)
        amps = psi.amps
        pos = lambda d: d
    else:
        sectors = _support_sectors(psi.amps, n)
        states = np.sort(np.concatenate([sector_indices(n, *sec) for sec in sectors]))
        amps = psi.amps[states]
        lookup = np.full(1 << n, -1, dtype=np.int64)
        lookup[states] = np.arange(len(states))
        pos = lambda d: lookup[d]
    vecs = _excitation_vectors(amps, states, pos, k)
    rdm1 = np.empty((k, k))
    for p in range(k):
        for q in range(k):
            rdm1[p, q] = np.vdot(amps, vecs[p, q]).real
    flat = vecs.reshape(k * k, -1)
    gram = flat.conj() @ flat.T  # gram[qp, rs] = <E_qp psi | E_rs psi>
    gram = gram.reshape(k, k, k, k)
    rdm2 = np.einsum("qprs->pqrs", gram).real.copy()
    for q in range(k):
        rdm2[:, q, q, :] -= rdm1
    return rdm1, rdm2
