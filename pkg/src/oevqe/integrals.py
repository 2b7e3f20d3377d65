"""Electron integrals over an orthonormal localized-orbital basis, with FCIDUMP I/O.

Index conventions
-----------------
Two-electron integrals are stored and exposed in chemist notation,

    (pq|rs) = integral  p(1) q(1) [1/r12] r(2) s(2),

which is also the FCIDUMP convention.  All integrals are real, so the full
8-fold permutation symmetry holds:

    (pq|rs) = (qp|rs) = (pq|sr) = (qp|sr) = (rs|pq) = (sr|pq) = (rs|qp) = (sr|qp).

Angle-bracket two-body coefficients written as ``<pq|rs>`` in Fock-type
expressions (e.g. ``F_ij = h_ij + sum_kl D_kl (<ij|lk> - <ik|lj>/2)``) map
one-to-one onto chemist integrals with the same index order, ``<pq|rs> ->
(pq|rs)``; every downstream formula uses that single translation.  The
spin-summed second-quantized Hamiltonian consistent with this choice is

    H = E_nuc + sum_pq h_pq E_pq + 1/2 sum_pqrs (pq|rs) (E_pq E_rs - d_qr E_ps),

with E_pq = sum_sigma  a^dag_{p sigma} a_{q sigma}, and the matching
spin-summed 2-RDM is D2[p,q,r,s] = sum_{st} < a^dag_{ps} a^dag_{rt} a_{st} a_{qs} >,
so that  E = sum h*D1 + 1/2 sum (pq|rs)*D2[p,q,r,s].
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FcidumpError",
    "IntegralSet",
    "parse_fcidump",
    "write_fcidump",
    "pair_index",
    "quad_index",
    "n_unique_eri",
]


class FcidumpError(ValueError):
    """Malformed FCIDUMP content; message carries the offending line number."""


def pair_index(p, q):
    """Triangular index of an unordered orbital pair."""
    if p < q:
        p, q = q, p
    return p * (p + 1) // 2 + q


def quad_index(p, q, r, s):
    """Canonical 8-fold-symmetry index of (pq|rs)."""
    ij = pair_index(p, q)
    kl = pair_index(r, s)
    if ij < kl:
        ij, kl = kl, ij
    return ij * (ij + 1) // 2 + kl


def n_unique_eri(L):
    npair = L * (L + 1) // 2
    return npair * (npair + 1) // 2


@dataclass(eq=False)
class IntegralSet:
    """Nuclear repulsion plus one- and two-body integrals for L spatial orbitals.

    ``eri`` is the packed unique-element vector under 8-fold symmetry,
    addressed through :func:`quad_index`.  Instances are immutable by
    convention after construction and safe to share across workers.
    """

    L: int
    n_elec: int
    e_nuc: float
    h1: np.ndarray
    eri: np.ndarray
    label: str = ""
    _dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.h1 = np.asarray(self.h1, dtype=float)
        self.eri = np.asarray(self.eri, dtype=float)
        if self.L <= 0:
            raise ValueError("orbital count must be positive")
        if self.n_elec <= 0 or self.n_elec % 2 != 0 or self.n_elec > 2 * self.L:
            raise ValueError(f"electron count {self.n_elec} invalid for L={self.L}")
        if self.h1.shape != (self.L, self.L):
            raise ValueError("h1 has wrong shape")
        scale = max(np.abs(self.h1).max(), 1.0)
        if np.abs(self.h1 - self.h1.T).max() > 1e-12 * scale:
            raise ValueError("h1 is not symmetric")
        if self.eri.shape != (n_unique_eri(self.L),):
            raise ValueError("eri has wrong packed length")

    def get_eri(self, p, q, r, s):
        """Return (pq|rs); unset entries are zero."""
        for idx in (p, q, r, s):
            if not 0 <= idx < self.L:
                raise IndexError(f"orbital index {idx} out of range [0, {self.L})")
        return float(self.eri[quad_index(p, q, r, s)])

    def eri_dense(self):
        """Dense (L,L,L,L) chemist-notation array, built once and cached."""
        if self._dense is None:
            L = self.L
            out = np.empty((L, L, L, L))
            for p in range(L):
                for q in range(p + 1):
                    for r in range(L):
                        for s in range(r + 1):
                            v = self.eri[quad_index(p, q, r, s)]
                            out[p, q, r, s] = v
                            out[q, p, r, s] = v
                            out[p, q, s, r] = v
                            out[q, p, s, r] = v
                            out[r, s, p, q] = v
                            out[s, r, p, q] = v
                            out[r, s, q, p] = v
                            out[s, r, q, p] = v
            self._dense = out
        return self._dense

    @classmethod
    def from_dense(cls, h1, eri_dense, n_elec, e_nuc, label="", sym_tol=1e-10):
        """Pack a dense chemist-notation ERI tensor, checking 8-fold symmetry."""
        h1 = np.asarray(h1, dtype=float)
        g = np.asarray(eri_dense, dtype=float)
        L = h1.shape[0]
        scale = max(np.abs(g).max(), 1.0)
        for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if np.abs(g - g.transpose(perm)).max() > sym_tol * scale:
                raise ValueError("eri tensor violates 8-fold permutation symmetry")
        packed = np.zeros(n_unique_eri(L))
        for p in range(L):
            for q in range(p + 1):
                for r in range(p + 1):
                    for s in range(r + 1):
                        if pair_index(p, q) >= pair_index(r, s):
                            packed[quad_index(p, q, r, s)] = g[p, q, r, s]
        return cls(L=L, n_elec=n_elec, e_nuc=float(e_nuc), h1=0.5 * (h1 + h1.T),
                   eri=packed, label=label)


def _parse_header(lines):
    """Extract NORB/NELEC/MS2 from the namelist header; return body start index."""
    header = []
    end = None
    for i, raw in enumerate(lines):
        header.append(raw)
        stripped = raw.strip().upper()
        if "&END" in stripped or stripped == "/" or stripped.endswith("$END"):
            end = i
            break
    if end is None:
        raise FcidumpError("line 1: missing &END terminator in FCIDUMP header")
    blob = " ".join(header).upper().replace("=", " = ")
    tokens = blob.replace(",", " ").split()

    def lookup(name):
        for j, tok in enumerate(tokens):
            if tok == name and j + 2 < len(tokens) and tokens[j + 1] == "=":
                try:
                    return int(tokens[j + 2])
                except ValueError as exc:
                    raise FcidumpError(f"line 1: bad integer for {name}") from exc
        raise FcidumpError(f"line 1: header is missing {name}")

    norb = lookup("NORB")
    nelec = lookup("NELEC")
    try:
        ms2 = lookup("MS2")
    except FcidumpError:
        ms2 = 0
    if norb <= 0:
        raise FcidumpError(f"line 1: NORB={norb} must be positive")
    if nelec <= 0 or nelec % 2 != 0:
        raise FcidumpError(f"line 1: NELEC={nelec} must be a positive even integer")
    if ms2 != 0:
        raise FcidumpError(f"line 1: only closed-shell MS2=0 inputs are supported, got {ms2}")
    return norb, nelec, end + 1


def parse_fcidump(text, label=""):
    """Parse FCIDUMP text into an :class:`IntegralSet`.

    Body lines are ``value p q r s`` with 1-based indices: ``p q 0 0`` holds a
    one-body element, ``0 0 0 0`` the nuclear repulsion, all-nonzero a
    two-body element.  Unlisted integrals are zero; repeating an entry with a
    conflicting value is rejected.
    """
    lines = text.splitlines()
    norb, nelec, body_start = _parse_header(lines)

    h1 = np.zeros((norb, norb))
    h1_seen = np.zeros((norb, norb), dtype=bool)
    eri = np.zeros(n_unique_eri(norb))
    eri_seen = np.zeros(n_unique_eri(norb), dtype=bool)
    e_nuc = 0.0
    e_nuc_seen = False

    for lineno0, raw in enumerate(lines[body_start:], start=body_start + 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.replace("D", "E").replace("d", "e").split()
        if len(parts) != 5:
            raise FcidumpError(f"line {lineno0}: expected 'value p q r s', got {line!r}")
        try:
            value = float(parts[0])
            p, q, r, s = (int(x) for x in parts[1:])
        except ValueError as exc:
            raise FcidumpError(f"line {lineno0}: unparseable entry {line!r}") from exc
        for idx in (p, q, r, s):
            if idx < 0 or idx > norb:
                raise FcidumpError(f"line {lineno0}: index {idx} out of range [0, {norb}]")
        if p == q == r == s == 0:
            if e_nuc_seen and abs(e_nuc - value) > 1e-12:
                raise FcidumpError(f"line {lineno0}: conflicting duplicate nuclear repulsion")
            e_nuc, e_nuc_seen = value, True
        elif r == 0 and s == 0:
            if p == 0 or q == 0:
                raise FcidumpError(f"line {lineno0}: malformed index pattern {line!r}")
            i, j = p - 1, q - 1
            if h1_seen[i, j] and abs(h1[i, j] - value) > 1e-12:
                raise FcidumpError(f"line {lineno0}: conflicting duplicate h1 entry ({p},{q})")
            h1[i, j] = h1[j, i] = value
            h1_seen[i, j] = h1_seen[j, i] = True
        elif p > 0 and q > 0 and r > 0 and s > 0:
            idx = quad_index(p - 1, q - 1, r - 1, s - 1)
            if eri_seen[idx] and abs(eri[idx] - value) > 1e-12:
                raise FcidumpError(
                    f"line {lineno0}: conflicting duplicate eri entry ({p},{q},{r},{s})")
            eri[idx] = value
            eri_seen[idx] = True
        else:
            raise FcidumpError(f"line {lineno0}: malformed index pattern {line!r}")

    if nelec > 2 * norb:
        raise FcidumpError(f"line 1: NELEC={nelec} exceeds 2*NORB={2 * norb}")
    return IntegralSet(L=norb, n_elec=nelec, e_nuc=e_nuc, h1=h1, eri=eri, label=label)


def write_fcidump(ints, path=None):
    """Serialize an :class:`IntegralSet` in FCIDUMP format.

    Returns the text; also writes it to ``path`` when given.  Values carry 17
    significant digits so a parse round-trip is exact.
    """
    L = ints.L
    out = [f"&FCI NORB={L},NELEC={ints.n_elec},MS2=0,",
           " ORBSYM=" + ",".join(["1"] * L) + ",",
           " ISYM=1,",
           "&END"]
    fmt = "{:24.16e} {:4d} {:4d} {:4d} {:4d}"
    for p in range(L):
        for q in range(p + 1):
            for r in range(p + 1):
                for s in range(r + 1):
                    if pair_index(p, q) < pair_index(r, s):
                        continue
                    v = ints.eri[quad_index(p, q, r, s)]
                    if v != 0.0:
                        out.append(fmt.format(v, p + 1, q + 1, r + 1, s + 1))
    for p in range(L):
        for q in range(p + 1):
            if ints.h1[p, q] != 0.0:
                out.append(fmt.format(ints.h1[p, q], p + 1, q + 1, 0, 0))
    out.append(fmt.format(ints.e_nuc, 0, 0, 0, 0))
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
