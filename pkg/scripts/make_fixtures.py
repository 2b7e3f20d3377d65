#!/usr/bin/env python3
"""Generate the committed FCIDUMP fixtures.

Molecular integrals are evaluated over STO-3G with McMurchie-Davidson
recurrences (s and p shells), symmetrically (Lowdin) orthogonalized so every
fixture is expressed in an orthonormal atom-local orbital basis.  A
self-contained RHF solver computes the reference energy recorded next to
each fixture.  This script is a development tool, not part of the package;
it writes fixtures/<name>.fcidump plus fixtures/references.json.

Run from the repository root:  python3 scripts/make_fixtures.py [--with-n2]
"""

import argparse
import json
import math
import os

import numpy as np
from scipy.special import hyp1f1

ANG2BOHR = 1.8897259886

STO3G = {
    "H": [("S", [3.42525091, 0.62391373, 0.16885540],
           [0.15432897, 0.53532814, 0.44463454])],
    "N": [("S", [99.1061690, 18.0523120, 4.8856602],
           [0.15432897, 0.53532814, 0.44463454]),
          ("S", [3.7804559, 0.8784966, 0.2857144],
           [-0.09996723, 0.39951283, 0.70011547]),
          ("P", [3.7804559, 0.8784966, 0.2857144],
           [0.15591627, 0.60768372, 0.39195739])],
}

CHARGE = {"H": 1, "N": 7}


def boys(n, x):
    return hyp1f1(n + 0.5, n + 1.5, -x) / (2.0 * n + 1.0)


def hermite_e(i, j, t, Qx, a, b):
    """Hermite expansion coefficient E_t^{ij} for a 1D Gaussian product."""
    p = a + b
    q = a * b / p
    if t < 0 or t > i + j:
        return 0.0
    if i == j == t == 0:
        return math.exp(-q * Qx * Qx)
    if j == 0:
        return (hermite_e(i - 1, j, t - 1, Qx, a, b) / (2 * p)
                - q * Qx / a * hermite_e(i - 1, j, t, Qx, a, b)
                + (t + 1) * hermite_e(i - 1, j, t + 1, Qx, a, b))
    return (hermite_e(i, j - 1, t - 1, Qx, a, b) / (2 * p)
            + q * Qx / b * hermite_e(i, j - 1, t, Qx, a, b)
            + (t + 1) * hermite_e(i, j - 1, t + 1, Qx, a, b))


def hermite_coulomb(t, u, v, n, p, PC, memo):
    key = (t, u, v, n)
    if key in memo:
        return memo[key]
    if t < 0 or u < 0 or v < 0:
        return 0.0
    if t == u == v == 0:
        val = (-2.0 * p) ** n * memo["boys"][n]
    elif t > 0:
        val = ((t - 1) * hermite_coulomb(t - 2, u, v, n + 1, p, PC, memo)
               + PC[0] * hermite_coulomb(t - 1, u, v, n + 1, p, PC, memo))
    elif u > 0:
        val = ((u - 1) * hermite_coulomb(t, u - 2, v, n + 1, p, PC, memo)
               + PC[1] * hermite_coulomb(t, u - 1, v, n + 1, p, PC, memo))
    else:
        val = ((v - 1) * hermite_coulomb(t, u, v - 2, n + 1, p, PC, memo)
               + PC[2] * hermite_coulomb(t, u, v - 1, n + 1, p, PC, memo))
    memo[key] = val
    return val


def coulomb_memo(p, PC, nmax):
    x = p * float(np.dot(PC, PC))
    return {"boys": [boys(n, x) for n in range(nmax + 1)]}


def overlap_prim(a, lmn1, A, b, lmn2, B):
    p = a + b
    s = 1.0
    for d in range(3):
        s *= hermite_e(lmn1[d], lmn2[d], 0, A[d] - B[d], a, b)
    return s * (math.pi / p) ** 1.5


def kinetic_prim(a, lmn1, A, b, lmn2, B):
    l2, m2, n2 = lmn2
    term0 = b * (2 * (l2 + m2 + n2) + 3) * overlap_prim(a, lmn1, A, b, lmn2, B)
    term1 = -2.0 * b * b * (
        overlap_prim(a, lmn1, A, b, (l2 + 2, m2, n2), B)
        + overlap_prim(a, lmn1, A, b, (l2, m2 + 2, n2), B)
        + overlap_prim(a, lmn1, A, b, (l2, m2, n2 + 2), B))
    term2 = -0.5 * (
        l2 * (l2 - 1) * overlap_prim(a, lmn1, A, b, (l2 - 2, m2, n2), B)
        + m2 * (m2 - 1) * overlap_prim(a, lmn1, A, b, (l2, m2 - 2, n2), B)
        + n2 * (n2 - 1) * overlap_prim(a, lmn1, A, b, (l2, m2, n2 - 2), B))
    return term0 + term1 + term2


def nuclear_prim(a, lmn1, A, b, lmn2, B, C):
    p = a + b
    P = (a * np.asarray(A) + b * np.asarray(B)) / p
    PC = P - np.asarray(C)
    L = sum(lmn1) + sum(lmn2)
    memo = coulomb_memo(p, PC, L)
    val = 0.0
    for t in range(lmn1[0] + lmn2[0] + 1):
        et = hermite_e(lmn1[0], lmn2[0], t, A[0] - B[0], a, b)
        for u in range(lmn1[1] + lmn2[1] + 1):
            eu = hermite_e(lmn1[1], lmn2[1], u, A[1] - B[1], a, b)
            for v in range(lmn1[2] + lmn2[2] + 1):
                ev = hermite_e(lmn1[2], lmn2[2], v, A[2] - B[2], a, b)
                val += et * eu * ev * hermite_coulomb(t, u, v, 0, p, PC, memo)
    return 2.0 * math.pi / p * val


def eri_prim(a, lmn1, A, b, lmn2, B, c, lmn3, C, d, lmn4, D):
    p = a + b
    q = c + d
    alpha = p * q / (p + q)
    P = (a * np.asarray(A) + b * np.asarray(B)) / p
    Q = (c * np.asarray(C) + d * np.asarray(D)) / q
    PQ = P - Q
    Lsum = sum(lmn1) + sum(lmn2) + sum(lmn3) + sum(lmn4)
    memo = coulomb_memo(alpha, PQ, Lsum)

    e1 = [[hermite_e(lmn1[dd], lmn2[dd], t, A[dd] - B[dd], a, b)
           for t in range(lmn1[dd] + lmn2[dd] + 1)] for dd in range(3)]
    e2 = [[hermite_e(lmn3[dd], lmn4[dd], t, C[dd] - D[dd], c, d)
           for t in range(lmn3[dd] + lmn4[dd] + 1)] for dd in range(3)]

    val = 0.0
    for t in range(len(e1[0])):
        for u in range(len(e1[1])):
            for v in range(len(e1[2])):
                w1 = e1[0][t] * e1[1][u] * e1[2][v]
                if w1 == 0.0:
                    continue
                for tt in range(len(e2[0])):
                    for uu in range(len(e2[1])):
                        for vv in range(len(e2[2])):
                            w2 = e2[0][tt] * e2[1][uu] * e2[2][vv]
                            if w2 == 0.0:
                                continue
                            sign = (-1.0) ** (tt + uu + vv)
                            val += w1 * w2 * sign * hermite_coulomb(
                                t + tt, u + uu, v + vv, 0, alpha, PQ, memo)
    return val * 2.0 * math.pi ** 2.5 / (p * q * math.sqrt(p + q))


def prim_norm(a, lmn):
    l, m, n = lmn
    df = lambda k: math.prod(range(k, 0, -2)) if k > 0 else 1
    return math.sqrt((2 * a / math.pi) ** 1.5 * (4 * a) ** (l + m + n)
                     / (df(2 * l - 1) * df(2 * m - 1) * df(2 * n - 1)))


class BasisFunction:
    def __init__(self, center, lmn, exps, coefs):
        self.center = np.asarray(center, dtype=float)
        self.lmn = tuple(lmn)
        self.exps = list(exps)
        coefs = [c * prim_norm(a, lmn) for a, c in zip(exps, coefs)]
        ss = sum(ca * cb * overlap_prim(ea, lmn, self.center, eb, lmn, self.center)
                 for ea, ca in zip(exps, coefs) for eb, cb in zip(exps, coefs))
        self.coefs = [c / math.sqrt(ss) for c in coefs]

    def pairs(self):
        return zip(self.exps, self.coefs)


def build_basis(atoms):
    basis = []
    for sym, xyz in atoms:
        for shell, exps, coefs in STO3G[sym]:
            if shell == "S":
                basis.append(BasisFunction(xyz, (0, 0, 0), exps, coefs))
            else:
                for lmn in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
                    basis.append(BasisFunction(xyz, lmn, exps, coefs))
    return basis


def contracted(fun, b1, b2, *extra):
    val = 0.0
    for a, ca in b1.pairs():
        for b, cb in b2.pairs():
            val += ca * cb * fun(a, b1.lmn, b1.center, b, b2.lmn, b2.center, *extra)
    return val


def ao_integrals(atoms):
    basis = build_basis(atoms)
    n = len(basis)
    S = np.zeros((n, n))
    T = np.zeros((n, n))
    V = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            S[i, j] = S[j, i] = contracted(overlap_prim, basis[i], basis[j])
            T[i, j] = T[j, i] = contracted(kinetic_prim, basis[i], basis[j])
            v = 0.0
            for sym, xyz in atoms:
                v -= CHARGE[sym] * contracted(nuclear_prim, basis[i], basis[j],
                                              np.asarray(xyz, dtype=float))
            V[i, j] = V[j, i] = v

    eri = np.zeros((n, n, n, n))
    def prim_quartet(bi, bj, bk, bl):
        val = 0.0
        for a, ca in bi.pairs():
            for b, cb in bj.pairs():
                for c, cc in bk.pairs():
                    for d, cd in bl.pairs():
                        val += ca * cb * cc * cd * eri_prim(
                            a, bi.lmn, bi.center, b, bj.lmn, bj.center,
                            c, bk.lmn, bk.center, d, bl.lmn, bl.center)
        return val

    for i in range(n):
        for j in range(i + 1):
            ij = i * (i + 1) // 2 + j
            for k in range(n):
                for l in range(k + 1):
                    kl = k * (k + 1) // 2 + l
                    if ij < kl:
                        continue
                    v = prim_quartet(basis[i], basis[j], basis[k], basis[l])
                    for (p, q) in ((i, j), (j, i)):
                        for (r, s) in ((k, l), (l, k)):
                            eri[p, q, r, s] = eri[r, s, p, q] = v

    e_nuc = 0.0
    pts = [(CHARGE[sym], np.asarray(xyz, dtype=float)) for sym, xyz in atoms]
    for i in range(len(pts)):
        for j in range(i):
            e_nuc += pts[i][0] * pts[j][0] / np.linalg.norm(pts[i][1] - pts[j][1])
    return S, T + V, eri, e_nuc


def lowdin_orthogonalize(S, h, eri):
    w, U = np.linalg.eigh(S)
    if w.min() < 1e-8:
        raise RuntimeError(f"near-singular overlap, smallest eigenvalue {w.min():.3e}")
    X = U @ np.diag(w ** -0.5) @ U.T
    h_lo = X @ h @ X
    eri_lo = np.einsum("pqrs,pi,qj,rk,sl->ijkl", eri, X, X, X, X, optimize=True)
    return h_lo, eri_lo


def reference_rhf(h, eri, n_elec, e_nuc, max_iter=500, tol=1e-12):
    """Plain RHF used only to record fixture reference energies."""
    n = h.shape[0]
    n_occ = n_elec // 2
    D = np.zeros((n, n))
    e_old = 0.0
    for it in range(max_iter):
        J = np.einsum("ijkl,kl->ij", eri, D)
        K = np.einsum("ikjl,kl->ij", eri, D)
        F = h + J - 0.5 * K
        eps, C = np.linalg.eigh(F)
        D_new = 2.0 * C[:, :n_occ] @ C[:, :n_occ].T
        D = D_new if it == 0 else 0.5 * D + 0.5 * D_new
        e = 0.5 * np.sum((h + h + J - 0.5 * K) * D) + e_nuc
        if it > 1 and abs(e - e_old) < tol:
            return e
        e_old = e
    raise RuntimeError("reference RHF did not converge")


def write_fcidump(path, h, eri, n_elec, e_nuc):
    n = h.shape[0]
    lines = [f"&FCI NORB={n},NELEC={n_elec},MS2=0,",
             " ORBSYM=" + ",".join(["1"] * n) + ",",
             " ISYM=1,",
             "&END"]
    fmt = "{:24.16e} {:4d} {:4d} {:4d} {:4d}"
    for i in range(n):
        for j in range(i + 1):
            ij = i * (i + 1) // 2 + j
            for k in range(i + 1):
                for l in range(k + 1):
                    kl = k * (k + 1) // 2 + l
                    if ij < kl:
                        continue
                    v = eri[i, j, k, l]
                    if v != 0.0:
                        lines.append(fmt.format(v, i + 1, j + 1, k + 1, l + 1))
    for i in range(n):
        for j in range(i + 1):
            if h[i, j] != 0.0:
                lines.append(fmt.format(h[i, j], i + 1, j + 1, 0, 0))
    lines.append(fmt.format(e_nuc, 0, 0, 0, 0))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def h_chain(n, spacing_ang):
    return [("H", (0.0, 0.0, i * spacing_ang * ANG2BOHR)) for i in range(n)]


def h2_pair_dimer(bond_ang, gap_ang):
    zs = [0.0, bond_ang, bond_ang + gap_ang, 2 * bond_ang + gap_ang]
    return [("H", (0.0, 0.0, z * ANG2BOHR)) for z in zs]


def make(name, atoms, n_elec, outdir):
    S, h, eri, e_nuc = ao_integrals(atoms)
    h_lo, eri_lo = lowdin_orthogonalize(S, h, eri)
    e_hf = reference_rhf(h_lo, eri_lo, n_elec, e_nuc)
    path = os.path.join(outdir, f"{name}.fcidump")
    write_fcidump(path, h_lo, eri_lo, n_elec, e_nuc)
    print(f"{name}: L={h.shape[0]}  E_nuc={e_nuc:.10f}  E_RHF={e_hf:.10f}")
    return {"fcidump": f"{name}.fcidump", "n_orb": h.shape[0],
            "n_elec": n_elec, "e_nuc": e_nuc, "e_rhf": e_hf}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--with-n2", action="store_true",
                    help="also generate the large optional N2 fixture")
    ap.add_argument("--outdir", default="fixtures")
    args = ap.parse_args()
    os.makedirs(args.outdir, exist_ok=True)

    refs = {}
    refs["h2_0.74"] = make("h2_0.74", h_chain(2, 0.74), 2, args.outdir)
    refs["h4_dimer"] = make("h4_dimer", h2_pair_dimer(0.74, 6.0), 4, args.outdir)
    for d in (1.0, 2.0, 2.4):
        key = f"h6_{d:.2f}"
        refs[key] = make(key, h_chain(6, d), 6, args.outdir)
    if args.with_n2:
        atoms = [("N", (0.0, 0.0, 0.0)), ("N", (0.0, 0.0, 0.8 * ANG2BOHR))]
        refs["n2_0.80"] = make("n2_0.80", atoms, 14, args.outdir)

    ref_path = os.path.join(args.outdir, "references.json")
    if os.path.exists(ref_path):
        with open(ref_path) as fh:
            old = json.load(fh)
        old.update(refs)
        refs = old
    with open(ref_path, "w") as fh:
        json.dump(refs, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {ref_path}")


if __name__ == "__main__":
    main()
