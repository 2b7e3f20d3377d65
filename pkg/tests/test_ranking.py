import numpy as np
import pytest

from oevqe.embedding import FragmentSpec, build_bath
from oevqe.integrals import IntegralSet
from oevqe.ranking import (CORE, VIRTUAL, RankingError, impurity_fock_split,
                           mp2_amplitudes, mp2_block_rdm, rank_environment,
                           stage_projector)
from oevqe.scf import build_fock, run_rhf


def test_h2_fock_split_against_two_by_two_oracle(h2):
    sol = run_rhf(h2)
    basis = build_bath(sol.D, FragmentSpec((0,)))
    u_occ, u_unocc, eps = impurity_fock_split(h2, basis, rhf=sol)
    assert u_occ.shape == (2, 1) and u_unocc.shape == (2, 1)
    # independent 2x2 diagonalization of the projected Fock
    C = basis.impurity()
    F = C.T @ build_fock(sol.D, h2) @ C
    w, V = np.linalg.eigh(F)
    assert np.abs(eps - w).max() < 1e-12
    overlap = abs(float(u_occ[:, 0] @ (C @ V[:, 0])))
    assert abs(overlap - 1.0) < 1e-10


def test_fock_split_full_fragment_recovers_rhf(h4):
    sol = run_rhf(h4)
    basis = build_bath(sol.D, FragmentSpec(tuple(range(4))))
    u_occ, u_unocc, eps = impurity_fock_split(h4, basis, rhf=sol)
    assert u_occ.shape[1] == h4.n_elec // 2
    assert np.abs(np.sort(eps) - sol.eps).max() < 1e-8
    # occupied span matches the RHF occupied span
    C_occ = sol.C[:, :h4.n_elec // 2]
    overlap = np.linalg.svd(u_occ.T @ C_occ, compute_uv=False)
    assert np.abs(overlap - 1.0).max() < 1e-8


def test_fock_split_deterministic(h6):
    sol = run_rhf(h6)
    basis = build_bath(sol.D, FragmentSpec((2, 3)))
    first = impurity_fock_split(h6, basis, rhf=sol)
    second = impurity_fock_split(h6, basis, rhf=sol)
    for a, b in zip(first, second):
        assert np.array_equal(a, b)


def test_mp2_block_rdm_no_virtuals(h4):
    sol = run_rhf(h4)
    occ = sol.C[:, :2]
    d_occ, d_vir = mp2_block_rdm(h4, occ, np.zeros((4, 0)))
    assert np.abs(d_occ - 2 * np.eye(2)).max() == 0.0
    assert d_vir.shape == (0, 0)


def minimal_two_level(e_gap=1.0, coupling=0.2):
    """Two orbitals with a single nonzero coupling integral (01|01)."""
    h1 = np.diag([-1.0, -1.0 + e_gap])
    g = np.zeros((2, 2, 2, 2))
    for idx in [(0, 1, 0, 1), (1, 0, 0, 1), (0, 1, 1, 0), (1, 0, 1, 0)]:
        g[idx] = coupling
    return IntegralSet.from_dense(h1=h1, eri_dense=g, n_elec=2, e_nuc=0.0)


def test_mp2_single_amplitude_analytic():
    ints = minimal_two_level(e_gap=1.0, coupling=0.2)
    occ = np.array([[1.0], [0.0]])
    vir = np.array([[0.0], [1.0]])
    t, e_o, e_v, _, _ = mp2_amplitudes(ints, occ, vir)
    # brute-force amplitude evaluation from the definitions
    F = build_fock(2.0 * occ @ occ.T, ints)
    denom = 2 * (F[0, 0] - F[1, 1])
    t_ref = ints.get_eri(0, 1, 0, 1) / denom
    assert abs(t[0, 0, 0, 0] - t_ref) < 1e-12
    d_occ, d_vir = mp2_block_rdm(ints, occ, vir)
    assert abs(d_vir[0, 0] - 2.0 * t_ref ** 2) < 1e-12
    assert abs(d_occ[0, 0] - (2.0 - 2.0 * t_ref ** 2)) < 1e-12


def test_mp2_degenerate_denominator_raises():
    ints = minimal_two_level(e_gap=0.0, coupling=0.0)
    occ = np.array([[1.0], [0.0]])
    vir = np.array([[0.0], [1.0]])
    with pytest.raises(RankingError, match="denominator"):
        mp2_amplitudes(ints, occ, vir)


def test_mp2_particle_conservation_h4(h4):
    sol = run_rhf(h4)
    basis = build_bath(sol.D, FragmentSpec((0, 1)))
    fock = build_fock(sol.D, h4)
    u_occ, _, _ = impurity_fock_split(h4, basis, rhf=sol)
    d_occ, d_vir = mp2_block_rdm(h4, u_occ, basis.u_vir, fock=fock)
    n_o = u_occ.shape[1]
    assert abs(np.trace(d_vir) + (np.trace(d_occ) - 2 * n_o)) < 1e-10


def _brute_force_block_rdm(ints, occ_cols, vir_cols, fock):
    """Plain-loop unrelaxed MP2 density blocks, independent of the module path."""
    e_o, W_o = np.linalg.eigh(occ_cols.T @ fock @ occ_cols)
    e_v, W_v = np.linalg.eigh(vir_cols.T @ fock @ vir_cols)
    c_o = occ_cols @ W_o
    c_v = vir_cols @ W_v
    g = ints.eri_dense()
    n_o, n_v = c_o.shape[1], c_v.shape[1]
    t = np.zeros((n_o, n_v, n_o, n_v))
    for i in range(n_o):
        for a in range(n_v):
            for j in range(n_o):
                for b in range(n_v):
                    val = 0.0
                    for p in range(ints.L):
                        for q in range(ints.L):
                            for r in range(ints.L):
                                for s in range(ints.L):
                                    val += (c_o[p, i] * c_v[q, a] * c_o[r, j]
                                            * c_v[s, b] * g[p, q, r, s])
                    t[i, a, j, b] = val / (e_o[i] + e_o[j] - e_v[a] - e_v[b])
    d_vir = np.zeros((n_v, n_v))
    for a in range(n_v):
        for b in range(n_v):
            for i in range(n_o):
                for j in range(n_o):
                    for c in range(n_v):
                        d_vir[a, b] += 2 * t[i, a, j, c] * (
                            2 * t[i, b, j, c] - t[i, c, j, b])
    d_occ = 2 * np.eye(n_o)
    for i in range(n_o):
        for j in range(n_o):
            for k in range(n_o):
                for a in range(n_v):
                    for b in range(n_v):
                        d_occ[i, j] -= 2 * t[i, a, k, b] * (
                            2 * t[j, a, k, b] - t[j, b, k, a])
    return W_o @ d_occ @ W_o.T, W_v @ d_vir @ W_v.T


def test_mp2_block_rdm_against_brute_force(h4):
    sol = run_rhf(h4)
    basis = build_bath(sol.D, FragmentSpec((0, 1)))
    fock = build_fock(sol.D, h4)
    u_occ, _, _ = impurity_fock_split(h4, basis, rhf=sol)
    d_occ, d_vir = mp2_block_rdm(h4, u_occ, basis.u_vir, fock=fock)
    ref_occ, ref_vir = _brute_force_block_rdm(h4, u_occ, basis.u_vir, fock)
    assert np.abs(d_occ - ref_occ).max() < 1e-10
    assert np.abs(d_vir - ref_vir).max() < 1e-10


def test_rank_empty_environment(h2):
    sol = run_rhf(h2)
    basis = build_bath(sol.D, FragmentSpec((0, 1)))
    ranked = rank_environment(h2, basis, rhf=sol)
    assert ranked.n_env == 0
    assert len(ranked.delta_lambda) == 0
    assert ranked.u_full.shape == (2, 2)


def test_rank_h4_scores(h4):
    sol = run_rhf(h4)
    basis = build_bath(sol.D, FragmentSpec((0, 1)))
    ranked = rank_environment(h4, basis, rhf=sol)
    assert ranked.n_env == 2
    scores = ranked.delta_lambda
    assert (scores >= 0).all()
    assert (np.diff(scores) <= 1e-15).all()
    assert set(ranked.class_of) == {CORE, VIRTUAL}


def test_rank_h6_strict_order(h6):
    sol = run_rhf(h6)
    ranked = rank_environment(h6, build_bath(sol.D, FragmentSpec((2, 3))), rhf=sol)
    assert ranked.delta_lambda[0] > ranked.delta_lambda[-1]


def test_stage_projector_bookkeeping(h6):
    sol = run_rhf(h6)
    basis = build_bath(sol.D, FragmentSpec((2, 3)))
    ranked = rank_environment(h6, basis, rhf=sol)
    n = ranked.n_env

    C_full, rem = stage_projector(ranked, n)
    assert C_full.shape == (6, 6)
    assert rem.shape[1] == 0
    assert np.abs(C_full.T @ C_full - np.eye(6)).max() < 1e-10

    C0, rem0 = stage_projector(ranked, 0)
    assert C0.shape[1] == ranked.n_imp
    # stage-0 projector spans the impurity
    overlap = np.linalg.svd(C0.T @ basis.impurity(), compute_uv=False)
    assert np.abs(overlap - 1.0).max() < 1e-10
    assert rem0.shape[1] == sum(1 for c in ranked.class_of if c == CORE)

    C1, rem1 = stage_projector(ranked, 1)
    assert C1.shape[1] == 5
    expect_core_left = sum(1 for c in ranked.class_of[1:] if c == CORE)
    assert rem1.shape[1] == expect_core_left

    with pytest.raises(ValueError):
        stage_projector(ranked, n + 1)


def test_selected_plus_remainder_is_orthonormal_frame(h6):
    sol = run_rhf(h6)
    ranked = rank_environment(h6, build_bath(sol.D, FragmentSpec((2, 3))), rhf=sol)
    for n_s in range(ranked.n_env + 1):
        C, rem = stage_projector(ranked, n_s)
        leftover_vir = [ranked.n_imp + j for j in range(n_s, ranked.n_env)
                        if ranked.class_of[j] == VIRTUAL]
        frame = np.hstack([C, rem, ranked.u_full[:, leftover_vir]])
        assert frame.shape == (6, 6)
        assert np.abs(frame.T @ frame - np.eye(6)).max() < 1e-10


def test_scores_within_bounds(h6, h4):
    for ints, frag in ((h6, (2, 3)), (h4, (0, 1))):
        sol = run_rhf(ints)
        ranked = rank_environment(ints, build_bath(sol.D, FragmentSpec(frag)), rhf=sol)
        assert (ranked.delta_lambda >= 0).all()
        assert (ranked.delta_lambda <= 2).all()


def test_ranking_permutation_invariance(h6):
    """Relabeling LO indices permutes but does not change the score multiset."""
    rng = np.random.default_rng(5)
    perm = rng.permutation(6)
    g = h6.eri_dense()[np.ix_(perm, perm, perm, perm)]
    permuted = IntegralSet.from_dense(h1=h6.h1[np.ix_(perm, perm)], eri_dense=g,
                                      n_elec=h6.n_elec, e_nuc=h6.e_nuc)
    inv = np.argsort(perm)
    frag_p = tuple(sorted(int(inv[i]) for i in (2, 3)))

    sol = run_rhf(h6)
    ranked = rank_environment(h6, build_bath(sol.D, FragmentSpec((2, 3))), rhf=sol)
    sol_p = run_rhf(permuted)
    ranked_p = rank_environment(permuted, build_bath(sol_p.D, FragmentSpec(frag_p)),
                                rhf=sol_p)
    assert np.abs(np.sort(ranked.delta_lambda) - np.sort(ranked_p.delta_lambda)).max() < 1e-9
