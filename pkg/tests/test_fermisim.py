import numpy as np
import pytest

from oevqe import oracle
from oevqe.embedding import FragmentSpec, build_bath
from oevqe.fermisim import (CORE, VIRTUAL, Statevector, apply_excitation,
                            energy_gradient, expectation, extend_register,
                            jw_encode, pool_gradient, rdm12, reference_state)
from oevqe.projection import build_subspace_hamiltonian
from oevqe.ranking import rank_environment, stage_projector
from oevqe.scf import run_rhf
from oevqe.solver import Direction, build_pool


def random_sector_state(n_qubits, occupied_bits, rng):
    """Random normalized state inside the particle-number sector of a pattern."""
    from oevqe.fermisim import sector_indices
    na = bin(occupied_bits & 0x5555555555555555).count("1")
    nb = bin(occupied_bits & 0xAAAAAAAAAAAAAAAA).count("1")
    idx = sector_indices(n_qubits, na, nb)
    amps = np.zeros(1 << n_qubits, dtype=complex)
    amps[idx] = rng.normal(size=len(idx)) + 1j * rng.normal(size=len(idx))
    amps /= np.linalg.norm(amps)
    return Statevector(n_qubits, amps)


def number_expectation(psi):
    idx = np.nonzero(psi.amps)[0]
    weights = np.abs(psi.amps[idx]) ** 2
    counts = np.array([bin(int(i)).count("1") for i in idx])
    return float((weights * counts).sum())


def sz_expectation(psi):
    idx = np.nonzero(psi.amps)[0]
    weights = np.abs(psi.amps[idx]) ** 2
    vals = []
    for i in idx:
        na = bin(int(i) & 0x5555555555555555).count("1")
        nb = bin(int(i) & 0xAAAAAAAAAAAAAAAA).count("1")
        vals.append(0.5 * (na - nb))
    return float((weights * np.array(vals)).sum())


# ---------------------------------------------------------------------------
# reference states and extension

def test_reference_state_minimal():
    psi = reference_state(1, 1)
    assert psi.amps[0b11] == 1.0
    assert np.abs(psi.amps).sum() == 1.0


def test_reference_state_with_virtual_tail():
    psi = reference_state(2, 1, (VIRTUAL,))
    assert psi.amps[0b0011] == 1.0


def test_reference_state_with_core_tail():
    psi = reference_state(2, 1, (CORE,))
    assert psi.amps[0b1111] == 1.0


def test_reference_state_occupation_errors():
    with pytest.raises(ValueError):
        reference_state(2, 2, (CORE,))
    with pytest.raises(ValueError):
        reference_state(2, 1, ("bogus",))


def test_stage_reference_particle_number(h6):
    sol = run_rhf(h6)
    ranked = rank_environment(h6, build_bath(sol.D, FragmentSpec((2, 3))), rhf=sol)
    for n_s in range(ranked.n_env + 1):
        C, rem = stage_projector(ranked, n_s)
        n_elec_sub = h6.n_elec - 2 * rem.shape[1]
        psi = reference_state(C.shape[1], ranked.l_occ, ranked.class_of[:n_s])
        assert number_expectation(psi) == n_elec_sub


def test_extend_register_patterns():
    psi = reference_state(1, 1)  # |11>
    ext = extend_register(psi, (VIRTUAL,))
    assert ext.n_qubits == 4
    assert ext.amps[0b0011] == 1.0
    ext_core = extend_register(psi, (CORE,))
    assert ext_core.amps[0b1111] == 1.0
    assert number_expectation(ext_core) == number_expectation(psi) + 2


def test_extension_preserves_old_operator_expectations(h4):
    """Warm-start validity: parity tails never reach the appended qubits."""
    rng = np.random.default_rng(8)
    psi = random_sector_state(4, 0b0011, rng)
    ham = build_subspace_hamiltonian(h4, np.eye(4)[:, :2], np.zeros((4, 0)), 4)
    ops = build_pool(2)
    for tags in [(VIRTUAL,), (CORE,), (CORE, VIRTUAL)]:
        ext = extend_register(psi, tags)
        for op in ops:
            before = apply_excitation(psi, op, 0.37)
            after = apply_excitation(ext, op, 0.37)
            ref = extend_register(before, tags)
            assert np.abs(after.amps - ref.amps).max() < 1e-12


# ---------------------------------------------------------------------------
# Jordan-Wigner encoding

def test_jw_single_structure():
    op = jw_encode((2, 0), 4)
    assert op.kind == "single"
    assert len(op.pauli_terms) == 2
    kinds = sorted("".join(ch for ch in string if ch != "I")
                   for _, string in op.pauli_terms)
    assert kinds == ["XZX", "YZY"]
    for coeff, string in op.pauli_terms:
        assert abs(coeff.real) < 1e-14 and abs(coeff.imag) > 0
        assert string[1] == "Z"  # parity string on the in-between qubit
    G = oracle._dense_generator(op, 4)
    assert np.abs(G.imag).max() < 1e-13
    assert np.abs(G + G.T).max() < 1e-13


def test_jw_double_structure():
    op = jw_encode((4, 5, 0, 1), 6)
    assert op.kind == "double"
    assert len(op.pauli_terms) == 8
    for coeff, _ in op.pauli_terms:
        assert abs(coeff.real) < 1e-14
    G = oracle._dense_generator(op, 6)
    assert np.abs(G.imag).max() < 1e-13
    assert np.abs(G + G.T).max() < 1e-13


def test_jw_rejects_bad_indices():
    with pytest.raises(ValueError, match="repeated"):
        jw_encode((2, 2, 1, 0), 4)
    with pytest.raises(ValueError, match="spin"):
        jw_encode((1, 0), 4)
    with pytest.raises(ValueError, match="spin"):
        jw_encode((2, 3, 1, 0), 6)  # hmm: (a,b)=(1,0): spins (1,0); (2,3)=(0,1) ok
    with pytest.raises(ValueError, match="register"):
        jw_encode((6, 0), 4)


# ---------------------------------------------------------------------------
# excitation application

def test_theta_zero_is_bit_exact():
    rng = np.random.default_rng(0)
    psi = random_sector_state(6, 0b000111, rng)
    op = jw_encode((4, 0), 6)
    out = apply_excitation(psi, op, 0.0)
    assert np.array_equal(out.amps, psi.amps)


def test_half_pi_population_transfer():
    psi = reference_state(2, 1)  # |0011>
    op = jw_encode((2, 0), 4)    # move alpha from orbital 0 to orbital 1
    out = apply_excitation(psi, op, np.pi / 2)
    assert abs(abs(out.amps[0b0110]) - 1.0) < 1e-12
    assert abs(out.amps[0b0011]) < 1e-12


def test_apply_matches_dense_exponential():
    rng = np.random.default_rng(42)
    for _ in range(60):
        k = int(rng.integers(2, 5))
        n = 2 * k
        pool = build_pool(k)
        op = pool[int(rng.integers(0, len(pool)))]
        occ = rng.permutation(n)[: int(rng.integers(1, n))]
        bits = int(np.sum(1 << occ))
        psi = random_sector_state(n, bits, rng)
        theta = float(rng.normal())
        fast = apply_excitation(psi, op, theta)
        dense = oracle.dense_exponential(psi, op, theta)
        assert np.abs(fast.amps - dense.amps).max() < 1e-10


def test_norm_and_symmetry_conservation():
    rng = np.random.default_rng(1)
    k = 4
    pool = build_pool(k)
    psi = random_sector_state(2 * k, 0b00001111, rng)
    n0, sz0 = number_expectation(psi), sz_expectation(psi)
    for _ in range(300):
        op = pool[int(rng.integers(0, len(pool)))]
        psi = apply_excitation(psi, op, float(rng.normal()))
        assert abs(np.linalg.norm(psi.amps) - 1.0) < 1e-12
    assert abs(number_expectation(psi) - n0) < 1e-10
    assert abs(sz_expectation(psi) - sz0) < 1e-10


# ---------------------------------------------------------------------------
# expectations and gradients

def test_expectation_reference_is_scf_energy(h2):
    sol = run_rhf(h2)
    ham = build_subspace_hamiltonian(h2, sol.C, np.zeros((2, 0)), 2)
    psi = reference_state(2, 1)
    assert abs(expectation(psi, ham) + ham.e_nuc - sol.e_hf) < 1e-10


def test_expectation_fci_vector(h4):
    ham = build_subspace_hamiltonian(h4, np.eye(4), np.zeros((4, 0)), 4)
    e_fci, vec = oracle.fci_ground_state(ham)
    assert abs(expectation(vec, ham) + ham.e_nuc - e_fci) < 1e-10


def test_expectation_zero_hamiltonian(h2):
    ham = build_subspace_hamiltonian(h2, np.eye(2), np.zeros((2, 0)), 2)
    ham.h1_sub[:] = 0.0
    ham.eri_sub[:] = 0.0
    psi = reference_state(2, 1)
    assert expectation(psi, ham) == 0.0


def test_expectation_register_mismatch(h2):
    ham = build_subspace_hamiltonian(h2, np.eye(2), np.zeros((2, 0)), 2)
    with pytest.raises(ValueError, match="register"):
        expectation(reference_state(3, 1), ham)


def test_pool_gradient_annihilated_state(h2):
    ham = build_subspace_hamiltonian(h2, np.eye(2), np.zeros((2, 0)), 2)
    psi = reference_state(2, 2)  # both orbitals full: no single excitation acts
    op = jw_encode((2, 0), 4)
    assert pool_gradient(psi, ham, op) == 0.0


def test_pool_gradient_matches_finite_difference(h4):
    rng = np.random.default_rng(9)
    sol = run_rhf(h4)
    ham = build_subspace_hamiltonian(h4, sol.C, np.zeros((4, 0)), 4)
    pool = build_pool(4)
    h = 1e-5
    for _ in range(50):
        psi = random_sector_state(8, 0b00001111, rng)
        op = pool[int(rng.integers(0, len(pool)))]
        grad = pool_gradient(psi, ham, op)
        ep = expectation(apply_excitation(psi, op, h), ham)
        em = expectation(apply_excitation(psi, op, -h), ham)
        assert abs(grad - (ep - em) / (2 * h)) < 1e-7


def test_h2_double_gradient_points_downhill(h2):
    sol = run_rhf(h2)
    ham = build_subspace_hamiltonian(h2, sol.C, np.zeros((2, 0)), 2)
    psi = reference_state(2, 1)
    op = jw_encode((2, 3, 0, 1), 4)  # pair excitation to the antibonding orbital
    grad = pool_gradient(psi, ham, op)
    assert grad != 0.0
    step = -1e-3 * np.sign(grad)
    assert expectation(apply_excitation(psi, op, step), ham) < expectation(psi, ham)


def test_energy_gradient_empty(h2):
    ham = build_subspace_hamiltonian(h2, np.eye(2), np.zeros((2, 0)), 2)
    grads = energy_gradient(Direction(), reference_state(2, 1), ham)
    assert grads.shape == (0,)


def test_energy_gradient_single_parameter(h2):
    sol = run_rhf(h2)
    ham = build_subspace_hamiltonian(h2, sol.C, np.zeros((2, 0)), 2)
    psi0 = reference_state(2, 1)
    op = jw_encode((2, 3, 0, 1), 4)
    direction = Direction()
    direction.append(op, stage=0)
    # at theta = 0 the ansatz gradient equals the pool gradient
    g0 = energy_gradient(direction, psi0, ham)[0]
    assert abs(g0 - pool_gradient(psi0, ham, op)) < 1e-12
    direction.records[0].theta = 0.3
    g = energy_gradient(direction, psi0, ham)[0]
    h = 1e-6

    def energy_at(t):
        direction.records[0].theta = t
        return expectation(direction.apply(psi0), ham)

    fd = (energy_at(0.3 + h) - energy_at(0.3 - h)) / (2 * h)
    assert abs(g - fd) < 1e-7


def test_energy_gradient_many_parameters(h4):
    rng = np.random.default_rng(13)
    sol = run_rhf(h4)
    ham = build_subspace_hamiltonian(h4, sol.C, np.zeros((4, 0)), 4)
    psi0 = reference_state(4, 2)
    pool = build_pool(4)
    direction = Direction()
    for _ in range(20):
        op = pool[int(rng.integers(0, len(pool)))]
        direction.append(op, stage=0, theta=float(rng.normal(scale=0.2)))
    grads = energy_gradient(direction, psi0, ham)
    h = 1e-5
    for i in rng.permutation(20)[:8]:
        theta0 = direction.records[i].theta
        direction.records[i].theta = theta0 + h
        ep = expectation(direction.apply(psi0), ham)
        direction.records[i].theta = theta0 - h
        em = expectation(direction.apply(psi0), ham)
        direction.records[i].theta = theta0
        assert abs(grads[i] - (ep - em) / (2 * h)) < 1e-6


# ---------------------------------------------------------------------------
# reduced density matrices

def test_rdm_reference_diagonal(h4):
    psi = reference_state(4, 2)
    rdm1, rdm2 = rdm12(psi, 4)
    assert np.abs(np.diag(rdm1) - np.array([2.0, 2.0, 0.0, 0.0])).max() < 1e-12
    assert abs(np.trace(rdm1) - 4) < 1e-10


def test_rdm_contraction_matches_expectation(h4):
    from oevqe.projection import subspace_energy
    rng = np.random.default_rng(21)
    sol = run_rhf(h4)
    ham = build_subspace_hamiltonian(h4, sol.C, np.zeros((4, 0)), 4)
    pool = build_pool(4)
    psi = reference_state(4, 2)
    for _ in range(12):
        psi = apply_excitation(psi, pool[int(rng.integers(0, len(pool)))],
                               float(rng.normal(scale=0.3)))
    rdm1, rdm2 = rdm12(psi, 4)
    assert abs(np.trace(rdm1) - 4) < 1e-10
    assert abs(subspace_energy(ham, rdm1, rdm2) - expectation(psi, ham)) < 1e-9
