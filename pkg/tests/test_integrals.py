import numpy as np
import pytest

from oevqe import scf
from oevqe.integrals import FcidumpError, IntegralSet, parse_fcidump, write_fcidump

from conftest import fixture_path, random_integral_set

MINIMAL = """&FCI NORB=1,NELEC=2,MS2=0,
 ORBSYM=1,
 ISYM=1,
&END
0.5 1 1 0 0
0.25 1 1 1 1
1.0 0 0 0 0
"""


def test_parse_minimal_fields():
    ints = parse_fcidump(MINIMAL)
    assert ints.L == 1
    assert ints.n_elec == 2
    assert ints.h1[0, 0] == 0.5
    assert ints.get_eri(0, 0, 0, 0) == 0.25
    assert ints.e_nuc == 1.0


def test_h2_fixture_matches_recorded_reference(h2, references):
    assert h2.L == 2
    assert h2.n_elec == 2
    assert h2.e_nuc > 0
    sol = scf.run_rhf(h2)
    assert abs(sol.e_hf - references["h2_0.74"]["e_rhf"]) < 1e-8


def test_index_out_of_range_names_line():
    text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 3 1 0 0\n"
    with pytest.raises(FcidumpError, match=r"line 3.*out of range"):
        parse_fcidump(text)


@pytest.mark.parametrize("header,match", [
    ("&FCI NELEC=2,MS2=0,\n&END\n", "missing NORB"),
    ("&FCI NORB=0,NELEC=2,MS2=0,\n&END\n", "positive"),
    ("&FCI NORB=2,NELEC=3,MS2=0,\n&END\n", "even"),
    ("&FCI NORB=2,NELEC=2,MS2=2,\n&END\n", "MS2"),
    ("no header at all\n", "&END"),
])
def test_header_errors(header, match):
    with pytest.raises(FcidumpError, match=match):
        parse_fcidump(header)


def test_duplicate_conflicting_entry_rejected():
    text = ("&FCI NORB=2,NELEC=2,MS2=0,\n&END\n"
            "0.5 1 1 1 1\n"
            "0.6 1 1 1 1\n")
    with pytest.raises(FcidumpError, match="line 4"):
        parse_fcidump(text)
    # identical duplicates are harmless
    text_ok = text.replace("0.6", "0.5")
    assert parse_fcidump(text_ok).get_eri(0, 0, 0, 0) == 0.5


def test_malformed_index_pattern_rejected():
    text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 1 0 1 0\n"
    with pytest.raises(FcidumpError, match="malformed"):
        parse_fcidump(text)


def test_get_eri_symmetry_folding():
    text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.125 1 2 1 1\n0.0 0 0 0 0\n"
    ints = parse_fcidump(text)
    # stored (01|00); all eight images must agree exactly
    seen = {ints.get_eri(*perm) for perm in
            [(0, 1, 0, 0), (1, 0, 0, 0), (0, 0, 0, 1), (0, 0, 1, 0)]}
    assert seen == {0.125}
    assert ints.get_eri(1, 1, 1, 1) == 0.0  # unset defaults to zero


def test_get_eri_bounds(h2):
    with pytest.raises(IndexError):
        h2.get_eri(0, 0, 0, 2)


def test_h2_onsite_repulsion_matches_raw_file(h2):
    with open(fixture_path("h2_0.74.fcidump")) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) == 5 and parts[1:] == ["1", "1", "1", "1"]:
                raw = float(parts[0])
                break
        else:
            pytest.fail("fixture lacks the (11|11) entry")
    assert h2.get_eri(0, 0, 0, 0) == raw


def test_roundtrip_random_sets():
    rng = np.random.default_rng(7)
    for L, n_elec in [(1, 2), (3, 4), (5, 6)]:
        ints = random_integral_set(L, n_elec, rng)
        text = write_fcidump(ints)
        back = parse_fcidump(text)
        assert back.L == ints.L and back.n_elec == ints.n_elec
        assert abs(back.e_nuc - ints.e_nuc) < 1e-12
        assert np.abs(back.h1 - ints.h1).max() < 1e-12
        assert np.abs(back.eri - ints.eri).max() < 1e-12


def test_all_eight_permutations_agree():
    rng = np.random.default_rng(11)
    ints = random_integral_set(4, 4, rng)
    for _ in range(50):
        p, q, r, s = rng.integers(0, 4, size=4)
        ref = ints.get_eri(p, q, r, s)
        for perm in [(q, p, r, s), (p, q, s, r), (q, p, s, r),
                     (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p)]:
            assert ints.get_eri(*perm) == ref


def test_dense_view_consistent(h4):
    g = h4.eri_dense()
    rng = np.random.default_rng(3)
    for _ in range(40):
        p, q, r, s = rng.integers(0, h4.L, size=4)
        assert g[p, q, r, s] == h4.get_eri(p, q, r, s)


def test_invariant_validation():
    with pytest.raises(ValueError, match="symmetric"):
        IntegralSet(L=2, n_elec=2, e_nuc=0.0,
                    h1=np.array([[0.0, 1.0], [0.0, 0.0]]), eri=np.zeros(6))
    with pytest.raises(ValueError, match="electron count"):
        IntegralSet(L=2, n_elec=3, e_nuc=0.0, h1=np.zeros((2, 2)), eri=np.zeros(6))
    with pytest.raises(ValueError, match="electron count"):
        IntegralSet(L=1, n_elec=4, e_nuc=0.0, h1=np.zeros((1, 1)), eri=np.zeros(1))
