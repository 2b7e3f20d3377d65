import json
import os

import numpy as np
import pytest

from oevqe import integrals

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "fixtures")


def fixture_path(name):
    return os.path.join(FIXTURE_DIR, name)


def load_fixture(name, label=None):
    path = fixture_path(f"{name}.fcidump")
    with open(path) as fh:
        return integrals.parse_fcidump(fh.read(), label=label or name)


@pytest.fixture(scope="session")
def references():
    with open(fixture_path("references.json")) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def h2():
    return load_fixture("h2_0.74")


@pytest.fixture(scope="session")
def h4():
    return load_fixture("h4_dimer")


@pytest.fixture(scope="session")
def h6():
    return load_fixture("h6_2.00")


@pytest.fixture(scope="session")
def h6_stretched():
    return load_fixture("h6_2.40")


@pytest.fixture(scope="session")
def h6_compact():
    return load_fixture("h6_1.00")


def random_integral_set(L, n_elec, rng, scale=0.5):
    """Random symmetric integrals with full 8-fold symmetry, for property tests."""
    h1 = rng.normal(size=(L, L)) * scale
    h1 = 0.5 * (h1 + h1.T)
    g = rng.normal(size=(L, L, L, L)) * scale
    g = g + g.transpose(1, 0, 2, 3)
    g = g + g.transpose(0, 1, 3, 2)
    g = g + g.transpose(2, 3, 0, 1)
    return integrals.IntegralSet.from_dense(
        h1=h1, eri_dense=g, n_elec=n_elec, e_nuc=rng.normal(), label="random")
