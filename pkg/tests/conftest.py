import hypothesis
import numpy as np
import pytest

import harmonictails as ht

hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.load_profile("ci")


@pytest.fixture(scope="session")
def down_walk():
    return ht.LatticeWalk.from_dict({1: 0.3, -1: 0.7})


@pytest.fixture(scope="session")
def ex1_family():
    return ht.perturbed_reflected_walk(p=0.7, alpha=2.0)


@pytest.fixture(scope="session")
def ex1_kernel(ex1_family):
    return ex1_family.kernel(8)


@pytest.fixture(scope="session")
def lindley_result(down_walk):
    fam = ht.lindley_chain(down_walk)
    return fam, ht.stationary_solve(fam, 400)


@pytest.fixture(scope="session")
def example3_family():
    return ht.alternating_drift_chain(p=0.3, c0=0.05, gamma=0.7)


def lindley_exact_log_pi(n):
    """(4/7)(3/7)^i for the +-1 walk with up probability 0.3."""
    return np.log(4 / 7) + np.arange(n + 1) * np.log(3 / 7)
