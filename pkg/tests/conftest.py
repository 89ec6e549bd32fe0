import numpy as np
import pytest

from bdtwine.model import RateSpec, Weight, make_builtin


@pytest.fixture
def mm_infty_11():
    return make_builtin("mm_infty", 1.0, 1.0)


@pytest.fixture
def mm_infty_21():
    return make_builtin("mm_infty", 2.0, 1.0)


@pytest.fixture
def mm1_14():
    return make_builtin("mm1", 1.0, 4.0)


@pytest.fixture
def const_weight():
    return Weight.const()


@pytest.fixture
def doubling_weight():
    return Weight.geometric(2.0)


def random_spec(rng, n_table=30, lam_scale=2.0, nu_scale=3.0):
    """Random tabulated ergodic chain: rates bounded away from zero.

    The death rates get a linear boost so the chain drifts back towards the
    origin and truncation tails stay small.
    """
    lam = 0.2 + lam_scale * rng.random(n_table)
    nu = 0.2 + nu_scale * rng.random(n_table) + 0.5 * np.arange(n_table)
    lam_vals = [float(v) for v in lam]
    nu_vals = [0.0] + [float(v) for v in nu[1:]]

    def lam_fn(x):
        return lam_vals[x] if x < n_table else lam_vals[-1]

    def nu_fn(x):
        if x == 0:
            return 0.0
        return nu_vals[x] if x < n_table else nu_vals[-1] + 0.5 * (x - n_table + 1)

    return RateSpec(lam=lam_fn, nu=nu_fn, label=f"random[{n_table}]")


def random_weight(rng, n_table=30):
    """Random bounded-ratio tabulated weight, u(0) = 1."""
    steps = rng.uniform(-0.35, 0.35, size=n_table - 1)
    vals = np.exp(np.concatenate([[0.0], np.cumsum(steps)]))
    return Weight.table([float(v) for v in vals], tail_rule="hold_last")


def random_distribution_pair(rng, size):
    """Two strictly positive normalized vectors on {0..size-1}."""
    a = rng.random(size) + 1e-3
    b = rng.random(size) + 1e-3
    return a / a.sum(), b / b.sum()
