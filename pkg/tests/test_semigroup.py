import numpy as np
import pytest
from scipy import stats

from bdtwine.errors import InvalidParameterError
from bdtwine.model import stationary_distribution
from bdtwine.semigroup import (
    apply_semigroup,
    boundary_margin,
    build_generator,
    expm_oracle,
    poisson_solve,
    survival_probability,
    transient_distribution,
)


def test_generator_rows_sum_to_zero_when_conservative(mm_infty_11):
    gen = build_generator(mm_infty_11, 40)
    m = gen.matrix()
    assert gen.conservative
    assert np.max(np.abs(m.sum(axis=1))) < 1e-12


def test_generator_with_potential_kills_mass(mm_infty_11):
    gen = build_generator(mm_infty_11, 40, v=np.full(41, 0.5))
    assert not gen.conservative
    # e^{tA} 1 = e^{-0.5 t} for constant killing
    out = apply_semigroup(gen, np.ones(41), 0.8)
    assert out[0] == pytest.approx(np.exp(-0.4), abs=1e-10)


def test_semigroup_matches_expm_oracle():
    # uniformization against dense scaling-and-squaring
    rng = np.random.default_rng(5)
    from conftest import random_spec

    spec = random_spec(rng)
    gen = build_generator(spec, 60)
    f = rng.standard_normal(61)
    for t in (0.1, 0.7, 2.0):
        fast = apply_semigroup(gen, f, t, tol=1e-12)
        slow = expm_oracle(gen, f, t)
        assert np.max(np.abs(fast - slow)) < 1e-9


def test_semigroup_properties(mm_infty_11):
    gen = build_generator(mm_infty_11, 60)
    f = np.cos(0.3 * np.arange(61))
    # identity at t = 0, contraction in sup norm, semigroup law
    assert np.array_equal(apply_semigroup(gen, f, 0.0), f)
    pt = apply_semigroup(gen, f, 1.0, tol=1e-12)
    assert np.max(np.abs(pt)) <= np.max(np.abs(f)) + 1e-12
    two_step = apply_semigroup(gen, apply_semigroup(gen, f, 0.4, tol=1e-13), 0.6, tol=1e-13)
    assert np.max(np.abs(two_step - pt)) < 1e-9


def test_transient_distribution_mehler_marginal(mm_infty_11):
    # M/M/infinity started at 0 is Poisson(rho(1 - e^{-nu t})) at t
    gen = build_generator(mm_infty_11, 80)
    d = transient_distribution(gen, 0, 0.9, tol=1e-13)
    mean = 1.0 - np.exp(-0.9)
    oracle = stats.poisson.pmf(np.arange(81), mean)
    assert np.max(np.abs(d.probs - oracle)) < 1e-11


def test_transient_distribution_converges_to_stationary(mm1_14):
    gen = build_generator(mm1_14, 120)
    mu = stationary_distribution(mm1_14, 120)
    d = transient_distribution(gen, 3, 40.0, tol=1e-13)
    assert np.max(np.abs(d.probs - mu.probs)) < 1e-12


def test_survival_probability_mm1_oracle(mm1_14):
    # oracle values from the absorbed-generator matrix exponential,
    # cross-checked previously against the Feynman-Kac identity
    assert survival_probability(mm1_14, 1, 0.5) == pytest.approx(0.2025776935615913, abs=1e-10)
    assert survival_probability(mm1_14, 1, 1.0) == pytest.approx(0.0659801787308770, abs=1e-10)
    assert survival_probability(mm1_14, 2, 1.0) == pytest.approx(0.1983833757642205, abs=1e-10)


def test_survival_probability_monotone_in_start_and_time(mm1_14):
    s = [survival_probability(mm1_14, x0, 1.0) for x0 in (1, 2, 4)]
    assert s[0] < s[1] < s[2]
    st = [survival_probability(mm1_14, 2, t) for t in (0.5, 1.0, 2.0)]
    assert st[0] > st[1] > st[2]
    assert survival_probability(mm1_14, 0, 1.0) == 0.0


def test_poisson_solve_residual(mm_infty_11):
    gen = build_generator(mm_infty_11, 80)
    mu = stationary_distribution(mm_infty_11, 80)
    rng = np.random.default_rng(2)
    f = rng.standard_normal(81)
    g = poisson_solve(gen, mu, f)
    centered = f - float(np.dot(mu.probs, f))
    resid = -gen.apply(g) - centered
    # interior residual only: the truncation perturbs the last rows
    assert np.max(np.abs(resid[:60])) < 1e-8
    assert abs(float(np.dot(mu.probs, g))) < 1e-10


def test_boundary_margin_grows_with_rate_and_time():
    assert boundary_margin(1.0, 1.0) < boundary_margin(4.0, 1.0)
    assert boundary_margin(1.0, 1.0) < boundary_margin(1.0, 10.0)
    assert boundary_margin(1.0, 1.0) >= 1


def test_apply_semigroup_rejects_negative_time(mm_infty_11):
    gen = build_generator(mm_infty_11, 10)
    with pytest.raises(InvalidParameterError):
        apply_semigroup(gen, np.ones(11), -1.0)
