import numpy as np
import pytest

from bdtwine.errors import InvalidParameterError, PreconditionError
from bdtwine.intertwine import (
    bounded_gradient_corpus,
    gradients,
    hitting_identity_check,
    infinitesimal_residual,
    phi_power,
    phi_rlogr,
    phi_square,
    phi_transforms,
    verify_bicommutation,
    verify_intertwining,
    verify_subcommutation,
)
from bdtwine.model import Weight, make_builtin
from bdtwine.semigroup import apply_semigroup, build_generator, survival_probability


def test_gradients_definition(doubling_weight):
    f = np.array([1.0, 3.0, 2.0, 5.0])
    forward, backward, weighted = gradients(f, doubling_weight)
    assert np.allclose(forward, [2.0, -1.0, 3.0])
    assert np.allclose(backward, -forward)
    # d_u f(x) = (f(x+1) - f(x)) / u(x) with u = 2^x
    assert np.allclose(weighted, forward / np.array([1.0, 2.0, 4.0]))
    _, _, unit_weighted = gradients(f)
    assert np.array_equal(unit_weighted, forward)


def test_phi_functions_basics():
    sq, rl, pw = phi_square(), phi_rlogr(), phi_power(1.5)
    r = np.array([0.5, 1.0, 2.0])
    assert np.allclose(sq.phi(r), r**2)
    assert np.allclose(rl.phi(r), r * np.log(r))
    assert np.allclose(pw.phi(r), r**1.5)
    assert sq.eqphi_ok and pw.eqphi_ok
    assert rl.neg_recip_convex and sq.neg_recip_convex
    with pytest.raises(InvalidParameterError):
        phi_power(1.0)


def test_phi_transforms_domain_guard():
    rl = phi_rlogr()
    r = np.array([1.0, 2.0])
    with pytest.raises(PreconditionError):
        phi_transforms(rl, r, np.array([-2.0, 0.0]))


def test_corpus_shapes_and_bounded_gradient(doubling_weight):
    corpus = bounded_gradient_corpus(doubling_weight, 60, seed=0)
    names = [name for name, _ in corpus]
    assert names == ["capped_rho", "capped_id", "sigmoid", "random_bump", "rho"]
    for name, f in corpus:
        assert f.shape == (61,)
        _, weighted, _ = gradients(f, doubling_weight)
        assert np.all(np.isfinite(weighted))


def test_intertwining_identity_exact_cases(mm_infty_11, mm1_14, const_weight, doubling_weight):
    for spec, w in [(mm_infty_11, const_weight), (mm1_14, doubling_weight)]:
        for _, f in bounded_gradient_corpus(w, 150, seed=1):
            rep = verify_intertwining(spec, w, f, [0.1, 1.0], n=150, tol=1e-6)
            assert rep.passed, rep.as_dict()
            assert rep.residual_or_margin < 1e-8


def test_intertwining_random_chain_and_weight():
    rng = np.random.default_rng(17)
    from conftest import random_spec, random_weight

    spec = random_spec(rng)
    w = random_weight(rng)
    _, f = bounded_gradient_corpus(w, 150, seed=3)[3]
    rep = verify_intertwining(spec, w, f, [0.25, 0.8], n=150, tol=1e-6)
    assert rep.passed, rep.as_dict()


def test_intertwining_two_routes_disagree_on_wrong_potential(mm_infty_11, const_weight):
    # sanity of the harness itself: a wrong chain must be caught
    wrong = make_builtin("mm_infty", 1.0, 1.3)
    _, f = bounded_gradient_corpus(const_weight, 100, seed=0)[0]
    assert verify_intertwining(wrong, const_weight, f, [1.0], n=100, tol=1e-6).passed
    assert verify_intertwining(mm_infty_11, const_weight, f, [1.0], n=100, tol=1e-6).passed
    # mixing the chains must fail: evolve f under (1,1), differentiate, and
    # compare with the dual route of (1,1.3)
    from bdtwine.model import potential, u_modification

    gen = build_generator(mm_infty_11, 100)
    ptf = apply_semigroup(gen, f, 1.0, tol=1e-12)
    lhs_grad = gradients(ptf, const_weight)[2]
    dual = u_modification(wrong, const_weight)
    vu = potential(wrong, const_weight, 99).v_vec(99)
    gen_u = build_generator(dual, 99, v=vu)
    rhs = apply_semigroup(gen_u, gradients(f, const_weight)[2], 1.0, tol=1e-12)
    assert np.max(np.abs(lhs_grad[:60] - rhs[:60])) > 1e-3


def test_infinitesimal_residual_small(mm1_14, doubling_weight):
    _, f = bounded_gradient_corpus(doubling_weight, 120, seed=2)[0]
    rep = infinitesimal_residual(mm1_14, doubling_weight, f, n=120)
    assert rep.passed
    assert rep.residual_or_margin < 1e-10


def test_subcommutation_square_nonnegative_margin(mm1_14, doubling_weight):
    for _, f in bounded_gradient_corpus(doubling_weight, 150, seed=4)[:3]:
        rep = verify_subcommutation(mm1_14, doubling_weight, phi_square(), f, [0.2, 1.0], n=150)
        assert rep.passed, rep.as_dict()
        assert rep.residual_or_margin > -1e-8


def test_subcommutation_rejects_negative_potential():
    # lam increasing makes V_1 dip below zero; rlogr needs V_u >= 0
    spec = make_builtin("mm_infty", 1.0, 1.0)
    from bdtwine.model import RateSpec

    grower = RateSpec(lam=lambda x: 1.0 + 0.5 * x, nu=lambda x: float(x), label="grower")
    f = np.full(81, 1.0) + 0.1 * np.sin(np.arange(81))
    with pytest.raises(PreconditionError):
        verify_subcommutation(grower, Weight.const(), phi_rlogr(), f, [0.5], n=80)


def test_bicommutation_rlogr_and_power(mm_infty_11, mm_infty_21):
    rng = np.random.default_rng(9)
    for spec in (mm_infty_11, mm_infty_21):
        f = 1.5 + 0.5 / (1.0 + np.arange(121)) + 0.05 * rng.random(121)
        for phi in (phi_rlogr(), phi_power(1.5)):
            rep = verify_bicommutation(spec, phi, f, [0.2, 1.0], n=120)
            assert rep.passed, rep.as_dict()
            assert rep.residual_or_margin > -1e-8


def test_bicommutation_rejects_increasing_births():
    from bdtwine.model import RateSpec

    grower = RateSpec(lam=lambda x: 1.0 + x, nu=lambda x: float(x), label="grower")
    f = np.full(61, 2.0)
    with pytest.raises(PreconditionError):
        verify_bicommutation(grower, phi_rlogr(), f, [0.5], n=60)


def test_hitting_identity_and_exponential_bound(mm1_14):
    rep = hitting_identity_check(1.0, 4.0, 1, 1.0, n=200)
    assert rep.passed
    assert rep.residual_or_margin < 1e-8
    assert rep.details["bound_ok"]
    # survival equals the Feynman-Kac value recorded in details
    s = survival_probability(mm1_14, 2, 1.0)
    assert rep.details["decay_rate"] == pytest.approx(1.0)
    assert s == pytest.approx(0.1983833757642205, abs=1e-10)


def test_verification_report_serializes(mm_infty_11, const_weight):
    _, f = bounded_gradient_corpus(const_weight, 80, seed=0)[1]
    rep = verify_intertwining(mm_infty_11, const_weight, f, [0.5], n=80)
    doc = rep.as_dict()
    assert doc["pass"] is True
    assert set(doc) >= {"identity", "residual_or_margin", "worst_state", "worst_time", "pass"}
