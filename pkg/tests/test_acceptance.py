"""Acceptance gate: the twelve primary criteria, one pass/fail line each.

Run with ``pytest -v tests/test_acceptance.py`` (add ``-s`` to see the
per-criterion summary lines inline).  Every criterion asserts its stated
tolerance; a FAIL line is printed before the assertion fires.
"""

import json
import math
import time

import numpy as np
import pytest

from bdtwine.inequalities import (
    MetricSpace,
    deviation_function,
    infinite_server_drift_rule,
    lipschitz_contraction,
    lyapunov_check,
    transport_info_margin,
    wasserstein_du,
    wasserstein_lp,
)
from bdtwine.intertwine import (
    bounded_gradient_corpus,
    hitting_identity_check,
    infinitesimal_residual,
    phi_power,
    phi_rlogr,
    phi_square,
    verify_bicommutation,
    verify_intertwining,
    verify_subcommutation,
)
from bdtwine.model import (
    Distribution,
    Weight,
    chen_exponent,
    make_builtin,
    potential,
    stationary_distribution,
)
from bdtwine.optimize import gap_report, optimize_weight
from bdtwine.ordering import (
    comparison_lemma_check,
    convex_domination_check,
    convex_order,
    functional_order_gap,
    stochastic_order,
)
from bdtwine.semigroup import build_generator, survival_probability, transient_distribution
from bdtwine.simulate import hitting_time_sample, mehler_distribution
from conftest import random_distribution_pair, random_spec, random_weight


def report(k, name, ok, detail):
    line = f"[PRIMARY {k:>2}] {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


def verification_corpus():
    """Five chain/weight pairs: the two canonical models plus three random
    tabulated chains with random bounded-ratio weights."""
    pairs = [
        (make_builtin("mm_infty", 1.0, 1.0), Weight.const()),
        (make_builtin("mm1", 1.0, 4.0), Weight.geometric(2.0)),
    ]
    for seed in (101, 202, 303):
        rng = np.random.default_rng(seed)
        pairs.append((random_spec(rng), random_weight(rng)))
    return pairs


def test_primary_01_intertwining_identity():
    t0 = time.monotonic()
    worst = 0.0
    times = [0.1, 0.5, 1.0, 2.0]
    for spec, w in verification_corpus():
        for _, f in bounded_gradient_corpus(w, 200, seed=7):
            rep = verify_intertwining(spec, w, f, times, n=200, tol=1e-6)
            worst = max(worst, rep.residual_or_margin)
            if not rep.passed:
                report(1, "gradient intertwining identity", False, f"{spec.label}: {rep.residual_or_margin:.3e}")
    elapsed = time.monotonic() - t0
    report(1, "gradient intertwining identity", worst <= 1e-6 and elapsed < 30.0,
           f"worst residual {worst:.3e} <= 1e-06, {elapsed:.1f}s")


def test_primary_02_infinitesimal_generator_identity():
    worst = 0.0
    for spec, w in verification_corpus():
        for _, f in bounded_gradient_corpus(w, 200, seed=8):
            rep = infinitesimal_residual(spec, w, f, n=200)
            worst = max(worst, rep.residual_or_margin)
    report(2, "infinitesimal commutation residual", worst <= 1e-10, f"worst {worst:.3e} <= 1e-10")


def test_primary_03_subcommutation_square():
    checked = 0
    worst = math.inf
    for spec, w in verification_corpus():
        if potential(spec, w, 200).inf_estimate < 0.0:
            continue  # criterion applies on the nonnegative-potential subset
        for _, f in bounded_gradient_corpus(w, 200, seed=9)[:3]:
            rep = verify_subcommutation(spec, w, phi_square(), f, [0.2, 1.0], n=200)
            worst = min(worst, rep.residual_or_margin)
            checked += 1
    report(3, "phi = r^2 subcommutation", checked >= 4 and worst >= -1e-8,
           f"{checked} cases, worst margin {worst:.3e} >= -1e-08")


def test_primary_04_bregman_bicommutation():
    worst = math.inf
    rng = np.random.default_rng(4)
    for lam, nu in [(1.0, 1.0), (2.0, 1.0)]:
        spec = make_builtin("mm_infty", lam, nu)
        f = 1.5 + 0.5 / (1.0 + np.arange(201.0)) + 0.05 * rng.random(201)
        for phi in (phi_rlogr(), phi_power(1.5)):
            rep = verify_bicommutation(spec, phi, f, [0.2, 1.0], n=200)
            worst = min(worst, rep.residual_or_margin)
            if not rep.passed:
                report(4, "Bregman bicommutation", False, f"({lam},{nu}) {phi.name}: {rep.residual_or_margin:.3e}")
    report(4, "Bregman bicommutation", worst >= -1e-8, f"worst margin {worst:.3e} >= -1e-08")


def test_primary_05_mehler_formula():
    worst = 0.0
    for lam, nu, x0, t in [(1.0, 1.0, 3, 0.7), (2.0, 1.0, 5, 1.3)]:
        spec = make_builtin("mm_infty", lam, nu)
        gen = build_generator(spec, 80)
        numeric = transient_distribution(gen, x0, t, tol=1e-13)
        closed = mehler_distribution(lam, nu, x0, t, n=80)
        tv = 0.5 * float(np.sum(np.abs(numeric.probs - closed.probs)))
        worst = max(worst, tv)
    report(5, "Mehler transient law", worst <= 1e-8, f"worst TV {worst:.3e} <= 1e-08")


def test_primary_06_weight_optimization_and_gap():
    t0 = time.monotonic()
    rep_inf = gap_report(make_builtin("mm_infty", 2.0, 1.0), n=80, seed=0)
    ok_inf = abs(rep_inf.gap - 1.0) <= 1e-6 and 0.999 <= rep_inf.sigma_star <= rep_inf.gap + 1e-3
    mm1 = make_builtin("mm1", 1.0, 4.0)
    res = optimize_weight(mm1, n=500, seed=42)
    rep_mm1 = gap_report(mm1, n=500, seed=42)
    ok_mm1 = (
        abs(res.params[0] - 2.0) <= 1e-3
        and abs(res.sigma - 1.0) <= 1e-6
        and 0.98 <= rep_mm1.gap <= 1.05
        and rep_mm1.sound
    )
    elapsed = time.monotonic() - t0
    report(6, "optimized exponent vs spectral gap", ok_inf and ok_mm1 and elapsed < 60.0,
           f"kappa* {res.params[0]:.6f}, sigma* {res.sigma:.9f}, gaps {rep_inf.gap:.6f}/{rep_mm1.gap:.6f}, {elapsed:.1f}s")


def test_primary_07_transport_closed_form_vs_lp():
    rng = np.random.default_rng(77)
    worst_agree, worst_dual = 0.0, 0.0
    for _ in range(100):
        size = int(rng.integers(2, 33))
        w = random_weight(rng, n_table=size)
        space = MetricSpace(weight=w, n=size - 1)
        p, q = random_distribution_pair(rng, size)
        dp, dq = Distribution(probs=p), Distribution(probs=q)
        closed = wasserstein_du(dp, dq, space)
        plan = wasserstein_lp(dp, dq, space.cost_matrix())
        worst_agree = max(worst_agree, abs(plan.value - closed))
        worst_dual = max(worst_dual, abs(plan.value - plan.dual_value))
    report(7, "Kantorovich closed form vs LP", worst_agree <= 1e-9 and worst_dual <= 1e-9,
           f"100 pairs, worst |closed-lp| {worst_agree:.3e}, worst duality gap {worst_dual:.3e}")


def test_primary_08_wasserstein_contraction():
    ok = True
    detail = []
    for spec, w in verification_corpus():
        sigma = float(chen_exponent(spec, w, 200))
        for t in (0.25, 1.0):
            val = lipschitz_contraction(spec, w, t, n=200)
            if val > math.exp(-sigma * t) + 1e-8:
                ok = False
                detail.append(f"{spec.label}@{t}: {val:.3e} > e^-st")
    mm = make_builtin("mm_infty", 1.0, 1.0)
    for t in (0.25, 1.0, 2.0):
        val = lipschitz_contraction(mm, Weight.const(), t, n=200)
        if abs(val - math.exp(-t)) > 1e-8:
            ok = False
            detail.append(f"mm_infty@{t}: |{val:.6f} - e^-t| > 1e-8")
    report(8, "Wasserstein contraction rate", ok, "; ".join(detail) or "all bounds met")


def test_primary_09_hitting_time_tails():
    t0 = time.monotonic()
    worst_resid = 0.0
    bounds_ok = True
    for x in (0, 1, 3):
        for t in (0.5, 1.0, 2.0):
            rep = hitting_identity_check(1.0, 4.0, x, t, n=200, tol=1e-6)
            worst_resid = max(worst_resid, rep.residual_or_margin)
            bounds_ok = bounds_ok and rep.details["bound_ok"]
    spec = make_builtin("mm1", 1.0, 4.0)
    mc = hitting_time_sample(spec, 1, 1.0, 100_000, seed=42).survival(1.0)
    exact = survival_probability(spec, 1, 1.0)
    mc_ok = abs(mc.mean - exact) <= 3.0 * mc.stderr
    tail = hitting_time_sample(spec, 5, 10.0, 1_000_000, seed=42)
    rates = tail.pointwise_rate(np.array([5.0, 6.0, 7.0, 8.0, 9.0, 10.0]))
    rate_ok = bool(np.all((rates >= 0.9) & (rates <= 1.1)))
    elapsed = time.monotonic() - t0
    report(9, "hitting-time representation and decay",
           worst_resid <= 1e-6 and bounds_ok and mc_ok and rate_ok and elapsed < 120.0,
           f"resid {worst_resid:.3e}, MC z {abs(mc.mean - exact) / mc.stderr:.2f} <= 3, "
           f"rates [{rates.min():.3f},{rates.max():.3f}] in [0.9,1.1], {elapsed:.1f}s")


def test_primary_10_deviation_and_transport_information():
    spec = make_builtin("mm_infty", 1.0, 1.0)
    w = Weight.const()
    worst_dev = 0.0
    for r in (0.25, 1.0, 4.0):
        val = deviation_function(spec, w, 1.0, r)
        closed = (math.sqrt(1.0 + r) - 1.0) ** 2
        worst_dev = max(worst_dev, abs(val.value - closed))
    mu = stationary_distribution(spec, 150)
    x = np.arange(151.0)
    worst_ti = math.inf
    for i in range(10):
        density = 1.0 + (0.1 + 0.02 * i) * np.sin(0.5 + 0.3 * i * x / 10.0 + 0.2 * x)
        density /= float(np.dot(density, mu.probs))
        worst_ti = min(worst_ti, transport_info_margin(spec, w, density, n=150))
    rule = infinite_server_drift_rule(1.0)
    lya = lyapunov_check(spec, w, rule(1.0, 2.0), n=200)
    report(10, "deviation function and transport-information",
           worst_dev <= 1e-4 and worst_ti >= -1e-6 and lya.residual_or_margin <= 1e-10,
           f"dev err {worst_dev:.3e} <= 1e-4, min TI margin {worst_ti:.3e} >= -1e-06, "
           f"Lyapunov resid {lya.residual_or_margin:.3e}")


def test_primary_11_stochastic_domination():
    spec = make_builtin("mm_infty", 1.0, 1.0)
    worst_gap = 0.0
    for x in range(5):
        for t in (0.3, 1.0):
            v = convex_domination_check(spec, x, t, n=200)
            worst_gap = max(worst_gap, abs(v.worst_gap))
            if not v.holds:
                report(11, "domination corollary", False, f"x={x}, t={t}")
    rng = np.random.default_rng(19)
    from bdtwine.model import make_tabulated

    comparisons = True
    for _ in range(10):
        lam_h = 0.3 + rng.random(25)
        nu_h = np.concatenate([[0.0], 0.3 + rng.random(24) + 0.4 * np.arange(1, 25)])
        lam_l = lam_h * rng.uniform(0.4, 1.0, 25)
        nu_l = nu_h * rng.uniform(1.0, 1.6, 25)
        low = make_tabulated([float(v) for v in lam_l], [float(v) for v in nu_l])
        high = make_tabulated([float(v) for v in lam_h], [float(v) for v in nu_h])
        comparisons = comparisons and comparison_lemma_check(
            low, high, int(rng.integers(0, 6)), float(rng.uniform(0.2, 1.5)), n=140
        ).holds
    brute = True
    for _ in range(25):
        size = int(rng.integers(2, 21))
        p, q = random_distribution_pair(rng, size)
        d1, d2 = Distribution(probs=p), Distribution(probs=q)
        for kind, checker in (("stochastic", stochastic_order), ("convex", convex_order)):
            verdict = checker(d1, d2, tol=1e-10)
            gap = functional_order_gap(d1, d2, kind=kind, n_random=150, seed=5)
            brute = brute and (verdict.holds == (gap > -1e-9))
    report(11, "stochastic domination corollaries",
           worst_gap <= 1e-8 and comparisons and brute,
           f"infinite-server equality gap {worst_gap:.3e} <= 1e-08, comparisons hold, brute force agrees")


def test_primary_12_deterministic_outputs(capsys):
    from bdtwine.cli import main

    for _ in range(2):
        for args in (
            ["gap-report", "--model", "mm1", "--lambda", "1", "--nu", "4", "--trunc", "200", "--format", "json"],
            ["simulate", "--kind", "hitting", "--model", "mm1", "--lambda", "1", "--nu", "4",
             "--x0", "1", "--t", "1.0", "--paths", "20000", "--seed", "42", "--format", "json"],
        ):
            code = main(args)
            assert code == 0
    captured = capsys.readouterr().out.strip().split("\n")
    cli_ok = captured[0] == captured[2] and captured[1] == captured[3]
    for line in captured[:2]:
        json.loads(line)

    # the Monte Carlo quantities of criterion 9, dumped and re-run
    spec = make_builtin("mm1", 1.0, 4.0)
    dumps = []
    for _ in range(2):
        mc = hitting_time_sample(spec, 1, 1.0, 100_000, seed=42).survival(1.0)
        tail = hitting_time_sample(spec, 5, 10.0, 1_000_000, seed=42)
        rates = tail.pointwise_rate(np.array([5.0, 6.0, 7.0, 8.0, 9.0, 10.0]))
        dumps.append(json.dumps({"mean": mc.mean, "stderr": mc.stderr, "rates": list(rates)},
                                sort_keys=True, separators=(",", ":")))
    mc_ok = dumps[0] == dumps[1]
    report(12, "byte-identical seeded reruns", cli_ok and mc_ok,
           "2 CLI commands x 2 runs identical; criterion-9 MC values identical")
