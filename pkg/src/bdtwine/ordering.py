"""Stochastic and convex orderings, with the chain-comparison consequences.

Verdicts are exact computations on truncated supports: the stochastic order
compares tails at every state, the convex order compares stop-loss transforms
at every integer threshold.  A verdict computed from laws that carry
nonnegligible truncated tail mass is flagged, not trusted silently.

On top of the raw orders sit two chain-level checks: the comparison lemma
(pointwise rate dominance forces ordered transient laws) and the convex
domination of a unit jump by an independent Bernoulli(e^{-kappa t}) survival
mark, which for the infinite-server queue is an equality in distribution.
Both orderings are reported side by side; neither is asserted to imply the
other beyond the brute-force implication on matched supports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .errors import InvalidParameterError, PreconditionError, SizeGuardError
from .model import Distribution, RateSpec
from .semigroup import build_generator, transient_distribution

__all__ = [
    "OrderingVerdict",
    "stochastic_order",
    "convex_order",
    "comparison_lemma_check",
    "domination_pair",
    "convex_domination_check",
    "binomial_domination_check",
    "functional_order_gap",
    "laplace_report",
]

TAIL_FLAG = 1e-10
BRUTE_CAP = 20


@dataclass(frozen=True)
class OrderingVerdict:
    """Signed worst-case gap of an ordering test; negative means violation."""

    holds: bool
    worst_point: int
    worst_gap: float
    truncated: bool
    kind: str
    tol: float

    def as_dict(self) -> dict:
        return {
            "holds": self.holds,
            "worst_point": self.worst_point,
            "worst_gap": self.worst_gap,
            "truncated": self.truncated,
            "kind": self.kind,
            "tol": self.tol,
        }


def _common(d1: Distribution, d2: Distribution) -> None:
    if d1.probs.shape != d2.probs.shape:
        raise InvalidParameterError("orderings need laws on a common truncation")


def _tails(p: np.ndarray) -> np.ndarray:
    return np.cumsum(p[::-1])[::-1]


def stochastic_order(d1: Distribution, d2: Distribution, tol: float = 1e-12) -> OrderingVerdict:
    """Tail comparison: holds when P(X >= x) <= P(Y >= x) at every state."""
    _common(d1, d2)
    gaps = _tails(d2.probs) - _tails(d1.probs)
    j = int(np.argmin(gaps))
    worst = float(gaps[j])
    return OrderingVerdict(
        holds=worst >= -tol,
        worst_point=j,
        worst_gap=worst,
        truncated=max(d1.tail_mass_bound, d2.tail_mass_bound) > TAIL_FLAG,
        kind="stochastic",
        tol=tol,
    )


def _stop_loss(p: np.ndarray) -> np.ndarray:
    """k -> E[(X - k)^+] for k in {0..n}, exact from the vector."""
    y = np.arange(p.size, dtype=float)
    tail_mass = _tails(p)
    tail_mean = np.cumsum((y * p)[::-1])[::-1]
    return tail_mean - y * tail_mass


def convex_order(d1: Distribution, d2: Distribution, tol: float = 1e-12) -> OrderingVerdict:
    """Stop-loss comparison: holds when E(X-k)^+ <= E(Y-k)^+ at every k.

    Thresholds below 0 add the constant mean difference already visible at
    k = 0, and thresholds past the support vanish, so scanning {0..n} decides
    the order exactly on the truncation.
    """
    _common(d1, d2)
    gaps = _stop_loss(d2.probs) - _stop_loss(d1.probs)
    j = int(np.argmin(gaps))
    worst = float(gaps[j])
    return OrderingVerdict(
        holds=worst >= -tol,
        worst_point=j,
        worst_gap=worst,
        truncated=max(d1.tail_mass_bound, d2.tail_mass_bound) > TAIL_FLAG,
        kind="convex",
        tol=tol,
    )


def comparison_lemma_check(
    spec_low: RateSpec,
    spec_high: RateSpec,
    x0: int,
    t: float,
    n: int = 200,
    tol: float = 1e-10,
) -> OrderingVerdict:
    """Rate dominance forces ordered laws: slower births and faster deaths
    keep the first chain stochastically below the second at matched (x0, t).

    Preconditions lam_low <= lam_high and nu_low >= nu_high are checked
    pointwise on {0..n}; the verdict then compares the transient laws.
    """
    lam_l, lam_h = spec_low.lam_vec(n), spec_high.lam_vec(n)
    nu_l, nu_h = spec_low.nu_vec(n), spec_high.nu_vec(n)
    if np.any(lam_l > lam_h + 1e-12) or np.any(nu_l < nu_h - 1e-12):
        raise PreconditionError("rate dominance fails: need lam_low <= lam_high and nu_low >= nu_high on {0..n}")
    d_low = transient_distribution(build_generator(spec_low, n), x0, t, tol=1e-12)
    d_high = transient_distribution(build_generator(spec_high, n), x0, t, tol=1e-12)
    return stochastic_order(d_low, d_high, tol=tol)


def _jump_kappa(spec: RateSpec, n: int) -> float:
    lam = spec.lam_vec(n + 1)
    nu = spec.nu_vec(n + 1)
    if np.any(np.diff(lam) > 1e-12):
        raise PreconditionError("convex domination needs nonincreasing birth rates")
    kappa = float(np.min(np.diff(nu - lam)))
    if kappa < 0.0:
        raise PreconditionError(f"needs inf d(nu - lam) >= 0, got {kappa:.4g}")
    return kappa


def _convolve_bernoulli(d: Distribution, p: float) -> Distribution:
    probs = (1.0 - p) * d.probs
    probs[1:] += p * d.probs[:-1]
    spill = p * float(d.probs[-1])
    return Distribution(probs=probs, tail_mass_bound=d.tail_mass_bound + spill, label=f"{d.label}*bern({p:g})")


def domination_pair(
    spec: RateSpec, x: int, t: float, n: int = 200, variant: str = "bernoulli"
) -> tuple[Distribution, Distribution]:
    """The two laws compared by the domination corollary.

    'bernoulli': law from x+1 versus law from x plus an independent
    Bernoulli(e^{-kappa t}) survivor; 'binomial' (iterated form): law from x
    versus law from 0 plus Binomial(x, e^{-kappa t}) survivors.
    """
    if x < 0 or t < 0.0:
        raise InvalidParameterError("need x in N and t >= 0")
    kappa = _jump_kappa(spec, n)
    gen = build_generator(spec, n)
    p = math.exp(-kappa * t)
    if variant == "bernoulli":
        upper = transient_distribution(gen, x + 1, t, tol=1e-12) if t > 0 else _delta(x + 1, n)
        base = transient_distribution(gen, x, t, tol=1e-12) if t > 0 else _delta(x, n)
        return upper, _convolve_bernoulli(base, p)
    if variant == "binomial":
        upper = transient_distribution(gen, x, t, tol=1e-12) if t > 0 else _delta(x, n)
        base = transient_distribution(gen, 0, t, tol=1e-12) if t > 0 else _delta(0, n)
        marks = binom.pmf(np.arange(x + 1), x, p)
        probs = np.convolve(base.probs, marks)[: n + 1]
        spill = max(1.0 - float(np.sum(probs)) - base.tail_mass_bound, 0.0)
        dominating = Distribution(
            probs=probs,
            tail_mass_bound=base.tail_mass_bound + spill,
            label=f"{base.label}*binom({x},{p:g})",
        )
        return upper, dominating
    raise InvalidParameterError(f"variant must be 'bernoulli' or 'binomial', got '{variant}'")


def convex_domination_check(
    spec: RateSpec, x: int, t: float, n: int = 200, tol: float = 1e-8
) -> OrderingVerdict:
    """One extra initial customer is convexly dominated by an independent
    Bernoulli(e^{-kappa t}) survivor added to the law from x.

    kappa is the scanned infimum of the jump d(nu - lam); exact equality in
    distribution holds for the infinite-server queue (binomial thinning).
    """
    upper, dominating = domination_pair(spec, x, t, n=n, variant="bernoulli")
    return convex_order(upper, dominating, tol=tol)


def _delta(x: int, n: int) -> Distribution:
    probs = np.zeros(n + 1)
    probs[x] = 1.0
    return Distribution(probs=probs, label=f"delta_{x}")


def binomial_domination_check(
    spec: RateSpec, x: int, t: float, n: int = 200, tol: float = 1e-8
) -> OrderingVerdict:
    """Iterated form: the law from x is convexly dominated by the law from 0
    plus an independent Binomial(x, e^{-kappa t}) count of survivors."""
    upper, dominating = domination_pair(spec, x, t, n=n, variant="binomial")
    return convex_order(upper, dominating, tol=tol)


def functional_order_gap(
    d1: Distribution,
    d2: Distribution,
    kind: str = "stochastic",
    n_random: int = 200,
    seed: int = 0,
) -> float:
    """Worst gap E f(Y) - E f(X) over a brute-force corpus of test functions.

    Stochastic: all threshold indicators plus random nondecreasing functions;
    convex: all hinge functions (y-k)^+ plus random nondecreasing convex
    ones.  Test functions are normalized to sup-norm 1.  Small supports only;
    this is the oracle the closed-form verdicts are audited against.
    """
    _common(d1, d2)
    size = d1.probs.size
    if size > BRUTE_CAP + 1:
        raise SizeGuardError(f"brute-force corpus capped at {BRUTE_CAP + 1} states, got {size}")
    if kind not in ("stochastic", "convex"):
        raise InvalidParameterError(f"kind must be 'stochastic' or 'convex', got '{kind}'")
    rng = np.random.default_rng(seed)
    y = np.arange(size, dtype=float)
    corpus = []
    for k in range(size):
        if kind == "stochastic":
            corpus.append((y >= k).astype(float))
        else:
            corpus.append(np.maximum(y - k, 0.0))
    for _ in range(n_random):
        inc = rng.exponential(1.0, size=size)
        f = np.cumsum(np.cumsum(inc)) if kind == "convex" else np.cumsum(inc)
        corpus.append(f)
    worst = math.inf
    for f in corpus:
        scale = float(np.max(np.abs(f)))
        if scale == 0.0:
            continue
        f = f / scale
        worst = min(worst, float(np.dot(f, d2.probs) - np.dot(f, d1.probs)))
    return worst


def laplace_report(d1: Distribution, d2: Distribution, thetas=(0.1, 0.25, 0.5, 1.0)) -> list[dict]:
    """Moment-generating comparison rows for positive tilts.

    Exponentials are nonnegative, nondecreasing and convex, so convex
    domination implies every row is ordered; this is a derived view, not an
    independent verdict.
    """
    _common(d1, d2)
    y = np.arange(d1.probs.size, dtype=float)
    rows = []
    for theta in thetas:
        if theta <= 0.0:
            raise InvalidParameterError("tilts must be positive")
        e = np.exp(theta * y)
        lhs = float(np.dot(e, d1.probs))
        rhs = float(np.dot(e, d2.probs))
        rows.append({"theta": float(theta), "mgf_1": lhs, "mgf_2": rhs, "ordered": lhs <= rhs + 1e-12})
    return rows
