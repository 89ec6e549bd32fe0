"""Search for weights maximizing the scanned curvature exponent sigma_u.

Three families: the constant weight (single evaluation), geometric weights
u(x) = kappa^x (grid bracket plus golden-section on log kappa), and tabulated
weights (coordinate ascent on log u with several starts, one of them seeded
by the geometric optimum).  Every accepted improvement is recorded in a trace
that can be dumped as CSV; any sigma_u produced here is a certified lower
bound for the spectral gap up to truncation effects, which `gap_report`
quantifies by computing the gap itself.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError, NumericalFailureError
from .inequalities import spectral_gap
from .model import RateSpec, Weight, chen_exponent, ergodicity_report

__all__ = [
    "WeightFamily",
    "TraceRow",
    "OptimizeResult",
    "GapReport",
    "optimize_weight",
    "gap_report",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class WeightFamily:
    """Parametric family searched by the optimizer.

    kind: 'constant', 'geometric' (bracket on the ratio), or 'tabulated'
    (dim free log-weights, continued geometrically past the table).
    """

    kind: str = "geometric"
    kappa_min: float = 0.05
    kappa_max: float = 20.0
    dim: int = 24

    def __post_init__(self):
        if self.kind not in ("constant", "geometric", "tabulated"):
            raise InvalidParameterError(f"unknown family kind '{self.kind}'")
        if not (0.0 < self.kappa_min < self.kappa_max):
            raise InvalidParameterError("need 0 < kappa_min < kappa_max")
        if self.dim < 2:
            raise InvalidParameterError("tabulated family needs dim >= 2")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    sigma: float
    params_hash: str


@dataclass(frozen=True)
class OptimizeResult:
    """Best weight found, its exponent, and the search audit trail."""

    sigma: float
    weight: Weight
    family: str
    params: tuple
    evaluations: int
    provisional: bool
    converged: bool
    trace: tuple

    def __float__(self) -> float:
        return self.sigma

    def write_trace(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "sigma", "params_hash"])
            for row in self.trace:
                writer.writerow([row.iteration, f"{row.sigma:.17g}", row.params_hash])


def _hash_params(params) -> str:
    arr = np.asarray(params, dtype=float)
    return hashlib.sha1(arr.tobytes()).hexdigest()[:12]


class _Recorder:
    """Counts evaluations and keeps the improvement trace."""

    def __init__(self, budget: int):
        self.budget = budget
        self.count = 0
        self.best = -math.inf
        self.rows: list[TraceRow] = []

    def record(self, sigma: float, params) -> None:
        self.count += 1
        if sigma > self.best:
            self.best = sigma
            self.rows.append(TraceRow(self.count, sigma, _hash_params(params)))

    @property
    def exhausted(self) -> bool:
        return self.count >= self.budget


def _eval_geometric(spec: RateSpec, kappa: float, scan: int, rec: _Recorder) -> float:
    sigma = float(chen_exponent(spec, Weight.geometric(kappa), scan_range=scan))
    rec.record(sigma, [kappa])
    return sigma


def _golden_geometric(spec: RateSpec, family: WeightFamily, scan: int, rec: _Recorder):
    """Coarse log-grid to bracket the peak, then golden-section refinement."""
    lo, hi = math.log(family.kappa_min), math.log(family.kappa_max)
    grid = np.linspace(lo, hi, 41)
    vals = [_eval_geometric(spec, math.exp(s), scan, rec) for s in grid]
    j = int(np.argmax(vals))
    a = grid[max(j - 1, 0)]
    b = grid[min(j + 1, len(grid) - 1)]

    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc = _eval_geometric(spec, math.exp(c), scan, rec)
    fd = _eval_geometric(spec, math.exp(d), scan, rec)
    while (b - a) > 1e-12 and not rec.exhausted:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = _eval_geometric(spec, math.exp(c), scan, rec)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = _eval_geometric(spec, math.exp(d), scan, rec)
    s_best = c if fc >= fd else d
    return math.exp(s_best), max(fc, fd)


def _eval_table(spec: RateSpec, z: np.ndarray, scan: int, rec: _Recorder) -> float:
    w = Weight.table(np.exp(z - z[0]).tolist(), tail_rule="hold_ratio")
    sigma = float(chen_exponent(spec, w, scan_range=scan))
    rec.record(sigma, z - z[0])
    return sigma


def _coordinate_ascent(spec: RateSpec, z0: np.ndarray, scan: int, rec: _Recorder):
    """Cyclic line searches on each free log-weight, shrinking steps."""
    z = z0.copy()
    best = _eval_table(spec, z, scan, rec)
    step = 0.5
    while step > 1e-11 and not rec.exhausted:
        improved = False
        for i in range(1, z.size):  # z[0] pinned: sigma is scale invariant
            for sgn in (1.0, -1.0):
                while not rec.exhausted:
                    trial = z.copy()
                    trial[i] += sgn * step
                    val = _eval_table(spec, trial, scan, rec)
                    if val > best + 1e-15:
                        z, best, improved = trial, val, True
                    else:
                        break
        if not improved:
            step *= 0.5
    return z, best


def optimize_weight(
    spec: RateSpec,
    family: WeightFamily | None = None,
    n: int = 200,
    budget: int = 20000,
    seed: int = 42,
    starts: int = 5,
    trace_path: str | None = None,
) -> OptimizeResult:
    """Maximize the curvature exponent sigma_u over a weight family.

    The scan range is the truncation n; a result whose potential attains its
    infimum at the scan boundary is flagged provisional (the true infimum may
    lie beyond).  Tabulated searches run coordinate ascent from `starts`
    seeds: constant, the geometric optimum, and seeded random perturbations.
    """
    if family is None:
        family = WeightFamily()
    if n < 4:
        raise InvalidParameterError("n must be >= 4")
    scan = n - 1
    rec = _Recorder(budget)

    if family.kind == "constant":
        w = Weight.const()
        chen = chen_exponent(spec, w, scan_range=scan)
        rec.record(chen.value, [1.0])
        params: tuple = (1.0,)
        weight, sigma, converged = w, chen.value, True
    elif family.kind == "geometric":
        kappa, sigma = _golden_geometric(spec, family, scan, rec)
        weight = Weight.geometric(kappa)
        chen = chen_exponent(spec, weight, scan_range=scan)
        params = (kappa,)
        converged = not rec.exhausted
    else:
        dim = min(family.dim, n)
        kappa_seed, _ = _golden_geometric(spec, family, scan, rec)
        rng = np.random.default_rng(seed)
        xs = np.arange(dim, dtype=float)
        seeds = [np.zeros(dim), xs * math.log(kappa_seed)]
        while len(seeds) < max(starts, 2):
            base = seeds[len(seeds) % 2]
            seeds.append(base + rng.normal(0.0, 0.3, size=dim))
        best_z, best_sigma = None, -math.inf
        for z0 in seeds:
            z, val = _coordinate_ascent(spec, z0, scan, rec)
            if val > best_sigma:
                best_z, best_sigma = z, val
            if rec.exhausted:
                break
        best_z = best_z - best_z[0]
        weight = Weight.table(np.exp(best_z).tolist(), tail_rule="hold_ratio")
        chen = chen_exponent(spec, weight, scan_range=scan)
        sigma = best_sigma
        params = tuple(np.exp(best_z).tolist())
        converged = not rec.exhausted

    result = OptimizeResult(
        sigma=float(sigma),
        weight=weight,
        family=family.kind,
        params=params,
        evaluations=rec.count,
        provisional=bool(chen.at_boundary),
        converged=converged,
        trace=tuple(rec.rows),
    )
    if trace_path is not None:
        result.write_trace(trace_path)
    return result


@dataclass(frozen=True)
class GapReport:
    """Spectral gap vs the best certified curvature lower bound."""

    gap: float
    sigma_star: float
    ratio: float
    sound: bool
    warnings: tuple
    n: int
    optimum: OptimizeResult

    def as_dict(self) -> dict:
        return {
            "gap": self.gap,
            "sigma_star": self.sigma_star,
            "ratio": self.ratio,
            "sound": self.sound,
            "warnings": list(self.warnings),
            "n": self.n,
            "family": self.optimum.family,
            "provisional": self.optimum.provisional,
            "evaluations": self.optimum.evaluations,
        }


def gap_report(
    spec: RateSpec,
    family: WeightFamily | None = None,
    n: int = 200,
    budget: int = 20000,
    seed: int = 42,
) -> GapReport:
    """Optimize sigma_u, compute the truncated spectral gap, compare.

    sound means sigma_star <= gap within a 2% truncation allowance; a
    violation would contradict the Poincare inequality and is reported rather
    than raised, so callers can inspect the offending configuration.  Carries
    warnings when the ergodicity screens are not conclusive.
    """
    opt = optimize_weight(spec, family=family, n=n, budget=budget, seed=seed)
    gap = spectral_gap(spec, n=n)
    warnings = []
    erg = ergodicity_report(spec)
    if erg.recurrent != "holds":
        warnings.append(f"recurrence screen: {erg.recurrent}")
    if erg.nonexplosive != "holds":
        warnings.append(f"non-explosion screen: {erg.nonexplosive}")
    if opt.provisional:
        warnings.append("optimum potential attains its infimum at the scan boundary")
    sound = opt.sigma <= gap * 1.02 + 1e-9
    ratio = opt.sigma / gap if gap > 0 else math.nan
    return GapReport(
        gap=float(gap),
        sigma_star=float(opt.sigma),
        ratio=float(ratio),
        sound=bool(sound),
        warnings=tuple(warnings),
        n=n,
        optimum=opt,
    )
