"""Birth-death chains on the nonnegative integers.

A chain is specified by its birth rates ``lam(x)`` and death rates ``nu(x)``,
both plain callables so the state space is genuinely unbounded; truncation
happens only when a matrix computation asks for it.  The module also owns the
weight sequences u used to tilt discrete gradients, the associated modified
chain (birth ``u(x+1)/u(x) * lam(x+1)``, death ``u(x-1)/u(x) * nu(x)``), the
potential

    V_u(x) = nu(x+1) - nu_u(x) + lam(x) - lam_u(x),

and the curvature exponent sigma_u = inf_x V_u(x) estimated over a scan range.

Stationary weights are accumulated in log space, so geometric tails far below
the floating-point range are handled without underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidModelError, InvalidParameterError

__all__ = [
    "RateSpec",
    "Weight",
    "Potential",
    "ChenExponent",
    "ErgodicityReport",
    "Distribution",
    "make_builtin",
    "make_tabulated",
    "model_from_config",
    "weight_from_config",
    "ergodicity_report",
    "stationary_distribution",
    "u_modification",
    "potential",
    "chen_exponent",
]

TAIL_RULES = ("hold_last", "linear_extrapolate")
WEIGHT_TAIL_RULES = ("hold_last", "hold_ratio")


@dataclass(frozen=True)
class RateSpec:
    """Birth/death rates of a chain on {0, 1, 2, ...}.

    ``lam(x)`` must be positive for every x >= 0 and ``nu(x)`` positive for
    x >= 1 with ``nu(0) = 0``; violations surface when states are actually
    evaluated.  ``label`` is carried through reports.
    """

    lam: Callable[[int], float]
    nu: Callable[[int], float]
    label: str = ""

    def lam_vec(self, n: int) -> np.ndarray:
        """Birth rates tabulated on {0..n}."""
        return np.array([float(self.lam(x)) for x in range(n + 1)])

    def nu_vec(self, n: int) -> np.ndarray:
        """Death rates tabulated on {0..n}."""
        return np.array([float(self.nu(x)) for x in range(n + 1)])

    def validate_on(self, n: int) -> None:
        lam = self.lam_vec(n)
        nu = self.nu_vec(n)
        if not np.all(np.isfinite(lam)) or not np.all(np.isfinite(nu)):
            raise InvalidModelError(f"{self.label or 'chain'}: non-finite rate on {{0..{n}}}")
        if np.any(lam <= 0.0):
            x = int(np.argmax(lam <= 0.0))
            raise InvalidModelError(f"{self.label or 'chain'}: lam({x}) = {lam[x]} must be > 0")
        if abs(nu[0]) > 0.0:
            raise InvalidModelError(f"{self.label or 'chain'}: nu(0) = {nu[0]} must be 0")
        if n >= 1 and np.any(nu[1:] <= 0.0):
            x = 1 + int(np.argmax(nu[1:] <= 0.0))
            raise InvalidModelError(f"{self.label or 'chain'}: nu({x}) = {nu[x]} must be > 0")


@dataclass(frozen=True)
class Weight:
    """Positive weight sequence u tilting the discrete gradient.

    ``ratio`` optionally gives u(x+1)/u(x) in closed form; rate modifications
    only ever need these quotients, so supplying them keeps fast-growing or
    fast-decaying weights usable far past where u itself leaves the floating
    range.
    """

    u: Callable[[int], float]
    label: str = "const"
    ratio: Callable[[int], float] | None = None

    def ratio_at(self, x: int) -> float:
        if self.ratio is not None:
            return float(self.ratio(x))
        return float(self.u(x + 1)) / float(self.u(x))

    def u_vec(self, n: int) -> np.ndarray:
        vals = np.array([float(self.u(x)) for x in range(n + 1)])
        if np.any(vals <= 0.0) or not np.all(np.isfinite(vals)):
            raise InvalidParameterError(f"weight '{self.label}' must be positive and finite on {{0..{n}}}")
        return vals

    def rho_vec(self, n: int) -> np.ndarray:
        """Cumulative metric coordinate rho(x) = sum_{y<x} u(y) on {0..n}."""
        u = self.u_vec(n)
        rho = np.zeros(n + 1)
        rho[1:] = np.cumsum(u[:-1])
        return rho

    @staticmethod
    def const() -> "Weight":
        return Weight(lambda x: 1.0, label="const", ratio=lambda x: 1.0)

    @staticmethod
    def geometric(kappa: float) -> "Weight":
        if kappa <= 0.0 or not math.isfinite(kappa):
            raise InvalidParameterError(f"geometric weight needs kappa > 0, got {kappa}")
        return Weight(lambda x: kappa**x, label=f"geometric:{kappa:g}", ratio=lambda x: kappa)

    @staticmethod
    def table(values: Sequence[float], tail_rule: str = "hold_last") -> "Weight":
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise InvalidParameterError("weight table must be a non-empty 1-d sequence")
        if np.any(vals <= 0.0) or not np.all(np.isfinite(vals)):
            raise InvalidParameterError("weight table entries must be positive and finite")
        if tail_rule not in WEIGHT_TAIL_RULES:
            raise InvalidParameterError(f"weight tail_rule must be one of {WEIGHT_TAIL_RULES}")
        last = vals[-1]
        # ratio continuation keeps log-concavity of geometric-like tables
        ratio = vals[-1] / vals[-2] if vals.size >= 2 else 1.0

        def u(x: int) -> float:
            if x < vals.size:
                return float(vals[x])
            if tail_rule == "hold_last":
                return float(last)
            return float(last * ratio ** (x - vals.size + 1))

        def r(x: int) -> float:
            if x < vals.size - 1:
                return float(vals[x + 1] / vals[x])
            return 1.0 if tail_rule == "hold_last" else float(ratio)

        return Weight(u, label=f"table[{vals.size}]:{tail_rule}", ratio=r)


@dataclass(frozen=True)
class Potential:
    """Feynman-Kac potential with its scanned infimum."""

    v: Callable[[int], float]
    inf_estimate: float
    inf_range: int
    argmin: int
    at_boundary: bool

    def v_vec(self, n: int) -> np.ndarray:
        return np.array([float(self.v(x)) for x in range(n + 1)])


@dataclass(frozen=True)
class ChenExponent:
    """Scanned infimum of a potential; float-compatible.

    ``at_boundary`` warns that the minimizer sits at the end of the scan
    window, so the reported value is only an upper estimate of the true
    infimum over all states.
    """

    value: float
    argmin: int
    scan_range: int
    at_boundary: bool

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class ErgodicityReport:
    """Partial sums and verdicts for the two ergodicity series.

    ``recurrence`` partial sums are over prod_{y<=x} lam(y-1)/nu(y); the chain
    is positive recurrent when the series converges.  ``nonexplosion`` partial
    sums are over the nested return-cost terms; the chain is non-explosive
    when that series diverges.  Verdicts are finite-scan heuristics and may be
    'inconclusive'.
    """

    recurrence_partial_sums: np.ndarray
    nonexplosion_partial_sums: np.ndarray
    recurrent: str
    nonexplosive: str
    n_terms: int

    def as_dict(self) -> dict:
        return {
            "recurrent": self.recurrent,
            "nonexplosive": self.nonexplosive,
            "n_terms": self.n_terms,
            "recurrence_partial_sum": float(self.recurrence_partial_sums[-1]),
            "nonexplosion_partial_sum": float(self.nonexplosion_partial_sums[-1]),
        }


@dataclass(frozen=True)
class Distribution:
    """Probability vector on {0..n} plus an estimate of the mass beyond n."""

    probs: np.ndarray
    tail_mass_bound: float = 0.0
    label: str = ""

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidParameterError("distribution needs a 1-d probability vector")
        if np.any(p < -1e-12) or not np.all(np.isfinite(p)):
            raise InvalidParameterError("distribution probabilities must be >= 0 and finite")
        object.__setattr__(self, "probs", p)

    @property
    def n(self) -> int:
        return self.probs.size - 1

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)


def make_builtin(kind: str, lam: float, nu: float) -> RateSpec:
    """Construct one of the two built-in queueing chains.

    Parameters
    ----------
    kind : str
        'mm_infty' for the infinite-server queue (birth lam, death nu*x) or
        'mm1' for the single-server queue (birth lam, death nu*1_{x>=1}).
    lam, nu : float
        Positive rate parameters.
    """
    if not (math.isfinite(lam) and lam > 0.0):
        raise InvalidParameterError(f"lam must be a positive finite number, got {lam}")
    if not (math.isfinite(nu) and nu > 0.0):
        raise InvalidParameterError(f"nu must be a positive finite number, got {nu}")
    if kind == "mm_infty":
        return RateSpec(lambda x: lam, lambda x: nu * x, label=f"mm_infty({lam:g},{nu:g})")
    if kind == "mm1":
        return RateSpec(lambda x: lam, lambda x: nu if x >= 1 else 0.0, label=f"mm1({lam:g},{nu:g})")
    raise InvalidParameterError(f"unknown builtin kind '{kind}' (expected 'mm_infty' or 'mm1')")


def make_tabulated(
    lam: Sequence[float],
    nu: Sequence[float],
    tail_rule: str = "hold_last",
    label: str = "",
) -> RateSpec:
    """Chain from rate tables; beyond the table the declared tail rule applies.

    ``lam[x]`` is the birth rate at x and ``nu[x]`` the death rate at x, with
    ``nu[0] = 0`` enforced.  'hold_last' freezes the last entry; the linear
    rule continues with the slope of the last two entries (clipped at a small
    positive floor so rates stay valid).
    """
    lam_t = np.asarray(lam, dtype=float)
    nu_t = np.asarray(nu, dtype=float)
    if lam_t.ndim != 1 or nu_t.ndim != 1 or lam_t.size == 0 or nu_t.size == 0:
        raise InvalidParameterError("rate tables must be non-empty 1-d sequences")
    if tail_rule not in TAIL_RULES:
        raise InvalidParameterError(f"tail_rule must be one of {TAIL_RULES}, got '{tail_rule}'")
    if np.any(lam_t <= 0.0) or not np.all(np.isfinite(lam_t)):
        raise InvalidModelError("birth table entries must be positive and finite")
    if nu_t[0] != 0.0:
        raise InvalidModelError(f"nu[0] must be 0, got {nu_t[0]}")
    if nu_t.size > 1 and (np.any(nu_t[1:] <= 0.0) or not np.all(np.isfinite(nu_t[1:]))):
        raise InvalidModelError("death table entries at x >= 1 must be positive and finite")

    floor = 1e-12

    def extend(table: np.ndarray, x: int) -> float:
        if x < table.size:
            return float(table[x])
        if tail_rule == "hold_last" or table.size < 2:
            return float(table[-1])
        slope = table[-1] - table[-2]
        return float(max(table[-1] + slope * (x - table.size + 1), floor))

    return RateSpec(
        lambda x: extend(lam_t, x),
        lambda x: 0.0 if x == 0 else extend(nu_t, x),
        label=label or f"table[{lam_t.size}]:{tail_rule}",
    )


def model_from_config(cfg: dict) -> tuple[RateSpec, Weight | None]:
    """Build (chain, optional weight) from the JSON model document.

    The document looks like ``{"kind": "mm_infty"|"mm1"|"table", "lambda": ...,
    "nu": ..., "tail_rule": ..., "weight": {...}}``.  Scalar rates go with the
    builtin kinds, arrays with 'table'.
    """
    if not isinstance(cfg, dict):
        raise InvalidParameterError("model config must be a JSON object")
    kind = cfg.get("kind")
    lam = cfg.get("lambda")
    nu = cfg.get("nu")
    if kind in ("mm_infty", "mm1"):
        if not isinstance(lam, (int, float)) or not isinstance(nu, (int, float)):
            raise InvalidParameterError(f"builtin kind '{kind}' needs scalar 'lambda' and 'nu'")
        spec = make_builtin(kind, float(lam), float(nu))
    elif kind == "table":
        if not isinstance(lam, (list, tuple)) or not isinstance(nu, (list, tuple)):
            raise InvalidParameterError("kind 'table' needs array 'lambda' and 'nu'")
        spec = make_tabulated(lam, nu, tail_rule=cfg.get("tail_rule", "hold_last"))
    else:
        raise InvalidParameterError(f"unknown model kind '{kind}'")
    w = weight_from_config(cfg["weight"]) if "weight" in cfg and cfg["weight"] is not None else None
    return spec, w


def weight_from_config(cfg: dict) -> Weight:
    if not isinstance(cfg, dict):
        raise InvalidParameterError("weight config must be a JSON object")
    kind = cfg.get("kind")
    if kind == "const":
        return Weight.const()
    if kind == "geometric":
        if "kappa" not in cfg:
            raise InvalidParameterError("geometric weight needs 'kappa'")
        return Weight.geometric(float(cfg["kappa"]))
    if kind == "table":
        if "values" not in cfg:
            raise InvalidParameterError("table weight needs 'values'")
        return Weight.table(cfg["values"], tail_rule=cfg.get("tail_rule", "hold_last"))
    raise InvalidParameterError(f"unknown weight kind '{kind}'")


def _series_verdict(terms: np.ndarray, partial: np.ndarray, want: str, blowup: float) -> str:
    """Heuristic convergence call from a finite stretch of positive terms."""
    window = min(12, max(3, terms.size // 4))
    tail = terms[-window:]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = tail[1:] / tail[:-1]
    ratios = ratios[np.isfinite(ratios)]
    blown = not math.isfinite(partial[-1]) or partial[-1] > blowup
    vanished = terms[-1] == 0.0 or (terms[-1] < 1e-250 and partial[-1] == partial[-window])
    shrinking = ratios.size > 0 and float(np.max(ratios)) < 0.98
    growing = ratios.size > 0 and float(np.min(ratios)) > 1.0

    if want == "converge":
        if blown or growing:
            return "fails"
        if shrinking or vanished:
            return "holds"
        return "inconclusive"
    # want == "diverge"
    if blown or growing or (ratios.size > 0 and float(np.min(ratios)) >= 0.999):
        return "holds"
    if shrinking or vanished:
        return "fails"
    return "inconclusive"


def ergodicity_report(spec: RateSpec, n_terms: int = 200, blowup_threshold: float = 1e12) -> ErgodicityReport:
    """Partial sums of the recurrence and non-explosion series with verdicts.

    Recurrence demands convergence of sum_x prod_{y=1..x} lam(y-1)/nu(y);
    non-explosion demands divergence of the nested series whose x-th term is
    S_x = (1 + nu(x) S_{x-1}) / lam(x), S_0 = 1/lam(0).  Verdicts use tail
    ratio trends plus the blow-up threshold and stay honest about ambiguity
    by reporting 'inconclusive'.
    """
    if n_terms < 8:
        raise InvalidParameterError("n_terms must be at least 8 for a meaningful trend")
    spec.validate_on(n_terms + 1)
    lam = spec.lam_vec(n_terms + 1)
    nu = spec.nu_vec(n_terms + 1)

    # recurrence terms in log space: log a_x = sum_{y=1..x} log(lam(y-1)/nu(y))
    log_a = np.cumsum(np.log(lam[:n_terms]) - np.log(nu[1 : n_terms + 1]))
    with np.errstate(over="ignore"):
        rec_terms = np.exp(log_a)
        rec_partial = np.cumsum(rec_terms)

    ne_terms = np.empty(n_terms)
    s = 1.0 / lam[0]
    with np.errstate(over="ignore", invalid="ignore"):
        for x in range(1, n_terms + 1):
            s = (1.0 + nu[x] * s) / lam[x]
            ne_terms[x - 1] = s
        ne_partial = np.cumsum(ne_terms)

    return ErgodicityReport(
        recurrence_partial_sums=rec_partial,
        nonexplosion_partial_sums=ne_partial,
        recurrent=_series_verdict(rec_terms, rec_partial, "converge", blowup_threshold),
        nonexplosive=_series_verdict(ne_terms, ne_partial, "diverge", blowup_threshold),
        n_terms=n_terms,
    )


def stationary_distribution(spec: RateSpec, n_trunc: int = 200) -> Distribution:
    """Normalized stationary law on {0..n_trunc}, accumulated in log space.

    The unnormalized weights prod_{y=1..x} lam(y-1)/nu(y) satisfy detailed
    balance by construction; the reported ``tail_mass_bound`` extrapolates the
    mass beyond the truncation geometrically from the last rate ratio.
    """
    if n_trunc < 1:
        raise InvalidParameterError("n_trunc must be >= 1")
    spec.validate_on(n_trunc + 1)
    lam = spec.lam_vec(n_trunc + 1)
    nu = spec.nu_vec(n_trunc + 1)
    log_w = np.zeros(n_trunc + 1)
    log_w[1:] = np.cumsum(np.log(lam[:n_trunc]) - np.log(nu[1 : n_trunc + 1]))
    log_z = logsumexp(log_w)
    probs = np.exp(log_w - log_z)

    r = lam[n_trunc] / nu[n_trunc + 1]
    tail = probs[-1] * r / (1.0 - r) if r < 1.0 else math.inf
    return Distribution(probs=probs, tail_mass_bound=float(tail), label=f"stationary[{spec.label}]")


def u_modification(spec: RateSpec, w: Weight) -> RateSpec:
    """Dual chain seen by the u-weighted gradient.

    Birth ``(u(x+1)/u(x)) lam(x+1)`` and death ``(u(x-1)/u(x)) nu(x)`` with
    death 0 at the origin.  The measure lam * u^2 * mu is reversible for the
    result whenever mu is reversible for the input.
    """
    lam, nu = spec.lam, spec.nu

    def lam_u(x: int) -> float:
        return w.ratio_at(x) * lam(x + 1)

    def nu_u(x: int) -> float:
        return 0.0 if x == 0 else nu(x) / w.ratio_at(x - 1)

    return RateSpec(lam_u, nu_u, label=f"{spec.label or 'chain'}^{w.label}")


def potential(spec: RateSpec, w: Weight, scan_range: int = 200) -> Potential:
    """Feynman-Kac potential V_u of the u-modified gradient flow.

    V_u(x) = nu(x+1) - nu_u(x) + lam(x) - lam_u(x); with the constant weight
    this is the forward difference of (nu - lam).  ``inf_estimate`` scans
    {0..scan_range}; ``at_boundary`` flags a minimizer at the window's edge.
    """
    if scan_range < 1:
        raise InvalidParameterError("scan_range must be >= 1")
    mod = u_modification(spec, w)
    lam, nu = spec.lam, spec.nu
    lam_u, nu_u = mod.lam, mod.nu

    def v(x: int) -> float:
        return nu(x + 1) - nu_u(x) + lam(x) - lam_u(x)

    vals = np.array([v(x) for x in range(scan_range + 1)])
    if not np.all(np.isfinite(vals)):
        raise InvalidModelError("potential is non-finite on the scan range")
    argmin = int(np.argmin(vals))
    return Potential(
        v=v,
        inf_estimate=float(vals[argmin]),
        inf_range=scan_range,
        argmin=argmin,
        at_boundary=argmin == scan_range,
    )


def chen_exponent(spec: RateSpec, w: Weight, scan_range: int = 200) -> ChenExponent:
    """Curvature exponent sigma_u = inf V_u over {0..scan_range}.

    Equals ``potential(spec, w, scan_range).inf_estimate`` exactly.  The
    result compares like a float; ``at_boundary`` warns that the scan window
    may not have captured the true infimum.
    """
    pot = potential(spec, w, scan_range)
    return ChenExponent(
        value=pot.inf_estimate,
        argmin=pot.argmin,
        scan_range=scan_range,
        at_boundary=pot.at_boundary,
    )
