"""Monte Carlo engines: paths, Feynman-Kac weights, hitting times, couplings.

Randomness is counter-based (Philox) and fully keyed: a generator is derived
from (seed, domain, stream) where the domain tags the sampler kind and the
stream indexes a 4096-path block (or a single path for `sample_path` and
`coupled_mm1_paths`).  Batch estimators therefore reproduce bit for bit for
a given seed, and estimates from disjoint stream ranges pool exactly through
the sums carried by McEstimate.

The block engines simulate whole blocks even when fewer paths are requested
and keep the leading ones, so an estimate over blocks {0..k} equals the merge
of the blockwise estimates regardless of how the request was split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import binom, poisson

from .errors import InvalidParameterError, PreconditionError
from .model import Distribution, RateSpec, make_builtin

__all__ = [
    "BLOCK",
    "Path",
    "McEstimate",
    "HittingTimeSample",
    "sample_path",
    "feynman_kac_estimate",
    "hitting_time_sample",
    "coupled_mm1_paths",
    "coupled_survival_estimate",
    "mehler_distribution",
]

BLOCK = 4096

_DOMAINS = {"path": 1, "feynman_kac": 2, "hitting": 3, "coupling": 4}


def _generator(seed: int, domain: str, stream: int) -> np.random.Generator:
    key = np.array([np.uint64(seed), np.uint64((_DOMAINS[domain] << 48) + stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Path:
    """One trajectory: jump times (starting at 0) and the states in between."""

    times: np.ndarray
    states: np.ndarray
    t_max: float
    x0: int

    @property
    def n_jumps(self) -> int:
        return self.times.size - 1

    def state_at(self, t: float) -> int:
        if t < 0.0 or t > self.t_max:
            raise InvalidParameterError(f"t must lie in [0, {self.t_max}]")
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        return int(self.states[j])

    def hitting_time(self, target: int) -> float:
        """First jump time at which the path sits at `target`; inf if unseen."""
        hits = np.nonzero(self.states == target)[0]
        return float(self.times[hits[0]]) if hits.size else math.inf


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with the raw sums needed for exact pooling."""

    n: int
    total: float
    total_sq: float
    label: str = ""

    @property
    def mean(self) -> float:
        return self.total / self.n

    @property
    def variance(self) -> float:
        if self.n < 2:
            return math.nan
        v = (self.total_sq - self.total * self.total / self.n) / (self.n - 1)
        return max(v, 0.0)

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n)

    def __float__(self) -> float:
        return self.mean

    def merge(self, other: "McEstimate") -> "McEstimate":
        return McEstimate(
            n=self.n + other.n,
            total=self.total + other.total,
            total_sq=self.total_sq + other.total_sq,
            label=self.label or other.label,
        )

    @staticmethod
    def from_samples(samples: np.ndarray, label: str = "") -> "McEstimate":
        samples = np.asarray(samples, dtype=float)
        return McEstimate(
            n=samples.size,
            total=float(np.sum(samples)),
            total_sq=float(np.sum(samples * samples)),
            label=label,
        )


class _RateTable:
    """Vector lookup of the rates, grown on demand as paths climb."""

    def __init__(self, spec: RateSpec, v: Callable[[int], float] | None = None):
        self.spec = spec
        self.vfun = v
        self.size = 0
        self._grow(64)

    def _grow(self, m: int) -> None:
        self.lam = self.spec.lam_vec(m)
        self.nu = self.spec.nu_vec(m)
        self.v = (
            np.array([float(self.vfun(x)) for x in range(m + 1)])
            if self.vfun is not None
            else np.zeros(m + 1)
        )
        self.size = m

    def ensure(self, m: int) -> None:
        if m > self.size:
            self._grow(max(m, 2 * self.size))


def sample_path(spec: RateSpec, x0: int, t_max: float, seed: int = 42, stream: int = 0) -> Path:
    """One trajectory by Gillespie stepping up to time t_max."""
    if x0 < 0:
        raise InvalidParameterError("x0 must be a state in N")
    if t_max <= 0.0:
        raise InvalidParameterError("t_max must be > 0")
    g = _generator(seed, "path", stream)
    t, x = 0.0, int(x0)
    times, states = [0.0], [x]
    while True:
        lam, nu = float(spec.lam(x)), float(spec.nu(x))
        total = lam + nu
        if total <= 0.0:
            break
        t += g.exponential(1.0 / total)
        if t >= t_max:
            break
        x = x + 1 if g.random() * total < lam else x - 1
        times.append(t)
        states.append(x)
    return Path(times=np.array(times), states=np.array(states, dtype=np.int64), t_max=t_max, x0=x0)


def _simulate_block(
    table: _RateTable,
    g: np.random.Generator,
    n: int,
    x0: int,
    t_end: float,
    stop_at: int | None = None,
):
    """Vectorized wave simulation of one block of n paths.

    Returns (final_states, accumulated integral of v, hit times).  Paths that
    reach `stop_at` freeze there, recording the hit time; everyone else runs
    until t_end (absorbing states just wait the clock out).
    """
    states = np.full(n, x0, dtype=np.int64)
    t_cur = np.zeros(n)
    acc = np.zeros(n)
    hit = np.full(n, math.inf)
    alive = np.ones(n, dtype=bool)
    if stop_at is not None and x0 == stop_at:
        hit[:] = 0.0
        alive[:] = False

    while np.any(alive):
        idx = np.nonzero(alive)[0]
        xs = states[idx]
        table.ensure(int(xs.max()) + 2)
        lam = table.lam[xs]
        nu = table.nu[xs]
        tot = lam + nu
        expo = g.exponential(1.0, size=idx.size)
        unif = g.random(idx.size)
        with np.errstate(divide="ignore"):
            dt = np.where(tot > 0.0, expo / np.where(tot > 0.0, tot, 1.0), math.inf)
        t_new = t_cur[idx] + dt
        crossed = t_new >= t_end
        acc[idx] += table.v[xs] * (np.minimum(t_new, t_end) - t_cur[idx])

        done = idx[crossed]
        alive[done] = False
        move = idx[~crossed]
        if move.size:
            up = unif[~crossed] * tot[~crossed] < lam[~crossed]
            states[move] += np.where(up, 1, -1)
            t_cur[move] = t_new[~crossed]
            if stop_at is not None:
                hits = move[states[move] == stop_at]
                if hits.size:
                    hit[hits] = t_cur[hits]
                    alive[hits] = False
    return states, acc, hit


def feynman_kac_estimate(
    spec: RateSpec,
    v: Callable[[int], float],
    f: Callable[[int], float],
    x0: int,
    t: float,
    n_paths: int,
    seed: int = 42,
    stream_offset: int = 0,
) -> McEstimate:
    """Monte Carlo estimate of E_x0[ f(X_t) exp(-int_0^t v(X_s) ds) ].

    The potential integral is exact along each piecewise-constant path, so
    the only error is statistical.  Paths are simulated in 4096-path blocks
    keyed by (seed, 'feynman_kac', stream_offset + block).
    """
    if n_paths < 1:
        raise InvalidParameterError("n_paths must be >= 1")
    if t <= 0.0:
        raise InvalidParameterError("t must be > 0")
    est = McEstimate(0, 0.0, 0.0, label="feynman_kac")
    n_blocks = (n_paths + BLOCK - 1) // BLOCK
    table = _RateTable(spec, v=v)
    for b in range(n_blocks):
        g = _generator(seed, "feynman_kac", stream_offset + b)
        states, acc, _ = _simulate_block(table, g, BLOCK, x0, t)
        keep = min(BLOCK, n_paths - b * BLOCK)
        uniq = np.unique(states[:keep])
        fvals = np.array([float(f(int(x))) for x in uniq])
        samples = fvals[np.searchsorted(uniq, states[:keep])] * np.exp(-acc[:keep])
        est = est.merge(McEstimate.from_samples(samples, label="feynman_kac"))
    return est


@dataclass(frozen=True)
class HittingTimeSample:
    """Censored sample of first-passage times to a target state.

    Censoring is deterministic at t_cap, so the product-limit estimator of
    the survival function coincides with the empirical tail; `survival` and
    `pointwise_rate` evaluate it and its -log/t transform.
    """

    times: np.ndarray
    censored: np.ndarray
    t_cap: float
    target: int
    x0: int

    @property
    def n(self) -> int:
        return self.times.size

    def survival(self, t: float) -> McEstimate:
        if t < 0.0 or t > self.t_cap:
            raise InvalidParameterError(f"t must lie in [0, {self.t_cap}]")
        ind = (self.censored | (self.times > t)).astype(float)
        return McEstimate.from_samples(ind, label=f"survival@{t:g}")

    def survival_curve(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        return np.array([self.survival(float(t)).mean for t in ts])

    def pointwise_rate(self, ts: np.ndarray) -> np.ndarray:
        """-log S_hat(t) / t, the pointwise exponential decay estimate."""
        ts = np.asarray(ts, dtype=float)
        s = self.survival_curve(ts)
        if np.any(s <= 0.0):
            raise PreconditionError("empirical survival hit zero; raise n_paths or lower t")
        return -np.log(s) / ts


def hitting_time_sample(
    spec: RateSpec,
    x0: int,
    t_cap: float,
    n_paths: int,
    target: int = 0,
    seed: int = 42,
    stream_offset: int = 0,
) -> HittingTimeSample:
    """Sample first-passage times to `target`, censored at t_cap."""
    if n_paths < 1:
        raise InvalidParameterError("n_paths must be >= 1")
    if t_cap <= 0.0:
        raise InvalidParameterError("t_cap must be > 0")
    if x0 < 0 or target < 0:
        raise InvalidParameterError("states must lie in N")
    times = np.empty(n_paths)
    table = _RateTable(spec)
    n_blocks = (n_paths + BLOCK - 1) // BLOCK
    for b in range(n_blocks):
        g = _generator(seed, "hitting", stream_offset + b)
        _, _, hit = _simulate_block(table, g, BLOCK, x0, t_cap, stop_at=target)
        keep = min(BLOCK, n_paths - b * BLOCK)
        times[b * BLOCK : b * BLOCK + keep] = hit[:keep]
    censored = ~np.isfinite(times)
    return HittingTimeSample(
        times=np.where(censored, t_cap, times),
        censored=censored,
        t_cap=t_cap,
        target=target,
        x0=x0,
    )


def coupled_mm1_paths(
    lam: float, nu: float, x0: int, t_max: float, seed: int = 42, stream: int = 0
) -> tuple[Path, Path]:
    """Two single-server queue paths from x0+1 and x0 sharing every clock.

    Births move both copies; deaths move every copy that is off the floor.
    The difference starts at 1, never increases, and drops to 0 exactly when
    the upper copy first reaches 0, so P(copies differ at t) is pathwise the
    survival P(T_0 > t) of the upper chain.
    """
    if min(lam, nu) <= 0.0:
        raise InvalidParameterError("need lam > 0 and nu > 0")
    if x0 < 0:
        raise InvalidParameterError("x0 must be a state in N")
    if t_max <= 0.0:
        raise InvalidParameterError("t_max must be > 0")
    g = _generator(seed, "coupling", stream)
    t = 0.0
    hi, lo = x0 + 1, x0
    times, his, los = [0.0], [hi], [lo]
    total = lam + nu
    while True:
        t += g.exponential(1.0 / total)
        if t >= t_max:
            break
        if g.random() * total < lam:
            hi += 1
            lo += 1
        else:
            hi = max(hi - 1, 0)
            lo = max(lo - 1, 0)
        times.append(t)
        his.append(hi)
        los.append(lo)
    upper = Path(times=np.array(times), states=np.array(his, dtype=np.int64), t_max=t_max, x0=x0 + 1)
    lower = Path(times=np.array(times), states=np.array(los, dtype=np.int64), t_max=t_max, x0=x0)
    return upper, lower


def coupled_survival_estimate(
    lam: float, nu: float, x0: int, t: float, n_paths: int, seed: int = 42
) -> McEstimate:
    """P(coupled copies differ at t), an exact-coupling survival estimator.

    Uses the same pair construction as `coupled_mm1_paths` but vectorized:
    the indicator equals 1{T_0 of the upper copy > t} path by path.
    """
    if n_paths < 1:
        raise InvalidParameterError("n_paths must be >= 1")
    spec = make_builtin("mm1", lam, nu)
    sample = hitting_time_sample(spec, x0 + 1, t, n_paths, target=0, seed=seed)
    ind = sample.censored.astype(float)  # censored at t means T_0 > t
    return McEstimate.from_samples(ind, label="coupled_survival")


def mehler_distribution(lam: float, nu: float, x0: int, t: float, n: int = 200) -> Distribution:
    """Exact time-t law of the infinite-server queue from state x0.

    Binomial thinning of the initial x0 customers at rate e^{-nu t},
    convolved with a Poisson((lam/nu)(1 - e^{-nu t})) influx.
    """
    if min(lam, nu) <= 0.0:
        raise InvalidParameterError("need lam > 0 and nu > 0")
    if x0 < 0 or t < 0.0:
        raise InvalidParameterError("need x0 in N and t >= 0")
    p = math.exp(-nu * t)
    rate = (lam / nu) * (1.0 - p)
    thin = binom.pmf(np.arange(x0 + 1), x0, p)
    influx = poisson.pmf(np.arange(n + 1), rate) if rate > 0.0 else np.eye(1, n + 1, 0)[0]
    probs = np.convolve(thin, influx)[: n + 1]
    tail = max(1.0 - float(np.sum(probs)), 0.0)
    return Distribution(probs=probs, tail_mass_bound=tail, label=f"mehler(x0={x0},t={t:g})")
