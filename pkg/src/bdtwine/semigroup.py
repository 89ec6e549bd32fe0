"""Truncated generators and their (Feynman-Kac) semigroups.

Truncation is reflecting: the last birth rate is zeroed so the conservative
generator keeps zero row sums.  Semigroup action uses uniformization,

    e^{tA} f = sum_k  P(Pois(Lambda t) = k) M^k f,   M = I + A / Lambda,

with Lambda >= max_x(lam + nu + V) so M stays entrywise nonnegative when the
potential V is nonnegative; the Poisson tail then gives an a priori bound on
the truncation error of the series.  For potentials taking negative values we
fall back to the dense matrix exponential, which stays correct (merely slower)
for any lower-bounded V.

Everything here is expressed with tridiagonal matvecs, so a single semigroup
application costs O(K n) for K ~ Lambda t + sqrt(Lambda t) series terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import (
    InvalidModelError,
    InvalidParameterError,
    NumericalFailureError,
    SizeGuardError,
)
from .model import Distribution, RateSpec

__all__ = [
    "TruncatedGenerator",
    "build_generator",
    "apply_semigroup",
    "expm_oracle",
    "transient_distribution",
    "survival_probability",
    "poisson_solve",
    "boundary_margin",
]

EXPM_SIZE_CAP = 2000


@dataclass
class TruncatedGenerator:
    """Tridiagonal generator on {0..n}, reflecting at n, minus diag(potential).

    ``lam[n]`` is forced to 0.  ``potential`` of None means the conservative
    generator; a nonnegative potential keeps uniformization available, a
    signed one routes semigroup calls through the dense exponential.
    """

    n: int
    lam: np.ndarray
    nu: np.ndarray
    potential: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float).copy()
        self.nu = np.asarray(self.nu, dtype=float).copy()
        if self.lam.shape != (self.n + 1,) or self.nu.shape != (self.n + 1,):
            raise InvalidModelError("rate vectors must have length n+1")
        if np.any(self.lam < 0.0) or np.any(self.nu < 0.0):
            raise InvalidModelError("negative rate encountered while building the generator")
        self.lam[self.n] = 0.0
        self.nu[0] = 0.0
        if self.potential is not None:
            self.potential = np.asarray(self.potential, dtype=float).copy()
            if self.potential.shape != (self.n + 1,):
                raise InvalidModelError("potential vector must have length n+1")
            if not np.all(np.isfinite(self.potential)):
                raise InvalidModelError("potential must be finite on the truncation")

    @property
    def v(self) -> np.ndarray:
        return np.zeros(self.n + 1) if self.potential is None else self.potential

    @property
    def conservative(self) -> bool:
        return self.potential is None

    def uniformization_rate(self) -> float:
        return float(np.max(self.lam + self.nu + np.maximum(self.v, 0.0)))

    def matrix(self) -> np.ndarray:
        """Dense (n+1)x(n+1) matrix; rows index the departure state."""
        a = np.diag(-(self.lam + self.nu + self.v))
        idx = np.arange(self.n)
        a[idx, idx + 1] = self.lam[:-1]
        a[idx + 1, idx] = self.nu[1:]
        return a

    def apply(self, f: np.ndarray) -> np.ndarray:
        """A @ f for functions f on {0..n} (f may be a stack of columns)."""
        out = -(self.lam + self.nu + self.v).reshape(-1, *([1] * (f.ndim - 1))) * f
        out[:-1] += self.lam[:-1].reshape(-1, *([1] * (f.ndim - 1))) * f[1:]
        out[1:] += self.nu[1:].reshape(-1, *([1] * (f.ndim - 1))) * f[:-1]
        return out

    def apply_transpose(self, p: np.ndarray) -> np.ndarray:
        """A^T @ p for measures p on {0..n}."""
        out = -(self.lam + self.nu + self.v) * p
        out[1:] += self.lam[:-1] * p[:-1]
        out[:-1] += self.nu[1:] * p[1:]
        return out


def build_generator(spec: RateSpec, n: int, v=None, label: str = "") -> TruncatedGenerator:
    """Tabulate ``spec`` on {0..n} with reflecting truncation.

    ``v`` may be None, a callable on states, or a length-(n+1) vector; it is
    subtracted from the diagonal (killing/Feynman-Kac term).
    """
    if n < 1:
        raise InvalidParameterError("truncation level n must be >= 1")
    spec.validate_on(n)
    lam = spec.lam_vec(n)
    nu = spec.nu_vec(n)
    if v is not None and callable(v):
        v = np.array([float(v(x)) for x in range(n + 1)])
    return TruncatedGenerator(n=n, lam=lam, nu=nu, potential=v, label=label or spec.label)


def _poisson_cutoff(r: float, tol: float) -> int:
    """Smallest K with P(Pois(r) > K) <= tol (conservative).

    Works from log survival probabilities so tolerances far below the
    representable range (huge test functions) still get a finite cutoff.
    """
    if r <= 0.0:
        return 0
    log_tol = math.log(max(tol, 1e-300))
    k = int(math.ceil(r + 10.0 * math.sqrt(r) + 10.0))
    while poisson.logsf(k, r) > log_tol:
        k = int(math.ceil(1.2 * k + 10.0))
        if k > 100_000_000:
            raise NumericalFailureError("uniformization series cutoff exceeded 1e8 terms")
    return k + 1


def _uniformized_expectation(gen: TruncatedGenerator, f: np.ndarray, t: float, tol: float) -> np.ndarray:
    """Uniformization series for e^{tA} f; requires nonnegative potential."""
    lam_tot = gen.uniformization_rate()
    r = lam_tot * t
    scale = float(np.max(np.abs(f)))
    if r == 0.0 or scale == 0.0:
        return f.astype(float).copy()
    k_max = _poisson_cutoff(r, tol / max(1.0, scale))
    ks = np.arange(k_max + 1)
    with np.errstate(under="ignore"):
        weights = np.exp(ks * np.log(r) - r - gammaln(ks + 1))

    out = np.zeros_like(f, dtype=float)
    term = f.astype(float).copy()
    inv = 1.0 / lam_tot
    for k in range(k_max + 1):
        if weights[k] > 0.0:
            out += weights[k] * term
        term = term + inv * gen.apply(term)
    return out


def apply_semigroup(gen: TruncatedGenerator, f: np.ndarray, t: float, tol: float = 1e-9) -> np.ndarray:
    """Evaluate e^{tA} f to additive sup-norm tolerance ``tol``.

    Uniformization when the potential is nonnegative (substochastic jump
    matrix, Poisson-tail error control); dense exponential otherwise.
    ``f`` may carry extra column dimensions, which are propagated together.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[0] != gen.n + 1:
        raise InvalidParameterError(f"function must be defined on {{0..{gen.n}}}")
    if not np.all(np.isfinite(f)):
        raise InvalidParameterError("function values must be finite")
    if t < 0.0:
        raise InvalidParameterError("time t must be >= 0")
    if tol <= 0.0:
        raise InvalidParameterError("tol must be > 0")
    if t == 0.0:
        return f.copy()
    if np.any(gen.v < 0.0):
        return expm_oracle(gen, f, t)
    return _uniformized_expectation(gen, f, t, tol)


def expm_oracle(gen: TruncatedGenerator, f: np.ndarray, t: float) -> np.ndarray:
    """Dense scaling-and-squaring reference for e^{tA} f.

    Exact up to dense linear-algebra roundoff; guarded to n <= 2000 so the
    cubic cost cannot be triggered by accident.
    """
    if gen.n + 1 > EXPM_SIZE_CAP:
        raise SizeGuardError(f"expm oracle capped at n+1 <= {EXPM_SIZE_CAP}, got {gen.n + 1}")
    f = np.asarray(f, dtype=float)
    if f.shape[0] != gen.n + 1:
        raise InvalidParameterError(f"function must be defined on {{0..{gen.n}}}")
    if t < 0.0:
        raise InvalidParameterError("time t must be >= 0")
    return expm(t * gen.matrix()) @ f


def transient_distribution(gen: TruncatedGenerator, x0: int, t: float, tol: float = 1e-9) -> Distribution:
    """Law of X_t on the truncated chain started from ``x0``.

    Runs the uniformization series on the transpose, so the result is a
    genuine sub-probability vector summing to 1 within ``tol`` (exactly 1 up
    to roundoff for the conservative reflecting truncation).
    """
    if not gen.conservative:
        raise InvalidParameterError("transient law needs the conservative generator (no potential)")
    if not (0 <= x0 <= gen.n):
        raise InvalidParameterError(f"x0 must lie in {{0..{gen.n}}}")
    lam_tot = gen.uniformization_rate()
    r = lam_tot * t
    delta = np.zeros(gen.n + 1)
    delta[x0] = 1.0
    if r == 0.0:
        return Distribution(probs=delta, tail_mass_bound=0.0, label=f"transient[{gen.label}]")
    k_max = _poisson_cutoff(r, tol)
    ks = np.arange(k_max + 1)
    with np.errstate(under="ignore"):
        weights = np.exp(ks * np.log(r) - r - gammaln(ks + 1))
    out = np.zeros_like(delta)
    term = delta
    inv = 1.0 / lam_tot
    for k in range(k_max + 1):
        if weights[k] > 0.0:
            out += weights[k] * term
        term = term + inv * gen.apply_transpose(term)
    out = np.maximum(out, 0.0)
    deficit = float(1.0 - out.sum())
    if deficit > 10.0 * tol:
        raise NumericalFailureError(f"transient law lost {deficit:.3e} mass (tol {tol:.1e})")
    return Distribution(probs=out, tail_mass_bound=max(deficit, 0.0), label=f"transient[{gen.label}]")


def survival_probability(spec: RateSpec, x0: int, t: float, n: int = 200, tol: float = 1e-10) -> float:
    """P(T_0 > t | X_0 = x0): mass not yet absorbed at the origin.

    Built on the killed sub-generator over {1..n} (death from state 1 removes
    mass, the top is reflecting), which is substochastic, so uniformization
    applies verbatim.  ``x0 = 0`` returns 0.
    """
    if x0 < 0 or x0 > n:
        raise InvalidParameterError(f"x0 must lie in {{0..{n}}}")
    if t < 0.0:
        raise InvalidParameterError("time t must be >= 0")
    if x0 == 0:
        return 0.0
    spec.validate_on(n)
    # killed chain on {1..n}, re-indexed to {0..n-1}
    lam = np.array([spec.lam(x) for x in range(1, n + 1)])
    nu = np.array([spec.nu(x) for x in range(1, n + 1)])
    lam[-1] = 0.0
    sub = TruncatedGenerator(
        n=n - 1,
        lam=lam,
        # re-indexed death rates: transitions x -> x-1 inside {1..n}
        nu=np.concatenate(([0.0], nu[1:])),
        # killing at the bottom state comes from the true death rate nu(1)
        potential=np.concatenate(([nu[0]], np.zeros(n - 1))),
        label=f"killed[{spec.label}]",
    )
    ones = np.ones(n)
    vals = _uniformized_expectation(sub, ones, t, tol)
    return float(np.clip(vals[x0 - 1], 0.0, 1.0))


def poisson_solve(gen: TruncatedGenerator, mu: Distribution, f: np.ndarray) -> np.ndarray:
    """Solve the centered equation -A g = f - mu(f) with mu(g) = 0.

    The conservative reflecting truncation keeps ``mu`` stationary, so the
    centered right side lies in the range of A; pinning g(0) = 0 removes the
    constant kernel and one refinement pass pushes the residual to roundoff.
    """
    if not gen.conservative:
        raise InvalidParameterError("the Poisson equation uses the conservative generator")
    f = np.asarray(f, dtype=float)
    if f.shape != (gen.n + 1,):
        raise InvalidParameterError(f"f must be a vector on {{0..{gen.n}}}")
    p = mu.probs
    if p.shape != f.shape:
        raise InvalidParameterError("mu and f live on different truncations")

    rhs_full = -(f - float(np.dot(p, f)))
    a = gen.matrix()
    a_pin = a.copy()
    a_pin[0, :] = 0.0
    a_pin[0, 0] = 1.0

    def pinned_solve(r):
        r = r.copy()
        r[0] = 0.0
        return np.linalg.solve(a_pin, r)

    g = pinned_solve(rhs_full)
    g = g + pinned_solve(rhs_full - a @ g)  # one step of iterative refinement
    g = g - float(np.dot(p, g))

    resid = float(np.max(np.abs(a @ g - rhs_full)))
    scale = max(1.0, float(np.max(np.abs(f))))
    if resid > 1e-9 * scale:
        raise NumericalFailureError(f"Poisson solve residual {resid:.3e} above 1e-9")
    return g


def boundary_margin(reach_rate: float, t_max: float) -> int:
    """States to discard near a reflecting truncation after evolving to t_max.

    Influence of the modified boundary travels inward only through up-jumps,
    so the reach is Poisson with mean (max birth rate) * t; the margin covers
    that mean plus ten standard deviations, with a small additive floor.
    """
    r = max(reach_rate, 0.0) * max(t_max, 0.0)
    return int(np.ceil(r + 10.0 * np.sqrt(r) + 5.0))
