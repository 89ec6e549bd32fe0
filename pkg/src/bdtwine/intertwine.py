"""Machine checks of gradient/semigroup commutation identities.

The central identity: for a chain with semigroup P_t and a positive weight u,
the weighted gradient d_u f(x) = (f(x+1) - f(x)) / u(x) satisfies

    d_u P_t f = Q_t d_u f,

where Q_t is the Feynman-Kac semigroup of the u-modified chain killed at rate
V_u.  Both sides are computed on reflecting truncations by independent
routes (original chain + discrete gradient vs. modified chain + potential),
and compared away from the boundary.  Convex one-sided versions replace the
exact identity by margins that must stay nonnegative:

  * phi(d_u P_t f) <= Q^{c V_u}_t phi(d_u f) for chi-functions with
    phi'(r) r >= c phi(r);
  * B(P_t f, d P_t f) <= Q^{V_1}_t B(f, d f) for the Bregman-type form
    B(r, s) = (phi'(r+s) - phi'(r)) s, under monotone rates and convex -1/phi''.

States within a margin of the truncation are excluded from the comparison;
the margin covers the Poisson-tail reach of up-jumps, which is how boundary
contamination travels inward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidParameterError, PreconditionError
from .model import RateSpec, Weight, potential, u_modification
from .semigroup import apply_semigroup, boundary_margin, build_generator, survival_probability

__all__ = [
    "PhiFunction",
    "VerificationReport",
    "phi_square",
    "phi_rlogr",
    "phi_power",
    "gradients",
    "phi_transforms",
    "verify_intertwining",
    "infinitesimal_residual",
    "verify_subcommutation",
    "verify_bicommutation",
    "hitting_identity_check",
    "bounded_gradient_corpus",
]


@dataclass(frozen=True)
class PhiFunction:
    """Convex function with derivatives, domain interval, and checked flags.

    ``c`` is the largest constant pinned for phi'(r) r >= c phi(r) on the
    domain; ``eqphi_equality`` records that this holds with equality (in which
    case the one-sided gradient bound does not need a signed potential).
    """

    name: str
    lo: float
    hi: float
    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]
    d2phi: Callable[[np.ndarray], np.ndarray]
    c: float
    eqphi_equality: bool
    eqphi_ok: bool = field(default=False)
    neg_recip_convex: bool = field(default=False)

    def in_domain(self, vals: np.ndarray) -> bool:
        vals = np.asarray(vals, dtype=float)
        return bool(np.all(vals > self.lo) and np.all(vals < self.hi))

    def _grid(self, size: int = 400) -> np.ndarray:
        if self.lo == -math.inf and self.hi == math.inf:
            return np.linspace(-40.0, 40.0, size)
        if self.lo == 0.0 and self.hi == math.inf:
            return np.geomspace(1e-4, 1e4, size)
        lo = self.lo if math.isfinite(self.lo) else -40.0
        hi = self.hi if math.isfinite(self.hi) else 40.0
        return np.linspace(lo, hi, size + 2)[1:-1]

    def checked(self) -> "PhiFunction":
        """Grid-verify the growth inequality and convexity of -1/phi''."""
        r = self._grid()
        slack = self.dphi(r) * r - self.c * self.phi(r)
        scale = np.maximum(1.0, np.abs(self.phi(r)))
        ok = bool(np.all(slack >= -1e-10 * scale))
        if self.eqphi_equality:
            ok = ok and bool(np.all(np.abs(slack) <= 1e-9 * scale))
        d2 = self.d2phi(r)
        convex_ok = bool(np.all(d2 > 0.0))
        if convex_ok:
            h = -1.0 / d2
            mid = -1.0 / self.d2phi(0.5 * (r[:-1] + r[1:]))
            convex_ok = bool(np.all(mid <= 0.5 * (h[:-1] + h[1:]) + 1e-9 * np.maximum(1.0, np.abs(h[:-1]))))
        object.__setattr__(self, "eqphi_ok", ok)
        object.__setattr__(self, "neg_recip_convex", convex_ok)
        return self


def phi_square() -> PhiFunction:
    """phi(r) = r^2 on all of R; growth constant 2 holds with equality."""
    return PhiFunction(
        name="square",
        lo=-math.inf,
        hi=math.inf,
        phi=lambda r: np.square(r),
        dphi=lambda r: 2.0 * r,
        d2phi=lambda r: 2.0 * np.ones_like(np.asarray(r, dtype=float)),
        c=2.0,
        eqphi_equality=True,
    ).checked()


def phi_rlogr() -> PhiFunction:
    """phi(r) = r log r on (0, inf); growth constant 1, strict."""
    return PhiFunction(
        name="rlogr",
        lo=0.0,
        hi=math.inf,
        phi=lambda r: r * np.log(r),
        dphi=lambda r: np.log(r) + 1.0,
        d2phi=lambda r: 1.0 / r,
        c=1.0,
        eqphi_equality=False,
    ).checked()


def phi_power(p: float) -> PhiFunction:
    """phi(r) = r^p on (0, inf) for p in (1, 2]; constant p with equality."""
    if not (1.0 < p <= 2.0):
        raise InvalidParameterError(f"power must satisfy 1 < p <= 2, got {p}")
    return PhiFunction(
        name=f"power:{p:g}",
        lo=0.0,
        hi=math.inf,
        phi=lambda r: np.power(r, p),
        dphi=lambda r: p * np.power(r, p - 1.0),
        d2phi=lambda r: p * (p - 1.0) * np.power(r, p - 2.0),
        c=p,
        eqphi_equality=True,
    ).checked()


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of one identity/inequality check on a truncation."""

    identity: str
    residual_or_margin: float
    worst_state: int
    worst_time: float
    passed: bool
    kind: str  # 'residual' (two-sided) or 'margin' (one-sided, >= -tol)
    tol: float
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "identity": self.identity,
            "residual_or_margin": self.residual_or_margin,
            "worst_state": self.worst_state,
            "worst_time": self.worst_time,
            "pass": self.passed,
            "details": dict(self.details, kind=self.kind, tol=self.tol),
        }


# reports carry this note: rate/potential summability is assumed, not checked
INTEGRABILITY_NOTE = "assumes u-modified rates and potential are integrable along paths"


def gradients(f: np.ndarray, w: Weight | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward, backward and weighted forward differences of f on {0..n}.

    Returns ``(forward, backward, weighted)``: forward and weighted live on
    {0..n-1}, backward on {1..n} (all length n arrays).  With no weight the
    weighted gradient equals the forward one.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size < 2:
        raise InvalidParameterError("f must be a vector on {0..n} with n >= 1")
    forward = f[1:] - f[:-1]
    backward = f[:-1] - f[1:]  # d*f(x) = f(x-1) - f(x), indexed by x in {1..n}
    u = np.ones(f.size - 1) if w is None else w.u_vec(f.size - 2)
    return forward, backward, forward / u


def phi_transforms(phi: PhiFunction, r: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bregman pair at (r, s): A = phi(r+s) - phi(r) - phi'(r) s and
    B = (phi'(r+s) - phi'(r)) s.  Both vanish at s = 0 and B >= A >= 0 for
    convex phi; requires r and r+s inside the domain."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if not (phi.in_domain(r) and phi.in_domain(r + s)):
        raise PreconditionError(f"arguments leave the domain of phi '{phi.name}'")
    a = phi.phi(r + s) - phi.phi(r) - phi.dphi(r) * s
    b = (phi.dphi(r + s) - phi.dphi(r)) * s
    return a, b


def _interior(n_states: int, margin: int) -> slice:
    if margin >= n_states // 2:
        raise PreconditionError(
            f"boundary margin {margin} eats into half the truncation ({n_states} states); increase n"
        )
    return slice(0, n_states - margin)


def _max_birth(spec: RateSpec, n: int) -> float:
    return float(np.max(spec.lam_vec(n)))


def verify_intertwining(
    spec: RateSpec,
    w: Weight,
    f: np.ndarray,
    times,
    n: int = 200,
    tol: float = 1e-6,
    sg_tol: float = 1e-10,
) -> VerificationReport:
    """Residual of d_u P_t f = Q_t d_u f over times and interior states.

    The left side evolves f under the original chain and then differentiates;
    the right side evolves d_u f under the u-modified chain with killing rate
    V_u.  The two routes share no code path beyond the series evaluator.
    """
    f = np.asarray(f, dtype=float)
    times = [float(t) for t in np.atleast_1d(times)]
    if f.shape != (n + 1,):
        raise InvalidParameterError(f"f must be a vector on {{0..{n}}}")
    if any(t < 0 for t in times) or not times:
        raise InvalidParameterError("times must be nonnegative and non-empty")

    gen = build_generator(spec, n)
    mod = u_modification(spec, w)
    pot = potential(spec, w, scan_range=n - 1)
    gen_u = build_generator(mod, n - 1, v=pot.v)

    u = w.u_vec(n - 1)
    du_f = (f[1:] - f[:-1]) / u

    t_max = max(times)
    reach = max(_max_birth(spec, n), _max_birth(mod, n - 1))
    margin = boundary_margin(reach, t_max)
    keep = _interior(n, margin)

    worst = (-1.0, 0, times[0])
    for t in times:
        lhs = np.diff(apply_semigroup(gen, f, t, tol=sg_tol)) / u
        rhs = apply_semigroup(gen_u, du_f, t, tol=sg_tol)
        err = np.abs(lhs[keep] - rhs[keep])
        j = int(np.argmax(err))
        if err[j] > worst[0]:
            worst = (float(err[j]), j, t)

    residual, worst_state, worst_time = worst
    return VerificationReport(
        identity="gradient-semigroup commutation",
        residual_or_margin=residual,
        worst_state=worst_state,
        worst_time=worst_time,
        passed=residual <= tol,
        kind="residual",
        tol=tol,
        details={
            "n": n,
            "margin": margin,
            "times": times,
            "weight": w.label,
            "model": spec.label,
            "sigma_u": pot.inf_estimate,
            "note": INTEGRABILITY_NOTE,
        },
    )


def infinitesimal_residual(spec: RateSpec, w: Weight, f: np.ndarray, n: int = 200) -> VerificationReport:
    """Generator-level form of the commutation: d_u L f = (L_u - V_u) d_u f.

    Pure arithmetic (no time evolution), so the residual should sit at
    roundoff; checked on {0..n-2} where both sides use unmodified rates.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (n + 1,):
        raise InvalidParameterError(f"f must be a vector on {{0..{n}}}")
    if n < 3:
        raise InvalidParameterError("n must be >= 3")

    gen = build_generator(spec, n)
    mod = u_modification(spec, w)
    pot = potential(spec, w, scan_range=n - 1)
    gen_u = build_generator(mod, n - 1, v=pot.v)

    u = w.u_vec(n - 1)
    du_f = (f[1:] - f[:-1]) / u

    lf = gen.apply(f)
    lhs = np.diff(lf) / u
    rhs = gen_u.apply(du_f)

    # rows at the top of either truncation use modified rates; drop them
    err_interior = np.abs(lhs - rhs)[: n - 1]
    j = int(np.argmax(err_interior))
    residual = float(err_interior[j])
    return VerificationReport(
        identity="generator-level commutation",
        residual_or_margin=residual,
        worst_state=j,
        worst_time=0.0,
        passed=residual <= 1e-10 * max(1.0, float(np.max(np.abs(lf)))),
        kind="residual",
        tol=1e-10,
        details={"n": n, "weight": w.label, "model": spec.label},
    )


def verify_subcommutation(
    spec: RateSpec,
    w: Weight,
    phi: PhiFunction,
    f: np.ndarray,
    times,
    n: int = 200,
    tol: float = 1e-8,
    sg_tol: float = 1e-10,
) -> VerificationReport:
    """Margin of phi(d_u P_t f) <= Q^{c V_u}_t phi(d_u f).

    Needs phi'(r) r >= c phi(r) on the domain; additionally V_u >= 0 on the
    scan window unless that growth inequality is an identity (square and
    power functions), in which case any lower-bounded potential is fine.
    """
    if not phi.eqphi_ok:
        raise PreconditionError(f"phi '{phi.name}' failed its growth-inequality grid check")
    f = np.asarray(f, dtype=float)
    times = [float(t) for t in np.atleast_1d(times)]
    if f.shape != (n + 1,):
        raise InvalidParameterError(f"f must be a vector on {{0..{n}}}")

    gen = build_generator(spec, n)
    mod = u_modification(spec, w)
    pot = potential(spec, w, scan_range=n - 1)
    if not phi.eqphi_equality and pot.inf_estimate < 0.0:
        raise PreconditionError(
            f"potential dips to {pot.inf_estimate:.4g} on the scan window; "
            f"phi '{phi.name}' needs V_u >= 0"
        )
    scaled_v = lambda x: phi.c * pot.v(x)
    gen_u = build_generator(mod, n - 1, v=scaled_v)

    u = w.u_vec(n - 1)
    du_f = (f[1:] - f[:-1]) / u
    if not phi.in_domain(du_f):
        raise PreconditionError(f"d_u f leaves the domain of phi '{phi.name}'")
    rhs0 = phi.phi(du_f)

    t_max = max(times)
    reach = max(_max_birth(spec, n), _max_birth(mod, n - 1))
    margin = boundary_margin(reach, t_max)
    keep = _interior(n, margin)

    worst = (math.inf, 0, times[0])
    for t in times:
        grad = np.diff(apply_semigroup(gen, f, t, tol=sg_tol)) / u
        if not phi.in_domain(grad[keep]):
            raise PreconditionError(f"d_u P_t f leaves the domain of phi '{phi.name}' at t={t:g}")
        lhs = phi.phi(grad)
        rhs = apply_semigroup(gen_u, rhs0, t, tol=sg_tol)
        gap = rhs[keep] - lhs[keep]
        j = int(np.argmin(gap))
        if gap[j] < worst[0]:
            worst = (float(gap[j]), j, t)

    margin_val, worst_state, worst_time = worst
    return VerificationReport(
        identity=f"one-sided gradient bound (phi={phi.name}, c={phi.c:g})",
        residual_or_margin=margin_val,
        worst_state=worst_state,
        worst_time=worst_time,
        passed=margin_val >= -tol,
        kind="margin",
        tol=tol,
        details={
            "n": n,
            "margin": margin,
            "times": times,
            "weight": w.label,
            "model": spec.label,
            "sigma_u": pot.inf_estimate,
            "note": INTEGRABILITY_NOTE,
        },
    )


def verify_bicommutation(
    spec: RateSpec,
    phi: PhiFunction,
    f: np.ndarray,
    times,
    n: int = 200,
    tol: float = 1e-8,
    sg_tol: float = 1e-10,
) -> VerificationReport:
    """Margin of B(P_t f, d P_t f) <= Q^{V_1}_t B(f, d f).

    Uses the constant weight: the right side evolves under the shifted chain
    (birth lam(x+1), death nu(x)) with killing V_1 = d(nu - lam).  Hypotheses:
    nonincreasing births, nondecreasing deaths (so V_1 >= 0), strictly convex
    phi with -1/phi'' convex, and f staying inside phi's domain.
    """
    if not phi.neg_recip_convex:
        raise PreconditionError(f"phi '{phi.name}' failed the -1/phi'' convexity grid check")
    f = np.asarray(f, dtype=float)
    times = [float(t) for t in np.atleast_1d(times)]
    if f.shape != (n + 1,):
        raise InvalidParameterError(f"f must be a vector on {{0..{n}}}")

    lam = spec.lam_vec(n + 1)
    nu = spec.nu_vec(n + 1)
    if np.any(np.diff(lam) > 1e-12):
        raise PreconditionError("birth rates must be nonincreasing for the Bregman bound")
    if np.any(np.diff(nu) < -1e-12):
        raise PreconditionError("death rates must be nondecreasing for the Bregman bound")

    one = Weight.const()
    gen = build_generator(spec, n)
    mod = u_modification(spec, one)
    pot = potential(spec, one, scan_range=n - 1)
    gen_1 = build_generator(mod, n - 1, v=pot.v)

    _, _, df = gradients(f)
    _, b0 = phi_transforms(phi, f[:-1], df)

    t_max = max(times)
    reach = max(_max_birth(spec, n), _max_birth(mod, n - 1))
    margin = boundary_margin(reach, t_max)
    keep = _interior(n, margin)

    worst = (math.inf, 0, times[0])
    for t in times:
        ptf = apply_semigroup(gen, f, t, tol=sg_tol)
        _, _, dptf = gradients(ptf)
        _, lhs = phi_transforms(phi, ptf[:-1][keep], dptf[keep])
        rhs = apply_semigroup(gen_1, b0, t, tol=sg_tol)[keep]
        gap = rhs - lhs
        j = int(np.argmin(gap))
        if gap[j] < worst[0]:
            worst = (float(gap[j]), j, t)

    margin_val, worst_state, worst_time = worst
    return VerificationReport(
        identity=f"Bregman gradient bound (phi={phi.name})",
        residual_or_margin=margin_val,
        worst_state=worst_state,
        worst_time=worst_time,
        passed=margin_val >= -tol,
        kind="margin",
        tol=tol,
        details={
            "n": n,
            "margin": margin,
            "times": times,
            "model": spec.label,
            "v1_min": pot.inf_estimate,
            "note": INTEGRABILITY_NOTE,
        },
    )


def hitting_identity_check(
    lam: float,
    nu: float,
    x: int,
    t: float,
    n: int = 200,
    tol: float = 1e-6,
) -> VerificationReport:
    """Check the origin-hitting representation for the single-server queue.

    With u(x) = (nu/lam)^{x/2}, the survival probability of T_0 from x+1
    equals u(x) e^{-t (sqrt(lam) - sqrt(nu))^2} corrected by the Feynman-Kac
    average of 1/u under the u-modified walk with extra killing at the origin.
    Both sides are computed independently (killed sub-generator vs. weighted
    walk); the report also records the plain exponential upper bound.
    """
    from .model import make_builtin  # local import to keep module load light

    if not (0.0 < lam < nu):
        raise PreconditionError(f"need 0 < lam < nu, got lam={lam}, nu={nu}")
    if x < 0:
        raise InvalidParameterError("x must be >= 0")
    if t < 0.0:
        raise InvalidParameterError("t must be >= 0")

    spec = make_builtin("mm1", lam, nu)
    w = Weight.geometric(math.sqrt(nu / lam))
    mod = u_modification(spec, w)
    pot = potential(spec, w, scan_range=n)
    gen_u = build_generator(mod, n, v=pot.v)

    reach = _max_birth(mod, n)
    margin = boundary_margin(reach, t)
    if x >= n - margin:
        raise PreconditionError(f"x={x} too close to the truncation n={n} for t={t:g}")

    u = w.u_vec(n)
    lhs = survival_probability(spec, x + 1, t, n=n)
    fk = apply_semigroup(gen_u, 1.0 / u, t, tol=1e-12)
    rhs = float(u[x] * fk[x])
    rate = (math.sqrt(lam) - math.sqrt(nu)) ** 2
    bound = float(u[x] * math.exp(-rate * t))

    residual = abs(lhs - rhs)
    passed = residual <= tol and lhs <= bound + tol
    return VerificationReport(
        identity="origin-hitting Feynman-Kac representation",
        residual_or_margin=residual,
        worst_state=x,
        worst_time=t,
        passed=passed,
        kind="residual",
        tol=tol,
        details={
            "n": n,
            "margin": margin,
            "lhs_survival": lhs,
            "rhs_feynman_kac": rhs,
            "exp_bound": bound,
            "bound_ok": lhs <= bound + tol,
            "decay_rate": rate,
            "model": spec.label,
            "weight": w.label,
        },
    )


def bounded_gradient_corpus(w: Weight, n: int, seed: int = 0) -> list[tuple[str, np.ndarray]]:
    """Five standard test functions on {0..n} with bounded weighted gradient.

    Used by the verification drivers: a capped metric coordinate, a capped
    identity, a smooth sigmoid step, a seeded compactly-supported bump, and
    the full metric coordinate rho itself.
    """
    if n < 40:
        raise InvalidParameterError("corpus needs n >= 40")
    rho = w.rho_vec(n)
    x = np.arange(n + 1, dtype=float)
    k = min(12, n // 4)

    rng = np.random.default_rng(seed)
    bump = np.zeros(n + 1)
    bump[: min(16, n // 2)] = rng.uniform(-1.0, 1.0, size=min(16, n // 2))

    sig = 1.0 / (1.0 + np.exp(-(x - k) / 2.0))
    return [
        ("capped_rho", np.minimum(rho, rho[k])),
        ("capped_id", np.minimum(x, float(k))),
        ("sigmoid", sig),
        ("random_bump", bump),
        ("rho", rho.copy()),
    ]
