"""Dirichlet forms, weighted Wasserstein distances, and inequality margins.

The metric on states is d_u(x, y) = |rho(x) - rho(y)| with rho the cumulative
sum of the weight u.  Because this is an ordered line metric, the Wasserstein
distance between two laws has the one-dimensional closed form
sum_x u(x) |F1(x) - F2(x)|; a small transportation LP is kept alongside as an
oracle and to exhibit Kantorovich-Rubinstein duality.

The inequality checkers all return signed margins (left side of the claimed
inequality minus right side, oriented so that nonnegative means "holds"):
Poincare, phi-entropy, weighted isoperimetry, transportation-information,
plus the Lipschitz contraction norm, the curvature integral kappa_u, and the
gradient bound for solutions of the Poisson equation.  Margins are honest
finite-truncation quantities; nothing here claims global extremality over all
test functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import linprog, minimize

from .errors import (
    InfeasibleError,
    InvalidParameterError,
    NumericalFailureError,
    PreconditionError,
    SizeGuardError,
)
from .intertwine import PhiFunction, VerificationReport
from .model import (
    Distribution,
    RateSpec,
    Weight,
    chen_exponent,
    potential,
    stationary_distribution,
    u_modification,
)
from .semigroup import apply_semigroup, boundary_margin, build_generator, poisson_solve

__all__ = [
    "MetricSpace",
    "DeviationParams",
    "TransportPlan",
    "KappaEstimate",
    "DeviationValue",
    "dirichlet_form",
    "wasserstein_du",
    "wasserstein_lp",
    "lipschitz_contraction",
    "poincare_margin",
    "spectral_gap",
    "phi_entropy_margin",
    "kappa_u",
    "isoperimetry_margin",
    "fisher_information",
    "lyapunov_check",
    "deviation_function",
    "transport_info_margin",
    "poisson_gradient_bound",
    "infinite_server_drift_rule",
]

LP_SIZE_CAP = 64


@dataclass(frozen=True)
class MetricSpace:
    """Weighted line metric d_u(x,y) = |rho(x) - rho(y)| on {0..n}."""

    weight: Weight
    n: int

    @property
    def u(self) -> np.ndarray:
        return self.weight.u_vec(self.n)

    @property
    def rho(self) -> np.ndarray:
        return self.weight.rho_vec(self.n)

    def cost_matrix(self) -> np.ndarray:
        rho = self.rho
        return np.abs(rho[:, None] - rho[None, :])


@dataclass(frozen=True)
class DeviationParams:
    """One admissible point of the drift condition: (epsilon, theta, a, b)."""

    epsilon: float
    theta: float
    a: float
    b: float

    def __post_init__(self):
        if not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
            raise InvalidParameterError(f"epsilon must be > 0, got {self.epsilon}")
        if not (self.theta > 1.0 and math.isfinite(self.theta)):
            raise InvalidParameterError(f"theta must be > 1, got {self.theta}")
        if not (self.a >= 0.0 and math.isfinite(self.a)):
            raise InvalidParameterError(f"a must be >= 0, got {self.a}")
        if not (self.b > 0.0 and math.isfinite(self.b)):
            raise InvalidParameterError(f"b must be > 0, got {self.b}")


@dataclass(frozen=True)
class TransportPlan:
    """Exact optimal transport result with its dual certificate."""

    value: float
    dual_value: float
    plan: np.ndarray
    potential_src: np.ndarray
    potential_dst: np.ndarray

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class KappaEstimate:
    """Quadrature value of the curvature integral plus the added tail bound."""

    value: float
    tail_bound: float
    t_cut: float

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class DeviationValue:
    """Supremum of the deviation objective with its achieving parameters."""

    value: float
    params: DeviationParams | None
    feasible_points: int

    def __float__(self) -> float:
        return self.value


def _check_density(mu: Distribution, density: np.ndarray) -> np.ndarray:
    density = np.asarray(density, dtype=float)
    if density.shape != mu.probs.shape:
        raise InvalidParameterError("density and stationary law live on different truncations")
    if np.any(density < -1e-12):
        raise InvalidParameterError("density must be nonnegative")
    density = np.maximum(density, 0.0)
    total = float(np.dot(density, mu.probs))
    if abs(total - 1.0) > 1e-8:
        raise InvalidParameterError(f"density must integrate to 1 against mu, got {total:.6g}")
    return density / total


def dirichlet_form(spec: RateSpec, mu: Distribution, f: np.ndarray, g: np.ndarray | None = None) -> float:
    """Energy sum_{x<n} lam(x) df(x) dg(x) mu(x); symmetric in (f, g)."""
    f = np.asarray(f, dtype=float)
    g = f if g is None else np.asarray(g, dtype=float)
    if f.shape != mu.probs.shape or g.shape != mu.probs.shape:
        raise InvalidParameterError("f, g and mu must share the truncation {0..n}")
    n = mu.n
    lam = spec.lam_vec(n - 1)
    return float(np.sum(lam * np.diff(f) * np.diff(g) * mu.probs[:-1]))


def wasserstein_du(mu1: Distribution, mu2: Distribution, m: MetricSpace) -> float:
    """Closed-form Wasserstein distance for the ordered metric d_u.

    Equal to sum_{x<n} u(x) |F1(x) - F2(x)|, the one-dimensional optimal
    transport cost; the LP route exists as an independent oracle.
    """
    if mu1.probs.shape != mu2.probs.shape:
        raise InvalidParameterError("distributions must share a common truncation")
    if mu1.n != m.n:
        raise InvalidParameterError("metric space and distributions disagree on n")
    delta = mu1.probs - mu2.probs
    fwd = np.cumsum(delta)[:-1]
    rev = -np.cumsum(delta[::-1])[::-1][1:]
    # anchor each partial sum at the lighter end: roundoff then scales with
    # the local tail mass instead of eps, which matters when u grows fast
    half = np.cumsum(mu1.probs + mu2.probs)[:-1]
    diff = np.abs(np.where(half <= 1.0, fwd, rev))
    return float(np.sum(m.u[:-1] * diff))


def wasserstein_lp(mu1: Distribution, mu2: Distribution, cost: np.ndarray) -> TransportPlan:
    """Optimal transport by exact LP; also returns the dual certificate.

    Strong duality makes the dual value (optimal Kantorovich potentials
    integrated against the marginals) match the primal cost, which callers use
    as a consistency check.  Guarded to supports of at most 64 states.
    """
    p = mu1.probs
    q = mu2.probs
    if p.shape != q.shape:
        raise InvalidParameterError("distributions must share a common truncation")
    size = p.size
    if size > LP_SIZE_CAP:
        raise SizeGuardError(f"exact transport LP capped at {LP_SIZE_CAP} states, got {size}")
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (size, size):
        raise InvalidParameterError("cost matrix shape must match the support")

    a_eq = np.zeros((2 * size, size * size))
    for i in range(size):
        a_eq[i, i * size : (i + 1) * size] = 1.0  # row sums -> mu1
        a_eq[size + i, i::size] = 1.0  # column sums -> mu2
    b_eq = np.concatenate([p, q])
    # default HiGHS feasibility tolerance (1e-7) lets plans violate the
    # marginals by ~1e-8 when the vectors carry very small entries
    res = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0.0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if not res.success:
        raise NumericalFailureError(f"transport LP failed: {res.message}")
    marginals = np.asarray(res.eqlin.marginals)
    phi, psi = marginals[:size], marginals[size:]
    dual = float(np.dot(phi, p) + np.dot(psi, q))
    return TransportPlan(
        value=float(res.fun),
        dual_value=dual,
        plan=res.x.reshape(size, size),
        potential_src=phi,
        potential_dst=psi,
    )


def lipschitz_contraction(
    spec: RateSpec,
    w: Weight,
    t: float,
    n: int = 200,
    via: str = "gradient",
    sg_tol: float = 1e-12,
) -> float:
    """Lipschitz norm of P_t for the metric d_u on a truncation.

    The norm is attained at the metric coordinate itself: the value is
    max over interior x of d_u P_t rho(x).  ``via='feynman_kac'`` computes the
    same quantity independently as sup_x of the killed u-modified semigroup
    applied to the constant function.
    """
    if t < 0.0:
        raise InvalidParameterError("t must be >= 0")
    mod = u_modification(spec, w)
    reach = max(float(np.max(spec.lam_vec(n))), float(np.max(mod.lam_vec(max(n - 1, 1)))))
    margin = boundary_margin(reach, t)
    if margin >= n // 2:
        raise PreconditionError(f"margin {margin} too large for truncation n={n}; increase n")

    if via == "gradient":
        gen = build_generator(spec, n)
        rho = w.rho_vec(n)
        ptrho = apply_semigroup(gen, rho, t, tol=sg_tol)
        grad = np.diff(ptrho) / w.u_vec(n - 1)
        return float(np.max(grad[: n - margin]))
    if via == "feynman_kac":
        pot = potential(spec, w, scan_range=n - 1)
        gen_u = build_generator(mod, n - 1, v=pot.v)
        vals = apply_semigroup(gen_u, np.ones(n), t, tol=sg_tol)
        return float(np.max(vals[: n - margin]))
    raise InvalidParameterError(f"via must be 'gradient' or 'feynman_kac', got '{via}'")


def poincare_margin(spec: RateSpec, w: Weight, f: np.ndarray, n: int = 200) -> float:
    """Margin of the variance inequality sigma_u Var(f) <= E(f, f).

    sigma_u is the scanned curvature exponent for the weight; a nonpositive
    sigma_u still yields a margin (then trivially favorable), it just does not
    witness a spectral-gap bound.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (n + 1,):
        raise InvalidParameterError(f"f must be a vector on {{0..{n}}}")
    mu = stationary_distribution(spec, n)
    sigma = float(chen_exponent(spec, w, scan_range=n))
    energy = dirichlet_form(spec, mu, f)
    mean = float(np.dot(mu.probs, f))
    var = float(np.dot(mu.probs, (f - mean) ** 2))
    return energy - sigma * var


def spectral_gap(spec: RateSpec, n: int = 200) -> float:
    """Second-smallest eigenvalue of -L on the reflecting truncation.

    Detailed balance makes diag(sqrt(mu)) (-L) diag(1/sqrt(mu)) symmetric
    tridiagonal with off-diagonal -sqrt(lam(x) nu(x+1)), so a symmetric
    eigensolver applies; the bottom eigenvalue is 0 up to roundoff.
    """
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    spec.validate_on(n)
    lam = spec.lam_vec(n)
    nu = spec.nu_vec(n)
    lam[n] = 0.0
    d = lam + nu
    e = -np.sqrt(lam[:-1] * nu[1:])
    vals = eigh_tridiagonal(d, e, select="i", select_range=(0, 1))[0]
    if abs(vals[0]) > 1e-8 * max(1.0, float(np.max(d))):
        raise NumericalFailureError(f"bottom eigenvalue {vals[0]:.3e} not numerically zero")
    return float(vals[1])


def phi_entropy_margin(spec: RateSpec, phi: PhiFunction, f: np.ndarray, n: int = 200) -> float:
    """Margin of the entropy inequality sigma_1 Ent_phi(f) <= E(f, phi'(f)).

    Requires nonincreasing birth rates (the hypothesis under which the
    constant-weight curvature governs phi-entropies) and positive sigma_1.
    For phi(r) = r log r this is the modified log-Sobolev inequality, for
    powers the Beckner family.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (n + 1,):
        raise InvalidParameterError(f"f must be a vector on {{0..{n}}}")
    lam = spec.lam_vec(n + 1)
    if np.any(np.diff(lam) > 1e-12):
        raise PreconditionError("phi-entropy bound needs nonincreasing birth rates")
    sigma = float(chen_exponent(spec, Weight.const(), scan_range=n))
    if sigma <= 0.0:
        raise PreconditionError(f"constant-weight curvature must be positive, got {sigma:.4g}")
    if not phi.in_domain(f):
        raise PreconditionError(f"f leaves the domain of phi '{phi.name}'")
    mu = stationary_distribution(spec, n)
    energy = dirichlet_form(spec, mu, f, phi.dphi(f))
    mean = float(np.dot(mu.probs, f))
    ent = float(np.dot(mu.probs, phi.phi(f)) - phi.phi(np.array([mean]))[0])
    return energy - sigma * ent


def _fk_flow(spec: RateSpec, w: Weight, n: int):
    """Eigen-decomposed Feynman-Kac flow t -> sup_x E_x[exp(-int V_u)].

    The u-modified chain is reversible for m = lam u^2 mu, so the killed
    generator symmetrizes; the flow becomes a finite mixture of exponentials
    and each time evaluation is a cheap matvec.  Rows where sqrt(m) is so
    small that unsymmetrizing would amplify roundoff past 1e-10 are covered
    by the pointwise envelope exp(-t min V) instead, keeping the flow an
    upper bound (and exact for constant potentials).  Returns None when the
    decomposition itself is degenerate.
    """
    mod = u_modification(spec, w)
    pot = potential(spec, w, scan_range=n)
    lam_m = mod.lam_vec(n)
    nu_m = mod.nu_vec(n)
    lam_m[n] = 0.0
    v = pot.v_vec(n)
    v_min = float(np.min(v))

    log_m = np.zeros(n + 1)
    log_m[1:] = np.cumsum(np.log(lam_m[:n]) - np.log(nu_m[1:]))
    log_m -= np.max(log_m)
    sqrt_m = np.exp(0.5 * log_m)

    d = lam_m + nu_m + v
    e = -np.sqrt(lam_m[:-1] * nu_m[1:])
    try:
        gam, q = eigh_tridiagonal(d, e)
    except Exception as exc:  # pragma: no cover - depends on LAPACK failure
        raise NumericalFailureError(f"eigendecomposition failed: {exc}")
    coeff = q.T @ sqrt_m
    trusted = sqrt_m >= 1e-4  # roundoff in basis @ coeff stays below ~1e-9
    if not np.any(trusted):
        return None, pot
    basis = q[trusted] / sqrt_m[trusted, None]
    has_untrusted = bool(np.any(~trusted))
    if not (np.all(np.isfinite(coeff)) and np.all(np.isfinite(basis))):
        return None, pot

    def flow(t: float) -> float:
        envelope = math.exp(-v_min * t)
        val = float(np.max(basis @ (np.exp(-gam * t) * coeff)))
        if has_untrusted:
            val = max(val, envelope)
        return min(max(val, 0.0), envelope)

    return flow, pot


def kappa_u(spec: RateSpec, w: Weight, n: int = 150, tol: float = 1e-8) -> KappaEstimate:
    """Curvature integral kappa_u = int_0^inf sup_x E_x[exp(-int V_u)] dt.

    Adaptive quadrature up to the cut where the envelope e^{-sigma_u t}
    certifies the remaining tail below ``tol``; that analytic tail bound is
    added to the result (so the estimate errs on the large side, which keeps
    the derived isoperimetric constant 1/kappa_u safe).
    """
    if tol <= 0.0:
        raise InvalidParameterError("tol must be > 0")
    sigma = chen_exponent(spec, w, scan_range=n)
    if sigma.value <= 0.0:
        raise InfeasibleError(
            f"curvature exponent {sigma.value:.4g} is not positive on the scan range; integral may diverge"
        )
    flow, _ = _fk_flow(spec, w, n)
    t_cut = math.log(2.0 / (sigma.value * tol)) / sigma.value
    tail = math.exp(-sigma.value * t_cut) / sigma.value

    if flow is None:
        # degenerate scales: fall back to direct semigroup evaluations
        flow = lambda t: lipschitz_contraction(spec, w, t, n=n, via="feynman_kac")

    val, err = quad(flow, 0.0, t_cut, limit=400, epsabs=tol / 10.0, epsrel=1e-10)
    if err > 100.0 * tol:
        raise NumericalFailureError(f"quadrature error {err:.3e} too large for tol {tol:.1e}")
    return KappaEstimate(value=float(val + tail), tail_bound=float(tail), t_cut=float(t_cut))


def isoperimetry_margin(spec: RateSpec, w: Weight, density: np.ndarray, n: int = 150) -> float:
    """Margin of the weighted isoperimetric inequality for pi = density * mu.

    margin = int lam u |d density| dmu  -  (1/kappa_u) W_{d_u}(pi, mu);
    nonnegative margins witness the inequality with constant h_u = 1/kappa_u.
    """
    mu = stationary_distribution(spec, n)
    density = _check_density(mu, density)
    kappa = kappa_u(spec, w, n=n)
    lam = spec.lam_vec(n - 1)
    u = w.u_vec(n - 1)
    boundary = float(np.sum(lam * u * np.abs(np.diff(density)) * mu.probs[:-1]))
    pi = Distribution(probs=density * mu.probs, label="pi")
    dist = wasserstein_du(pi, mu, MetricSpace(weight=w, n=n))
    return boundary - dist / kappa.value


def fisher_information(spec: RateSpec, mu: Distribution, density: np.ndarray) -> float:
    """Donsker-Varadhan information of pi = density * mu: E(sqrt(density))."""
    density = _check_density(mu, density)
    return dirichlet_form(spec, mu, np.sqrt(density))


def lyapunov_check(spec: RateSpec, w: Weight, params: DeviationParams, n: int = 200) -> VerificationReport:
    """Worst-state residual of the drift condition behind the deviation bound.

    Checks (1+eps) lam(x) u(x)^2 + (1+1/eps) nu(x) u(x-1)^2
           <= -a (lam(x)(theta-1) + nu(x)(1/theta-1)) + b  on {0..n};
    the right side is -a L V_theta / V_theta + b for V_theta(x) = theta^x.
    """
    lam = spec.lam_vec(n)
    nu = spec.nu_vec(n)
    u = w.u_vec(n)
    u_prev = np.concatenate(([u[0]], u[:-1]))  # x=0 term is killed by nu(0)=0
    lhs = (1.0 + params.epsilon) * lam * u**2 + (1.0 + 1.0 / params.epsilon) * nu * u_prev**2
    rhs = -params.a * (lam * (params.theta - 1.0) + nu * (1.0 / params.theta - 1.0)) + params.b
    gaps = lhs - rhs
    j = int(np.argmax(gaps))
    residual = float(gaps[j])
    scale = max(1.0, float(np.max(np.abs(rhs))))
    return VerificationReport(
        identity="exponential drift condition",
        residual_or_margin=residual,
        worst_state=j,
        worst_time=0.0,
        passed=residual <= 1e-10 * scale,
        kind="residual",
        tol=1e-10,
        details={
            "n": n,
            "epsilon": params.epsilon,
            "theta": params.theta,
            "a": params.a,
            "b": params.b,
            "model": spec.label,
            "weight": w.label,
        },
    )


def infinite_server_drift_rule(lam: float) -> Callable[[float, float], DeviationParams]:
    """The (a, b) choice that makes the drift condition tight for the
    infinite-server queue with constant weight: a = theta (1+1/eps)/(theta-1)
    and b = lam (1 + eps + (1+1/eps) theta)."""

    def rule(eps: float, theta: float) -> DeviationParams:
        return DeviationParams(
            epsilon=eps,
            theta=theta,
            a=theta * (1.0 + 1.0 / eps) / (theta - 1.0),
            b=lam * (1.0 + eps + (1.0 + 1.0 / eps) * theta),
        )

    return rule


def _deviation_value(params: DeviationParams, s: float) -> float:
    """Largest alpha with a alpha^2 + b alpha <= s^2 (the deviation objective).

    This is the positive root (sqrt(b^2 + 4 a s^2) - b) / (2a), the inversion
    of the Cauchy-Schwarz chain W <= kappa sqrt(I (a I + b)); for a = 0 it
    degenerates to s^2 / b.
    """
    if params.a == 0.0:
        return s * s / params.b
    disc = params.b**2 + 4.0 * params.a * s * s
    return (math.sqrt(disc) - params.b) / (2.0 * params.a)


def deviation_function(
    spec: RateSpec,
    w: Weight,
    kappa: float,
    r: float,
    rule: Callable[[float, float], DeviationParams] | None = None,
    eps_grid: np.ndarray | None = None,
    theta_grid: np.ndarray | None = None,
    n_check: int = 200,
    refine: bool = True,
) -> DeviationValue:
    """Supremum of the deviation objective over drift-feasible (eps, theta).

    Each grid point maps to (a, b) through ``rule`` and must pass the drift
    condition on {0..n_check}; the best feasible point seeds a Nelder-Mead
    polish in (log eps, log(theta-1)).  Raises when no grid point is feasible
    (e.g. the single-server queue with geometric weight).
    """
    if r < 0.0:
        raise InvalidParameterError("r must be >= 0")
    if kappa <= 0.0:
        raise InvalidParameterError("kappa must be > 0")
    if rule is None:
        rule = infinite_server_drift_rule(float(spec.lam(0)))
    if eps_grid is None:
        eps_grid = np.geomspace(1e-3, 1e3, 25)
    if theta_grid is None:
        theta_grid = 1.0 + np.geomspace(1e-3, 1e3 - 1.0, 25)
    s = r / kappa

    def try_point(eps: float, theta: float):
        try:
            params = rule(eps, theta)
        except (InvalidParameterError, ZeroDivisionError, OverflowError):
            return None
        rep = lyapunov_check(spec, w, params, n=n_check)
        return params if rep.passed else None

    best_val, best_params, feasible = -math.inf, None, 0
    best_z = None
    for eps in eps_grid:
        for theta in theta_grid:
            params = try_point(float(eps), float(theta))
            if params is None:
                continue
            feasible += 1
            val = _deviation_value(params, s)
            if val > best_val:
                best_val, best_params = val, params
                best_z = (math.log(eps), math.log(theta - 1.0))

    if best_params is None:
        raise InfeasibleError("no (epsilon, theta) on the grid satisfies the drift condition")
    if r == 0.0:
        return DeviationValue(value=0.0, params=best_params, feasible_points=feasible)

    if refine:
        def neg(z):
            eps, theta = math.exp(z[0]), 1.0 + math.exp(z[1])
            params = try_point(eps, theta)
            if params is None:
                return 1e15
            return -_deviation_value(params, s)

        res = minimize(
            neg,
            best_z,
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000, "maxfev": 4000},
        )
        if res.fun < -best_val:
            eps, theta = math.exp(res.x[0]), 1.0 + math.exp(res.x[1])
            refined = try_point(eps, theta)
            if refined is not None:
                best_val, best_params = -float(res.fun), refined

    return DeviationValue(value=best_val, params=best_params, feasible_points=feasible)


def transport_info_margin(
    spec: RateSpec,
    w: Weight,
    density: np.ndarray,
    n: int = 150,
    rule: Callable[[float, float], DeviationParams] | None = None,
) -> float:
    """Margin of the transportation-information inequality for pi = density mu.

    margin = I(pi, mu) - alpha(W_{d_u}(pi, mu)) with alpha built from the
    drift condition and the curvature integral kappa_u; raises when the drift
    condition has no feasible parameters for this model/weight.
    """
    mu = stationary_distribution(spec, n)
    density = _check_density(mu, density)
    info = fisher_information(spec, mu, density)
    pi = Distribution(probs=density * mu.probs, label="pi")
    dist = wasserstein_du(pi, mu, MetricSpace(weight=w, n=n))
    kappa = kappa_u(spec, w, n=n)
    alpha = deviation_function(spec, w, kappa.value, dist, rule=rule, n_check=n)
    return info - alpha.value


def poisson_gradient_bound(spec: RateSpec, w: Weight, n: int = 200) -> VerificationReport:
    """Gradient bound |d g(x)| <= u(x)/sigma_u for the Poisson equation.

    The datum is f = rho - mu(rho), the extremal Lipschitz function of the
    metric d_u; the infinite-server queue with constant weight saturates the
    bound with d g identically 1.  When the weight's dynamic range permits,
    -L g = f is solved directly; otherwise (rho can overflow the useful
    double range) the weighted gradient h = d g / u is obtained from its own
    well-scaled equation (V_u - L_u) h = 1, the stationary form of the
    intertwining identity.
    """
    sigma = chen_exponent(spec, w, scan_range=n)
    if sigma.value <= 0.0:
        raise PreconditionError(f"needs positive curvature exponent, got {sigma.value:.4g}")
    u = w.u_vec(n - 1)
    direct = float(np.max(u) / np.min(u)) <= 1e8
    if direct:
        gen = build_generator(spec, n)
        mu = stationary_distribution(spec, n)
        rho = w.rho_vec(n)
        g = poisson_solve(gen, mu, rho - float(np.dot(mu.probs, rho)))
        ratio = np.abs(np.diff(g)) / u
    else:
        mod = u_modification(spec, w)
        pot = potential(spec, w, scan_range=n - 1)
        gen_u = build_generator(mod, n - 1, v=pot.v)
        b = -gen_u.matrix()
        ratio = np.abs(np.linalg.solve(b, np.ones(n)))
    interior = slice(0, max(1, int(0.8 * n)))
    slack = 1.0 / sigma.value - ratio[interior]
    j = int(np.argmin(slack))
    margin = float(slack[j])
    return VerificationReport(
        identity="Poisson-equation gradient bound",
        residual_or_margin=margin,
        worst_state=j,
        worst_time=0.0,
        passed=margin >= -1e-8,
        kind="margin",
        tol=1e-8,
        details={
            "n": n,
            "sigma_u": sigma.value,
            "route": "direct" if direct else "gradient_resolvent",
            "model": spec.label,
            "weight": w.label,
        },
    )
