"""FastAPI service exposing the verification library over JSON.

Every POST endpoint answers the same envelope: ``ok`` aggregates the
command's pass/fail meaning (residuals within tolerance, margins
nonnegative, orderings holding, soundness checks sound), and ``result``
carries the payload.  Library errors surface as HTTP 400 with a
machine-readable ``kind``; schema violations keep FastAPI's 422.
"""

import math

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import BdtwineError
from ..inequalities import (
    LP_SIZE_CAP,
    MetricSpace,
    deviation_function,
    dirichlet_form,
    fisher_information,
    infinite_server_drift_rule,
    isoperimetry_margin,
    kappa_u,
    lyapunov_check,
    phi_entropy_margin,
    poincare_margin,
    poisson_gradient_bound,
    spectral_gap,
    transport_info_margin,
    wasserstein_du,
    wasserstein_lp,
)
from ..intertwine import (
    bounded_gradient_corpus,
    hitting_identity_check,
    phi_power,
    phi_rlogr,
    phi_square,
    verify_bicommutation,
    verify_intertwining,
    verify_subcommutation,
)
from ..model import (
    Distribution,
    Weight,
    chen_exponent,
    ergodicity_report,
    model_from_config,
    potential,
    stationary_distribution,
    weight_from_config,
)
from ..optimize import WeightFamily, gap_report, optimize_weight
from ..ordering import (
    comparison_lemma_check,
    convex_order,
    domination_pair,
    laplace_report,
    stochastic_order,
)
from ..semigroup import apply_semigroup, build_generator, survival_probability, transient_distribution
from ..simulate import coupled_survival_estimate, hitting_time_sample, mehler_distribution, sample_path
from . import schemas


def _clean(obj):
    """Recursively coerce numpy scalars/arrays into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _phi(cfg: schemas.PhiConfig):
    if cfg.name == "square":
        return phi_square()
    if cfg.name == "rlogr":
        return phi_rlogr()
    if cfg.name == "power":
        return phi_power(cfg.p)
    raise BdtwineError(f"unknown phi '{cfg.name}'; use square, rlogr, or power")


def _function(cfg: schemas.FunctionConfig, w: Weight, n: int, seed: int = 0) -> tuple[str, np.ndarray]:
    if cfg.kind == "table":
        if cfg.values is None:
            raise BdtwineError("table function needs 'values'")
        vals = np.asarray(cfg.values, dtype=float)
        if vals.size != n + 1:
            raise BdtwineError(f"table function must have n+1 = {n + 1} values")
        return "table", vals
    for name, f in bounded_gradient_corpus(w, n, seed=seed):
        if name == cfg.name:
            return name, f
    raise BdtwineError(f"unknown corpus function '{cfg.name}'")


def _distribution(probs: list, label: str) -> Distribution:
    arr = np.asarray(probs, dtype=float)
    total = float(arr.sum())
    if abs(total - 1.0) > 1e-6 or np.any(arr < 0.0):
        raise BdtwineError(f"'{label}' must be a probability vector (sum {total:.6g})")
    return Distribution(probs=arr / total, label=label)


def _lump_tail(d: Distribution, m: int) -> Distribution:
    """Pushforward of d under x -> min(x, m), keeping total mass exact."""
    p = d.probs[: m + 1].copy()
    p[m] += float(d.probs[m + 1 :].sum())
    return Distribution(probs=p, tail_mass_bound=d.tail_mass_bound, label=d.label)


def create_app() -> FastAPI:
    app = FastAPI(title="bdtwine", version="0.1.0")

    @app.exception_handler(BdtwineError)
    async def _bdtwine_error(request: Request, exc: BdtwineError):
        return JSONResponse(status_code=400, content={"kind": type(exc).__name__, "message": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return {"status": "ok"}

    @app.post("/model/validate", response_model=schemas.Envelope)
    def validate(req: schemas.ValidateRequest):
        spec, _ = model_from_config(req.model.as_config())
        spec.validate_on(req.n)
        erg = ergodicity_report(spec)
        mu = stationary_distribution(spec, req.n)
        result = {
            "label": spec.label,
            "n": req.n,
            "ergodicity": erg.as_dict(),
            "stationary_mean": mu.mean(),
            "stationary_tail_mass_bound": mu.tail_mass_bound,
        }
        ok = erg.recurrent != "fails" and erg.nonexplosive != "fails"
        return {"ok": ok, "command": "validate", "result": _clean(result)}

    @app.post("/model/stationary", response_model=schemas.Envelope)
    def stationary(req: schemas.StationaryRequest):
        spec, _ = model_from_config(req.model.as_config())
        mu = stationary_distribution(spec, req.n)
        result = {
            "label": spec.label,
            "n": req.n,
            "probs": mu.probs,
            "mean": mu.mean(),
            "tail_mass_bound": mu.tail_mass_bound,
        }
        return {"ok": True, "command": "stationary", "result": _clean(result)}

    @app.post("/semigroup/evolve", response_model=schemas.Envelope)
    def evolve(req: schemas.EvolveRequest):
        spec, _ = model_from_config(req.model.as_config())
        w = weight_from_config(req.weight.as_config())
        name, f = _function(req.f, w, req.n)
        gen = build_generator(spec, req.n)
        vals = apply_semigroup(gen, f, req.t, tol=req.tol)
        result = {"f": name, "t": req.t, "n": req.n, "values": vals}
        return {"ok": True, "command": "evolve", "result": _clean(result)}

    @app.post("/verify/intertwine", response_model=schemas.Envelope)
    def intertwine(req: schemas.IntertwineRequest):
        spec, _ = model_from_config(req.model.as_config())
        w = weight_from_config(req.weight.as_config())
        rows = []
        for name, f in bounded_gradient_corpus(w, req.n, seed=req.seed):
            rep = verify_intertwining(spec, w, f, req.t_grid, n=req.n, tol=req.tol)
            rows.append({"f": name, **rep.as_dict()})
        worst = max(row["residual_or_margin"] for row in rows)
        ok = all(row["pass"] for row in rows)
        result = {"rows": rows, "worst_residual": worst, "tol": req.tol}
        return {"ok": ok, "command": "verify-intertwine", "result": _clean(result)}

    @app.post("/verify/subcommute", response_model=schemas.Envelope)
    def subcommute(req: schemas.SubcommuteRequest):
        spec, _ = model_from_config(req.model.as_config())
        w = weight_from_config(req.weight.as_config())
        phi = _phi(req.phi)
        rows, ran, ok = [], 0, True
        for name, f in bounded_gradient_corpus(w, req.n, seed=req.seed):
            try:
                rep = verify_subcommutation(spec, w, phi, f, req.t_grid, n=req.n, tol=req.tol)
            except BdtwineError as exc:
                rows.append({"f": name, "status": "skipped", "reason": str(exc)})
                continue
            ran += 1
            ok = ok and rep.passed
            rows.append({"f": name, "status": "checked", **rep.as_dict()})
        if ran == 0:
            raise BdtwineError("no corpus function was admissible for this phi/weight combination")
        result = {"rows": rows, "phi": phi.name, "tol": req.tol}
        return {"ok": ok, "command": "verify-subcommute", "result": _clean(result)}

    @app.post("/verify/bicommute", response_model=schemas.Envelope)
    def bicommute(req: schemas.BicommuteRequest):
        spec, _ = model_from_config(req.model.as_config())
        phi = _phi(req.phi)
        rows, ran, ok = [], 0, True
        for name, f in bounded_gradient_corpus(Weight.const(), req.n, seed=req.seed):
            if phi.lo > -math.inf:
                f = f - float(np.min(f)) + 1.0  # shift into the positive domain
            try:
                rep = verify_bicommutation(spec, phi, f, req.t_grid, n=req.n, tol=req.tol)
            except BdtwineError as exc:
                rows.append({"f": name, "status": "skipped", "reason": str(exc)})
                continue
            ran += 1
            ok = ok and rep.passed
            rows.append({"f": name, "status": "checked", **rep.as_dict()})
        if ran == 0:
            raise BdtwineError("no corpus function was admissible for this phi")
        result = {"rows": rows, "phi": phi.name, "tol": req.tol}
        return {"ok": ok, "command": "verify-bicommute", "result": _clean(result)}

    @app.post("/curvature", response_model=schemas.Envelope)
    def curvature(req: schemas.CurvatureRequest):
        spec, _ = model_from_config(req.model.as_config())
        w = weight_from_config(req.weight.as_config())
        pot = potential(spec, w, scan_range=req.n)
        chen = chen_exponent(spec, w, scan_range=req.n)
        result = {
            "sigma_u": chen.value,
            "argmin": chen.argmin,
            "at_boundary": chen.at_boundary,
            "scan_range": chen.scan_range,
            "v_head": pot.v_vec(min(req.n, 15)),
            "weight": w.label,
            "model": spec.label,
        }
        if req.with_kappa:
            try:
                kap = kappa_u(spec, w, n=req.n, tol=req.tol)
                result["kappa_u"] = {"value": kap.value, "tail_bound": kap.tail_bound, "t_cut": kap.t_cut}
            except BdtwineError as exc:
                result["kappa_u"] = None
                result["kappa_reason"] = str(exc)
        return {"ok": True, "command": "curvature", "result": _clean(result)}

    @app.post("/optimize/weight", response_model=schemas.Envelope)
    def optimize(req: schemas.OptimizeRequest):
        spec, _ = model_from_config(req.model.as_config())
        family = WeightFamily(
            kind=req.family.kind,
            kappa_min=req.family.kappa_min,
            kappa_max=req.family.kappa_max,
            dim=req.family.dim,
        )
        res = optimize_weight(spec, family=family, n=req.n, budget=req.budget, seed=req.seed)
        result = {
            "sigma": res.sigma,
            "family": res.family,
            "params": list(res.params),
            "evaluations": res.evaluations,
            "provisional": res.provisional,
            "converged": res.converged,
            "weight": res.weight.label,
            "trace_len": len(res.trace),
            "trace_tail": [
                {"iteration": r.iteration, "sigma": r.sigma, "params_hash": r.params_hash}
                for r in res.trace[-20:]
            ],
        }
        return {"ok": res.converged, "command": "optimize-weight", "result": _clean(result)}

    @app.post("/optimize/gap-report", response_model=schemas.Envelope)
    def gaps(req: schemas.GapReportRequest):
        spec, _ = model_from_config(req.model.as_config())
        family = WeightFamily(
            kind=req.family.kind,
            kappa_min=req.family.kappa_min,
            kappa_max=req.family.kappa_max,
            dim=req.family.dim,
        )
        rep = gap_report(spec, family=family, n=req.n, budget=req.budget, seed=req.seed)
        return {"ok": rep.sound, "command": "gap-report", "result": _clean(rep.as_dict())}

    @app.post("/wasserstein", response_model=schemas.Envelope)
    def wasserstein(req: schemas.WassersteinRequest):
        w = weight_from_config(req.weight.as_config())
        if req.probs_a is not None and req.probs_b is not None:
            d1 = _distribution(req.probs_a, "probs_a")
            d2 = _distribution(req.probs_b, "probs_b")
            if d1.probs.size != d2.probs.size:
                raise BdtwineError("probs_a and probs_b must have equal length")
            n = d1.probs.size - 1
        elif req.model is not None:
            spec, _ = model_from_config(req.model.as_config())
            n = req.n
            gen = build_generator(spec, n)
            d1 = transient_distribution(gen, req.x0_a, req.t, tol=1e-12)
            if req.x0_b is None:
                d2 = stationary_distribution(spec, n)
            else:
                d2 = transient_distribution(gen, req.x0_b, req.t, tol=1e-12)
        else:
            raise BdtwineError("give either explicit probs_a/probs_b or a model")
        space = MetricSpace(weight=w, n=n)
        dist = wasserstein_du(d1, d2, space)
        result = {"distance": dist, "n": n, "weight": w.label, "laws": [d1.label, d2.label]}
        ok = True
        if req.with_lp:
            da, db, m = d1, d2, n
            if n + 1 > LP_SIZE_CAP:
                m = LP_SIZE_CAP - 1
                da, db = (_lump_tail(d, m) for d in (d1, d2))
            lp_space = MetricSpace(weight=w, n=m)
            closed = wasserstein_du(da, db, lp_space)
            plan = wasserstein_lp(da, db, lp_space.cost_matrix())
            agreement = abs(plan.value - closed)
            duality_gap = abs(plan.value - plan.dual_value)
            ok = agreement <= 1e-9 and duality_gap <= 1e-9
            result["lp"] = {
                "value": plan.value,
                "dual_value": plan.dual_value,
                "closed_form": closed,
                "vs_closed_form": agreement,
                "duality_gap": duality_gap,
                "states": m + 1,
            }
        return {"ok": ok, "command": "wasserstein", "result": _clean(result)}

    @app.post("/inequalities", response_model=schemas.Envelope)
    def inequalities(req: schemas.InequalitiesRequest):
        spec, _ = model_from_config(req.model.as_config())
        w = weight_from_config(req.weight.as_config())
        n = req.n
        mu = stationary_distribution(spec, n)
        x = np.arange(n + 1, dtype=float)
        density = 1.0 + 0.25 * np.sin(0.7 * x)
        density /= float(np.dot(density, mu.probs))
        wanted = req.checks or [
            "spectral_gap",
            "poincare",
            "phi_entropy",
            "kappa",
            "isoperimetry",
            "fisher",
            "transport_info",
            "lyapunov",
            "poisson_gradient",
        ]
        rows = []

        def row(check, value, passed, **details):
            rows.append({"check": check, "value": value, "pass": passed, "details": details})

        for check in wanted:
            try:
                if check == "spectral_gap":
                    row(check, spectral_gap(spec, n=n), None)
                elif check == "poincare":
                    margins = [
                        poincare_margin(spec, w, f, n=n)
                        for _, f in bounded_gradient_corpus(w, n, seed=req.seed)
                    ]
                    worst = min(margins)
                    row(check, worst, worst >= -1e-8, corpus=len(margins))
                elif check == "phi_entropy":
                    f = 1.0 + 0.5 * np.exp(-0.3 * x)
                    margin = phi_entropy_margin(spec, phi_rlogr(), f, n=n)
                    row(check, margin, margin >= -1e-8, phi="rlogr")
                elif check == "kappa":
                    kap = kappa_u(spec, w, n=n)
                    sigma = float(chen_exponent(spec, w, scan_range=n))
                    row(check, kap.value, kap.value <= 1.0 / sigma + 1e-6, tail_bound=kap.tail_bound, sigma_u=sigma)
                elif check == "isoperimetry":
                    margin = isoperimetry_margin(spec, w, density, n=n)
                    row(check, margin, margin >= -1e-6)
                elif check == "fisher":
                    row(check, fisher_information(spec, mu, density), None)
                elif check == "transport_info":
                    margin = transport_info_margin(spec, w, density, n=n)
                    row(check, margin, margin >= -1e-6)
                elif check == "lyapunov":
                    rule = infinite_server_drift_rule(float(spec.lam(0)))
                    rep = lyapunov_check(spec, w, rule(1.0, 2.0), n=n)
                    row(check, rep.residual_or_margin, rep.passed, **rep.details)
                elif check == "poisson_gradient":
                    rep = poisson_gradient_bound(spec, w, n=n)
                    row(check, rep.residual_or_margin, rep.passed, **rep.details)
                else:
                    raise BdtwineError(f"unknown check '{check}'")
            except BdtwineError as exc:
                rows.append({"check": check, "value": None, "pass": None, "details": {"skipped": str(exc)}})
        ok = all(r["pass"] is not False for r in rows)
        result = {"rows": rows, "n": n, "model": spec.label, "weight": w.label}
        return {"ok": ok, "command": "inequalities", "result": _clean(result)}

    @app.post("/hitting", response_model=schemas.Envelope)
    def hitting(req: schemas.HittingRequest):
        rep = hitting_identity_check(req.lam, req.nu, req.x, req.t, n=req.n, tol=req.tol)
        return {"ok": rep.passed, "command": "hitting", "result": _clean(rep.as_dict())}

    @app.post("/mehler", response_model=schemas.Envelope)
    def mehler(req: schemas.MehlerRequest):
        exact = mehler_distribution(req.lam, req.nu, req.x0, req.t, n=req.n)
        spec, _ = model_from_config({"kind": "mm_infty", "lambda": req.lam, "nu": req.nu})
        gen = build_generator(spec, req.n)
        numeric = transient_distribution(gen, req.x0, req.t, tol=1e-12)
        tv = 0.5 * float(np.sum(np.abs(exact.probs - numeric.probs)))
        result = {
            "tv_distance": tv,
            "tol": req.tol,
            "mean_exact": exact.mean(),
            "mean_numeric": numeric.mean(),
            "tail_mass_bound": exact.tail_mass_bound,
            "n": req.n,
        }
        return {"ok": tv <= req.tol, "command": "mehler", "result": _clean(result)}

    @app.post("/order", response_model=schemas.Envelope)
    def order(req: schemas.OrderRequest):
        if req.check in ("stochastic", "convex"):
            if req.probs_a is None or req.probs_b is None:
                raise BdtwineError(f"check '{req.check}' needs probs_a and probs_b")
            d1 = _distribution(req.probs_a, "probs_a")
            d2 = _distribution(req.probs_b, "probs_b")
            if d1.probs.size != d2.probs.size:
                raise BdtwineError("probs_a and probs_b must have equal length")
            verdict = (stochastic_order if req.check == "stochastic" else convex_order)(d1, d2, tol=req.tol)
            result = {"verdict": verdict.as_dict(), "laplace": laplace_report(d1, d2)}
            return {"ok": verdict.holds, "command": "order", "result": _clean(result)}
        if req.check == "comparison":
            if req.model is None or req.model_b is None:
                raise BdtwineError("check 'comparison' needs model (dominated) and model_b (dominating)")
            low, _ = model_from_config(req.model.as_config())
            high, _ = model_from_config(req.model_b.as_config())
            verdict = comparison_lemma_check(low, high, req.x0, req.t, n=req.n, tol=req.tol)
            return {"ok": verdict.holds, "command": "order", "result": _clean({"verdict": verdict.as_dict()})}
        if req.check in ("domination", "binomial"):
            if req.model is None:
                raise BdtwineError(f"check '{req.check}' needs a model")
            spec, _ = model_from_config(req.model.as_config())
            variant = "bernoulli" if req.check == "domination" else "binomial"
            upper, dominating = domination_pair(spec, req.x, req.t, n=req.n, variant=variant)
            verdict = convex_order(upper, dominating, tol=req.tol)
            # the stochastic verdict on the same pair is reported, not asserted:
            # whether the corollary upgrades to the stochastic order is open
            side = stochastic_order(upper, dominating, tol=req.tol)
            result = {
                "verdict": verdict.as_dict(),
                "stochastic_verdict": side.as_dict(),
                "kind": req.check,
            }
            return {"ok": verdict.holds, "command": "order", "result": _clean(result)}
        raise BdtwineError(f"unknown order check '{req.check}'")

    @app.post("/simulate", response_model=schemas.Envelope)
    def simulate(req: schemas.SimulateRequest):
        spec, _ = model_from_config(req.model.as_config())
        if req.kind == "path":
            path = sample_path(spec, req.x0, req.t, seed=req.seed, stream=req.stream)
            result = {
                "times": path.times,
                "states": path.states,
                "n_jumps": path.n_jumps,
                "final_state": int(path.states[-1]),
                "seed": req.seed,
                "stream": req.stream,
            }
            return {"ok": True, "command": "simulate", "result": _clean(result)}
        if req.kind == "hitting":
            sample = hitting_time_sample(spec, req.x0, req.t, req.paths, seed=req.seed)
            est = sample.survival(req.t)
            exact = survival_probability(spec, req.x0, req.t, n=req.n)
            z = (est.mean - exact) / est.stderr if est.stderr > 0 else 0.0
            result = {
                "mean": est.mean,
                "stderr": est.stderr,
                "n": est.n,
                "exact": exact,
                "z_score": z,
                "seed": req.seed,
            }
            return {"ok": abs(z) <= 4.0, "command": "simulate", "result": _clean(result)}
        if req.kind == "coupled":
            if req.model.kind != "mm1":
                raise BdtwineError("coupled simulation is defined for the single-server queue")
            est = coupled_survival_estimate(req.model.lam, req.model.nu, req.x0, req.t, req.paths, seed=req.seed)
            exact = survival_probability(spec, req.x0 + 1, req.t, n=req.n)
            z = (est.mean - exact) / est.stderr if est.stderr > 0 else 0.0
            result = {
                "mean": est.mean,
                "stderr": est.stderr,
                "n": est.n,
                "exact": exact,
                "z_score": z,
                "seed": req.seed,
            }
            return {"ok": abs(z) <= 4.0, "command": "simulate", "result": _clean(result)}
        raise BdtwineError(f"unknown simulate kind '{req.kind}'; use path, hitting, or coupled")

    return app


app = create_app()
