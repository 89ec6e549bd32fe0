"""Command-line client for the verification service.

The CLI builds a JSON request from flags, posts it to the service (in
process by default, over HTTP with --server), and renders the envelope as a
human table, canonical JSON, or CSV.  Exit codes: 0 when the command's
checks pass, 1 when a verification fails its tolerance, 2 on usage or
configuration errors.
"""

import argparse
import csv
import io
import json
import sys

import httpx

DEFAULT_TRUNC = 200
DEFAULT_TOL = 1e-8
DEFAULT_SEED = 42

_ENDPOINTS = {
    "validate": "/model/validate",
    "stationary": "/model/stationary",
    "evolve": "/semigroup/evolve",
    "verify-intertwine": "/verify/intertwine",
    "verify-subcommute": "/verify/subcommute",
    "verify-bicommute": "/verify/bicommute",
    "curvature": "/curvature",
    "optimize-weight": "/optimize/weight",
    "gap-report": "/optimize/gap-report",
    "wasserstein": "/wasserstein",
    "inequalities": "/inequalities",
    "hitting": "/hitting",
    "mehler": "/mehler",
    "order": "/order",
    "simulate": "/simulate",
}


class UsageError(Exception):
    pass


def _parse_number_or_array(text, flag):
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        raise UsageError(f"{flag} must be a number or a JSON array, got '{text}'")
    if isinstance(value, (int, float)) or (
        isinstance(value, list) and all(isinstance(v, (int, float)) for v in value)
    ):
        return value
    raise UsageError(f"{flag} must be a number or a JSON array of numbers")


def _model_config(args, prefix=""):
    kind = getattr(args, f"{prefix}model")
    lam = getattr(args, f"{prefix}lam")
    nu = getattr(args, f"{prefix}nu")
    if kind is None:
        return None
    if lam is None or nu is None:
        raise UsageError(f"model '{kind}' needs --{prefix.replace('_', '-')}lambda and --{prefix.replace('_', '-')}nu")
    lam = _parse_number_or_array(lam, "--lambda")
    nu = _parse_number_or_array(nu, "--nu")
    if kind == "table":
        if not isinstance(lam, list) or not isinstance(nu, list):
            raise UsageError("model 'table' needs JSON arrays for --lambda and --nu")
        return {"kind": "table", "lam_table": lam, "nu_table": nu, "tail_rule": args.tail_rule}
    if isinstance(lam, list) or isinstance(nu, list):
        raise UsageError(f"model '{kind}' needs scalar --lambda and --nu")
    return {"kind": kind, "lambda": lam, "nu": nu}


def _weight_config(text):
    if text == "const":
        return {"kind": "const"}
    if text.startswith("geometric:"):
        try:
            kappa = float(text.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad geometric weight '{text}'; use geometric:<kappa>")
        return {"kind": "geometric", "kappa": kappa}
    if text.startswith("table:"):
        path = text.split(":", 1)[1]
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read weight table '{path}': {exc}")
        if isinstance(doc, list):
            return {"kind": "table", "values": doc}
        if isinstance(doc, dict) and "values" in doc:
            return {"kind": "table", "values": doc["values"], "tail_rule": doc.get("tail_rule", "hold_ratio")}
        raise UsageError(f"weight table '{path}' must be a JSON array or {{values, tail_rule}}")
    raise UsageError(f"bad --weight '{text}'; use const, geometric:<kappa>, or table:<path>")


def _phi_config(text):
    if text in ("square", "rlogr"):
        return {"name": text}
    if text.startswith("power:"):
        try:
            return {"name": "power", "p": float(text.split(":", 1)[1])}
        except ValueError:
            raise UsageError(f"bad --phi '{text}'; use power:<p>")
    raise UsageError(f"bad --phi '{text}'; use square, rlogr, or power:<p>")


def _family_config(text):
    parts = text.split(":")
    kind = parts[0]
    if kind not in ("constant", "geometric", "tabulated"):
        raise UsageError(f"bad --family '{text}'; use constant, geometric[:lo:hi], or tabulated[:dim]")
    cfg = {"kind": kind}
    try:
        if kind == "geometric" and len(parts) == 3:
            cfg["kappa_min"], cfg["kappa_max"] = float(parts[1]), float(parts[2])
        elif kind == "tabulated" and len(parts) == 2:
            cfg["dim"] = int(parts[1])
        elif len(parts) > 1:
            raise ValueError
    except ValueError:
        raise UsageError(f"bad --family '{text}'")
    return cfg


def _t_grid(text):
    try:
        grid = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"bad --t '{text}'; use a number or comma-separated numbers")
    if not grid:
        raise UsageError("--t must not be empty")
    return grid


def _probs(text, flag):
    if text is None:
        return None
    if text.startswith("["):
        doc = json.loads(text)
    else:
        try:
            with open(text) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read {flag} '{text}': {exc}")
    if not isinstance(doc, list):
        raise UsageError(f"{flag} must be a JSON array")
    return doc


def _build_parser():
    parser = argparse.ArgumentParser(prog="bdtwine", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", choices=["mm_infty", "mm1", "table"], default="mm_infty")
    common.add_argument("--lambda", dest="lam", help="birth rate: number, or JSON array for table models")
    common.add_argument("--nu", dest="nu", help="death rate: number, or JSON array for table models")
    common.add_argument("--tail-rule", default="hold_last", choices=["hold_last", "linear_extrapolate"])
    common.add_argument("--weight", default="const", help="const | geometric:<kappa> | table:<path>")
    common.add_argument("--t", default="1.0", help="time, or comma-separated grid for verify commands")
    common.add_argument("--trunc", type=int, default=DEFAULT_TRUNC, help="truncation level n")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--paths", type=int, default=10000)
    common.add_argument("--format", choices=["table", "json", "csv"], default="table")
    common.add_argument("--out", help="write output to this path instead of stdout")
    common.add_argument("--threads", type=int, help="cap BLAS worker threads (needs threadpoolctl)")
    common.add_argument("--server", help="base URL of a running service; default is in-process")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common])
    sub.add_parser("stationary", parents=[common])
    p = sub.add_parser("evolve", parents=[common])
    p.add_argument("--f", default="capped_rho", help="corpus function name or table:<path>")
    sub.add_parser("verify-intertwine", parents=[common])
    p = sub.add_parser("verify-subcommute", parents=[common])
    p.add_argument("--phi", default="square")
    p = sub.add_parser("verify-bicommute", parents=[common])
    p.add_argument("--phi", default="rlogr")
    p = sub.add_parser("curvature", parents=[common])
    p.add_argument("--with-kappa", action="store_true")
    p = sub.add_parser("optimize-weight", parents=[common])
    p.add_argument("--family", default="geometric")
    p.add_argument("--budget", type=int, default=20000)
    p = sub.add_parser("gap-report", parents=[common])
    p.add_argument("--family", default="geometric")
    p.add_argument("--budget", type=int, default=20000)
    p = sub.add_parser("wasserstein", parents=[common])
    p.add_argument("--x0-a", type=int, default=0)
    p.add_argument("--x0-b", type=int, default=None)
    p.add_argument("--with-lp", action="store_true")
    p.add_argument("--probs-a", help="JSON array or path")
    p.add_argument("--probs-b", help="JSON array or path")
    p = sub.add_parser("inequalities", parents=[common])
    p.add_argument("--checks", help="comma-separated subset of the battery")
    p = sub.add_parser("hitting", parents=[common])
    p.add_argument("--x", type=int, default=0)
    p = sub.add_parser("mehler", parents=[common])
    p.add_argument("--x0", type=int, default=0)
    p = sub.add_parser("order", parents=[common])
    p.add_argument("--check", default="domination", choices=["stochastic", "convex", "comparison", "domination", "binomial"])
    p.add_argument("--x", type=int, default=0)
    p.add_argument("--x0", type=int, default=0)
    p.add_argument("--model-b", choices=["mm_infty", "mm1", "table"], dest="model_b")
    p.add_argument("--lambda-b", dest="model_b_lam")
    p.add_argument("--nu-b", dest="model_b_nu")
    p.add_argument("--probs-a", help="JSON array or path")
    p.add_argument("--probs-b", help="JSON array or path")
    p = sub.add_parser("simulate", parents=[common])
    p.add_argument("--kind", default="hitting", choices=["path", "hitting", "coupled"])
    p.add_argument("--x0", type=int, default=1)
    p.add_argument("--stream", type=int, default=0)
    return parser


def _build_request(args):
    weight = _weight_config(args.weight)
    t_grid = _t_grid(args.t)
    t = t_grid[0]
    n, tol, seed = args.trunc, args.tol, args.seed
    cmd = args.command

    def model():
        cfg = _model_config(args)
        if cfg is None:
            raise UsageError(f"'{cmd}' needs --model with --lambda and --nu")
        return cfg

    if cmd in ("validate", "stationary"):
        return {"model": model(), "n": n}
    if cmd == "evolve":
        if args.f.startswith("table:"):
            with open(args.f.split(":", 1)[1]) as fh:
                f_cfg = {"kind": "table", "values": json.load(fh)}
        else:
            f_cfg = {"kind": "corpus", "name": args.f}
        return {"model": model(), "f": f_cfg, "weight": weight, "t": t, "n": n, "tol": tol}
    if cmd == "verify-intertwine":
        return {"model": model(), "weight": weight, "t_grid": t_grid, "n": n, "tol": tol, "seed": seed}
    if cmd == "verify-subcommute":
        return {"model": model(), "weight": weight, "phi": _phi_config(args.phi), "t_grid": t_grid, "n": n, "tol": tol, "seed": seed}
    if cmd == "verify-bicommute":
        return {"model": model(), "phi": _phi_config(args.phi), "t_grid": t_grid, "n": n, "tol": tol, "seed": seed}
    if cmd == "curvature":
        return {"model": model(), "weight": weight, "n": n, "with_kappa": args.with_kappa, "tol": tol}
    if cmd in ("optimize-weight", "gap-report"):
        return {"model": model(), "family": _family_config(args.family), "n": n, "budget": args.budget, "seed": seed}
    if cmd == "wasserstein":
        body = {"weight": weight, "x0_a": args.x0_a, "t": t, "n": n, "with_lp": args.with_lp}
        pa, pb = _probs(args.probs_a, "--probs-a"), _probs(args.probs_b, "--probs-b")
        if pa is not None and pb is not None:
            body["probs_a"], body["probs_b"] = pa, pb
        else:
            body["model"] = model()
            if args.x0_b is not None:
                body["x0_b"] = args.x0_b
        return body
    if cmd == "inequalities":
        body = {"model": model(), "weight": weight, "n": n, "seed": seed}
        if args.checks:
            body["checks"] = args.checks.split(",")
        return body
    if cmd == "hitting":
        cfg = model()
        if cfg.get("kind") == "table":
            raise UsageError("hitting needs scalar --lambda and --nu")
        return {"lambda": cfg["lambda"], "nu": cfg["nu"], "x": args.x, "t": t, "n": n, "tol": tol}
    if cmd == "mehler":
        cfg = model()
        if cfg.get("kind") == "table":
            raise UsageError("mehler needs scalar --lambda and --nu")
        return {"lambda": cfg["lambda"], "nu": cfg["nu"], "x0": args.x0, "t": t, "n": n, "tol": tol}
    if cmd == "order":
        body = {"check": args.check, "x": args.x, "x0": args.x0, "t": t, "n": n, "tol": tol}
        if args.check in ("stochastic", "convex"):
            body["probs_a"] = _probs(args.probs_a, "--probs-a")
            body["probs_b"] = _probs(args.probs_b, "--probs-b")
            if body["probs_a"] is None or body["probs_b"] is None:
                raise UsageError(f"order --check {args.check} needs --probs-a and --probs-b")
        else:
            body["model"] = model()
            if args.check == "comparison":
                if args.model_b is None or args.model_b_lam is None or args.model_b_nu is None:
                    raise UsageError("order --check comparison needs --model-b, --lambda-b, --nu-b")
                body["model_b"] = {
                    "kind": args.model_b,
                    "lambda": _parse_number_or_array(args.model_b_lam, "--lambda-b"),
                    "nu": _parse_number_or_array(args.model_b_nu, "--nu-b"),
                }
        return body
    if cmd == "simulate":
        return {"model": model(), "kind": args.kind, "x0": args.x0, "t": t, "paths": args.paths, "seed": seed, "stream": args.stream, "n": n}
    raise UsageError(f"unknown command '{cmd}'")


def _fmt_scalar(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, bool):
        return str(v).lower()
    return str(v)


def _fmt_value(v):
    if isinstance(v, list):
        if len(v) > 8:
            head = ", ".join(_fmt_scalar(x) for x in v[:8])
            return f"[{head}, ... +{len(v) - 8} more]"
        return "[" + ", ".join(_fmt_scalar(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}={_fmt_scalar(x) if not isinstance(x, (list, dict)) else '...'}" for k, x in v.items()) + "}"
    return _fmt_scalar(v)


def _render_table(payload):
    lines = [f"command: {payload['command']}", f"ok: {str(payload['ok']).lower()}"]
    result = payload.get("result", {})
    rows = result.get("rows") if isinstance(result, dict) else None
    for key in result:
        if key == "rows":
            continue
        lines.append(f"{key}: {_fmt_value(result[key])}")
    if rows:
        cols = sorted({k for r in rows for k in r})
        def cell(v):
            text = _fmt_value(v)
            return text[:45] + "..." if len(text) > 48 else text
        table = [cols] + [[cell(r.get(c, "")) for c in cols] for r in rows]
        widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
        lines.append("")
        for j, row in enumerate(table):
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
            if j == 0:
                lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _render_csv(payload):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    result = payload.get("result", {})
    rows = result.get("rows") if isinstance(result, dict) else None
    if rows:
        cols = sorted({k for r in rows for k in r})
        writer.writerow(cols)
        for r in rows:
            writer.writerow([json.dumps(r[c], sort_keys=True) if isinstance(r.get(c), (dict, list)) else r.get(c, "") for c in cols])
    else:
        writer.writerow(["key", "value"])
        writer.writerow(["command", payload["command"]])
        writer.writerow(["ok", payload["ok"]])
        for k, v in result.items():
            writer.writerow([k, json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else v])
    return buf.getvalue()


def _render(payload, fmt):
    if fmt == "json":
        return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
    if fmt == "csv":
        return _render_csv(payload)
    return _render_table(payload)


def _post(args, path, body):
    if args.server:
        with httpx.Client(base_url=args.server, timeout=600.0) as client:
            return client.post(path, json=body)

    import asyncio

    from .service import app

    async def go():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, base_url="http://bdtwine", timeout=None) as client:
            return await client.post(path, json=body)

    return asyncio.run(go())


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        try:
            from threadpoolctl import threadpool_limits

            threadpool_limits(args.threads)
        except ImportError:
            print("--threads ignored: threadpoolctl is not installed", file=sys.stderr)
    try:
        body = _build_request(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        resp = _post(args, _ENDPOINTS[args.command], body)
    except httpx.HTTPError as exc:
        print(f"error: service unreachable: {exc}", file=sys.stderr)
        return 2
    if resp.status_code != 200:
        try:
            detail = resp.json()
        except json.JSONDecodeError:
            detail = {"kind": "http", "message": resp.text}
        print(f"error [{resp.status_code}]: {json.dumps(detail, sort_keys=True)}", file=sys.stderr)
        return 2
    payload = resp.json()
    text = _render(payload, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if payload.get("ok") else 1


if __name__ == "__main__":
    sys.exit(main())
