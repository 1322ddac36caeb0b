"""Command-line front end: kernel, solve, diagnose and verify.

Exit codes: 0 success, 1 a verification check failed, 2 invalid configuration,
3 evaluation error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import fields as F
from . import kernels as K
from . import quadrature as Q
from . import solver as S
from . import verify as V
from .domain import Ball, Domain, domain_from_json
from .errors import FracLapError, NoContraction

log = logging.getLogger("fraclap")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_EVAL = 0, 1, 2, 3
TOP_KEYS = {"params", "domain", "problem", "quadrature", "walk", "output", "points", "grid", "points_file",
            "kernel", "diagnose", "verify"}
KERNELS = ("phi", "green", "poisson", "green_ext", "poisson_ext", "gamma")


class ConfigError(ValueError):
    """Configuration failed validation."""


class EvalError(RuntimeError):
    """Evaluation failed; message names the offending row when there is one."""


# -- configuration ------------------------------------------------------------------
def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def _params(cfg, perturb):
    p = cfg.get("params", {"n": 2, "s": 0.5})
    _check_keys(p, {"n", "s"}, "params")
    try:
        return K.make_params(p.get("n", 2), p.get("s", 0.5), perturb or 0.0)
    except FracLapError as exc:
        raise ConfigError(str(exc)) from exc


def _ball_json(b, where):
    _check_keys(b, {"c", "r"}, where)
    if "c" not in b or "r" not in b:
        raise ConfigError(f"{where} needs c and r")


def _domain(cfg, n):
    spec = cfg.get("domain", {"type": "ball", "c": [0.0] * n, "r": 1.0})
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("domain needs a type")
    kind = spec["type"]
    if kind == "ball":
        _check_keys(spec, {"type", "c", "r"}, "domain")
        _ball_json({k: spec[k] for k in ("c", "r") if k in spec}, "domain")
    elif kind == "lens":
        _check_keys(spec, {"type", "outer", "carve"}, "domain")
        _ball_json(spec.get("outer", {}), "domain.outer")
        _ball_json(spec.get("carve", {}), "domain.carve")
    elif kind == "intersection":
        _check_keys(spec, {"type", "balls", "carves", "members"}, "domain")
    else:
        raise ConfigError(f"unknown domain type {kind!r}")
    try:
        dom = domain_from_json(spec)
    except (FracLapError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid domain: {exc}") from exc
    if dom.dim != n:
        raise ConfigError(f"domain dimension {dom.dim} does not match n = {n}")
    return dom


FIELD_KEYS = {
    "zero": set(), "constant": {"value"}, "indicator": {"domain"}, "half_space": {"axis", "offset"},
    "torsion": set(), "nonuniqueness_example": set(), "radial": {"expr", "support", "decay"},
}


def build_field(spec, p, dom):
    """Field from a named built-in spec, or a bare radial expression string."""
    if spec is None:
        return F.zero()
    if isinstance(spec, (int, float)):
        return F.constant(float(spec))
    if isinstance(spec, str):
        spec = {"type": "radial", "expr": spec}
    if not isinstance(spec, dict) or spec.get("type") not in FIELD_KEYS:
        raise ConfigError(f"unknown field spec {spec!r}")
    kind = spec["type"]
    _check_keys(spec, FIELD_KEYS[kind] | {"type"}, f"field {kind}")
    try:
        if kind == "zero":
            return F.zero()
        if kind == "constant":
            return F.constant(float(spec.get("value", 1.0)))
        if kind == "indicator":
            d = _domain({"domain": spec["domain"]}, p.n) if "domain" in spec else dom
            return F.indicator(d)
        if kind == "half_space":
            return F.half_space(int(spec.get("axis", 0)), float(spec.get("offset", 0.0)))
        if kind in ("torsion", "nonuniqueness_example"):
            ball = dom.bounding_ball if dom.is_ball else Ball(np.zeros(p.n), 1.0)
            return F.torsion(p, ball) if kind == "torsion" else F.nonuniqueness_example(p, ball)
        support = _domain({"domain": spec["support"]}, p.n) if "support" in spec else None
        decay = spec.get("decay")
        return F.radial_expression(str(spec["expr"]), support, None if decay is None else float(decay))
    except (FracLapError, KeyError, SyntaxError) as exc:
        raise ConfigError(f"invalid field spec {spec!r}: {exc}") from exc


def _points(cfg, dom, n):
    if sum(k in cfg for k in ("points", "grid", "points_file")) > 1:
        raise ConfigError("give only one of points, grid, points_file")
    if "points_file" in cfg:
        return read_points(cfg["points_file"], n)
    if "points" in cfg:
        pts = np.asarray(cfg["points"], dtype=float)
        if pts.size == 0:
            return np.zeros((0, n))
        if pts.ndim != 2 or pts.shape[1] != n:
            raise ConfigError(f"points must be a list of {n}-vectors")
        return pts
    grid = cfg.get("grid", {"type": "radial", "count": 50})
    _check_keys(grid, {"type", "count", "max_fraction", "rings", "per_ring"}, "grid")
    c = dom.bounding_ball.c if dom.is_ball else Q.deep_point(dom)
    if grid.get("type") == "radial":
        m = int(grid.get("count", 50))
        R = dom.inradius if not dom.is_ball else dom.as_ball.radius
        t = np.linspace(0.0, float(grid.get("max_fraction", 0.98)), m)
        pts = c + np.outer(t * R, np.eye(n)[0])
        return pts[dom.contains(pts)]
    if grid.get("type") == "polar" and n == 2:
        rings, per = int(grid.get("rings", 5)), int(grid.get("per_ring", 8))
        R = dom.inradius
        out = [c]
        for k in range(1, rings + 1):
            rr = R * float(grid.get("max_fraction", 0.9)) * k / rings
            th = 2 * math.pi * np.arange(per) / per
            out += list(c + rr * np.stack([np.cos(th), np.sin(th)], axis=1))
        pts = np.array(out)
        return pts[dom.contains(pts)]
    raise ConfigError(f"unknown grid {grid!r}")


def read_points(path, n=None):
    """CSV of coordinates; a non-numeric first row is taken as a header."""
    text = Path(path).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]
    try:
        arr = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"points file {path}: {exc}") from exc
    if not len(arr):
        return np.zeros((0, n or 0))
    if arr.ndim != 2 or (n is not None and arr.shape[1] % n):
        raise ConfigError(f"points file {path} has inconsistent columns")
    return arr


def fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def write_csv(path, header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(fmt(v) if not isinstance(v, str) else v for v in r) + "\n")
    _write(path, buf.getvalue())


def _write(path, text):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def dump_json(obj) -> str:
    return json.dumps(V._jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _summary_path(out):
    if out is None or str(out) == "-":
        return None
    out = Path(out)
    return out.with_name(out.stem + ".summary.json")


def _output(cfg):
    o = cfg.get("output", {})
    _check_keys(o, {"path", "format"}, "output")
    fmt_ = o.get("format", "csv")
    if fmt_ not in ("csv", "json"):
        raise ConfigError("output.format must be csv or json")
    return o.get("path"), fmt_


def _quad(cfg):
    try:
        return Q.QuadConfig.from_json(cfg.get("quadrature"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _walk(cfg, args):
    try:
        return S.WalkConfig.from_json(cfg.get("walk", {}), seed=args.seed, threads=args.threads)
    except (TypeError, ValueError, FracLapError) as exc:
        raise ConfigError(str(exc)) from exc


# -- commands -------------------------------------------------------------------------
def cmd_kernel(cfg, args):
    p = _params(cfg, args.perturb_constants)
    n = p.n
    kcfg = cfg.get("kernel", {})
    _check_keys(kcfg, {"target", "points_file", "ball"}, "kernel")
    target = args.target or kcfg.get("target")
    if target not in KERNELS:
        raise ConfigError(f"kernel target must be one of {KERNELS}")
    if "ball" in kcfg:
        _ball_json(kcfg["ball"], "kernel.ball")
        ball = Ball(kcfg["ball"]["c"], kcfg["ball"]["r"])
    else:
        dom = _domain(cfg, n)
        if not dom.is_ball:
            raise ConfigError("kernel evaluation needs a ball domain")
        ball = dom.as_ball
    path = args.points or kcfg.get("points_file") or cfg.get("points_file")
    if path is None:
        raise ConfigError("kernel needs a points file")
    pts = read_points(path)
    two = target not in ("phi", "gamma")
    width = 2 * n if two else n
    if len(pts) and pts.shape[1] != width:
        raise ConfigError(f"{target} needs {width} columns per row, got {pts.shape[1]}")
    q = _quad(cfg)
    fn = {
        "phi": lambda r: K.phi(p, r),
        "gamma": lambda r: K.gamma_density(p, r, q),
        "green": lambda r: K.green_ball(p, ball, r[:n], r[n:]),
        "poisson": lambda r: K.poisson_ball(p, ball, r[:n], r[n:]),
        "green_ext": lambda r: K.green_exterior_ball(p, ball, r[:n], r[n:]),
        "poisson_ext": lambda r: K.poisson_exterior_ball(p, ball, r[:n], r[n:]),
    }[target]
    rows = []
    for i, r in enumerate(pts):
        try:
            rows.append(list(r) + [float(fn(r))])
        except FracLapError as exc:
            raise EvalError(f"row {i}: {exc}") from exc
    header = [f"x{k + 1}" for k in range(n)] + ([f"y{k + 1}" for k in range(n)] if two else []) + ["value"]
    out, kind = args.out or _output(cfg)[0], _output(cfg)[1]
    if kind == "json":
        _write(out, dump_json({"kernel": target, "params": p.to_json(),
                               "rows": [{"point": r[:-1], **K.KernelValue.of(r[-1]).to_json()} for r in rows]}))
    else:
        write_csv(out, header, rows)
    return EXIT_OK


def _solve_ball(p, ball, f, g, pts, q):
    v = np.zeros(len(pts))
    if len(pts):
        v = np.asarray(Q.convolve_green(p, ball, f, pts, q), dtype=float).reshape(-1)
        v = v + np.asarray(Q.convolve_poisson(p, ball, g, pts, q), dtype=float).reshape(-1)
    return v


def cmd_solve(cfg, args):
    p = _params(cfg, args.perturb_constants)
    n = p.n
    dom = _domain(cfg, n)
    prob = cfg.get("problem", {})
    _check_keys(prob, {"f", "g", "c"}, "problem")
    f = build_field(prob.get("f"), p, dom)
    g = build_field(prob.get("g"), p, dom)
    c = build_field(prob.get("c"), p, dom)
    q = _quad(cfg)
    wcfg = _walk(cfg, args)
    pts = _points(cfg, dom, n)
    if len(pts) and not np.all(dom.contains(pts)):
        raise EvalError(f"row {int(np.flatnonzero(~dom.contains(pts))[0])}: point is not inside the domain")
    out, kind = args.out or _output(cfg)[0], _output(cfg)[1]
    summary = {"command": "solve", "params": p.to_json(), "domain": dom.to_json(), "points": int(len(pts)),
               "problem": {"f": f.name, "g": g.name, "c": c.name}}
    t0 = time.perf_counter()
    header = [f"x{k + 1}" for k in range(n)] + ["value"]
    try:
        if not c.is_zero:
            res = S.solve_with_potential(p, dom, f, c, wcfg, q, points=pts, g=g)
            summary.update(representation="monte_carlo_fixed_point", walk=wcfg.to_json(), trace=res.trace,
                           censored=int(sum(e.censored for e in res.estimates)))
            rows = [list(x) + [e.mean, e.std_error, e.mean_steps] for x, e in zip(pts, res.estimates)]
            header += ["std_error", "steps"]
        elif dom.is_ball:
            vals = _solve_ball(p, dom.as_ball, f, g, pts, q)
            summary.update(representation="ball_quadrature", quadrature=q.to_json())
            rows = [list(x) + [v] for x, v in zip(pts, vals)]
        else:
            res = S.solve_field(p, dom, f, g, pts, wcfg, q)
            ests = [e for _, e in res]
            summary.update(representation="monte_carlo", walk=wcfg.to_json(),
                           walkers_used=int(sum(e.walkers_used for e in ests)),
                           censored=int(sum(e.censored for e in ests)),
                           max_censored_fraction=max((e.censored_fraction for e in ests), default=0.0),
                           mean_steps=float(np.mean([e.mean_steps for e in ests])) if ests else None)
            rows = [list(x) + [e.mean, e.std_error, e.mean_steps] for x, e in zip(pts, ests)]
            header += ["std_error", "steps"]
    except NoContraction as exc:
        summary.update(error=f"NoContraction: {exc}")
        _write(_summary_path(out), dump_json(summary)) if _summary_path(out) else None
        raise EvalError(f"NoContraction: {exc}") from exc
    log.info("solve finished in %.2f s", time.perf_counter() - t0)
    if kind == "json":
        summary["rows"] = [dict(zip(header, r)) for r in rows]
        _write(out, dump_json(summary))
    else:
        write_csv(out, header, rows)
        sp = _summary_path(out)
        if sp is not None:
            _write(sp, dump_json(summary))
    return EXIT_OK


def cmd_diagnose(cfg, args):
    p = _params(cfg, args.perturb_constants)
    dom = _domain(cfg, p.n)
    d = cfg.get("diagnose", {})
    _check_keys(d, {"source", "field", "ladder", "exponent"}, "diagnose")
    src = d.get("source", "builtin")
    q = _quad(cfg)
    if src == "builtin":
        u = build_field(d.get("field", {"type": "nonuniqueness_example"}), p, dom)
    elif src == "solved":
        prob = cfg.get("problem", {})
        _check_keys(prob, {"f", "g", "c"}, "problem")
        f = build_field(prob.get("f", {"type": "constant", "value": 1.0}), p, dom)
        if not dom.is_ball:
            raise ConfigError("solved fields need a ball domain")
        u = Q.green_field(p, dom.as_ball, f)
    else:
        raise ConfigError("diagnose.source must be builtin or solved")
    ladder = d.get("ladder")
    try:
        verdict = S.uniqueness_diagnostic(p, dom, u, ladder, q)
    except FracLapError as exc:
        raise EvalError(str(exc)) from exc
    out = args.out or _output(cfg)[0]
    table = [{"eps": e, "D": v, "D_minus": a, "D_plus": b}
             for e, v, a, b in zip(verdict.eps_ladder, verdict.D_values, verdict.D_lower, verdict.D_upper)]
    _write(out, dump_json({"command": "diagnose", "params": p.to_json(), "domain": dom.to_json(),
                           "field": u.name, "source": src, "verdict": verdict.to_json(), "table": table}))
    return EXIT_OK


def cmd_verify(cfg, args):
    d = cfg.get("verify", {})
    _check_keys(d, set(V.SUITE_DEFAULTS), "verify")
    d = dict(d)
    if args.seed is not None:
        d["seed"] = args.seed
    pcfg = cfg.get("params", {"n": 2, "s": 0.5})
    _check_keys(pcfg, {"n", "s"}, "params")
    params = {"n": pcfg.get("n", 2), "s": pcfg.get("s", 0.5), "perturb": args.perturb_constants or 0.0}
    reps = V.run_suite(params, d, threads=args.threads or 1, q=_quad(cfg))
    report = V.suite_json(reps, {"n": params["n"], "s": params["s"]})
    if args.perturb_constants:
        report["perturb_constants"] = args.perturb_constants
    _write(args.out or _output(cfg)[0], dump_json(report))
    return EXIT_OK if report["pass"] else EXIT_FAIL


COMMANDS = {"kernel": cmd_kernel, "solve": cmd_solve, "diagnose": cmd_diagnose, "verify": cmd_verify}


def build_parser():
    ap = argparse.ArgumentParser(prog="fraclap", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("target", nargs="?", help="kernel name for the kernel command")
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--out", help="output path (default stdout)")
    ap.add_argument("--points", help="points CSV for the kernel command")
    ap.add_argument("--seed", type=int, help="64-bit seed overriding the config")
    ap.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    ap.add_argument("--perturb-constants", type=float, default=0.0,
                    help="scale every normalization constant by (1 + delta); fault injection")
    return ap


def main(argv=None) -> int:
    level = os.environ.get("FRACLAP_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = {}
        if args.config:
            try:
                cfg = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
        _check_keys(cfg, TOP_KEYS, "config")
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads must be positive")
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvalError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except FracLapError as exc:
        print(f"evaluation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
