"""Command-line experiment runner.

Every command writes one report (JSON by default) whose header echoes the
configuration and the package version, so identical invocations give
byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ComputeError, ConfigError, InputError
from .graph import read_edge_list
from .models import MODELS, VARIANTS, Exhaustion, make_exhaustion, single_level

COMMANDS = ("kernel", "hm", "gluing", "crw", "ust", "harnack", "identity-suite")
OUTPUT_ENV = "POTKIT_OUTPUT_DIR"

DEFAULT_LEVELS = {"kernel": "16,32,64", "hm": "16,32,64", "gluing": "32,64", "crw": "32",
                  "ust": "8,16,32", "harnack": "64", "identity-suite": "8,16"}


# ---------------------------------------------------------------- serialisation

def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = format(x, ".17g")
    return s if any(c in s for c in ".en") else s + ".0"


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def to_json(obj, indent: int = 0) -> str:
    """Deterministic JSON; floats carry 17 significant digits, non-finite values become strings."""
    obj = _plain(obj)
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + to_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv_cell(v) -> str:
    v = _plain(v)
    if isinstance(v, float):
        return format(v, ".12g")
    return "" if v is None else str(v)


def to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols: list[str] = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_csv_cell(r.get(c)) for c in cols])
    return buf.getvalue()


# ---------------------------------------------------------------- argument helpers

def parse_levels(text: str) -> list[int]:
    try:
        levels = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"levels must be comma-separated integers, got {text!r}") from None
    if not levels:
        raise ConfigError("levels must be nonempty")
    if levels[0] < 1 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError(f"levels must be positive and strictly increasing, got {text!r}")
    return levels


def parse_coord(text: str | None):
    if text is None:
        return None
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"coordinates must be comma-separated integers, got {text!r}") from None


def parse_set(text: str | None) -> list[tuple]:
    if not text:
        return []
    return [parse_coord(t) for t in text.split(";") if t.strip()]


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="potkit", description="Potential-kernel experiments on wired exhaustions.")
    p.add_argument("--version", action="version", version=f"potkit {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--model", default="grid2d", help=f"one of {', '.join(MODELS)}")
    p.add_argument("--variant", default=None, help="exhaustion variant (e.g. box, diamond, symmetric, one-sided)")
    p.add_argument("--graph-file", default=None, help="edge list 'u v [c]'; used as a single wired level")
    p.add_argument("--boundary", type=int, default=None, help="wired vertex of --graph-file (default: last vertex)")
    p.add_argument("--anchor", type=int, default=0, help="anchor vertex of --graph-file")
    p.add_argument("--levels", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--output", default=None, help="report path; '-' for stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--pin", default=None, help="golden file: written if absent, compared against otherwise")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--x", default=None, help="point, e.g. 1,0")
    p.add_argument("--y", default=None, help="second point / pole")
    p.add_argument("--set", dest="set_", default=None, help="finite set, e.g. '0,0;1,0'")
    p.add_argument("--w", default=None, help="evaluation point for gluing")
    p.add_argument("--paths", type=int, default=10**4, help="Monte-Carlo paths")
    p.add_argument("--samples", type=int, default=500, help="spanning-tree samples per level")
    p.add_argument("--radii", default="2,4,8")
    p.add_argument("--M", type=float, default=8.0)
    return p


def _exhaustion(args, levels: list[int]) -> Exhaustion:
    if args.graph_file:
        g = read_edge_list(args.graph_file)
        wd = g.vertex_count - 1 if args.boundary is None else args.boundary
        if not 0 <= wd < g.vertex_count or not 0 <= args.anchor < g.vertex_count or wd == args.anchor:
            raise ConfigError("boundary and anchor must be distinct vertices of the graph")
        return single_level(g, wd, args.anchor, n=levels[-1])
    if args.model not in MODELS:
        raise ConfigError(f"unknown model {args.model!r}; choose from {', '.join(MODELS)}")
    if args.variant and args.variant not in VARIANTS[args.model]:
        raise ConfigError(f"model {args.model!r} has variants {', '.join(VARIANTS[args.model])}")
    return make_exhaustion(args.model, levels, args.variant)


def _origin(exh: Exhaustion):
    return exh.anchor_coord


def _unit(exh: Exhaustion):
    o = exh.anchor_coord
    return (o[0] + 1,) + tuple(o[1:])


# ---------------------------------------------------------------- commands

def cmd_kernel(args, exh):
    from .checks import kernel_identity_residuals
    from .kernel import kernel_limit

    x = parse_coord(args.x) or _unit(exh)
    y = parse_coord(args.y) or _origin(exh)
    alts = []
    if not args.graph_file and len(VARIANTS[exh.model]) > 1 and exh.model != "line":
        alts = [make_exhaustion(exh.model, exh.levels, v) for v in VARIANTS[exh.model] if v != exh.variant]
    if len(exh.levels) >= 3:
        est = kernel_limit(exh, x, y, args.tol, alts)
        per = est.per_level_values
        results = {"value": est.value, "converged": est.converged,
                   "spread_across_sequences": est.spread_across_sequences,
                   "sequence_finals": dict(est.sequence_finals)}
    else:
        from .kernel import kernel_levels
        per = tuple(kernel_levels(exh, x, y))
        results = {"value": per[-1][1], "converged": False}
    results["per_level"] = [{"level": n, "a": v} for n, v in per]
    res = kernel_identity_residuals(exh, y)
    residuals = {"kernel_resistance": max(r for _, r, _ in res), "kernel_escape": max(e for _, _, e in res)}
    return results, residuals, results["per_level"]


def cmd_hm(args, exh):
    from .kernel import hm_consistency, hm_two_point

    x = parse_coord(args.x) or _unit(exh)
    y = parse_coord(args.y) or _origin(exh)
    est = hm_two_point(exh, x, y, args.tol)
    rows = [{"level": n, "hm": v} for n, v in est.per_level_values]
    lv = exh.top
    results = {"value": est.value, "converged": est.converged, "per_level": rows}
    return results, {"hm_resistance": hm_consistency(lv, lv.vid(x), lv.vid(y))}, rows


def cmd_gluing(args, exh):
    from .kernel import hm_from_infinity, q_B

    B = parse_set(args.set_) or [_origin(exh), _unit(exh)]
    w = parse_coord(args.w) or tuple(c + 2 for c in _unit(exh))
    lim = q_B(exh, B, w, via="limit")
    frm = q_B(exh, B, w, via="formula")
    hm = hm_from_infinity(exh, B)
    lv = exh.top
    rows = [{"level": a[0], "q_limit": a[1], "q_formula": b[1]}
            for a, b in zip(lim.per_level_values, frm.per_level_values)]
    results = {"q_limit": lim.value, "q_formula": frm.value, "per_level": rows,
               "hm": {",".join(map(str, lv.coord(v))): float(p) for v, p in zip(hm.support, hm.masses)}}
    residuals = {"route_gap": abs(lim.value - frm.value), "x_deviation": frm.x_deviation,
                 "hm_mass": abs(float(np.sum(hm.masses)) - 1.0)}
    return results, residuals, rows


def cmd_crw(args, exh):
    from .crw import (crw_from_exhaustion, crw_green, crw_hit_prob, one_step_martingale,
                      row_sum_residual, stationary_residual)

    chain = crw_from_exhaustion(exh)
    lv = exh.top
    x = lv.vid(parse_coord(args.x) or tuple(c + 1 for c in _unit(exh)))
    y = lv.vid(parse_coord(args.y) or _unit(exh))
    g_an = crw_green(chain, x, y, "analytic")
    g_mc = crw_green(chain, x, y, "monte_carlo", n_paths=args.paths, seed=args.seed, threads=args.threads,
                     absorb=False)
    h_an = crw_hit_prob(chain, x, y, "analytic")
    h_sv = crw_hit_prob(chain, x, y, "solve")
    results = {"green_analytic": g_an, "green_mc": g_mc.value, "green_mc_stderr": g_mc.stderr,
               "n_paths": g_mc.n_paths, "hit_analytic": h_an.value, "hit_solve": h_sv.value,
               "leakage": h_an.leakage}
    residuals = {"row_sums": row_sum_residual(chain), "martingale": one_step_martingale(chain),
                 "stationary": stationary_residual(chain), "hit_routes": abs(h_an.value - h_sv.value)}
    return results, residuals, [results]


def cmd_ust(args, exh):
    from .ust import end_diagnostic

    d = end_diagnostic(exh, n_samples=args.samples, seed=args.seed, threads=args.threads)
    rows = [{"level": s.level, "reach": s.reach_probability, "stderr": s.reach_stderr,
             "radius": s.reach_radius, "mean_past": s.mean_past, "max_past": s.max_past,
             "exact_reach": s.exact_reach} for s in d.per_level]
    results = {"two_ended_suspect": d.two_ended_suspect, "per_level": rows}
    return results, {}, rows


def cmd_harnack(args, exh):
    from .harnack import anchored_ratio, elliptic_ratio

    rows = []
    for R in _floats(args.radii):
        for kind, fn in (("elliptic", elliptic_ratio), ("anchored", anchored_ratio)):
            rep = fn(exh, R=R, M=args.M)
            d = {"family": kind}
            d.update(rep.as_dict(exh.level(rep.level)))
            rows.append(d)
    finite = [r["ratio"] for r in rows if not r["diverged"]]
    results = {"rows": rows, "any_diverged": any(r["diverged"] for r in rows),
               "max_ratio": max(finite) if finite else math.inf}
    return results, {}, rows


def cmd_identity(args, exh):
    from .checks import identity_suite, level_suite

    if args.graph_file:
        lv = exh.top
        suite = identity_suite([(Path(args.graph_file).name, lv.graph, lv.boundary)], seed=args.seed)
        per_level = {}
    else:
        suite = identity_suite(seed=args.seed)
        per_level = level_suite(exh)
    residuals = dict(suite.by_identity())
    residuals.update(per_level)
    rows = [{"graph": name, **row} for name, row in suite.residuals.items()]
    results = {"graphs": len(suite.residuals), "max_residual": max(residuals.values()),
               "within_tol": max(residuals.values()) <= args.tol}
    return results, residuals, rows


HANDLERS = {"kernel": cmd_kernel, "hm": cmd_hm, "gluing": cmd_gluing, "crw": cmd_crw,
            "ust": cmd_ust, "harnack": cmd_harnack, "identity-suite": cmd_identity}


# ---------------------------------------------------------------- pinning

def _flatten(obj, prefix="") -> dict[str, float]:
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            out.update(_flatten(v, f"{prefix}{i}."))
    elif isinstance(obj, (float, int, np.floating, np.integer)) and not isinstance(obj, bool):
        out[prefix[:-1]] = float(obj)
    return out


def check_pin(path: Path, results: dict, tol: float) -> list[str]:
    """Write golden values if ``path`` is absent; otherwise list the values that drifted."""
    flat = _flatten(results)
    if not path.exists():
        path.write_text(to_json(flat) + "\n")
        return []
    gold = json.loads(path.read_text())
    drift = []
    for k, v in gold.items():
        v = float(v)
        now = flat.get(k)
        if now is None:
            drift.append(f"{k}: missing")
        elif not (now == v or abs(now - v) <= tol * max(1.0, abs(v))):
            drift.append(f"{k}: pinned {v!r}, got {now!r}")
    return drift


# ---------------------------------------------------------------- entry point

def _output_path(args) -> Path | None:
    if args.output == "-":
        return None
    if args.output:
        return Path(args.output)
    base = Path(os.environ.get(OUTPUT_ENV, "."))
    return base / f"{args.command}-{args.model if not args.graph_file else 'graph'}.{args.format}"


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.tol <= 0:
            raise ConfigError("tol must be positive")
        if args.threads < 1:
            raise ConfigError("threads must be at least 1")
        levels = parse_levels(args.levels or DEFAULT_LEVELS[args.command])
        exh = _exhaustion(args, levels)
        results, residuals, rows = HANDLERS[args.command](args, exh)
        warnings = []
        if args.pin:
            drift = check_pin(Path(args.pin), results, args.tol)
            if drift:
                raise ComputeError("pinned values drifted: " + "; ".join(drift))
        report = {"command": args.command, "version": __version__,
                  "model": "graph-file" if args.graph_file else args.model,
                  "variant": exh.variant, "levels": levels, "seed": args.seed, "tol": args.tol,
                  "threads_independent": True, "results": results, "residuals": residuals,
                  "warnings": warnings}
        if args.format == "json":
            text = to_json(report) + "\n"
        else:
            header = f"# potkit {__version__} command={args.command} model={report['model']} " \
                     f"levels={','.join(map(str, levels))} seed={args.seed} tol={_csv_cell(args.tol)}\n"
            text = header + to_csv(rows)
        out = _output_path(args)
        if out is None:
            sys.stdout.write(text)
        else:
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(text)
            print(out)
        return 0
    except InputError as exc:
        print(f"potkit: error: {exc}", file=sys.stderr)
        return 2
    except ComputeError as exc:
        print(f"potkit: computation failed: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())
