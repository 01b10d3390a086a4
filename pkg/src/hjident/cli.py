"""Command-line front end: CSV/JSON in, JSON report (and SVG diagrams) out."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import tempfile
import time
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .aggregation import (ConeK, Demand, aggregate_profit_ces_demand, aggregate_profit_complementary,
                          aggregate_profit_numeric, industry, k_stable_check)
from .arrangement import enumerate_spectra, transform_coordinates
from .core import NormalizedPrices, TimeSeriesRecord, check_rho, outputs
from .duality import (CesProductionParams, CobbDouglasParams, capacity_density_cd, capacity_density_ces,
                      cd_profit, ces_profit, check_propchar, laplace_preimage_cd, laplace_preimage_ces,
                      lapsqrt2_identity, numeric_profit, unit_cost_r)
from .elasticity import estimate_elasticity
from .errors import HJError, ValidationError
from .moment import chebyshev_center, moment_solvable
from .tiling import hexagons, output_order, snake_in_region, snake_in_tiling, snake_of_permutation, tiling_for_series

SCHEMA = 1
COMMANDS = ("estimate-elasticity", "check-moment", "tiling", "duality-verify", "aggregate", "k-stable")
HEADER = ["t", "y", "p0", "p1", "p2"]
SVG_ELEMENTS = frozenset({"svg", "g", "title", "rect", "line", "polyline", "polygon", "circle", "text"})
SVG_NS = "http://www.w3.org/2000/svg"


# ---------------------------------------------------------------------------
# input


def ingest_csv(path: str | os.PathLike) -> list[TimeSeriesRecord]:
    """Read ``t,y,p0,p1,p2`` rows; errors name the offending line (header is line 1)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows or [c.strip() for c in rows[0]] != HEADER:
        raise ValidationError(f"header must be {','.join(HEADER)}", line=1)
    records, seen = [], {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(HEADER):
            raise ValidationError(f"expected {len(HEADER)} fields, got {len(row)}", line=lineno)
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise ValidationError(f"malformed number ({exc})", line=lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError("values must be finite", line=lineno)
        t = vals[0]
        if t != int(t):
            raise ValidationError(f"time index {row[0]!r} is not an integer", line=lineno)
        if int(t) in seen:
            raise ValidationError(f"duplicate time index {int(t)} (first on line {seen[int(t)]})", line=lineno)
        if any(v <= 0 for v in vals[2:]):
            raise ValidationError("prices must be positive", line=lineno)
        try:
            rec = TimeSeriesRecord(int(t), vals[1], vals[2], (vals[3], vals[4]))
        except ValidationError as exc:
            raise ValidationError(str(exc), line=lineno) from None
        seen[int(t)] = lineno
        records.append(rec)
    if not records:
        raise ValidationError("no data rows")
    return sorted(records, key=lambda r: r.t)


def _load_config(path: str | os.PathLike) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    return cfg


def _need(cfg: dict, key: str):
    if key not in cfg:
        raise ValidationError(f"config is missing {key!r}")
    return cfg[key]


# ---------------------------------------------------------------------------
# output


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def to_json(obj: Any, indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist(), indent)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {to_json(obj[k], indent + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, frozenset, set)):
        seq = sorted(obj) if isinstance(obj, (set, frozenset)) else list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(to_json(v) for v in seq) + "]"
        return "[\n" + ",\n".join(inner + to_json(v, indent + 1) for v in seq) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _digest(path: str | os.PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# svg


def _check_svg(root: ET.Element) -> None:
    for el in root.iter():
        tag = el.tag.split("}")[-1]
        if tag not in SVG_ELEMENTS:
            raise ValueError(f"element {tag!r} is not whitelisted")


def _arrangement_panel(parent: ET.Element, series, rho: float, x0: float, size: float) -> None:
    family = transform_coordinates(rho, NormalizedPrices.from_series(series))
    B = 2.0 * family.intercept_bound()
    sc = size / B
    g = ET.SubElement(parent, "g", {"class": "arrangement"})
    ET.SubElement(g, "title").text = f"transformed level lines, rho = {format(rho, '.6g')}"
    ET.SubElement(g, "rect", {"x": _c(x0), "y": "0", "width": _c(size), "height": _c(size),
                              "fill": "none", "stroke": "#999"})

    def pt(z):
        return x0 + z[0] * sc, size - z[1] * sc

    for t, (a, b) in enumerate(family.coeffs, start=1):
        ends = _clip_line(a, b, B)
        if ends is None:
            continue
        (xa, ya), (xb, yb) = pt(ends[0]), pt(ends[1])
        ln = ET.SubElement(g, "line", {"class": "level-line", "x1": _c(xa), "y1": _c(ya), "x2": _c(xb),
                                       "y2": _c(yb), "stroke": "#1f4e9c", "stroke-width": "1"})
        ET.SubElement(ln, "title").text = f"observation {series[t - 1].t}"
    for spec in sorted(enumerate_spectra(family)):
        z, _, _ = chebyshev_center(family, spec)
        x, y = pt(z)
        ET.SubElement(g, "text", {"class": "cell-label", "x": _c(x), "y": _c(y), "font-size": "9",
                                  "text-anchor": "middle"}).text = "".join(map(str, spec))


def _clip_line(a: float, b: float, B: float):
    """Segment of ``a z1 + b z2 = 1`` inside ``[0, B]^2``."""
    cand = [(0.0, 1 / b), (1 / a, 0.0), (B, (1 - a * B) / b), ((1 - b * B) / a, B)]
    pts = sorted({(round(x, 15), round(y, 15)) for x, y in cand if -1e-12 <= x <= B + 1e-12 and -1e-12 <= y <= B + 1e-12})
    if len(pts) < 2:
        return None
    return pts[0], pts[-1]


def _c(v: float) -> str:
    return format(float(v), ".6g")


def _tiling_panel(parent: ET.Element, st, lam_new, x0: float, size: float) -> None:
    T = st.tiling.T
    xs = [v[0] for sn in st.tiling.snakes for v in sn.vertices]
    span_x = max(max(xs) - min(xs), 1)
    sc = 0.9 * size / max(span_x, T)
    ox = x0 + size / 2 - sc * (max(xs) + min(xs)) / 2
    oy = 0.05 * size + sc * T

    def pt(v):
        return ox + sc * v[0], oy - sc * v[1]

    def pts(vs):
        return " ".join(f"{_c(a)},{_c(b)}" for a, b in map(pt, vs))

    g = ET.SubElement(parent, "g", {"class": "tiling"})
    ET.SubElement(g, "title").text = f"rhombic tiling, word {st.tiling.word}"
    for rh in st.tiling.rhombi:
        b, i, j, top = rh.vertices
        poly = ET.SubElement(g, "polygon", {"class": "rhombus", "points": pts((b, i, top, j)),
                                            "fill": "#f3e6c4", "stroke": "#555", "stroke-width": "0.5"})
        ET.SubElement(poly, "title").text = f"crossing of lines {rh.pair[0]} and {rh.pair[1]}"
    for k, sn in enumerate(st.tiling.snakes):
        ET.SubElement(g, "polyline", {"class": "snake", "points": pts(sn.vertices), "fill": "none",
                                      "stroke": "#2a7f3f", "stroke-width": "0.8", "stroke-opacity": "0.6"})
    lam = snake_of_permutation(lam_new, T)
    ET.SubElement(g, "polyline", {"class": "output-snake", "points": pts(lam.vertices), "fill": "none",
                                  "stroke": "#c0392b", "stroke-width": "2"})


def render_svg(series, rho: float, st=None) -> str:
    size = 400.0
    root = ET.Element("svg", {"xmlns": SVG_NS, "version": "1.1", "width": _c(2 * size + 30),
                              "height": _c(size + 10), "viewBox": f"0 0 {_c(2 * size + 30)} {_c(size + 10)}"})
    ET.SubElement(root, "title").text = "arrangement and tiling"
    _arrangement_panel(root, series, rho, 5.0, size)
    st = tiling_for_series(series, rho) if st is None else st
    order, _ = output_order(outputs(series))
    _tiling_panel(root, st, st.to_new(order), size + 25.0, size)
    _check_svg(root)
    ET.register_namespace("", SVG_NS)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


# ---------------------------------------------------------------------------
# commands


def _series_inputs(series) -> dict:
    return {"T": len(series), "t": [r.t for r in series]}


def _require_rho(args) -> float:
    if args.rho is None:
        raise ValidationError(f"{args.command} needs --rho")
    return check_rho(args.rho)


def cmd_estimate_elasticity(args, series) -> tuple[dict, list[str]]:
    rep = estimate_elasticity(series, witnesses=False, seed=args.seed)
    intervals = []
    for iv, (s_lo, s_hi, _) in zip(rep.intervals, rep.sigma_intervals):
        intervals.append({"rho_lo": iv.lo, "rho_hi": iv.hi, "lo_closed": iv.lo_closed, "solvable": iv.solvable,
                          "probe_rho": iv.probe_rho, "sigma_lo": s_lo, "sigma_hi": s_hi})
    crit = [{"rho": c.rho, "triple": [series[k - 1].t for k in c.triple], "boundary": c.boundary}
            for c in rep.critical.roots]
    res = {"intervals": intervals, "critical_rhos": crit,
           "parallel_triples": [[series[k - 1].t for k in tr] for tr in rep.critical.skipped],
           "solvable_count": len(rep.solvable_intervals)}
    return res, list(rep.warnings)


def cmd_check_moment(args, series) -> tuple[dict, list[str]]:
    rho = _require_rho(args)
    rep = moment_solvable(series, rho, with_witness=True)
    res: dict = {"rho": rho, "solvable": rep.solvable, "cone_size": rep.cone_size,
                 "spectra_count": rep.spectra_count}
    if rep.solvable:
        w = rep.witness
        res["witness"] = {"points": w.points, "masses": w.masses, "radii": w.radii}
        res["residual"] = rep.residual
        res["verified"] = rep.residual <= args.tol
        res["generators"] = [{"spectrum": "".join(map(str, g)), "coefficient": c}
                             for g, c in zip(rep.generators, rep.coefficients) if c > 0]
    else:
        res["certificate"] = {"nu": rep.certificate.nu, "margin": rep.certificate.margin}
    if args.svg:
        atomic_write(args.svg, render_svg(series, rho))
    return res, list(rep.notes)


def cmd_tiling(args, series) -> tuple[dict, list[str]]:
    rho = _require_rho(args)
    st = tiling_for_series(series, rho)
    til = st.tiling
    order, tie = output_order(outputs(series))
    lam = snake_of_permutation(st.to_new(order), til.T)
    orig = {k: series[o - 1].t for k, o in enumerate(st.order, start=1)}
    res = {
        "rho": rho,
        "line_order": [orig[k] for k in range(1, til.T + 1)],
        "word": list(til.word.letters),
        "sigma": [orig[k] for k in st.sigma],
        "rhombi": [{"letter": r.letter, "lines": [orig[r.pair[0]], orig[r.pair[1]]], "vertices": r.vertices}
                   for r in til.rhombi],
        "snakes": [{"permutation": [orig[k] for k in sn.permutation], "vertices": sn.vertices}
                   for sn in til.snakes],
        "hexagon_count": len(hexagons(til)),
        "output_snake": {"order": [series[k - 1].t for k in order],
                         "in_tiling": snake_in_tiling(til, lam), "in_region": snake_in_region(til, lam),
                         "output_ties": tie},
    }
    warnings = ["equal outputs: the output order breaks ties by time index"] if tie else []
    if args.svg:
        atomic_write(args.svg, render_svg(series, rho, st))
    return res, warnings


def _price_points(cfg) -> list[tuple[float, float, float]]:
    pts = cfg.get("prices", [[1.0, 1.0, 1.0]])
    try:
        out = [tuple(float(v) for v in p) for p in pts]
    except (TypeError, ValueError):
        raise ValidationError("prices must be a list of [p1, p2, p0] triples") from None
    if any(len(p) != 3 for p in out):
        raise ValidationError("prices must be a list of [p1, p2, p0] triples")
    return out


def cmd_duality_verify(args, cfg) -> tuple[dict, list[str]]:
    model = _need(cfg, "model")
    tol = args.tol if args.tol is not None else 1e-4
    if model == "cobb-douglas":
        params = CobbDouglasParams(float(cfg.get("C", 1.0)), float(_need(cfg, "alpha1")), float(_need(cfg, "alpha2")))
        r = float(cfg.get("r", -1.0))
        Pi = cd_profit(params)
        dens = lambda x1, x2: capacity_density_cd(params, r, x1, x2)  # noqa: E731
        pre = lambda x1, x2: laplace_preimage_cd(params, r, x1, x2)  # noqa: E731
    elif model == "ces":
        params = CesProductionParams(float(_need(cfg, "alpha1")), float(_need(cfg, "alpha2")),
                                     float(_need(cfg, "rho")), float(_need(cfg, "gamma")))
        r = params.r
        Pi = ces_profit(params)
        dens = lambda x1, x2: capacity_density_ces(params, x1, x2)  # noqa: E731
        pre = lambda x1, x2: laplace_preimage_ces(params, x1, x2)  # noqa: E731
    else:
        raise ValidationError(f"unknown model {model!r}; use 'cobb-douglas' or 'ces'")
    h = unit_cost_r(r)
    rows = []
    for p1, p2, p0 in _price_points(cfg):
        closed = Pi(np.array([p1, p2]), p0)
        num = numeric_profit(dens, h, (p1, p2), p0, rtol=1e-8)
        rows.append({"p": [p1, p2, p0], "closed_form": closed, "quadrature": num,
                     "rel_error": abs(num - closed) / abs(closed)})
    res: dict = {"model": model, "r": r, "tol": tol, "points": rows,
                 "passed": all(row["rel_error"] <= tol for row in rows)}
    if model == "ces":
        gaps = [lapsqrt2_identity(params.beta1, params.beta2, params.b, p1, p2)[2] for p1, p2, _ in _price_points(cfg)]
        res["laplace_identity_gaps"] = gaps
    if cfg.get("propchar", False):
        grid = [(a, b) for a in (0.5, 1.0, 2.0) for b in (0.5, 1.0, 2.0)]
        rep = check_propchar(Pi, pre, r, grid, tol=1e-3, phi=dens, seed=args.seed)
        res["propchar"] = {"passed": rep.passed, "limit": rep.worst_limit, "homogeneity": rep.worst_homogeneity,
                           "second_derivative": rep.worst_second_derivative}
        res["passed"] = res["passed"] and rep.passed
    return res, []


def _demand(cfg) -> Demand:
    d = cfg.get("demand", {"kind": "leontief"})
    if isinstance(d, str):
        d = {"kind": d}
    return Demand(str(d.get("kind")), None if d.get("rho") is None else float(d["rho"]))


def cmd_aggregate(args, cfg) -> tuple[dict, list[str]]:
    specs = _need(cfg, "industries")
    if not isinstance(specs, list) or not specs:
        raise ValidationError("industries must be a nonempty list")
    inds = [industry(_need(sp, "points"), _need(sp, "masses"), str(sp.get("id", j))) for j, sp in enumerate(specs)]
    demand = _demand(cfg)
    s = np.asarray(_need(cfg, "s"), dtype=float)
    p0 = float(_need(cfg, "p0"))
    tol = args.tol if args.tol is not None else 1e-9
    r = aggregate_profit_numeric(inds, demand, s, p0, tol=tol)
    res: dict = {"numeric": {"value": r.value, "q": r.q, "constraint_slack": r.constraint_slack,
                             "stationarity_residual": r.stationarity_residual, "converged": r.converged}}
    warnings = list(r.notes)
    two_tech = len(inds) == 2 and len(inds[0].measure) == 1 and len(inds[1].measure) == 2
    if two_tech:
        (z,), (k0,) = inds[0].measure.points, inds[0].measure.masses
        (y1, y2), (k1, k2) = inds[1].measure.points, inds[1].measure.masses
        if demand.kind == "leontief" and k1 + k2 > k0:
            c = aggregate_profit_complementary(k0, z, k1, y1, k2, y2, s, p0)
            res["closed_form"] = {"value": c.value, "profit_1": c.profit_1, "profit_2": c.profit_2, "cone": c.cone}
        elif demand.kind == "ces":
            c = aggregate_profit_ces_demand(k0, z, k1, y1, k2, y2, demand.rho, s, p0)
            res["closed_form"] = {"value": c.value, "in_region": c.in_region, "kappa1": c.kappa1, "kappa2": c.kappa2}
            if c.measure is not None:
                res["closed_form"]["aggregate_measure"] = {"points": c.measure.points, "masses": c.measure.masses}
    return res, warnings


def cmd_k_stable(args, cfg) -> tuple[dict, list[str]]:
    X = np.asarray(_need(cfg, "X"), dtype=float)
    Y = np.asarray(_need(cfg, "Y"), dtype=float)
    gamma = cfg.get("gamma", list(range(len(X))))
    K = ConeK(np.asarray(cfg["cone"], dtype=float)) if "cone" in cfg else ConeK.orthant(X.shape[1])
    v = k_stable_check(X, Y, gamma, K)
    return {"stable": v.stable, "pair": None if v.pair is None else list(v.pair), "criterion": v.criterion}, []


HANDLERS = {
    "estimate-elasticity": (cmd_estimate_elasticity, "csv"),
    "check-moment": (cmd_check_moment, "csv"),
    "tiling": (cmd_tiling, "csv"),
    "duality-verify": (cmd_duality_verify, "json"),
    "aggregate": (cmd_aggregate, "json"),
    "k-stable": (cmd_k_stable, "json"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjident", description="Identify Houthakker-Johansen production models.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        kind = HANDLERS[name][1]
        p = sub.add_parser(name)
        p.add_argument("input", help="time-series CSV" if kind == "csv" else "JSON model config")
        p.add_argument("--rho", type=float, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="report path (default: stdout)")
        p.add_argument("--svg", default=None, help="diagram path (check-moment, tiling)")
        p.add_argument("--timing", action="store_true", help="include wall-clock time in the report")
    return ap


def run(args: argparse.Namespace) -> dict:
    handler, kind = HANDLERS[args.command]
    if args.tol is None and args.command == "check-moment":
        args.tol = 1e-9
    if args.tol is not None and not args.tol > 0:
        raise ValidationError("--tol must be positive")
    if args.svg and args.command not in ("check-moment", "tiling"):
        raise ValidationError("--svg applies to check-moment and tiling only")
    start = time.perf_counter()
    data = ingest_csv(args.input) if kind == "csv" else _load_config(args.input)
    results, warnings = handler(args, data)
    report = {
        "schema": SCHEMA,
        "version": __version__,
        "command": args.command,
        "inputs": {"sha256": _digest(args.input), "seed": args.seed, "rho": args.rho, "tol": args.tol,
                   **(_series_inputs(data) if kind == "csv" else {})},
        "results": results,
        "warnings": warnings,
    }
    if args.timing:
        report["timing"] = {"seconds": time.perf_counter() - start}
    return report


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = run(args)
    except HJError as exc:
        err = {"schema": SCHEMA, "command": args.command, "error": type(exc).__name__, "message": str(exc),
               "exit_code": exc.exit_code}
        triple = getattr(exc, "triple", None)
        if triple is not None:
            err["triple"] = list(triple)
        line = getattr(exc, "line", None)
        if line is not None:
            err["line"] = line
        print(f"hjident: error: {exc}", file=sys.stderr)
        if args.out:
            atomic_write(args.out, to_json(err) + "\n")
        return exc.exit_code
    text = to_json(report) + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
