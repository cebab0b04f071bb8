"""Command-line front end: ``lab identities | sweep | report``.

Exit codes: 0 pass, 1 suite failure, 2 configuration or pipeline error.
JSON goes to stdout with sorted keys and a ``schema_version``; there is no
time-dependent field, so identical inputs give byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, LabError
from .geometry import GeometrySummary
from .pipeline import identity_checks, load_config, run_pipeline

SCHEMA_VERSION = "1"
SLOPE_TOL = 0.3
LINEAR_SLOPE_TOL = 0.15
RATIO_STABILITY_MAX = 0.25
# values below this are indistinguishable from roundoff and cannot be fitted
NOISE_FLOOR = 1e-13

CSV_COLUMNS = (
    "t",
    "delta",
    "u_inf",
    "cmc_defect",
    "ratio",
    "vol_balance",
    "grad_residual",
    "hbar_minus_2",
    "vec_defect",
    "nu_residual_L2",
    "willmore",
    "area",
    "conformal_iters",
    "orth_residual",
)

# (column, target slope, tolerance)
SLOPE_TARGETS = (
    ("vol_balance", 3.0, SLOPE_TOL),
    ("grad_residual", 3.0, SLOPE_TOL),
    ("orth_residual", 2.0, SLOPE_TOL),
    ("nu_residual_L2", 2.0, SLOPE_TOL),
    ("hbar_minus_2", 2.0, SLOPE_TOL),
    ("vec_defect", 2.0, SLOPE_TOL),
    ("numerator", 1.0, LINEAR_SLOPE_TOL),
    ("cmc_defect", 1.0, LINEAR_SLOPE_TOL),
)


def _threads():
    raw = os.environ.get("LAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"LAB_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigurationError(f"LAB_THREADS must be a positive integer, got {raw!r}")
    return n


def _map_amplitudes(fn, amplitudes):
    """Evaluate ``fn`` per amplitude, possibly concurrently, returning results in input order."""
    n = _threads()
    if n == 1:
        return [fn(t) for t in amplitudes]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, amplitudes))


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _clean(x):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def sweep_row(result) -> dict:
    r = result.report
    orth = r.orthogonality
    orth_max = max(max(abs(c) for c in orth[k]) for k in ("r_rot", "r_grad", "r_zx"))
    return {
        "t": result.t,
        "delta": r.delta,
        "u_inf": r.u_inf,
        "cmc_defect": r.cmc_defect,
        "ratio": r.rigidity_ratio,
        "vol_balance": r.vol_balance,
        "grad_residual": r.grad_exp_residual,
        "hbar_minus_2": r.hbar_minus_2,
        "vec_defect": r.vec_defect_sq,
        "nu_residual_L2": r.nu_residuals["L2"],
        "willmore": r.willmore,
        "area": r.area,
        "conformal_iters": result.conformal_iters,
        "orth_residual": orth_max,
    }


def fit_slope(ts, values):
    """Least-squares log-log slope of |values| against t, or (None, reason)."""
    ts = np.asarray(ts, dtype=float)
    vals = np.abs(np.asarray(values, dtype=float))
    keep = ts > 0
    ts, vals = ts[keep], vals[keep]
    if ts.size < 3:
        return None, "fewer than three positive amplitudes"
    if np.any(vals <= NOISE_FLOOR):
        return None, "values at or below the roundoff floor"
    slope = np.polyfit(np.log(ts), np.log(vals), 1)[0]
    return float(slope), None


def ratio_stability(rows):
    """Largest relative change of the rigidity ratio between successive amplitudes."""
    pairs = [(row["t"], row["ratio"]) for row in rows if row["t"] > 0 and row["ratio"] is not None]
    pairs.sort()
    if len(pairs) < 2:
        return None
    worst = 0.0
    for (_, a), (_, b) in zip(pairs, pairs[1:]):
        worst = max(worst, abs(a - b) / min(abs(a), abs(b)))
    return worst


def sweep_summary(rows) -> dict:
    ts = [row["t"] for row in rows]
    slopes = {}
    passed = True
    for name, target, tol in SLOPE_TARGETS:
        if name == "numerator":
            vals = [row["delta"] + row["u_inf"] for row in rows]
        else:
            vals = [row[name] for row in rows]
        slope, reason = fit_slope(ts, vals)
        ok = slope is not None and abs(slope - target) <= tol
        passed &= ok
        slopes[name] = {"slope": slope, "target": target, "tolerance": tol, "passed": ok, "note": reason}
    stab = ratio_stability(rows)
    stab_ok = stab is not None and stab <= RATIO_STABILITY_MAX
    return {
        "slopes": slopes,
        "ratio_stability": {"value": stab, "max": RATIO_STABILITY_MAX, "passed": stab_ok},
        "passed": bool(passed and stab_ok),
    }


def report_document(config, result) -> dict:
    s: GeometrySummary = result.summary
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "report",
        "config": config.to_dict(),
        "t": result.t,
        "report": result.report.to_dict(),
        "geometry": {
            "area": s.area,
            "volume": s.volume,
            "willmore": s.willmore,
            "H_bar": s.H_bar,
            "cmc_defect_L2": s.cmc_defect_L2,
        },
        "willmore_threshold": result.threshold,
        "conformal_iters": result.conformal_iters,
        "gauge": {
            "a": result.gauge.a.tolist(),
            "v": result.gauge.mobius.v.tolist(),
            "rotation": result.gauge.mobius.rotation.tolist(),
        },
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_identities(args, out) -> int:
    config = load_config(args.config)
    results = _map_amplitudes(
        lambda t: run_pipeline(config, t, corrupt_H=args.corrupt_H, delta_max=math.inf, defect_max=math.inf),
        config.amplitudes,
    )
    entries = []
    passed = True
    for res in results:
        checks = identity_checks(res)
        passed &= all(c["passed"] for c in checks)
        entries.append({"t": res.t, "identities": checks})
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "identities",
        "config": config.to_dict(),
        "corrupt_H": bool(args.corrupt_H),
        "results": entries,
        "passed": bool(passed),
    }
    out.write(dumps(_clean(doc)))
    return 0 if passed else 1


def cmd_sweep(args, out) -> int:
    config = load_config(args.config)
    ts = sorted(config.amplitudes)
    results = _map_amplitudes(lambda t: run_pipeline(config, t), ts)
    rows = [sweep_row(r) for r in results]
    summary = sweep_summary(rows)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_csv_value(row[c]) for c in CSV_COLUMNS])
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "sweep",
        "config": config.to_dict(),
        "columns": list(CSV_COLUMNS),
        "rows": rows,
        "summary": summary,
        "passed": summary["passed"],
    }
    text = dumps(_clean(doc))
    (outdir / "summary.json").write_text(text, encoding="utf-8")
    out.write(text)
    return 0 if summary["passed"] else 1


def _csv_value(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % x


def cmd_report(args, out) -> int:
    config = load_config(args.config)
    result = run_pipeline(config, args.t, corrupt_H=args.corrupt_H)
    out.write(dumps(_clean(report_document(config, result))))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="lab", description="Almost-CMC sphere rigidity laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("identities", help="run the exact-identity suite for every amplitude")
    p.add_argument("config")
    p.add_argument("--corrupt-H", action="store_true", help="negative control: shift H by 1e-3")
    p.set_defaults(func=cmd_identities)
    p = sub.add_parser("sweep", help="amplitude sweep with scaling-order fits")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="directory for sweep.csv and summary.json")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("report", help="full diagnostics for one amplitude")
    p.add_argument("config")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--corrupt-H", action="store_true", help="negative control: shift H by 1e-3")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return args.func(args, out)
    except LabError as exc:
        sys.stderr.write(f"lab: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
