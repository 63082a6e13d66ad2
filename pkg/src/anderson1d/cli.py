"""Command-line driver: ``anderson1d --config run.ini [--threads n] [--seed s] [--out dir]``.

Exit status: 0 on success, 2 on an invalid configuration (nothing is
written), 3 on a numerical failure (only the summary record is written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .annealed import (
    annealed_correlator,
    annealed_rate,
    decay_fit,
    generalized_rare_event_bound,
    rare_event_bound,
    separation_experiment,
)
from .cocycle import energy_grid, lyapunov_curve
from .config import ConfigError, ExperimentConfig
from .correlator import correlator_field
from .disorder import build_hamiltonian, sample_realization
from .green import resonance_trend
from .spectral_stats import ids_estimate, thouless

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
SUMMARY_FILE = "summary.jsonl"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    return v


def csv_text(meta, columns, rows):
    buf = io.StringIO()
    for key, value in meta:
        buf.write(f"# {key}: {value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_csv(path):
    """(meta dict, columns, rows as lists of strings)."""
    meta, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(":")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    if not rows:
        raise ConfigError("schema-mismatch", f"{path}: no column header")
    return meta, rows[0], rows[1:]


def _grid(cfg, energies):
    return np.asarray(energies, float) if energies else energy_grid(cfg.disorder, cfg.params["grid_step"])


# -- commands -------------------------------------------------------------------
# each returns ({file name: (columns, rows)}, results dict)


def _run_lyapunov(cfg):
    p = cfg.params
    est = lyapunov_curve(cfg.disorder, _grid(cfg, p["energies"]), p["steps"], p["replicas"],
                         cfg.threads)
    rows = [(e.energy, e.gamma_hat, e.stderr) for e in est]
    best = min(est, key=lambda e: e.gamma_hat)
    return (
        {"lyapunov.csv": (["E", "gamma", "stderr"], rows)},
        {"points": len(rows), "gamma_min": best.gamma_hat, "energy_min": best.energy},
    )


def _run_ids(cfg):
    p = cfg.params
    table = ids_estimate(cfg.disorder, _grid(cfg, p["energies"]), p["n_sites"], p["replicas"],
                         cfg.threads)
    return (
        {"ids.csv": (["E", "kappa"], table.to_csv_rows())},
        {"n_sites": table.n_sites, "replicas": table.replicas, "eigenvalues": table.total},
    )


def _run_thouless(cfg):
    p = cfg.params
    E = np.asarray(p["energies"], float)
    table = ids_estimate(cfg.disorder, E, p["n_sites"], p["replicas"], cfg.threads)
    ly = lyapunov_curve(cfg.disorder, E, p["steps"], p["lyapunov_replicas"], cfg.threads)
    rows, warnings = [], []
    for e, est in zip(E, ly):
        th = thouless(table, e)
        if th.warning:
            warnings.append(f"E={float(e)!r}: {th.warning}")
        rows.append((e, th.value, th.excluded, est.gamma_hat, est.stderr, th.value - est.gamma_hat))
    cols = ["E", "thouless", "excluded", "lyapunov", "lyapunov_stderr", "difference"]
    return (
        {"thouless.csv": (cols, rows)},
        {"max_abs_difference": max(abs(r[-1]) for r in rows), "warnings": warnings},
    )


def _run_correlator(cfg):
    p = cfg.params
    L = p["L"]
    r = sample_realization(cfg.disorder, -L, L, p["replica"])
    cf = correlator_field(build_hamiltonian(r), p["x0"])
    res = {"x0": p["x0"], "L": L, "replica": p["replica"]}
    if cf.fit is not None:
        res.update(decay_rate=cf.fit.slope, r_squared=cf.fit.r_squared,
                   fit_window=list(cf.fit.fit_window))
    return {"correlator.csv": (["y", "Q"], list(zip(cf.sites, cf.values)))}, res


def _run_annealed(cfg):
    p = cfg.params
    ac = annealed_correlator(cfg.disorder, p["x_list"], p["L"], p["replicas"], cfg.threads)
    rows = list(zip(ac.x, ac.mean, ac.stderr, ac.ci_low, ac.ci_high))
    resolved = [int(x) for x in ac.resolved()]
    res = {"resolved_x": resolved}
    sel = [i for i, x in enumerate(ac.x) if x in resolved and x > 0]
    if len(sel) >= 4:
        fit = decay_fit(ac.x[sel], ac.mean[sel], ac.stderr[sel])
        res.update(decay_rate=fit.slope, r_squared=fit.r_squared)
    return {"annealed.csv": (["x", "mean", "stderr", "ci_low", "ci_high"], rows)}, res


def _run_rare_event(cfg):
    p = cfg.params
    spec = cfg.disorder
    if p["eta"] == 0.0:
        bounds = [rare_event_bound(spec, p["K"], x, p["L"], p["replicas"], cfg.threads)
                  for x in p["x_list"]]
    else:
        bounds = [generalized_rare_event_bound(spec, p["eta"], p["K"], x, p["L"], p["replicas"],
                                               cfg.threads) for x in p["x_list"]]
    rows = [(b.x, b.window[0], b.window[1], b.event_log_prob, b.conditional_Q_mean,
             b.conditional_Q_stderr, b.annealed_rate_upper, b.green_lower, b.green_delta)
            for b in bounds]
    cols = ["x", "window_lo", "window_hi", "event_log_prob", "conditional_Q_mean",
            "conditional_Q_stderr", "annealed_rate_upper", "green_lower", "green_delta"]
    rate, se = annealed_rate(bounds)
    return {"rare_event.csv": (cols, rows)}, {"annealed_upper": rate, "annealed_upper_stderr": se}


def _run_resonance(cfg):
    p = cfg.params
    tr = resonance_trend(cfg.disorder, p["tau"], p["N_list"], _grid(cfg, p["energies"]),
                         p["replicas"], threads=cfg.threads)
    rows = [(n, f, tr.replicas, q) for n, f, q in zip(tr.N, tr.flagged, tr.probability)]
    sites = []
    for rep in tr.reports:
        if rep.flagged_replica is None:
            continue
        for E, res in sorted(rep.resonant_sites.items()):
            sites.extend((rep.N, rep.flagged_replica, E, int(s), 1) for s in res)
    return (
        {"resonance.csv": (["N", "flagged", "replicas", "probability"], rows),
         "resonant_sites.csv": (["N", "replica", "E", "site", "resonant"], sites)},
        {"tau": tr.tau, "log_slope": tr.log_slope},
    )


def _run_separation(cfg):
    p = cfg.params
    rep = separation_experiment(
        cfg.disorder, p["a_list"], p["K"], p["x_list"], p["L"], p["replicas"],
        p["gamma_steps"], p["gamma_replicas"], p["grid_step"], threads=cfg.threads,
    )
    rows = [(r.a, r.gamma_inf, r.gamma_inf_stderr, r.annealed_upper, r.annealed_upper_stderr,
             r.eta, r.separated) for r in rep.rows]
    cols = ["a", "gamma_inf", "gamma_inf_stderr", "annealed_upper", "annealed_upper_stderr",
            "eta", "separation_flag"]
    res = {"threshold": rep.threshold, "annealed_relative_spread": rep.relative_spread()
           if len(rep.rows) > 1 and min(r.annealed_upper for r in rep.rows) > 0 else None}
    return {"separation.csv": (cols, rows)}, res


# -- report: merges the primary table (first file) of each run -----------------------------------------------------------------------


def _load_run(path):
    summary = os.path.join(path, SUMMARY_FILE) if os.path.isdir(path) else path
    base = os.path.dirname(summary)
    try:
        with open(summary) as fh:
            records = [json.loads(line) for line in fh if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("schema-mismatch", f"{path}: {exc}") from None
    if len(records) != 1 or records[0].get("status") != "ok":
        raise ConfigError("schema-mismatch", f"{path}: expected one successful run record")
    rec = records[0]
    if rec.get("command") == "report" or not rec.get("files"):
        raise ConfigError("schema-mismatch", f"{path}: not a data run")
    return rec, read_csv(os.path.join(base, rec["files"][0]))


def _sort_key(row):
    key = []
    for v in row:
        try:
            key.append((0, float(v), ""))
        except ValueError:
            key.append((1, 0.0, v))
    return key


def _text_table(columns, rows):
    cells = [columns] + [[_short(v) for v in r] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(columns))]
    return "\n".join("  ".join(c[i].rjust(widths[i]) for i in range(len(columns)))
                     for c in cells) + "\n"


def _short(v):
    try:
        f = float(v)
    except ValueError:
        return v
    return v if float(int(f)) == f and "." not in v and "e" not in v else f"{f:.6g}"


def _run_report(cfg):
    runs = [_load_run(path) for path in cfg.params["inputs"]]
    commands = {rec["command"] for rec, _ in runs}
    headers = {tuple(cols) for _, (_, cols, _) in runs}
    if len(commands) != 1 or len(headers) != 1:
        raise ConfigError("schema-mismatch", "inputs mix commands or column layouts")
    command = commands.pop()
    columns = list(headers.pop())
    rows = sorted({tuple(r) for _, (_, _, rs) in runs for r in rs}, key=_sort_key)
    tables = {}
    if command == "separation":
        i_a, i_g, i_u = (columns.index(c) for c in ("a", "gamma_inf", "annealed_upper"))
        columns = columns + ["gap", "log_a"]
        rows = [r + (float(r[i_g]) - float(r[i_u]),
                     math.log(float(r[i_a])) if float(r[i_a]) > 0 else float("nan"))
                for r in rows]
        tables["plot_gamma_vs_log_a.csv"] = (
            ["log_a", "gamma_inf", "annealed_upper"],
            [(r[-1], float(r[i_g]), float(r[i_u])) for r in rows if float(r[i_a]) > 0],
        )
    tables["report.csv"] = (columns, rows)
    sources = sorted({rec["config_hash"] for rec, _ in runs})
    extra = {"report.txt": _text_table(columns, [[_fmt(v) for v in r] for r in rows])}
    return tables, {"merged_command": command, "rows": len(rows), "sources": sources}, extra


RUNNERS = {
    "lyapunov": _run_lyapunov,
    "ids": _run_ids,
    "thouless": _run_thouless,
    "correlator": _run_correlator,
    "annealed": _run_annealed,
    "rare-event": _run_rare_event,
    "resonance": _run_resonance,
    "separation": _run_separation,
    "report": _run_report,
}


def _record(cfg, status, reason=None, files=(), results=None):
    return {
        "command": cfg.command,
        "status": status,
        "reason": reason,
        "disorder": str(cfg.disorder),
        "coupling": cfg.disorder.coupling,
        "seed": cfg.disorder.seed,
        "config_hash": cfg.content_hash(),
        "config": cfg.to_ini(include_run=False),
        "files": list(files),
        "results": results or {},
    }


def _write_summary(out, record):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, SUMMARY_FILE), "w") as fh:
        fh.write(json.dumps(_jsonable(record), sort_keys=True) + "\n")


def run(cfg):
    """Execute ``cfg`` and write its artifacts under ``cfg.out``; returns the exit status."""
    try:
        out = RUNNERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"invalid configuration ({exc.reason}): {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ArithmeticError as exc:
        reason = f"numerical-failure:{type(exc).__name__}"
        _write_summary(cfg.out, _record(cfg, "error", reason, results={"message": str(exc)}))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invalid configuration (invalid-argument): {exc}", file=sys.stderr)
        return EXIT_INVALID
    tables, results = out[0], out[1]
    texts = out[2] if len(out) > 2 else {}
    meta = [
        ("command", cfg.command),
        ("disorder", str(cfg.disorder)),
        ("coupling", repr(float(cfg.disorder.coupling))),
        ("seed", cfg.disorder.seed),
        ("config_hash", cfg.content_hash()),
    ]
    os.makedirs(cfg.out, exist_ok=True)
    for name, (columns, rows) in tables.items():
        with open(os.path.join(cfg.out, name), "w") as fh:
            fh.write(csv_text(meta, columns, rows))
    for name, text in texts.items():
        with open(os.path.join(cfg.out, name), "w") as fh:
            fh.write(text)
    files = list(tables) if cfg.command != "report" else ["report.csv"]
    _write_summary(cfg.out, _record(cfg, "ok", files=files, results=results))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="anderson1d", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="INI file describing the run")
    ap.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    ap.add_argument("--seed", type=int, help="override [disorder] seed (unsigned 64-bit)")
    ap.add_argument("--out", help="output directory (overrides [run] out)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        changes = {}
        if args.threads is not None:
            changes["threads"] = args.threads
        if args.out is not None:
            changes["out"] = args.out
        if args.seed is not None:
            changes["disorder"] = cfg.disorder.with_seed(args.seed)
        if changes:
            cfg = replace(cfg, **changes)
    except ValueError as exc:
        reason = getattr(exc, "reason", "invalid-argument")
        print(f"invalid configuration ({reason}): {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
