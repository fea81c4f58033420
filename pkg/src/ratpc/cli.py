"""Command-line front end: model sweeps, sensitivity scans, fits and simulations.

Every subcommand writes one data file (CSV) to ``--out`` and a small JSON
sidecar ``<out>.meta.json`` with the invocation.  Data files contain no
timestamps, so identical arguments give byte-identical outputs.

Examples
--------
  ratpc envelope --snr 0:40:0.1 --out envelope.csv
  ratpc efficiency-curve --device raspberrypi --out rpi.csv
  ratpc sensitivity --device raspberrypi --param gamma_xg --factor 3 --out s.csv
  ratpc simulate --alg rrpaa --runs 10 --seed 42 --out stats.csv
  ratpc ci-report --stats stats.csv --out ci.csv
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .algorithms import ALGORITHMS
from .analysis import (
    SweepGrid,
    efficiency_vs_optimal_goodput,
    efficiency_vs_txp,
    energy_vs_txp,
    envelope_sweep,
    find_transitions,
    mean_relative_drop,
    write_csv,
)
from .energy import (
    PROFILES_ENV,
    SCALABLE,
    DegenerateFitError,
    DeviceProfile,
    builtin_profiles,
    fit_profile,
    get_profile,
    load_profiles,
    scale_parameter,
)
from .phy import ChannelModel, mode_table
from .sim import ConfigError, RunStats, ScenarioConfig, load_config, run_scenario, summarize_runs, write_stats_csv, write_trace_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3
RA_TPC = tuple(n for n in ALGORITHMS if n != "fixed")


class DataError(Exception):
    """Bad input data or configuration (exit status 3)."""


def parse_range(text: str) -> tuple[float, float, float]:
    """Parse ``min:max:step``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected min:max:step, got {text!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric range {text!r}") from None
    if not step > 0 or not lo < hi:
        raise argparse.ArgumentTypeError(f"range {text!r} needs min < max and step > 0")
    return lo, hi, step


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


# --- shared helpers -----------------------------------------------------------------


def _profiles(args) -> list[DeviceProfile]:
    path = args.profiles or os.environ.get(PROFILES_ENV)
    if not path:
        return builtin_profiles()
    try:
        return load_profiles(path)
    except OSError as exc:
        raise DataError(f"cannot read profile file {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _device(args) -> DeviceProfile:
    try:
        return get_profile(args.device, _profiles(args))
    except KeyError as exc:
        raise DataError(exc.args[0]) from None


def _grid(args, axis) -> SweepGrid:
    lo, hi, step = axis
    chan = ChannelModel(distance=args.distance)
    return SweepGrid(lo, hi, step, l=args.l, n_max=args.nmax, channel=chan)


def _write_meta(out: Path, argv: Sequence[str], extra: dict | None = None) -> None:
    meta = {
        "command": list(argv),
        "version": __version__,
        "python": platform.python_version(),
    }
    if extra:
        meta.update(_json_safe(extra))
    Path(f"{out}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _mode_cols(prefix: str) -> list[str]:
    return [f"{prefix}{m.index}" for m in mode_table()]


# --- subcommands --------------------------------------------------------------------


def cmd_envelope(args) -> dict:
    rows = envelope_sweep(_grid(args, args.snr))
    write_csv(args.out, rows, ["snr_db", *_mode_cols("g_mode"), "best_mode", "g_star"])
    return {"rows": len(rows)}


def cmd_energy_txp(args) -> dict:
    rows = energy_vs_txp(_grid(args, args.txp), _device(args))
    write_csv(args.out, rows, ["txp_dbm", "snr_db", *_mode_cols("e_mode")])
    return {"rows": len(rows), "device": args.device}


CURVE_COLUMNS = ["snr_db", "txp_dbm", "mode", "g_star", "mu_bpj"]


def _curve_rows(curve) -> list[dict]:
    return [{"snr_db": p.snr, "txp_dbm": p.txp, "mode": p.mode, "g_star": p.g_star, "mu_bpj": p.mu} for p in curve]


def cmd_efficiency_curve(args) -> dict:
    curve = efficiency_vs_optimal_goodput(_grid(args, args.snr), _device(args))
    write_csv(args.out, _curve_rows(curve), CURVE_COLUMNS)
    trans = find_transitions(curve)
    return {"rows": len(curve), "device": args.device, "transitions": len(trans), "mean_drop": mean_relative_drop(trans)}


def cmd_efficiency_txp(args) -> dict:
    rows = efficiency_vs_txp(_grid(args, args.txp), _device(args))
    write_csv(args.out, rows, ["txp_dbm", "snr_db", *_mode_cols("mu_mode"), "best_mode", "mu_best"])
    return {"rows": len(rows), "device": args.device}


SENSITIVITY_COLUMNS = [
    "snr_db", "txp_dbm", "mode", "g_star",
    "mu_base", "mu_scaled", "e_base", "e_scaled", "e_diff",
]  # fmt: skip


def cmd_sensitivity(args) -> dict:
    base = _device(args)
    scaled = scale_parameter(base, args.param, args.factor)
    grid = _grid(args, args.snr)
    rows = []
    summary = {}
    curves = {}
    for tag, prof in (("base", base), ("scaled", scaled)):
        curves[tag] = efficiency_vs_optimal_goodput(grid, prof)
        summary[f"mean_drop_{tag}"] = mean_relative_drop(find_transitions(curves[tag]))
    for a, b in zip(curves["base"], curves["scaled"]):
        e_a, e_b = a.e_frame, b.e_frame
        rows.append(
            {
                "snr_db": a.snr,
                "txp_dbm": a.txp,
                "mode": a.mode,
                "g_star": a.g_star,
                "mu_base": a.mu,
                "mu_scaled": b.mu,
                "e_base": e_a,
                "e_scaled": e_b,
                "e_diff": e_b - e_a,
            }
        )
    write_csv(args.out, rows, SENSITIVITY_COLUMNS)
    for k, v in summary.items():
        print(f"{k}: {v:.6g}")
    return {"device": args.device, "param": args.param, "factor": args.factor, **summary}


def cmd_fit(args) -> dict:
    tx = _read_numeric_csv(args.tx, ("mcs", "txp_mw", "rho_tx"))
    rx = _read_numeric_csv(args.rx, ("mcs", "rho_rx"))
    try:
        fit = fit_profile(tx, rx)
    except DegenerateFitError as exc:
        raise DataError(str(exc)) from None
    names = ["alpha0", "alpha1", "alpha2", "beta0", "beta1"]
    values = [*fit.alpha, *fit.beta]
    errors = [*fit.alpha_se, *fit.beta_se]
    rows = [{"parameter": n, "value": v, "std_error": e} for n, v, e in zip(names, values, errors)]
    rows.append({"parameter": "adj_r2_tx", "value": fit.adj_r2_tx, "std_error": ""})
    rows.append({"parameter": "adj_r2_rx", "value": fit.adj_r2_rx, "std_error": ""})
    write_csv(args.out, rows, ["parameter", "value", "std_error"])
    return {"tx_samples": len(tx), "rx_samples": len(rx)}


def _read_numeric_csv(path, columns) -> list[tuple[float, ...]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(columns) - set(reader.fieldnames or ())
            if missing:
                raise DataError(f"{path}: missing columns {sorted(missing)}")
            return [tuple(float(row[c]) for c in columns) for row in reader]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_simulate(args) -> dict:
    if args.config:
        base = load_config(args.config)
    else:
        base = ScenarioConfig()
    if args.profiles or os.environ.get(PROFILES_ENV):
        base.profiles = _profiles(args)
    algs = list(RA_TPC) if args.alg == "all" else [args.alg]
    stats: list[RunStats] = []
    for alg in algs:
        for k in range(args.runs):
            cfg = ScenarioConfig(**{**vars(base), "algorithm": alg, "seed": args.seed + k})
            trace, st = run_scenario(cfg)
            stats.append(st)
            if args.trace_dir:
                d = Path(args.trace_dir)
                d.mkdir(parents=True, exist_ok=True)
                write_trace_csv(trace, d / f"{alg}_seed{cfg.seed}.csv")
    write_stats_csv(stats, args.out)
    return {"algorithms": algs, "runs": args.runs, "first_seed": args.seed}


CI_COLUMNS = ["algorithm", "device", "runs", "ci_mean", "efficiency_median", "goodput_median", "goodput_iqr"]


def read_stats_csv(path) -> list[RunStats]:
    """Rebuild per-run statistics from a stats CSV written by ``simulate``."""
    runs: dict[tuple[str, int], RunStats] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                key = (row["algorithm"], int(row["seed"]))
                st = runs.get(key)
                if st is None:
                    st = RunStats(
                        algorithm=row["algorithm"],
                        seed=int(row["seed"]),
                        goodput=float(row["goodput_mbps"]),
                        energy={},
                        efficiency={},
                        mcs_hat=float(row["mcs_hat"]),
                        txp_hat=float(row["txp_hat"]),
                        ci=float(row["ci"]),
                    )
                    runs[key] = st
                st.energy[row["device"]] = float(row["energy_j"])
                st.efficiency[row["device"]] = float(row["efficiency_bpj"])
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed stats file ({exc})") from None
    if not runs:
        raise DataError(f"{path}: no runs")
    return [runs[k] for k in sorted(runs)]


def ci_correlations(summary: dict) -> dict[str, float]:
    """Spearman correlation of mean CI against median efficiency, per device."""
    from scipy.stats import spearmanr

    algs = sorted(summary)
    devices = sorted(summary[algs[0]]["efficiency_median"])
    out = {}
    for dev in devices:
        ci = [summary[a]["ci_mean"] for a in algs]
        mu = [summary[a]["efficiency_median"][dev] for a in algs]
        rho = spearmanr(ci, mu).statistic if len(algs) > 1 else float("nan")
        out[dev] = float(rho)
    return out


def _json_safe(v):
    if isinstance(v, float) and v != v:
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    return v


def cmd_ci_report(args) -> dict:
    summary = summarize_runs(read_stats_csv(args.stats))
    rows = []
    for alg, s in summary.items():
        for dev, mu in s["efficiency_median"].items():
            rows.append(
                {
                    "algorithm": alg,
                    "device": dev,
                    "runs": s["runs"],
                    "ci_mean": s["ci_mean"],
                    "efficiency_median": mu,
                    "goodput_median": s["goodput_median"],
                    "goodput_iqr": s["goodput_iqr"],
                }
            )
    write_csv(args.out, rows, CI_COLUMNS)
    corr = ci_correlations(summary)
    for dev, rho in corr.items():
        print(f"spearman(ci, efficiency) {dev}: {rho:.3f}")
    return {"spearman": corr}


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ratpc", description="Goodput/energy model and RA-TPC simulator for 802.11a.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def link(sp):
        sp.add_argument("--l", type=_positive_int, default=1500, help="payload octets")
        sp.add_argument("--nmax", type=_positive_int, default=7, help="attempts per frame")
        sp.add_argument("--distance", type=_positive_float, default=18.0, help="link distance in m")

    def device(sp):
        sp.add_argument("--device", required=True, help="device profile name")
        sp.add_argument("--profiles", help=f"profile CSV (default: ${PROFILES_ENV} or bundled)")

    def out(sp):
        sp.add_argument("--out", required=True, type=Path, help="output CSV")

    sp = sub.add_parser("envelope", help="per-mode goodput and optimal envelope vs SNR")
    link(sp)
    sp.add_argument("--snr", type=parse_range, default=(0.0, 40.0, 0.1), help="min:max:step in dB")
    out(sp)
    sp.set_defaults(func=cmd_envelope)

    sp = sub.add_parser("energy-txp", help="expected energy per frame vs TXP")
    link(sp)
    device(sp)
    sp.add_argument("--txp", type=parse_range, default=(0.0, 40.0, 0.1), help="min:max:step in dBm")
    out(sp)
    sp.set_defaults(func=cmd_energy_txp)

    sp = sub.add_parser("efficiency-curve", help="efficiency vs optimal goodput")
    link(sp)
    device(sp)
    sp.add_argument("--snr", type=parse_range, default=(0.0, 40.0, 0.1), help="min:max:step in dB")
    out(sp)
    sp.set_defaults(func=cmd_efficiency_curve)

    sp = sub.add_parser("efficiency-txp", help="per-mode efficiency vs TXP")
    link(sp)
    device(sp)
    sp.add_argument("--txp", type=parse_range, default=(0.0, 40.0, 0.1), help="min:max:step in dBm")
    out(sp)
    sp.set_defaults(func=cmd_efficiency_txp)

    sp = sub.add_parser("sensitivity", help="efficiency curve with one energy parameter scaled")
    link(sp)
    device(sp)
    sp.add_argument("--param", required=True, choices=SCALABLE)
    sp.add_argument("--factor", required=True, type=_positive_float)
    sp.add_argument("--snr", type=parse_range, default=(0.0, 40.0, 0.1), help="min:max:step in dB")
    out(sp)
    sp.set_defaults(func=cmd_sensitivity)

    sp = sub.add_parser("fit", help="fit transmit/receive power slopes from samples")
    sp.add_argument("--tx", required=True, help="CSV with columns mcs, txp_mw, rho_tx")
    sp.add_argument("--rx", required=True, help="CSV with columns mcs, rho_rx")
    out(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("simulate", help="run the mobile-receiver scenario")
    sp.add_argument("--alg", default="rrpaa", choices=[*RA_TPC, "all"])
    sp.add_argument("--runs", type=_positive_int, default=1)
    sp.add_argument("--seed", type=int, default=1, help="seed of the first run; run k uses seed + k")
    sp.add_argument("--config", help="JSON scenario file")
    sp.add_argument("--profiles", help=f"profile CSV (default: ${PROFILES_ENV} or bundled)")
    sp.add_argument("--trace-dir", help="also write one decision trace CSV per run here")
    out(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("ci-report", help="conservativeness index vs efficiency from simulate output")
    sp.add_argument("--stats", required=True, help="stats CSV written by simulate")
    out(sp)
    sp.set_defaults(func=cmd_ci_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        extra = args.func(args)
        _write_meta(args.out, argv, extra)
    except (DataError, ConfigError) as exc:
        print(f"ratpc: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"ratpc: error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"ratpc: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
