"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from . import kernels
from .channel import CollisionMode, draw_users, dump_observation, synthesize
from .errors import ConfigError
from .montecarlo import (
    SweepSpec,
    calibrate_flm,
    default_workers,
    format_csv,
    run_sweep,
    run_trial,
    sweep_eta,
    trial_rng,
)
from .scenario import ScenarioConfig, build_codebook, config_comment, dump_config, load_config, parse_assignments

EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_SWEEP_ALIASES = {"snr": "snr_db", "snr_db": "snr_db", "eps": "eps_max", "eps_max": "eps_max", "k": "K", "K": "K", "eta": "eta"}


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--output", help="output file (default: stdout)")


def _workers(p):
    p.add_argument("--workers", type=int, default=default_workers(), help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ofdma-ranging", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-sweep", help="Monte Carlo sweep, one CSV row per value")
    _common(p)
    _workers(p)
    p.add_argument("--sweep", required=True, choices=sorted(_SWEEP_ALIASES))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--k", type=int, default=2, help="active users per subchannel")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--collision-mode", default=CollisionMode.DISTINCT.value,
                   choices=[m.value for m in CollisionMode])
    p.add_argument("--flm-alpha", type=float, help="enable the FLM baseline with this threshold factor")
    p.add_argument("--flm-table", help="CSV from calibrate-flm (snr_db, alpha)")

    p = sub.add_parser("run-trial", help="single trial with a full stage-by-stage report")
    _common(p)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--trial", type=int, default=0, help="trial index within the master seed")
    p.add_argument("--collision-mode", default=CollisionMode.DISTINCT.value,
                   choices=[m.value for m in CollisionMode])
    p.add_argument("--flm-alpha", type=float)

    p = sub.add_parser("calibrate-flm", help="FLM threshold factor per SNR for a target false-alarm rate")
    _common(p)
    _workers(p)
    p.add_argument("--values", required=True, help="comma-separated SNR values in dB")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--target-pfa", type=float, default=1e-2)

    p = sub.add_parser("sweep-eta", help="collision false-alarm / mis-detection versus threshold")
    _common(p)
    _workers(p)
    p.add_argument("--values", default="0,0.01,0.02,0.03,0.04,0.05,0.06,0.08,0.1,0.15,0.2")
    p.add_argument("--trials", type=int, default=10_000)

    p = sub.add_parser("dump-observation", help="write one trial's observations as text")
    _common(p)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--collision-mode", default=CollisionMode.DISTINCT.value,
                   choices=[m.value for m in CollisionMode])

    p = sub.add_parser("print-config", help="print the resolved configuration")
    _common(p)
    return parser


def resolve_config(args) -> ScenarioConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.config:
        return load_config(args.config, overrides)
    return ScenarioConfig(**parse_assignments(overrides))


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _read_flm_table(path) -> dict:
    table = {}
    with open(path) as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in rows:
            table[float(row["snr_db"])] = float(row["alpha"])
    return table


def _c(z) -> list:
    return [float(z.real), float(z.imag)]


def trial_report(cfg: ScenarioConfig, out) -> dict:
    rep = out.report
    doc = {
        "config": cfg.to_dict(),
        "kernel_backend": kernels.BACKEND,
        "ground_truth": [
            {"code": u.code_index, "theta": u.theta, "eps": u.eps, "L_k": u.L_k, "P": u.P,
             "taps": [_c(h) for h in u.taps]}
            for u in out.users
        ],
        "sigma2_hat": rep.sigma2_hat,
        "flags": list(rep.flags),
    }
    if rep.correlation is not None:
        doc["eigenvalues"] = [float(v) for v in rep.correlation.eigvals]
        doc["mdl_scores"] = [float(v) for v in rep.mdl_scores]
        doc["music_peaks"] = [float(v) for v in rep.detection.music_peaks]
    doc.update(
        k_hat=rep.k_hat,
        detected_codes=[int(c) for c in rep.detected_codes],
        eps_hat=[float(e) for e in rep.eps_hat],
        theta_hat_f=[int(t) for t in rep.theta_hat_f],
        p_hat=[float(p) for p in rep.p_hat],
        delta_hat=None if math.isnan(rep.delta_hat) else rep.delta_hat,
        collided=rep.collided,
    )
    if rep.amplitudes is not None:
        doc["s_hat"] = [[_c(z) for z in row] for row in rep.amplitudes.s_hat]
    if rep.flm is not None:
        doc["flm"] = {"z": [float(z) for z in rep.flm.z],
                      "detected_codes": [int(c) for c in rep.flm.detected_codes],
                      "p_hat": [float(p) for p in rep.flm.p_hat_flm]}
    return doc


def _cmd_run_sweep(args, cfg):
    variable = _SWEEP_ALIASES[args.sweep]
    values = _float_list(args.values)
    if variable == "K":
        values = [int(v) for v in values]
    table = _read_flm_table(args.flm_table) if args.flm_table else None
    spec = SweepSpec(variable, tuple(values), args.trials, cfg, args.k, args.collision_mode,
                     args.flm_alpha, table)
    for v in values:
        spec.point(v)  # validate every point before running anything
    rows = run_sweep(spec, workers=args.workers)
    extra = f"sweep={variable} K={args.k} collision_mode={args.collision_mode} trials={args.trials}"
    _emit(format_csv(rows, cfg, extra), args.output)


def _cmd_run_trial(args, cfg):
    out = run_trial(cfg, args.k, args.collision_mode, args.trial, flm_alpha=args.flm_alpha)
    _emit(json.dumps(trial_report(cfg, out), indent=2) + "\n", args.output)


def _cmd_calibrate(args, cfg):
    lines = [f"# config={config_comment(cfg)} master_seed={cfg.seed} K={args.k} "
             f"target_pfa={args.target_pfa} trials={args.trials}", "snr_db,alpha"]
    for snr in _float_list(args.values):
        alpha = calibrate_flm(cfg.replace(snr_db=snr), args.k, args.trials, args.target_pfa, args.workers)
        lines.append(f"{snr:.12g},{alpha:.12g}")
    _emit("\n".join(lines) + "\n", args.output)


def _cmd_sweep_eta(args, cfg):
    rows = sweep_eta(cfg, _float_list(args.values), args.trials, args.workers)
    lines = [f"# config={config_comment(cfg)} master_seed={cfg.seed} "
             f"p_fa: K=2 DistinctCodes, p_md: K=3 ForceSharedCode", "eta,p_fa,p_md,n_trials"]
    lines += [f"{r['eta']:.12g},{r['p_fa']:.12g},{r['p_md']:.12g},{r['n_trials']}" for r in rows]
    _emit("\n".join(lines) + "\n", args.output)


def _cmd_dump(args, cfg):
    if not args.output:
        raise ConfigError("dump-observation needs --output")
    rng = trial_rng(cfg.seed, args.trial)
    codebook = build_codebook(cfg)
    users = draw_users(cfg, args.k, rng, args.collision_mode)
    dump_observation(synthesize(cfg, users, rng, codebook), args.output)


def _cmd_print_config(args, cfg):
    _emit(dump_config(cfg), args.output)


_COMMANDS = {
    "run-sweep": _cmd_run_sweep,
    "run-trial": _cmd_run_trial,
    "calibrate-flm": _cmd_calibrate,
    "sweep-eta": _cmd_sweep_eta,
    "dump-observation": _cmd_dump,
    "print-config": _cmd_print_config,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        _COMMANDS[args.command](args, cfg)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
