"""Command-line interface: ``cmsir <command> --config <path> [--out <dir>]``.

Exit status: 0 success, 2 invalid configuration or population, 3 solver
failure (including a failed ``verify``), 4 an ensemble acceptance threshold
failed in ``converge``.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import parse_config
from .ensemble import EnsembleConfig, check_thresholds, run_ensemble, threads_from_env
from .exceptions import ConfigError, SolverError
from .limits import find_theta_infinity, final_size, paths_to_csv, solve_theta, solve_v_paths
from .model import basic_reproductive_ratio, validate_population
from .simulator import detect_t_star, run_epidemic
from .volterra import verify_equivalences

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_THRESHOLD = 0, 2, 3, 4


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip floats, no NaN."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def cmd_validate(args, cfg) -> int:
    report = validate_population(cfg.population(), cfg.rates)
    text = dumps(report.to_json())
    sys.stdout.write(text)
    if args.out:
        _write(Path(args.out), "validation.json", text)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_simulate(args, cfg) -> int:
    spec = cfg.population()
    grid = None
    if cfg.record == "grid":
        horizon = cfg.controls["t_max"] or 100.0
        grid = np.arange(0.0, horizon + cfg.grid_dt / 2, cfg.grid_dt)
    outcome = run_epidemic(spec, cfg.rates, cfg.seed, record=cfg.record, grid=grid,
                           residual_pairing=cfg.residual_pairing)
    t_star = None
    if cfg.s0 is not None and 0 < cfg.s0 < spec.n_s / spec.n:
        t_star = detect_t_star(outcome.trajectory, cfg.s0)
    out = Path(args.out)
    _write(out, "trajectory.csv", outcome.trajectory.to_csv())
    _write(out, "summary.json", dumps(outcome.summary(t_star)))
    return EXIT_OK


def cmd_limit(args, cfg) -> int:
    profile = cfg.profile()
    c = cfg.controls
    mode = "major" if profile.mu_i > 0 else "shifted"
    span = None if c["t_max"] is None or mode == "shifted" else (None, c["t_max"])
    path = solve_theta(profile, cfg.rates, mode, s0=cfg.s0, rel_tol=c["rel_tol"], abs_tol=c["abs_tol"],
                       stop_eps=c["stop_eps"], t_span=span, dt=c["dt"])
    vpaths = solve_v_paths(path, profile, cfg.rates, c["rel_tol"], c["abs_tol"])
    summary = {
        "theta_inf": path.theta_inf,
        "final_size": final_size(profile, cfg.rates),
        "R0": basic_reproductive_ratio(profile, cfg.rates),
        "mode": mode,
    }
    if mode == "shifted":
        summary["s0"] = path.s0
    out = Path(args.out)
    _write(out, "limit.csv", paths_to_csv(vpaths))
    _write(out, "limit_summary.json", dumps(summary))
    return EXIT_OK


def cmd_verify(args, cfg) -> int:
    c = cfg.controls
    report = verify_equivalences(
        cfg.profile(), cfg.rates, t_max=c["t_max"], tol=c["verify_tol"], picard_tol=c["tol"],
        rel_tol=c["rel_tol"], abs_tol=c["abs_tol"], stop_eps=c["stop_eps"],
    )
    _write(Path(args.out), "residuals.json", dumps(report))
    if not report["passed"]:
        print("verify failed: " + ", ".join(report["failures"]), file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_converge(args, cfg) -> int:
    if cfg.dist is None:
        raise ConfigError("converge needs degree_dist, not an explicit population", "degree_dist")
    ens = cfg.ensemble
    sizes = args.sizes or ens.get("sizes") or ([cfg.n] if cfg.n else None)
    if not sizes:
        raise ConfigError("no ensemble sizes given", "ensemble.sizes")
    c = cfg.controls
    ecfg = EnsembleConfig(
        dist=cfg.dist, rates=cfg.rates, sizes=sizes,
        replicas=args.replicas or ens.get("replicas", 10), seed=cfg.seed,
        frac_i=cfg.frac_i, frac_r=cfg.frac_r, infectives=cfg.infective_degrees, s0=cfg.s0,
        threads=threads_from_env(), rel_tol=c["rel_tol"], abs_tol=c["abs_tol"],
        stop_eps=c["stop_eps"], dt=c["dt"],
    )
    result = run_ensemble(ecfg)
    failures = check_thresholds(result, ens.get("thresholds"))
    report = result.to_json()
    report["threshold_failures"] = failures
    out = Path(args.out)
    _write(out, "ensemble.json", dumps(report))
    _write(out, "replicas.csv", result.replicas_csv())
    if failures:
        for f in failures:
            print("threshold failed: " + f, file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_r0(args, cfg) -> int:
    profile = cfg.profile()
    print(f"R0={basic_reproductive_ratio(profile, cfg.rates)!r}")
    try:
        print(f"theta_inf={find_theta_infinity(profile, cfg.rates)!r}")
    except SolverError as exc:
        print(f"theta_inf=undefined ({exc})")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "limit": cmd_limit,
    "verify": cmd_verify,
    "converge": cmd_converge,
    "r0": cmd_r0,
}


def _sizes(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmsir",
        description="SIR epidemics on configuration-model graphs: simulation and deterministic limits.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--out", help="output directory (default: current; validate writes only when given)")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--replicas", type=int, help="replicas per size for converge")
    parser.add_argument("--sizes", type=_sizes, help="comma-separated population sizes for converge")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, check=args.command != "validate")
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is None and args.command != "validate":
            args.out = "."
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
