"""Monte Carlo ensembles comparing simulations with the deterministic limits.

Each replica draws its population and its dynamics from independent
substreams of ``numpy.random.SeedSequence(seed, spawn_key=(n, replica))``,
so results do not depend on scheduling or on which other sizes are run.
"""
from __future__ import annotations

import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConfigError, SolverError
from .limits import LimitCurves, final_size, solve_theta, solve_v_paths
from .model import (
    DegreeDistribution,
    EpidemicRates,
    LimitProfile,
    limit_profile_from_distribution,
    sample_population,
)
from .simulator import QUANTITIES, SimOutcome, Trajectory, detect_t_star, run_epidemic


@dataclass
class EnsembleConfig:
    dist: DegreeDistribution
    rates: EpidemicRates
    sizes: Sequence[int]
    replicas: int
    seed: int = 0
    frac_i: float = 0.0
    frac_r: float = 0.0
    infectives: Optional[dict] = None
    s0: Optional[float] = None
    threads: int = 1
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    stop_eps: float = 1e-8
    dt: float = 0.01

    def __post_init__(self):
        self.sizes = [int(n) for n in self.sizes]
        if not self.sizes or any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ConfigError("sizes must be non-empty and strictly increasing", "sizes")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1", "replicas")

    @property
    def profile(self) -> LimitProfile:
        frac_i = 0.0 if self.infectives is not None else self.frac_i
        return limit_profile_from_distribution(self.dist, frac_i, self.frac_r)

    @property
    def mode(self) -> str:
        return "major" if self.profile.mu_i > 0 else "shifted"


def sup_deviation(
    trajectory: Trajectory,
    curves: LimitCurves,
    align: Optional[float] = None,
) -> dict[str, float]:
    """sup_t |count_t / n - limit_t| for the seven count columns.

    Counts are piecewise constant between events; the supremum is taken
    over the limit grid and both sides of every event. With ``align`` = s0
    the trajectory is shifted so that t = 0 is its first time with
    S_t/n <= s0, and before its own start it keeps its initial counts.
    """
    n = trajectory.n
    offset = 0.0
    if align is not None:
        t_star = detect_t_star(trajectory, align)
        if t_star is None:
            raise SolverError("no alignment point: S_t/n never reaches s0")
        offset = t_star

    grid = curves.path.t
    if trajectory.sampled:
        ev_t = np.zeros(0)
    else:
        ev_t = trajectory.t[1:] - offset
    grid_counts = trajectory.at(grid + offset)
    lim_grid = curves.evaluate(grid)
    lim_ev = curves.evaluate(ev_t)
    out = {}
    for q in QUANTITIES:
        col = trajectory.column(q) / n
        dev = np.max(np.abs(grid_counts[q] / n - lim_grid[q]))
        if ev_t.size:
            dev = max(dev, np.max(np.abs(col[1:] - lim_ev[q])), np.max(np.abs(col[:-1] - lim_ev[q])))
        out[q] = float(dev)
    return out


def _mean_stderr(x: np.ndarray) -> tuple[float, float]:
    if x.size == 0:
        return math.nan, math.nan
    if x.size == 1:
        return float(x[0]), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def final_size_report(outcomes: Sequence[SimOutcome], profile: LimitProfile, rates: EpidemicRates) -> dict:
    """Mean and standard error of S_inf/n against the limit v_S(theta_inf)."""
    if len(outcomes) < 2:
        raise ConfigError("final_size_report needs at least 2 outcomes")
    fracs = np.array([o.trajectory.s_infinity / o.trajectory.n for o in outcomes])
    return _final_size_stats(fracs, final_size(profile, rates))


def _final_size_stats(fracs: np.ndarray, limit: float) -> dict:
    mean, stderr = _mean_stderr(fracs)
    if stderr == 0:
        z = 0.0 if mean == limit else math.copysign(math.inf, mean - limit)
    else:
        z = (mean - limit) / stderr
    return {"mean": mean, "stderr": stderr, "limit": limit, "z": z}


@dataclass
class SizeStats:
    n: int
    replicas: int
    used: int
    deviations: dict = field(default_factory=dict)
    final_size: dict = field(default_factory=dict)
    t_star_fraction: Optional[float] = None
    conditioned: Optional[dict] = None

    def median(self, q: str) -> float:
        return self.deviations[q]["median"]


@dataclass
class EnsembleResult:
    mode: str
    s0: Optional[float]
    limit_final_size: float
    sizes: list
    replica_rows: list

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "s0": self.s0,
            "limit_final_size": self.limit_final_size,
            "sizes": [
                {
                    "n": s.n, "replicas": s.replicas, "used": s.used,
                    "t_star_fraction": s.t_star_fraction,
                    "deviations": s.deviations, "final_size": s.final_size,
                    "conditioned": s.conditioned,
                }
                for s in self.sizes
            ],
        }

    def replicas_csv(self) -> str:
        buf = io.StringIO()
        cols = ["n", "replica", "used", "t_star", "s_inf_frac"] + [f"dev_{q}" for q in QUANTITIES]
        buf.write(",".join(cols) + "\n")
        for row in self.replica_rows:
            vals = [row["n"], row["replica"], int(row["used"]), row["t_star"], row["s_inf_frac"]]
            vals += [row["dev"].get(q) if row["dev"] else None for q in QUANTITIES]
            buf.write(",".join("" if v is None else (repr(v) if isinstance(v, float) else str(v)) for v in vals) + "\n")
        return buf.getvalue()


def _simulate_replica(task):
    cfg, curves, mode, s0, n, r = task
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(n, r))
    pop_seed, sim_seed = ss.spawn(2)
    pop = sample_population(cfg.dist, n, cfg.frac_i, cfg.frac_r, pop_seed, cfg.infectives)
    out = run_epidemic(pop, cfg.rates, sim_seed, decay=True)
    traj = out.trajectory
    row = {"n": n, "replica": r, "t_star": None, "s_inf_frac": traj.s_infinity / n,
           "attack": (traj.S[0] - traj.s_infinity) / n, "dev": None, "used": True}
    if mode == "shifted":
        row["t_star"] = detect_t_star(traj, s0) if traj.S[0] / n > s0 else None
        row["used"] = row["t_star"] is not None
    if row["used"]:
        row["dev"] = sup_deviation(traj, curves, align=s0 if mode == "shifted" else None)
    return row


def _summarise(rows, q_list=QUANTITIES) -> dict:
    out = {}
    for q in q_list:
        x = np.array([r["dev"][q] for r in rows])
        out[q] = {"mean": float(x.mean()), "median": float(np.median(x)), "max": float(x.max())}
    return out


def run_ensemble(cfg: EnsembleConfig) -> EnsembleResult:
    """Simulate every (size, replica) pair and measure uniform deviations
    from the limit curves.

    Major mode compares at absolute times. Shifted mode aligns each replica
    at its own T_* and keeps only replicas that reach s0. In major mode the
    ``conditioned`` block repeats the statistics over replicas whose attack
    fraction reached at least half the limiting one.
    """
    profile = cfg.profile
    mode = cfg.mode
    s0 = None
    if mode == "shifted":
        s0 = cfg.s0 if cfg.s0 is not None else 0.99 * profile.alpha_s
    path = solve_theta(profile, cfg.rates, mode, s0=s0, rel_tol=cfg.rel_tol,
                       abs_tol=cfg.abs_tol, stop_eps=cfg.stop_eps, dt=cfg.dt)
    vpaths = solve_v_paths(path, profile, cfg.rates, cfg.rel_tol, cfg.abs_tol)
    curves = LimitCurves(path, vpaths)
    limit = final_size(profile, cfg.rates)
    limit_attack = profile.alpha_s - limit

    tasks = [(cfg, curves, mode, s0, n, r) for n in cfg.sizes for r in range(cfg.replicas)]
    threads = max(1, int(cfg.threads))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_simulate_replica, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        rows = [_simulate_replica(task) for task in tasks]

    stats = []
    for n in cfg.sizes:
        these = [r for r in rows if r["n"] == n]
        used = [r for r in these if r["used"]]
        if not used:
            raise SolverError(f"no major outbreaks observed at n={n}")
        fracs = np.array([r["s_inf_frac"] for r in used])
        s = SizeStats(n=n, replicas=len(these), used=len(used),
                      deviations=_summarise(used), final_size=_final_size_stats(fracs, limit))
        if mode == "shifted":
            s.t_star_fraction = len(used) / len(these)
        else:
            big = [r for r in used if r["attack"] >= 0.5 * limit_attack]
            if len(big) >= 1:
                s.conditioned = {
                    "used": len(big),
                    "deviations": _summarise(big),
                    "final_size": _final_size_stats(np.array([r["s_inf_frac"] for r in big]), limit),
                }
        stats.append(s)
    return EnsembleResult(mode, s0, limit, stats, rows)


DEFAULT_THRESHOLDS = {
    "trend": True,
    "max_sup_median": None,
    "max_abs_z": 4.0,
    "min_t_star_fraction": None,
    "quantities": list(QUANTITIES),
}


def check_thresholds(result: EnsembleResult, thresholds: Optional[dict] = None) -> list[str]:
    """Names and details of every failed acceptance threshold."""
    th = dict(DEFAULT_THRESHOLDS)
    th.update(thresholds or {})
    failures = []
    last = result.sizes[-1]
    for q in th["quantities"]:
        meds = [s.median(q) for s in result.sizes]
        if th["trend"] and any(b >= a for a, b in zip(meds, meds[1:])):
            failures.append(f"trend {q}: medians {meds} not strictly decreasing")
        if th["max_sup_median"] is not None and meds[-1] > th["max_sup_median"]:
            failures.append(f"max_sup_median {q}: {meds[-1]!r} > {th['max_sup_median']!r}")
    z = last.final_size["z"]
    if th["max_abs_z"] is not None and not abs(z) <= th["max_abs_z"]:
        failures.append(f"max_abs_z: |z| = {abs(z)!r} > {th['max_abs_z']!r}")
    if th["min_t_star_fraction"] is not None and result.mode == "shifted":
        for s in result.sizes:
            if s.t_star_fraction < th["min_t_star_fraction"]:
                failures.append(f"min_t_star_fraction at n={s.n}: {s.t_star_fraction!r}")
    return failures


def threads_from_env(default: int = 1) -> int:
    """Replica parallelism cap from CMSIR_THREADS."""
    raw = os.environ.get("CMSIR_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError("CMSIR_THREADS must be an integer") from None
