"""Exact simulation of the SIR epidemic on a configuration-model multigraph.

Edges are revealed while the epidemic runs: every free infective half-edge
pairs at rate ``beta`` with a uniformly chosen other free half-edge, and
infective vertices recover at rate ``rho``. The run stops when no free
infective half-edge is left; the leftover half-edges can then be matched
uniformly to complete the multigraph.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernel
from .exceptions import ConfigError, SimulationInvariantError
from .model import EpidemicRates, PopulationSpec, validate_population

INIT, PAIR, RECOVER = 0, _kernel.PAIR, _kernel.RECOVER
SAMPLE = 3
EVENT_NAMES = {INIT: "init", PAIR: "pair", RECOVER: "recover", SAMPLE: "sample"}
QUANTITIES = ("S", "I", "R", "X_S", "X_I", "X_R", "X")


@dataclass
class Trajectory:
    """Counts after each event; row 0 is the initial state at t = 0.

    ``stop_index`` is the row at which the last free infective half-edge
    disappeared. Rows after it are recoveries of the leftover infectives
    (only present when decay was simulated). With ``sampled`` set the rows
    are counts on a fixed time grid instead of events.
    """

    t: np.ndarray
    kind: np.ndarray
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray
    X_S: np.ndarray
    X_I: np.ndarray
    X_R: np.ndarray
    stop_index: int
    t_stop: float
    n: int
    s_infinity: int
    sampled: bool = False

    @property
    def X(self) -> np.ndarray:
        return self.X_S + self.X_I + self.X_R

    @property
    def n_events(self) -> int:
        return 0 if self.sampled else len(self.t) - 1

    def column(self, name: str) -> np.ndarray:
        return self.X if name == "X" else getattr(self, name)

    def at(self, times) -> dict[str, np.ndarray]:
        """Right-continuous piecewise-constant counts at ``times``.

        Times before 0 get the initial counts.
        """
        idx = np.searchsorted(self.t, np.asarray(times, dtype=float), side="right") - 1
        idx = np.clip(idx, 0, len(self.t) - 1)
        return {q: self.column(q)[idx] for q in QUANTITIES}

    def to_csv(self) -> str:
        """CSV text with columns t,event,S,I,R,X_S,X_I,X_R,X.

        A ``stop`` row is written right after the stopping event.
        """
        buf = io.StringIO()
        buf.write("t,event,S,I,R,X_S,X_I,X_R,X\n")
        X = self.X
        cols = [self.S, self.I, self.R, self.X_S, self.X_I, self.X_R, X]
        cols = [c.tolist() for c in cols]
        times = self.t.tolist()
        kinds = self.kind.tolist()

        def line(j, name):
            vals = ",".join(str(c[j]) for c in cols)
            return f"{times[j]!r},{name},{vals}\n"

        for j in range(len(times)):
            buf.write(line(j, EVENT_NAMES[kinds[j]]))
            if j == self.stop_index and not self.sampled:
                buf.write(line(j, "stop"))
        return buf.getvalue()


@dataclass
class HalfEdgePool:
    """Free half-edges left after a run, with their owners and the edges
    (as vertex pairs) revealed so far."""

    free: np.ndarray
    htype: np.ndarray
    owner: np.ndarray
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))

    @property
    def counts(self) -> tuple[int, int, int]:
        t = self.htype[self.free]
        return int(np.sum(t == 0)), int(np.sum(t == 1)), int(np.sum(t == 2))


@dataclass
class SimOutcome:
    trajectory: Trajectory
    rng_seed: object
    residual_edges: Optional[np.ndarray] = None
    is_simple: Optional[bool] = None
    edges: Optional[np.ndarray] = None
    pool: Optional[HalfEdgePool] = None

    def summary(self, t_star: Optional[float] = None) -> dict:
        traj = self.trajectory
        out = {
            "seed": self.rng_seed if isinstance(self.rng_seed, int) else repr(self.rng_seed),
            "n": traj.n,
            "s_inf": traj.s_infinity,
            "t_stop": traj.t_stop,
        }
        if t_star is not None:
            out["t_star"] = t_star
        if self.is_simple is not None:
            out["is_simple"] = self.is_simple
        return out


def _check_pool(pools, sizes, pos, htype):
    free_count = 0
    for t in range(3):
        ids = pools[t, : sizes[t]]
        if np.any(pos[ids] != np.arange(sizes[t])) or np.any(htype[ids] != t):
            raise SimulationInvariantError(f"half-edge pool {t} index is corrupt")
        free_count += sizes[t]
    if np.count_nonzero(htype >= 0) != free_count:
        raise SimulationInvariantError("free half-edge count disagrees with pool sizes")


def _is_simple(vertex_edges: np.ndarray) -> bool:
    if len(vertex_edges) == 0:
        return True
    u, v = vertex_edges[:, 0], vertex_edges[:, 1]
    if np.any(u == v):
        return False
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    keys = lo * (int(hi.max()) + 1) + hi
    return len(np.unique(keys)) == len(keys)


def complete_residual_pairing(pool: HalfEdgePool, rng) -> tuple[np.ndarray, bool]:
    """Match the remaining free half-edges uniformly at random.

    Returns the new edges as vertex pairs and whether the whole revealed
    multigraph (``pool.edges`` plus the new edges) is simple.
    """
    x_s, x_i, x_r = pool.counts
    if x_i:
        raise SimulationInvariantError("residual pairing requested with free infective half-edges")
    if len(pool.free) % 2:
        raise SimulationInvariantError("odd number of free half-edges")
    matched = rng.permutation(pool.free).reshape(-1, 2)
    new_edges = pool.owner[matched]
    all_edges = np.concatenate([pool.edges.reshape(-1, 2), new_edges])
    return new_edges, _is_simple(all_edges)


def run_epidemic(
    spec: PopulationSpec,
    rates: EpidemicRates,
    seed=0,
    record: str = "all",
    grid: Optional[np.ndarray] = None,
    residual_pairing: bool = False,
    decay: bool = True,
    validate: bool = True,
) -> SimOutcome:
    """Run one realisation of the epidemic with dynamic half-edge pairing.

    ``seed`` is anything accepted by ``numpy.random.default_rng`` (an int or a
    ``SeedSequence``). With ``record="grid"`` the counts are reported on
    ``grid`` instead of at every event. ``decay`` keeps simulating the
    recoveries of infectives left when the epidemic stops.
    """
    if validate:
        # (D7) concerns the limit system only; any finite population can be simulated
        report = validate_population(spec, rates)
        bad = [(c, m) for c, m in report.violations if c != "(D7)"]
        if bad:
            raise ConfigError("invalid population: " + "; ".join(f"{c}: {m}" for c, m in bad))
    if record not in ("all", "grid"):
        raise ConfigError(f"unknown record mode {record!r}")
    if record == "grid" and grid is None:
        raise ConfigError("record='grid' needs a time grid")

    rng = np.random.default_rng(seed)
    degrees, states = spec.vertex_arrays()
    (times, kinds, log, stop_row, he_edges, owner,
     pools, sizes, pos, htype) = _kernel.run_kernel(rng, degrees, states, rates.beta, rates.rho, decay)
    _check_pool(pools, sizes, pos, htype)

    n = spec.n
    s_col = log[:, 0]
    traj = Trajectory(
        t=times, kind=kinds, S=s_col, I=log[:, 1], R=log[:, 2],
        X_S=log[:, 3], X_I=log[:, 4], X_R=log[:, 5],
        stop_index=int(stop_row), t_stop=float(times[stop_row]), n=n,
        s_infinity=int(s_col[stop_row]),
    )
    if record == "grid":
        traj = _sample_on_grid(traj, np.asarray(grid, dtype=float))

    vertex_edges = owner[he_edges]
    outcome = SimOutcome(trajectory=traj, rng_seed=seed, edges=vertex_edges)
    pool = HalfEdgePool(
        free=np.concatenate([pools[t, : sizes[t]] for t in range(3)]),
        htype=htype, owner=owner, edges=vertex_edges,
    )
    if residual_pairing:
        outcome.residual_edges, outcome.is_simple = complete_residual_pairing(pool, rng)
    else:
        outcome.pool = pool
    return outcome


def _sample_on_grid(traj: Trajectory, grid: np.ndarray) -> Trajectory:
    vals = traj.at(grid)
    stop = int(np.searchsorted(grid, traj.t_stop, side="left"))
    return Trajectory(
        t=grid, kind=np.full(len(grid), SAMPLE, np.int8),
        S=vals["S"], I=vals["I"], R=vals["R"],
        X_S=vals["X_S"], X_I=vals["X_I"], X_R=vals["X_R"],
        stop_index=min(stop, len(grid) - 1), t_stop=traj.t_stop, n=traj.n,
        s_infinity=traj.s_infinity, sampled=True,
    )


def run_epidemic_simple(
    spec: PopulationSpec,
    rates: EpidemicRates,
    seed=0,
    max_n: int = 10_000,
    max_tries: int = 10_000,
    **kwargs,
) -> tuple[SimOutcome, int]:
    """Rejection sampler for the epidemic on the uniform simple graph.

    Re-runs on fresh substreams of ``seed`` until the revealed multigraph is
    simple. Returns the accepted outcome and the number of attempts.
    """
    if spec.n > max_n:
        raise ConfigError(f"simple-graph rejection sampling limited to n <= {max_n}")
    children = np.random.SeedSequence(seed).spawn(max_tries)
    for attempt, child in enumerate(children, start=1):
        out = run_epidemic(spec, rates, child, residual_pairing=True, **kwargs)
        if out.is_simple:
            return out, attempt
    raise ConfigError(f"no simple graph after {max_tries} attempts")


def detect_t_star(trajectory: Trajectory, s0: float) -> Optional[float]:
    """First event time with S_t / n <= s0, or None if never reached."""
    n = trajectory.n
    alpha_s = trajectory.S[0] / n
    if not 0 < s0 < alpha_s:
        raise ConfigError(f"unreachable threshold s0={s0!r}, need 0 < s0 < {alpha_s!r}")
    hit = np.flatnonzero(trajectory.S <= s0 * n)
    if hit.size == 0:
        return None
    return float(trajectory.t[hit[0]])


def check_trajectory_invariants(traj: Trajectory) -> list[str]:
    """Conservation and monotonicity violations in an event log (empty if none)."""
    problems = []
    if traj.sampled:
        return ["sampled trajectories carry no event structure"]
    if np.any(traj.S + traj.I + traj.R != traj.n):
        problems.append("S + I + R != n")
    if np.any(np.diff(traj.t) <= 0):
        problems.append("event times not strictly increasing")
    if np.any(np.diff(traj.S) > 0):
        problems.append("S increased")
    if np.any(np.diff(traj.R) < 0):
        problems.append("R decreased")
    if np.any(np.diff(traj.X_S) > 0):
        problems.append("X_S increased")
    dx = np.diff(traj.X)
    kinds = traj.kind[1:]
    if np.any(dx[kinds == PAIR] != -2):
        problems.append("pairing did not remove exactly two half-edges")
    if np.any(dx[kinds == RECOVER] != 0):
        problems.append("recovery changed the free half-edge count")
    if traj.n_events and np.any(traj.X_I[1 : traj.stop_index] == 0):
        problems.append("epidemic continued with no free infective half-edges")
    if traj.X_I[traj.stop_index] != 0 and traj.n_events:
        problems.append("stopped with free infective half-edges")
    return problems
