"""Epidemic configurations: rates, finite populations and limit profiles.

A finite population is described by per-degree vertex counts for each
compartment. Its asymptotic counterpart, the :class:`LimitProfile`, holds the
compartment fractions, the susceptible degree law and the half-edge densities
that parameterise every deterministic limit function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy import stats

from .exceptions import ConfigError, SolverError

_TOL = 1e-12


@dataclass(frozen=True)
class EpidemicRates:
    """Infection rate per free infective half-edge and recovery rate per
    infective vertex."""

    beta: float
    rho: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and math.isfinite(self.rho)):
            raise ConfigError("rates must be finite")
        if self.beta <= 0:
            raise ConfigError("beta must be > 0", "beta")
        if self.rho < 0:
            raise ConfigError("rho must be >= 0", "rho")


def _clean_counts(counts: Optional[Mapping], label: str) -> dict[int, int]:
    out: dict[int, int] = {}
    for k, c in (counts or {}).items():
        k_int, c_int = int(k), int(c)
        if k_int != float(k) or c_int != float(c):
            raise ConfigError(f"degree and count must be integers, got {k!r}: {c!r}", label)
        if c_int:
            out[k_int] = out.get(k_int, 0) + c_int
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class PopulationSpec:
    """Per-degree vertex counts of the initially susceptible, infective and
    recovered vertices.

    Construction does not validate; use :func:`validate_population`.
    """

    counts_s: dict = field(default_factory=dict)
    counts_i: dict = field(default_factory=dict)
    counts_r: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "counts_s", _clean_counts(self.counts_s, "S"))
        object.__setattr__(self, "counts_i", _clean_counts(self.counts_i, "I"))
        object.__setattr__(self, "counts_r", _clean_counts(self.counts_r, "R"))

    @classmethod
    def from_dict(cls, d: Mapping) -> "PopulationSpec":
        return cls(d.get("S", {}), d.get("I", {}), d.get("R", {}))

    def to_dict(self) -> dict:
        return {
            label: {str(k): c for k, c in counts.items()}
            for label, counts in (("S", self.counts_s), ("I", self.counts_i), ("R", self.counts_r))
        }

    @property
    def n_s(self) -> int:
        return sum(self.counts_s.values())

    @property
    def n_i(self) -> int:
        return sum(self.counts_i.values())

    @property
    def n_r(self) -> int:
        return sum(self.counts_r.values())

    @property
    def n(self) -> int:
        return self.n_s + self.n_i + self.n_r

    def half_edges(self, which: str = "all") -> int:
        groups = {"S": [self.counts_s], "I": [self.counts_i], "R": [self.counts_r]}
        chosen = groups.get(which, [self.counts_s, self.counts_i, self.counts_r])
        return sum(k * c for counts in chosen for k, c in counts.items())

    def degree_counts(self) -> dict[int, int]:
        """n_k over all compartments."""
        out: dict[int, int] = {}
        for counts in (self.counts_s, self.counts_i, self.counts_r):
            for k, c in counts.items():
                out[k] = out.get(k, 0) + c
        return dict(sorted(out.items()))

    def vertex_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Degrees and initial states (0=S, 1=I, 2=R), vertices grouped by state."""
        degrees, states = [], []
        for state, counts in enumerate((self.counts_s, self.counts_i, self.counts_r)):
            for k, c in counts.items():
                degrees.append(np.full(c, k, dtype=np.int64))
                states.append(np.full(c, state, dtype=np.int8))
        if not degrees:
            return np.zeros(0, np.int64), np.zeros(0, np.int8)
        return np.concatenate(degrees), np.concatenate(states)


@dataclass(frozen=True)
class DegreeDistribution:
    """Finite-support degree law. ``truncation_bound`` is the discarded
    second factorial moment sum_{k > k_max} k (k-1) p_k."""

    ks: np.ndarray
    ps: np.ndarray
    truncation_bound: float = 0.0

    @classmethod
    def from_mapping(cls, probs: Mapping) -> "DegreeDistribution":
        items = sorted((int(k), float(p)) for k, p in probs.items())
        if not items:
            raise ConfigError("not a distribution: empty")
        ks = np.array([k for k, _ in items], dtype=np.int64)
        ps = np.array([p for _, p in items], dtype=float)
        if np.any(ks < 0) or np.any(ps < 0) or not np.all(np.isfinite(ps)):
            raise ConfigError("not a distribution: negative degree or probability")
        if abs(ps.sum() - 1.0) > 1e-9:
            raise ConfigError(f"not a distribution: probabilities sum to {ps.sum()!r}")
        keep = ps > 0
        ks, ps = ks[keep], ps[keep]
        return cls(ks, ps / ps.sum())

    @classmethod
    def regular(cls, d: int) -> "DegreeDistribution":
        return cls(np.array([int(d)], dtype=np.int64), np.array([1.0]))

    @classmethod
    def poisson(cls, mean: float, tail: float = 1e-10) -> "DegreeDistribution":
        """Poisson(mean) truncated at the smallest k with P(K > k) < tail."""
        if mean <= 0:
            raise ConfigError("poisson mean must be > 0")
        k_max = int(stats.poisson.ppf(1.0 - tail, mean))
        while stats.poisson.sf(k_max, mean) >= tail:
            k_max += 1
        while k_max > 0 and stats.poisson.sf(k_max - 1, mean) < tail:
            k_max -= 1
        ks = np.arange(k_max + 1, dtype=np.int64)
        ps = stats.poisson.pmf(ks, mean)
        tail_ks = np.arange(k_max + 1, k_max + 200 + int(10 * mean), dtype=float)
        bound = float(np.sum(tail_ks * (tail_ks - 1) * stats.poisson.pmf(tail_ks, mean)))
        return cls(ks, ps / ps.sum(), bound)

    @property
    def mean(self) -> float:
        return float(np.dot(self.ks, self.ps))

    @property
    def k_max(self) -> int:
        return int(self.ks.max())

    def as_dict(self) -> dict[int, float]:
        return {int(k): float(p) for k, p in zip(self.ks, self.ps)}


@dataclass(frozen=True)
class LimitProfile:
    """Asymptotic parameters of the epidemic.

    ``ks``/``ps`` hold the susceptible degree law (only degrees with
    ``p_k > 0``); ``lam`` is its mean; ``mu`` the overall mean degree and
    ``mu_s``, ``mu_i``, ``mu_r`` the per-compartment half-edge densities.
    A zero ``lam`` is representable; solvers that need it reject it.
    """

    alpha_s: float
    alpha_i: float
    alpha_r: float
    ks: np.ndarray
    ps: np.ndarray
    mu: float
    mu_i: float
    mu_r: float
    truncation_bound: float = 0.0

    def __post_init__(self):
        ks = np.asarray(self.ks, dtype=np.int64)
        ps = np.asarray(self.ps, dtype=float)
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "ps", ps)
        if self.alpha_s <= 0:
            raise ConfigError("no susceptibles: alpha_s must be > 0")
        if min(self.alpha_i, self.alpha_r, self.mu_i, self.mu_r) < 0:
            raise ConfigError("fractions and half-edge densities must be >= 0")
        if abs(self.alpha_s + self.alpha_i + self.alpha_r - 1.0) > _TOL:
            raise ConfigError("alpha_s + alpha_i + alpha_r must equal 1")
        if abs(ps.sum() - 1.0) > _TOL:
            raise ConfigError("susceptible degree law must sum to 1")
        if abs(self.mu_s + self.mu_i + self.mu_r - self.mu) > _TOL * max(1.0, self.mu):
            raise ConfigError("mu_s + mu_i + mu_r must equal mu")

    @property
    def lam(self) -> float:
        return float(np.dot(self.ks, self.ps))

    @property
    def mu_s(self) -> float:
        return self.alpha_s * self.lam

    @property
    def k_max(self) -> int:
        return int(self.ks.max())

    @property
    def p(self) -> dict[int, float]:
        return {int(k): float(q) for k, q in zip(self.ks, self.ps)}

    def p_k(self, k: int) -> float:
        return self.p.get(k, 0.0)

    def second_factorial_moment(self) -> float:
        """sum_k k (k-1) p_k"""
        return float(np.dot(self.ks * (self.ks - 1), self.ps))

    def summary(self) -> dict:
        return {
            "alpha_s": self.alpha_s, "alpha_i": self.alpha_i, "alpha_r": self.alpha_r,
            "lambda": self.lam, "mu": self.mu, "mu_s": self.mu_s,
            "mu_i": self.mu_i, "mu_r": self.mu_r, "k_max": self.k_max,
        }


def limit_profile_from_distribution(
    dist: DegreeDistribution,
    frac_i: float = 0.0,
    frac_r: float = 0.0,
) -> LimitProfile:
    """Limit profile when every compartment draws degrees from ``dist``.

    This is the profile of :func:`sample_population` as n grows; any finite
    set of extra infectives (``infectives=`` there) contributes nothing.
    """
    if frac_i < 0 or frac_r < 0 or frac_i + frac_r >= 1:
        raise ConfigError("need frac_i, frac_r >= 0 and frac_i + frac_r < 1")
    lam = dist.mean
    alpha_s = 1.0 - frac_i - frac_r
    return LimitProfile(
        alpha_s=alpha_s, alpha_i=frac_i, alpha_r=frac_r, ks=dist.ks, ps=dist.ps,
        mu=lam, mu_i=frac_i * lam, mu_r=frac_r * lam,
        truncation_bound=dist.truncation_bound,
    )


def limit_profile_from_population(spec: PopulationSpec) -> LimitProfile:
    """Empirical limit profile of a finite population."""
    n, n_s = spec.n, spec.n_s
    if n == 0 or n_s == 0:
        raise ConfigError("no susceptibles")
    ks = np.array(list(spec.counts_s), dtype=np.int64)
    ps = np.array(list(spec.counts_s.values()), dtype=float) / n_s
    # build alpha_s as the remainder so the fractions sum to 1 in floating point
    alpha_i, alpha_r = spec.n_i / n, spec.n_r / n
    mu_i, mu_r = spec.half_edges("I") / n, spec.half_edges("R") / n
    mu = mu_i + mu_r + spec.half_edges("S") / n
    return LimitProfile(
        alpha_s=1.0 - alpha_i - alpha_r, alpha_i=alpha_i, alpha_r=alpha_r,
        ks=ks, ps=ps, mu=mu, mu_i=mu_i, mu_r=mu_r,
    )


@dataclass
class ValidationReport:
    ok: bool = True
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def add_violation(self, condition: str, message: str):
        self.violations.append((condition, message))
        self.ok = False

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [{"condition": c, "message": m} for c, m in self.violations],
            "warnings": list(self.warnings),
        }


def validate_population(
    spec: PopulationSpec,
    rates: EpidemicRates,
    second_moment_threshold: float = 100.0,
) -> ValidationReport:
    """Check a finite population against the model's standing assumptions.

    Hard violations: negative counts, empty population, odd half-edge total
    and the (D7) analogue. The second-moment (G1) and infective max-degree
    (D5) conditions are asymptotic and only produce warnings, as do missing
    susceptibles (D1) and a zero mean susceptible degree (D2).
    """
    report = ValidationReport()
    for label, counts in (("S", spec.counts_s), ("I", spec.counts_i), ("R", spec.counts_r)):
        for k, c in counts.items():
            if k < 0 or c < 0:
                report.add_violation("counts", f"negative degree or count in {label}: {k}: {c}")
    n = spec.n
    if n <= 0:
        report.add_violation("empty", "population has no vertices")
        return report
    if spec.half_edges() % 2:
        report.add_violation("half-edge parity", f"total degree {spec.half_edges()} is odd")

    n_s = spec.n_s
    if n_s == 0:
        report.warnings.append("(D1): no initially susceptible vertices")
    elif spec.half_edges("S") == 0:
        report.warnings.append("(D2): mean susceptible degree is 0")

    p1 = spec.counts_s.get(1, 0) / n_s if n_s else 0.0
    if p1 == 0 and rates.rho == 0 and spec.half_edges("R") == 0:
        report.add_violation("(D7)", "need p_1 > 0 or rho > 0 or recovered half-edges")

    second = sum(k * k * c for k, c in spec.degree_counts().items()) / n
    if second > second_moment_threshold:
        report.warnings.append(
            f"(G1): sum k^2 n_k / n = {second:.6g} exceeds {second_moment_threshold:.6g}"
        )
    if spec.counts_i:
        k_i = max(spec.counts_i)
        if k_i > n ** (2.0 / 3.0):
            report.warnings.append(f"(D5): max infective degree {k_i} exceeds n^(2/3)")
    return report


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_population(
    dist: DegreeDistribution | Mapping,
    n: int,
    frac_i: float = 0.0,
    frac_r: float = 0.0,
    seed=None,
    infectives: Optional[Mapping[int, int]] = None,
) -> PopulationSpec:
    """Draw a finite population with i.i.d. degrees from ``dist``.

    round(n * frac_i) uniformly chosen vertices start infective and
    round(n * frac_r) recovered. If ``infectives`` (degree -> count) is given
    those vertices are the infectives instead of the ``frac_i`` draw, and the
    remaining ``n - sum(infectives)`` vertices are sampled from ``dist``.
    An odd degree total is repaired by giving one uniform vertex an extra
    half-edge. ``seed`` is anything accepted by ``numpy.random.default_rng``.
    """
    if not isinstance(dist, DegreeDistribution):
        dist = DegreeDistribution.from_mapping(dist)
    if n < 1:
        raise ConfigError("n must be >= 1")
    if frac_i < 0 or frac_r < 0 or frac_i + frac_r > 1:
        raise ConfigError("need frac_i, frac_r >= 0 and frac_i + frac_r <= 1")
    rng = np.random.default_rng(seed)

    fixed = _clean_counts(infectives, "infectives") if infectives is not None else {}
    fixed_deg = np.array([k for k, c in fixed.items() for _ in range(c)], dtype=np.int64)
    n_rand = n - fixed_deg.size
    if n_rand < 0:
        raise ConfigError("more fixed infectives than vertices")

    degrees = rng.choice(dist.ks, size=n_rand, p=dist.ps)
    states = np.zeros(n_rand, dtype=np.int8)
    perm = rng.permutation(n_rand)
    n_i = 0 if infectives is not None else _round_half_up(n * frac_i)
    n_r = min(_round_half_up(n * frac_r), n_rand - n_i)
    states[perm[:n_i]] = 1
    states[perm[n_i:n_i + n_r]] = 2

    degrees = np.concatenate([degrees, fixed_deg])
    states = np.concatenate([states, np.ones(fixed_deg.size, dtype=np.int8)])
    if degrees.sum() % 2:
        degrees[rng.integers(degrees.size)] += 1

    counts = [{}, {}, {}]
    for state in range(3):
        ks, cs = np.unique(degrees[states == state], return_counts=True)
        counts[state] = {int(k): int(c) for k, c in zip(ks, cs)}
    return PopulationSpec(*counts)


def basic_reproductive_ratio(profile: LimitProfile, rates: EpidemicRates) -> float:
    """R0 = beta/(rho+beta) * alpha_S/mu * sum_k (k-1) k p_k."""
    if profile.mu <= 0:
        raise SolverError("degenerate profile: mu = 0")
    return (
        rates.beta / (rates.rho + rates.beta)
        * profile.alpha_s / profile.mu
        * profile.second_factorial_moment()
    )
