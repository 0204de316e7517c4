"""Deterministic limits of the epidemic.

All limit quantities are functions of a single time parameter theta_t in
(theta_inf, 1], the probability that a given half-edge has not yet
transmitted infection. ``LimitFunctions`` evaluates the generating-function
expressions in theta; ``solve_theta`` and ``solve_v_paths`` integrate the
time dynamics.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .exceptions import ConfigError, NoMajorOutbreak, SolverError
from .model import EpidemicRates, LimitProfile, basic_reproductive_ratio

class LimitFunctions:
    """Limit functions of theta for a profile and rates.

    Every method accepts a scalar or an array of theta values in [0, 1].
    """

    def __init__(self, profile: LimitProfile, rates: EpidemicRates):
        self.profile = profile
        self.rates = rates
        self._ks = profile.ks.astype(float)
        self._ps = profile.ps
        self._recovery_weight = profile.mu * rates.rho / rates.beta

    def _series(self, theta, weights, shift=0):
        theta = np.asarray(theta, dtype=float)
        powers = np.power.outer(theta, np.maximum(self._ks - shift, 0.0))
        return powers @ weights

    def v_s(self, theta):
        return self.profile.alpha_s * self._series(theta, self._ps)

    def dv_s(self, theta):
        # term-wise derivative; the k=0 term has zero weight
        return self.profile.alpha_s * self._series(theta, self._ks * self._ps, shift=1)

    def h_s(self, theta):
        return self.profile.alpha_s * self._series(theta, self._ks * self._ps)

    def h_x(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.profile.mu * theta * theta

    def h_r(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.profile.mu_r * theta + self._recovery_weight * theta * (1.0 - theta)

    def h_i(self, theta):
        return self.h_x(theta) - self.h_s(theta) - self.h_r(theta)

    def p_i(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(theta <= 0):
            raise SolverError("infective pressure undefined at 0")
        return self.h_i(theta) / self.h_x(theta)

    def dtheta_dt(self, theta):
        """Right-hand side -beta * theta * p_I(theta) = -beta h_I / (mu theta)."""
        theta = np.asarray(theta, dtype=float)
        return -self.rates.beta * self.h_i(theta) / (self.profile.mu * theta)

    def infection_flux(self, theta):
        """beta h_I h_S / h_X, the rate at which susceptibles get infected."""
        return self.rates.beta * self.h_i(theta) * self.h_s(theta) / self.h_x(theta)

    def evaluate(self, theta) -> dict:
        out = {
            "v_S": self.v_s(theta), "h_S": self.h_s(theta), "h_X": self.h_x(theta),
            "h_R": self.h_r(theta), "h_I": self.h_i(theta),
        }
        if np.all(np.asarray(theta) > 0):
            out["p_I"] = out["h_I"] / out["h_X"]
        return out


def eval_limit_functions(profile: LimitProfile, rates: EpidemicRates, theta: float) -> dict:
    """v_S, h_S, h_X, h_R, h_I and (for theta > 0) p_I at one theta."""
    if not 0.0 <= theta <= 1.0:
        raise ConfigError(f"theta must lie in [0, 1], got {theta!r}")
    return {k: float(v) for k, v in LimitFunctions(profile, rates).evaluate(theta).items()}


def _check_solvable(profile: LimitProfile, rates: EpidemicRates):
    if profile.mu <= 0:
        raise SolverError("degenerate profile: mu = 0")
    if profile.p_k(1) == 0 and rates.rho == 0 and profile.mu_r == 0:
        raise SolverError("(D7) fails: need p_1 > 0 or rho > 0 or mu_R > 0")


def _bisect(f, lo, hi, sign_lo):
    """Shrink [lo, hi] around the sign change of f; sign_lo is the sign at lo."""
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if np.sign(f(mid)) == sign_lo:
            lo = mid
        else:
            hi = mid
    return lo, hi


def find_theta_infinity(profile: LimitProfile, rates: EpidemicRates) -> float:
    """Unique zero of h_I in (0, 1), by bisection.

    With mu_I = 0, theta = 1 is itself a zero, so the upper end of the
    bracket is pulled below 1 until h_I turns positive; this requires R0 > 1.
    """
    _check_solvable(profile, rates)
    fn = LimitFunctions(profile, rates)
    h_i = lambda x: float(fn.h_i(x))

    if profile.mu_i > 0:
        hi = 1.0
    else:
        if basic_reproductive_ratio(profile, rates) <= 1:
            raise NoMajorOutbreak("no interior root / no major outbreak (mu_I = 0 and R0 <= 1)")
        for eps in 10.0 ** -np.arange(2, 16):
            if h_i(1.0 - eps) > 0:
                hi = 1.0 - eps
                break
        else:
            raise NoMajorOutbreak("no interior root / no major outbreak: h_I not positive below 1")

    lo = 0.5 * hi
    while h_i(lo) >= 0:
        lo *= 0.5
        if lo < 1e-300:
            raise SolverError("h_I has no negative region near 0")
    lo, hi = _bisect(h_i, lo, hi, -1.0)
    return float(lo if abs(h_i(lo)) <= abs(h_i(hi)) else hi)


def final_size(profile: LimitProfile, rates: EpidemicRates) -> float:
    """Limiting fraction of vertices that escape infection, v_S(theta_inf)."""
    theta_inf = find_theta_infinity(profile, rates)
    return float(LimitFunctions(profile, rates).v_s(theta_inf))


def invert_v_s(profile: LimitProfile, s0: float, rates: Optional[EpidemicRates] = None) -> float:
    """theta in (theta_inf, 1) with v_S(theta) = s0.

    Without ``rates`` only the bound v_S(0) < s0 is checked.
    """
    if profile.lam <= 0:
        raise SolverError("v_S is constant when the mean susceptible degree is 0")
    fn = LimitFunctions(profile, rates or EpidemicRates(1.0, 0.0))
    lo = find_theta_infinity(profile, rates) if rates is not None else 0.0
    v_lo = float(fn.v_s(lo))
    if not v_lo < s0 < profile.alpha_s:
        raise ConfigError(f"threshold outside (v_S(theta_inf), alpha_S) = ({v_lo!r}, {profile.alpha_s!r})")
    g = lambda x: float(fn.v_s(x)) - s0
    a, b = _bisect(g, lo, 1.0, -1.0)
    return float(a if abs(g(a)) <= abs(g(b)) else b)


def monotone_hermite(t: np.ndarray, y: np.ndarray, slopes: np.ndarray) -> CubicHermiteSpline:
    """Cubic Hermite interpolant with the Fritsch-Carlson limiter applied to
    the given slopes, so monotone data stays monotone."""
    slopes = slopes.copy()
    secant = np.diff(y) / np.diff(t)
    flat = secant == 0
    a = np.where(flat, 0.0, slopes[:-1] / np.where(flat, 1.0, secant))
    b = np.where(flat, 0.0, slopes[1:] / np.where(flat, 1.0, secant))
    slopes[:-1][flat] = 0.0
    slopes[1:][flat] = 0.0
    r2 = a * a + b * b
    over = r2 > 9.0
    if np.any(over):
        tau = 3.0 / np.sqrt(r2[over])
        idx = np.flatnonzero(over)
        slopes[idx] = tau * a[over] * secant[over]
        slopes[idx + 1] = tau * b[over] * secant[over]
    return CubicHermiteSpline(t, y, slopes)


@dataclass
class ThetaPath:
    """theta_t on a time grid, with a monotone cubic interpolant.

    ``mode`` is "major" (macroscopic initial infection, t >= 0) or
    "shifted" (t = 0 where v_S(theta) = s0, path extends to negative times).
    """

    mode: str
    t: np.ndarray
    theta: np.ndarray
    theta_inf: float
    theta0: float
    functions: LimitFunctions
    s0: Optional[float] = None
    _spline: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self):
        slopes = self.functions.dtheta_dt(self.theta)
        self._spline = monotone_hermite(self.t, self.theta, slopes)

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def theta_at(self, t):
        """theta at arbitrary times; clamped to the end values outside the grid."""
        t = np.asarray(t, dtype=float)
        return self._spline(np.clip(t, self.t[0], self.t[-1]))

    def dtheta_at(self, t):
        t = np.asarray(t, dtype=float)
        return self._spline(np.clip(t, self.t[0], self.t[-1]), 1)


# local error per step is held this far below rel_tol so the accumulated
# error, and with it the ODE residual of the interpolant, stays within rel_tol
TOL_SAFETY = 0.1


def _integrate(fun, t0, y0, t_bound, event_level, rel_tol, abs_tol, terminal):
    event = lambda t, y: y[0] - event_level
    event.terminal = terminal
    event.direction = -1
    sol = solve_ivp(
        fun, (t0, t_bound), [y0], method="DOP853", rtol=TOL_SAFETY * rel_tol, atol=TOL_SAFETY * abs_tol,
        dense_output=True, events=event,
    )
    if sol.status == -1:
        raise SolverError(f"stiff/degenerate configuration: {sol.message}")
    if terminal and sol.status != 1:
        raise SolverError("theta did not approach its limit within the integration horizon")
    return sol


def _grid(t0, t1, dt):
    n_steps = max(1, int(np.ceil(abs(t1 - t0) / dt - 1e-9)))
    return np.linspace(t0, t1, n_steps + 1)


def solve_theta(
    profile: LimitProfile,
    rates: EpidemicRates,
    mode: str = "major",
    s0: Optional[float] = None,
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-12,
    stop_eps: float = 1e-8,
    t_span: Optional[tuple] = None,
    dt: float = 0.01,
) -> ThetaPath:
    """Solve d theta/dt = -beta theta p_I(theta).

    Major mode needs mu_I > 0 and starts at theta_0 = 1. Shifted mode needs
    mu_I = 0, R0 > 1 and a susceptible level ``s0`` (default 0.99 alpha_S)
    and starts at theta_0 = v_S^{-1}(s0). Integration runs forward until
    theta - theta_inf <= stop_eps and, in shifted mode, backward until
    1 - theta <= stop_eps. ``t_span = (t_min, t_max)`` replaces either
    stopping rule by a fixed horizon. The solution is reported on a grid of
    spacing ``dt``.

    The state integrated is the distance to the relevant asymptote
    (theta - theta_inf forward, 1 - theta backward), so the relative
    tolerance keeps the tail monotone.
    """
    t_min, t_max = t_span if t_span is not None else (None, None)
    fn = LimitFunctions(profile, rates)
    if mode == "major":
        if profile.mu_i <= 0:
            raise SolverError("major mode needs mu_I > 0")
        s0 = None
    elif mode == "shifted":
        if profile.mu_i != 0:
            raise SolverError("shifted mode needs mu_I = 0")
        if s0 is None:
            s0 = 0.99 * profile.alpha_s
    else:
        raise ConfigError(f"unknown mode {mode!r}")

    theta_inf = find_theta_infinity(profile, rates)
    theta0 = 1.0 if mode == "major" else invert_v_s(profile, s0, rates)
    bound = 1e6 / rates.beta

    fwd = _integrate(
        lambda t, y: fn.dtheta_dt(theta_inf + y), 0.0, theta0 - theta_inf,
        t_max if t_max is not None else bound, stop_eps, rel_tol, abs_tol,
        terminal=t_max is None,
    )
    t_end = float(fwd.t[-1])
    ts = _grid(0.0, t_end, dt)
    thetas = theta_inf + fwd.sol(ts)[0]

    if mode == "shifted":
        bwd = _integrate(
            lambda t, y: -fn.dtheta_dt(1.0 - y), 0.0, 1.0 - theta0,
            t_min if t_min is not None else -bound, stop_eps, rel_tol, abs_tol,
            terminal=t_min is None,
        )
        t_begin = float(bwd.t[-1])
        tb = _grid(t_begin, 0.0, dt)[:-1]
        ts = np.concatenate([tb, ts])
        thetas = np.concatenate([1.0 - bwd.sol(tb)[0], thetas])

    if np.any(np.diff(thetas) >= 0):
        raise SolverError("theta path is not strictly decreasing; tighten tolerances or enlarge dt")
    return ThetaPath(mode, ts, thetas, theta_inf, theta0, fn, s0)


@dataclass
class VPaths:
    """Vertex fractions along a theta path."""

    path: ThetaPath
    v_i: np.ndarray
    rho: float
    v_s: np.ndarray = field(init=False)
    v_r: np.ndarray = field(init=False)
    _spline: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self):
        fn = self.path.functions
        self.v_s = fn.v_s(self.path.theta)
        self.v_r = 1.0 - self.v_s - self.v_i
        slopes = fn.infection_flux(self.path.theta) - self.rho * self.v_i
        self._spline = CubicHermiteSpline(self.path.t, self.v_i, slopes)

    @property
    def t(self) -> np.ndarray:
        return self.path.t

    def v_i_at(self, t):
        """v_I at arbitrary times. Past the end of the path v_I decays at
        rate rho; before the start it keeps its first value."""
        t = np.asarray(t, dtype=float)
        t0, t1 = self.path.t_start, self.path.t_end
        inside = self._spline(np.clip(t, t0, t1))
        tail = self.v_i[-1] * np.exp(-self.rho * np.maximum(t - t1, 0.0))
        return np.where(t > t1, tail, inside)

    def v_r_at(self, t):
        return 1.0 - self.path.functions.v_s(self.path.theta_at(t)) - self.v_i_at(t)


def solve_v_paths(
    path: ThetaPath,
    profile: LimitProfile,
    rates: EpidemicRates,
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-12,
) -> VPaths:
    """Integrate dv_I/dt = beta h_I h_S / h_X - rho v_I along ``path``.

    Major mode starts from v_I(0) = alpha_I. In shifted mode the condition
    v_I -> 0 as t -> -inf is imposed at the first grid point through the
    quasi-stationary value flux / rho. With rho = 0 v_I is explicit.
    """
    fn = path.functions
    rho = rates.rho
    if rho == 0:
        # no recovery: every infection stays infective, v_I = alpha_I + alpha_S - v_S
        v_i = (profile.alpha_i + profile.alpha_s) - fn.v_s(path.theta)
        return VPaths(path, v_i, rho)
    flux = lambda t: float(fn.infection_flux(path.theta_at(t)))
    if path.mode == "major":
        v0 = profile.alpha_i
    else:
        v0 = flux(path.t_start) / rho if rho > 0 else 0.0
    sol = solve_ivp(
        lambda t, y: [flux(t) - rho * y[0]], (path.t_start, path.t_end), [v0],
        method="DOP853", rtol=rel_tol, atol=abs_tol, t_eval=path.t,
    )
    if sol.status != 0:
        raise SolverError(f"v_I integration failed: {sol.message}")
    return VPaths(path, sol.y[0], rho)


class LimitCurves:
    """The seven limit curves (S, I, R, X_S, X_I, X_R, X over n) as functions
    of time, keyed like the simulator's count columns."""

    def __init__(self, path: ThetaPath, vpaths: VPaths):
        self.path = path
        self.vpaths = vpaths
        self.functions = path.functions

    def evaluate(self, t) -> dict[str, np.ndarray]:
        theta = self.path.theta_at(t)
        fn = self.functions
        v_s = fn.v_s(theta)
        v_i = self.vpaths.v_i_at(t)
        return {
            "S": v_s, "I": v_i, "R": 1.0 - v_s - v_i,
            "X_S": fn.h_s(theta), "X_I": fn.h_i(theta), "X_R": fn.h_r(theta),
            "X": fn.h_x(theta),
        }


def paths_to_csv(vpaths: VPaths) -> str:
    """CSV with columns t,theta,v_S,v_I,v_R,h_S,h_I,h_R,h_X on the path grid."""
    path = vpaths.path
    fn = path.functions
    cols = [
        path.t, path.theta, vpaths.v_s, vpaths.v_i, vpaths.v_r,
        fn.h_s(path.theta), fn.h_i(path.theta), fn.h_r(path.theta), fn.h_x(path.theta),
    ]
    cols = [np.asarray(c, dtype=float).tolist() for c in cols]
    buf = io.StringIO()
    buf.write("t,theta,v_S,v_I,v_R,h_S,h_I,h_R,h_X\n")
    for row in zip(*cols):
        buf.write(",".join(repr(x) for x in row) + "\n")
    return buf.getvalue()
