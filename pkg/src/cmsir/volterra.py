"""Integral representations of the limit functions.

theta_t solves a Volterra equation whose kernel is either constant or a
decaying exponential. Every convolution

    J(t) = int_0^t g(s) exp(-rate (t - s)) ds

is advanced from grid point to grid point with the exact propagator of
J' = g - rate J, so the cost is linear in the grid size. The integrand is
integrated over each grid interval by Gauss-Legendre quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import lfilter

from .exceptions import ConfigError, SolverError
from .limits import LimitFunctions, solve_theta, solve_v_paths
from .model import EpidemicRates, LimitProfile

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def eval_F(rates: EpidemicRates, t):
    """Probability that an initially infective half-edge has not transmitted
    by time t: rho/(beta+rho) + beta/(beta+rho) exp(-(beta+rho) t)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ConfigError("F(t) is defined for t >= 0")
    r = rates.beta + rates.rho
    return rates.rho / r + rates.beta / r * np.exp(-r * t)


@dataclass(frozen=True)
class Kernel:
    """Exponential convolution kernel exp(-rate u); rate 0 is plain integration."""

    rate: float

    def convolve(self, g: Callable, t: np.ndarray) -> np.ndarray:
        """J(t_j) = int_{t_0}^{t_j} g(s) exp(-rate (t_j - s)) ds on the grid t.

        ``g`` maps an array of times to values of shape (len(s),) or
        (len(s), K); the result has shape (len(t),) or (len(t), K).
        """
        t = np.asarray(t, dtype=float)
        if t.size < 2:
            return np.zeros_like(np.asarray(g(t), dtype=float))
        h = np.diff(t)
        nodes = t[:-1, None] + 0.5 * (_GL_NODES + 1.0) * h[:, None]
        vals = np.asarray(g(nodes.ravel()), dtype=float)
        vector = vals.ndim == 1
        vals = vals.reshape(nodes.shape + (-1,))
        w = 0.5 * h[:, None] * _GL_WEIGHTS * np.exp(-self.rate * (t[1:, None] - nodes))
        inc = np.einsum("jq,jqk->jk", w, vals)

        out = np.zeros((len(t), inc.shape[1]))
        if self.rate == 0:
            out[1:] = np.cumsum(inc, axis=0)
        elif np.allclose(h, h[0], rtol=1e-12, atol=0):
            out[1:] = lfilter([1.0], [1.0, -np.exp(-self.rate * h[0])], inc, axis=0)
        else:
            decay = np.exp(-self.rate * h)
            for j in range(len(h)):
                out[j + 1] = decay[j] * out[j] + inc[j]
        return out[:, 0] if vector else out


@dataclass
class PicardResult:
    """Fixed point of the theta integral equation on a uniform grid.

    ``residuals`` holds the sup-norm change of every iteration.
    """

    t: np.ndarray
    theta: np.ndarray
    iterations: int
    residuals: list
    _spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        self._spline = CubicSpline(self.t, self.theta)

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def theta_at(self, t):
        return self._spline(np.clip(np.asarray(t, dtype=float), self.t[0], self.t[-1]))

    def contraction_factors(self) -> np.ndarray:
        r = np.asarray(self.residuals)
        return r[1:] / np.where(r[:-1] > 0, r[:-1], np.nan)


def _degree_powers(profile: LimitProfile, theta_of: Callable, extra: Optional[Callable] = None):
    """s -> theta_s^(k-1) [* extra(theta_s)] as an (len(s), K) array."""
    km1 = np.maximum(profile.ks.astype(float) - 1.0, 0.0)

    def g(s):
        th = theta_of(s)
        out = np.power.outer(th, km1)
        if extra is not None:
            out = out * extra(th)[:, None]
        return out

    return g


def _picard_step(profile, rates, t, theta):
    curve = CubicSpline(t, theta)
    r = rates.beta + rates.rho
    mu = profile.mu
    J = Kernel(r).convolve(_degree_powers(profile, curve), t)
    weights = rates.beta * profile.alpha_s / mu * profile.ks * profile.ps
    return profile.mu_r / mu + (mu - profile.mu_r) / mu * eval_F(rates, t) + J @ weights


def picard_grid_step(rates: EpidemicRates, tol: float) -> float:
    """Grid spacing with cubic interpolation error roughly tol/10, capped at 0.01.

    Uses (beta + rho)^4 as the scale of the fourth derivative of theta.
    """
    scale = (rates.beta + rates.rho) ** 4
    return min(0.01, (0.1 * tol * 384.0 / (5.0 * scale)) ** 0.25)


def picard_solve_theta(
    profile: LimitProfile,
    rates: EpidemicRates,
    t_max: float,
    tol: float = 1e-10,
    max_iter: int = 2000,
    h: Optional[float] = None,
) -> PicardResult:
    """Solve the theta integral equation by successive substitution from theta = 1.

    theta_t = mu_R/mu + (mu - mu_R)/mu F(t)
              + beta alpha_S/mu sum_k k p_k int_0^t theta_s^(k-1) e^{-(beta+rho)(t-s)} ds
    """
    if profile.mu <= 0:
        raise SolverError("degenerate profile: mu = 0")
    if t_max <= 0:
        raise ConfigError("t_max must be > 0")
    h = h or picard_grid_step(rates, tol if tol > 0 else 1e-10)
    n_steps = max(1, int(np.ceil(t_max / h)))
    t = np.linspace(0.0, t_max, n_steps + 1)
    theta = np.ones_like(t)
    residuals = []
    for it in range(1, max_iter + 1):
        new = _picard_step(profile, rates, t, theta)
        if np.any(new <= 0) or np.any(new > 1 + 1e-12):
            raise SolverError(f"Picard iterate left (0, 1] at iteration {it}")
        change = float(np.max(np.abs(new - theta)))
        residuals.append(change)
        theta = new
        if change <= tol:
            return PicardResult(t, theta, it, residuals)
    raise SolverError(f"Picard did not converge: last residual {residuals[-1]!r} after {max_iter} iterations")


def _uniform_grid(curve, t_max: Optional[float], dt: float) -> np.ndarray:
    t1 = curve.t_end if t_max is None else t_max
    if t1 > curve.t_end + 1e-12 or curve.t_start > 0:
        raise ConfigError("curve must cover [0, t_max] starting at 0")
    n_steps = max(1, int(np.ceil(t1 / dt - 1e-9)))
    return np.linspace(0.0, t1, n_steps + 1)


class _Convolutions:
    """Shared integrals for one theta curve on one grid.

    J   = int theta^(k-1) e^{-r(t-s)} ds
    C   = int theta^(k-1) p_I(theta) ds
    E   = int theta^(k-1) p_I(theta) e^{-r(t-s)} ds
    with r = beta + rho.
    """

    def __init__(self, curve, profile, rates, t):
        self.t = t
        self.theta = curve.theta_at(t)
        if np.any(self.theta <= 0):
            raise SolverError("theta vanishes on the grid; h_X = 0")
        self.fn = LimitFunctions(profile, rates)
        self.r = rates.beta + rates.rho
        plain = _degree_powers(profile, curve.theta_at)
        pressured = _degree_powers(profile, curve.theta_at, self.fn.p_i)
        self.J = Kernel(self.r).convolve(plain, t)
        self.C = Kernel(0.0).convolve(pressured, t)
        self.E = Kernel(self.r).convolve(pressured, t)


def _transmission_pending(conv: _Convolutions, profile, rates) -> np.ndarray:
    """beta sum_k k(k-1) p_k int theta_s^(k-1) p_I(theta_s) F(t-s) ds."""
    r = conv.r
    weights = profile.ks * (profile.ks - 1) * profile.ps
    kernel_f = rates.rho / r * conv.C + rates.beta / r * conv.E
    return rates.beta * (kernel_f @ weights)


def theta_identity_rhs(curve, profile, rates, t) -> np.ndarray:
    """Right-hand side of the theta identity written with the kernel F."""
    if profile.alpha_s <= 0:
        raise ConfigError("no susceptibles: alpha_S must be > 0")
    conv = _Convolutions(curve, profile, rates, t)
    mu = profile.mu
    own = np.power.outer(conv.theta, np.maximum(profile.ks - 1.0, 0.0)) @ (profile.ks * profile.ps)
    return (
        profile.mu_r / mu
        + profile.mu_i / mu * eval_F(rates, t)
        + profile.alpha_s / mu * own
        + profile.alpha_s / mu * _transmission_pending(conv, profile, rates)
    )


def residual_theta_identity(curve, profile, rates, t_max=None, dt: float = 0.01) -> float:
    """sup_t |theta_t - RHS(t)| for the F-kernel form of the theta equation."""
    t = _uniform_grid(curve, t_max, dt)
    return float(np.max(np.abs(curve.theta_at(t) - theta_identity_rhs(curve, profile, rates, t))))


def balance_residual(curve, profile, rates, t) -> np.ndarray:
    """Free half-edge balance mu theta^2 minus its four contributions."""
    conv = _Convolutions(curve, profile, rates, t)
    th = conv.theta
    parts = (
        profile.mu_r * th
        + profile.mu_i * th * eval_F(rates, t)
        + conv.fn.h_s(th)
        + profile.alpha_s * th * _transmission_pending(conv, profile, rates)
    )
    return profile.mu * th * th - parts


def h_tilde_R(curve, profile, rates, t, form: str = "parts") -> np.ndarray:
    """Free recovered half-edges split by the initial state of their vertex.

    ``form="parts"`` uses the integrated-by-parts convolution with
    theta^(k-1); ``form="direct"`` integrates d(theta^(k-1))/ds directly.
    """
    conv = _Convolutions(curve, profile, rates, t)
    r, rho = conv.r, rates.rho
    th = conv.theta
    recovered_by_t = rho / r * (1.0 - np.exp(-r * t))
    if form == "parts":
        inner = recovered_by_t[:, None] - rho * conv.J
    elif form == "direct":
        km1 = np.maximum(profile.ks - 1.0, 0.0)
        inner = rates.beta * km1 * rho / r * (conv.C - conv.E)
    else:
        raise ConfigError(f"unknown form {form!r}")
    return (
        profile.mu_r * th
        + profile.mu_i * th * recovered_by_t
        + profile.alpha_s * th * (inner @ (profile.ks * profile.ps))
    )


def h_tilde_I(curve, profile, rates, t) -> np.ndarray:
    """Free infective half-edges: initially infective ones whose clock and
    recovery have not fired, plus those of vertices infected later."""
    conv = _Convolutions(curve, profile, rates, t)
    th = conv.theta
    km1 = np.maximum(profile.ks - 1.0, 0.0)
    later = rates.beta * km1 * conv.E
    return (
        profile.mu_i * th * np.exp(-conv.r * t)
        + profile.alpha_s * th * (later @ (profile.ks * profile.ps))
    )


def v_paths_integral(curve, profile, rates, t) -> dict[str, np.ndarray]:
    """v_I and v_R as convolutions of the infection flux beta h_I h_S / h_X."""
    fn = LimitFunctions(profile, rates)
    flux = lambda s: fn.infection_flux(curve.theta_at(s))
    rho = rates.rho
    decayed = Kernel(rho).convolve(flux, t)
    total = decayed if rho == 0 else Kernel(0.0).convolve(flux, t)
    e = np.exp(-rho * t)
    return {
        "v_I": profile.alpha_i * e + decayed,
        "v_R": profile.alpha_r + profile.alpha_i * (1.0 - e) + (total - decayed),
    }


RESIDUAL_KEYS = (
    "theta_picard_vs_ode", "theta_identity", "hR_tilde", "hI_tilde",
    "vI_integral", "vR_integral",
)


def verify_equivalences(
    profile: LimitProfile,
    rates: EpidemicRates,
    t_max: Optional[float] = None,
    tol: float = 1e-6,
    picard_tol: float = 1e-10,
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-12,
    stop_eps: float = 1e-8,
) -> dict:
    """Compare every integral representation with the ODE solution.

    Without ``t_max`` the horizon is where the ODE path reaches
    theta_inf + stop_eps. Returns sup-norm residuals on the Picard grid and
    pass/fail against ``tol``.
    """
    if profile.mu_i <= 0:
        raise SolverError("integral representations are evaluated in major mode only (mu_I > 0)")
    try:
        span = None if t_max is None else (None, t_max)
        path = solve_theta(profile, rates, "major", rel_tol=rel_tol, abs_tol=abs_tol,
                           stop_eps=stop_eps, t_span=span)
        t_max = path.t_end if t_max is None else t_max
        vpaths = solve_v_paths(path, profile, rates, rel_tol=rel_tol, abs_tol=abs_tol)
        picard = picard_solve_theta(profile, rates, t_max, tol=picard_tol)
    except SolverError as exc:
        raise SolverError(f"verify_equivalences: {exc}") from exc

    t = picard.t
    theta = path.theta_at(t)
    fn = path.functions
    v_int = v_paths_integral(path, profile, rates, t)
    v_s = fn.v_s(theta)
    sup = lambda x: float(np.max(np.abs(x)))
    report = {
        "theta_picard_vs_ode": sup(picard.theta - theta),
        "theta_identity": sup(theta - theta_identity_rhs(path, profile, rates, t)),
        "hR_tilde": sup(h_tilde_R(path, profile, rates, t) - fn.h_r(theta)),
        "hI_tilde": sup(h_tilde_I(path, profile, rates, t) - fn.h_i(theta)),
        "vI_integral": sup(v_int["v_I"] - vpaths.v_i_at(t)),
        "vR_integral": sup(v_int["v_R"] - vpaths.v_r_at(t)),
        "balance": sup(balance_residual(path, profile, rates, t)),
        "v_sum": sup(v_s + v_int["v_I"] + v_int["v_R"] - 1.0),
        "k_max": profile.k_max,
        "truncation_bound": profile.truncation_bound,
        "t_max": float(t_max),
        "picard_iterations": picard.iterations,
        "tol": tol,
    }
    failures = [k for k in RESIDUAL_KEYS + ("balance",) if not report[k] <= tol]
    report["failures"] = failures
    report["passed"] = not failures
    return report
