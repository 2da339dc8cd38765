"""Single-region forward epidemic model.

A Gamma-shaped infection-rate pulse convolved against a lognormal
incubation CDF gives the expected number of people turning symptomatic
each day.  The convolution and its parameter derivatives are evaluated by
Gauss-Legendre quadrature mapped onto [t0, t_i] for each day.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import digamma, erfc, gammaln

from .transforms import EPS_THETA, K_MIN

DEFAULT_QUAD_NODES = 64

# Lognormal incubation fit for COVID-19 (Lauer et al. 2020), log-days.
DEFAULT_INCUBATION_MU = 1.621
DEFAULT_INCUBATION_SIGMA = 0.418


@dataclass(frozen=True)
class RegionParams:
    """Gamma infection-rate pulse parameters for one region."""

    t0: float
    N: float
    k: float
    theta: float

    def __post_init__(self):
        if not self.N > 0:
            raise ValueError(f"N must be positive, got {self.N}")
        if self.k < K_MIN:
            raise ValueError(f"k must be >= {K_MIN}, got {self.k}")
        if self.theta < EPS_THETA:
            raise ValueError(f"theta must be >= {EPS_THETA}, got {self.theta}")


@dataclass(frozen=True)
class IncubationParams:
    mu: float = DEFAULT_INCUBATION_MU
    sigma: float = DEFAULT_INCUBATION_SIGMA

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("incubation sigma must be positive")


@lru_cache(maxsize=None)
def _leggauss(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return nodes, weights


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights on an integration interval."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape:
            raise ValueError("nodes and weights must have matching shape")

    @classmethod
    def gauss_legendre(cls, n=DEFAULT_QUAD_NODES):
        """Reference rule on [-1, 1]."""
        if n < 16:
            raise ValueError("at least 16 quadrature nodes required")
        nodes, weights = _leggauss(n)
        return cls(nodes=nodes, weights=weights)

    def mapped_to(self, a, b):
        """Affine image of this rule on [a, b]; weights sum to b - a."""
        half = 0.5 * (b - a)
        return QuadratureRule(nodes=a + half * (self.nodes + 1.0), weights=half * self.weights)


def infection_rate(t, p: RegionParams):
    """Gamma infection-rate density at time t; zero for t <= t0."""
    t = np.asarray(t, dtype=float)
    u = t - p.t0
    pos = u > 0
    out = np.zeros_like(u)
    us = np.where(pos, u, 1.0)
    log_f = -p.k * np.log(p.theta) + (p.k - 1.0) * np.log(us) - us / p.theta - gammaln(p.k)
    out[pos] = np.exp(log_f[pos])
    return out if out.ndim else float(out)


def infection_rate_grad(t, p: RegionParams):
    """Partials of infection_rate w.r.t. (t0, k, theta), and the rate itself.

    Returns (f, df_dt0, df_dk, df_dtheta); with k >= 2 the t0 partial is
    finite down to t = t0 where all quantities vanish.
    """
    t = np.asarray(t, dtype=float)
    u = t - p.t0
    pos = u > 0
    us = np.where(pos, u, 1.0)
    log_f = -p.k * np.log(p.theta) + (p.k - 1.0) * np.log(us) - us / p.theta - gammaln(p.k)
    f = np.where(pos, np.exp(log_f), 0.0)
    df_dt0 = np.where(pos, f * (1.0 / p.theta - (p.k - 1.0) / us), 0.0)
    df_dk = np.where(pos, f * (np.log(us) - np.log(p.theta) - digamma(p.k)), 0.0)
    df_dtheta = np.where(pos, f * (us / p.theta**2 - p.k / p.theta), 0.0)
    return f, df_dt0, df_dk, df_dtheta


def incubation_cdf(t, inc: IncubationParams):
    """Lognormal incubation CDF; zero for t <= 0, monotone nondecreasing."""
    t = np.asarray(t, dtype=float)
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    cdf = 0.5 * erfc(-(np.log(ts) - inc.mu) / (inc.sigma * np.sqrt(2.0)))
    out = np.where(pos, cdf, 0.0)
    return out if out.ndim else float(out)


def incubation_pdf(t, inc: IncubationParams):
    t = np.asarray(t, dtype=float)
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    z = (np.log(ts) - inc.mu) / inc.sigma
    pdf = np.exp(-0.5 * z**2) / (ts * inc.sigma * np.sqrt(2.0 * np.pi))
    out = np.where(pos, pdf, 0.0)
    return out if out.ndim else float(out)


def _day_quadrature(p: RegionParams, day_grid, quad: QuadratureRule):
    """Mapped nodes/weights on [t0, t_i] for every day, plus the active-day mask."""
    day_grid = np.asarray(day_grid, dtype=float)
    if day_grid.ndim != 1 or np.any(np.diff(day_grid) <= 0):
        raise ValueError("day_grid must be a strictly increasing 1-D array")
    active = day_grid > p.t0
    b = np.where(active, day_grid, p.t0 + 1.0)
    half = 0.5 * (b - p.t0)
    tau = p.t0 + half[:, None] * (quad.nodes[None, :] + 1.0)  # (N_d, n)
    w = half[:, None] * quad.weights[None, :]
    return tau, w, active


def _incubation_window(tau, day_grid, inc: IncubationParams):
    """F_inc(t_i - tau) - F_inc(t_{i-1} - tau) with t_{i-1} = t_i - 1."""
    day = np.asarray(day_grid, dtype=float)[:, None]
    return incubation_cdf(day - tau, inc) - incubation_cdf(day - 1.0 - tau, inc)


def predict_daily(p: RegionParams, inc: IncubationParams, day_grid, quad: QuadratureRule):
    """Expected daily symptomatic counts on each day of day_grid.

    Days at or before t0 contribute zero; all outputs are nonnegative.
    """
    tau, w, active = _day_quadrature(p, day_grid, quad)
    f = infection_rate(tau, p)
    ftil = _incubation_window(tau, day_grid, inc)
    y = p.N * np.sum(w * f * ftil, axis=1)
    return np.where(active, np.maximum(y, 0.0), 0.0)


def predict_daily_grad(p: RegionParams, inc: IncubationParams, day_grid, quad: QuadratureRule):
    """Daily predictions and their partials w.r.t. (t0, N, k, theta).

    The gradient differentiates the discrete quadrature sum itself, so the
    t0 case also tracks the motion of the mapped nodes and weights with the
    lower integration limit.  The Leibniz boundary term -f_inf(t0) is
    identically zero because k >= 2.

    Returns (y, grad) with grad of shape (len(day_grid), 4) in the order
    (t0, N, k, theta).
    """
    day_grid = np.asarray(day_grid, dtype=float)
    tau, w, active = _day_quadrature(p, day_grid, quad)
    f, df_dt0, df_dk, df_dtheta = infection_rate_grad(tau, p)
    ftil = _incubation_window(tau, day_grid, inc)

    y = p.N * np.sum(w * f * ftil, axis=1)

    grad = np.empty((day_grid.size, 4))
    # Node positions tau_j = t0 + c_j (t_i - t0): dtau/dt0 = 1 - c_j and
    # dw/dt0 = -w / (t_i - t0).  d f_inf/dtau = -df_dt0.
    b = np.where(active, day_grid, p.t0 + 1.0)
    c = (tau - p.t0) / (b - p.t0)[:, None]
    dtau_dt0 = 1.0 - c
    df_dtau = -df_dt0
    day = day_grid[:, None]
    dftil_dtau = -(incubation_pdf(day - tau, inc) - incubation_pdf(day - 1.0 - tau, inc))
    d_dt0 = (
        -np.sum(w * f * ftil, axis=1) / (b - p.t0)
        + np.sum(w * (df_dtau * dtau_dt0 + df_dt0) * ftil, axis=1)
        + np.sum(w * f * dftil_dtau * dtau_dt0, axis=1)
    )
    grad[:, 0] = p.N * d_dt0
    grad[:, 1] = np.sum(w * f * ftil, axis=1)
    grad[:, 2] = p.N * np.sum(w * df_dk * ftil, axis=1)
    grad[:, 3] = p.N * np.sum(w * df_dtheta * ftil, axis=1)
    grad[~active] = 0.0
    return np.where(active, np.maximum(y, 0.0), 0.0), grad
