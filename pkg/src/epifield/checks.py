"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

import numpy as np

from .posterior import ModelContext
from .vi import VariationalState, elbo_estimate, elbo_grad_reparam, sample_epsilon

FD_STEP = 1e-5


def relative_errors(analytic, reference):
    """Per-coordinate |a - r| scaled by max(|r|, 1e-3 * ||r||_inf)."""
    analytic = np.asarray(analytic, dtype=float)
    reference = np.asarray(reference, dtype=float)
    floor = 1e-3 * np.max(np.abs(reference))
    return np.abs(analytic - reference) / np.maximum(np.abs(reference), max(floor, 1e-300))


def central_difference(fn, x, step=FD_STEP):
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (fn(hi) - fn(lo)) / (2.0 * step)
    return grad


def loglik_gradient_max_relerr(ctx: ModelContext, xhat, step=FD_STEP):
    """Max relative error of the analytic log-posterior gradient vs central FD.

    Exercises all gradient cases: the per-region model variables, the four
    noise parameters, the prior, and the transform chain.
    """
    _, analytic = ctx.logpost_and_grad(xhat)
    fd = central_difference(lambda x: ctx.logpost(x), xhat, step)
    return float(np.max(relative_errors(analytic, fd)))


def elbo_gradient_max_relerr(ctx: ModelContext, state: VariationalState, n_samples=8, seed=0, step=FD_STEP):
    """Max relative error of the reparametrized ELBO gradient vs FD under CRN."""
    eps = sample_epsilon(n_samples, state.dim, seed)
    _, g_mu, g_rho = elbo_grad_reparam(state, ctx, n_samples, eps=eps)
    analytic = np.concatenate([g_mu, g_rho])

    d = state.dim

    def objective(z):
        st = VariationalState(mu=z[:d], rho=z[d:])
        return elbo_estimate(st, ctx, n_samples, eps=eps)

    fd = central_difference(objective, np.concatenate([state.mu, state.rho]), step)
    return float(np.max(relative_errors(analytic, fd)))
