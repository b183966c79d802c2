"""Reference computations the approximate filter is checked against.

``dense_condition`` conditions a full joint Gaussian on all observations at
once.  ``grid_posterior_lambda`` evaluates the exact posterior of a scalar
lambda under a non-Gaussian likelihood by deterministic quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special, stats

from . import dglm
from .divergence import DEFAULT_GRID, GridSpec, NormalDensity, quadrature_hellinger
from .errors import AccuracyError, ConditioningError, DomainError


def dense_condition(mean, cov, designs, ys, noise):
    """Exact Gaussian posterior of the joint given ``y = H x + e``, ``e ~ N(0, diag(noise))``.

    ``designs`` has one row per observation.  With no rows the prior is
    returned unchanged.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.asarray(cov, dtype=float)
    H = np.asarray(designs, dtype=float).reshape(-1, len(mean))
    if H.shape[0] == 0:
        return mean.copy(), cov.copy()
    ys = np.asarray(ys, dtype=float).reshape(-1)
    R = np.diag(np.asarray(noise, dtype=float).reshape(-1))
    S = H @ cov @ H.T + R
    try:
        chol = np.linalg.cholesky(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("innovation covariance is singular") from exc
    PHt = cov @ H.T
    K = np.linalg.solve(chol.T, np.linalg.solve(chol, PHt.T)).T
    post_mean = mean + K @ (ys - H @ mean)
    post_cov = cov - K @ PHt.T
    return post_mean, 0.5 * (post_cov + post_cov.T)


def _prior_logpdf(kind, m, w2):
    if kind == "normal":
        sd = math.sqrt(w2)
        return lambda x: stats.norm.logpdf(x, m, sd)
    if kind == "gamma":
        a, b = dglm.moment_match_gamma(m, w2)
        return lambda x: stats.gamma.logpdf(x, a, scale=1 / b)
    if kind == "lognormal":
        a, b = dglm.moment_match_lognormal(m, w2)
        return lambda x: stats.lognorm.logpdf(x, math.sqrt(b), scale=math.exp(a))
    raise DomainError(f"unknown prior kind {kind!r}")


def _loglik(family, y):
    if isinstance(family, dglm.Poisson):
        if y < 0 or int(y) != y:
            raise DomainError(f"Poisson count must be a nonnegative integer, got {y}")
        return lambda lam: special.xlogy(y, lam) - lam - special.gammaln(y + 1)
    if isinstance(family, dglm.LogNormal):
        if not y > 0:
            raise DomainError("log-normal observation must be positive")
        ly, V = math.log(y), family.V
        return lambda lam: -0.5 * (ly - np.log(lam)) ** 2 / V
    raise DomainError(f"no grid oracle for family {family!r}")


def _simpson(values, x):
    return integrate.simpson(values, x=x)


@dataclass(frozen=True, eq=False)
class GridPosterior:
    grid: np.ndarray
    density: np.ndarray
    mean: float
    variance: float
    mass_covered: float
    prior_mass_discarded: float = 0.0
    _logpdf: Callable = field(default=None, repr=False)

    support = (0.0, math.inf)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.exp(self._logpdf(np.where(x >= 0, x, 1.0)))
        return np.where(x >= 0, out, 0.0)

    def window(self):
        return float(self.grid[0]), float(self.grid[-1])

    def breakpoints(self):
        return [float(self.grid[np.argmax(self.density)])]


def grid_posterior_lambda(m: float, w2: float, family, y: float,
                          grid: GridSpec = DEFAULT_GRID, prior: str = "normal") -> GridPosterior:
    """Exact posterior of lambda > 0 under prior ``N(m, w2)`` (or a moment-matched
    gamma/log-normal prior) and the likelihood of ``y``.

    The grid starts at prior mean +/- 10 sd intersected with lambda > 0, is
    trimmed to the region holding all but ~e^-60 of the mass, then doubled
    until mean and variance move by less than ``grid.tol`` (relative).
    """
    if family == "poisson":
        family = dglm.Poisson()
    if not w2 > 0:
        raise DomainError("prior variance must be positive")
    lp0 = _prior_logpdf(prior, m, w2)
    ll = _loglik(family, y)

    def logp(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = lp0(x) + ll(x)
        return np.where(np.isnan(v), -np.inf, v)

    sd = math.sqrt(w2)
    lo, hi = max(m - 10 * sd, 0.0), m + 10 * sd
    if prior != "normal":
        lo, hi = 0.0, m + 40 * sd
    if not hi > lo:
        lo = 0.0
        if isinstance(family, dglm.LogNormal):
            hi = y * math.exp(12 * math.sqrt(family.V))
        else:
            hi = float(stats.gamma.isf(1e-30, y + 1))

    # locate and trim to the bulk of the posterior
    for _ in range(8):
        x = np.linspace(lo, hi, 2 ** 14 + 1)
        lv = logp(x)
        top = lv.max()
        if not np.isfinite(top):
            raise AccuracyError("posterior has no mass on the grid")
        keep = np.nonzero(lv > top - 60)[0]
        step = x[1] - x[0]
        new_lo = max(x[keep[0]] - step, 0.0)
        new_hi = x[keep[-1]] + step
        if keep[0] == 0 and lo > 0:
            new_lo = max(lo - (hi - lo), 0.0)
        if keep[-1] == len(x) - 1:
            new_hi = hi + (hi - lo)
        if abs(new_lo - lo) + abs(new_hi - hi) < 1e-3 * (hi - lo):
            break
        lo, hi = new_lo, new_hi
    shift = top

    def moments(n):
        xs = np.linspace(lo, hi, n)
        dens = np.exp(logp(xs) - shift)
        z = _simpson(dens, xs)
        mu = _simpson(xs * dens, xs) / z
        var = _simpson((xs - mu) ** 2 * dens, xs) / z
        return xs, dens, z, mu, var

    n = max(grid.start, 16) + 1
    xs, dens, z, mu, var = moments(n)
    while True:
        n = 2 * (n - 1) + 1
        xs, dens, z2, mu2, var2 = moments(n)
        done = (abs(mu2 - mu) < grid.tol * max(abs(mu2), 1.0)
                and abs(var2 - var) < grid.tol * max(var2, 1.0))
        z, mu, var = z2, mu2, var2
        if done:
            break
        if n > grid.cap:
            raise AccuracyError(f"grid posterior did not converge within {grid.cap} points")

    def shifted(t):
        return float(np.exp(logp(np.array([t]))[0] - shift))

    tail = 0.0
    if lo > 0:
        tail += integrate.quad(shifted, 0.0, lo, limit=200)[0]
    tail += integrate.quad(shifted, hi, np.inf, limit=200)[0]
    total = z + tail
    covered = z / total
    if covered < 1 - 1e-6:
        raise AccuracyError(f"grid covers only {covered:.8f} of the posterior mass")
    discarded = float(stats.norm.cdf(0.0, m, sd)) if prior == "normal" else 0.0
    log_norm = shift + math.log(total)

    def logpdf(t):
        return logp(t) - log_norm

    return GridPosterior(xs, dens / total, float(mu), float(var), float(covered),
                         discarded, logpdf)


def hellinger_2d_quadrature(mu1, cov1, mu2, cov2, tol: float = 1e-10, cap: int = 2 ** 11) -> float:
    """Bivariate Hellinger distance by tensor Simpson quadrature of sqrt(f h)."""
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    f = stats.multivariate_normal(mu1, cov1)
    h = stats.multivariate_normal(mu2, cov2)
    sd1, sd2 = np.sqrt(np.diag(cov1)), np.sqrt(np.diag(cov2))
    lo = np.minimum(mu1 - 12 * sd1, mu2 - 12 * sd2)
    hi = np.maximum(mu1 + 12 * sd1, mu2 + 12 * sd2)

    def affinity(n):
        xs = np.linspace(lo[0], hi[0], n + 1)
        ys = np.linspace(lo[1], hi[1], n + 1)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([X, Y], axis=-1)
        g = np.exp(0.5 * (f.logpdf(pts) + h.logpdf(pts)))
        return _simpson(_simpson(g, ys), xs)

    n = 128
    prev = affinity(n)
    while True:
        n *= 2
        cur = affinity(n)
        if abs(cur - prev) < tol:
            break
        if n >= cap:
            raise AccuracyError("2-D quadrature did not converge")
        prev = cur
    return math.sqrt(max(1.0 - min(cur, 1.0), 0.0))


def hellinger_to_truth(m, w2, y, m_star, w2_star, family=None,
                       grid: GridSpec = DEFAULT_GRID) -> float:
    """Hellinger distance between the exact lambda posterior and ``N(m_star, w2_star)``."""
    family = dglm.Poisson() if family is None else family
    truth = grid_posterior_lambda(m, w2, family, y, grid)
    return quadrature_hellinger(truth, NormalDensity(m_star, w2_star), grid)
