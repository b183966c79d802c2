"""Hellinger and variation distances, closed forms and quadrature.

Distances follow ``d_H(f, h) = sqrt(1 - int sqrt(f h))``; the integral is
called the affinity ``I`` below.  ``d_V`` is half the L1 distance.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import AccuracyWarning, DomainError
from . import dglm

SQRT2 = math.sqrt(2.0)


# -- densities ---------------------------------------------------------------

class NormalDensity:
    def __init__(self, mu: float, var: float):
        if not var > 0:
            raise DomainError(f"normal variance must be positive, got {var}")
        self.mu, self.var = float(mu), float(var)
        self.support = (-math.inf, math.inf)

    @property
    def sd(self):
        return math.sqrt(self.var)

    def pdf(self, x):
        return stats.norm.pdf(x, self.mu, self.sd)

    def window(self):
        return self.mu - 12 * self.sd, self.mu + 12 * self.sd

    def breakpoints(self):
        return [self.mu]

    def __repr__(self):
        return f"NormalDensity({self.mu!r}, {self.var!r})"


class GammaDensity:
    """Gamma with shape ``alpha`` and rate ``beta``."""

    def __init__(self, alpha: float, beta: float):
        if not (alpha > 0 and beta > 0):
            raise DomainError(f"gamma parameters must be positive, got ({alpha}, {beta})")
        self.alpha, self.beta = float(alpha), float(beta)
        self.support = (0.0, math.inf)
        self._dist = stats.gamma(self.alpha, scale=1.0 / self.beta)

    def pdf(self, x):
        return self._dist.pdf(x)

    def window(self):
        lo = 0.0 if self.alpha < 50 else float(self._dist.ppf(1e-15))
        return lo, float(self._dist.isf(1e-15))

    def breakpoints(self):
        return [max(self.alpha - 1, 0.0) / self.beta]

    def __repr__(self):
        return f"GammaDensity({self.alpha!r}, {self.beta!r})"


class LogNormalDensity:
    """Density of exp(Z), Z ~ N(a, b)."""

    def __init__(self, a: float, b: float):
        if not b > 0:
            raise DomainError(f"log-variance must be positive, got {b}")
        self.a, self.b = float(a), float(b)
        self.support = (0.0, math.inf)
        self._dist = stats.lognorm(math.sqrt(self.b), scale=math.exp(self.a))

    def pdf(self, x):
        return self._dist.pdf(x)

    def window(self):
        return float(self._dist.ppf(1e-15)), float(self._dist.isf(1e-15))

    def breakpoints(self):
        # geometric spacing: the density varies on a log scale
        sd = math.sqrt(self.b)
        return [math.exp(self.a - self.b)] + [math.exp(self.a + k * sd) for k in range(-8, 9)]

    def __repr__(self):
        return f"LogNormalDensity({self.a!r}, {self.b!r})"


class TabulatedDensity:
    """Piecewise-linear density through (grid, values), renormalized to unit mass."""

    def __init__(self, grid, values):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or len(grid) < 2:
            raise DomainError("grid and values must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be strictly increasing")
        if np.any(values < 0):
            raise DomainError("tabulated density has negative values")
        mass = integrate.trapezoid(values, grid)
        if not mass > 0:
            raise DomainError("tabulated density has zero mass")
        self.grid, self.values = grid, values / mass
        self.support = (float(grid[0]), float(grid[-1]))

    def pdf(self, x):
        return np.interp(x, self.grid, self.values, left=0.0, right=0.0)

    def window(self):
        return self.support

    def breakpoints(self):
        return list(self.grid)


@dataclass(frozen=True)
class GridSpec:
    """Quadrature controls: optional fixed range, starting resolution and cap."""

    lo: float | None = None
    hi: float | None = None
    start: int = 2 ** 10
    cap: int = 2 ** 20
    tol: float = 1e-8


DEFAULT_GRID = GridSpec()


def _cells(densities, spec: GridSpec, intersect: bool):
    lows, highs = zip(*(d.window() for d in densities))
    lo, hi = min(lows), max(highs)
    if intersect:
        lo = max([lo] + [d.support[0] for d in densities])
        hi = min([hi] + [d.support[1] for d in densities])
    if spec.lo is not None:
        lo = spec.lo
    if spec.hi is not None:
        hi = spec.hi
    if not hi > lo:
        return np.empty((0, 2))
    pts = {lo, hi}
    for d in densities:
        for p in list(d.window()) + list(d.breakpoints()) + list(d.support):
            if math.isfinite(p) and lo < p < hi:
                pts.add(float(p))
    pts = np.array(sorted(pts))
    return np.column_stack([pts[:-1], pts[1:]])


def _simpson(fn, cells: np.ndarray, m: int) -> float:
    t = np.linspace(0.0, 1.0, m + 1)
    w = np.ones(m + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    a, b = cells[:, :1], cells[:, 1:]
    x = a + (b - a) * t
    return float(((b - a) / (3 * m) * (fn(x, (a + b) / 2) * w)).sum())


def _refine(fn, cells: np.ndarray, spec: GridSpec, what: str, rtol: float = 0.0,
            edges: Sequence[float] = ()) -> float:
    """Composite Simpson over ``cells``, doubling until the change is below tolerance.

    The stopping rule is ``change <= spec.tol * (1e-6 + rtol * |value|)`` when
    ``rtol`` is given (small-valued integrands), else ``change <= spec.tol``.
    Cells touching a finite support edge in ``edges``, or whose endpoint
    values are not finite, may hold a non-smooth or singular integrand; those
    are handed to adaptive Gauss-Kronrod quadrature instead.
    """
    if len(cells) == 0:
        return 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        ends = fn(cells, cells.mean(axis=1, keepdims=True))
    bad = ~np.all(np.isfinite(ends), axis=1)
    if len(edges):
        bad |= np.isin(cells, np.asarray(edges, dtype=float)).any(axis=1)
    edge = 0.0
    for a, b in cells[bad]:
        mid = np.array([[0.5 * (a + b)]])
        edge += integrate.quad(lambda x: float(fn(np.array([[x]]), mid)[0, 0]), a, b,
                               limit=400, epsabs=1e-15, epsrel=1e-12)[0]
    cells = cells[~bad]
    if len(cells) == 0:
        return edge

    def tolerance(value):
        return spec.tol * (1e-6 + rtol * abs(value)) if rtol else spec.tol

    m = max(2, 2 * (spec.start // (2 * len(cells))))
    prev = _simpson(fn, cells, m)
    while True:
        m *= 2
        cur = _simpson(fn, cells, m)
        if abs(cur - prev) <= tolerance(cur):
            return cur + edge
        if m * len(cells) > spec.cap:
            warnings.warn(f"{what}: quadrature stopped at {m * len(cells)} points "
                          f"with change {abs(cur - prev):.2e}", AccuracyWarning, stacklevel=3)
            return cur + edge
        prev = cur


def _support_edges(densities) -> list[float]:
    return [b for d in densities for b in d.support if math.isfinite(b)]


def _masked_pdf(d, x, mid):
    lo, hi = d.support
    val = d.pdf(x)
    return np.where((mid > lo) & (mid < hi), val, 0.0)


def affinity_quadrature(f, h, grid: GridSpec = DEFAULT_GRID) -> float:
    """Numerical ``int sqrt(f h)``."""
    cells = _cells([f, h], grid, intersect=True)

    def fn(x, mid):
        return np.sqrt(np.maximum(_masked_pdf(f, x, mid) * _masked_pdf(h, x, mid), 0.0))

    return _refine(fn, cells, grid, "affinity", edges=_support_edges([f, h]))


def quadrature_hellinger(f, h, grid: GridSpec = DEFAULT_GRID) -> float:
    """Numerical d_H from ``d_H^2 = 0.5 * int (sqrt f - sqrt h)^2``.

    Integrating the squared difference avoids the cancellation in
    ``1 - affinity`` and is exactly zero for identical densities.
    """
    cells = _cells([f, h], grid, intersect=False)

    def fn(x, mid):
        return 0.5 * (np.sqrt(_masked_pdf(f, x, mid)) - np.sqrt(_masked_pdf(h, x, mid))) ** 2

    return math.sqrt(min(max(_refine(fn, cells, grid, "hellinger", rtol=1.0,
                                           edges=_support_edges([f, h])), 0.0), 1.0))


def variation_quadrature(f, h, grid: GridSpec = DEFAULT_GRID) -> float:
    """Numerical ``0.5 * int |f - h|`` with cells split at the crossings of f and h."""
    cells = _cells([f, h], grid, intersect=False)
    if len(cells) == 0:
        return 0.0

    def diff(x, mid=None):
        mid = x if mid is None else mid
        return _masked_pdf(f, x, mid) - _masked_pdf(h, x, mid)

    split = []
    for a, b in cells:
        xs = np.linspace(a, b, 513)
        ys = diff(xs, np.full_like(xs, (a + b) / 2))
        pts = [a]
        scale = np.abs(ys).max(initial=0.0)
        for i in range(len(xs) - 1):
            if ys[i] * ys[i + 1] < 0 and max(abs(ys[i]), abs(ys[i + 1])) > 1e-14 * scale:
                mid_cell = (a + b) / 2
                root = optimize.brentq(lambda z: float(diff(np.array(z), np.array(mid_cell))),
                                       xs[i], xs[i + 1], xtol=1e-14, rtol=1e-14)
                pts.append(root)
        pts.append(b)
        split.extend(zip(pts[:-1], pts[1:]))
    cells = np.array([c for c in split if c[1] > c[0]])

    def fn(x, mid):
        return 0.5 * np.abs(diff(x, mid))

    return min(max(_refine(fn, cells, grid, "variation", rtol=1.0,
                                   edges=_support_edges([f, h])), 0.0), 1.0)


# -- closed forms ------------------------------------------------------------

def hellinger_normal_normal(mu1: float, s1sq: float, mu2: float, s2sq: float) -> float:
    if not (s1sq > 0 and s2sq > 0):
        raise DomainError("variances must be positive")
    # 2 s1 s2 / (s1^2 + s2^2) = 1 / (1 + (r - 1)^2 / 2r) with r = s1 / s2; exact at r = 1
    r = math.sqrt(s1sq / s2sq)
    log_i2 = -math.log1p((r - 1.0) ** 2 / (2.0 * r)) - 0.5 * (mu1 - mu2) ** 2 / (s1sq + s2sq)
    return 0.0 + math.sqrt(max(-math.expm1(0.5 * log_i2), 0.0))


def hellinger_mvn(mu1, sigma1, mu2, sigma2) -> float:
    """Closed-form Hellinger distance between two multivariate normals."""
    mu1, mu2 = np.atleast_1d(np.asarray(mu1, float)), np.atleast_1d(np.asarray(mu2, float))
    s1 = np.atleast_2d(np.asarray(sigma1, float))
    s2 = np.atleast_2d(np.asarray(sigma2, float))
    avg = 0.5 * (s1 + s2)
    logdets = []
    for s in (s1, s2, avg):
        if not np.allclose(s, s.T, atol=1e-12 * max(np.abs(s).max(), 1.0)):
            raise DomainError("covariance is not symmetric")
        try:
            logdets.append(2 * np.log(np.diag(np.linalg.cholesky(s))).sum())
        except np.linalg.LinAlgError as exc:
            raise DomainError("covariance is not positive definite") from exc
    d = mu1 - mu2
    log_bc = 0.25 * logdets[0] + 0.25 * logdets[1] - 0.5 * logdets[2] \
        - 0.125 * d @ np.linalg.solve(avg, d)
    return math.sqrt(max(-math.expm1(log_bc), 0.0))


def normal_gamma_i2(alpha: float) -> float:
    """Squared affinity between N(mu, s2) and the Gamma sharing its mean and variance.

    Depends on ``alpha = mu**2 / s2`` only::

        I^2 = (2 pi)^(-1/2) 2^(alpha-1) alpha^(alpha/2) Gamma((alpha+1)/4)^2
              / Gamma(alpha) * exp(-alpha/2)

    The normal's mass on the negative half-line contributes nothing.
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    return math.exp(_log_i2(alpha, -1.0))


def normal_gamma_i2_literal(alpha: float) -> float:
    """Same expression with ``exp(+alpha/2)``: the commonly circulated transcription.

    It exceeds 1 for every alpha tested, so it is only reported for auditing.
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    log_i2 = _log_i2(alpha, 1.0)
    return math.exp(log_i2) if log_i2 < 700 else math.inf


def _log_i2(alpha, sign):
    return (-0.5 * math.log(2 * math.pi) + (alpha - 1) * math.log(2.0)
            + 0.5 * alpha * math.log(alpha) + 2 * special.gammaln((alpha + 1) / 4)
            - special.gammaln(alpha) + sign * 0.5 * alpha)


def _dh_from_i2(i2: float) -> float:
    i = math.sqrt(i2)
    return math.sqrt(1 - i) if i <= 1 else math.nan


class NormalGammaHellinger(NamedTuple):
    formula: float
    quadrature: float


def hellinger_normal_gamma(mu: float, s2: float, grid: GridSpec = DEFAULT_GRID) -> NormalGammaHellinger:
    """Distance from N(mu, s2) to its moment-matched Gamma.

    ``formula`` comes from the literal closed-form transcription and is NaN
    whenever that expression yields an affinity above one; ``quadrature`` is
    the numerical value and the one to rely on.
    """
    if not mu > 0:
        raise DomainError(f"mean must be positive for a gamma match, got {mu}")
    alpha, beta = dglm.moment_match_gamma(mu, s2)
    quad = quadrature_hellinger(NormalDensity(mu, s2), GammaDensity(alpha, beta), grid)
    return NormalGammaHellinger(_dh_from_i2(normal_gamma_i2_literal(alpha)), quad)


def hellinger_normal_gamma_exact(mu: float, s2: float) -> float:
    alpha = mu * mu / s2
    return _dh_from_i2(normal_gamma_i2(alpha))


def variation_bounds(dH: float) -> tuple[float, float]:
    """Interval ``[dH^2, sqrt(2) dH]`` known to contain the variation distance."""
    if not 0.0 <= dH <= 1.0:
        raise DomainError(f"Hellinger distance must lie in [0, 1], got {dH}")
    return min(dH * dH, 1.0), min(SQRT2 * dH, 1.0)


# -- marginalization ---------------------------------------------------------

def shared_conditional_pair(mu_a, var_a, mu_b, var_b, slope, intercept, noise):
    """Two bivariate normals with different X1 margins and a common X2 | X1."""
    out = []
    for mu, var in ((mu_a, var_a), (mu_b, var_b)):
        mean = np.array([mu, slope * mu + intercept])
        cov = np.array([[var, slope * var], [slope * var, slope * slope * var + noise]])
        out.append((mean, cov))
    return out[0][0], out[0][1], out[1][0], out[1][1]


@dataclass(frozen=True)
class MarginalizationRow:
    shared: bool
    d_joint: float
    d_margin: float
    ok: bool


@dataclass(frozen=True)
class MarginalizationReport:
    rows: tuple[MarginalizationRow, ...]

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.rows)


def marginalization_checks(pairs: Sequence, keep: int = 1,
                           equal_tol: float = 1e-6, slack: float = 1e-9) -> MarginalizationReport:
    """Compare joint and leading-block Hellinger distances.

    Each pair is ``(mu1, S1, mu2, S2, shared)``.  Shared-conditional pairs must
    give equal distances; every pair must satisfy ``d_joint >= d_margin``.
    """
    rows = []
    for mu1, s1, mu2, s2, shared in pairs:
        mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
        s1, s2 = np.asarray(s1, float), np.asarray(s2, float)
        dj = hellinger_mvn(mu1, s1, mu2, s2)
        dm = hellinger_mvn(mu1[:keep], s1[:keep, :keep], mu2[:keep], s2[:keep, :keep])
        ok = abs(dj - dm) < equal_tol if shared else dj - dm >= -slack
        rows.append(MarginalizationRow(bool(shared), dj, dm, bool(ok)))
    return MarginalizationReport(tuple(rows))


# -- error bound for a Poisson observation ------------------------------------

@dataclass(frozen=True)
class ErrorBoundReport:
    """Components of the Hellinger error bound for one observation.

    ``bound`` bounds the Hellinger distance (not its square) between the
    exact posterior and the Gaussian approximation; when the bound is not
    applicable it is set to the trivial value 1.
    """

    eps1: float
    eps2: float
    tau: float
    tau_alt: float
    c0: float
    c2: float
    c2_hat: float
    dH_k2: float
    dH_L1_L2hat: float
    dH_L2hat_L2: float
    z1: float
    z2_hat: float
    bound_sq: float
    bound: float
    applicable: bool
    quadrature_dH: float


def _npdf(x, mu, var):
    return math.exp(-0.5 * (x - mu) ** 2 / var) / math.sqrt(2 * math.pi * var)


def _l2_sq_normal(var):
    return 1.0 / (2.0 * math.sqrt(math.pi * var))


def _quad(fn, lo, hi, points=None):
    val, _ = integrate.quad(fn, lo, hi, points=points, limit=400, epsabs=1e-14, epsrel=1e-11)
    return val


def error_bound(m: float, w2: float, y: float, family="poisson", V: float | None = None,
                grid: GridSpec = DEFAULT_GRID) -> ErrorBoundReport:
    """Bound on d_H between the exact and the Gaussian-approximate lambda posterior.

    Parameters
    ----------
    m, w2 : prior mean and variance of lambda (the Gaussian prior p0)
    y : observation
    family : "poisson" (default) or "normal"; the normal variant has an exact
        Gaussian likelihood and serves as the degenerate check.
    V : observation variance for the normal variant
    """
    from . import oracle

    if not w2 > 0:
        raise DomainError("prior variance must be positive")
    if family == "poisson":
        post = dglm.update_poisson(m, w2, y)
        k = y + 1.0
        lik2 = GammaDensity(k, 1.0)
        mean2 = var2 = k
        hi = float(lik2._dist.isf(1e-17))
        c2 = math.sqrt(_quad(lambda t: lik2.pdf(t) ** 2, 0.0, hi, points=[k - 1]))
        dH_2hat_2 = quadrature_hellinger(NormalDensity(mean2, var2), lik2, grid)
    elif family == "normal":
        if V is None:
            raise DomainError("normal variant needs V")
        post = dglm.update_normal(m, w2, y, V)
        mean2, var2 = float(y), float(V)
        lik2 = NormalDensity(mean2, var2)
        c2 = math.sqrt(_l2_sq_normal(var2))
        dH_2hat_2 = 0.0
    else:
        raise DomainError(f"unsupported family {family!r}")

    c0 = math.sqrt(_l2_sq_normal(w2))
    c2_hat = math.sqrt(_l2_sq_normal(var2))
    if family == "poisson":
        lo_hat = max(0.0, mean2 - 40 * math.sqrt(var2))
        cross = _quad(lambda t: lik2.pdf(t) * _npdf(t, mean2, var2), lo_hat, hi, points=[mean2])
        aff_k = cross / (c2 * c2_hat)
    else:
        aff_k = 1.0
    dH_k2 = math.sqrt(min(max(1.0 - aff_k, 0.0), 1.0))
    eps2 = c0 * math.sqrt(max((c2 - c2_hat) ** 2 + 2 * c2 * c2_hat * dH_k2 ** 2, 0.0))
    z2_hat = _npdf(mean2, m, w2 + var2)

    # implied Gaussian likelihood L1 = posterior / prior, normalized
    prec1 = 1.0 / post.w2_star - 1.0 / w2
    if family == "poisson":
        quad_dh = oracle.hellinger_to_truth(m, w2, y, post.m_star, post.w2_star, grid=grid)
    else:
        quad_dh = 0.0
    nan = math.nan
    if not prec1 > 0:
        return ErrorBoundReport(nan, eps2, nan, nan, c0, c2, c2_hat, dH_k2, nan, dH_2hat_2,
                                nan, z2_hat, nan, 1.0, False, quad_dh)
    if family == "normal":
        m1, v1 = mean2, var2
    else:
        v1 = 1.0 / prec1
        m1 = (post.m_star / post.w2_star - m / w2) * v1
    z1 = _npdf(m1, m, w2 + v1)
    p0sq_l1 = c0 ** 2 * _npdf(m1, m, w2 / 2 + v1)
    tau = math.sqrt(2 * p0sq_l1) / z1
    tau_alt = math.sqrt(c0 ** 2 * _l2_sq_normal(v1) * _npdf(m1, m, w2 / 2 + v1 / 2)) / z1
    dH_1_2hat = 0.0 if family == "normal" else hellinger_normal_normal(m1, v1, mean2, var2)
    eps1 = SQRT2 * tau * (dH_1_2hat + dH_2hat_2)
    bound_sq = 1.0 - (1.0 - eps1) * ((z2_hat + eps2) / z1) ** -0.5
    if -1e-12 < bound_sq < 0.0:
        bound_sq = 0.0
    applicable = eps1 <= 1.0 and 0.0 <= bound_sq <= 1.0
    bound = math.sqrt(bound_sq) if applicable else 1.0
    return ErrorBoundReport(eps1, eps2, tau, tau_alt, c0, c2, c2_hat, dH_k2, dH_1_2hat,
                            dH_2hat_2, z1, z2_hat, bound_sq, bound, applicable, quad_dh)
