"""Approximate conjugate updates of a Gaussian linear predictor (identity link).

Each update takes the prior mean ``m`` and variance ``w2`` of lambda, maps
them to a conjugate prior for the sampling parameter by matching moments,
performs the conjugate update and returns the posterior mean and variance
of lambda, which the caller then treats as Gaussian again.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

IDENTITY = "identity"


@dataclass(frozen=True)
class DglmPosterior:
    m_star: float
    w2_star: float
    gain: float


@dataclass(frozen=True)
class Normal:
    V: float

    def __post_init__(self):
        if not self.V > 0:
            raise DomainError(f"Normal observation variance must be positive, got {self.V}")


@dataclass(frozen=True)
class Poisson:
    pass


@dataclass(frozen=True)
class LogNormal:
    V: float

    def __post_init__(self):
        if not self.V > 0:
            raise DomainError(f"log-normal log-scale variance must be positive, got {self.V}")


Family = Normal | Poisson | LogNormal


def family_name(family: Family) -> str:
    return {Normal: "normal", Poisson: "poisson", LogNormal: "lognormal"}[type(family)]


def _check_prior(m, w2, positive_mean):
    if not w2 > 0:
        raise DomainError(f"prior variance must be positive, got {w2}")
    if positive_mean and not m > 0:
        raise DomainError(f"prior mean of lambda must be positive for this family, got {m}")


def update_normal(m: float, w2: float, y: float, V: float) -> DglmPosterior:
    _check_prior(m, w2, False)
    if not V > 0:
        raise DomainError(f"observation variance must be positive, got {V}")
    a = w2 / (w2 + V)
    return DglmPosterior((1 - a) * m + a * y, a * V, a)


def moment_match_gamma(m: float, w2: float) -> tuple[float, float]:
    """Shape and rate of the Gamma with mean ``m`` and variance ``w2``."""
    _check_prior(m, w2, True)
    return m * m / w2, m / w2


def update_poisson(m: float, w2: float, y: int) -> DglmPosterior:
    _check_prior(m, w2, True)
    if y < 0 or int(y) != y:
        raise DomainError(f"Poisson count must be a nonnegative integer, got {y}")
    a = w2 / (w2 + m)
    m_star = (1 - a) * m + a * y
    return DglmPosterior(m_star, a * m_star, a)


def moment_match_lognormal(m: float, w2: float) -> tuple[float, float]:
    """Log-mean and log-variance of the log-normal with mean ``m`` and variance ``w2``."""
    _check_prior(m, w2, True)
    b = math.log1p(w2 / (m * m))
    return math.log(m) - 0.5 * b, b


def update_lognormal(m: float, w2: float, y: float, V: float) -> DglmPosterior:
    _check_prior(m, w2, True)
    if not y > 0:
        raise DomainError(f"log-normal observation must be positive, got {y}")
    if not V > 0:
        raise DomainError(f"log-scale variance must be positive, got {V}")
    # log(m^2 + w2) - log(m^2), written to keep precision for small w2/m^2
    spread = math.log1p(w2 / (m * m))
    a = spread / (spread + V)
    m_star = math.exp((1 - a) * math.log(m) + a * math.log(y))
    return DglmPosterior(m_star, math.expm1(a * V) * m_star * m_star, a)


def update(family: Family, m: float, w2: float, y: float, link: str = IDENTITY) -> DglmPosterior:
    """Dispatch on observation family."""
    if link != IDENTITY:
        raise NotImplementedError(f"link {link!r} is not supported; only the identity link is")
    if isinstance(family, Normal):
        return update_normal(m, w2, y, family.V)
    if isinstance(family, Poisson):
        return update_poisson(m, w2, y)
    if isinstance(family, LogNormal):
        return update_lognormal(m, w2, y, family.V)
    raise TypeError(f"unknown family {family!r}")
