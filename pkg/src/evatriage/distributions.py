"""GEV family evaluation plus the Normal/Poisson central-tendency baselines.

All evaluators accept a scalar or an array of points and return a float
for scalar input, an ``ndarray`` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy import special

from .errors import ParameterError

# |shape| below this is evaluated on the Gumbel branch.
XI_TOL = 1e-8

# Poisson CDF switches from term summation to the incomplete gamma above this k.
POISSON_SUM_LIMIT = 10_000


class EvKind(str, Enum):
    GUMBEL = "Gumbel"
    FRECHET = "Frechet"
    WEIBULL = "Weibull"


@dataclass(frozen=True)
class GevParams:
    """Location, scale and shape of a generalized extreme value law."""

    location: float
    scale: float
    shape: float

    def __post_init__(self):
        for name in ("location", "scale", "shape"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
                raise ParameterError(f"GEV {name} must be a finite real, got {value!r}")
        if self.scale <= 0:
            raise ParameterError(f"GEV scale must be > 0, got {self.scale!r}")

    @property
    def is_gumbel(self) -> bool:
        return abs(self.shape) < XI_TOL

    @property
    def endpoint(self) -> Optional[float]:
        """Finite support bound (lower for Frechet, upper for Weibull); None for Gumbel."""
        if self.is_gumbel:
            return None
        return self.location - self.scale / self.shape

    def as_dict(self) -> dict:
        return {"location": float(self.location), "scale": float(self.scale), "shape": float(self.shape)}


@dataclass(frozen=True)
class ClassicalEvParams:
    """The three-type ``(a, b, alpha)`` parameterization of the extreme value laws."""

    kind: EvKind
    a: float
    b: float
    alpha: Optional[float] = None

    def __post_init__(self):
        if not self.a > 0:
            raise ParameterError(f"a must be > 0, got {self.a!r}")
        if self.kind is EvKind.GUMBEL:
            if self.alpha is not None:
                raise ParameterError("alpha is not defined for the Gumbel type")
        elif self.alpha is None or not self.alpha > 0:
            raise ParameterError(f"alpha must be > 0 for {self.kind.value}, got {self.alpha!r}")

    def cdf(self, z):
        """Evaluate the type I/II/III distribution function in its own parameterization."""
        z_arr = np.asarray(z, dtype=float)
        w = (z_arr - self.b) / self.a
        if self.kind is EvKind.GUMBEL:
            out = np.exp(-np.exp(-w))
        elif self.kind is EvKind.FRECHET:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out = np.where(w > 0, np.exp(-np.power(np.where(w > 0, w, 1.0), -self.alpha)), 0.0)
        else:
            with np.errstate(invalid="ignore", over="ignore"):
                out = np.where(w < 0, np.exp(-np.power(np.where(w < 0, -w, 1.0), self.alpha)), 1.0)
        return _unwrap(out, z)


@dataclass(frozen=True)
class NormalParams:
    mean: float
    sd: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sd)) or self.sd <= 0:
            raise ParameterError(f"normal law needs finite mean and sd > 0, got ({self.mean!r}, {self.sd!r})")


@dataclass(frozen=True)
class PoissonParams:
    rate: float

    def __post_init__(self):
        if not math.isfinite(self.rate) or self.rate <= 0:
            raise ParameterError(f"Poisson rate must be > 0, got {self.rate!r}")


def _unwrap(out, like):
    if np.ndim(like) == 0:
        return float(out)
    return out


def _log_t(p: GevParams, z: np.ndarray):
    """Return ``(ln t(z), inside-support mask)`` for the GEV kernel ``t``."""
    s = (z - p.location) / p.scale
    if p.is_gumbel:
        return -s, np.ones(s.shape, dtype=bool)
    xs = p.shape * s
    # compare against the endpoint too: 1 + xi*s can round to a tiny positive there
    beyond = z <= p.endpoint if p.shape > 0 else z >= p.endpoint
    inside = (xs > -1.0) & ~beyond
    with np.errstate(divide="ignore", invalid="ignore"):
        log_t = np.where(inside, (-1.0 / p.shape) * np.log1p(np.where(inside, xs, 0.0)), np.nan)
    return log_t, inside


def gev_cdf(p: GevParams, z):
    """GEV distribution function.

    Outside the support the limiting value is returned: 0 at and below the
    Frechet lower endpoint, 1 at and above the Weibull upper endpoint.
    """
    z_arr = np.asarray(z, dtype=float)
    log_t, inside = _log_t(p, z_arr)
    with np.errstate(over="ignore"):
        inner = np.exp(np.where(inside, log_t, 0.0))
    out = np.where(inside, np.exp(-inner), 0.0 if p.shape > 0 else 1.0)
    return _unwrap(out, z)


def gev_logpdf(p: GevParams, z):
    z_arr = np.asarray(z, dtype=float)
    log_t, inside = _log_t(p, z_arr)
    safe = np.where(inside, log_t, 0.0)
    with np.errstate(over="ignore"):
        val = -math.log(p.scale) + (p.shape + 1.0) * safe - np.exp(safe)
    out = np.where(inside, val, -np.inf)
    return _unwrap(out, z)


def gev_pdf(p: GevParams, z):
    """GEV density; zero outside the support."""
    with np.errstate(under="ignore"):
        out = np.exp(np.asarray(gev_logpdf(p, z), dtype=float))
    return _unwrap(out, z)


def gev_quantile(p: GevParams, prob):
    """Inverse of :func:`gev_cdf` for probabilities strictly inside (0, 1)."""
    q = np.asarray(prob, dtype=float)
    if np.any(~((q > 0) & (q < 1))):
        raise ParameterError(f"quantile probability must lie in (0, 1), got {prob!r}")
    y = -np.log(q)
    if p.is_gumbel:
        out = p.location - p.scale * np.log(y)
    else:
        out = p.location + (p.scale / p.shape) * np.expm1(-p.shape * np.log(y))
    return _unwrap(out, prob)


def gev_sample(p: GevParams, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` values by inverse transform of seeded uniforms."""
    if n < 1:
        raise ParameterError(f"sample size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    # random() is on [0, 1); zero would map onto the endpoint.
    u = np.where(u > 0.0, u, np.nextafter(0.0, 1.0))
    return np.asarray(gev_quantile(p, u))


def classify(p: GevParams) -> EvKind:
    if p.shape > XI_TOL:
        return EvKind.FRECHET
    if p.shape < -XI_TOL:
        return EvKind.WEIBULL
    return EvKind.GUMBEL


def to_classical(p: GevParams) -> ClassicalEvParams:
    """Map ``(mu, sigma, xi)`` onto the type I/II/III ``(a, b, alpha)`` form.

    Uses the identity ``1 + xi (z - mu) / sigma = +/-(z - b) / a`` with
    ``b = mu - sigma / xi``, ``a = |sigma / xi|`` and ``alpha = |1 / xi|``.
    """
    kind = classify(p)
    if kind is EvKind.GUMBEL:
        return ClassicalEvParams(kind, a=p.scale, b=p.location)
    b = p.location - p.scale / p.shape
    return ClassicalEvParams(kind, a=abs(p.scale / p.shape), b=b, alpha=abs(1.0 / p.shape))


def normal_cdf(p: NormalParams, z):
    z_arr = np.asarray(z, dtype=float)
    out = 0.5 * special.erfc(-(z_arr - p.mean) / (p.sd * math.sqrt(2.0)))
    return _unwrap(out, z)


def _poisson_cdf_scalar(rate: float, k: float) -> float:
    if k < 0:
        return 0.0
    k = int(math.floor(k))
    if k > POISSON_SUM_LIMIT:
        return float(special.gammaincc(k + 1, rate))
    # log-space terms keep exp(-rate) from underflowing for large rates
    log_rate = math.log(rate)
    logs = [-rate + j * log_rate - math.lgamma(j + 1) for j in range(k + 1)]
    top = max(logs)
    total = math.exp(top) * math.fsum(math.exp(v - top) for v in logs)
    return min(total, 1.0)


def poisson_cdf(p: PoissonParams, k):
    """P(N <= k) for N ~ Poisson(rate); non-integer ``k`` is floored."""
    if np.ndim(k) == 0:
        return _poisson_cdf_scalar(p.rate, float(k))
    k_arr = np.asarray(k, dtype=float)
    return np.array([_poisson_cdf_scalar(p.rate, float(v)) for v in k_arr.ravel()]).reshape(k_arr.shape)
