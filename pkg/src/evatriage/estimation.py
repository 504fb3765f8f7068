"""GEV parameter estimation by maximum likelihood and probability-weighted moments."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .distributions import XI_TOL, GevParams
from .errors import DataError, NumericalFailure, ParameterError

log = logging.getLogger(__name__)

PARAM_NAMES = ("location", "scale", "shape")
EULER_GAMMA = 0.5772156649015329
Z95 = 1.96

# Nelder-Mead controls
NLL_RTOL = 1e-10
PARAM_TOL = 1e-8
MAX_ITER = 2000
HESSIAN_REL_STEP = 1e-4

MIN_FIT_SIZE = 4
RECOMMENDED_FIT_SIZE = 10


class FitWarning(UserWarning):
    """Fit ran but the result deserves caution (small sample, approximation range)."""


@dataclass
class FitResult:
    """Estimated GEV parameters with their uncertainty summary.

    ``se`` and ``ci95`` are keyed by parameter name and are ``None`` for PWM
    fits or when the observed information matrix is not positive definite.
    """

    params: GevParams
    method: str
    n: int
    nll: Optional[float] = None
    se: Optional[dict] = None
    ci95: Optional[dict] = None
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "params": self.params.as_dict(),
            "se": None if self.se is None else {k: float(self.se[k]) for k in PARAM_NAMES},
            "ci95": None if self.ci95 is None else {k: [float(v) for v in self.ci95[k]] for k in PARAM_NAMES},
            "nll": None if self.nll is None else float(self.nll),
            "n": self.n,
            "warnings": list(self.warnings),
        }


def _as_sample(data, min_size=1) -> np.ndarray:
    arr = np.asarray(data, dtype=float).ravel()
    if arr.size == 0:
        raise DataError("no data supplied")
    if arr.size < min_size:
        raise DataError(f"need at least {min_size} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DataError("data contains non-finite values")
    return arr


def _nll(location: float, scale: float, shape: float, z: np.ndarray) -> float:
    if not scale > 0:
        return math.inf
    s = (z - location) / scale
    n = z.size
    if abs(shape) < XI_TOL:
        return n * math.log(scale) + math.fsum(s) + math.fsum(np.exp(-s))
    y = 1.0 + shape * s
    bound = location - scale / shape
    if np.any(y <= 0) or np.any(z <= bound if shape > 0 else z >= bound):
        return math.inf
    log_y = np.log(y)
    return (
        n * math.log(scale)
        + (1.0 + 1.0 / shape) * math.fsum(log_y)
        + math.fsum(np.exp((-1.0 / shape) * log_y))
    )


def gev_nll(p: GevParams, data: Sequence[float]) -> float:
    """Negative log-likelihood of ``data`` under ``p``.

    Returns ``math.inf`` when any observation falls outside the support,
    which the optimizer treats as an infeasible point.
    """
    z = _as_sample(data)
    return _nll(p.location, p.scale, p.shape, z)


def pwm_b(data: Sequence[float], r: int) -> float:
    """Unbiased probability-weighted moment ``b_r`` for r in {0, 1, 2}."""
    if r not in (0, 1, 2):
        raise ParameterError(f"r must be 0, 1 or 2, got {r!r}")
    x = np.sort(_as_sample(data))
    n = x.size
    if n <= r:
        raise DataError(f"b_{r} needs more than {r} observations, got {n}")
    i = np.arange(1, n + 1, dtype=float)
    weights = np.ones(n)
    for j in range(1, r + 1):
        weights *= (i - j) / (n - j)
    return math.fsum(weights * x) / n


def gev_from_pwm(b0: float, b1: float, b2: float) -> GevParams:
    """GEV parameters from the first three PWMs (Hosking's approximation)."""
    l2 = 2.0 * b1 - b0
    if not l2 > 0:
        raise DataError("PWM fit needs non-degenerate data (all values are equal)")
    c = l2 / (3.0 * b2 - b0) - math.log(2.0) / math.log(3.0)
    k = 7.8590 * c + 2.9554 * c * c
    if abs(k) < 1e-6:
        scale = l2 / math.log(2.0)
        return GevParams(b0 - EULER_GAMMA * scale, scale, 0.0)
    if k <= -1.0:
        raise DataError(f"PWM shape estimate {-k:.4g} >= 1 has no finite mean; PWM undefined")
    g = math.gamma(1.0 + k)
    scale = l2 * k / (g * (1.0 - 2.0 ** (-k)))
    return GevParams(b0 + scale * (g - 1.0) / k, scale, -k)


def fit_pwm(data: Sequence[float]) -> FitResult:
    """Probability-weighted-moment fit.

    Shapes outside (-0.5, 0.5) are returned with a range warning since the
    rational approximation degrades there.
    """
    x = _as_sample(data, MIN_FIT_SIZE)
    if np.ptp(x) == 0:
        raise DataError("PWM fit needs non-degenerate data (all values are equal)")
    params = gev_from_pwm(*(pwm_b(x, r) for r in (0, 1, 2)))
    notes = []
    if not -0.5 < params.shape < 0.5:
        msg = f"PWM shape {params.shape:.4f} outside (-0.5, 0.5); rational approximation is less accurate here"
        notes.append(msg)
        warnings.warn(msg, FitWarning, stacklevel=2)
    return FitResult(params, method="PWM", n=int(x.size), warnings=notes)


def _start_points(x: np.ndarray):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FitWarning)
            yield fit_pwm(x).params
    except (DataError, ParameterError) as exc:
        log.debug("PWM start unavailable: %s", exc)
    mean, sd = float(np.mean(x)), float(np.std(x, ddof=1))
    sd = sd if sd > 0 else 1.0
    yield GevParams(mean - 0.45 * sd, 0.78 * sd, 0.1)
    # Gumbel has unbounded support so this one is always feasible
    yield GevParams(mean - 0.45 * sd, 0.78 * sd, 0.0)


def _hessian(f, theta: np.ndarray) -> np.ndarray:
    k = theta.size
    h = HESSIAN_REL_STEP * np.maximum(np.abs(theta), 1.0)
    hess = np.empty((k, k))
    f0 = f(theta)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        hess[i, i] = (f(theta + ei) - 2.0 * f0 + f(theta - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            hess[i, j] = (
                f(theta + ei + ej) - f(theta + ei - ej) - f(theta - ei + ej) + f(theta - ei - ej)
            ) / (4.0 * h[i] * h[j])
            hess[j, i] = hess[i, j]
    return 0.5 * (hess + hess.T)


def fit_mle(data: Sequence[float]) -> FitResult:
    """Maximum likelihood fit by Nelder-Mead over ``(mu, ln sigma, xi)``.

    Standard errors come from the inverse of the central-difference Hessian
    of the NLL at the optimum; intervals are Wald ``estimate +/- 1.96 SE``.

    Raises
    ------
    NumericalFailure
        If the simplex hits the iteration cap; ``best_point`` holds the best
        ``(location, scale, shape)`` seen.
    """
    x = _as_sample(data, MIN_FIT_SIZE)
    notes = []
    if x.size < RECOMMENDED_FIT_SIZE:
        msg = f"only {x.size} maxima; MLE is unreliable below {RECOMMENDED_FIT_SIZE}"
        notes.append(msg)
        warnings.warn(msg, FitWarning, stacklevel=2)

    def objective(v):
        if v[1] > 700.0:
            return math.inf
        return _nll(v[0], math.exp(v[1]), v[2], x)

    start = None
    for cand in _start_points(x):
        theta0 = np.array([cand.location, math.log(cand.scale), cand.shape])
        if math.isfinite(objective(theta0)):
            start = theta0
            break
    assert start is not None

    fatol = NLL_RTOL * max(1.0, abs(objective(start)))
    options = {"xatol": PARAM_TOL, "fatol": fatol, "maxiter": MAX_ITER, "maxfev": 2 * MAX_ITER}
    best = optimize.minimize(objective, start, method="Nelder-Mead", options=options)
    if not best.success:
        bp = (float(best.x[0]), float(math.exp(best.x[1])), float(best.x[2]))
        raise NumericalFailure(f"Nelder-Mead did not converge: {best.message}", best_point=bp)
    # one restart from the optimum guards against a collapsed simplex
    again = optimize.minimize(objective, best.x, method="Nelder-Mead", options=options)
    if again.success and again.fun < best.fun:
        best = again

    params = GevParams(float(best.x[0]), float(math.exp(best.x[1])), float(best.x[2]))
    nll = _nll(params.location, params.scale, params.shape, x)
    se, ci = _wald(params, x, notes)
    return FitResult(params, method="MLE", n=int(x.size), nll=nll, se=se, ci95=ci, warnings=notes)


def _wald(params: GevParams, x: np.ndarray, notes: list):
    theta = np.array([params.location, params.scale, params.shape])
    hess = _hessian(lambda v: _nll(v[0], v[1], v[2], x), theta)
    try:
        if not np.all(np.isfinite(hess)):
            raise np.linalg.LinAlgError("non-finite Hessian")
        np.linalg.cholesky(hess)
        cov = np.linalg.inv(hess)
        var = np.diag(cov)
        if np.any(var <= 0):
            raise np.linalg.LinAlgError("non-positive variance")
    except np.linalg.LinAlgError:
        msg = "observed information not positive definite; SE and CI unavailable"
        notes.append(msg)
        warnings.warn(msg, FitWarning, stacklevel=3)
        return None, None
    sd = np.sqrt(var)
    se = dict(zip(PARAM_NAMES, (float(v) for v in sd)))
    ci = {name: (float(t - Z95 * s), float(t + Z95 * s)) for name, t, s in zip(PARAM_NAMES, theta, sd)}
    return se, ci
