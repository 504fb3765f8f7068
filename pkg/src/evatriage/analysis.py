"""Return levels, empirical CDFs, model comparison and Pearson goodness of fit."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import special

from . import distributions as dist
from .distributions import GevParams, NormalParams, PoissonParams
from .errors import BinningError, ConfigError, DataError, ParameterError
from .estimation import fit_mle

log = logging.getLogger(__name__)

DEFAULT_PERIODS = tuple(float(t) for t in np.geomspace(1.1, 500.0, 100))

CUMULATIVE_BINS_MESSAGE = (
    "bins look cumulative (each range starts at the same lower bound, as in an "
    "observed-vs-predicted table with rows 0-25, 0-50, ...). Pearson's statistic "
    "needs disjoint bins; counting cumulative rows would count each observation "
    "several times. Difference the rows first (cumulative_to_disjoint) and add "
    "an open-ended tail bin."
)

TABLE_PVALUE_NOTE = (
    "note: a reported p-value computed from cumulative 0-x rows cannot be "
    "recomputed from those rows alone; the disjoint binning and degrees of "
    "freedom behind it are not recoverable without the raw maxima."
)

ParamsLike = Union[GevParams, NormalParams, PoissonParams]


@dataclass(frozen=True)
class ReturnLevelPoint:
    period: float
    level: float


@dataclass(frozen=True)
class EcdfCurve:
    """Right-continuous empirical step function over sorted unique points."""

    x: tuple
    heights: tuple
    n: int

    def __call__(self, z):
        xs = np.asarray(self.x)
        idx = np.searchsorted(xs, np.asarray(z, dtype=float), side="right")
        h = np.concatenate(([0.0], np.asarray(self.heights)))
        out = h[idx]
        return float(out) if np.ndim(z) == 0 else out


class CdfRow(NamedTuple):
    z: float
    ecdf: float
    gev: float
    normal: float
    poisson: float


@dataclass(frozen=True)
class GofReport:
    bin_edges: tuple
    observed: tuple
    expected: tuple
    chi2: float
    dof: int
    p_value: float
    fitted_param_count: int
    warnings: tuple = ()

    def as_dict(self) -> dict:
        return {
            "bin_edges": [_json_edge(e) for e in self.bin_edges],
            "observed": list(self.observed),
            "expected": [float(e) for e in self.expected],
            "chi2": float(self.chi2),
            "dof": self.dof,
            "p_value": float(self.p_value),
            "fitted_param_count": self.fitted_param_count,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class DisjointBins:
    """Disjoint ``(low, high]`` intervals with one value per interval."""

    edges: tuple
    values: tuple


def _json_edge(e):
    if math.isinf(e):
        return "inf" if e > 0 else "-inf"
    return float(e)


def return_level(p: GevParams, period: float) -> ReturnLevelPoint:
    """Level exceeded on average once every ``period`` blocks."""
    if not period > 1:
        raise ParameterError(f"return period must be > 1, got {period!r}")
    return ReturnLevelPoint(float(period), float(dist.gev_quantile(p, 1.0 - 1.0 / period)))


def return_curve(p: GevParams, periods: Optional[Sequence[float]] = None) -> list[ReturnLevelPoint]:
    """Return levels over a period grid (default: 100 log-spaced points, 1.1 to 500)."""
    grid = DEFAULT_PERIODS if periods is None else sorted(float(t) for t in periods)
    return [return_level(p, t) for t in grid]


def ecdf(data: Sequence[float]) -> EcdfCurve:
    arr = np.sort(np.asarray(data, dtype=float).ravel())
    if arr.size == 0:
        raise DataError("ECDF of an empty sample")
    xs, counts = np.unique(arr, return_counts=True)
    heights = np.cumsum(counts) / arr.size
    heights[-1] = 1.0
    return EcdfCurve(tuple(float(v) for v in xs), tuple(float(h) for h in heights), int(arr.size))


def cdf(params: ParamsLike, z):
    if isinstance(params, GevParams):
        return dist.gev_cdf(params, z)
    if isinstance(params, NormalParams):
        return dist.normal_cdf(params, z)
    if isinstance(params, PoissonParams):
        return dist.poisson_cdf(params, z)
    raise ParameterError(f"unsupported parameter type {type(params).__name__}")


def exceedance(params: ParamsLike, threshold: float) -> float:
    """P(X > threshold) under a GEV, Normal or Poisson law."""
    return 1.0 - float(cdf(params, threshold))


def baseline_params(parent: Sequence[float]) -> tuple[NormalParams, PoissonParams]:
    """Central-tendency laws estimated from the parent sample (mean, n-1 sd)."""
    arr = np.asarray(parent, dtype=float)
    if arr.size < 2:
        raise DataError("parent sample needs at least two values for a standard deviation")
    mean = float(np.mean(arr))
    return NormalParams(mean, float(np.std(arr, ddof=1))), PoissonParams(mean)


def compare_cdfs(
    parent: Sequence[float],
    maxima: Sequence[float],
    z_grid: Sequence[float],
    gev: Optional[GevParams] = None,
    normal: Optional[NormalParams] = None,
    poisson: Optional[PoissonParams] = None,
) -> list[CdfRow]:
    """Tabulate ECDF, GEV, Normal and Poisson CDFs on ``z_grid``.

    The GEV comes from an MLE fit of ``maxima`` and the baselines from the
    parent sample unless explicit parameters are passed.
    """
    if len(parent) == 0 or len(maxima) == 0:
        raise DataError("compare_cdfs needs non-empty parent and maxima samples")
    if gev is None:
        gev = fit_mle(maxima).params
    if normal is None or poisson is None:
        est_normal, est_poisson = baseline_params(parent)
        normal = normal or est_normal
        poisson = poisson or est_poisson
    curve = ecdf(maxima)
    z = np.sort(np.asarray(z_grid, dtype=float))
    return [
        CdfRow(float(v), curve(float(v)), dist.gev_cdf(gev, v), dist.normal_cdf(normal, v), dist.poisson_cdf(poisson, v))
        for v in z
    ]


def chi2_sf(x: float, dof: int) -> float:
    """Upper tail of the chi-squared law via the regularized incomplete gamma."""
    if x <= 0:
        return 1.0
    return float(special.gammaincc(dof / 2.0, x / 2.0))


def chi2_sf_even(x: float, dof: int) -> float:
    """Closed form ``exp(-x/2) * sum_{j<dof/2} (x/2)^j / j!`` for even ``dof``."""
    if dof % 2:
        raise ParameterError("closed form needs an even number of degrees of freedom")
    half = x / 2.0
    term, total = 1.0, 1.0
    for j in range(1, dof // 2):
        term *= half / j
        total += term
    return math.exp(-half) * total


def _looks_cumulative(probs: np.ndarray) -> bool:
    return probs.size > 1 and bool(np.all(np.diff(probs) >= 0)) and probs.sum() > 1.0 + 1e-6


def chi_squared_gof(
    observed: Sequence[int],
    expected_probs: Sequence[float],
    n: Optional[int] = None,
    fitted_param_count: int = 0,
    bin_edges: Optional[Sequence[float]] = None,
) -> GofReport:
    """Pearson chi-squared test on disjoint, exhaustive bins.

    ``dof = bins - 1 - fitted_param_count``; pass 3 when the probabilities
    come from a GEV fitted to the same data. ``bin_edges`` only labels the
    report.

    Raises
    ------
    BinningError
        Cumulative-looking bins, mismatched totals, or a bin with zero
        expected count (merge it with a neighbour).
    ConfigError
        If the degrees of freedom drop below 1.
    """
    obs = np.asarray(observed, dtype=float)
    probs = np.asarray(expected_probs, dtype=float)
    if obs.size == 0 or obs.size != probs.size:
        raise BinningError(f"need matching non-empty observed/probability bins, got {obs.size} and {probs.size}")
    if np.any(obs < 0) or np.any(obs != np.round(obs)):
        raise BinningError("observed bin counts must be non-negative integers")
    if _looks_cumulative(probs):
        raise BinningError(CUMULATIVE_BINS_MESSAGE)
    total = int(obs.sum())
    n = total if n is None else int(n)
    if total != n:
        raise BinningError(f"observed counts sum to {total}, expected n={n}")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise BinningError(f"bin probabilities sum to {probs.sum():.12g}; bins must be exhaustive (add an open tail bin)")
    expected = n * probs
    if np.any(expected <= 0):
        bad = int(np.flatnonzero(expected <= 0)[0])
        raise BinningError(f"bin {bad} has zero expected count; merge it with a neighbouring bin")
    dof = obs.size - 1 - int(fitted_param_count)
    if dof < 1:
        raise ConfigError(
            f"degrees of freedom {dof} < 1 ({obs.size} bins, {fitted_param_count} fitted parameters); use more bins"
        )
    notes = []
    small = np.flatnonzero(expected < 1.0)
    if small.size:
        msg = f"{small.size} bin(s) with expected count < 1; consider merging bins {small.tolist()}"
        log.warning(msg)
        notes.append(msg)
    stat = math.fsum((obs - expected) ** 2 / expected)
    return GofReport(
        bin_edges=() if bin_edges is None else tuple(float(e) for e in bin_edges),
        observed=tuple(int(v) for v in obs),
        expected=tuple(float(e) for e in expected),
        chi2=stat,
        dof=dof,
        p_value=chi2_sf(stat, dof),
        fitted_param_count=int(fitted_param_count),
        warnings=tuple(notes),
    )


def gof_from_fit(
    maxima: Sequence[float],
    params: GevParams,
    edges: Sequence[float],
    fitted_param_count: int = 3,
) -> GofReport:
    """Bin ``maxima`` at ascending ``edges`` into ``(-inf, e1], ..., (ek, inf)`` and test the GEV."""
    cuts = [float(e) for e in edges]
    if not cuts or any(b <= a for a, b in zip(cuts, cuts[1:])):
        raise BinningError(f"edges must be a non-empty strictly ascending list, got {list(edges)}")
    x = np.asarray(maxima, dtype=float)
    if x.size == 0:
        raise DataError("no maxima to test")
    full = [-math.inf, *cuts, math.inf]
    idx = np.searchsorted(np.asarray(cuts), x, side="left")
    observed = np.bincount(idx, minlength=len(full) - 1)
    cdf_vals = np.array([0.0, *(dist.gev_cdf(params, c) for c in cuts), 1.0])
    probs = np.diff(cdf_vals)
    return chi_squared_gof(observed, probs, n=int(x.size), fitted_param_count=fitted_param_count, bin_edges=full)


def cumulative_to_disjoint(
    upper_edges: Sequence[float],
    cumulative: Sequence[float],
    total: Optional[float] = None,
    lower: float = -math.inf,
) -> DisjointBins:
    """Difference cumulative ``0-x`` rows into disjoint ``(x_{i-1}, x_i]`` bins.

    With ``total`` (n for counts, 1 for probabilities) an open tail bin
    ``(x_last, inf)`` receives ``total - cumulative[-1]``.
    """
    edges = [float(e) for e in upper_edges]
    cum = [float(c) for c in cumulative]
    if not cum or len(cum) != len(edges):
        raise DataError("need one cumulative value per upper edge")
    if any(b < a for a, b in zip(cum, cum[1:])):
        raise DataError("cumulative values must be non-decreasing")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise DataError("upper edges must be strictly ascending")
    values = [cum[0]] + [b - a for a, b in zip(cum, cum[1:])]
    bounds = [(lower, edges[0])] + list(zip(edges, edges[1:]))
    if total is not None:
        if total < cum[-1]:
            raise DataError(f"total {total} is below the last cumulative value {cum[-1]}")
        values.append(total - cum[-1])
        bounds.append((edges[-1], math.inf))
    return DisjointBins(tuple(bounds), tuple(values))
