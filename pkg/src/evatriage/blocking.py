"""Sub-period aggregation, block maxima extraction and descriptive statistics."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)


class PartialPolicy(str, Enum):
    PROMOTE = "promote"
    DROP = "drop"


@dataclass(frozen=True)
class ArrivalSeries:
    """Non-negative core arrival counts, one per operational day."""

    counts: tuple
    origin_label: str = ""

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if not counts:
            raise DataError("arrival series is empty")
        bad = [c for c in counts if c < 0]
        if bad:
            raise DataError(f"arrival counts must be >= 0, found {bad[0]}")
        object.__setattr__(self, "counts", counts)

    def __len__(self):
        return len(self.counts)


@dataclass(frozen=True)
class BlockConfig:
    """How days are grouped before maxima are taken.

    Each sub-period value is the SUM of its daily counts. This is the single
    place to change if per-window maxima are wanted instead.
    """

    subperiod_days: int = 3
    subperiods_per_block: int = 4
    partial_policy: PartialPolicy = PartialPolicy.PROMOTE

    def __post_init__(self):
        if int(self.subperiod_days) < 1 or int(self.subperiods_per_block) < 1:
            raise DataError("subperiod_days and subperiods_per_block must both be >= 1")
        object.__setattr__(self, "partial_policy", PartialPolicy(self.partial_policy))

    def as_dict(self) -> dict:
        return {
            "subperiod_days": self.subperiod_days,
            "subperiods_per_block": self.subperiods_per_block,
            "partial_policy": self.partial_policy.value,
        }


@dataclass(frozen=True)
class BlockMaxima:
    maxima: tuple
    n_subperiods: int
    n_blocks: int
    config: BlockConfig = field(default_factory=BlockConfig)


@dataclass(frozen=True)
class DescriptiveStats:
    n: int
    mean: float
    se_mean: float
    sd: float
    mode: float
    min: float
    q1: float
    median: float
    q3: float
    max: float

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "se_mean": self.se_mean,
            "sd": self.sd,
            "mode": self.mode,
            "min": self.min,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.max,
        }


def aggregate_subperiods(series: ArrivalSeries, cfg: BlockConfig) -> list[float]:
    """Sum consecutive non-overlapping windows of ``cfg.subperiod_days`` days.

    A trailing window shorter than a full sub-period is dropped with a warning.
    """
    counts = series.counts if isinstance(series, ArrivalSeries) else tuple(series)
    if not counts:
        raise DataError("arrival series is empty")
    width = cfg.subperiod_days
    n_full = len(counts) // width
    leftover = len(counts) - n_full * width
    if leftover:
        log.warning("dropping %d trailing day(s) that do not fill a %d-day sub-period", leftover, width)
    return [float(sum(counts[i * width:(i + 1) * width])) for i in range(n_full)]


def extract_block_maxima(subperiods: Sequence[float], cfg: BlockConfig) -> BlockMaxima:
    """Take the maximum of each group of ``cfg.subperiods_per_block`` sub-periods.

    Under ``promote`` a trailing partial group counts as a full block; under
    ``drop`` it is discarded.
    """
    values = [float(v) for v in subperiods]
    if not values:
        raise DataError("no sub-period values to block")
    size = cfg.subperiods_per_block
    groups = [values[i:i + size] for i in range(0, len(values), size)]
    if len(groups[-1]) < size and cfg.partial_policy is PartialPolicy.DROP:
        groups.pop()
    maxima = []
    for group in groups:
        m = max(group)
        assert all(m >= v for v in group)
        maxima.append(m)
    return BlockMaxima(tuple(maxima), n_subperiods=len(values), n_blocks=len(maxima), config=cfg)


def _mode(values: Sequence[float]) -> float:
    freq = Counter(values)
    top = max(freq.values())
    return min(v for v, c in freq.items() if c == top)


def describe(values: Sequence[float]) -> DescriptiveStats:
    """Summary statistics: mean, sd (n-1), SE of the mean, mode and quartiles.

    Quartiles interpolate linearly between closest ranks. The mode is the most
    frequent exact value, ties going to the smallest.
    """
    arr = np.sort(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise DataError("cannot describe an empty sample")
    n = int(arr.size)
    mean = math.fsum(arr) / n
    sd = float(np.std(arr, ddof=1)) if n > 1 else 0.0
    q1, med, q3 = (float(v) for v in np.quantile(arr, [0.25, 0.5, 0.75], method="linear"))
    return DescriptiveStats(
        n=n,
        mean=mean,
        se_mean=sd / math.sqrt(n),
        sd=sd,
        mode=float(_mode(arr.tolist())),
        min=float(arr[0]),
        q1=q1,
        median=med,
        q3=q3,
        max=float(arr[-1]),
    )
