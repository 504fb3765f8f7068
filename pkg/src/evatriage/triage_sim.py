"""Day-by-day simulation of a capacity-limited repair shop under arrival shocks.

Each day the shop receives a Poisson baseline of cores plus, with some
probability, a GEV-distributed shock. Newly arrived cores must be sorted
before they can be repaired, and sorting draws on the same daily capacity as
repair. When the backlog outgrows a multiple of daily capacity the shop
switches to triage: sorting becomes cheaper but possibly less accurate, and
the configured prioritization rule orders the repair queue.

Arrival streams depend only on ``(seed, day)``, never on the policy, so
policy comparisons run on common random numbers.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .analysis import return_level
from .distributions import GevParams, gev_sample
from .errors import ConfigError

ID_STRIDE = 1 << 32
FIT_EPS = 1e-12


class PolicyKind(str, Enum):
    TRADITIONAL = "Traditional"
    LARREY = "Larrey"
    WILSON = "Wilson"
    FCFS = "FCFS"
    GGGN = "GGGN"
    LSFT = "LSFT"
    MFS = "MFS"

    @classmethod
    def parse(cls, name: str) -> "PolicyKind":
        for kind in cls:
            if kind.value.lower() == str(name).strip().lower():
                return kind
        raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(k.value for k in cls)}")


# Policies allowed to pass over a core that does not fit today's remaining
# budget and take smaller ones behind it. The rest stop at the head.
SKIPPING = frozenset({PolicyKind.GGGN, PolicyKind.MFS})


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    wilson_threshold: Optional[float] = None

    def __post_init__(self):
        kind = self.kind if isinstance(self.kind, PolicyKind) else PolicyKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is PolicyKind.WILSON:
            if self.wilson_threshold is None:
                raise ConfigError("policy Wilson requires field 'wilson_threshold'")
            if not 0.0 <= self.wilson_threshold <= 1.0:
                raise ConfigError(f"wilson_threshold must lie in [0, 1], got {self.wilson_threshold!r}")
        elif self.wilson_threshold is not None:
            raise ConfigError(f"wilson_threshold only applies to the Wilson policy, not {kind.value}")

    @property
    def name(self) -> str:
        return self.kind.value

    def as_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.wilson_threshold is not None:
            d["wilson_threshold"] = self.wilson_threshold
        return d


ALL_POLICY_KINDS = tuple(PolicyKind)


@dataclass(frozen=True)
class Core:
    """A returned unit awaiting repair.

    ``perceived_quality`` is what sorting reported; it equals ``quality``
    unless the core was triaged with a noisy assessment.
    """

    id: int
    arrival_day: int
    quality: float
    defects: int
    demand: float
    proc_time: float
    noise_z: float = 0.0
    perceived_quality: Optional[float] = None

    def __post_init__(self):
        if self.perceived_quality is None:
            object.__setattr__(self, "perceived_quality", self.quality)


@dataclass(frozen=True)
class AttributeModel:
    """Distribution of per-core attributes.

    quality ~ U(0, 1) unless ``fixed_quality`` is set, defects ~ Poisson,
    demand ~ U(0, 1), proc_time = base + per_defect * defects.
    """

    defects_mean: float = 2.0
    proc_time_base: float = 0.5
    proc_time_per_defect: float = 0.25
    fixed_quality: Optional[float] = None

    def __post_init__(self):
        if self.defects_mean < 0:
            raise ConfigError("attributes.defects_mean must be >= 0")
        if self.proc_time_base <= 0 or self.proc_time_per_defect < 0:
            raise ConfigError("attributes.proc_time_base must be > 0 and proc_time_per_defect >= 0")
        if self.fixed_quality is not None and not 0.0 <= self.fixed_quality <= 1.0:
            raise ConfigError("attributes.fixed_quality must lie in [0, 1]")


DEFAULT_SHOCK_LAW = GevParams(8.3540, 4.2832, 0.8903)


@dataclass(frozen=True)
class SimConfig:
    """Scenario for :func:`run_simulation`.

    ``trigger_return_period`` switches the triage trigger from the
    backlog multiple to "today's arrivals exceed the shock law's return
    level for that period". ``shock_cap`` truncates single shocks so a
    heavy-tailed draw cannot exhaust memory. With ``triage_only`` the policy
    is applied on triage days only and FCFS otherwise.
    """

    horizon_days: int = 365
    capacity_per_day: float = 10.0
    baseline_rate: float = 4.0
    shock_prob: float = 0.1
    shock_law: GevParams = DEFAULT_SHOCK_LAW
    policy: Policy = Policy(PolicyKind.FCFS)
    triage_trigger_multiple: float = 3.0
    trigger_return_period: Optional[float] = None
    accurate_sort_cost: float = 0.2
    triage_sort_cost: float = 0.05
    assessment_noise: float = 0.0
    shock_cap: int = 5000
    triage_only: bool = False
    attributes: AttributeModel = field(default_factory=AttributeModel)
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.horizon_days, (int, np.integer)) or self.horizon_days < 1:
            raise ConfigError(f"horizon_days must be an integer >= 1, got {self.horizon_days!r}")
        checks = [
            ("capacity_per_day", self.capacity_per_day > 0),
            ("baseline_rate", self.baseline_rate >= 0),
            ("shock_prob", 0.0 <= self.shock_prob <= 1.0),
            ("triage_trigger_multiple", self.triage_trigger_multiple > 0),
            ("accurate_sort_cost", self.accurate_sort_cost >= 0),
            ("triage_sort_cost", 0 <= self.triage_sort_cost <= self.accurate_sort_cost),
            ("assessment_noise", self.assessment_noise >= 0),
            ("shock_cap", self.shock_cap >= 0),
            ("seed", isinstance(self.seed, (int, np.integer)) and self.seed >= 0),
            ("trigger_return_period", self.trigger_return_period is None or self.trigger_return_period > 1),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"invalid value for field '{name}': {getattr(self, name)!r}")
        if not isinstance(self.policy, Policy):
            raise ConfigError("field 'policy' must be a Policy")

    def as_dict(self) -> dict:
        return {
            "horizon_days": self.horizon_days,
            "capacity_per_day": self.capacity_per_day,
            "baseline_rate": self.baseline_rate,
            "shock_prob": self.shock_prob,
            "shock_law": self.shock_law.as_dict(),
            "policy": self.policy.as_dict(),
            "triage_trigger_multiple": self.triage_trigger_multiple,
            "trigger_return_period": self.trigger_return_period,
            "accurate_sort_cost": self.accurate_sort_cost,
            "triage_sort_cost": self.triage_sort_cost,
            "assessment_noise": self.assessment_noise,
            "shock_cap": self.shock_cap,
            "triage_only": self.triage_only,
            "attributes": dataclasses.asdict(self.attributes),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class DayTrace:
    day: int
    arrivals: int
    backlog: int
    processed: int
    discarded: int
    triage: bool


@dataclass(frozen=True)
class SimReport:
    policy: str
    total_arrivals: int
    processed: int
    discarded: int
    final_backlog: int
    mean_backlog: float
    max_backlog: int
    mean_flow_time_days: float
    demand_weighted_throughput: float
    days_in_triage_mode: int
    trace: tuple = ()

    METRICS = (
        "processed",
        "discarded",
        "final_backlog",
        "mean_backlog",
        "max_backlog",
        "mean_flow_time_days",
        "demand_weighted_throughput",
        "days_in_triage_mode",
    )

    def as_dict(self, include_trace: bool = False) -> dict:
        d = {
            "policy": self.policy,
            "total_arrivals": self.total_arrivals,
            "processed": self.processed,
            "discarded": self.discarded,
            "final_backlog": self.final_backlog,
            "mean_backlog": self.mean_backlog,
            "max_backlog": self.max_backlog,
            "mean_flow_time_days": self.mean_flow_time_days,
            "demand_weighted_throughput": self.demand_weighted_throughput,
            "days_in_triage_mode": self.days_in_triage_mode,
        }
        if include_trace:
            d["trace"] = [dataclasses.asdict(t) for t in self.trace]
        return d


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def generate_arrivals(cfg: SimConfig, day: int) -> list[Core]:
    """Cores arriving on ``day``; a pure function of ``(cfg.seed, day)`` and the arrival model."""
    rng = np.random.default_rng([cfg.seed, day])
    count = int(rng.poisson(cfg.baseline_rate))
    shock_u = rng.random()
    shock_seed = int(rng.integers(0, 2**63 - 1))
    if shock_u < cfg.shock_prob:
        draw = float(gev_sample(cfg.shock_law, 1, shock_seed)[0])
        count += min(_round_half_up(max(0.0, draw)), cfg.shock_cap)
    attrs = cfg.attributes
    if attrs.fixed_quality is None:
        quality = rng.random(count)
    else:
        quality = np.full(count, float(attrs.fixed_quality))
    defects = rng.poisson(attrs.defects_mean, count)
    demand = rng.random(count)
    noise_z = rng.standard_normal(count)
    return [
        Core(
            id=day * ID_STRIDE + j,
            arrival_day=day,
            quality=float(quality[j]),
            defects=int(defects[j]),
            demand=float(demand[j]),
            proc_time=attrs.proc_time_base + attrs.proc_time_per_defect * int(defects[j]),
            noise_z=float(noise_z[j]),
        )
        for j in range(count)
    ]


def order_queue(policy: Policy, queue: Sequence[Core]) -> tuple[list[Core], list[Core]]:
    """Order ``queue`` by the policy's prioritizing factor.

    Returns ``(ordered, discarded)``; only Wilson discards, dropping cores
    whose perceived quality is below its threshold. Ties keep FCFS order.
    """
    kind = policy.kind
    fcfs = lambda c: (c.arrival_day, c.id)  # noqa: E731
    if kind is PolicyKind.TRADITIONAL:
        return list(queue), []
    if kind is PolicyKind.FCFS:
        return sorted(queue, key=fcfs), []
    if kind is PolicyKind.LARREY:
        return sorted(queue, key=lambda c: (-c.demand, *fcfs(c))), []
    if kind is PolicyKind.WILSON:
        keep = [c for c in queue if c.perceived_quality >= policy.wilson_threshold]
        drop = [c for c in queue if c.perceived_quality < policy.wilson_threshold]
        return sorted(keep, key=lambda c: (-c.perceived_quality, *fcfs(c))), drop
    if kind is PolicyKind.GGGN:
        return sorted(queue, key=lambda c: (c.proc_time, *fcfs(c))), []
    if kind is PolicyKind.LSFT:
        return sorted(queue, key=lambda c: (c.defects, *fcfs(c))), []
    if kind is PolicyKind.MFS:
        return sorted(queue, key=lambda c: (c.proc_time, -c.demand, *fcfs(c))), []
    raise ConfigError(f"unhandled policy {kind}")


def serve(policy: Policy, ordered: Sequence[Core], budget: float, capacity: float):
    """Greedily repair cores from an ordered queue within ``budget``.

    A core costs ``min(proc_time, capacity)`` so that a core larger than a
    whole day can still be taken on a day with a full budget. Returns
    ``(served, waiting, budget_left)``.
    """
    served, waiting = [], []
    blocked = False
    for core in ordered:
        cost = min(core.proc_time, capacity)
        if not blocked and cost <= budget + FIT_EPS:
            served.append(core)
            budget -= cost
        else:
            waiting.append(core)
            if policy.kind not in SKIPPING:
                blocked = True
    return served, waiting, budget


def _sort(core: Core, triage: bool, noise: float) -> Core:
    if not triage or noise == 0.0:
        return core
    seen = min(1.0, max(0.0, core.quality + noise * core.noise_z))
    return dataclasses.replace(core, perceived_quality=seen)


def run_simulation(cfg: SimConfig, keep_trace: bool = True) -> SimReport:
    """Simulate ``cfg.horizon_days`` days and summarize throughput and backlog."""
    fcfs = Policy(PolicyKind.FCFS)
    threshold = None
    if cfg.trigger_return_period is not None:
        threshold = return_level(cfg.shock_law, cfg.trigger_return_period).level

    intake: list[Core] = []
    queue: list[Core] = []
    total = processed = discarded = triage_days = 0
    flow_days = 0
    demand_sum = 0.0
    backlog_sum = 0
    max_backlog = 0
    trace = []

    for day in range(1, cfg.horizon_days + 1):
        arrivals = generate_arrivals(cfg, day)
        total += len(arrivals)
        intake.extend(arrivals)
        if threshold is None:
            triage = len(queue) + len(intake) > cfg.triage_trigger_multiple * cfg.capacity_per_day
        else:
            triage = len(arrivals) > threshold
        triage_days += triage

        budget = cfg.capacity_per_day
        cost = cfg.triage_sort_cost if triage else cfg.accurate_sort_cost
        if cost == 0:
            n_sorted = len(intake)
        else:
            n_sorted = min(len(intake), int((budget + FIT_EPS) // cost))
        budget -= n_sorted * cost
        queue.extend(_sort(c, triage, cfg.assessment_noise) for c in intake[:n_sorted])
        del intake[:n_sorted]

        policy = cfg.policy if (triage or not cfg.triage_only) else fcfs
        ordered, dropped = order_queue(policy, queue)
        served, queue, _ = serve(policy, ordered, max(budget, 0.0), cfg.capacity_per_day)

        processed += len(served)
        discarded += len(dropped)
        flow_days += sum(day - c.arrival_day for c in served)
        demand_sum += math.fsum(c.demand for c in served)
        backlog = len(queue) + len(intake)
        backlog_sum += backlog
        max_backlog = max(max_backlog, backlog)
        if keep_trace:
            trace.append(DayTrace(day, len(arrivals), backlog, len(served), len(dropped), bool(triage)))

    final_backlog = len(queue) + len(intake)
    assert processed + discarded + final_backlog == total
    return SimReport(
        policy=cfg.policy.name,
        total_arrivals=total,
        processed=processed,
        discarded=discarded,
        final_backlog=final_backlog,
        mean_backlog=backlog_sum / cfg.horizon_days,
        max_backlog=max_backlog,
        mean_flow_time_days=flow_days / processed if processed else 0.0,
        demand_weighted_throughput=demand_sum / cfg.horizon_days,
        days_in_triage_mode=int(triage_days),
        trace=tuple(trace),
    )


def replication_seed(base_seed: int, replication: int) -> int:
    """Seed of replication ``replication``; shared by every policy (common random numbers)."""
    return int(np.random.SeedSequence([base_seed, replication]).generate_state(1, np.uint64)[0] >> 1)


def evaluate_policies(base: SimConfig, policies: Sequence[Policy], replications: int = 10) -> list[dict]:
    """Mean and sd of every report metric per policy over common-random-number replications.

    Rows come back in the order of ``policies``.
    """
    if replications < 1:
        raise ConfigError(f"replications must be >= 1, got {replications}")
    seeds = [replication_seed(base.seed, r) for r in range(replications)]
    rows = []
    for policy in policies:
        reports = [
            run_simulation(dataclasses.replace(base, policy=policy, seed=s), keep_trace=False) for s in seeds
        ]
        row = {"policy": policy.name, "replications": replications}
        for metric in SimReport.METRICS:
            vals = np.array([getattr(r, metric) for r in reports], dtype=float)
            sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
            row[metric] = {"mean": float(np.mean(vals)), "sd": sd}
        rows.append(row)
    return rows
