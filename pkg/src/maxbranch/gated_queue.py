"""Discrete-event simulation of the gated infinite-server queue.

Customers queue behind a gate that opens only when every server is free;
the whole batch is then served in parallel, so a stage lasts as long as
the largest service time in the batch.  Stage durations within a busy
period form a maximal branching process with offspring CDF
exp{-lam * (1 - B(x))}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .laws import Deterministic, QueueInduced, ServiceLaw
from .couplings import ks_critical_value, ks_two_sample

CONTINUOUS_TIME = "continuous"
DISCRETE_TIME = "discrete"


@dataclass(frozen=True)
class GatedQueueConfig:
    """Arrival process and service law of the gated queue.

    Continuous mode has Poisson arrivals of rate ``arrival_rate``; when
    the gate opens on an empty queue it waits for the next arrival, which
    opens the following stage with a batch of one.  Discrete mode has
    exactly one arrival per time instant, so a stage of integer duration
    z feeds the next batch with exactly z customers.
    """

    arrival_rate: float
    service: ServiceLaw
    mode: str = CONTINUOUS_TIME

    def __post_init__(self):
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be positive")
        if self.mode not in (CONTINUOUS_TIME, DISCRETE_TIME):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == DISCRETE_TIME and \
                float(np.asarray(self.service.cdf(1.0 - 1e-12))) > 0:
            raise ValueError("discrete mode needs service times of at least one "
                             "time unit, so batches are never empty")


@dataclass
class StageRecord:
    stage_index: int
    gate_open_time: float
    batch_size: int
    stage_duration: float
    idle_wait: float


def induced_offspring_law(lam: float, service: ServiceLaw) -> QueueInduced:
    """Offspring law of the stage-duration chain: exp{-lam * (1 - B(x))}."""
    return QueueInduced(lam, service)


def simulate_gated_queue(config: GatedQueueConfig, n_stages: int,
                         seed: int) -> list[StageRecord]:
    """Event-driven stage simulation, deterministic under the seed.

    Arrivals within a stage are generated by count only; their positions
    never affect any reported statistic.
    """
    if n_stages < 1:
        raise ValueError("n_stages must be at least 1")
    rng = np.random.default_rng(seed)
    lam = config.arrival_rate
    records: list[StageRecord] = []
    clock = 0.0
    prev_duration = 0.0  # forces an initial idle wait: the first customer opens stage 0
    for idx in range(n_stages):
        idle = 0.0
        if config.mode == CONTINUOUS_TIME:
            batch = int(rng.poisson(lam * prev_duration)) if prev_duration > 0 else 0
            if batch == 0:
                idle = float(rng.exponential(1.0 / lam))
                batch = 1
        else:
            batch = int(prev_duration)
            if batch == 0:
                batch = 1
        clock += idle
        duration = float(np.max(np.asarray(config.service.sample(rng, batch),
                                           dtype=float)))
        records.append(StageRecord(stage_index=idx, gate_open_time=clock,
                                   batch_size=batch, stage_duration=duration,
                                   idle_wait=idle))
        clock += duration
        prev_duration = duration
    return records


def one_step_stage_kernel(config: GatedQueueConfig, x: float, n: int,
                          seed: int) -> np.ndarray:
    """Event-driven one-step stage durations from a previous duration x.

    Empty batches are recorded as duration 0 (the gate would idle), so the
    empirical law is directly comparable with exp{-lam * x * (1 - B(y))}.
    """
    if x <= 0:
        raise ValueError("x must be positive")
    rng = np.random.default_rng(seed)
    counts = rng.poisson(config.arrival_rate * x, n)
    total = int(counts.sum())
    services = np.asarray(config.service.sample(rng, total), dtype=float)
    out = np.zeros(n)
    nonzero = counts > 0
    if np.any(nonzero):
        offsets = np.concatenate(([0], np.cumsum(counts)))[:-1]
        maxima = np.maximum.reduceat(services, offsets[nonzero])
        out[nonzero] = maxima
    return out


@dataclass
class EquivalenceReport:
    statistic: float
    pvalue: float
    critical_1pct: float
    n_queue: int
    n_mbp: int

    @property
    def passed(self) -> bool:
        return self.statistic < self.critical_1pct


def _mbp_busy_period_states(config: GatedQueueConfig, n_states: int,
                            seed: int) -> np.ndarray:
    """States of the induced-law recursion restarted at every absorption.

    A busy period starts from the service time of the single customer that
    opens the gate; absorption of the recursion corresponds to an empty
    batch, where the queue would idle.
    """
    rng = np.random.default_rng(seed)
    law = induced_offspring_law(config.arrival_rate, config.service)
    out = np.empty(n_states)
    z = 0.0
    for i in range(n_states):
        if z > 0.0:
            u = rng.random()
            u = u if u > 0.0 else np.finfo(float).tiny
            z = float(law.quantile_neg_log(-math.log(u) / z))
        if z <= 0.0:
            # absorption = empty batch: the next arrival opens a fresh busy period
            z = float(np.asarray(config.service.sample(rng), dtype=float))
        out[i] = z
    return out


def queue_vs_mbp_equivalence(config: GatedQueueConfig, n_stages: int,
                             seed_a: int, seed_b: int) -> EquivalenceReport:
    """Two-sample KS between event-driven stage durations and states of the
    induced maximal branching recursion, both segmented at busy periods."""
    if config.mode != CONTINUOUS_TIME:
        raise ValueError("equivalence check is defined for continuous mode")
    stages = simulate_gated_queue(config, n_stages, seed_a)
    durations = np.array([s.stage_duration for s in stages])
    mbp = _mbp_busy_period_states(config, n_stages, seed_b)
    stat, pvalue = ks_two_sample(durations, mbp)
    return EquivalenceReport(statistic=stat, pvalue=pvalue,
                             critical_1pct=ks_critical_value(len(durations), len(mbp), 0.01),
                             n_queue=len(durations), n_mbp=len(mbp))


@dataclass
class QueueSummary:
    n_stages: int
    mean_stage_duration: float
    stage_duration_se: float
    mean_batch_size: float
    idle_fraction: float
    idle_stage_count: int
    duration_quantiles: dict

    def to_json_dict(self) -> dict:
        return {
            "n_stages": self.n_stages,
            "mean_stage_duration": self.mean_stage_duration,
            "stage_duration_se": self.stage_duration_se,
            "mean_batch_size": self.mean_batch_size,
            "idle_fraction": self.idle_fraction,
            "idle_stage_count": self.idle_stage_count,
            "duration_quantiles": {str(k): v for k, v in self.duration_quantiles.items()},
        }


def queue_performance_report(config: GatedQueueConfig, n_stages: int,
                             seed: int) -> QueueSummary:
    """Summary statistics of a queue run: durations, batches, idle time."""
    stages = simulate_gated_queue(config, n_stages, seed)
    durations = np.array([s.stage_duration for s in stages])
    batches = np.array([s.batch_size for s in stages], dtype=float)
    idles = np.array([s.idle_wait for s in stages])
    busy_time = durations.sum()
    idle_time = idles.sum()
    quantiles = {q: float(np.quantile(durations, q)) for q in (0.5, 0.9, 0.99)}
    return QueueSummary(
        n_stages=n_stages,
        mean_stage_duration=float(durations.mean()),
        stage_duration_se=float(durations.std(ddof=1) / math.sqrt(n_stages))
        if n_stages > 1 else 0.0,
        mean_batch_size=float(batches.mean()),
        idle_fraction=float(idle_time / (busy_time + idle_time))
        if busy_time + idle_time > 0 else 0.0,
        idle_stage_count=int(np.count_nonzero(idles > 0)),
        duration_quantiles=quantiles,
    )


def stage_records_to_rows(stages: list[StageRecord]):
    """CSV-ready rows: (stage_index, gate_open_time, batch_size, stage_duration, idle_wait)."""
    for s in stages:
        yield (s.stage_index, s.gate_open_time, s.batch_size, s.stage_duration,
               s.idle_wait)
