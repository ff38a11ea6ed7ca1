"""Worst-case memory interference bounds for a bank-partitioned multicore.

Two analyses are provided:

* the parallelism-aware bound, which charges the analyzed read for a full
  write-drain batch plus every prior read pipelined on the data bus, and
* the one-request-per-core baseline, which charges a fixed per-command
  penalty for each competing core and is independent of how many requests
  those cores actually have queued.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .device import TimingParams, make_timing
from .scheduler import ScheduleTrace, request_delay, solo_service


class AnalysisError(ValueError):
    pass


@dataclass
class AnalysisInputs:
    timing: TimingParams
    max_prior_reads: int = 30   # read-queue entries that can sit ahead
    drain_batch: int = 4        # writes serviced per drain batch
    num_cores: int = 4
    miss_count: int = 0         # reads issued by the analyzed task
    solo_cycles: int | None = None  # solo execution time, for response estimates

    def __post_init__(self):
        if self.max_prior_reads < 0 or self.drain_batch < 0 or self.miss_count < 0:
            raise AnalysisError("counts must be non-negative")
        if self.num_cores < 1:
            raise AnalysisError("need at least one core")


@dataclass(frozen=True)
class DelayBound:
    variant: str                 # "full" | "no_write_queue"
    read_queue_cycles: int
    write_drain_cycles: int
    per_request_cycles: int
    per_request_ns: float
    total_cycles: int


@dataclass(frozen=True)
class KimParams:
    """Per-command inter-bank penalties of the one-request-per-core baseline.

    The defaults are the natural constraint durations for each command
    class: one command-bus conflict cycle for PRE, the activate-to-activate
    gap for ACT, and a write-to-read turnaround for RD/WR. All configurable.
    """

    inter_pre: int = 1
    inter_act: int = 4
    inter_rw: int = 14

    def __post_init__(self):
        if min(self.inter_pre, self.inter_act, self.inter_rw) < 0:
            raise AnalysisError("baseline penalties must be non-negative")

    @classmethod
    def from_timing(cls, timing: TimingParams) -> "KimParams":
        return cls(
            inter_pre=1,
            inter_act=timing.trrd,
            inter_rw=timing.wl + timing.tburst + timing.twtr,
        )


@dataclass(frozen=True)
class KimBound:
    per_request_cycles: int
    total_cycles: int


def read_queue_delay(inputs: AnalysisInputs) -> int:
    """Delay from prior reads: each pipelined read holds the bus for a burst."""
    return inputs.max_prior_reads * inputs.timing.tburst


def write_drain_delay(inputs: AnalysisInputs) -> int:
    """Delay from one write-drain batch: every drained write is assumed to be
    a row miss in one bank (a full row cycle each) plus one bus turnaround."""
    return inputs.drain_batch * inputs.timing.trc + inputs.timing.twtr


def per_request_bound(inputs: AnalysisInputs, variant: str = "full") -> DelayBound:
    """Worst-case inter-bank delay for one read of the analyzed core."""
    if variant not in ("full", "no_write_queue"):
        raise AnalysisError(f"unknown bound variant: {variant}")
    lrq = read_queue_delay(inputs)
    lwq = write_drain_delay(inputs) if variant == "full" else 0
    per_request = lrq + lwq
    return DelayBound(
        variant=variant,
        read_queue_cycles=lrq,
        write_drain_cycles=lwq,
        per_request_cycles=per_request,
        per_request_ns=inputs.timing.ns(per_request),
        total_cycles=inputs.miss_count * per_request,
    )


@dataclass(frozen=True)
class TotalDelay:
    total_cycles: int
    response_cycles: int | None
    slowdown: float | None


def total_delay(inputs: AnalysisInputs, bound: DelayBound) -> TotalDelay:
    """Task-level delay: every miss pays the per-request bound once."""
    total = inputs.miss_count * bound.per_request_cycles
    if inputs.solo_cycles:
        response = inputs.solo_cycles + total
        return TotalDelay(total, response, response / inputs.solo_cycles)
    return TotalDelay(total, None, None)


def kim_baseline_bound(inputs: AnalysisInputs,
                       params: KimParams | None = None) -> KimBound:
    """One-request-per-core baseline: each competing core contributes one
    PRE + ACT + RD/WR penalty, regardless of queued request counts."""
    params = params or KimParams()
    per_request = (inputs.num_cores - 1) * (
        params.inter_pre + params.inter_act + params.inter_rw
    )
    return KimBound(per_request, inputs.miss_count * per_request)


@dataclass
class BoundReport:
    analyzed_core: int
    bound_cycles: int
    read_count: int
    max_delay: int
    mean_delay: float
    margin: float
    violations: list[tuple[int, int]] = field(default_factory=list)  # (id, delay)

    @property
    def violation_count(self) -> int:
        return len(self.violations)


def bound_check(trace: ScheduleTrace, bound, analyzed_core: int) -> BoundReport:
    """Compare every completed read of the analyzed core against a bound.

    ``bound`` may be a DelayBound, KimBound, or a plain cycle count. Each
    measured delay is the contended latency minus the request's solo service
    time against the same own-bank state.
    """
    bound_cycles = getattr(bound, "per_request_cycles", bound)
    delays = []
    for rec in trace.completions:
        if rec.core != analyzed_core or rec.is_write:
            continue
        info = trace.requests[rec.request_id]
        baseline = solo_service(trace.timing, False, info.hit_class)
        delays.append((rec.request_id, request_delay(trace, rec.request_id, baseline)))
    if not delays:
        raise AnalysisError(f"core {analyzed_core} completed no reads in this trace")
    values = [d for _, d in delays]
    max_delay = max(values)
    margin = bound_cycles / max_delay if max_delay > 0 else math.inf
    return BoundReport(
        analyzed_core=analyzed_core,
        bound_cycles=bound_cycles,
        read_count=len(values),
        max_delay=max_delay,
        mean_delay=sum(values) / len(values),
        margin=margin,
        violations=[(rid, d) for rid, d in delays if d > bound_cycles],
    )


def bound_rows(inputs: AnalysisInputs,
               kim_params: KimParams | None = None) -> list[tuple[str, float, float]]:
    """Rows (quantity, cycles, ns) for the bound report CSV."""
    timing = inputs.timing
    full = per_request_bound(inputs, "full")
    nowq = per_request_bound(inputs, "no_write_queue")
    kim = kim_baseline_bound(inputs, kim_params)
    rows = [
        ("read_queue_delay", full.read_queue_cycles, timing.ns(full.read_queue_cycles)),
        ("write_drain_delay", full.write_drain_cycles, timing.ns(full.write_drain_cycles)),
        ("per_request_full", full.per_request_cycles, full.per_request_ns),
        ("per_request_no_write_queue", nowq.per_request_cycles, nowq.per_request_ns),
        ("per_request_baseline", kim.per_request_cycles, timing.ns(kim.per_request_cycles)),
    ]
    if inputs.miss_count:
        rows += [
            ("total_full", full.total_cycles, timing.ns(full.total_cycles)),
            ("total_no_write_queue", nowq.total_cycles, timing.ns(nowq.total_cycles)),
            ("total_baseline", kim.total_cycles, timing.ns(kim.total_cycles)),
        ]
    return rows


def format_bound_table(inputs: AnalysisInputs,
                       kim_params: KimParams | None = None) -> str:
    """Aligned text table of per-request and task-level bounds."""
    full = per_request_bound(inputs, "full")
    nowq = per_request_bound(inputs, "no_write_queue")
    kim = kim_baseline_bound(inputs, kim_params)
    rows = [
        ("full", full.per_request_cycles, full.total_cycles),
        ("no_write_queue", nowq.per_request_cycles, nowq.total_cycles),
        ("one_request_baseline", kim.per_request_cycles, kim.total_cycles),
    ]
    lines = [f"{'bound':<22}{'per-request':>12}{'ns':>12}{'total':>12}{'normalized':>12}"]
    for name, per_request, total in rows:
        if inputs.solo_cycles:
            slowdown = f"{(inputs.solo_cycles + total) / inputs.solo_cycles:.2f}"
        else:
            slowdown = "-"
        lines.append(
            f"{name:<22}{per_request:>12}{inputs.timing.ns(per_request):>12.2f}"
            f"{total:>12}{slowdown:>12}"
        )
    return "\n".join(lines) + "\n"


def default_inputs(miss_count: int = 0, solo_cycles: int | None = None,
                   timing: TimingParams | None = None) -> AnalysisInputs:
    return AnalysisInputs(
        timing=timing or make_timing(),
        miss_count=miss_count,
        solo_cycles=solo_cycles,
    )
