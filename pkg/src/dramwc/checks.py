"""Always-on trace validators: scheduling soundness, mode exclusion, drain
batching, data-bus exclusivity, activate-window limits, and conservation.
"""

from __future__ import annotations

from . import device
from .device import CommandKind
from .scheduler import Mode, ScheduleTrace, priority_key


class TraceInvariantError(AssertionError):
    pass


def verify_selection(controller, chosen) -> None:
    """Re-derive the candidate set from the open-page decomposition and check
    the controller's pick against the FR-FCFS order (and work conservation).

    Runs every cycle while ``controller.validate`` is set; the derivation here
    goes through decompose_request rather than the controller's fast path.
    """
    if len(controller.read_queue) > controller.config.read_cap:
        raise TraceInvariantError("read queue exceeds its capacity")
    if len(controller.write_queue) > controller.config.write_cap:
        raise TraceInvariantError("write queue exceeds its capacity")
    prio = controller.config.prioritized_bank
    best_key = None
    best_cmd = None
    for req in controller.candidate_queue():
        head = device.decompose_request(req, controller.banks[req.bank])[0]
        if not device.command_ready(head, controller.banks[req.bank],
                                    controller.chan, controller.timing,
                                    controller.now):
            continue
        key = priority_key(head.kind, head.bank, head.arrival_order, prio)
        if best_key is None or key < best_key:
            best_key, best_cmd = key, head
    if chosen is None:
        if best_cmd is not None:
            raise TraceInvariantError(
                f"cycle {controller.now}: idle although {best_cmd} is ready"
            )
        return
    cmd = chosen[0]
    if best_cmd is None:
        raise TraceInvariantError(
            f"cycle {controller.now}: issued {cmd} but no candidate is ready"
        )
    chosen_key = priority_key(cmd.kind, cmd.bank, cmd.arrival_order, prio)
    if best_key < chosen_key:
        raise TraceInvariantError(
            f"cycle {controller.now}: issued {cmd} over higher-priority {best_cmd}"
        )


def _mode_at(trace: ScheduleTrace):
    """Yield (cycle_start, mode) intervals from the recorded switches."""
    events = [(0, trace.initial_mode)] + [
        (s.cycle, s.mode) for s in trace.mode_switches
    ]
    return events


def _mode_for_cycle(events, cycle: int) -> Mode:
    mode = events[0][1]
    for start, new_mode in events:
        if start > cycle:
            break
        mode = new_mode
    return mode


def check_command_bus(trace: ScheduleTrace) -> None:
    cycles = [rec.cycle for rec in trace.issues]
    if len(cycles) != len(set(cycles)):
        raise TraceInvariantError("two commands issued in the same cycle")


def check_burst_overlap(trace: ScheduleTrace) -> None:
    bursts = sorted(trace.bursts, key=lambda b: b.start)
    for prev, cur in zip(bursts, bursts[1:]):
        if cur.start < prev.end:
            raise TraceInvariantError(
                f"data bursts overlap: [{prev.start},{prev.end}) and "
                f"[{cur.start},{cur.end})"
            )


def check_burst_timing(trace: ScheduleTrace) -> None:
    """Every CAS issue must have a burst at the CAS latency, and every
    completion must coincide with its burst end."""
    timing = trace.timing
    bursts = {b.request_id: b for b in trace.bursts}
    for rec in trace.issues:
        if rec.kind is CommandKind.RD:
            expected = (rec.cycle + timing.cl, rec.cycle + timing.cl + timing.tburst)
        elif rec.kind is CommandKind.WR:
            expected = (rec.cycle + timing.wl, rec.cycle + timing.wl + timing.tburst)
        else:
            continue
        burst = bursts.get(rec.request_id)
        if burst is None or (burst.start, burst.end) != expected:
            raise TraceInvariantError(
                f"request {rec.request_id}: burst does not match its CAS issue"
            )
    for rec in trace.completions:
        burst = bursts.get(rec.request_id)
        if burst is None or rec.completion_cycle != burst.end:
            raise TraceInvariantError(
                f"request {rec.request_id}: completion is not at burst end"
            )


def check_tfaw(trace: ScheduleTrace) -> None:
    acts = sorted(rec.cycle for rec in trace.issues if rec.kind is CommandKind.ACT)
    window = trace.timing.tfaw
    for i in range(4, len(acts)):
        if acts[i] - acts[i - 4] < window:
            raise TraceInvariantError(
                f"five activates within {window} cycles ending at {acts[i]}"
            )


def check_mode_exclusion(trace: ScheduleTrace) -> None:
    events = _mode_at(trace)
    for rec in trace.issues:
        if rec.kind not in device.CAS_KINDS:
            continue
        mode = _mode_for_cycle(events, rec.cycle)
        if rec.kind is CommandKind.WR and mode is not Mode.WRITE_DRAIN:
            raise TraceInvariantError(f"WR issued outside a drain at {rec.cycle}")
        if rec.kind is CommandKind.RD and mode is not Mode.READ:
            raise TraceInvariantError(f"RD issued during a drain at {rec.cycle}")


def check_drain_batching(trace: ScheduleTrace) -> None:
    """Each completed drain must service at least min(batch, queued) writes."""
    batch = trace.config.drain_batch
    events = _mode_at(trace)
    for i, (start, mode) in enumerate(events):
        if mode is not Mode.WRITE_DRAIN:
            continue
        if i + 1 >= len(events):
            continue  # drain still open at end of trace
        end = events[i + 1][0]
        if i > 0:
            queued = trace.mode_switches[i - 1].write_queue_len
        else:
            queued = sum(
                1 for r in trace.requests.values()
                if r.is_write and r.arrival_cycle == 0
            )
        drained = sum(
            1 for rec in trace.issues
            if rec.kind is CommandKind.WR and start <= rec.cycle < end
        )
        if drained < min(batch, queued):
            raise TraceInvariantError(
                f"drain starting at {start} serviced {drained} writes, "
                f"expected at least {min(batch, queued)}"
            )


def check_conservation(trace: ScheduleTrace) -> None:
    completed = {rec.request_id for rec in trace.completions}
    enqueued = set(trace.requests)
    if len(completed) != len(trace.completions):
        raise TraceInvariantError("a request completed twice")
    if trace.quiescent:
        if completed != enqueued:
            raise TraceInvariantError(
                f"{len(enqueued - completed)} accepted requests never completed"
            )
    elif not completed <= enqueued:
        raise TraceInvariantError("completion for a request that never enqueued")


def validate_trace(trace: ScheduleTrace) -> None:
    """Run every offline invariant check; raises TraceInvariantError."""
    check_command_bus(trace)
    check_burst_overlap(trace)
    check_burst_timing(trace)
    check_tfaw(trace)
    check_mode_exclusion(trace)
    check_drain_batching(trace)
    check_conservation(trace)
