"""FR-FCFS memory controller: separate read/write queues, read priority,
batched write draining, one command per cycle on the shared command bus.

Priority among ready commands: column (CAS) commands beat row (PRE/ACT)
commands, then the prioritized bank if one is configured, then older
arrival order, then lower bank index.
"""

from __future__ import annotations

import enum
import functools
import heapq
from dataclasses import dataclass

from . import device
from .device import CommandKind, DataBurst, TimingParams


class SchedulerError(RuntimeError):
    """Internal scheduling fault (simulator bug, not back-pressure)."""


class SimulationStalled(SchedulerError):
    """No command issued for a whole stall window despite pending work."""


class Mode(enum.Enum):
    READ = "read"
    WRITE_DRAIN = "write_drain"


@dataclass
class SchedulerConfig:
    read_cap: int = 32
    write_cap: int = 16
    drain_batch: int = 4
    prioritized_bank: int | None = None
    partitioning: bool = True
    num_banks: int = 16
    stall_window: int = 10_000

    def __post_init__(self):
        if self.drain_batch > self.write_cap:
            raise ValueError(
                f"drain_batch ({self.drain_batch}) cannot exceed write_cap "
                f"({self.write_cap})"
            )


@dataclass
class MemRequest:
    request_id: int
    core: int
    is_write: bool
    bank: int
    row: int
    arrival_cycle: int = 0
    arrival_order: int = -1  # assigned by the controller on accept


@dataclass(frozen=True)
class IssueRecord:
    cycle: int
    kind: CommandKind
    bank: int
    row: int
    core: int
    request_id: int


@dataclass(frozen=True)
class CompletionRecord:
    request_id: int
    arrival_cycle: int
    completion_cycle: int
    core: int
    bank: int
    is_write: bool


@dataclass(frozen=True)
class ModeSwitch:
    cycle: int
    mode: Mode
    write_queue_len: int
    reads_pending: bool


@dataclass(frozen=True)
class RequestInfo:
    request_id: int
    core: int
    bank: int
    row: int
    is_write: bool
    arrival_cycle: int
    arrival_order: int
    hit_class: str  # "hit" | "closed" | "conflict" at accept time


class ScheduleTrace:
    """Cycle-stamped log of issued commands, bursts, and completions."""

    CSV_HEADER = "cycle,event,kind,bank,row,core,request_id"

    def __init__(self, timing: TimingParams, config: SchedulerConfig,
                 open_rows: dict[int, int], initial_mode: Mode):
        self.timing = timing
        self.config = config
        self.initial_open_rows = dict(open_rows)
        self.initial_mode = initial_mode
        self.issues: list[IssueRecord] = []
        self.completions: list[CompletionRecord] = []
        self.bursts: list[DataBurst] = []
        self.mode_switches: list[ModeSwitch] = []
        self.requests: dict[int, RequestInfo] = {}
        self.total_cycles = 0
        self.quiescent = False
        self._completed: dict[int, CompletionRecord] = {}

    def add_completion(self, rec: CompletionRecord) -> None:
        self.completions.append(rec)
        self._completed[rec.request_id] = rec

    def completion(self, request_id: int) -> CompletionRecord:
        try:
            return self._completed[request_id]
        except KeyError:
            raise KeyError(f"request {request_id} has no completion in trace")

    def issues_for(self, request_id: int) -> list[IssueRecord]:
        return [r for r in self.issues if r.request_id == request_id]

    def to_csv(self) -> str:
        rows = []
        for rec in self.issues:
            rows.append((rec.cycle, 0, rec.request_id,
                         f"{rec.cycle},issue,{rec.kind.value},{rec.bank},"
                         f"{rec.row},{rec.core},{rec.request_id}"))
        for rec in self.completions:
            rows.append((rec.completion_cycle, 1, rec.request_id,
                         f"{rec.completion_cycle},complete,,{rec.bank},,"
                         f"{rec.core},{rec.request_id}"))
        rows.sort(key=lambda r: r[:3])
        return "\n".join([self.CSV_HEADER] + [r[3] for r in rows]) + "\n"

    def per_request_delay(self, request_id: int) -> int:
        info = self.requests[request_id]
        baseline = solo_service(self.timing, info.is_write, info.hit_class)
        return request_delay(self, request_id, baseline)

    def stats_text(self) -> str:
        lines = [
            f"total_cycles {self.total_cycles}",
            f"mode_switches {len(self.mode_switches)}",
            f"requests_enqueued {len(self.requests)}",
            f"requests_completed {len(self.completions)}",
        ]
        cores = sorted({info.core for info in self.requests.values()})
        by_core: dict[int, list[int]] = {c: [] for c in cores}
        for rec in self.completions:
            by_core[rec.core].append(self.per_request_delay(rec.request_id))
        for core in cores:
            delays = by_core[core]
            lines.append(f"core{core}_completions {len(delays)}")
            if delays:
                mean = sum(delays) / len(delays)
                lines.append(f"core{core}_max_delay {max(delays)}")
                lines.append(f"core{core}_mean_delay {mean:.3f}")
        return "\n".join(lines) + "\n"


def priority_key(kind: CommandKind, bank: int, arrival_order: int,
                 prioritized_bank: int | None) -> tuple:
    """FR-FCFS ordering key; smaller wins."""
    cas_rank = 0 if kind in device.CAS_KINDS else 1
    bank_rank = 0 if prioritized_bank is None or bank == prioritized_bank else 1
    return (cas_rank, bank_rank, arrival_order, bank)


class Controller:
    """Deterministic single-channel controller stepped one cycle at a time."""

    def __init__(self, timing: TimingParams, config: SchedulerConfig | None = None,
                 open_rows: dict[int, int] | None = None,
                 initial_mode: Mode = Mode.READ, validate: bool = True):
        self.timing = timing
        self.config = config or SchedulerConfig()
        open_rows = open_rows or {}
        for bank in open_rows:
            if not 0 <= bank < self.config.num_banks:
                raise ValueError(f"open row for unknown bank {bank}")
        self.banks = [
            device.BankState(open_row=open_rows.get(i))
            for i in range(self.config.num_banks)
        ]
        self.chan = device.ChannelState()
        self.read_queue: list[MemRequest] = []
        self.write_queue: list[MemRequest] = []
        self.mode = initial_mode
        self.drained_in_batch = 0
        self.now = 0
        self.validate = validate
        self._next_order = 0
        self._inflight: list[tuple[int, int, MemRequest]] = []  # (end, id, req)
        self.trace = ScheduleTrace(timing, self.config, open_rows, initial_mode)

    # -- queue admission ----------------------------------------------------

    def enqueue(self, req: MemRequest) -> bool:
        """Accept a request, or return False as back-pressure when full."""
        queue, cap = (
            (self.write_queue, self.config.write_cap)
            if req.is_write
            else (self.read_queue, self.config.read_cap)
        )
        if len(queue) >= cap:
            return False
        if not 0 <= req.bank < self.config.num_banks:
            raise SchedulerError(f"request {req.request_id} targets unknown bank {req.bank}")
        req.arrival_order = self._next_order
        self._next_order += 1
        queue.append(req)
        bank = self.banks[req.bank]
        if bank.open_row == req.row:
            hit_class = "hit"
        elif bank.open_row is None:
            hit_class = "closed"
        else:
            hit_class = "conflict"
        self.trace.requests[req.request_id] = RequestInfo(
            req.request_id, req.core, req.bank, req.row, req.is_write,
            req.arrival_cycle, req.arrival_order, hit_class,
        )
        return True

    # -- scheduling ---------------------------------------------------------

    def update_mode(self) -> None:
        if self.mode is Mode.READ:
            if self.write_queue and (
                len(self.write_queue) >= self.config.write_cap or not self.read_queue
            ):
                self._switch_mode(Mode.WRITE_DRAIN)
        else:
            if not self.write_queue or (
                self.drained_in_batch >= self.config.drain_batch and self.read_queue
            ):
                self._switch_mode(Mode.READ)

    def _switch_mode(self, mode: Mode) -> None:
        self.mode = mode
        if mode is Mode.WRITE_DRAIN:
            self.drained_in_batch = 0
        self.trace.mode_switches.append(
            ModeSwitch(self.now, mode, len(self.write_queue), bool(self.read_queue))
        )

    def _next_kind(self, req: MemRequest) -> CommandKind:
        open_row = self.banks[req.bank].open_row
        if open_row == req.row:
            return CommandKind.WR if req.is_write else CommandKind.RD
        if open_row is None:
            return CommandKind.ACT
        return CommandKind.PRE

    def candidate_queue(self) -> list[MemRequest]:
        return self.read_queue if self.mode is Mode.READ else self.write_queue

    def select_command(self) -> tuple[device.DramCommand, MemRequest] | None:
        """Highest-priority ready command among the active queue, or None."""
        best = None
        best_key = None
        prio = self.config.prioritized_bank
        for req in self.candidate_queue():
            kind = self._next_kind(req)
            cmd = device.DramCommand(
                kind, req.bank, req.row, req.request_id, req.core, req.arrival_order
            )
            if not device.command_ready(
                cmd, self.banks[req.bank], self.chan, self.timing, self.now
            ):
                continue
            key = priority_key(kind, req.bank, req.arrival_order, prio)
            if best_key is None or key < best_key:
                best, best_key = (cmd, req), key
        return best

    def step(self) -> tuple[IssueRecord | None, list[CompletionRecord]]:
        """Advance one cycle: update mode, issue at most one command, and
        collect completions whose data burst ends this cycle."""
        self.update_mode()
        chosen = self.select_command()
        if self.validate:
            from . import checks

            checks.verify_selection(self, chosen)
        issued = None
        if chosen is not None:
            cmd, req = chosen
            burst = device.apply_command(
                cmd, self.banks[cmd.bank], self.chan, self.timing, self.now
            )
            issued = IssueRecord(self.now, cmd.kind, cmd.bank, cmd.row,
                                 cmd.core, cmd.request_id)
            self.trace.issues.append(issued)
            if burst is not None:
                self.trace.bursts.append(burst)
                self.candidate_queue().remove(req)
                heapq.heappush(self._inflight, (burst.end, req.request_id, req))
                if cmd.kind is CommandKind.WR:
                    self.drained_in_batch += 1
        completed = []
        while self._inflight and self._inflight[0][0] == self.now:
            end, _, req = heapq.heappop(self._inflight)
            rec = CompletionRecord(req.request_id, req.arrival_cycle, end,
                                   req.core, req.bank, req.is_write)
            self.trace.add_completion(rec)
            completed.append(rec)
        self.now += 1
        return issued, completed

    def idle(self) -> bool:
        return not self.read_queue and not self.write_queue and not self._inflight

    def run(self, workload=None, horizon: int = 10_000, stop=None) -> ScheduleTrace:
        """Step until the horizon, stopping early once every source of work is
        exhausted and the controller is quiet (only if there were sources).

        ``stop``: optional callable(controller) checked each cycle.
        """
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        last_progress = 0
        while self.now < horizon:
            cycle = self.now
            if workload is not None:
                workload.poll(cycle, self)
            issued, completed = self.step()
            if workload is not None:
                workload.notify(cycle, completed, self)
            if issued is not None:
                last_progress = cycle
            elif not self.idle() and cycle - last_progress > self.config.stall_window:
                raise SimulationStalled(
                    f"no command issued since cycle {last_progress} "
                    f"(reads={len(self.read_queue)}, writes={len(self.write_queue)}, "
                    f"mode={self.mode.value})"
                )
            if stop is not None and stop(self):
                break
            if (
                workload is not None
                and workload.has_sources
                and workload.exhausted()
                and self.idle()
            ):
                break
        self.trace.total_cycles = self.now
        self.trace.quiescent = self.idle() and (
            workload is None or workload.exhausted()
        )
        return self.trace


def request_delay(trace: ScheduleTrace, request_id: int, baseline_service: int) -> int:
    """Interference delay: contended latency minus the solo service time."""
    rec = trace.completion(request_id)
    return (rec.completion_cycle - rec.arrival_cycle) - baseline_service


@functools.lru_cache(maxsize=None)
def solo_service(timing: TimingParams, is_write: bool, hit_class: str) -> int:
    """Service latency of a lone request against a bank in the given state.

    Computed by simulation of a one-request scenario, not by formula, so it
    stays an independent reference for delay measurements.
    """
    row = 1
    open_rows = {"hit": {0: row}, "closed": {}, "conflict": {0: row + 1}}[hit_class]
    cfg = SchedulerConfig(num_banks=1, partitioning=False)
    ctrl = Controller(timing, cfg, open_rows=open_rows, validate=False)
    req = MemRequest(0, 0, is_write, 0, row, 0)
    if not ctrl.enqueue(req):
        raise SchedulerError("solo request rejected")
    guard = 10_000
    while not ctrl.idle():
        ctrl.step()
        guard -= 1
        if guard == 0:
            raise SimulationStalled("solo service simulation did not finish")
    return ctrl.trace.completion(0).completion_cycle
