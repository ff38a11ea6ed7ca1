"""Cores, the shared MSHR file, synthetic request generators, and scenario
construction (including staged worst-case initial conditions).
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, replace

from .device import make_timing
from .scheduler import Controller, MemRequest, Mode, SchedulerConfig


class ScenarioError(ValueError):
    """Malformed or cap-violating scenario."""


# ---------------------------------------------------------------------------
# MSHR file
# ---------------------------------------------------------------------------

@dataclass
class MshrConfig:
    global_read_cap: int = 32
    global_write_cap: int = 16
    per_core_read_cap: int = 10
    reserve_per_core: int = 0  # guaranteed read entries per core when > 0


class MshrFile:
    """Shared miss-status registers bounding outstanding requests.

    Reads are capped per core and globally; writes only globally. With
    reservations enabled each core always has ``reserve_per_core`` read
    entries available regardless of the other cores' demand.
    """

    def __init__(self, config: MshrConfig | None = None, num_cores: int = 4):
        self.config = config or MshrConfig()
        self.num_cores = num_cores
        cfg = self.config
        if cfg.reserve_per_core * num_cores > cfg.global_read_cap:
            raise ScenarioError(
                f"reservations ({cfg.reserve_per_core} x {num_cores}) exceed the "
                f"global read capacity ({cfg.global_read_cap})"
            )
        self.reads = [0] * num_cores
        self.writes = [0] * num_cores
        self.writes_total = 0

    def outstanding_reads(self, core: int) -> int:
        return self.reads[core]

    def idle(self) -> bool:
        return sum(self.reads) == 0 and self.writes_total == 0

    def acquire(self, core: int, is_write: bool) -> bool:
        cfg = self.config
        if is_write:
            if self.writes_total >= cfg.global_write_cap:
                return False
            self.writes[core] += 1
            self.writes_total += 1
            return True
        if self.reads[core] >= cfg.per_core_read_cap:
            return False
        reserve = cfg.reserve_per_core
        if reserve:
            if self.reads[core] >= reserve:
                shared = cfg.global_read_cap - reserve * self.num_cores
                shared_used = sum(max(0, r - reserve) for r in self.reads)
                if shared_used >= shared:
                    return False
        elif sum(self.reads) >= cfg.global_read_cap:
            return False
        self.reads[core] += 1
        return True

    def release(self, core: int, is_write: bool) -> None:
        if is_write:
            if self.writes[core] == 0:
                raise ScenarioError(f"write release without acquire on core {core}")
            self.writes[core] -= 1
            self.writes_total -= 1
        else:
            if self.reads[core] == 0:
                raise ScenarioError(f"read release without acquire on core {core}")
            self.reads[core] -= 1


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

class GeneratorKind(enum.Enum):
    LATENCY = "latency"
    BANDWIDTH_READ = "bandwidth_read"
    BANDWIDTH_WRITE = "bandwidth_write"
    STREAM = "stream"


@dataclass
class GeneratorSpec:
    kind: GeneratorKind
    core: int
    bank: int
    row_policy: str = "sequential"  # "sequential" (row hits) or "random"
    budget: int | None = None       # total requests; None = horizon-limited
    gap: int = 0                    # compute cycles between dependent reads
    start: int = 0                  # first cycle the generator may emit
    stream_reads: int = 2           # reads per stream pattern period
    stream_writes: int = 1          # writes per stream pattern period


class _Generator:
    def __init__(self, spec: GeneratorSpec, base_row: int, num_rows: int,
                 rng: random.Random):
        self.spec = spec
        self.base_row = base_row
        self.num_rows = num_rows
        self.rng = rng
        self.emitted = 0
        self.ids: set[int] = set()

    def _row(self) -> int:
        if self.spec.row_policy == "random":
            return self.rng.randrange(self.num_rows)
        return self.base_row

    def budget_left(self, need: int = 1) -> bool:
        budget = self.spec.budget
        return budget is None or self.emitted + need <= budget

    def done(self) -> bool:
        return self.spec.budget is not None and self.emitted >= self.spec.budget

    def _track(self, rid: int | None) -> bool:
        if rid is None:
            return False
        self.ids.add(rid)
        self.emitted += 1
        return True

    def emit(self, now: int, submit) -> None:
        raise NotImplementedError

    def on_completion(self, now: int, request_id: int, is_write: bool, submit) -> None:
        pass


class LatencyGenerator(_Generator):
    """Pointer-chase analog: a single outstanding dependent read at a time."""

    def __init__(self, *args):
        super().__init__(*args)
        self.in_flight = False
        self.ready_at = self.spec.start

    def emit(self, now, submit):
        if self.in_flight or now < self.ready_at or not self.budget_left():
            return
        if self._track(submit(self._row(), False)):
            self.in_flight = True

    def on_completion(self, now, request_id, is_write, submit):
        # The next address depends on the returned data, so the follow-up
        # read cannot leave before the next cycle plus the compute gap.
        self.in_flight = False
        self.ready_at = now + 1 + self.spec.gap


class BandwidthReadGenerator(_Generator):
    """Streaming reader that keeps as many reads outstanding as caps allow."""

    def emit(self, now, submit):
        while self.budget_left() and self._track(submit(self._row(), False)):
            pass

    def on_completion(self, now, request_id, is_write, submit):
        if self.budget_left():
            self._track(submit(self._row(), False))


class BandwidthWriteGenerator(_Generator):
    """Write-heavy streamer: every logical miss enqueues an allocating read
    plus a write-back, so reads and writes come in 1:1 pairs."""

    def __init__(self, *args):
        super().__init__(*args)
        self.write_debt: list[int] = []  # rows whose write-back is still owed

    def _flush_debt(self, submit):
        while self.write_debt:
            if not self._track(submit(self.write_debt[0], True)):
                return
            self.write_debt.pop(0)

    def _emit_pair(self, submit) -> bool:
        if not self.budget_left(2):
            return False
        row = self._row()
        if not self._track(submit(row, False)):
            return False
        if not self._track(submit(row, True)):
            self.write_debt.append(row)
        return True

    def emit(self, now, submit):
        self._flush_debt(submit)
        while self._emit_pair(submit):
            pass

    def on_completion(self, now, request_id, is_write, submit):
        self._flush_debt(submit)
        if not is_write:
            self._emit_pair(submit)


class StreamGenerator(_Generator):
    """Mixed reader/writer following a fixed read:write pattern."""

    def __init__(self, *args):
        super().__init__(*args)
        spec = self.spec
        self.pattern = [False] * spec.stream_reads + [True] * spec.stream_writes
        self.pos = 0

    def _emit_one(self, submit) -> bool:
        if not self.budget_left():
            return False
        if not self._track(submit(self._row(), self.pattern[self.pos])):
            return False
        self.pos = (self.pos + 1) % len(self.pattern)
        return True

    def emit(self, now, submit):
        while self._emit_one(submit):
            pass

    def on_completion(self, now, request_id, is_write, submit):
        self._emit_one(submit)


_GENERATOR_CLASSES = {
    GeneratorKind.LATENCY: LatencyGenerator,
    GeneratorKind.BANDWIDTH_READ: BandwidthReadGenerator,
    GeneratorKind.BANDWIDTH_WRITE: BandwidthWriteGenerator,
    GeneratorKind.STREAM: StreamGenerator,
}


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

@dataclass
class StagedRequest:
    is_write: bool
    core: int
    bank: int
    row: int


@dataclass
class ScenarioSpec:
    label: str = "scenario"
    timing: dict = field(default_factory=dict)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    mshr: MshrConfig = field(default_factory=MshrConfig)
    open_rows: dict[int, int] = field(default_factory=dict)
    generators: list[GeneratorSpec] = field(default_factory=list)
    prestage: list[StagedRequest] = field(default_factory=list)
    initial_mode: Mode = Mode.READ
    horizon: int = 20_000
    analyzed_core: int | None = None
    num_cores: int = 4
    num_rows: int = 4096
    seed: int = 0


class Workload:
    """Drives generators against a controller and owns the MSHR file.

    Completions are handed back to the owning generator in the same cycle, so
    a saturating core re-acquires its freed MSHR entry before any other core
    can poll it (out-of-order cores re-issue immediately).
    """

    def __init__(self, spec: ScenarioSpec, mshr: MshrFile, track_mshr: bool = False):
        self.spec = spec
        self.mshr = mshr
        self.core_bank: dict[int, int] = {}
        self.generators: list[_Generator] = []
        self.gen_by_core: dict[int, _Generator] = {}
        for gspec in sorted(spec.generators, key=lambda g: g.core):
            if gspec.core in self.gen_by_core:
                raise ScenarioError(f"core {gspec.core} has two generators")
            self._claim_bank(gspec.core, gspec.bank)
            base_row = spec.open_rows.get(gspec.bank, 0)
            rng = random.Random((spec.seed << 8) ^ (gspec.core + 1))
            gen = _GENERATOR_CLASSES[gspec.kind](gspec, base_row, spec.num_rows, rng)
            self.generators.append(gen)
            self.gen_by_core[gspec.core] = gen
        for staged in spec.prestage:
            self._claim_bank(staged.core, staged.bank)
        self._next_id = 0
        self.has_sources = bool(spec.generators or spec.prestage)
        self.track_mshr = track_mshr
        self.mshr_history: list[tuple[int, tuple[int, ...]]] = []

    def _claim_bank(self, core: int, bank: int) -> None:
        owned = self.core_bank.setdefault(core, bank)
        if owned != bank:
            raise ScenarioError(
                f"core {core} uses banks {owned} and {bank} but partitioning "
                f"assigns one private bank per core"
            )

    def stage(self, controller: Controller) -> None:
        """Enqueue the pre-staged requests (arrival cycle 0, listed order)."""
        for staged in self.spec.prestage:
            rid = self._submit(controller, 0, staged.core, staged.bank,
                               staged.row, staged.is_write)
            if rid is None:
                raise ScenarioError(
                    f"pre-staged request for core {staged.core} exceeds queue or "
                    f"MSHR capacity"
                )

    def _submit(self, controller: Controller, now: int, core: int, bank: int,
                row: int, is_write: bool) -> int | None:
        if controller.config.partitioning and self.core_bank.get(core) != bank:
            raise ScenarioError(
                f"core {core} emitted a request for bank {bank}, outside its "
                f"private bank {self.core_bank.get(core)}"
            )
        if not self.mshr.acquire(core, is_write):
            return None
        rid = self._next_id
        req = MemRequest(rid, core, is_write, bank, row, arrival_cycle=now)
        if not controller.enqueue(req):
            self.mshr.release(core, is_write)
            return None
        self._next_id += 1
        return rid

    def _submitter(self, controller: Controller, now: int, core: int, bank: int):
        return lambda row, is_write: self._submit(controller, now, core, bank,
                                                  row, is_write)

    def poll(self, now: int, controller: Controller) -> None:
        for gen in self.generators:
            if now < gen.spec.start or gen.done():
                continue
            gen.emit(now, self._submitter(controller, now, gen.spec.core,
                                          gen.spec.bank))

    def notify(self, now: int, completions, controller: Controller) -> None:
        for rec in completions:
            self.mshr.release(rec.core, rec.is_write)
            gen = self.gen_by_core.get(rec.core)
            if gen is not None and rec.request_id in gen.ids:
                gen.on_completion(now, rec.request_id, rec.is_write,
                                  self._submitter(controller, now, gen.spec.core,
                                                  gen.spec.bank))
        if self.track_mshr:
            self.mshr_history.append((now, tuple(self.mshr.reads)))

    def exhausted(self) -> bool:
        return all(g.done() for g in self.generators) and self.mshr.idle()


def build_simulation(spec: ScenarioSpec, track_mshr: bool = False,
                     validate: bool = True) -> tuple[Controller, Workload]:
    """Materialize a scenario into a ready-to-run controller and workload."""
    timing = make_timing(spec.timing)
    controller = Controller(timing, spec.scheduler, open_rows=spec.open_rows,
                            initial_mode=spec.initial_mode, validate=validate)
    mshr = MshrFile(spec.mshr, num_cores=spec.num_cores)
    workload = Workload(spec, mshr, track_mshr=track_mshr)
    workload.stage(controller)
    return controller, workload


def run_scenario(spec: ScenarioSpec, track_mshr: bool = False, stop=None):
    """Convenience wrapper: build, run to the scenario horizon, return trace
    (and the workload, whose MSHR history may have been recorded)."""
    controller, workload = build_simulation(spec, track_mshr=track_mshr)
    trace = controller.run(workload, spec.horizon, stop=stop)
    return trace, workload


# ---------------------------------------------------------------------------
# Staged worst-case scenarios
# ---------------------------------------------------------------------------

def build_adversarial(analyzed_core: int = 0,
                      interferer_kind: GeneratorKind = GeneratorKind.BANDWIDTH_WRITE,
                      seed: int = 0,
                      n_interferers: int = 3,
                      max_prior_reads: int = 30,
                      drain_batch: int = 4,
                      timing: dict | None = None) -> ScenarioSpec:
    """Stage the worst-case initial condition for one analyzed read.

    The scenario pre-loads a write batch with the drain already triggered,
    pre-loads row-hit reads from the interfering cores, and appends the
    analyzed core's single read as the youngest request. Seed 0 stages the
    canonical worst case (full write batch on one bank, all row misses, the
    full complement of prior reads); other seeds sample perturbed variants
    under the same capacity limits.
    """
    if isinstance(interferer_kind, str):
        interferer_kind = GeneratorKind(interferer_kind)
    rng = random.Random(seed)
    cores = [c for c in range(n_interferers + 1) if c != analyzed_core]
    cores = cores[:n_interferers]
    num_cores = max(cores + [analyzed_core]) + 1

    open_rows = {analyzed_core: 100 + analyzed_core}
    for core in cores:
        open_rows[core] = 100 + core  # bank index == core index

    canonical = seed == 0
    kind = interferer_kind
    if kind is GeneratorKind.BANDWIDTH_READ or kind is GeneratorKind.LATENCY:
        n_writes = 0
    elif canonical:
        n_writes = drain_batch
    else:
        n_writes = rng.randint(1, drain_batch)

    if kind is GeneratorKind.LATENCY:
        n_reads = len(cores)  # one outstanding read per interfering core
    elif canonical:
        n_reads = max_prior_reads
    else:
        n_reads = rng.randint(1, max_prior_reads)

    prestage: list[StagedRequest] = []

    # Write batch. Canonically all on one interferer's bank, each to a
    # distinct non-open row so every drained write pays a full row cycle.
    if n_writes:
        writer = cores[-1] if canonical else rng.choice(cores)
        for i in range(n_writes):
            core = writer if canonical else rng.choice(cores)
            row = open_rows[core] + 1 + i
            if not canonical and rng.random() < 0.25:
                row = open_rows[core]  # occasional row-hit write
            prestage.append(StagedRequest(True, core, core, row))

    # Prior reads: row hits on their cores' open banks so they pipeline.
    per_core_cap = 10
    read_budget = {core: per_core_cap for core in cores}
    if kind is GeneratorKind.LATENCY:
        read_budget = {core: 1 for core in cores}
    reads_placed = 0
    order = list(cores)
    while reads_placed < n_reads:
        if canonical:
            core = order[reads_placed % len(order)]
        else:
            eligible = [c for c in order if read_budget[c] > 0]
            if not eligible:
                break
            core = rng.choice(eligible)
        if read_budget[core] <= 0:
            if all(v <= 0 for v in read_budget.values()):
                break
            continue
        read_budget[core] -= 1
        prestage.append(StagedRequest(False, core, core, open_rows[core]))
        reads_placed += 1

    if not canonical:
        rng.shuffle(prestage)

    # The analyzed core's dependent read arrives right after everything else.
    prestage.append(
        StagedRequest(False, analyzed_core, analyzed_core, open_rows[analyzed_core])
    )

    return ScenarioSpec(
        label=f"adversarial-{kind.value}-{seed}",
        scheduler=SchedulerConfig(),
        mshr=MshrConfig(),
        timing=dict(timing or {}),
        open_rows=open_rows,
        prestage=prestage,
        initial_mode=Mode.WRITE_DRAIN if n_writes else Mode.READ,
        horizon=4000,
        analyzed_core=analyzed_core,
        num_cores=num_cores,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Scenario file format
# ---------------------------------------------------------------------------

def scenario_to_text(spec: ScenarioSpec) -> str:
    """Serialize a scenario to the sectioned text format."""
    lines = [
        "# dramwc scenario",
        f"label {spec.label}",
        f"seed {spec.seed}",
        f"horizon {spec.horizon}",
        f"initial_mode {spec.initial_mode.value}",
        f"analyzed_core {-1 if spec.analyzed_core is None else spec.analyzed_core}",
        f"num_cores {spec.num_cores}",
        f"num_rows {spec.num_rows}",
        "",
        "[timing]",
    ]
    timing = make_timing(spec.timing)
    for key in ("tck_ns", "trp", "trcd", "cl", "wl", "tburst", "tccd", "twtr",
                "trrd", "trtp", "tfaw", "trc", "twr", "rd_wr_gap"):
        lines.append(f"{key} {getattr(timing, key)}")
    sched = spec.scheduler
    lines += [
        "",
        "[scheduler]",
        f"read_cap {sched.read_cap}",
        f"write_cap {sched.write_cap}",
        f"drain_batch {sched.drain_batch}",
        f"prioritized_bank {-1 if sched.prioritized_bank is None else sched.prioritized_bank}",
        f"partitioning {int(sched.partitioning)}",
        f"num_banks {sched.num_banks}",
        f"stall_window {sched.stall_window}",
        "",
        "[mshr]",
        f"global_read_cap {spec.mshr.global_read_cap}",
        f"global_write_cap {spec.mshr.global_write_cap}",
        f"per_core_read_cap {spec.mshr.per_core_read_cap}",
        f"reserve_per_core {spec.mshr.reserve_per_core}",
        "",
        "[banks]",
    ]
    for bank in sorted(spec.open_rows):
        lines.append(f"{bank} {spec.open_rows[bank]}")
    for gen in spec.generators:
        lines += [
            "",
            "[generator]",
            f"kind {gen.kind.value}",
            f"core {gen.core}",
            f"bank {gen.bank}",
            f"row_policy {gen.row_policy}",
            f"budget {-1 if gen.budget is None else gen.budget}",
            f"gap {gen.gap}",
            f"start {gen.start}",
            f"stream_reads {gen.stream_reads}",
            f"stream_writes {gen.stream_writes}",
        ]
    if spec.prestage:
        lines += ["", "[prestage]"]
        for staged in spec.prestage:
            word = "write" if staged.is_write else "read"
            lines.append(f"{word} {staged.core} {staged.bank} {staged.row}")
    return "\n".join(lines) + "\n"


def scenario_from_text(text: str) -> ScenarioSpec:
    """Parse the sectioned text format back into a ScenarioSpec."""
    spec = ScenarioSpec()
    timing: dict = {}
    sched: dict = {}
    mshr: dict = {}
    section = None
    gen_fields: dict | None = None
    generators: list[GeneratorSpec] = []
    prestage: list[StagedRequest] = []
    open_rows: dict[int, int] = {}

    def finish_generator():
        nonlocal gen_fields
        if gen_fields is None:
            return
        budget = int(gen_fields.get("budget", -1))
        generators.append(GeneratorSpec(
            kind=GeneratorKind(gen_fields["kind"]),
            core=int(gen_fields["core"]),
            bank=int(gen_fields["bank"]),
            row_policy=gen_fields.get("row_policy", "sequential"),
            budget=None if budget < 0 else budget,
            gap=int(gen_fields.get("gap", 0)),
            start=int(gen_fields.get("start", 0)),
            stream_reads=int(gen_fields.get("stream_reads", 2)),
            stream_writes=int(gen_fields.get("stream_writes", 1)),
        ))
        gen_fields = None

    top: dict = {}
    for raw_line in text.splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            finish_generator()
            section = line[1:-1]
            if section == "generator":
                gen_fields = {}
            continue
        parts = line.split()
        if section is None:
            top[parts[0]] = parts[1]
        elif section == "timing":
            key, value = parts
            timing[key] = float(value) if key == "tck_ns" else int(value)
        elif section == "scheduler":
            sched[parts[0]] = parts[1]
        elif section == "mshr":
            mshr[parts[0]] = int(parts[1])
        elif section == "banks":
            open_rows[int(parts[0])] = int(parts[1])
        elif section == "generator":
            gen_fields[parts[0]] = parts[1]
        elif section == "prestage":
            word, core, bank, row = parts
            prestage.append(StagedRequest(word == "write", int(core),
                                          int(bank), int(row)))
        else:
            raise ScenarioError(f"unknown scenario section: {section}")
    finish_generator()

    prioritized = int(sched.get("prioritized_bank", -1))
    scheduler = SchedulerConfig(
        read_cap=int(sched.get("read_cap", 32)),
        write_cap=int(sched.get("write_cap", 16)),
        drain_batch=int(sched.get("drain_batch", 4)),
        prioritized_bank=None if prioritized < 0 else prioritized,
        partitioning=bool(int(sched.get("partitioning", 1))),
        num_banks=int(sched.get("num_banks", 16)),
        stall_window=int(sched.get("stall_window", 10_000)),
    )
    analyzed = int(top.get("analyzed_core", -1))
    return replace(
        spec,
        label=top.get("label", "scenario"),
        seed=int(top.get("seed", 0)),
        horizon=int(top.get("horizon", 20_000)),
        initial_mode=Mode(top.get("initial_mode", "read")),
        analyzed_core=None if analyzed < 0 else analyzed,
        num_cores=int(top.get("num_cores", 4)),
        num_rows=int(top.get("num_rows", 4096)),
        timing=timing,
        scheduler=scheduler,
        mshr=MshrConfig(**mshr) if mshr else MshrConfig(),
        open_rows=open_rows,
        generators=generators,
        prestage=prestage,
    )
