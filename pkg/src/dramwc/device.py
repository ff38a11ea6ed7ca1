"""DDR3 device timing model: per-bank row-buffer state, channel state, and the
legality and effect of PRE/ACT/RD/WR commands.

All quantities are in memory-clock cycles unless the name ends in ``_ns``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class TimingError(ValueError):
    """Missing or inconsistent timing parameters."""


class CommandKind(enum.Enum):
    PRE = "PRE"
    ACT = "ACT"
    RD = "RD"
    WR = "WR"


#: Column (CAS) command kinds; ACT and PRE form the row (RAS) class.
CAS_KINDS = (CommandKind.RD, CommandKind.WR)

#: DDR3-1066 timing set. Cycle values except tck_ns.
DDR3_1066 = {
    "tck_ns": 1.87,
    "trp": 7,
    "trcd": 7,
    "cl": 7,
    "wl": 6,
    "tburst": 4,
    "tccd": 4,
    "twtr": 4,
    "trrd": 4,
    "trtp": 4,
    "tfaw": 20,
    "trc": 27,
}

_CYCLE_KEYS = tuple(k for k in DDR3_1066 if k != "tck_ns")
_OPTIONAL_KEYS = ("twr", "rd_wr_gap")


@dataclass(frozen=True)
class TimingParams:
    tck_ns: float
    trp: int
    trcd: int
    cl: int
    wl: int
    tburst: int
    tccd: int
    twtr: int
    trrd: int
    trtp: int
    tfaw: int
    trc: int
    tras: int        # derived: trc - trp
    twr: int         # write recovery (WR issue + WL + tBURST + tWR gates PRE)
    rd_wr_gap: int   # read-to-write CAS turnaround on the channel

    def ns(self, cycles: float) -> float:
        return cycles * self.tck_ns


def make_timing(raw: dict | None = None, **overrides) -> TimingParams:
    """Build a validated TimingParams from DDR3-1066 defaults plus overrides.

    ``raw`` / keyword overrides may supply any base key, plus the optional
    ``twr`` and ``rd_wr_gap``. ``tras`` is always derived from trc - trp.
    """
    merged = dict(DDR3_1066)
    for src in (raw or {}), overrides:
        for key, value in src.items():
            if key == "tras":
                raise TimingError("tras is derived from trc - trp and cannot be set")
            if key not in DDR3_1066 and key not in _OPTIONAL_KEYS:
                raise TimingError(f"unknown timing parameter: {key}")
            merged[key] = value

    missing = [k for k in DDR3_1066 if k not in merged]
    if missing:
        raise TimingError(f"missing timing parameter: {', '.join(missing)}")

    tck = float(merged["tck_ns"])
    if tck <= 0:
        raise TimingError(f"tCK ({tck}) must be positive")
    cycles = {}
    for key in _CYCLE_KEYS:
        value = int(merged[key])
        if value < 1:
            raise TimingError(f"{key} ({value}) must be at least 1 cycle")
        cycles[key] = value
    if cycles["trc"] <= cycles["trp"]:
        raise TimingError(f"tRC ({cycles['trc']}) must exceed tRP ({cycles['trp']})")
    if cycles["tfaw"] < cycles["trrd"]:
        raise TimingError(
            f"tFAW ({cycles['tfaw']}) cannot be shorter than tRRD ({cycles['trrd']})"
        )
    tras = cycles["trc"] - cycles["trp"]

    if "twr" in merged:
        twr = int(merged["twr"])
        if twr < 1:
            raise TimingError(f"twr ({twr}) must be at least 1 cycle")
    else:
        # Largest write recovery for which a same-bank row-miss write stream
        # still cycles at tRC (needs tRCD + WL + tBURST + tWR <= tRAS).
        twr = max(1, tras - (cycles["trcd"] + cycles["wl"] + cycles["tburst"]))
    if "rd_wr_gap" in merged:
        rd_wr_gap = int(merged["rd_wr_gap"])
        if rd_wr_gap < 0:
            raise TimingError(f"rd_wr_gap ({rd_wr_gap}) must be non-negative")
    else:
        rd_wr_gap = max(1, cycles["cl"] + cycles["tburst"] + 2 - cycles["wl"])

    return TimingParams(tck_ns=tck, tras=tras, twr=twr, rd_wr_gap=rd_wr_gap, **cycles)


def load_timing(path) -> TimingParams:
    """Read timing parameters from a flat key-value text file.

    One ``key value`` pair per line, ``#`` starts a comment. Keys are the
    lowercase parameter names used by :data:`DDR3_1066`.
    """
    raw = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise TimingError(f"{path}:{lineno}: expected 'key value', got {line!r}")
            key, value = parts
            raw[key] = float(value) if key == "tck_ns" else int(value)
    missing = [k for k in DDR3_1066 if k not in raw]
    if missing:
        raise TimingError(f"missing timing parameter: {', '.join(missing)}")
    return make_timing(raw)


@dataclass(frozen=True)
class DramCommand:
    kind: CommandKind
    bank: int
    row: int
    request_id: int
    core: int
    arrival_order: int

    @property
    def is_cas(self) -> bool:
        return self.kind in CAS_KINDS


@dataclass(frozen=True)
class DataBurst:
    start: int
    end: int  # exclusive
    request_id: int
    core: int
    is_write: bool


@dataclass
class BankState:
    """Row-buffer state plus per-kind earliest legal issue cycles."""

    open_row: int | None = None
    earliest_act: int = 0
    earliest_pre: int = 0
    earliest_rd: int = 0
    earliest_wr: int = 0


@dataclass
class ChannelState:
    """Shared command/data bus state across all banks.

    act_history keeps the issue cycles of the four most recent ACTs for the
    rolling four-activate window check.
    """

    act_history: list[int] = field(default_factory=list)
    earliest_rd_cas: int = 0
    earliest_wr_cas: int = 0
    data_bus_free: int = 0
    last_cas_kind: CommandKind | None = None


def decompose_request(req, bank: BankState) -> list[DramCommand]:
    """Open-page decomposition of a request against the current bank state.

    Row hit -> [CAS]; closed bank -> [ACT, CAS]; conflicting open row ->
    [PRE, ACT, CAS]. The head of the list is the request's next command.
    """
    cas = CommandKind.WR if req.is_write else CommandKind.RD
    make = lambda kind: DramCommand(
        kind, req.bank, req.row, req.request_id, req.core, req.arrival_order
    )
    if bank.open_row == req.row:
        return [make(cas)]
    if bank.open_row is None:
        return [make(CommandKind.ACT), make(cas)]
    return [make(CommandKind.PRE), make(CommandKind.ACT), make(cas)]


def command_ready(
    cmd: DramCommand,
    bank: BankState,
    chan: ChannelState,
    timing: TimingParams,
    now: int,
) -> bool:
    """True iff every bank and channel constraint allows issuing cmd at now."""
    kind = cmd.kind
    if kind is CommandKind.ACT:
        if bank.open_row is not None or now < bank.earliest_act:
            return False
        hist = chan.act_history
        if hist:
            if now < hist[-1] + timing.trrd:
                return False
            if len(hist) >= 4 and now < hist[-4] + timing.tfaw:
                return False
        return True
    if kind is CommandKind.PRE:
        return bank.open_row is not None and now >= bank.earliest_pre
    if kind is CommandKind.RD:
        return (
            bank.open_row == cmd.row
            and now >= bank.earliest_rd
            and now >= chan.earliest_rd_cas
            and now + timing.cl >= chan.data_bus_free
        )
    if kind is CommandKind.WR:
        return (
            bank.open_row == cmd.row
            and now >= bank.earliest_wr
            and now >= chan.earliest_wr_cas
            and now + timing.wl >= chan.data_bus_free
        )
    raise ValueError(f"unknown command kind: {kind}")


def apply_command(
    cmd: DramCommand,
    bank: BankState,
    chan: ChannelState,
    timing: TimingParams,
    now: int,
) -> DataBurst | None:
    """Issue cmd at now, updating bank/channel state in place.

    Returns the data burst for CAS commands, None otherwise. Issuing a
    non-ready command is a simulator bug and raises RuntimeError.
    """
    if not command_ready(cmd, bank, chan, timing, now):
        raise RuntimeError(f"command not ready at cycle {now}: {cmd}")

    kind = cmd.kind
    if kind is CommandKind.ACT:
        bank.open_row = cmd.row
        bank.earliest_rd = max(bank.earliest_rd, now + timing.trcd)
        bank.earliest_wr = max(bank.earliest_wr, now + timing.trcd)
        bank.earliest_pre = max(bank.earliest_pre, now + timing.tras)
        chan.act_history.append(now)
        if len(chan.act_history) > 4:
            chan.act_history.pop(0)
        return None

    if kind is CommandKind.PRE:
        bank.open_row = None
        bank.earliest_act = max(bank.earliest_act, now + timing.trp)
        return None

    if kind is CommandKind.RD:
        bank.earliest_pre = max(bank.earliest_pre, now + timing.trtp)
        burst = DataBurst(now + timing.cl, now + timing.cl + timing.tburst,
                          cmd.request_id, cmd.core, False)
        chan.earliest_rd_cas = max(chan.earliest_rd_cas, now + timing.tccd)
        chan.earliest_wr_cas = max(chan.earliest_wr_cas, now + timing.rd_wr_gap)
    else:  # WR
        bank.earliest_pre = max(
            bank.earliest_pre, now + timing.wl + timing.tburst + timing.twr
        )
        burst = DataBurst(now + timing.wl, now + timing.wl + timing.tburst,
                          cmd.request_id, cmd.core, True)
        chan.earliest_wr_cas = max(chan.earliest_wr_cas, now + timing.tccd)
        chan.earliest_rd_cas = max(
            chan.earliest_rd_cas, now + timing.wl + timing.tburst + timing.twtr
        )
    chan.data_bus_free = burst.end
    chan.last_cas_kind = kind
    return burst
