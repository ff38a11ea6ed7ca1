import random

import pytest
from hypothesis import given, settings, strategies as st

from dramwc.device import (
    DDR3_1066,
    BankState,
    ChannelState,
    CommandKind,
    DramCommand,
    TimingError,
    apply_command,
    command_ready,
    decompose_request,
    load_timing,
    make_timing,
)
from dramwc.scheduler import MemRequest


def cmd(kind, bank=0, row=1, rid=0, core=0, order=0):
    return DramCommand(kind, bank, row, rid, core, order)


class TestMakeTiming:
    def test_defaults_match_ddr3_1066(self):
        t = make_timing()
        assert (t.trp, t.trcd, t.cl, t.tburst, t.trc) == (7, 7, 7, 4, 27)
        assert t.wl == 6 and t.tccd == 4 and t.twtr == 4
        assert t.trrd == 4 and t.trtp == 4 and t.tfaw == 20
        assert t.tck_ns == 1.87

    def test_tras_is_derived(self):
        t = make_timing()
        assert t.tras == 27 - 7
        with pytest.raises(TimingError, match="derived"):
            make_timing({"tras": 20})

    def test_trc_must_exceed_trp(self):
        with pytest.raises(TimingError, match="tRC"):
            make_timing({"trc": 5, "trp": 7})

    def test_missing_field_in_timing_file(self, tmp_path):
        path = tmp_path / "timing.txt"
        lines = [f"{k} {v}" for k, v in DDR3_1066.items() if k != "trcd"]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(TimingError, match="missing"):
            load_timing(path)

    def test_tfaw_not_below_trrd(self):
        with pytest.raises(TimingError, match="tFAW"):
            make_timing({"tfaw": 3, "trrd": 4})

    def test_unknown_key_rejected(self):
        with pytest.raises(TimingError, match="unknown"):
            make_timing({"tktk": 12})

    def test_overrides(self):
        t = make_timing({"twr": 8, "tburst": 8})
        assert t.twr == 8 and t.tburst == 8

    def test_default_twr_keeps_row_miss_writes_at_trc(self):
        t = make_timing()
        # PRE->PRE distance for a row-miss write stream is
        # max(trc, trp + trcd + wl + tburst + twr); default twr keeps it trc.
        assert t.trp + t.trcd + t.wl + t.tburst + t.twr <= t.trc
        assert t.twr == t.tras - (t.trcd + t.wl + t.tburst)

    def test_load_timing_roundtrip(self, tmp_path):
        path = tmp_path / "timing.txt"
        path.write_text(
            "# comment\n"
            "tck_ns 1.87\ntrp 7\ntrcd 7\ncl 7\nwl 6\ntburst 4\ntccd 4\n"
            "twtr 4\ntrrd 4\ntrtp 4\ntfaw 20\ntrc 27\ntwr 8\n"
        )
        t = load_timing(path)
        assert t == make_timing({"twr": 8})

    def test_load_timing_bad_line(self, tmp_path):
        path = tmp_path / "timing.txt"
        path.write_text("trp 7 9\n")
        with pytest.raises(TimingError, match="key value"):
            load_timing(path)


class TestDecompose:
    def read(self, row):
        return MemRequest(0, 0, False, 0, row, 0, 0)

    def test_row_hit(self):
        kinds = [c.kind for c in decompose_request(self.read(5), BankState(open_row=5))]
        assert kinds == [CommandKind.RD]

    def test_closed_bank(self):
        kinds = [c.kind for c in decompose_request(self.read(5), BankState())]
        assert kinds == [CommandKind.ACT, CommandKind.RD]

    def test_row_conflict(self):
        kinds = [c.kind for c in decompose_request(self.read(5), BankState(open_row=3))]
        assert kinds == [CommandKind.PRE, CommandKind.ACT, CommandKind.RD]

    def test_write_uses_wr(self):
        req = MemRequest(0, 0, True, 0, 5, 0, 0)
        kinds = [c.kind for c in decompose_request(req, BankState(open_row=5))]
        assert kinds == [CommandKind.WR]


class TestCommandReady:
    def setup_method(self):
        self.t = make_timing()

    def test_rd_on_open_row_ready(self):
        assert command_ready(cmd(CommandKind.RD, row=1), BankState(open_row=1),
                             ChannelState(), self.t, 0)

    def test_rd_on_wrong_row_not_ready(self):
        assert not command_ready(cmd(CommandKind.RD, row=1), BankState(open_row=2),
                                 ChannelState(), self.t, 10)

    def test_act_blocked_by_trrd(self):
        chan = ChannelState(act_history=[0])
        bank = BankState()
        assert not command_ready(cmd(CommandKind.ACT), bank, chan, self.t, 3)
        assert command_ready(cmd(CommandKind.ACT), bank, chan, self.t, 4)

    def test_rd_blocked_by_tccd(self):
        bank0, bank1 = BankState(open_row=1), BankState(open_row=1)
        chan = ChannelState()
        apply_command(cmd(CommandKind.RD, bank=0, row=1), bank0, chan, self.t, 0)
        assert not command_ready(cmd(CommandKind.RD, bank=1, row=1), bank1,
                                 chan, self.t, 1)
        assert command_ready(cmd(CommandKind.RD, bank=1, row=1), bank1,
                             chan, self.t, 4)

    def test_fifth_act_waits_for_tfaw(self):
        chan = ChannelState()
        banks = [BankState() for _ in range(5)]
        now = 0
        for i in range(4):
            apply_command(cmd(CommandKind.ACT, bank=i, row=1), banks[i],
                          chan, self.t, now)
            now += self.t.trrd
        # four activates at 0,4,8,12; a fifth is legal only from 0 + tfaw
        assert not command_ready(cmd(CommandKind.ACT, bank=4), banks[4],
                                 chan, self.t, 16)
        assert command_ready(cmd(CommandKind.ACT, bank=4), banks[4],
                             chan, self.t, 20)

    def test_write_to_read_turnaround(self):
        bank0, bank1 = BankState(open_row=1), BankState(open_row=1)
        chan = ChannelState()
        apply_command(cmd(CommandKind.WR, bank=0, row=1), bank0, chan, self.t, 0)
        gate = self.t.wl + self.t.tburst + self.t.twtr
        assert not command_ready(cmd(CommandKind.RD, bank=1, row=1), bank1,
                                 chan, self.t, gate - 1)
        assert command_ready(cmd(CommandKind.RD, bank=1, row=1), bank1,
                             chan, self.t, gate)

    def test_read_to_write_turnaround(self):
        bank0, bank1 = BankState(open_row=1), BankState(open_row=1)
        chan = ChannelState()
        apply_command(cmd(CommandKind.RD, bank=0, row=1), bank0, chan, self.t, 0)
        assert not command_ready(cmd(CommandKind.WR, bank=1, row=1), bank1,
                                 chan, self.t, self.t.rd_wr_gap - 1)
        assert command_ready(cmd(CommandKind.WR, bank=1, row=1), bank1,
                             chan, self.t, self.t.rd_wr_gap)


class TestApplyCommand:
    def setup_method(self):
        self.t = make_timing()

    def test_act_opens_row_and_sets_trcd(self):
        bank, chan = BankState(), ChannelState()
        apply_command(cmd(CommandKind.ACT, row=9), bank, chan, self.t, 0)
        assert bank.open_row == 9
        assert bank.earliest_rd == 7  # row activation time
        assert bank.earliest_pre == self.t.tras

    def test_rd_burst_window(self):
        bank, chan = BankState(open_row=9), ChannelState()
        burst = apply_command(cmd(CommandKind.RD, row=9), bank, chan, self.t, 7)
        assert (burst.start, burst.end) == (7 + 7, 7 + 7 + 4)  # cl, cl + tburst

    def test_pre_closes_and_sets_trp(self):
        bank, chan = BankState(open_row=9), ChannelState()
        apply_command(cmd(CommandKind.PRE), bank, chan, self.t, 12)
        assert bank.open_row is None
        assert bank.earliest_act == 12 + 7

    def test_write_recovery_gates_pre(self):
        bank, chan = BankState(open_row=9), ChannelState()
        apply_command(cmd(CommandKind.WR, row=9), bank, chan, self.t, 0)
        assert bank.earliest_pre == self.t.wl + self.t.tburst + self.t.twr

    def test_not_ready_is_hard_fault(self):
        bank, chan = BankState(open_row=2), ChannelState()
        with pytest.raises(RuntimeError, match="not ready"):
            apply_command(cmd(CommandKind.RD, row=9), bank, chan, self.t, 0)


def _legal_driver(seed, cycles=260, num_banks=4):
    """Issue a random ready command whenever one exists; returns the issue
    log, final state, and bursts for invariant checking."""
    t = make_timing()
    rng = random.Random(seed)
    banks = [BankState() for _ in range(num_banks)]
    chan = ChannelState()
    issued = []
    bursts = []
    for now in range(cycles):
        options = []
        for i, bank in enumerate(banks):
            if bank.open_row is None:
                options.append(cmd(CommandKind.ACT, bank=i, row=rng.randrange(3)))
            else:
                options.append(cmd(CommandKind.PRE, bank=i, row=bank.open_row))
                options.append(cmd(CommandKind.RD, bank=i, row=bank.open_row))
                options.append(cmd(CommandKind.WR, bank=i, row=bank.open_row))
        ready = [c for c in options if command_ready(c, banks[c.bank], chan, t, now)]
        if not ready or rng.random() < 0.2:
            continue
        pick = rng.choice(ready)
        burst = apply_command(pick, banks[pick.bank], chan, t, now)
        issued.append((now, pick))
        if burst:
            bursts.append(burst)
    return t, issued, banks, chan, bursts


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_replay_determinism(seed):
    t, issued, banks, chan, bursts = _legal_driver(seed)
    rebanks = [BankState() for _ in banks]
    rechan = ChannelState()
    rebursts = []
    for now, command in issued:
        burst = apply_command(command, rebanks[command.bank], rechan, t, now)
        if burst:
            rebursts.append(burst)
    assert rebanks == banks and rechan == chan and rebursts == bursts


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_random_legal_sequences_keep_invariants(seed):
    t, issued, banks, chan, bursts = _legal_driver(seed)
    ordered = sorted(bursts, key=lambda b: b.start)
    for prev, cur in zip(ordered, ordered[1:]):
        assert cur.start >= prev.end, "data bursts overlap"
    acts = [now for now, c in issued if c.kind is CommandKind.ACT]
    for i in range(4, len(acts)):
        assert acts[i] - acts[i - 4] >= t.tfaw, "five activates in a tFAW window"


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_timestamps_monotone(seed):
    t = make_timing()
    rng = random.Random(seed)
    bank, chan = BankState(open_row=0), ChannelState()
    fields = ("earliest_act", "earliest_pre", "earliest_rd", "earliest_wr")
    for now in range(180):
        before = {f: getattr(bank, f) for f in fields}
        options = ([cmd(CommandKind.ACT, row=rng.randrange(3))]
                   if bank.open_row is None else
                   [cmd(k, row=bank.open_row)
                    for k in (CommandKind.PRE, CommandKind.RD, CommandKind.WR)])
        ready = [c for c in options if command_ready(c, bank, chan, t, now)]
        if not ready:
            continue
        apply_command(rng.choice(ready), bank, chan, t, now)
        for f in fields:
            assert getattr(bank, f) >= before[f]


@pytest.mark.parametrize("n", [1, 5, 12])
@pytest.mark.parametrize("spread_banks", [False, True])
def test_row_hit_reads_pipeline_exactly(n, spread_banks):
    # Greedy issue of n row-hit reads, on one open bank or spread across
    # open banks: the data bus must carry exactly n * tburst back-to-back
    # cycles once the first burst begins.
    t = make_timing()
    banks = [BankState(open_row=1) for _ in range(4 if spread_banks else 1)]
    chan = ChannelState()
    bursts = []
    now = 0
    while len(bursts) < n:
        target = len(bursts) % len(banks)
        c = cmd(CommandKind.RD, bank=target, row=1, rid=len(bursts))
        if command_ready(c, banks[target], chan, t, now):
            bursts.append(apply_command(c, banks[target], chan, t, now))
        now += 1
    assert bursts[-1].end - bursts[0].start == n * t.tburst
    for prev, cur in zip(bursts, bursts[1:]):
        assert cur.start == prev.end
