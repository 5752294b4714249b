import itertools

import pytest
from hypothesis import given, strategies as st

from dramlat.core import (DDR3_1066, DDR3_1066_CLOCK_PS, DDR3_1600, Address, BankState, BankStatus,
                          Command, CommandKind, LoggedCommand, RowMap, TimingParams, Topology,
                          access_latency, apply_command, check_command_log, decode_address,
                          earliest_legal_time, encode_address, ps_to_cycles)
from dramlat.errors import AddressError, ConfigError, IllegalCommand

TINY = Topology(banks_per_rank=2, subarrays_per_bank=2, rows_per_subarray=512,
                mats_per_subarray_row=64, cells_per_mat_side=512)


def addr(row, sa=0, col=0, bank=0):
    return Address(0, 0, bank, sa, row, row, col)


def test_ps_to_cycles_examples():
    assert ps_to_cycles(13750, 1250) == 11
    assert ps_to_cycles(13750, 1875) == 8
    assert ps_to_cycles(0, 1875) == 0
    with pytest.raises(ConfigError):
        ps_to_cycles(10, 0)


@given(st.integers(0, 10 ** 7), st.integers(1, 5000))
def test_ps_to_cycles_is_ceiling(d, clk):
    c = ps_to_cycles(d, clk)
    assert c * clk >= d > (c - 1) * clk or (d == 0 and c == 0)


def test_trc_enforced_on_construction():
    assert DDR3_1066.trc == 52500
    with pytest.raises(ConfigError):
        TimingParams(15000, 37500, 15000, 15000, 15000, 11250, 7500, trc=50000)
    with pytest.raises(ConfigError):
        TimingParams(0, 37500, 15000, 15000, 15000, 11250, 7500)
    assert DDR3_1066.replace(trp=10000).trc == 47500


def test_access_latency_examples():
    assert access_latency(False, DDR3_1066) == 37500
    assert access_latency(True, DDR3_1066) == 90000


def test_topology_invariants():
    with pytest.raises(ConfigError):
        Topology(chips_per_rank=4)
    with pytest.raises(ConfigError):
        Topology(banks_per_rank=0)
    t = Topology()
    assert t.columns_per_row == 128
    assert t.bits_per_mat == 4


def test_decode_zero_and_column_sharing():
    a = decode_address(0, Topology())
    assert (a.channel, a.rank, a.bank, a.subarray, a.row_external, a.column) == (0, 0, 0, 0, 0, 0)
    b = decode_address(64 * 5, Topology())
    assert (b.bank, b.subarray, b.row_external) == (a.bank, a.subarray, a.row_external)
    assert b.column == 5


@given(st.integers(0, Topology().capacity_bytes - 1), st.sampled_from(["row_interleaved", "line_interleaved"]))
def test_decode_encode_round_trip(x, scheme):
    t = Topology()
    line = x - x % 64
    assert encode_address(decode_address(line, t, scheme), t, scheme) == line


def test_decode_is_bijective_on_tiny_topology():
    t = Topology(banks_per_rank=2, subarrays_per_bank=1, rows_per_subarray=512,
                 mats_per_subarray_row=64, cells_per_mat_side=512)
    seen = set()
    for line in range(t.capacity_bytes // 64):
        a = decode_address(line * 64, t)
        seen.add((a.bank, a.subarray, a.row_external, a.column))
    assert len(seen) == t.capacity_bytes // 64


def test_decode_out_of_range():
    t = Topology()
    with pytest.raises(AddressError):
        decode_address(t.capacity_bytes, t)
    with pytest.raises(AddressError):
        decode_address(-64, t)


def test_row_map_internal_row():
    rm = RowMap(9, (0, 1, 2, 3, 7, 5, 8, 4, 6))
    for r in range(512):
        assert rm.to_external(rm.to_internal(r)) == r
    a = decode_address(64 * 128 * 3, Topology(), row_map=rm)
    assert a.row_internal == rm.to_internal(a.row_external)


def test_earliest_legal_time_examples():
    clk = DDR3_1066_CLOCK_PS
    s = apply_command(BankState(), Command(CommandKind.ACT, addr(7)), DDR3_1066, clk)
    assert s.status is BankStatus.ACTIVATED and s.open_row == (0, 7)
    assert earliest_legal_time(s, Command(CommandKind.RD, addr(7)), DDR3_1066, 0, clk) == 8
    assert earliest_legal_time(s, Command(CommandKind.PRE, addr(7)), DDR3_1066, 0, clk) == 20
    p = apply_command(s, Command(CommandKind.PRE, addr(7), 20), DDR3_1066, clk)
    assert p.status is BankStatus.PRECHARGED and p.open_row is None
    assert earliest_legal_time(p, Command(CommandKind.ACT, addr(9)), DDR3_1066, 0, clk) == 28  # tRC


def test_illegal_commands():
    clk = DDR3_1066_CLOCK_PS
    with pytest.raises(IllegalCommand):
        earliest_legal_time(BankState(), Command(CommandKind.RD, addr(1)), DDR3_1066, 0, clk)
    s = apply_command(BankState(), Command(CommandKind.ACT, addr(1)), DDR3_1066, clk)
    with pytest.raises(IllegalCommand):
        apply_command(s, Command(CommandKind.ACT, addr(2)), DDR3_1066, clk)
    with pytest.raises(IllegalCommand):
        earliest_legal_time(s, Command(CommandKind.RD, addr(2)), DDR3_1066, 0, clk)
    with pytest.raises(ConfigError):
        BankState(status=BankStatus.ACTIVATED)


def test_write_recovery_delays_precharge():
    clk = DDR3_1066_CLOCK_PS
    s = apply_command(BankState(), Command(CommandKind.ACT, addr(1)), DDR3_1066, clk)
    s = apply_command(s, Command(CommandKind.WR, addr(1), 18), DDR3_1066, clk)
    # WR at 18: data ends at 18 + tCWL(6) + tBL(4) = 28, then tWR (8)
    assert earliest_legal_time(s, Command(CommandKind.PRE, addr(1)), DDR3_1066, 0, clk) == 36


@st.composite
def command_script(draw):
    return draw(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 6)), min_size=1, max_size=30))


def _replay(script, timings, clk):
    """Issue each scripted access at its earliest legal time, closed-page."""
    state, now, log, trace = BankState(), 0, [], []
    for row, delay in script:
        a = addr(row)
        for kind in (CommandKind.ACT, CommandKind.RD, CommandKind.PRE):
            now = earliest_legal_time(state, Command(kind, a), timings, now + delay, clk)
            state = apply_command(state, Command(kind, a, now), timings, clk)
            log.append(LoggedCommand(kind, (0, 0, 0), (0, row), now, timings))
            trace.append(state)
    return log, trace


@given(command_script(), st.sampled_from([DDR3_1066, DDR3_1600]))
def test_legal_schedules_satisfy_all_constraints(script, timings):
    clk = 1875 if timings is DDR3_1066 else 1250
    log, trace = _replay(script, timings, clk)
    assert check_command_log(log, clk) == []
    log2, trace2 = _replay(script, timings, clk)
    assert trace == trace2


def test_checker_flags_violations():
    clk = DDR3_1066_CLOCK_PS
    log = [LoggedCommand(CommandKind.ACT, (0,), (0, 1), 0, DDR3_1066),
           LoggedCommand(CommandKind.RD, (0,), (0, 1), 5, DDR3_1066),
           LoggedCommand(CommandKind.PRE, (0,), (0, 1), 10, DDR3_1066),
           LoggedCommand(CommandKind.ACT, (0,), (0, 2), 12, DDR3_1066)]
    problems = check_command_log(log, clk)
    kinds = " ".join(problems)
    assert "tRCD" in kinds and "tRAS" in kinds and "tRC" in kinds and "tRP" in kinds
