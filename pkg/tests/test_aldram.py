import warnings

import pytest
from hypothesis import given, strategies as st

from dramlat.aldram import (DDR3_1600_TABLE, TemperatureTrace, TimingTable, default_grid,
                            enforce_timings, error_count, find_safe_refresh_interval, grid_range,
                            identify_timing_table, ordered_combos, select_combo, timings_at)
from dramlat.core import DDR3_1600, REDUCIBLE, Topology
from dramlat.errors import ConfigError, ModuleRejected, TraceError
from dramlat.presets import chip_preset
from dramlat.variation import ChipModel, VariationParams

SMALL = Topology(banks_per_rank=1, subarrays_per_bank=1, mats_per_subarray_row=4)
MINI = Topology(banks_per_rank=1, subarrays_per_bank=1, mats_per_subarray_row=4,
                rows_per_subarray=64, cells_per_mat_side=64)
COARSE = {"trcd": [13750, 11250, 8750, 6250], "tras": [35000, 27500, 20000, 15000],
          "trp": [13750, 11250, 8750, 6250], "twr": [15000, 10000, 5000]}


def test_grid_helpers():
    assert grid_range(12500, 10000) == [12500, 11250, 10000]
    with pytest.raises(ConfigError):
        grid_range(1000, 2000)
    g = default_grid()
    assert g["trcd"] == [10000, 11250, 12500, 13750]
    assert g["tras"][0] == 20000 and g["tras"][-1] == 35000
    assert g["twr"][0] == 5000 and g["trp"][-1] == 13750


def test_ordered_combos_tie_break_prefers_precharge():
    combos = ordered_combos({"trcd": [1, 2], "tras": [1, 2], "trp": [1, 2], "twr": [1]})
    assert combos[0] == {"trcd": 1, "tras": 1, "trp": 1, "twr": 1}
    ties = [c for c in combos if sum(c.values()) == 5]
    assert ties[0]["trp"] == 1 and ties[0]["trcd"] == 1 and ties[0]["tras"] == 2


def test_disabled_variation_selects_grid_minimum():
    # base requirements all below the grid floor
    chip = ChipModel(SMALL, VariationParams.disabled(), base_ps={"twr": 4000})
    table = identify_timing_table(chip, temps=(55, 85), refresh_read_ms=64, refresh_write_ms=64,
                                  iterations=1)
    g = default_grid()
    for _, tp in table.entries:
        assert {c: getattr(tp, c) for c in REDUCIBLE} == {c: g[c][0] for c in REDUCIBLE}


def test_safe_refresh_without_failures_is_upper_bound_minus_step():
    chip = ChipModel(SMALL, VariationParams.disabled())
    r = find_safe_refresh_interval(chip, "read", upper_ms=512, iterations=1)
    assert (r.max_error_free_ms, r.safe_ms, r.first_failing_ms) == (512, 504, None)


REGION = {"rows": range(0, 512, 8)}


@pytest.mark.parametrize("op", ["read", "write"])
def test_safe_refresh_boundary(op):
    chip = chip_preset("reference")
    r = find_safe_refresh_interval(chip, op, iterations=2, region=REGION)
    assert r.safe_ms == r.max_error_free_ms - 8
    kw = dict(iterations=2, region=REGION)
    assert error_count(chip, op, DDR3_1600, 85, r.max_error_free_ms, **kw) == 0
    assert error_count(chip, op, DDR3_1600, 85, r.max_error_free_ms + 8, **kw) >= 1


def test_module_rejected_at_standard_refresh():
    chip = chip_preset("reference", retention_median_ms=40.0)
    with pytest.raises(ModuleRejected):
        find_safe_refresh_interval(chip, "read", iterations=1, region=REGION)


def test_identification_matches_brute_force_on_small_noise_free_chip():
    chip = ChipModel(MINI, chip_preset("toy").params)
    table = identify_timing_table(chip, temps=(55, 85), grid=COARSE, refresh_read_ms=64,
                                  refresh_write_ms=64, iterations=1)

    def brute(temp):
        def ok(combo):
            t = DDR3_1600.replace(**combo)
            return not any(chip.failures(b, t, temp, 64, op).any()
                           for op in ("read", "write") for b in chip.iter_chunks())
        return select_combo(COARSE, ok)

    for temp, tp in table.entries:
        assert {c: getattr(tp, c) for c in REDUCIBLE} == brute(temp)


def test_identification_monotone_and_deterministic():
    chip = chip_preset("reference")
    kw = dict(temps=(55, 85), refresh_read_ms=200, refresh_write_ms=152, iterations=1, region=REGION)
    a = identify_timing_table(chip, **kw)
    assert a == identify_timing_table(chip, **kw)
    (_, cold), (_, hot) = a.entries
    assert all(getattr(hot, c) >= getattr(cold, c) for c in REDUCIBLE)
    assert a.provenance["safe_refresh_read_ms"] == 200


def test_timing_table_lookup_and_serialization():
    mid = DDR3_1600.replace(trcd=11250)
    low = DDR3_1600.replace(trcd=10000)
    table = TimingTable(((55, low), (70, mid), (85, DDR3_1600)))
    assert table.lookup(56) == (70, mid)
    assert table.lookup(55) == (55, low)
    assert table.lookup(90) == (None, DDR3_1600)
    assert TimingTable.from_yaml(table.to_yaml()) == table
    with pytest.raises(ConfigError):
        TimingTable(((55, DDR3_1600), (85, low)))
    with pytest.raises(ConfigError):
        TimingTable(())
    with pytest.raises(ConfigError):
        TimingTable.from_dict({"kind": "ava_profile"})


def test_evaluated_system_table():
    t = DDR3_1600_TABLE.lookup(50)[1]
    assert (t.trcd, t.tras, t.twr, t.trp) == (10000, 23750, 10000, 11250)
    assert (DDR3_1600.trcd, DDR3_1600.tras, DDR3_1600.twr, DDR3_1600.trp) == (13750, 35000, 15000, 13750)


def test_enforce_constant_and_round_up():
    timeline = enforce_timings(DDR3_1600_TABLE, TemperatureTrace.constant(55, 2.0))
    assert len(timeline) == 8
    assert all(iv.table_temp_c == 55 for iv in timeline)
    table = TimingTable(((55, DDR3_1600.replace(trcd=10000)), (70, DDR3_1600.replace(trcd=11250)),
                         (85, DDR3_1600)))
    tl = enforce_timings(table, TemperatureTrace.constant(56, 1.0))
    assert {iv.table_temp_c for iv in tl} == {70}
    hot = enforce_timings(table, TemperatureTrace.constant(95, 1.0))
    assert all(iv.over_range and iv.timings == DDR3_1600 for iv in hot)
    assert timings_at(tl, 0.3) == table.lookup(70)[1]


@given(st.lists(st.floats(40, 84), min_size=2, max_size=20))
def test_enforcement_is_conservative(temps):
    trace = TemperatureTrace(tuple(float(i) for i in range(len(temps))), tuple(temps))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        timeline = enforce_timings(DDR3_1600_TABLE, trace, 500)
    for iv in timeline:
        for t in (iv.start_s, (iv.start_s + iv.end_s) / 2):
            true = DDR3_1600_TABLE.lookup(trace.max_over(t, t))[1]
            assert all(getattr(iv.timings, c) >= getattr(true, c) for c in REDUCIBLE)


def test_temperature_trace_parsing():
    tr = TemperatureTrace.parse("# t temp\n0 50\n10, 50.5\n20 51\n")
    assert tr.temps_c == (50.0, 50.5, 51.0)
    with pytest.raises(TraceError) as e:
        TemperatureTrace.parse("0 50\n1 x\n", "temps.txt")
    assert "2" in str(e.value) and "temps.txt" in str(e.value)
    with pytest.raises(TraceError):
        TemperatureTrace.parse("0 50\n0 51\n")
    with pytest.warns(UserWarning):
        TemperatureTrace.parse("0 50\n1 55\n")
