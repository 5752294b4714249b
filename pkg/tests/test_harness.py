import numpy as np
import pytest

from dramlat.core import DDR3_1600, RowMap, Topology
from dramlat.errors import ConfigError
from dramlat.harness import (ErrorLog, TestSpec, autocorrelation, burst_bit_error_profile,
                             dominant_period, estimate_row_mapping, row_error_counts, run_read_test,
                             run_test, run_write_test, sweep, sweep_combos)
from dramlat.presets import CLUSTERED_OPERATING, chip_preset
from dramlat.variation import ChipModel, VariationParams

SMALL = Topology(banks_per_rank=1, subarrays_per_bank=1, mats_per_subarray_row=4)
REGION = dict(chips=(0, 1), rows=tuple(range(0, 512, 4)))


def test_spec_validation():
    with pytest.raises(ConfigError):
        TestSpec("erase", DDR3_1600)
    with pytest.raises(ConfigError):
        TestSpec("read", DDR3_1600, pattern="0202")
    with pytest.raises(ConfigError):
        TestSpec("read", DDR3_1600, iterations=0)
    with pytest.raises(ConfigError):
        run_write_test(chip_preset("toy"), TestSpec("read", DDR3_1600))


def test_standard_timings_disabled_variation_empty():
    chip = ChipModel(SMALL, VariationParams.disabled())
    assert len(run_read_test(chip, TestSpec("read", DDR3_1600, iterations=2))) == 0
    assert len(run_write_test(chip, TestSpec("write", DDR3_1600, iterations=2))) == 0


def test_log_equals_oracle_set():
    chip = chip_preset("default")
    spec = TestSpec("read", DDR3_1600.replace(trp=9500), iterations=3, **REGION)
    log = run_test(chip, spec)
    want = set()
    from dramlat.harness import bit_position
    for cells in chip.iter_chunks(**spec.region()):
        for i, salt in enumerate(spec.salts):
            codes = chip.failures(cells, spec.timings, spec.temp_c, spec.refresh_ms, "read", salt)
            hit = np.flatnonzero(codes)
            col, bit = bit_position(cells.mat[hit], cells.col[hit], chip.topology)
            for k, h in enumerate(hit):
                want.add((int(cells.chip[h]), int(cells.subarray[h]), int(cells.row[h]),
                          int(col[k]), int(bit[k]), i))
    c = log.columns
    got = set(zip(c["chip"].tolist(), c["subarray"].tolist(), c["row_int"].tolist(),
                  c["col"].tolist(), c["burst_bit"].tolist(), c["iteration"].tolist()))
    assert want and got == want
    assert len(got) == len(log)      # unique per (address, bit, iteration)


def test_logs_are_deterministic_and_accumulate():
    chip = chip_preset("default")
    spec = TestSpec("read", DDR3_1600.replace(trp=9500), iterations=4, **REGION)
    a, b = run_test(chip, spec), run_test(chip, spec)
    assert a == b and a.to_csv() == b.to_csv()
    union = a.cell_keys()
    for i in range(4):
        assert a.iteration(i).cell_keys() <= union


def test_address_orders_hold_the_same_entries():
    chip = chip_preset("default")
    base = TestSpec("read", DDR3_1600.replace(trp=9500), iterations=2, **REGION)
    logs = [run_test(chip, base.replace(order=o)) for o in ("ascending", "descending", "column_major")]
    assert len({len(lg) for lg in logs}) == 1
    assert all(lg.cell_keys() == logs[0].cell_keys() for lg in logs)


def test_write_test_monotone_in_twr():
    chip = chip_preset("default")
    counts = [len(run_write_test(chip, TestSpec("write", DDR3_1600.replace(twr=t), iterations=1,
                                                 **REGION)).cell_keys())
              for t in (10000, 8750, 7500, 6250)]
    assert counts == sorted(counts) and counts[-1] > 0


def test_read_and_write_error_sets_differ():
    chip = chip_preset("default")
    t = DDR3_1600.replace(trp=9500)
    r = run_test(chip, TestSpec("read", t, iterations=2, **REGION)).cell_keys()
    w = run_test(chip, TestSpec("write", t, iterations=2, **REGION)).cell_keys()
    assert r and w and r ^ w


def test_sweep_monotone_and_shapes():
    chip = chip_preset("reference")
    tmpl = TestSpec("read", DDR3_1600, iterations=1, rows=tuple(range(0, 512, 2)))
    res = sweep(chip, {"refresh": [64, 256, 512], "trp": [13750, 10000]}, tmpl)
    assert len(res.combos) == 6
    assert res.row_histogram.shape == (6, 512) and res.burst_profile.shape == (6, 64)
    assert (res.row_histogram.sum(axis=1) == res.totals).all()
    assert (res.burst_profile.sum(axis=1) == res.totals).all()
    for trp in (13750, 10000):
        seq = [res.total(refresh_ms=r, trp=trp) for r in (64.0, 256.0, 512.0)]
        assert seq == sorted(seq)
    hot = sweep(chip, {"temps": [55, 85]}, tmpl.replace(refresh_ms=256))
    assert hot.totals[0] <= hot.totals[1]


def test_extreme_low_trp_saturates_histogram():
    chip = chip_preset("default")
    res = sweep(chip, {"trp": [5000]}, TestSpec("read", DDR3_1600, iterations=1, chips=(0,),
                                                  subarrays=(0,)))
    hist = res.row_histogram[0]
    assert hist.min() > 0.5 * hist.max()


def test_sweep_axes_validation():
    with pytest.raises(ConfigError):
        sweep_combos({"refresh": []}, TestSpec("read", DDR3_1600))
    with pytest.raises(ConfigError):
        sweep_combos({"tcl": [1]}, TestSpec("read", DDR3_1600))


def test_row_error_counts_match_sweep():
    chip = chip_preset("default")
    tmpl = TestSpec("read", DDR3_1600, iterations=2, chips=(0,), subarrays=(0,), cols=tuple(range(0, 512, 8)))
    values = [11250, 10000, 8750]
    fast = row_error_counts(chip, tmpl, "trp", values)
    slow = sweep(chip, {"trp": values}, tmpl).row_counts.sum(axis=0)
    assert np.array_equal(fast, slow)


def test_autocorrelation_of_periodic_series():
    x = np.tile(np.r_[np.zeros(6), np.arange(10.0)], 8)
    ac = autocorrelation(x)
    assert ac[0] == 1.0 and ac[16] == pytest.approx(1.0)
    assert dominant_period(x) == 16
    assert dominant_period(np.ones(50)) == 0


def test_burst_profile_synthetic():
    assert burst_bit_error_profile(ErrorLog()).tolist() == [0] * 64
    log = ErrorLog()
    log.columns = {k: np.zeros(5, dtype=np.int64) for k in log.columns}
    log.columns["burst_bit"][:] = 3
    prof = burst_bit_error_profile(log)
    assert prof[3] == 5 and prof.sum() == 5


def test_clustered_burst_profile_is_skewed():
    op = CLUSTERED_OPERATING
    log = run_test(chip_preset("clustered"), TestSpec("read", op.timings, op.temp_c, op.refresh_ms,
                                                      iterations=1, chips=(0,)))
    prof = burst_bit_error_profile(log)
    assert prof.sum() == len(log)
    assert prof.max() > 10 * max(prof.min(), 1)


def _rowmap_counts(perm, sigma=0.0):
    params = VariationParams(sigma_process=sigma, sigma_test=0.0, retention_sigma=0.0)
    chip = ChipModel(SMALL, params, row_map=RowMap(9, perm))
    tmpl = TestSpec("read", DDR3_1600, temp_c=55, iterations=1, chips=(0,), cols=tuple(range(0, 512, 2)))
    return row_error_counts(chip, tmpl, "tras", range(14000, 22001, 250))


def test_row_mapping_identity_noise_free():
    est = estimate_row_mapping(_rowmap_counts(tuple(range(9))), 512)
    assert est.as_perm() == tuple(range(9))
    assert all(c == 1.0 for _, c in est.bits)


def test_row_mapping_planted_three_bit_permutation():
    perm = (2, 0, 1, 3, 4, 5, 6, 7, 8)
    est = estimate_row_mapping(_rowmap_counts(perm), 512)
    rm = RowMap(9, perm)
    ext = [rm.to_external(1 << b).bit_length() - 1 for b in range(9)]
    assert est.as_perm() == tuple(ext)


def test_row_mapping_degenerate_and_validation():
    est = estimate_row_mapping(np.zeros(512), 512)
    assert est.claimed() == {} and all(c == 0.5 for _, c in est.bits)
    with pytest.raises(ConfigError):
        estimate_row_mapping(np.zeros(100), 512)
    with pytest.raises(ConfigError):
        estimate_row_mapping(np.zeros(600), 300)
