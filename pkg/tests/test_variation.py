import numpy as np
import pytest
from hypothesis import given, strategies as st

from dramlat.core import DDR3_1600, Topology
from dramlat.errors import ConfigError
from dramlat.presets import chip_preset
from dramlat.variation import (CellBatch, CellCoords, ChipModel, VariationParams, bitline_distance,
                               precharge_arrival_delay)

TOPO = Topology()
coord = st.builds(CellCoords, st.just(0), st.just(0), st.integers(0, 3), st.integers(0, 511),
                  st.integers(0, 511), st.integers(0, 7))


def test_bitline_distance_examples():
    assert bitline_distance(CellCoords(0, 0, 0, 0, 0), TOPO) == 0.0
    assert bitline_distance(CellCoords(0, 0, 0, 511, 0), TOPO) == 1.0
    assert bitline_distance(CellCoords(0, 0, 0, 0, 1), TOPO) == 1.0
    assert bitline_distance(CellCoords(0, 0, 0, 511, 1), TOPO) == 0.0
    with pytest.raises(ConfigError):
        bitline_distance(CellCoords(0, 0, 0, 512, 0), TOPO)


def test_precharge_arrival_example():
    p = VariationParams(alpha_ps=100, beta_ps=10)
    assert [precharge_arrival_delay(m, 4, p) for m in range(4)] == [0, 100, 130, 30]
    with pytest.raises(ConfigError):
        precharge_arrival_delay(4, 4, p)


def test_disabled_variation_returns_base():
    chip = ChipModel(Topology(banks_per_rank=1, subarrays_per_bank=1, mats_per_subarray_row=4),
                     VariationParams.disabled())
    req = chip.required_timings(CellCoords(0, 0, 2, 300, 17), 55, 64)
    assert req == {k: float(max(chip.base_ps[k], chip.floors_ps[k])) for k in req}


@given(coord, st.floats(0, 90))
def test_requirements_monotone_in_temperature(c, t):
    chip = chip_preset("default")
    lo, hi = chip.required_timings(c, t, 64), chip.required_timings(c, t + 10, 64)
    assert all(hi[k] >= lo[k] for k in lo)


@given(coord, st.floats(0, 90))
def test_retention_halves_per_ten_degrees(c, t):
    chip = chip_preset("default")
    assert chip.retention_time(c, t + 10) == pytest.approx(chip.retention_time(c, t) / 2, rel=1e-9)


def test_retention_85_vs_75():
    chip = chip_preset("default")
    c = CellCoords(0, 1, 3, 17, 99)
    assert chip.retention_time(c, 75) == pytest.approx(2 * chip.retention_time(c, 85))


@given(coord, st.floats(10, 400))
def test_requirements_monotone_in_refresh(c, r):
    chip = chip_preset("reference")
    lo, hi = chip.required_timings(c, 85, r), chip.required_timings(c, 85, r * 1.5)
    assert all(hi[k] >= lo[k] for k in lo)


@given(coord)
def test_failures_monotone_in_applied_timing(c):
    chip = chip_preset("default")
    cells = CellBatch.from_coords([c], chip.topology)
    prev = None
    for trp in (15000, 10000, 7500, 5000):
        code = int(chip.failures(cells, DDR3_1600.replace(trp=trp, trcd=trp), 85, 64, "read")[0])
        if prev is not None:
            assert code >= prev
        prev = code


def test_determinism_and_seed_dependence():
    a, b = chip_preset("default", 3), chip_preset("default", 3)
    c = chip_preset("default", 4)
    coords = [CellCoords(0, s, m, r, col) for s in range(2) for m in range(2)
              for r in (0, 100, 511) for col in (0, 5)]
    ra = [a.required_timings(x, 70, 64) for x in coords]
    assert ra == [b.required_timings(x, 70, 64) for x in coords]
    assert ra != [c.required_timings(x, 70, 64) for x in coords]


def test_chunked_enumeration_matches_single_batch():
    chip = chip_preset("toy")
    small = list(chip.iter_chunks(chips=[0], rows=range(0, 40), cols=range(0, 16), max_cells=100))
    big = list(chip.iter_chunks(chips=[0], rows=range(0, 40), cols=range(0, 16)))
    assert len(big) == 1 and len(small) > 1
    req_small = np.concatenate([chip.required("trp", b, 85, 64) for b in small])
    assert np.array_equal(req_small, chip.required("trp", big[0], 85, 64))


def test_slow_precharge_mat_is_the_middle():
    chip = chip_preset("clustered")
    M = chip.topology.mats_per_subarray_row
    d = [precharge_arrival_delay(m, M, chip.params) for m in range(M)]
    assert chip.slowest_precharge_mat() == int(np.argmax(d))
    assert 0 < chip.slowest_precharge_mat() < M - 1


def test_required_timings_validates_temperature():
    with pytest.raises(ConfigError):
        chip_preset("default").required_timings(CellCoords(0, 0, 0, 0, 0), 120, 64)
