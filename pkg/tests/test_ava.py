import itertools
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dramlat.aldram import select_combo
from dramlat.ava import (CLEAN, CORRECTED, UNCORRECTABLE, Codeword72, CorrectionStats, ShuffleMap,
                         apply_shuffle, ava_grid, ava_profile, codeword_bits, decode_batch,
                         encode_batch, evaluate_correction, newly_corrected_fraction,
                         secded_decode, secded_encode, select_test_region, tally_line_errors,
                         unshuffle)
from dramlat.core import DDR3_1600, Topology
from dramlat.errors import ConfigError
from dramlat.presets import chip_preset
from dramlat.variation import ChipModel, VariationParams

words = st.integers(0, (1 << 64) - 1)


def syndrome_of_positions(v: int):
    """Independent parity-check oracle: XOR of set positions and overall parity."""
    s = 0
    for p in range(72):
        if v >> p & 1:
            s ^= p
    return s & 0x7F, bin(v).count("1") & 1


def test_zero_word():
    assert secded_encode(0) == Codeword72(0, 0)


@given(words, words)
def test_linearity(x, y):
    a, b, c = secded_encode(x), secded_encode(y), secded_encode(x ^ y)
    assert (a.data ^ b.data, a.check ^ b.check) == (c.data, c.check)


@given(words)
def test_codewords_satisfy_parity_checks(x):
    assert syndrome_of_positions(secded_encode(x).to_positions()) == (0, 0)


@given(words)
def test_round_trip_and_single_flips(x):
    cw = secded_encode(x)
    assert secded_decode(cw).status == "clean" and secded_decode(cw).data == x
    for p in range(72):
        r = secded_decode(cw.flip(p))
        assert r.status == "corrected" and r.data == x and r.position == p


def test_all_double_flips_detected_for_one_word():
    x = random.Random(7).getrandbits(64)
    cw = secded_encode(x)
    pairs = list(itertools.combinations(range(72), 2))
    assert len(pairs) == 2556
    assert all(secded_decode(cw.flip(i, j)).status == "uncorrectable" for i, j in pairs)


def test_batch_codec_agrees_with_scalar():
    rng = random.Random(3)
    xs = [rng.getrandbits(64) for _ in range(200)]
    chk = encode_batch(np.array(xs, dtype=np.uint64))
    assert [int(c) for c in chk] == [secded_encode(x).check for x in xs]
    flips = [rng.sample(range(72), rng.choice([1, 2])) for _ in xs]
    bad = [secded_encode(x).flip(*f) for x, f in zip(xs, flips)]
    st_, data = decode_batch(np.array([b.data for b in bad], dtype=np.uint64),
                             np.array([b.check for b in bad], dtype=np.uint8))
    name = {CLEAN: "clean", CORRECTED: "corrected", UNCORRECTABLE: "uncorrectable"}
    for s, d, b in zip(st_, data, bad):
        ref = secded_decode(b)
        assert name[int(s)] == ref.status
        if ref.status != "uncorrectable":
            assert int(d) == ref.data


def test_codeword_range_checks():
    with pytest.raises(ConfigError):
        secded_encode(1 << 64)
    with pytest.raises(ConfigError):
        secded_encode(0).flip(72)


perm8 = st.permutations(list(range(8)))


@given(st.lists(perm8, min_size=8, max_size=8), st.integers(0, 2 ** 32))
def test_shuffle_round_trip(perms, seed):
    smap = ShuffleMap(tuple(tuple(p) for p in perms))
    line = np.random.default_rng(seed).integers(0, 2, (3, 8, 8, 8))
    assert np.array_equal(unshuffle(smap, apply_shuffle(smap, line)), line)
    # every codeword keeps 8 bits from each chip
    cw = codeword_bits(apply_shuffle(smap, np.broadcast_to(np.arange(8)[:, None, None], (8, 8, 8))))
    assert all(sorted(np.bincount(w, minlength=8)) == [8] * 8 for w in cw)


def test_shuffle_identity_and_validation():
    line = np.random.default_rng(1).integers(0, 2, (8, 8, 8))
    assert np.array_equal(apply_shuffle(ShuffleMap.identity(), line), line)
    with pytest.raises(ConfigError):
        ShuffleMap(((0,) * 8,) * 8)


def constructed_pattern():
    fail = np.zeros((1, 8, 8, 8), dtype=bool)
    fail[0, :, 3, 5] = True       # one bad bit in burst 3 of every chip
    return fail


def test_same_burst_cluster_separation():
    rng = np.random.default_rng(0)
    ident = tally_line_errors(constructed_pattern(), ShuffleMap.identity(), rng)
    rot = tally_line_errors(constructed_pattern(), ShuffleMap.rotation(), rng)
    assert ident.total_errors == 8 and ident.uncorrectable == 8 and ident.multi_bit_codewords == 1
    assert rot.total_errors == 8 and rot.corrected == 8 and rot.multi_bit_codewords == 0
    per_cw = codeword_bits(apply_shuffle(ShuffleMap.rotation(), constructed_pattern()))[0].sum(axis=1)
    assert list(per_cw) == [1] * 8


def test_test_region_flat_profile_tie_break():
    chip = ChipModel(Topology(banks_per_rank=1, subarrays_per_bank=1, mats_per_subarray_row=4),
                     VariationParams.disabled())
    region = select_test_region(chip)
    assert region.full_rows == (0, 511)
    assert len(region.mat_rows) <= 1
    assert region.cells_per_subarray(chip) == 2 * 4 * 512 + len(region.mat_rows) * 512
    assert not set(region.reserved_rows) & set(region.data_rows(chip).tolist())


def test_test_region_is_slowest_on_noise_free_chip():
    chip = chip_preset("toy")
    region = select_test_region(chip)
    worst_region = max(float(chip.deterministic_required("tras", b).max()) for b in region.chunks(chip))
    data = chip.iter_chunks(rows=region.data_rows(chip))
    assert all(float(chip.deterministic_required("tras", b).max()) <= worst_region for b in data)


def brute_force_minimal(chip, grid, temp_c, refresh_ms):
    """Minimal combination by direct failure evaluation of every cell."""
    def ok(combo):
        t = DDR3_1600.replace(**combo)
        for op in ("read", "write"):
            for b in chip.iter_chunks():
                if chip.failures(b, t, temp_c, refresh_ms, op).any():
                    return False
        return True
    return select_combo(grid, ok)


MINI = Topology(banks_per_rank=1, subarrays_per_bank=1, mats_per_subarray_row=4,
                rows_per_subarray=64, cells_per_mat_side=64)


def test_ava_profile_equals_full_chip_brute_force_on_small_noise_free_chip():
    chip = ChipModel(MINI, chip_preset("toy").params)
    grid = {"trcd": [13750, 10000, 7500, 5000], "tras": [35000, 25000, 20000, 15000],
            "trp": [13750, 10000, 7500, 5000], "twr": [15000, 10000, 5000]}
    prof = ava_profile(chip, select_test_region(chip), 85, grid)
    assert prof.minimal == brute_force_minimal(chip, grid, 85, 64)
    for c, v in prof.minimal.items():
        std = getattr(DDR3_1600, c)
        assert getattr(prof.timings, c) == (min(std, v + 1250) if v < std else v)


def test_ava_profile_monotone_in_temperature():
    chip = chip_preset("typical")
    region = select_test_region(chip)
    cold, hot = ava_profile(chip, region, 55), ava_profile(chip, region, 85)
    assert all(getattr(hot.timings, c) >= getattr(cold.timings, c) for c in ("trcd", "tras", "trp", "twr"))


def test_ava_grid_contains_standard():
    g = ava_grid()
    assert g["trcd"][-1] == DDR3_1600.trcd and g["trcd"][0] == 5000


def test_error_free_operating_point_is_zero():
    s = evaluate_correction(chip_preset("clustered"), DDR3_1600, 55, 64, trials=256)
    assert (s.total_errors, s.corrected, s.uncorrectable) == (0, 0, 0)
    assert newly_corrected_fraction(s, s) == 0.0


def test_correction_is_deterministic_and_shuffle_helps():
    from dramlat.presets import CLUSTERED_OPERATING as op
    chip = chip_preset("clustered", 2)
    a = evaluate_correction(chip, op.timings, op.temp_c, op.refresh_ms, trials=512, seed=2)
    b = evaluate_correction(chip, op.timings, op.temp_c, op.refresh_ms, trials=512, seed=2)
    r = evaluate_correction(chip, op.timings, op.temp_c, op.refresh_ms, ShuffleMap.rotation(),
                            trials=512, seed=2)
    assert a == b
    assert r.total_errors == a.total_errors > 0
    assert r.corrected >= a.corrected
    assert isinstance(a, CorrectionStats)
