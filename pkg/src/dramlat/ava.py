"""AVA-DRAM: SECDED (72,64) codec, burst-bit shuffling, latency test region,
online region profiling and ECC correction measurement.

Codeword layout: positions 1..71 form an extended Hamming code with check bits
at the powers of two (1, 2, 4, ..., 64) and data bits at the remaining 64
positions in ascending order; position 0 holds the overall parity bit. A
Codeword72 keeps the 64 data bits and an 8-bit check byte whose bit k (k < 7)
is the Hamming check at position 2**k and whose bit 7 is the overall parity.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .aldram import CHECKERED, WorstCase, grid_range, select_combo, worst_requirements_multi
from .core import DDR3_1600, DDR3_1600_CLOCK_PS, REDUCIBLE, TimingParams
from .errors import ConfigError
from .harness import bit_position, test_salt
from .variation import CellBatch, ChipModel

# --- SECDED ---------------------------------------------------------------------------

PARITY_POSITIONS = tuple(1 << k for k in range(7))
DATA_POSITIONS = tuple(p for p in range(1, 72) if p & (p - 1))
assert len(DATA_POSITIONS) == 64

# per data byte: XOR of the Hamming positions of its set bits
_SYN_TABLE = np.zeros((8, 256), dtype=np.uint8)
for _b in range(8):
    for _v in range(256):
        s = 0
        for _i in range(8):
            if _v >> _i & 1:
                s ^= DATA_POSITIONS[_b * 8 + _i]
        _SYN_TABLE[_b, _v] = s
_PARITY8 = np.array([bin(v).count("1") & 1 for v in range(256)], dtype=np.uint8)
_SYN_LIST = _SYN_TABLE.tolist()


def _data_syndrome(data: int) -> int:
    s = 0
    for b in range(8):
        s ^= _SYN_LIST[b][(data >> (8 * b)) & 0xFF]
    return s


@dataclass(frozen=True)
class Codeword72:
    data: int
    check: int

    def __post_init__(self):
        if not 0 <= self.data < 1 << 64 or not 0 <= self.check < 256:
            raise ConfigError("codeword fields out of range")

    def to_positions(self) -> int:
        """The codeword as a 72-bit integer with bit i = position i."""
        v = (self.check >> 7) & 1
        for k, p in enumerate(PARITY_POSITIONS):
            v |= ((self.check >> k) & 1) << p
        for i, p in enumerate(DATA_POSITIONS):
            v |= ((self.data >> i) & 1) << p
        return v

    @classmethod
    def from_positions(cls, v: int) -> "Codeword72":
        data = 0
        for i, p in enumerate(DATA_POSITIONS):
            data |= ((v >> p) & 1) << i
        check = (v & 1) << 7
        for k, p in enumerate(PARITY_POSITIONS):
            check |= ((v >> p) & 1) << k
        return cls(data, check)

    def flip(self, *positions: int) -> "Codeword72":
        v = self.to_positions()
        for p in positions:
            if not 0 <= p < 72:
                raise ConfigError("codeword position out of range")
            v ^= 1 << p
        return Codeword72.from_positions(v)


def secded_encode(data: int) -> Codeword72:
    if not 0 <= data < 1 << 64:
        raise ConfigError("data must be a 64-bit unsigned integer")
    syn = _data_syndrome(data)
    overall = (bin(data).count("1") + bin(syn).count("1")) & 1
    return Codeword72(data, syn | (overall << 7))


@dataclass(frozen=True)
class DecodeResult:
    status: str                 # clean | corrected | uncorrectable
    data: int
    position: Optional[int] = None


def secded_decode(cw: Codeword72) -> DecodeResult:
    syn = _data_syndrome(cw.data) ^ (cw.check & 0x7F)
    parity = (bin(cw.data).count("1") + bin(cw.check).count("1")) & 1
    if syn == 0 and parity == 0:
        return DecodeResult("clean", cw.data)
    if parity == 1:
        if syn == 0:
            return DecodeResult("corrected", cw.data, 0)
        if syn >= 72:
            return DecodeResult("uncorrectable", cw.data)
        fixed = cw.flip(syn)
        return DecodeResult("corrected", fixed.data, syn)
    return DecodeResult("uncorrectable", cw.data)


def _bytes_of(data: np.ndarray) -> np.ndarray:
    return data.astype("<u8").view(np.uint8).reshape(-1, 8)


def encode_batch(data: np.ndarray) -> np.ndarray:
    """Check bytes for an array of uint64 data words."""
    by = _bytes_of(np.asarray(data, dtype=np.uint64))
    syn = np.zeros(by.shape[0], dtype=np.uint8)
    par = np.zeros(by.shape[0], dtype=np.uint8)
    for b in range(8):
        syn ^= _SYN_TABLE[b][by[:, b]]
        par ^= _PARITY8[by[:, b]]
    par ^= _PARITY8[syn]
    return syn | (par << np.uint8(7))


# decode status codes for the batch decoder
CLEAN, CORRECTED, UNCORRECTABLE = 0, 1, 2

_DATA_INDEX_OF_POSITION = np.full(128, -1, dtype=np.int64)
for _i, _p in enumerate(DATA_POSITIONS):
    _DATA_INDEX_OF_POSITION[_p] = _i


def decode_batch(data: np.ndarray, check: np.ndarray):
    """Vectorized decode; returns (status codes, corrected data)."""
    data = np.asarray(data, dtype=np.uint64).copy()
    check = np.asarray(check, dtype=np.uint8)
    by = _bytes_of(data)
    syn = check & np.uint8(0x7F)
    par = _PARITY8[check]
    for b in range(8):
        syn = syn ^ _SYN_TABLE[b][by[:, b]]
        par = par ^ _PARITY8[by[:, b]]
    status = np.full(data.shape[0], UNCORRECTABLE, dtype=np.int8)
    status[(syn == 0) & (par == 0)] = CLEAN
    single = (par == 1) & (syn < 72)
    status[single] = CORRECTED
    idx = _DATA_INDEX_OF_POSITION[syn.astype(np.int64)]
    fix = single & (idx >= 0)
    data[fix] ^= np.left_shift(np.uint64(1), idx[fix].astype(np.uint64))
    return status, data


# --- shuffling ------------------------------------------------------------------------

@dataclass(frozen=True)
class ShuffleMap:
    """Per-chip permutation of the 8 burst positions: chip c's burst b is sent
    in burst ``perms[c][b]``."""

    perms: tuple

    def __post_init__(self):
        perms = tuple(tuple(int(x) for x in p) for p in self.perms)
        if len(perms) != 8 or any(sorted(p) != list(range(8)) for p in perms):
            raise ConfigError("shuffle map needs 8 permutations of 0..7")
        object.__setattr__(self, "perms", perms)

    @classmethod
    def identity(cls) -> "ShuffleMap":
        return cls(tuple(tuple(range(8)) for _ in range(8)))

    @classmethod
    def rotation(cls) -> "ShuffleMap":
        return cls(tuple(tuple((b + c) % 8 for b in range(8)) for c in range(8)))

    def inverse(self) -> "ShuffleMap":
        inv = []
        for p in self.perms:
            q = [0] * 8
            for b, t in enumerate(p):
                q[t] = b
            inv.append(tuple(q))
        return ShuffleMap(tuple(inv))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.perms, dtype=np.int64)


def apply_shuffle(smap: ShuffleMap, line: np.ndarray) -> np.ndarray:
    """Move bit (chip c, burst b, lane l) to burst ``smap.perms[c][b]``.

    ``line`` has shape (..., 8 chips, 8 bursts, 8 lanes).
    """
    line = np.asarray(line)
    if line.shape[-3:] != (8, 8, 8):
        raise ConfigError("a line is 8 chips x 8 bursts x 8 lanes")
    out = np.empty_like(line)
    p = smap.array
    for c in range(8):
        out[..., c, p[c], :] = line[..., c, :, :]
    return out


def unshuffle(smap: ShuffleMap, line: np.ndarray) -> np.ndarray:
    return apply_shuffle(smap.inverse(), line)


def codeword_bits(line: np.ndarray) -> np.ndarray:
    """Per-burst 64-bit data words of a (shuffled) line: bit c*8+l of word b is
    (chip c, burst b, lane l). Shape (..., 8 bursts, 64)."""
    line = np.asarray(line)
    return np.moveaxis(line, -3, -2).reshape(line.shape[:-3] + (8, 64))


# --- test region ------------------------------------------------------------------------

@dataclass(frozen=True)
class TestRegion:
    """Reserved architecturally slowest cells of every subarray.

    ``full_rows`` are tested across every mat; ``mat_rows`` are (row, mat)
    pairs tested within a single mat. All listed rows are withheld from data.
    """

    full_rows: tuple
    mat_rows: tuple = ()
    reserved: bool = True

    __test__ = False

    @property
    def reserved_rows(self) -> tuple:
        return tuple(sorted(set(self.full_rows) | {r for r, _ in self.mat_rows}))

    def cells_per_subarray(self, chip: ChipModel) -> int:
        t = chip.topology
        return len(self.full_rows) * t.mats_per_subarray_row * t.cells_per_mat_side + \
            len(self.mat_rows) * t.cells_per_mat_side

    def chunks(self, chip: ChipModel) -> Iterator[CellBatch]:
        yield from chip.iter_chunks(rows=self.full_rows)
        for row, mat in self.mat_rows:
            yield from chip.iter_chunks(rows=(row,), mats=(mat,))

    def data_rows(self, chip: ChipModel) -> np.ndarray:
        rows = np.arange(chip.topology.rows_per_subarray)
        return rows[~np.isin(rows, self.reserved_rows)]


def select_test_region(chip: ChipModel) -> TestRegion:
    """Farthest row of each bitline parity in every mat, plus the next slowest
    row of the mat that receives the precharge signal last."""
    t = chip.topology
    S = t.cells_per_mat_side
    rows = np.arange(t.rows_per_subarray)
    full = tuple(int(r) for r in rows if r % S in (0, S - 1))
    slow_mat = chip.slowest_precharge_mat()
    best_row, best_val = None, -1.0
    for r in rows:
        if int(r) in full:
            continue
        cells = next(chip.iter_chunks(chips=(0,), banks=(0,), subarrays=(0,), rows=(int(r),),
                                      mats=(slow_mat,)))
        v = float(chip.deterministic_required("trp", cells).max())
        if v > best_val + 1e-9:
            best_row, best_val = int(r), v
    mat_rows = ((best_row, slow_mat),) if best_row is not None else ()
    return TestRegion(full, mat_rows)


# --- profiling -----------------------------------------------------------------------------

def ava_grid(standard: TimingParams = DDR3_1600, step_ps: int = 1250) -> dict:
    lows = {"trcd": 5000, "tras": 10000, "trp": 5000, "twr": 5000}
    return {c: sorted(set(grid_range(getattr(standard, c), lows[c], step_ps)) |
                      {getattr(standard, c)}) for c in REDUCIBLE}


@dataclass(frozen=True)
class AvaProfile:
    minimal: Optional[dict]        # minimal error-free grid combination (None: nothing passed)
    timings: TimingParams          # applied timings, with the one-cycle margin
    temp_c: float
    refresh_ms: float

    def reduction(self, standard: TimingParams = DDR3_1600) -> dict:
        return {"read": 1 - self.timings.read_path_ps() / standard.read_path_ps(),
                "write": 1 - self.timings.write_path_ps() / standard.write_path_ps()}


def region_worst(chip: ChipModel, region, temp_c: float, refresh_ms: float,
                 patterns: Sequence[str] = CHECKERED, iterations: int = 1):
    """Worst read and write requirements over the test region."""
    points = [("read", temp_c, refresh_ms), ("write", temp_c, refresh_ms)]
    return worst_requirements_multi(chip, points, patterns, iterations, region=region)


def ava_profile(chip: ChipModel, region: TestRegion, temp_c: float,
                grid: Optional[dict] = None, refresh_ms: float = 64.0,
                standard: TimingParams = DDR3_1600, clock_ps: int = DDR3_1600_CLOCK_PS,
                patterns: Sequence[str] = CHECKERED, iterations: int = 1) -> AvaProfile:
    """Minimal-sum grid combination error-free over the test region only, with
    one clock cycle added to every parameter reduced below standard."""
    grid = grid or ava_grid(standard)
    rd, wr = region_worst(chip, region, temp_c, refresh_ms, patterns, iterations)
    combo = select_combo(grid, lambda c: rd.passes(c, "read") and wr.passes(c, "write"))
    if combo is None:
        return AvaProfile(None, standard, temp_c, refresh_ms)
    applied = {}
    for c in REDUCIBLE:
        std = getattr(standard, c)
        applied[c] = min(std, combo[c] + clock_ps) if combo[c] < std else combo[c]
    return AvaProfile(combo, standard.replace(**applied), temp_c, refresh_ms)


# --- correction measurement ----------------------------------------------------------------

@dataclass
class CorrectionStats:
    lines: int = 0
    codewords: int = 0
    total_errors: int = 0          # erroneous data bits
    corrected: int = 0             # erroneous bits in codewords decoded to the right data
    uncorrectable: int = 0         # erroneous bits in codewords that were not
    multi_bit_codewords: int = 0

    def add(self, other: "CorrectionStats"):
        for f in ("lines", "codewords", "total_errors", "corrected", "uncorrectable",
                  "multi_bit_codewords"):
            setattr(self, f, getattr(self, f) + getattr(other, f))


def sample_lines(chip: ChipModel, n_lines: int, seed: int,
                 rows: Optional[np.ndarray] = None) -> dict:
    """Uniformly sampled (bank, subarray, row, column) line addresses."""
    t = chip.topology
    rng = np.random.default_rng(seed)
    row_pool = np.arange(t.rows_per_subarray) if rows is None else np.asarray(rows)
    return {
        "bank": rng.integers(0, t.banks_per_rank, n_lines),
        "subarray": rng.integers(0, t.subarrays_per_bank, n_lines),
        "row": row_pool[rng.integers(0, row_pool.size, n_lines)],
        "column": rng.integers(0, t.columns_per_row, n_lines),
    }


def line_failures(chip: ChipModel, lines: dict, timings: TimingParams, temp_c: float,
                  refresh_ms: float, op: str = "read", salt: Optional[int] = 0) -> np.ndarray:
    """Failure mask of shape (lines, 8 chips, 8 bursts, 8 lanes)."""
    return line_failure_codes(chip, lines, timings, temp_c, refresh_ms, op, salt) > 0


def line_failure_codes(chip: ChipModel, lines: dict, timings: TimingParams, temp_c: float,
                       refresh_ms: float, op: str = "read", salt: Optional[int] = 0) -> np.ndarray:
    """Per-bit outcome codes (0 pass, 1 timing, 2 retention), shape (lines, 8, 8, 8)."""
    t = chip.topology
    n = len(lines["row"])
    bits = np.arange(64)
    # cell order: line, chip, bit
    L = np.repeat(np.arange(n), 8 * 64)
    C = np.tile(np.repeat(np.arange(8), 64), n)
    B = np.tile(bits, 8 * n)
    column = lines["column"][L]
    mat = B // t.bits_per_mat
    col_in_mat = column * t.bits_per_mat + B % t.bits_per_mat
    cells = CellBatch(C, lines["bank"][L], lines["subarray"][L], lines["row"][L], mat, col_in_mat)
    codes = chip.failures(cells, timings, temp_c, refresh_ms, op, salt)
    return codes.reshape(n, 8, 8, 8)


def tally_line_errors(fail: np.ndarray, smap: ShuffleMap, rng: np.random.Generator) -> CorrectionStats:
    """Encode random data per codeword, flip failing bits, decode and count."""
    n = fail.shape[0]
    shuffled = apply_shuffle(smap, fail)
    err_bits = codeword_bits(shuffled).reshape(n * 8, 64)
    counts = err_bits.sum(axis=1)
    stats = CorrectionStats(lines=n, codewords=n * 8, total_errors=int(counts.sum()),
                            multi_bit_codewords=int((counts >= 2).sum()))
    hit = np.flatnonzero(counts)
    if hit.size == 0:
        return stats
    data = rng.integers(0, 1 << 63, hit.size, dtype=np.uint64) * np.uint64(2) + \
        rng.integers(0, 2, hit.size, dtype=np.uint64)
    check = encode_batch(data)
    weights = np.left_shift(np.uint64(1), np.arange(64, dtype=np.uint64))
    mask = (err_bits[hit].astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)
    status, decoded = decode_batch(data ^ mask, check)
    ok = (status != UNCORRECTABLE) & (decoded == data)
    stats.corrected = int(counts[hit][ok].sum())
    stats.uncorrectable = stats.total_errors - stats.corrected
    return stats


def evaluate_correction(chip: ChipModel, timings: TimingParams, temp_c: float,
                        refresh_ms: float, smap: Optional[ShuffleMap] = None,
                        trials: int = 4096, seed: int = 0, op: str = "read",
                        rows: Optional[np.ndarray] = None, batch: int = 4096) -> CorrectionStats:
    """Sample ``trials`` cache lines and count how ECC handles their errors.

    Line addresses, test salts and the random data are all derived from
    ``seed``; the shuffle map only changes which codeword each bit joins, so
    runs with different maps see identical raw errors.
    """
    smap = smap or ShuffleMap.identity()
    total = CorrectionStats()
    rng_data = np.random.default_rng([seed, 1])
    done = 0
    while done < trials:
        n = min(batch, trials - done)
        lines = sample_lines(chip, n, seed * 1_000_003 + done, rows)
        salt = test_salt(op, CHECKERED[(done // batch) % 8], done // batch)
        fail = line_failures(chip, lines, timings, temp_c, refresh_ms, op, salt)
        total.add(tally_line_errors(fail, smap, rng_data))
        done += n
    return total


def newly_corrected_fraction(identity: CorrectionStats, shuffled: CorrectionStats) -> float:
    """Share of the errors plain ECC leaves uncorrected that shuffling corrects."""
    left = identity.total_errors - identity.corrected
    if left == 0:
        return 0.0
    return (shuffled.corrected - identity.corrected) / left


def correction_csv(rows: Sequence[tuple]) -> str:
    """CSV of (seed, total, corrected_noshuffle, corrected_shuffle) rows."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["seed", "total", "corrected_noshuffle", "corrected_shuffle"])
    for r in rows:
        w.writerow(list(r))
    return out.getvalue()
