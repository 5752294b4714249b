"""Simulated profiling infrastructure.

Read and write tests, parameter sweeps, error logs, per-row histograms,
row-mapping estimation and burst-bit error profiles, all evaluated against a
ChipModel. Every test outcome is exactly the set of cells the failure oracle
flags for the test's salts; candidate pruning only skips cells that provably
cannot fail.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import REDUCIBLE, TimingParams, Topology
from .errors import ConfigError
from .variation import CellBatch, ChipModel, components_for

PATTERNS = ("0000", "0011", "0101", "1001", "0110", "1010", "1100", "1111", "row_stripe")
ORDERS = ("ascending", "descending", "column_major")
KIND_TIMING, KIND_RETENTION = 1, 2
KIND_NAMES = {KIND_TIMING: "timing", KIND_RETENTION: "retention"}


def test_salt(op: str, pattern: str, iteration: int, run: int = 0) -> int:
    """Salt naming one (operation, pattern, iteration, run) test instance."""
    op_id = {"read": 0, "write": 1}[op]
    return (((int(run) * 2 + op_id) * 16 + PATTERNS.index(pattern)) << 20) + int(iteration)


@dataclass(frozen=True)
class TestSpec:
    op: str
    timings: TimingParams
    temp_c: float = 85.0
    refresh_ms: float = 64.0
    pattern: str = "0101"
    iterations: int = 10
    order: str = "ascending"
    run: int = 0
    chips: Optional[tuple] = None
    banks: Optional[tuple] = None
    subarrays: Optional[tuple] = None
    rows: Optional[tuple] = None
    mats: Optional[tuple] = None
    cols: Optional[tuple] = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        components_for(self.op)
        if self.pattern not in PATTERNS:
            raise ConfigError(f"unknown data pattern {self.pattern!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.order not in ORDERS:
            raise ConfigError(f"unknown address order {self.order!r}")
        for name in ("chips", "banks", "subarrays", "rows", "mats", "cols"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(int(x) for x in v))

    def replace(self, **changes) -> "TestSpec":
        return dataclasses.replace(self, **changes)

    @property
    def salts(self) -> list:
        return [test_salt(self.op, self.pattern, i, self.run) for i in range(self.iterations)]

    def region(self) -> dict:
        return dict(chips=self.chips, banks=self.banks, subarrays=self.subarrays,
                    rows=self.rows, mats=self.mats, cols=self.cols)


LOG_FIELDS = ("chip", "bank", "subarray", "row_ext", "row_int", "col", "burst_bit",
              "kind", "iteration")


@dataclass
class ErrorLog:
    """Error records as parallel integer columns.

    ``col`` is the cache-line column within the row and ``burst_bit`` the bit
    position (0..63) within that chip's 64-bit share of the line.
    """

    columns: dict = field(default_factory=lambda: {k: np.zeros(0, dtype=np.int64) for k in LOG_FIELDS})
    order: str = "ascending"

    def __len__(self):
        return int(self.columns["chip"].shape[0])

    def __eq__(self, other):
        if not isinstance(other, ErrorLog):
            return NotImplemented
        return all(np.array_equal(self.columns[k], other.columns[k]) for k in LOG_FIELDS)

    def __getitem__(self, name):
        return self.columns[name]

    @classmethod
    def concat(cls, logs: Sequence["ErrorLog"], order: str = "ascending") -> "ErrorLog":
        if not logs:
            return cls(order=order)
        cols = {k: np.concatenate([lg.columns[k] for lg in logs]) for k in LOG_FIELDS}
        return cls(cols, order)._sorted()

    def _sorted(self) -> "ErrorLog":
        c = self.columns
        if len(self) == 0:
            return self
        if self.order == "column_major":
            keys = (c["burst_bit"], c["row_ext"], c["col"], c["subarray"], c["bank"], c["chip"],
                    c["iteration"])
        else:
            keys = (c["burst_bit"], c["col"], c["row_ext"], c["subarray"], c["bank"], c["chip"],
                    c["iteration"])
        idx = np.lexsort(keys)
        if self.order == "descending":
            # iterations stay ascending; addresses within an iteration descend
            it = c["iteration"][idx]
            out = []
            for i in np.unique(it):
                out.append(idx[it == i][::-1])
            idx = np.concatenate(out)
        return ErrorLog({k: v[idx] for k, v in c.items()}, self.order)

    def cell_keys(self) -> set:
        """Distinct failing bit locations, union over iterations."""
        c = self.columns
        return set(zip(*(c[k].tolist() for k in ("chip", "bank", "subarray", "row_ext", "col",
                                                  "burst_bit"))))

    def iteration(self, i: int) -> "ErrorLog":
        mask = self.columns["iteration"] == i
        return ErrorLog({k: v[mask] for k, v in self.columns.items()}, self.order)

    def to_csv(self, handle=None) -> str:
        out = handle or io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["chip", "bank", "subarray", "row_ext", "row_int", "col", "burst_bit",
                    "kind", "iteration"])
        c = self.columns
        for row in zip(*(c[k].tolist() for k in LOG_FIELDS)):
            row = list(row)
            row[7] = KIND_NAMES[row[7]]
            w.writerow(row)
        return out.getvalue() if handle is None else ""


def bit_position(mat: np.ndarray, col_in_mat: np.ndarray, topo: Topology):
    """Map (mat, column-in-mat) to (line column, burst bit 0..63)."""
    k = topo.bits_per_mat
    return col_in_mat // k, mat * k + col_in_mat % k


def cell_of_bit(column, burst_bit, topo: Topology):
    """Inverse of ``bit_position``: (line column, burst bit) -> (mat, col_in_mat)."""
    k = topo.bits_per_mat
    return burst_bit // k, column * k + burst_bit % k


# --- candidate pruning -----------------------------------------------------------------

def _upper_bounds(chip: ChipModel, cells: CellBatch, temp_c: float, refresh_ms: float,
                  comps: Iterable[str]):
    """Per-component requirement upper bounds over every possible salt."""
    ret = chip.retention(cells, temp_c)
    ret_lb = ret * chip.min_vrt_factor
    p = chip.params
    charge = 1.0 + p.gamma_charge * np.maximum(0.0, refresh_ms / ret_lb - p.c0)
    tf = chip.max_test_factor
    ub = {c: chip.required(c, cells, temp_c, refresh_ms, charge, test=tf) for c in comps}
    return ub, ret_lb


def _log_from_cells(chip: ChipModel, cells: CellBatch, kinds: np.ndarray,
                    iteration: int) -> ErrorLog:
    topo = chip.topology
    column, bit = bit_position(cells.mat, cells.col, topo)
    n = len(cells)
    cols = {
        "chip": cells.chip, "bank": cells.bank, "subarray": cells.subarray,
        "row_ext": np.asarray(chip.row_map.to_external(cells.row), dtype=np.int64),
        "row_int": cells.row, "col": column, "burst_bit": bit,
        "kind": kinds.astype(np.int64), "iteration": np.full(n, iteration, dtype=np.int64),
    }
    return ErrorLog({k: np.asarray(v, dtype=np.int64) for k, v in cols.items()})


def run_test(chip: ChipModel, spec: TestSpec) -> ErrorLog:
    """Run a read or write test and log every failing bit of every iteration."""
    comps = components_for(spec.op)
    logs = []
    for cells in chip.iter_chunks(**spec.region()):
        ub, ret_lb = _upper_bounds(chip, cells, spec.temp_c, spec.refresh_ms, comps)
        cand = ret_lb < spec.refresh_ms
        for c in comps:
            cand |= ub[c] > getattr(spec.timings, c)
        if not cand.any():
            continue
        sub = cells.take(np.flatnonzero(cand))
        for i, salt in enumerate(spec.salts):
            codes = chip.failures(sub, spec.timings, spec.temp_c, spec.refresh_ms, spec.op, salt)
            hit = np.flatnonzero(codes)
            if hit.size:
                logs.append(_log_from_cells(chip, sub.take(hit), codes[hit], i))
    return ErrorLog.concat(logs, spec.order)


def run_read_test(chip: ChipModel, spec: TestSpec) -> ErrorLog:
    if spec.op != "read":
        raise ConfigError("run_read_test needs a read TestSpec")
    return run_test(chip, spec)


def run_write_test(chip: ChipModel, spec: TestSpec) -> ErrorLog:
    if spec.op != "write":
        raise ConfigError("run_write_test needs a write TestSpec")
    return run_test(chip, spec)


def burst_bit_error_profile(log: ErrorLog) -> np.ndarray:
    return np.bincount(log["burst_bit"], minlength=64)[:64].astype(np.int64)


# --- sweeps ------------------------------------------------------------------------------

@dataclass
class SweepResult:
    """Union-over-iterations error statistics for every axis combination.

    ``combos`` lists dicts with keys trcd/tras/trp/twr (ps), temp_c, refresh_ms.
    """

    combos: list
    totals: np.ndarray            # failing cells per combo
    row_histogram: np.ndarray     # [combo, row_int mod rows_per_mat]
    row_counts: np.ndarray        # [combo, bank-level external row]
    burst_profile: np.ndarray     # [combo, 64]

    def total(self, **point) -> int:
        for i, c in enumerate(self.combos):
            if all(c[k] == v for k, v in point.items()):
                return int(self.totals[i])
        raise KeyError(point)

    def to_csv(self, handle=None) -> str:
        """Long-format table: one row per (combo, metric, index)."""
        out = handle or io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["trcd_ps", "tras_ps", "trp_ps", "twr_ps", "temp_c", "refresh_ms",
                    "metric", "index", "value"])
        for i, c in enumerate(self.combos):
            head = [c["trcd"], c["tras"], c["trp"], c["twr"], _fmt(c["temp_c"]), _fmt(c["refresh_ms"])]
            w.writerow(head + ["total_errors", "", int(self.totals[i])])
            for r, v in enumerate(self.row_histogram[i].tolist()):
                w.writerow(head + ["row_histogram", r, v])
            for b, v in enumerate(self.burst_profile[i].tolist()):
                w.writerow(head + ["burst_bit", b, v])
        return out.getvalue() if handle is None else ""


def _fmt(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def sweep_combos(axes: dict, template: TestSpec) -> list:
    """Cartesian product of the axes; absent axes take the template's value."""
    known = set(REDUCIBLE) | {"temps", "refresh"}
    unknown = set(axes) - known
    if unknown:
        raise ConfigError(f"unknown sweep axes: {sorted(unknown)}")
    lists = {}
    for comp in REDUCIBLE:
        lists[comp] = [int(v) for v in axes.get(comp, [getattr(template.timings, comp)])]
    lists["temp_c"] = [float(v) for v in axes.get("temps", [template.temp_c])]
    lists["refresh_ms"] = [float(v) for v in axes.get("refresh", [template.refresh_ms])]
    if any(len(v) == 0 for v in lists.values()):
        raise ConfigError("sweep axes must be non-empty")
    keys = ("temp_c", "refresh_ms") + REDUCIBLE
    return [dict(zip(keys, vals)) for vals in itertools.product(*(lists[k] for k in keys))]


def sweep(chip: ChipModel, axes: dict, template: TestSpec) -> SweepResult:
    """Evaluate every axis combination; cells count once per combo however many
    iterations they fail in."""
    topo = chip.topology
    combos = sweep_combos(axes, template)
    comps = components_for(template.op)
    S = topo.cells_per_mat_side
    n_rows_bank = topo.rows_per_bank
    totals = np.zeros(len(combos), dtype=np.int64)
    hist = np.zeros((len(combos), S), dtype=np.int64)
    rows = np.zeros((len(combos), n_rows_bank), dtype=np.int64)
    burst = np.zeros((len(combos), 64), dtype=np.int64)
    groups: dict = {}
    for i, c in enumerate(combos):
        groups.setdefault((c["temp_c"], c["refresh_ms"]), []).append(i)
    salts = template.salts
    for cells in chip.iter_chunks(**template.region()):
        for (temp, refresh), members in groups.items():
            ub, ret_lb = _upper_bounds(chip, cells, temp, refresh, comps)
            applied = np.array([[combos[i][c] for c in comps] for i in members], dtype=np.float64)
            lowest = applied.min(axis=0)
            cand = ret_lb < refresh
            for j, c in enumerate(comps):
                cand |= ub[c] > lowest[j]
            if not cand.any():
                continue
            sub = cells.take(np.flatnonzero(cand))
            failed = np.zeros((len(members), len(sub)), dtype=bool)
            base_ret = chip.retention(sub, temp)
            for salt in salts:
                ret = base_ret * chip.vrt_retention_factor(sub, salt)
                p = chip.params
                charge = 1.0 + p.gamma_charge * np.maximum(0.0, refresh / ret - p.c0)
                tf = chip.test_factor(sub, salt)
                req = np.stack([chip.required(c, sub, temp, refresh, charge, test=tf) for c in comps])
                ret_fail = refresh > ret
                for m in range(len(members)):
                    failed[m] |= ret_fail | (req > applied[m][:, None]).any(axis=0)
            row_ext = np.asarray(chip.row_map.to_external(sub.row), dtype=np.int64)
            bank_row = sub.subarray * topo.rows_per_subarray + row_ext
            hist_key = sub.row % S
            _, bit = bit_position(sub.mat, sub.col, topo)
            for m, ci in enumerate(members):
                f = failed[m]
                totals[ci] += int(f.sum())
                hist[ci] += np.bincount(hist_key[f], minlength=S)
                rows[ci] += np.bincount(bank_row[f], minlength=n_rows_bank)
                burst[ci] += np.bincount(bit[f], minlength=64)
    return SweepResult(combos, totals, hist, rows, burst)


def row_error_counts(chip: ChipModel, template: TestSpec, component: str,
                     values: Sequence[int]) -> np.ndarray:
    """Per bank-level external row, failing cells summed over a one-axis sweep.

    Equal to ``sweep(chip, {component: values}, template).row_counts.sum(0)``
    but computed in one pass: along a single timing axis a cell fails at every
    grid value below its worst requirement, so its contribution is a count
    from a binary search instead of one comparison per grid point.
    """
    comps = components_for(template.op)
    if component not in comps:
        raise ConfigError(f"{component} is not exercised by a {template.op} test")
    grid = np.sort(np.asarray(values, dtype=np.float64))
    if grid.size == 0:
        raise ConfigError("sweep axis must be non-empty")
    topo = chip.topology
    temp, refresh = template.temp_c, template.refresh_ms
    fixed = [c for c in comps if c != component]
    out = np.zeros(topo.rows_per_bank, dtype=np.int64)
    p = chip.params
    for cells in chip.iter_chunks(**template.region()):
        ub, ret_lb = _upper_bounds(chip, cells, temp, refresh, comps)
        cand = (ret_lb < refresh) | (ub[component] > grid[0])
        for c in fixed:
            cand |= ub[c] > getattr(template.timings, c)
        if not cand.any():
            continue
        sub = cells.take(np.flatnonzero(cand))
        always = np.zeros(len(sub), dtype=bool)
        worst = np.zeros(len(sub))
        base_ret = chip.retention(sub, temp)
        for salt in template.salts:
            ret = base_ret * chip.vrt_retention_factor(sub, salt)
            charge = 1.0 + p.gamma_charge * np.maximum(0.0, refresh / ret - p.c0)
            tf = chip.test_factor(sub, salt)
            always |= refresh > ret
            for c in fixed:
                always |= chip.required(c, sub, temp, refresh, charge, test=tf) > getattr(template.timings, c)
            worst = np.maximum(worst, chip.required(component, sub, temp, refresh, charge, test=tf))
        n_fail = np.where(always, grid.size, np.searchsorted(grid, worst, side="left"))
        row_ext = np.asarray(chip.row_map.to_external(sub.row), dtype=np.int64)
        bank_row = sub.subarray * topo.rows_per_subarray + row_ext
        out += np.bincount(bank_row, weights=n_fail, minlength=topo.rows_per_bank).astype(np.int64)
    return out


# --- structure analysis --------------------------------------------------------------

def autocorrelation(series: Sequence[float]) -> np.ndarray:
    """Lagged Pearson correlation: entry k correlates x[:-k] with x[k:].

    Each lag is normalized by the mean and spread of its own overlapping
    windows, so an exactly periodic series scores 1.0 at its period no matter
    where the series starts or ends. Entry 0 is 1.0.
    """
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    out = np.zeros(n)
    if n == 0:
        return out
    out[0] = 1.0
    spec = np.fft.rfft(x, 2 * n)
    cross = np.fft.irfft(spec * np.conj(spec), 2 * n)[:n]
    c1 = np.concatenate([[0.0], np.cumsum(x)])
    c2 = np.concatenate([[0.0], np.cumsum(x * x)])
    for k in range(1, n - 1):
        m = n - k
        sa, sb = c1[m], c1[n] - c1[k]
        qa, qb = c2[m], c2[n] - c2[k]
        va = qa - sa * sa / m
        vb = qb - sb * sb / m
        if va <= 1e-12 * max(qa, 1.0) or vb <= 1e-12 * max(qb, 1.0):
            continue
        out[k] = (cross[k] - sa * sb / m) / np.sqrt(va * vb)
    return out


def dominant_period(series: Sequence[float], rel_tol: float = 0.9) -> int:
    """Fundamental period of a series, 0 when there is no periodic structure.

    After the autocorrelation first drops to zero, the first local maximum
    reaching ``rel_tol`` of the highest value (searched up to half the series
    length) is returned, so multiples of the period are not reported.
    """
    ac = autocorrelation(series)
    n = ac.size
    below = np.flatnonzero(ac[1:] <= 0)
    if below.size == 0:
        return 0
    start = int(below[0]) + 1
    stop = n // 2 + 1
    if stop - start < 3:
        return 0
    window = ac[start:stop]
    top = window.max()
    if top <= 0:
        return 0
    for k in range(1, window.size - 1):
        if window[k] >= window[k - 1] and window[k] >= window[k + 1] and window[k] >= rel_tol * top:
            return start + k
    return start + int(np.argmax(window))


@dataclass(frozen=True)
class RowMapEstimate:
    """For each external row-address bit: (claimed internal bit or None, confidence)."""

    bits: tuple

    def claimed(self) -> dict:
        return {j: b for j, (b, _) in enumerate(self.bits) if b is not None}

    def confidence_by_internal_bit(self) -> list:
        out = [0.5] * len(self.bits)
        for b, conf in self.bits:
            if b is not None:
                out[b] = conf
        return out

    def as_perm(self) -> Optional[tuple]:
        """Internal-bit -> external-bit permutation, when every bit is claimed."""
        claimed = self.claimed()
        if len(claimed) != len(self.bits):
            return None
        perm = [0] * len(self.bits)
        for ext, internal in claimed.items():
            perm[internal] = ext
        return tuple(perm)


def estimate_row_mapping(counts: Sequence[int], rows_per_mat: int) -> RowMapEstimate:
    """Infer the external-to-internal row bit mapping from per-row error counts.

    Within every group of ``rows_per_mat`` consecutive external rows, the row
    with the most errors is taken to be internal row rows_per_mat - 1, the next
    one rows_per_mat - 2, and so on (ties go to the lower external row). The
    counts should come from cells whose error rate grows with internal row
    index, e.g. the even bitlines of every mat.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if rows_per_mat < 2 or rows_per_mat & (rows_per_mat - 1):
        raise ConfigError("rows_per_mat must be a power of two >= 2")
    if counts.size < rows_per_mat or counts.size % rows_per_mat:
        raise ConfigError("counts must cover whole groups of rows_per_mat rows")
    nbits = rows_per_mat.bit_length() - 1
    groups = counts.reshape(-1, rows_per_mat)
    if np.all(groups == groups[:, :1]):
        return RowMapEstimate(tuple((None, 0.5) for _ in range(nbits)))
    ext_rows = np.arange(rows_per_mat)
    agree = np.zeros((nbits, nbits))   # [internal bit, external bit]
    for g in groups:
        order = np.lexsort((ext_rows, -g))       # descending count, then lower row
        expected = np.empty(rows_per_mat, dtype=np.int64)
        expected[order] = rows_per_mat - 1 - np.arange(rows_per_mat)
        for i in range(nbits):
            bi = (expected >> i) & 1
            for j in range(nbits):
                agree[i, j] += np.count_nonzero(bi == ((ext_rows >> j) & 1))
    agree /= groups.size
    conf = np.maximum(agree, 1.0 - agree)
    # greedy injective assignment, most confident pair first; ties to lower bits
    pairs = sorted(((conf[i, j], i, j) for i in range(nbits) for j in range(nbits)),
                   key=lambda t: (-t[0], t[1], t[2]))
    used_i, result = set(), {}
    for c, i, j in pairs:
        if i in used_i or j in result:
            continue
        used_i.add(i)
        result[j] = (i, float(c))
    return RowMapEstimate(tuple(result[j] for j in range(nbits)))
