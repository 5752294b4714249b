"""Seeded per-cell latency and retention model.

Every quantity is a pure function of (seed, cell coordinates, operating point).
Per-cell noise comes from a counter-based hash, so nothing is stored per cell
and a whole chip can be evaluated chunk by chunk in bounded memory.

Minimal reliable value of a timing component X for one cell::

    req_X = max(floor_X, base_X * A_X * tau(T) * (1 + eps_X) * g(c))

    A_X   = 1 + kappa_bl * d_bl + kappa_wl * d_wl   (+ kappa_pre * p_norm for tRP)
    tau   = 1 + lambda * (T - 55)
    eps_X = clip(sigma * z, -3 sigma, 3 sigma)
    g     = 1 + gamma * max(0, refresh / retention(T) - c0)

A test run additionally multiplies the requirement by a one-sided factor
``1 + sigma_test * min(|z_salt|, 3)`` drawn per (cell, salt). The salt encodes
operation, data pattern, iteration and run, which is how data-pattern and
read/write sensitivity are represented.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np
from scipy.special import ndtri

from .core import REDUCIBLE, RowMap, TimingParams, Topology
from .errors import ConfigError

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# noise stream identifiers
STREAMS = {"trcd": 1, "tras": 2, "trp": 3, "twr": 4, "retention": 5, "test": 6, "vrt": 7}

READ_COMPONENTS = ("trcd", "tras", "trp")
WRITE_COMPONENTS = ("trcd", "twr", "trp")

DEFAULT_FLOORS_PS = {"trcd": 5000, "tras": 10000, "trp": 5000, "twr": 2500}
DEFAULT_BASE_PS = {"trcd": 6000, "tras": 15500, "trp": 5800, "twr": 6200}

REFERENCE_TEMP_C = 55.0
RETENTION_REFERENCE_C = 85.0

PASS, FAIL_TIMING, FAIL_RETENTION = "pass", "timing", "retention"


def components_for(op: str) -> tuple:
    if op == "read":
        return READ_COMPONENTS
    if op == "write":
        return WRITE_COMPONENTS
    raise ConfigError(f"op must be 'read' or 'write', got {op!r}")


def _splitmix_int(x: int) -> int:
    x = (x + GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def stream_key(seed: int, stream: int, salt: int = 0) -> int:
    """64-bit key naming one independent noise stream."""
    k = _splitmix_int(int(seed) & MASK64)
    k = _splitmix_int(k ^ (int(stream) & MASK64))
    return _splitmix_int(k ^ (int(salt) & MASK64))


def hash_uniform(key: int, index: np.ndarray) -> np.ndarray:
    """Uniform (0, 1) deviates, one per uint64 index, for the given key."""
    x = np.asarray(index, dtype=np.uint64) * np.uint64(GOLDEN) + np.uint64(key)
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / (1 << 53))


def hash_normal(key: int, index: np.ndarray) -> np.ndarray:
    return ndtri(hash_uniform(key, index))


@dataclass(frozen=True)
class VariationParams:
    kappa_bitline: float = 0.25
    kappa_wordline: float = 0.05
    kappa_precharge: float = 0.15
    alpha_ps: float = 120.0
    beta_ps: float = 15.0
    sigma_process: float = 0.04
    sigma_test: float = 0.01
    lambda_temp: float = 0.004
    retention_median_ms: float = 2000.0
    retention_sigma: float = 0.6
    gamma_charge: float = 0.1
    c0: float = 0.25
    vrt_prob: float = 0.0
    vrt_factor: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("kappa_bitline", "kappa_wordline", "kappa_precharge", "sigma_process",
                     "sigma_test", "lambda_temp", "retention_sigma", "gamma_charge", "c0",
                     "beta_ps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"variation.{name} must be >= 0")
        # alpha == beta is allowed: it is the equal-slope degenerate case
        if self.alpha_ps < self.beta_ps:
            raise ConfigError("variation.alpha_ps must be >= beta_ps")
        if self.retention_median_ms <= 0:
            raise ConfigError("variation.retention_median_ms must be positive")
        if not 0 <= self.vrt_prob <= 1 or self.vrt_factor <= 0:
            raise ConfigError("variation.vrt_prob must be in [0, 1] and vrt_factor > 0")
        if not 0 <= int(self.seed) <= MASK64:
            raise ConfigError("variation.seed must be a 64-bit unsigned integer")

    def replace(self, **changes) -> "VariationParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def disabled(cls, **overrides) -> "VariationParams":
        """No architectural, process, temperature or charge variation."""
        values = dict(kappa_bitline=0.0, kappa_wordline=0.0, kappa_precharge=0.0,
                      sigma_process=0.0, sigma_test=0.0, lambda_temp=0.0,
                      retention_sigma=0.0, gamma_charge=0.0, alpha_ps=0.0, beta_ps=0.0)
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class CellCoords:
    bank: int
    subarray: int
    mat_index: int
    row_in_mat: int
    col_in_mat: int
    chip: int = 0

    @property
    def bitline_parity(self) -> int:
        return self.col_in_mat % 2


def bitline_distance(coords: CellCoords, topo: Topology) -> float:
    """Normalized distance from the cell to its own sense-amplifier row."""
    n = topo.cells_per_mat_side
    r = coords.row_in_mat
    if not 0 <= r < n:
        raise ConfigError("row_in_mat out of range")
    return float(_bitline_distance(np.asarray(r), np.asarray(coords.col_in_mat), n))


def _bitline_distance(row_in_mat, col, n):
    r = row_in_mat.astype(np.float64)
    even = (col % 2) == 0
    return np.where(even, r, (n - 1) - r) / (n - 1)


def precharge_arrival_delay(m, M: int, params: VariationParams):
    """Delay of the faster of the main and the looped-back precharge signal."""
    m_arr = np.asarray(m)
    if np.any(m_arr >= M) or np.any(m_arr < 0):
        raise ConfigError("mat index out of range")
    d = np.minimum(m_arr * params.alpha_ps,
                   (M - 1) * params.beta_ps + (M - 1 - m_arr) * params.alpha_ps)
    return float(d) if np.ndim(d) == 0 else d


@dataclass
class CellBatch:
    """Coordinates of many cells, plus lazily derived static quantities."""

    chip: np.ndarray
    bank: np.ndarray
    subarray: np.ndarray
    row: np.ndarray       # internal row within the subarray
    mat: np.ndarray
    col: np.ndarray       # column within the mat
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return int(self.row.shape[0])

    def take(self, idx) -> "CellBatch":
        return CellBatch(self.chip[idx], self.bank[idx], self.subarray[idx], self.row[idx],
                         self.mat[idx], self.col[idx],
                         {k: v[idx] for k, v in self._cache.items()})

    @classmethod
    def from_coords(cls, coords, topo: Topology) -> "CellBatch":
        coords = list(coords)

        def arr(name):
            return np.array([getattr(c, name) for c in coords], dtype=np.int64)

        return cls(arr("chip"), arr("bank"), arr("subarray"), arr("row_in_mat"),
                   arr("mat_index"), arr("col_in_mat"))


class ChipModel:
    """Immutable synthetic module model.

    ``base_ps`` holds the noise-free requirement of a cell at zero distance,
    55 C and full charge; ``floors_ps`` the physical minimum of each component.
    """

    def __init__(self, topology: Topology, params: Optional[VariationParams] = None,
                 base_ps: Optional[dict] = None, floors_ps: Optional[dict] = None,
                 row_map: Optional[RowMap] = None, name: str = "custom"):
        self.topology = topology
        self.params = params or VariationParams()
        self.base_ps = dict(DEFAULT_BASE_PS, **(base_ps or {}))
        self.floors_ps = dict(DEFAULT_FLOORS_PS, **(floors_ps or {}))
        for k in REDUCIBLE:
            if self.base_ps[k] <= 0 or self.floors_ps[k] < 0:
                raise ConfigError(f"base/floor for {k} must be positive")
        self.row_map = row_map or RowMap.identity(topology.row_address_bits)
        if self.row_map.bits != topology.row_address_bits:
            raise ConfigError("row map width must match the row address width")
        self.name = name
        M = topology.mats_per_subarray_row
        if M > 1 and self.params.alpha_ps > 0:
            delays = precharge_arrival_delay(np.arange(M), M, self.params)
            self._pre_norm = np.asarray(delays, dtype=np.float64) / ((M - 1) * self.params.alpha_ps)
        else:
            self._pre_norm = np.zeros(M)

    def __repr__(self):
        return f"ChipModel(name={self.name!r}, seed={self.params.seed})"

    def with_params(self, **changes) -> "ChipModel":
        return ChipModel(self.topology, self.params.replace(**changes), self.base_ps,
                         self.floors_ps, self.row_map, self.name)

    # -- static per-cell quantities -------------------------------------------------

    def linear_index(self, cells: CellBatch) -> np.ndarray:
        if "index" not in cells._cache:
            t = self.topology
            idx = cells.chip.astype(np.uint64)
            for value, radix in ((cells.bank, t.banks_per_rank),
                                 (cells.subarray, t.subarrays_per_bank),
                                 (cells.row, t.rows_per_subarray),
                                 (cells.mat, t.mats_per_subarray_row),
                                 (cells.col, t.cells_per_mat_side)):
                idx = idx * np.uint64(radix) + value.astype(np.uint64)
            cells._cache["index"] = idx
        return cells._cache["index"]

    def row_in_mat(self, cells: CellBatch) -> np.ndarray:
        return cells.row % self.topology.cells_per_mat_side

    def slowest_precharge_mat(self) -> int:
        return int(np.argmax(self._pre_norm))

    def architectural_factor(self, component: str, cells: CellBatch) -> np.ndarray:
        """Noise-free distance factor A_X for each cell."""
        key = "A_" + component
        if key not in cells._cache:
            t = self.topology
            p = self.params
            S = t.cells_per_mat_side
            d_bl = _bitline_distance(self.row_in_mat(cells), cells.col, S)
            wl_span = max(1, t.mats_per_subarray_row * S - 1)
            d_wl = (cells.mat * S + cells.col) / wl_span
            a = 1.0 + p.kappa_bitline * d_bl + p.kappa_wordline * d_wl
            if component == "trp":
                a = a + p.kappa_precharge * self._pre_norm[cells.mat]
            cells._cache[key] = a
        return cells._cache[key]

    def process_factor(self, component: str, cells: CellBatch) -> np.ndarray:
        key = "E_" + component
        if key not in cells._cache:
            s = self.params.sigma_process
            if s == 0:
                cells._cache[key] = np.ones(len(cells))
            else:
                z = hash_normal(stream_key(self.params.seed, STREAMS[component]),
                                self.linear_index(cells))
                cells._cache[key] = 1.0 + np.clip(s * z, -3 * s, 3 * s)
        return cells._cache[key]

    def retention_85(self, cells: CellBatch) -> np.ndarray:
        """Per-cell retention time in ms at 85 C."""
        if "R85" not in cells._cache:
            p = self.params
            if p.retention_sigma == 0:
                r = np.full(len(cells), float(p.retention_median_ms))
            else:
                z = hash_normal(stream_key(p.seed, STREAMS["retention"]), self.linear_index(cells))
                r = p.retention_median_ms * np.exp(p.retention_sigma * z)
            cells._cache["R85"] = r
        return cells._cache["R85"]

    # -- operating-point dependent quantities ---------------------------------------

    def retention(self, cells: CellBatch, temp_c: float) -> np.ndarray:
        return self.retention_85(cells) * 2.0 ** ((RETENTION_REFERENCE_C - temp_c) / 10.0)

    def temperature_factor(self, temp_c: float) -> float:
        return 1.0 + self.params.lambda_temp * (temp_c - REFERENCE_TEMP_C)

    def charge_factor(self, cells: CellBatch, temp_c: float, refresh_ms: float) -> np.ndarray:
        p = self.params
        if p.gamma_charge == 0:
            return np.ones(len(cells))
        c = refresh_ms / self.retention(cells, temp_c)
        return 1.0 + p.gamma_charge * np.maximum(0.0, c - p.c0)

    def required(self, component: str, cells: CellBatch, temp_c: float,
                 refresh_ms: float, charge: Optional[np.ndarray] = None,
                 test: Union[float, np.ndarray] = 1.0) -> np.ndarray:
        """Minimal reliable value (ps, float) of one component for each cell.

        ``test`` scales the variable part for a stressful test; the physical
        floor is a hard minimum and is not scaled.
        """
        if component not in REDUCIBLE:
            raise ConfigError(f"no variation model for {component}")
        if charge is None:
            charge = self.charge_factor(cells, temp_c, refresh_ms)
        v = (self.base_ps[component] * self.architectural_factor(component, cells)
             * self.temperature_factor(temp_c) * self.process_factor(component, cells) * charge)
        return np.maximum(float(self.floors_ps[component]), v * test)

    def deterministic_required(self, component: str, cells: CellBatch,
                               temp_c: float = REFERENCE_TEMP_C) -> np.ndarray:
        """Design-time (noise-free, fully charged) requirement."""
        v = (self.base_ps[component] * self.architectural_factor(component, cells)
             * self.temperature_factor(temp_c))
        return np.maximum(float(self.floors_ps[component]), v)

    def test_factor(self, cells: CellBatch, salt: int) -> np.ndarray:
        s = self.params.sigma_test
        if s == 0:
            return np.ones(len(cells))
        z = hash_normal(stream_key(self.params.seed, STREAMS["test"], salt), self.linear_index(cells))
        return 1.0 + s * np.minimum(np.abs(z), 3.0)

    @property
    def max_test_factor(self) -> float:
        return 1.0 + 3.0 * self.params.sigma_test

    def vrt_retention_factor(self, cells: CellBatch, salt: int) -> np.ndarray:
        p = self.params
        if p.vrt_prob == 0:
            return np.ones(len(cells))
        u = hash_uniform(stream_key(p.seed, STREAMS["vrt"], salt), self.linear_index(cells))
        return np.where(u < p.vrt_prob, p.vrt_factor, 1.0)

    @property
    def min_vrt_factor(self) -> float:
        return min(1.0, self.params.vrt_factor) if self.params.vrt_prob > 0 else 1.0

    # -- failure oracle -------------------------------------------------------------

    def failures(self, cells: CellBatch, applied: TimingParams, temp_c: float,
                 refresh_ms: float, op: str, salt: Optional[int] = None) -> np.ndarray:
        """Per-cell outcome code: 0 pass, 1 timing failure, 2 retention failure.

        With ``salt=None`` the bare model is evaluated (no test factor, no VRT).
        """
        comps = components_for(op)
        ret = self.retention(cells, temp_c)
        charge = None
        if salt is not None and self.params.vrt_prob > 0:
            ret = ret * self.vrt_retention_factor(cells, salt)
            p = self.params
            charge = 1.0 + p.gamma_charge * np.maximum(0.0, refresh_ms / ret - p.c0)
        tf = 1.0 if salt is None else self.test_factor(cells, salt)
        timing_fail = np.zeros(len(cells), dtype=bool)
        for comp in comps:
            req = self.required(comp, cells, temp_c, refresh_ms, charge, tf)
            timing_fail |= req > getattr(applied, comp)
        out = np.where(timing_fail, 1, 0).astype(np.int8)
        out[refresh_ms > ret] = 2
        return out

    def cell_failure_oracle(self, coords: CellCoords, applied: TimingParams, temp_c: float,
                            refresh_ms: float, op: str, salt: Optional[int] = None) -> str:
        code = int(self.failures(CellBatch.from_coords([coords], self.topology), applied,
                                 temp_c, refresh_ms, op, salt)[0])
        return (PASS, FAIL_TIMING, FAIL_RETENTION)[code]

    def required_timings(self, coords: CellCoords, temp_c: float, refresh_ms: float) -> dict:
        """Minimal reliable values (ps) of the four reducible components of one cell."""
        if not 0 <= temp_c <= 100:
            raise ConfigError("temperature must be within 0..100 C")
        cells = CellBatch.from_coords([coords], self.topology)
        return {c: float(self.required(c, cells, temp_c, refresh_ms)[0]) for c in REDUCIBLE}

    def retention_time(self, coords: CellCoords, temp_c: float) -> float:
        cells = CellBatch.from_coords([coords], self.topology)
        return float(self.retention(cells, temp_c)[0])

    # -- cell enumeration -----------------------------------------------------------

    def iter_chunks(self, chips=None, banks=None, subarrays=None, rows=None,
                    mats=None, cols=None, max_cells: int = 1 << 20) -> Iterator[CellBatch]:
        """Enumerate cells subarray by subarray in a fixed canonical order."""
        t = self.topology
        chips = _axis(chips, t.chips_per_rank)
        banks = _axis(banks, t.banks_per_rank)
        subarrays = _axis(subarrays, t.subarrays_per_bank)
        rows = _axis(rows, t.rows_per_subarray)
        mats = _axis(mats, t.mats_per_subarray_row)
        cols = _axis(cols, t.cells_per_mat_side)
        per_row = len(mats) * len(cols)
        rows_per_chunk = max(1, max_cells // max(1, per_row))
        mm, cc = np.meshgrid(mats, cols, indexing="ij")
        mm = mm.ravel()
        cc = cc.ravel()
        for chip in chips:
            for bank in banks:
                for sa in subarrays:
                    for start in range(0, len(rows), rows_per_chunk):
                        rr = rows[start:start + rows_per_chunk]
                        n = len(rr) * per_row
                        yield CellBatch(
                            chip=np.full(n, chip, dtype=np.int64),
                            bank=np.full(n, bank, dtype=np.int64),
                            subarray=np.full(n, sa, dtype=np.int64),
                            row=np.repeat(rr, per_row),
                            mat=np.tile(mm, len(rr)),
                            col=np.tile(cc, len(rr)),
                        )


def _axis(values, bound: int) -> np.ndarray:
    if values is None:
        return np.arange(bound, dtype=np.int64)
    arr = np.asarray(sorted(set(int(v) for v in values)), dtype=np.int64)
    if arr.size == 0 or arr[0] < 0 or arr[-1] >= bound:
        raise ConfigError(f"index subset out of range [0, {bound})")
    return arr
