"""Adaptive-Latency DRAM: safe refresh intervals, per-temperature timing tables
and temperature-driven enforcement.

The failure model is separable per timing component: a cell fails a test iff
some component's requirement (times the test factor) exceeds the applied
value. A combination therefore passes iff every component clears the worst
requirement seen anywhere in the module, which lets identification scan the
whole module once per temperature and then test every grid combination
against the per-component worst values.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import yaml

from .core import DDR3_1600, REDUCIBLE, TimingParams
from .errors import ConfigError, ModuleRejected, TraceError
from .harness import PATTERNS, TestSpec, test_salt
from .variation import ChipModel, components_for

log = logging.getLogger(__name__)

CHECKERED = PATTERNS[:8]
DEFAULT_TEMPS = (45.0, 55.0, 65.0, 75.0, 85.0)
STEP_PS = 1250


def region_chunks(chip: ChipModel, region=None):
    """Cells of a region: the whole module, a dict of index subsets, or any
    object with a ``chunks(chip)`` method (such as an AVA test region)."""
    if region is None:
        return chip.iter_chunks()
    if isinstance(region, dict):
        return chip.iter_chunks(**region)
    return region.chunks(chip)


def grid_range(high_ps: int, low_ps: int, step_ps: int = STEP_PS) -> list:
    """Descending grid from ``high_ps`` down to ``low_ps`` inclusive."""
    if high_ps < low_ps:
        raise ConfigError("grid upper end below lower end")
    n = (high_ps - low_ps) // step_ps
    return [high_ps - i * step_ps for i in range(n + 1)]


def default_grid(standard: TimingParams = DDR3_1600) -> dict:
    """Search ranges tRCD 12.5-10, tRAS 35-20, tWR 15-5, tRP 12.5-10 ns, each
    extended up to the standard value so the standard setting is a grid point."""
    lows = {"trcd": 10000, "tras": 20000, "twr": 5000, "trp": 10000}
    return {c: sorted(set(grid_range(getattr(standard, c), lows[c])) |
                      {getattr(standard, c)}) for c in REDUCIBLE}


@dataclass(frozen=True)
class WorstCase:
    """Worst salted requirement per component, plus retention status."""

    worst: dict
    retention_failure: bool

    def passes(self, combo: dict, op: str) -> bool:
        if self.retention_failure:
            return False
        return all(self.worst[c] <= combo[c] for c in components_for(op))


def _salts(op: str, patterns: Sequence[str], iterations: int, run: int = 0) -> list:
    return [test_salt(op, p, i, run) for p in patterns for i in range(iterations)]


def worst_requirements(chip: ChipModel, op: str, temp_c: float, refresh_ms: float,
                       patterns: Sequence[str] = CHECKERED, iterations: int = 10,
                       region: Optional[dict] = None) -> WorstCase:
    """Scan the module (or a region) for the worst requirement of each component
    over every test salt."""
    return worst_requirements_multi(chip, [(op, temp_c, refresh_ms)], patterns,
                                    iterations, region)[0]


def worst_requirements_multi(chip: ChipModel, points: Sequence[tuple],
                             patterns: Sequence[str] = CHECKERED, iterations: int = 10,
                             region: Optional[dict] = None) -> list:
    """``worst_requirements`` for several (op, temp_c, refresh_ms) points in one
    pass over the module, so per-cell static quantities are derived once."""
    p = chip.params
    tf_max = chip.max_test_factor
    state = []
    for op, temp_c, refresh_ms in points:
        comps = components_for(op)
        state.append(dict(op=op, temp=float(temp_c), refresh=float(refresh_ms), comps=comps,
                          salts=_salts(op, patterns, iterations),
                          worst={c: 0.0 for c in comps}, ret_fail=False))
    for cells in region_chunks(chip, region):
        for st in state:
            temp, refresh, comps, worst = st["temp"], st["refresh"], st["comps"], st["worst"]
            ret_lb = chip.retention(cells, temp) * chip.min_vrt_factor
            if not st["ret_fail"] and np.any(ret_lb < refresh):
                st["ret_fail"] = _retention_fails(chip, cells, temp, refresh, st["salts"])
            charge_ub = 1.0 + p.gamma_charge * np.maximum(0.0, refresh / ret_lb - p.c0)
            unsalted = {c: chip.required(c, cells, temp, refresh, charge_ub) for c in comps}
            cand = np.zeros(len(cells), dtype=bool)
            for c in comps:
                # without retention toggling every salt multiplies the bare requirement
                # by at least 1, so the bare maximum bounds the worst case from below
                lower = worst[c]
                if p.vrt_prob == 0:
                    lower = max(lower, float(unsalted[c].max()))
                cand |= chip.required(c, cells, temp, refresh, charge_ub, test=tf_max) >= lower
            sub = cells.take(np.flatnonzero(cand))
            if len(sub) == 0:
                continue
            base_ret = chip.retention(sub, temp)
            for salt in st["salts"]:
                r = base_ret * chip.vrt_retention_factor(sub, salt)
                charge = 1.0 + p.gamma_charge * np.maximum(0.0, refresh / r - p.c0)
                tf = chip.test_factor(sub, salt)
                for c in comps:
                    v = float((chip.required(c, sub, temp, refresh, charge, test=tf)).max())
                    worst[c] = max(worst[c], v)
    return [WorstCase(st["worst"], st["ret_fail"]) for st in state]


def _retention_fails(chip, cells, temp_c, refresh_ms, salts) -> bool:
    ret = chip.retention(cells, temp_c)
    if chip.params.vrt_prob == 0:
        return bool(np.any(refresh_ms > ret))
    return any(bool(np.any(refresh_ms > ret * chip.vrt_retention_factor(cells, s))) for s in salts)


# --- safe refresh interval ----------------------------------------------------------

def _earliest_failure_bound(chip: ChipModel, cells, applied: TimingParams, temp_c: float,
                            comps) -> np.ndarray:
    """Per-cell refresh interval below which the cell cannot fail under any salt."""
    p = chip.params
    ret_lb = chip.retention(cells, temp_c) * chip.min_vrt_factor
    bound = ret_lb.copy()
    tf = chip.max_test_factor
    for c in comps:
        a = float(getattr(applied, c))
        k = chip.required(c, cells, temp_c, 0.0, np.ones(len(cells)), tf)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = a / k
            if p.gamma_charge > 0:
                r_c = ret_lb * (p.c0 + (q - 1.0) / p.gamma_charge)
            else:
                r_c = np.full(len(cells), np.inf)
        r_c = np.where(k > a, 0.0, r_c)
        if chip.floors_ps[c] > a:
            r_c = np.zeros(len(cells))
        bound = np.minimum(bound, r_c)
    return bound


def error_count(chip: ChipModel, op: str, timings: TimingParams, temp_c: float,
                refresh_ms: float, patterns: Sequence[str] = CHECKERED,
                iterations: int = 10, region: Optional[dict] = None) -> int:
    """Distinct failing cells over all patterns and iterations of one test."""
    comps = components_for(op)
    salts = _salts(op, patterns, iterations)
    total = 0
    for cells in region_chunks(chip, region):
        bound = _earliest_failure_bound(chip, cells, timings, temp_c, comps)
        sub = cells.take(np.flatnonzero(bound < refresh_ms))
        if len(sub) == 0:
            continue
        failed = np.zeros(len(sub), dtype=bool)
        for s in salts:
            failed |= chip.failures(sub, timings, temp_c, refresh_ms, op, s) > 0
        total += int(failed.sum())
    return total


@dataclass(frozen=True)
class SafeRefresh:
    op: str
    max_error_free_ms: float
    safe_ms: float
    first_failing_ms: Optional[float]


def find_safe_refresh_interval(chip: ChipModel, op: str, temp_c: float = 85.0,
                               timings: TimingParams = DDR3_1600, step_ms: float = 8.0,
                               start_ms: float = 64.0, upper_ms: float = 1024.0,
                               patterns: Sequence[str] = CHECKERED, iterations: int = 10,
                               region: Optional[dict] = None) -> SafeRefresh:
    """Ascend the refresh interval from ``start_ms`` in ``step_ms`` steps until the
    first error; the safe interval is the last error-free point minus ``step_ms``.

    Raises ModuleRejected if the module already fails at ``start_ms``.
    """
    comps = components_for(op)
    salts = _salts(op, patterns, iterations)
    # one pass collects every cell that could fail somewhere below the upper end
    keep = []
    for cells in region_chunks(chip, region):
        bound = _earliest_failure_bound(chip, cells, timings, temp_c, comps)
        idx = np.flatnonzero(bound < upper_ms)
        if idx.size:
            sub = cells.take(idx)
            keep.append((bound[idx], sub))
    points = np.arange(start_ms, upper_ms + step_ms / 2, step_ms)
    first_fail = None
    for r in points:
        failed = False
        for bound, sub in keep:
            live = np.flatnonzero(bound < r)
            if live.size == 0:
                continue
            cells = sub.take(live)
            for s in salts:
                if np.any(chip.failures(cells, timings, temp_c, float(r), op, s)):
                    failed = True
                    break
            if failed:
                break
        if failed:
            first_fail = float(r)
            break
    if first_fail is not None and first_fail <= start_ms:
        raise ModuleRejected(f"{op} test fails at the standard {start_ms:g} ms refresh interval")
    max_ok = float(points[-1]) if first_fail is None else first_fail - step_ms
    return SafeRefresh(op, max_ok, max_ok - step_ms, first_fail)


# --- identification -------------------------------------------------------------------

def ordered_combos(grid: dict) -> list:
    """Grid combinations by increasing sum; ties prefer lower tRP, then tRCD,
    then tRAS, then tWR."""
    combos = [dict(zip(REDUCIBLE, vals)) for vals in itertools.product(*(sorted(grid[c]) for c in REDUCIBLE))]
    combos.sort(key=lambda c: (sum(c.values()), c["trp"], c["trcd"], c["tras"], c["twr"]))
    return combos


def select_combo(grid: dict, passes) -> Optional[dict]:
    """First combination in search order for which ``passes(combo)`` holds."""
    # the passing set is upward closed, so scanning per sum level suffices
    for combo in ordered_combos(grid):
        if passes(combo):
            return combo
    return None


@dataclass(frozen=True)
class TimingTable:
    """Temperature-keyed timing sets; entries non-decreasing with temperature."""

    entries: tuple            # ((temp_c, TimingParams), ...) ascending by temperature
    provenance: dict = field(default_factory=dict)
    standard: TimingParams = DDR3_1600

    def __post_init__(self):
        entries = tuple(sorted(((float(t), tp) for t, tp in self.entries), key=lambda e: e[0]))
        if not entries:
            raise ConfigError("timing table must have at least one entry")
        temps = [t for t, _ in entries]
        if len(set(temps)) != len(temps):
            raise ConfigError("duplicate temperature in timing table")
        for (t0, a), (t1, b) in zip(entries, entries[1:]):
            for c in REDUCIBLE:
                if getattr(b, c) < getattr(a, c):
                    raise ConfigError(f"timing table {c} decreases between {t0:g} C and {t1:g} C")
        object.__setattr__(self, "entries", entries)

    @property
    def temperatures(self) -> list:
        return [t for t, _ in self.entries]

    def lookup(self, temp_c: float):
        """Entry for the smallest table temperature >= temp_c, or (None, standard)."""
        for t, tp in self.entries:
            if temp_c <= t:
                return t, tp
        return None, self.standard

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "timing_table",
            "provenance": dict(self.provenance),
            "standard": self.standard.as_dict(),
            "temperatures": {_num(t): tp.as_dict() for t, tp in self.entries},
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, data: dict) -> "TimingTable":
        if not isinstance(data, dict) or data.get("kind") != "timing_table":
            raise ConfigError("document is not a timing table")
        if data.get("schema_version") != 1:
            raise ConfigError(f"unsupported timing table schema_version {data.get('schema_version')!r}")
        standard = TimingParams.from_dict(data.get("standard") or DDR3_1600.as_dict())
        temps = data.get("temperatures") or {}
        entries = [(float(t), TimingParams.from_dict(tp)) for t, tp in temps.items()]
        return cls(tuple(entries), dict(data.get("provenance") or {}), standard)

    @classmethod
    def from_yaml(cls, text: str) -> "TimingTable":
        return cls.from_dict(yaml.safe_load(text))


def _num(t: float):
    return int(t) if float(t).is_integer() else float(t)


def identify_timing_table(chip: ChipModel, temps: Sequence[float] = DEFAULT_TEMPS,
                          grid: Optional[dict] = None, standard: TimingParams = DDR3_1600,
                          refresh_read_ms: Optional[float] = None,
                          refresh_write_ms: Optional[float] = None,
                          patterns: Sequence[str] = CHECKERED, iterations: int = 10,
                          region: Optional[dict] = None) -> TimingTable:
    """Minimal-sum error-free combination per temperature, read and write tests
    both run at the module's safe refresh intervals."""
    grid = grid or default_grid(standard)
    missing = [c for c in REDUCIBLE if not grid.get(c)]
    if missing:
        raise ConfigError(f"grid has no values for {missing}")
    if refresh_read_ms is None:
        refresh_read_ms = find_safe_refresh_interval(chip, "read", timings=standard,
                                                     patterns=patterns, iterations=iterations,
                                                     region=region).safe_ms
    if refresh_write_ms is None:
        refresh_write_ms = find_safe_refresh_interval(chip, "write", timings=standard,
                                                      patterns=patterns, iterations=iterations,
                                                      region=region).safe_ms
    entries = []
    fallbacks = []
    temps = sorted(float(x) for x in temps)
    points = [(op, t, r) for t in temps
              for op, r in (("read", refresh_read_ms), ("write", refresh_write_ms))]
    worst = worst_requirements_multi(chip, points, patterns, iterations, region)
    for k, t in enumerate(temps):
        rd, wr = worst[2 * k], worst[2 * k + 1]
        combo = select_combo(grid, lambda c: rd.passes(c, "read") and wr.passes(c, "write"))
        if combo is None:
            fallbacks.append(t)
            tp = standard
        else:
            tp = standard.replace(**combo)
        entries.append((t, tp))
    # a fallback at a low temperature could break monotonicity; carry maxima upward
    fixed = []
    running = {c: 0 for c in REDUCIBLE}
    for t, tp in entries:
        running = {c: max(running[c], getattr(tp, c)) for c in REDUCIBLE}
        fixed.append((t, tp.replace(**running)))
    prov = {"safe_refresh_read_ms": float(refresh_read_ms),
            "safe_refresh_write_ms": float(refresh_write_ms),
            "chip": chip.name, "seed": int(chip.params.seed)}
    if fallbacks:
        prov["standard_fallback_temps"] = fallbacks
    return TimingTable(tuple(fixed), prov, standard)


# --- enforcement --------------------------------------------------------------------------

MAX_SLEW_C_PER_S = 0.1


@dataclass(frozen=True)
class TemperatureTrace:
    times_s: tuple
    temps_c: tuple

    def __post_init__(self):
        if len(self.times_s) != len(self.temps_c) or not self.times_s:
            raise ConfigError("temperature trace needs matching, non-empty columns")
        if any(b <= a for a, b in zip(self.times_s, self.times_s[1:])):
            raise ConfigError("temperature trace times must be strictly increasing")

    @classmethod
    def constant(cls, temp_c: float, duration_s: float) -> "TemperatureTrace":
        return cls((0.0, float(duration_s)), (float(temp_c), float(temp_c)))

    @classmethod
    def parse(cls, text: str, path: Optional[str] = None) -> "TemperatureTrace":
        times, temps = [], []
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise TraceError("expected two columns: seconds and degrees C", n, path)
            try:
                times.append(float(parts[0]))
                temps.append(float(parts[1]))
            except ValueError:
                raise TraceError(f"not a number in {line!r}", n, path) from None
        try:
            trace = cls(tuple(times), tuple(temps))
        except ConfigError as exc:
            raise TraceError(str(exc), None, path) from None
        trace.check_slew()
        return trace

    @classmethod
    def load(cls, path) -> "TemperatureTrace":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read(), str(path))

    def check_slew(self) -> list:
        """Warn about (and return) segments changing faster than 0.1 C per second."""
        bad = []
        for (t0, a), (t1, b) in zip(zip(self.times_s, self.temps_c),
                                    zip(self.times_s[1:], self.temps_c[1:])):
            if abs(b - a) / (t1 - t0) > MAX_SLEW_C_PER_S + 1e-12:
                bad.append((t0, t1))
        if bad:
            warnings.warn(f"temperature changes faster than {MAX_SLEW_C_PER_S} C/s in "
                          f"{len(bad)} segment(s), first at t={bad[0][0]:g} s", stacklevel=2)
        return bad

    def max_over(self, t0: float, t1: float) -> float:
        """Highest temperature in [t0, t1] under linear interpolation."""
        ts = np.asarray(self.times_s)
        vs = np.asarray(self.temps_c)
        inside = vs[(ts >= t0) & (ts <= t1)]
        ends = np.interp([t0, t1], ts, vs)
        return float(max(ends.max(), inside.max() if inside.size else -math.inf))


@dataclass(frozen=True)
class AppliedInterval:
    start_s: float
    end_s: float
    temp_c: float               # highest temperature seen in the interval
    table_temp_c: Optional[float]
    timings: TimingParams
    over_range: bool


def enforce_timings(table: TimingTable, trace: TemperatureTrace,
                    interval_ms: float = 256.0) -> list:
    """Timeline of applied timings, one entry per enforcement interval.

    Each interval uses the entry for the smallest table temperature at or above
    the hottest point of the interval; above the table the standard timings are
    applied and the interval is flagged.
    """
    if interval_ms <= 0:
        raise ConfigError("interval_ms must be positive")
    step = interval_ms / 1000.0
    start, end = trace.times_s[0], trace.times_s[-1]
    n = max(1, int(math.ceil((end - start) / step - 1e-9)))
    out = []
    for k in range(n):
        t0 = start + k * step
        t1 = min(end, t0 + step)
        temp = trace.max_over(t0, t1)
        table_t, tp = table.lookup(temp)
        if table_t is None:
            log.warning("temperature %.2f C above the timing table at t=%.3f s; standard timings", temp, t0)
        out.append(AppliedInterval(t0, t1, temp, table_t, tp, table_t is None))
    return out


def timings_at(timeline: Sequence[AppliedInterval], t_s: float) -> TimingParams:
    for iv in timeline:
        if t_s < iv.end_s:
            return iv.timings
    return timeline[-1].timings


# Reduced DDR3-1600 timings for module temperatures up to 55 C.
DDR3_1600_TABLE = TimingTable(
    entries=((55.0, DDR3_1600.replace(trcd=10000, tras=23750, twr=10000, trp=11250)),
             (85.0, DDR3_1600)),
    provenance={"source": "evaluated-system preset"},
    standard=DDR3_1600,
)
