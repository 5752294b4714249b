"""Trace-driven memory-system simulator.

One channel and rank, per-bank request queues, FR-FCFS scheduling and a
closed-page policy (open-page is available). Time advances in controller
cycles and skips directly to the next cycle at which anything can happen.

Mechanisms:

* ``baseline``: one timing set for every row.
* ``tldram``: segmented bitlines with a near-segment management policy.
* ``aldram``: timings follow a temperature-indexed table over time.
* ``ava``: a fixed reduced timing set with ECC-checked reads.

When a chip model is attached, every read line is checked against it and
the failing bits are routed through SECDED (after the optional shuffle).
"""

from __future__ import annotations

import heapq
import io
import csv
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import policies as pol
from .aldram import TemperatureTrace, TimingTable, enforce_timings, timings_at
from .ava import ShuffleMap, line_failure_codes, tally_line_errors
from .core import (DDR3_1066, Address, CommandKind, LoggedCommand, TimingParams, Topology,
                   cycle_timings, decode_address, ps_to_cycles)
from .errors import ConfigError
from .tldram import SegmentConfig, command_energy, derive_segment_timings, transfer_occupancy_ps
from .variation import ChipModel
from .workloads import TraceRecord

MECHANISMS = ("baseline", "tldram", "aldram", "ava")
NEVER = 1 << 62


@dataclass(frozen=True)
class CoreModel:
    nonmem_ipc: float = 3.0
    mshr_limit: int = 8
    clock_ratio: int = 4   # core cycles per controller cycle

    def __post_init__(self):
        if self.nonmem_ipc <= 0 or self.mshr_limit < 1 or self.clock_ratio < 1:
            raise ConfigError("core model needs positive ipc, mshr_limit and clock_ratio")


@dataclass
class SimConfig:
    topology: Topology = field(default_factory=Topology)
    timings: TimingParams = DDR3_1066
    mechanism: str = "baseline"
    mapping: str = "row_interleaved"
    page_policy: str = "closed"
    core: CoreModel = field(default_factory=CoreModel)
    write_queue: int = 64
    refresh: bool = True
    refresh_ms: float = 64.0
    trfc_ps: int = 160_000
    # TL-DRAM
    policy: str = "sc"
    near_rows: int = 32
    segment_mode: str = "table"
    segments: Optional[SegmentConfig] = None
    profile_mapping: Optional[dict] = None
    # AL-DRAM
    timing_table: Optional[TimingTable] = None
    temperature: Optional[TemperatureTrace] = None
    interval_ms: float = 256.0
    # AVA and error injection
    ava_timings: Optional[TimingParams] = None
    shuffle: Optional[ShuffleMap] = None
    chip: Optional[ChipModel] = None
    temp_c: float = 55.0
    seed: int = 0
    max_cycles: int = 1 << 40

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"mechanism must be one of {MECHANISMS}")
        if self.page_policy not in ("closed", "open"):
            raise ConfigError("page_policy must be 'closed' or 'open'")
        if self.mechanism == "tldram" and self.policy not in pol.POLICIES:
            raise ConfigError(f"policy must be one of {pol.POLICIES}")
        if self.mechanism == "aldram" and self.timing_table is None:
            raise ConfigError("aldram needs a timing_table")
        if self.mechanism == "ava" and self.ava_timings is None:
            raise ConfigError("ava needs ava_timings")
        if self.write_queue < 1:
            raise ConfigError("write_queue must be positive")

    @property
    def clock_ps(self) -> int:
        return self.topology.clock_period_ps

    def segment_config(self) -> SegmentConfig:
        if self.segments is not None:
            return self.segments
        return derive_segment_timings(self.near_rows, self.timings, self.segment_mode,
                                      self.topology.rows_per_subarray)


@dataclass
class Request:
    rid: int
    core: int
    is_write: bool
    addr: Address
    arrival: int
    key: tuple
    sa: int
    row: int
    done: Optional[int] = None
    cls: Optional[str] = None
    timings: Optional[TimingParams] = None


class _Bank:
    __slots__ = ("key", "queue", "open", "phys", "tier", "tm", "act_time", "last_pre", "trp_prev",
                 "last_act", "trc_prev", "busy", "last_wr_end", "ops", "planned", "close",
                 "history", "served", "timings", "planned_info")

    def __init__(self, key):
        self.key = key
        self.queue: list = []
        self.open = None          # (subarray, logical row) or None
        self.phys = None
        self.tier = None
        self.tm = None            # cycle timings of the open row
        self.timings = None
        self.act_time = -NEVER
        self.last_pre = -NEVER
        self.trp_prev = 0
        self.last_act = -NEVER
        self.trc_prev = 0
        self.busy = 0
        self.last_wr_end = -NEVER
        self.ops: deque = deque()
        self.planned = None
        self.planned_info = None
        self.close = None
        self.history: list = []
        self.served = 0


@dataclass
class _Core:
    idx: int
    trace: Sequence[TraceRecord]
    pos: int = 0
    ready_at: int = 0
    last_issue: int = 0
    reads: list = field(default_factory=list)
    instructions: int = 0
    finish: int = 0
    lat_sum: int = 0
    n_reads: int = 0
    n_writes: int = 0

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.trace)


@dataclass
class CoreStats:
    core: int
    instructions: int
    reads: int
    writes: int
    cycles: int
    avg_read_latency_cycles: float
    ipc: float


@dataclass
class SimResult:
    mechanism: str
    policy: Optional[str]
    clock_ps: int
    cycles: int
    cores: list
    reads: int
    writes: int
    avg_read_latency_ns: float
    rowbuf: int
    near: int
    far: int
    energy_units: float
    transfers: int
    refreshes: int
    errors_total: int = 0
    errors_corrected: int = 0
    errors_uncorrectable: int = 0
    timing_errors: int = 0
    retention_errors: int = 0
    log: Optional[list] = None
    access_counts: Optional[dict] = None

    @property
    def served(self) -> int:
        return self.rowbuf + self.near + self.far

    def frac(self, what: str) -> float:
        return getattr(self, what) / self.served if self.served else 0.0

    @property
    def ipc_proxy(self) -> float:
        return sum(c.ipc for c in self.cores)

    def csv_row(self, workload: str, mechanism: Optional[str] = None) -> dict:
        return {
            "workload": workload,
            "mechanism": mechanism or self.label,
            "ipc_proxy": f"{self.ipc_proxy:.6f}",
            "avg_read_latency_ns": f"{self.avg_read_latency_ns:.4f}",
            "rowbuf_frac": f"{self.frac('rowbuf'):.6f}",
            "near_frac": f"{self.frac('near'):.6f}",
            "far_frac": f"{self.frac('far'):.6f}",
            "energy_units": f"{self.energy_units:.2f}",
            "errors_corrected": self.errors_corrected,
            "errors_uncorrectable": self.errors_uncorrectable,
        }

    @property
    def label(self) -> str:
        if self.mechanism == "tldram":
            return f"tldram-{self.policy}"
        return self.mechanism


RUN_COLUMNS = ("workload", "mechanism", "ipc_proxy", "avg_read_latency_ns", "rowbuf_frac",
               "near_frac", "far_frac", "energy_units", "errors_corrected", "errors_uncorrectable")


def results_csv(rows: Sequence[dict]) -> str:
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=RUN_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return out.getvalue()


def weighted_speedup(shared_ipcs: Sequence[float], alone_ipcs: Sequence[float]) -> float:
    if len(shared_ipcs) != len(alone_ipcs):
        raise ConfigError("need one alone-IPC per core")
    return float(sum(s / a for s, a in zip(shared_ipcs, alone_ipcs)))


class Simulator:
    def __init__(self, cfg: SimConfig, traces: Sequence[Sequence[TraceRecord]],
                 record_log: bool = True, count_accesses: bool = False):
        if not traces:
            raise ConfigError("need at least one trace")
        self.cfg = cfg
        self.topo = cfg.topology
        self.clk = cfg.clock_ps
        self.record_log = record_log
        self.count_accesses = count_accesses
        self.log: list = []
        self.energy = 0.0
        self.cores = [_Core(i, list(t)) for i, t in enumerate(traces)]
        self.banks: dict = {}
        self.bank_order: list = []
        self.rate = cfg.core.nonmem_ipc * cfg.core.clock_ratio   # instructions per controller cycle
        self.ctm = cycle_timings(cfg.timings, self.clk)
        self.bus_free = 0
        self.writes_queued = 0
        self.rid = 0
        self.stats = {"rowbuf": 0, "near": 0, "far": 0, "transfers": 0, "refreshes": 0}
        self.reads_done: list = []
        self.access_counts: dict = {}
        self.row_map = cfg.chip.row_map if cfg.chip is not None else None
        self.seg: Optional[SegmentConfig] = None
        self.cache: Optional[pol.CacheState] = None
        if cfg.mechanism == "tldram":
            self.seg = cfg.segment_config()
            self.seg.check_topology(self.topo)
            self.near_t = self.seg.near
            self.far_t = self.seg.far
            self.far_tier = len(self.seg.tiers) - 1
            p = cfg.policy
            if p in ("sc", "wmc", "bbc", "exclusive_sc", "exclusive_wmc", "exclusive_bbc"):
                self.cache = pol.CacheState(p.replace("exclusive_", ""), self.seg.near_rows,
                                            exclusive=p.startswith("exclusive"))
            if p == "profile" and cfg.profile_mapping is None:
                raise ConfigError("profile policy needs a profile mapping")
        self.timeline = None
        if cfg.mechanism == "aldram":
            trace = cfg.temperature or TemperatureTrace.constant(cfg.temp_c, 1.0)
            self.timeline = enforce_timings(cfg.timing_table, trace, cfg.interval_ms)
            self.temp_trace = trace
        self.trefi = ps_to_cycles(int(cfg.refresh_ms * 1e9 / 8192), self.clk) if cfg.refresh else NEVER
        self.trfc = ps_to_cycles(cfg.trfc_ps, self.clk)
        self.next_ref = self.trefi

    # -- helpers ----------------------------------------------------------------------

    def _bank(self, key) -> _Bank:
        b = self.banks.get(key)
        if b is None:
            b = self.banks[key] = _Bank(key)
            self.bank_order.append(key)
            self.bank_order.sort()
        return b

    def _log(self, kind, bank, row, t, timings, tier=None, end=None):
        self.energy += command_energy(kind, tier if isinstance(tier, int) else None, self.seg)
        if self.record_log:
            self.log.append(LoggedCommand(kind, bank.key, row, t, timings, tier, end))

    def _now_timings(self, now: int) -> TimingParams:
        c = self.cfg
        if c.mechanism == "aldram":
            return timings_at(self.timeline, now * self.clk * 1e-12)
        if c.mechanism == "ava":
            return c.ava_timings
        return c.timings

    def _temp_at(self, now: int) -> float:
        if self.cfg.mechanism == "aldram":
            t = now * self.clk * 1e-12
            return self.temp_trace.max_over(t, t)
        return self.cfg.temp_c

    # -- core side --------------------------------------------------------------------

    def _core_blocked(self, core: _Core, now: int) -> bool:
        rec = core.trace[core.pos]
        if rec.is_write:
            return self.writes_queued >= self.cfg.write_queue
        core.reads = [r for r in core.reads if r.done is None or r.done > now]
        return len(core.reads) >= self.cfg.core.mshr_limit

    def _issue_requests(self, now: int) -> None:
        for core in self.cores:
            while not core.exhausted and core.ready_at <= now and not self._core_blocked(core, now):
                rec = core.trace[core.pos]
                core.pos += 1
                core.instructions += rec.gap + 1
                core.last_issue = now
                if not core.exhausted:
                    core.ready_at = now + math.ceil(core.trace[core.pos].gap / self.rate)
                addr = decode_address(rec.addr, self.topo, self.cfg.mapping, self.row_map)
                req = Request(self.rid, core.idx, rec.is_write, addr, now, addr.bank_key,
                              addr.subarray, addr.row_external)
                self.rid += 1
                bank = self._bank(req.key)
                bank.queue.append(req)
                bank.history.append(req)
                if rec.is_write:
                    self.writes_queued += 1
                    core.n_writes += 1
                else:
                    core.reads.append(req)
                    core.n_reads += 1
                if self.count_accesses:
                    k = ((req.key, req.sa), req.row)
                    self.access_counts[k] = self.access_counts.get(k, 0) + 1

    def _core_event(self, now: int) -> int:
        t = NEVER
        for core in self.cores:
            if core.exhausted:
                continue
            if core.ready_at > now:
                t = min(t, core.ready_at)
            elif not core.trace[core.pos].is_write:
                pend = [r.done for r in core.reads if r.done is not None and r.done > now]
                if pend and len(core.reads) >= self.cfg.core.mshr_limit:
                    t = min(t, min(pend))
        return t

    # -- placement (TL-DRAM) ------------------------------------------------------------

    def _placement(self, bank: _Bank, req: Request, now: int):
        """(physical row, tier, timings, pre-ops, close action) for activating req's row."""
        c = self.cfg
        if c.mechanism != "tldram":
            return req.row, None, self._now_timings(now), [], None
        seg = self.seg
        p = c.policy
        if p == "none":
            tier = seg.tier_of_row(req.row)
            return req.row, tier, seg.tiers[tier].timings, [], None
        if p == "profile":
            near = req.row in c.profile_mapping.get((req.key, req.sa), ())
            return (req.row, 0, self.near_t, [], None) if near else \
                (req.row, self.far_tier, self.far_t, [], None)
        cache = self.cache
        skey = (req.key, req.sa)
        slot = cache.lookup(skey, req.row)
        if cache.policy == "wmc":
            if slot is not None:
                return slot, 0, self.near_t, [], None
            return req.row, self.far_tier, self.far_t, [], "wmc"
        if cache.policy == "sc":
            out = pol.sc_on_access(cache, None, (skey, req.row), req.is_write)
        else:
            out = pol.bbc_on_access(cache, None, (skey, req.row), self.far_t.trcd - self.near_t.trcd,
                                    self.clk, req.is_write)
        if out.cls == pol.NEAR_HIT:
            close = "bbc" if cache.policy == "bbc" else None
            return out.slot, 0, self.near_t, [], close
        pre_ops = [("writeback", a.slot, a.row) for a in out.actions if a.kind == "writeback"]
        fill = [a for a in out.actions if a.kind in ("cache", "swap")]
        close = (fill[0].kind, fill[0].slot, fill[0].victim) if fill else None
        return req.row, self.far_tier, self.far_t, pre_ops, close

    def _wmc_close(self, bank: _Bank, now: int):
        """Run WMC at precharge time; returns (pre-ops-after-PRE, close action)."""
        cache = self.cache
        sa, row = bank.open
        skey = (bank.key, sa)
        view = [(r.arrival, r.sa, r.row, r.done if r.done is not None and r.done <= now else None)
                for r in bank.history if r.arrival < bank.act_time + bank.tm["trc"]]
        out = pol.wmc_on_access(cache, None, (skey, row), view, bank.act_time, bank.tm["trc"])
        if not out.actions:
            return None
        wb = [a for a in out.actions if a.kind == "writeback"]
        fill = [a for a in out.actions if a.kind in ("cache", "swap")][0]
        return wb, (fill.kind, fill.slot, fill.victim)

    # -- transfers ----------------------------------------------------------------------

    def _transfer_cycles(self, src_t: TimingParams, elapsed_ps: int = 0) -> int:
        return ps_to_cycles(transfer_occupancy_ps(src_t, self.far_t, self.seg.transfer_write_ps,
                                                  elapsed_ps), self.clk)

    def _finish_transfer(self, bank: _Bank, end: int) -> None:
        far = cycle_timings(self.far_t, self.clk)
        bank.open = bank.phys = bank.tier = bank.tm = bank.timings = None
        bank.busy = end
        bank.last_pre, bank.trp_prev = end, 0
        bank.last_act, bank.trc_prev = end - far["trc"], far["trc"]

    # -- scheduling -------------------------------------------------------------------

    def _candidates(self, now: int, refresh_due: bool):
        """Yield (priority, age, bank, kind, payload, earliest) per bank."""
        out = []
        for key in self.bank_order:
            b = self.banks[key]
            if b.open is not None:
                hit = None
                for r in b.queue:
                    if (r.sa, r.row) == b.open:
                        hit = r
                        break
                if hit is not None and not refresh_due:
                    tm = b.tm
                    if hit.is_write:
                        e = max(now, b.busy, b.act_time + tm["trcd"], self.bus_free - self.ctm["tcwl"])
                    else:
                        e = max(now, b.busy, b.act_time + tm["trcd"], self.bus_free - self.ctm["tcl"])
                    out.append((0, hit.arrival, b, "col", hit, e))
                    continue
                closing = refresh_due or self.cfg.page_policy == "closed" or b.queue
                if closing:
                    e = max(now, b.busy, b.act_time + b.tm["tras"], b.last_wr_end + b.tm["twr"])
                    age = b.queue[0].arrival if b.queue else NEVER
                    out.append((1, age, b, "close", None, e))
                continue
            if refresh_due:
                continue
            if b.ops:
                e = max(now, b.busy, b.last_pre + b.trp_prev, b.last_act + b.trc_prev)
                age = b.planned.arrival if b.planned else (b.queue[0].arrival if b.queue else NEVER)
                out.append((1, age, b, "op", b.ops[0], e))
                continue
            if b.queue:
                req = b.planned or b.queue[0]
                e = max(now, b.busy, b.last_pre + b.trp_prev, b.last_act + b.trc_prev)
                out.append((1, req.arrival, b, "act", req, e))
        return out

    def _refresh_ready(self, now: int) -> int:
        t = now
        for b in self.banks.values():
            if b.open is not None:
                return NEVER
            t = max(t, b.busy, b.last_pre + b.trp_prev)
        return t

    def _issue(self, cand, now: int) -> None:
        _, _, b, kind, payload, _ = cand
        if kind == "col":
            self._issue_column(b, payload, now)
        elif kind == "close":
            self._issue_close(b, now)
        elif kind == "op":
            self._issue_op(b, now)
        elif kind == "act":
            self._issue_act(b, payload, now)

    def _issue_act(self, b: _Bank, req: Request, now: int) -> None:
        if b.planned is req:
            phys, tier, tp, close = b.planned_info
            b.planned = None
        else:
            phys, tier, tp, pre_ops, close = self._placement(b, req, now)
            if pre_ops:
                b.ops.extend(pre_ops)
                b.planned = req
                b.planned_info = (phys, tier, tp, close)
                return
        tm = cycle_timings(tp, self.clk)
        b.open = (req.sa, req.row)
        b.phys, b.tier, b.tm, b.timings = phys, tier, tm, tp
        b.act_time = b.last_act = now
        b.trc_prev = tm["trc"]
        b.close = close
        b.served = 0
        self._log(CommandKind.ACT, b, (req.sa, phys), now, tp, tier)

    def _issue_column(self, b: _Bank, req: Request, now: int) -> None:
        b.queue.remove(req)
        c = self.ctm
        if req.is_write:
            self.writes_queued -= 1
            self.bus_free = now + c["tcwl"] + c["tbl"]
            b.last_wr_end = now + c["tcwl"] + c["tbl"]
            req.done = now
            if self.cache is not None and b.tier == 0 and not self.cache.exclusive:
                sub = self.cache.sub((b.key, req.sa))
                slot = sub.where.get(req.row)
                if slot is not None:
                    sub.slots[slot].dirty = True
            kind = CommandKind.WR
        else:
            req.done = now + c["tcl"] + c["tbl"]
            self.bus_free = req.done
            self.reads_done.append(req)
            kind = CommandKind.RD
        req.timings = b.timings
        if b.served == 0:
            if self.cfg.mechanism == "tldram" and b.tier == 0:
                req.cls = "near"
            else:
                req.cls = "far"
        else:
            req.cls = "rowbuf"
        b.served += 1
        self.stats[req.cls] += 1
        self._log(kind, b, (req.sa, b.phys), now, b.timings, b.tier)

    def _issue_close(self, b: _Bank, now: int) -> None:
        close = b.close
        if close == "wmc":
            close = None
            res = self._wmc_close(b, now)
            if res is not None:
                wb, fill = res
                if wb:
                    # the victim must be written back first: close normally, then
                    # write back and refill the row from the precharged state
                    b.ops.extend(("writeback", a.slot, a.row) for a in wb)
                    b.ops.append(("refill", fill, b.open))
                else:
                    close = fill
        elif close == "bbc":
            close = None
            self._bbc_credit(b, now)
        if close is None:
            self._log(CommandKind.PRE, b, (b.open[0], b.phys), now, b.timings, b.tier)
            b.last_pre, b.trp_prev = now, b.tm["trp"]
            b.open = b.phys = b.tier = b.tm = b.timings = None
            self._trim_history(b, now)
            return
        # close by copying the open row into the near segment
        kind, slot, victim = close
        sa = b.open[0]
        elapsed = (now - b.act_time) * self.clk
        end = now + self._transfer_cycles(b.timings, elapsed)
        self._log(CommandKind.TRANSFER, b, (sa, b.phys), now, b.timings, self.far_tier, end)
        self.stats["transfers"] += 1
        if kind == "swap":
            # the displaced near row goes to the freed far position via the dummy row
            for src_t in (self.near_t, self.far_t):
                start = end
                end = start + self._transfer_cycles(src_t)
                self._log(CommandKind.TRANSFER, b, (sa, None), start, src_t, self.far_tier, end)
                self.stats["transfers"] += 1
        self._finish_transfer(b, end)
        self._trim_history(b, now)

    def _issue_op(self, b: _Bank, now: int) -> None:
        op = b.ops.popleft()
        if op[0] == "writeback":
            src_t = self.near_t
            row = (None, op[1])
        else:
            src_t = self.far_t
            kind, slot, victim = op[1]
            row = (op[2][0], None)
            if kind == "swap":
                end = now
                for t in (self.far_t, self.near_t, self.far_t):
                    start = end
                    end = start + self._transfer_cycles(t)
                    self._log(CommandKind.TRANSFER, b, row, start, t, self.far_tier, end)
                    self.stats["transfers"] += 1
                self._finish_transfer(b, end)
                return
        end = now + self._transfer_cycles(src_t)
        self._log(CommandKind.TRANSFER, b, row, now, src_t, self.far_tier, end)
        self.stats["transfers"] += 1
        self._finish_transfer(b, end)

    def _bbc_credit(self, b: _Bank, now: int) -> None:
        sa, row = b.open
        waited = 0
        for r in b.queue:
            if r.sa == sa and r.row != row:
                waited = max(waited, now - max(r.arrival, b.act_time))
        if waited > 0:
            pol.bbc_add_wait(self.cache, (b.key, sa), row, waited)

    def _trim_history(self, b: _Bank, now: int) -> None:
        if len(b.history) > 64:
            b.history = [r for r in b.history if r.done is None or r.done > now - 4096]

    def _issue_refresh(self, now: int) -> None:
        end = now + self.trfc
        for b in self.banks.values():
            b.busy = max(b.busy, end)
        self.stats["refreshes"] += 1
        self.energy += command_energy(CommandKind.REF, None, self.seg)
        if self.record_log:
            self.log.append(LoggedCommand(CommandKind.REF, ("rank", 0), None, now, None, None, end))

    # -- main loop ----------------------------------------------------------------------

    def _all_done(self) -> bool:
        if any(not c.exhausted for c in self.cores):
            return False
        return all(not b.queue and not b.ops for b in self.banks.values())

    def run(self) -> SimResult:
        now = 0
        while True:
            self._issue_requests(now)
            if self._all_done():
                break
            if now > self.cfg.max_cycles:
                raise ConfigError("simulation exceeded max_cycles")
            refresh_due = now >= self.next_ref
            if refresh_due:
                t = self._refresh_ready(now)
                if t == now:
                    self._issue_refresh(now)
                    self.next_ref += self.trefi
                    now += 1
                    continue
            cands = self._candidates(now, refresh_due)
            ready = [c for c in cands if c[5] <= now]
            if ready:
                ready.sort(key=lambda c: (c[0], c[1], c[2].key))
                self._issue(ready[0], now)
                now += 1
                continue
            nxt = min([c[5] for c in cands] + [self._core_event(now), self.next_ref])
            if refresh_due:
                t = self._refresh_ready(now)
                nxt = min(nxt, t) if t != NEVER else nxt
            if nxt >= NEVER:
                raise ConfigError("simulator stalled with pending work")
            now = max(now + 1, nxt)
        return self._result()

    # -- results --------------------------------------------------------------------------

    def _result(self) -> SimResult:
        core_stats = []
        end = 0
        lat_sum = {c.idx: 0 for c in self.cores}
        for r in self.reads_done:
            lat_sum[r.core] += r.done - r.arrival
        for c in self.cores:
            fin = max([c.last_issue + 1] + [r.done for r in self.reads_done if r.core == c.idx])
            end = max(end, fin)
            avg = lat_sum[c.idx] / c.n_reads if c.n_reads else 0.0
            ipc = c.instructions / (fin * self.cfg.core.clock_ratio) if fin else 0.0
            core_stats.append(CoreStats(c.idx, c.instructions, c.n_reads, c.n_writes, fin, avg, ipc))
        n_reads = len(self.reads_done)
        avg_ns = (sum(lat_sum.values()) / n_reads * self.clk / 1000.0) if n_reads else 0.0
        energy = self.energy
        res = SimResult(self.cfg.mechanism, self.cfg.policy if self.cfg.mechanism == "tldram" else None,
                        self.clk, end, core_stats, n_reads, sum(c.n_writes for c in self.cores),
                        avg_ns, self.stats["rowbuf"], self.stats["near"], self.stats["far"], energy,
                        self.stats["transfers"], self.stats["refreshes"],
                        log=self.log if self.record_log else None,
                        access_counts=self.access_counts if self.count_accesses else None)
        if self.cfg.chip is not None:
            self._inject_errors(res)
        return res

    def _inject_errors(self, res: SimResult) -> None:
        """Check every read line against the chip model and route errors through ECC."""
        chip = self.cfg.chip
        ct = chip.topology
        if ct.chips_per_rank != 8 or ct.bus_width_bits != 64:
            raise ConfigError("error injection needs a x8 chip model with a 64-bit bus")
        groups: dict = {}
        for r in self.reads_done:
            groups.setdefault((r.timings, self._temp_at(r.done)), []).append(r)
        smap = self.cfg.shuffle if self.cfg.mechanism == "ava" and self.cfg.shuffle else ShuffleMap.identity()
        rng = np.random.default_rng([self.cfg.seed, 7])
        for (tp, temp), reqs in sorted(groups.items(), key=lambda kv: (kv[0][1], sorted(kv[0][0].as_dict().items()))):
            lines = {
                "bank": np.array([r.addr.bank % ct.banks_per_rank for r in reqs]),
                "subarray": np.array([r.addr.subarray % ct.subarrays_per_bank for r in reqs]),
                "row": np.array([r.addr.row_internal % ct.rows_per_subarray for r in reqs]),
                "column": np.array([r.addr.column % ct.columns_per_row for r in reqs]),
            }
            codes = line_failure_codes(chip, lines, tp, temp, self.cfg.refresh_ms, "read", None)
            res.timing_errors += int((codes == 1).sum())
            res.retention_errors += int((codes == 2).sum())
            fail = codes > 0
            if self.cfg.mechanism == "ava":
                st = tally_line_errors(fail, smap, rng)
                res.errors_total += st.total_errors
                res.errors_corrected += st.corrected
                res.errors_uncorrectable += st.uncorrectable
            else:
                n = int(fail.sum())
                res.errors_total += n
                res.errors_uncorrectable += n


def simulate(traces: Sequence[Sequence[TraceRecord]], cfg: SimConfig, record_log: bool = True,
             count_accesses: bool = False) -> SimResult:
    return Simulator(cfg, traces, record_log, count_accesses).run()


def profile_run(traces, cfg: SimConfig) -> dict:
    """Baseline pass that yields the static near-segment mapping for ``profile``."""
    base = SimConfig(**{**cfg.__dict__, "mechanism": "baseline", "chip": None})
    res = simulate(traces, base, record_log=False, count_accesses=True)
    return pol.build_profile_mapping(res.access_counts, cfg.segment_config().near_rows)
