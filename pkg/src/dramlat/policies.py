"""Near-segment management for TL-DRAM.

Three inclusive caching policies share one per-subarray cache structure:

* SC (simple caching): cache every far access, evict the least recently used row.
* WMC (wait-minimized caching): cache a far row only if its activation made a
  request to another row of the same subarray wait; evict the row that was
  least recently wait-inducing.
* BBC (benefit-based caching): cache every far access, evict the row with the
  smallest saturating benefit counter (LRU among ties); all counters halve
  on every eviction.

Exclusive variants keep each row in exactly one segment and swap rows via a
reserved dummy row. A static profile-based mapping is also provided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import ConfigError

POLICIES = ("none", "sc", "wmc", "bbc", "exclusive_sc", "exclusive_wmc", "exclusive_bbc", "profile")
BENEFIT_MAX = 255

ROW_BUFFER_HIT = "row_buffer_hit"
NEAR_HIT = "near_hit"
NEAR_MISS = "near_miss"


@dataclass
class Slot:
    tag: int
    dirty: bool = False
    lru: int = 0        # recency stamp of the last activation
    wait: int = 0       # recency stamp of the last wait-inducing activation
    benefit: int = 0


@dataclass
class SubarrayCache:
    capacity: int
    slots: dict = field(default_factory=dict)   # near slot index -> Slot
    where: dict = field(default_factory=dict)   # tag -> slot index

    def free_slot(self) -> Optional[int]:
        for i in range(self.capacity):
            if i not in self.slots:
                return i
        return None

    def lru_order(self) -> list:
        """Cached tags from least to most recently used."""
        return [s.tag for _, s in sorted(self.slots.items(), key=lambda kv: (kv[1].lru, kv[0]))]


@dataclass
class CacheState:
    """Near-segment contents of every subarray, created lazily."""

    policy: str
    near_rows: int
    exclusive: bool = False
    decay: bool = True          # BBC: halve all benefits on every eviction
    subarrays: dict = field(default_factory=dict)
    clock: int = 0

    def __post_init__(self):
        if self.policy not in ("sc", "wmc", "bbc"):
            raise ConfigError(f"unknown caching policy {self.policy!r}")
        if self.near_rows < 1:
            raise ConfigError("near segment needs at least one row")

    def sub(self, key) -> SubarrayCache:
        s = self.subarrays.get(key)
        if s is None:
            s = SubarrayCache(self.near_rows)
            if self.exclusive:
                # the first rows of every subarray start out in the near segment
                for i in range(self.near_rows):
                    s.slots[i] = Slot(i)
                    s.where[i] = i
            self.subarrays[key] = s
        return s

    def tick(self) -> int:
        self.clock += 1
        return self.clock

    def lookup(self, key, row) -> Optional[int]:
        return self.sub(key).where.get(row)


@dataclass(frozen=True)
class Action:
    """A data movement the caller must perform, in order.

    kind is "writeback" (near slot -> far row), "cache" (far row -> near
    slot, inclusive) or "swap" (exclusive exchange of a far row with the row
    held in a near slot).
    """

    kind: str
    slot: int
    row: int
    victim: Optional[int] = None


@dataclass(frozen=True)
class AccessOutcome:
    cls: str
    slot: Optional[int] = None
    actions: tuple = ()


def _evict(sub: SubarrayCache, victim_slot: int, actions: list, exclusive: bool) -> Slot:
    old = sub.slots.pop(victim_slot)
    del sub.where[old.tag]
    if old.dirty and not exclusive:
        actions.append(Action("writeback", victim_slot, old.tag))
    return old


def _insert(state: CacheState, sub: SubarrayCache, row: int, slot: int, victim: Optional[Slot],
            actions: list) -> None:
    stamp = state.tick()
    sub.slots[slot] = Slot(row, lru=stamp, wait=stamp)
    sub.where[row] = slot
    if state.exclusive:
        actions.append(Action("swap", slot, row, victim.tag if victim else None))
    else:
        actions.append(Action("cache", slot, row, victim.tag if victim else None))


def _victim_lru(sub: SubarrayCache) -> int:
    return min(sub.slots, key=lambda i: (sub.slots[i].lru, i))


def _victim_wait(sub: SubarrayCache) -> int:
    return min(sub.slots, key=lambda i: (sub.slots[i].wait, sub.slots[i].lru, i))


def _victim_benefit(sub: SubarrayCache) -> int:
    return min(sub.slots, key=lambda i: (sub.slots[i].benefit, sub.slots[i].lru, i))


def _bank_open_row(bank) -> Optional[int]:
    """Open row of ``bank``: a BankState-like object, a plain row or None."""
    if bank is None or isinstance(bank, int):
        return bank
    row = getattr(bank, "open_row", None)
    if isinstance(row, tuple):
        return row[1]
    return row


def _key_row(addr):
    """(subarray key, row) from an Address or a (key, row) pair."""
    if isinstance(addr, tuple):
        return addr
    return (addr.bank_key, addr.subarray), addr.row_external


def sc_on_access(state: CacheState, bank, addr, is_write: bool = False) -> AccessOutcome:
    """Simple caching: every far access is cached, LRU replacement."""
    key, row = _key_row(addr)
    sub = state.sub(key)
    slot = sub.where.get(row)
    if _bank_open_row(bank) == row:
        if slot is not None and is_write:
            sub.slots[slot].dirty = True
        return AccessOutcome(ROW_BUFFER_HIT, slot)
    if slot is not None:
        s = sub.slots[slot]
        s.lru = state.tick()
        s.dirty |= is_write and not state.exclusive
        return AccessOutcome(NEAR_HIT, slot)
    actions: list = []
    target = sub.free_slot()
    victim = None
    if target is None:
        target = _victim_lru(sub)
        victim = _evict(sub, target, actions, state.exclusive)
    _insert(state, sub, row, target, victim, actions)
    return AccessOutcome(NEAR_MISS, target, tuple(actions))


def wait_inducing(row: int, subarray, act_time: int, trc_cycles: int,
                  pending_queue_view: Iterable) -> bool:
    """True if a request to another row of the same subarray arrived (or was
    still waiting) while ``row`` was activated, i.e. within [ACT, ACT + tRC).

    ``pending_queue_view`` yields (arrival_time, subarray, row[, done_time])
    tuples for requests of the same bank.
    """
    end = act_time + trc_cycles
    for entry in pending_queue_view:
        arrival, sa, r = entry[0], entry[1], entry[2]
        done = entry[3] if len(entry) > 3 else None
        if sa != subarray or r == row or arrival >= end:
            continue
        if done is not None and done <= act_time:
            continue
        return True
    return False


def wmc_on_access(state: CacheState, bank, addr, pending_queue_view: Iterable = (),
                  act_time: int = 0, trc_cycles: int = 0, is_write: bool = False) -> AccessOutcome:
    """Wait-minimized caching, evaluated once the activation window is known.

    A far row is cached only if it was wait-inducing; cached rows refresh
    their wait-recency only when wait-inducing.
    """
    key, row = _key_row(addr)
    subarray = key[1] if isinstance(key, tuple) else key
    sub = state.sub(key)
    slot = sub.where.get(row)
    waited = wait_inducing(row, subarray, act_time, trc_cycles, pending_queue_view)
    if slot is not None:
        s = sub.slots[slot]
        s.lru = state.tick()
        s.dirty |= is_write and not state.exclusive
        if waited:
            s.wait = state.tick()
        return AccessOutcome(NEAR_HIT, slot)
    if not waited:
        return AccessOutcome(NEAR_MISS)
    actions: list = []
    target = sub.free_slot()
    victim = None
    if target is None:
        target = _victim_wait(sub)
        victim = _evict(sub, target, actions, state.exclusive)
    _insert(state, sub, row, target, victim, actions)
    return AccessOutcome(NEAR_MISS, target, tuple(actions))


def benefit_cycles(delta_ps: int, clock_ps: int) -> int:
    return max(0, math.ceil(delta_ps / clock_ps))


def bbc_on_access(state: CacheState, bank, addr, delta_trcd_ps: int = 0, clock_ps: int = 1875,
                  is_write: bool = False) -> AccessOutcome:
    """Benefit-based caching: a near hit earns ceil(dtRCD / clock) cycles."""
    key, row = _key_row(addr)
    sub = state.sub(key)
    slot = sub.where.get(row)
    if _bank_open_row(bank) == row:
        return AccessOutcome(ROW_BUFFER_HIT, slot)
    if slot is not None:
        s = sub.slots[slot]
        s.lru = state.tick()
        s.dirty |= is_write and not state.exclusive
        s.benefit = min(BENEFIT_MAX, s.benefit + benefit_cycles(delta_trcd_ps, clock_ps))
        return AccessOutcome(NEAR_HIT, slot)
    actions: list = []
    target = sub.free_slot()
    victim = None
    if target is None:
        target = _victim_benefit(sub)
        victim = _evict(sub, target, actions, state.exclusive)
        if state.decay:
            for s in sub.slots.values():
                s.benefit //= 2
    _insert(state, sub, row, target, victim, actions)
    return AccessOutcome(NEAR_MISS, target, tuple(actions))


def bbc_add_wait(state: CacheState, key, row: int, waited_cycles: int) -> None:
    """Credit a near row whose activation made a queued request wait.

    The credit is the wait actually observed, in cycles.
    """
    sub = state.sub(key)
    slot = sub.where.get(row)
    if slot is None or waited_cycles <= 0:
        return
    s = sub.slots[slot]
    s.benefit = min(BENEFIT_MAX, s.benefit + int(waited_cycles))


# --- exclusive mapping ----------------------------------------------------------------------

@dataclass
class ExclusiveMap:
    """Logical-to-physical row placement of one subarray with a dummy row.

    Physical rows 0..near_rows-1 are the near segment. Every logical row has
    exactly one physical home; ``dummy`` is the spare row used for swaps.
    """

    near_rows: int
    rows: int
    dummy: Optional[int] = None
    home: dict = field(default_factory=dict)     # logical -> physical
    content: dict = field(default_factory=dict)  # physical -> data (for checking)

    def __post_init__(self):
        if self.dummy is None:
            self.dummy = self.rows - 1
        if not 0 <= self.dummy < self.rows:
            raise ConfigError("dummy row outside the subarray")
        if not self.home:
            self.home = {r: r for r in range(self.rows) if r != self.dummy}

    def is_near(self, logical: int) -> bool:
        return self.home[logical] < self.near_rows


def exclusive_swap(xmap: ExclusiveMap, c_row: int, e_row: int) -> list:
    """Swap logical rows ``c_row`` (far) and ``e_row`` (near) through the dummy.

    Returns the three transfers (src_phys, dst_phys): C->D, E->C, D->E.
    """
    if xmap.dummy is None:
        raise ConfigError("exclusive caching needs a dummy row per subarray")
    pc, pe, d = xmap.home[c_row], xmap.home[e_row], xmap.dummy
    moves = [(pc, d), (pe, pc), (d, pe)]
    for src, dst in moves:
        xmap.content[dst] = xmap.content.get(src)
    xmap.home[c_row], xmap.home[e_row] = pe, pc
    return moves


def exclusive_capacity_loss(rows_per_subarray: int) -> float:
    """One dummy row per subarray."""
    return 1.0 / rows_per_subarray


# --- profile-based static mapping -----------------------------------------------------------

def build_profile_mapping(access_counts: dict, near_rows: int) -> dict:
    """Top-``near_rows`` rows of every subarray by access count (ties to the lower row).

    ``access_counts`` maps (subarray key, row) -> count.
    """
    per: dict = {}
    for (key, row), n in access_counts.items():
        per.setdefault(key, []).append((-n, row))
    return {key: frozenset(r for _, r in sorted(v)[:near_rows]) for key, v in per.items()}


# --- tag storage ----------------------------------------------------------------------------

@dataclass(frozen=True)
class TagStorage:
    tag_bits: int
    replacement_bits: int

    @property
    def total_bits(self) -> int:
        return self.tag_bits + self.replacement_bits


def tag_storage(N: int, F: int, S: int, scheme: str) -> TagStorage:
    """Controller storage for N near rows, F far rows and S subarrays.

    Inclusive tags name one of F far rows per near slot; exclusive tags give
    every row its segment position. SC and WMC keep an LRU rank per slot,
    BBC an 8-bit benefit counter.
    """
    exclusive = scheme.startswith("exclusive")
    base = scheme.split("_", 1)[1] if exclusive and "_" in scheme else (None if exclusive else scheme)
    if base not in (None, "sc", "wmc", "bbc"):
        raise ConfigError(f"unknown scheme {scheme!r}")
    if exclusive:
        tags = S * (N + F) * math.ceil(math.log2(N + F))
    else:
        tags = S * N * math.ceil(math.log2(F))
    if base in ("sc", "wmc"):
        repl = S * N * math.ceil(math.log2(N))
    elif base == "bbc":
        repl = S * N * 8
    else:
        repl = 0
    return TagStorage(tags, repl)


def tag_storage_bits(N: int, F: int, S: int, scheme: str) -> int:
    return tag_storage(N, F, S, scheme).total_bits
