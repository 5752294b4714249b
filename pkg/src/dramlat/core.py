"""DRAM topology, address decoding, timing constraints and the bank state machine.

All durations are integer picoseconds. Conversion to controller cycles always
rounds up, so a command scheduled on a cycle boundary never violates the
underlying nanosecond constraint.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import AddressError, ConfigError, IllegalCommand

LINE_BYTES = 64


def ps_to_cycles(d: int, clock_period_ps: int) -> int:
    """Ceiling division of a duration by the clock period."""
    if clock_period_ps <= 0:
        raise ConfigError("clock_period_ps must be positive")
    if d <= 0:
        return 0
    return -(-int(d) // int(clock_period_ps))


@dataclass(frozen=True)
class TimingParams:
    """DRAM timing-constraint vector in picoseconds.

    ``trc`` is derived from ``tras + trp``; passing an inconsistent value raises.
    """

    trcd: int
    tras: int
    trp: int
    twr: int
    tcl: int
    tcwl: int
    tbl: int
    trc: Optional[int] = None

    def __post_init__(self):
        for name in ("trcd", "tras", "trp", "twr", "tcl", "tcwl", "tbl"):
            value = getattr(self, name)
            if int(value) != value:
                raise ConfigError(f"{name} must be an integer number of ps")
            object.__setattr__(self, name, int(value))
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        expected = self.tras + self.trp
        if self.trc is None:
            object.__setattr__(self, "trc", expected)
        elif int(self.trc) != expected:
            raise ConfigError(f"trc ({self.trc}) must equal tras + trp ({expected})")

    def replace(self, **changes) -> "TimingParams":
        """Copy with changes; ``trc`` is always recomputed."""
        changes.setdefault("trc", None)
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return {f"{k}_ps": getattr(self, k) for k in TIMING_FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> "TimingParams":
        values = {}
        for key in TIMING_FIELDS + ("trc",):
            if f"{key}_ps" in data:
                values[key] = data[f"{key}_ps"]
            elif f"{key}_ns" in data:
                values[key] = round(float(data[f"{key}_ns"]) * 1000)
        missing = [k for k in TIMING_FIELDS if k not in values]
        if missing:
            raise ConfigError(f"timing parameters missing: {', '.join(missing)}")
        return cls(**values)

    def read_path_ps(self) -> int:
        return self.trcd + self.tras + self.trp

    def write_path_ps(self) -> int:
        return self.trcd + self.twr + self.trp


TIMING_FIELDS = ("trcd", "tras", "trp", "twr", "tcl", "tcwl", "tbl")
# parameters that the profiling machinery is allowed to reduce
REDUCIBLE = ("trcd", "tras", "trp", "twr")


DDR3_1066 = TimingParams(trcd=15000, tras=37500, trp=15000, twr=15000,
                         tcl=15000, tcwl=11250, tbl=7500)
DDR3_1066_CLOCK_PS = 1875

DDR3_1600 = TimingParams(trcd=13750, tras=35000, trp=13750, twr=15000,
                         tcl=13750, tcwl=10000, tbl=5000)
DDR3_1600_CLOCK_PS = 1250

TIMING_PRESETS = {
    "ddr3_1066": (DDR3_1066, DDR3_1066_CLOCK_PS),
    "ddr3_1600": (DDR3_1600, DDR3_1600_CLOCK_PS),
}


@dataclass(frozen=True)
class Topology:
    channels: int = 1
    ranks_per_channel: int = 1
    chips_per_rank: int = 8
    banks_per_rank: int = 8
    subarrays_per_bank: int = 32
    rows_per_subarray: int = 512
    mats_per_subarray_row: int = 16
    cells_per_mat_side: int = 512
    bus_width_bits: int = 64
    burst_length: int = 8
    clock_period_ps: int = DDR3_1066_CLOCK_PS

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"topology.{f.name} must be an integer >= 1")
        if self.bus_width_bits != self.chips_per_rank * 8:
            raise ConfigError("bus_width_bits must equal chips_per_rank * 8")
        if self.burst_length * self.bus_width_bits != LINE_BYTES * 8:
            raise ConfigError("burst_length * bus_width_bits must be 512 (64-byte line)")
        if self.rows_per_subarray % self.cells_per_mat_side:
            raise ConfigError("rows_per_subarray must be a multiple of cells_per_mat_side")
        if 64 % self.mats_per_subarray_row:
            raise ConfigError("mats_per_subarray_row must divide 64")
        if self.cells_per_mat_side % self.bits_per_mat:
            raise ConfigError("cells_per_mat_side must be a multiple of 64 / mats_per_subarray_row")

    @property
    def bits_per_mat(self) -> int:
        """Bits each mat contributes to one chip's 64-bit column access."""
        return 64 // self.mats_per_subarray_row

    @property
    def columns_per_row(self) -> int:
        """Cache-line columns per row (one 64-byte line per column access)."""
        return self.cells_per_mat_side // self.bits_per_mat

    @property
    def rows_per_bank(self) -> int:
        return self.subarrays_per_bank * self.rows_per_subarray

    @property
    def row_address_bits(self) -> int:
        return max(1, (self.rows_per_subarray - 1).bit_length())

    @property
    def capacity_bytes(self) -> int:
        return (self.channels * self.ranks_per_channel * self.banks_per_rank
                * self.rows_per_bank * self.columns_per_row * LINE_BYTES)

    @property
    def cells_per_chip(self) -> int:
        return (self.banks_per_rank * self.subarrays_per_bank * self.rows_per_subarray
                * self.mats_per_subarray_row * self.cells_per_mat_side)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class RowMap:
    """External-to-internal row address map: XOR mask, then bit permutation.

    ``perm[i]`` names the external bit that lands in internal bit ``i``.
    """

    bits: int
    perm: tuple = ()
    xor_mask: int = 0

    def __post_init__(self):
        perm = tuple(self.perm) if self.perm else tuple(range(self.bits))
        if sorted(perm) != list(range(self.bits)):
            raise ConfigError(f"row map permutation must be a permutation of 0..{self.bits - 1}")
        if not 0 <= self.xor_mask < (1 << self.bits):
            raise ConfigError("row map xor_mask out of range")
        object.__setattr__(self, "perm", perm)

    @classmethod
    def identity(cls, bits: int) -> "RowMap":
        return cls(bits)

    @property
    def is_identity(self) -> bool:
        return self.xor_mask == 0 and self.perm == tuple(range(self.bits))

    def to_internal(self, row):
        if self.is_identity:
            return row
        x = np.asarray(row) ^ self.xor_mask
        out = np.zeros_like(x)
        for i, src in enumerate(self.perm):
            out |= ((x >> src) & 1) << i
        return out if isinstance(row, np.ndarray) else int(out)

    def to_external(self, row):
        if self.is_identity:
            return row
        x = np.asarray(row)
        out = np.zeros_like(x)
        for i, src in enumerate(self.perm):
            out |= ((x >> i) & 1) << src
        out = out ^ self.xor_mask
        return out if isinstance(row, np.ndarray) else int(out)


@dataclass(frozen=True)
class Address:
    channel: int
    rank: int
    bank: int
    subarray: int
    row_external: int
    row_internal: int
    column: int
    byte_offset: int = 0

    @property
    def bank_key(self) -> tuple:
        return (self.channel, self.rank, self.bank)


MAPPING_SCHEMES = ("row_interleaved", "line_interleaved")


def _fields_lsb_first(topo: Topology, scheme: str):
    rows = topo.rows_per_bank
    if scheme == "row_interleaved":
        return [("byte_offset", LINE_BYTES), ("column", topo.columns_per_row),
                ("channel", topo.channels), ("bank", topo.banks_per_rank),
                ("rank", topo.ranks_per_channel), ("row", rows)]
    if scheme == "line_interleaved":
        return [("byte_offset", LINE_BYTES), ("channel", topo.channels),
                ("bank", topo.banks_per_rank), ("rank", topo.ranks_per_channel),
                ("column", topo.columns_per_row), ("row", rows)]
    raise ConfigError(f"unknown address mapping scheme {scheme!r}")


def decode_address(byte_addr: int, topo: Topology, scheme: str = "row_interleaved",
                   row_map: Optional[RowMap] = None) -> Address:
    if not 0 <= byte_addr < topo.capacity_bytes:
        raise AddressError(f"address {byte_addr:#x} outside capacity {topo.capacity_bytes:#x}")
    rest = int(byte_addr)
    values = {}
    for name, radix in _fields_lsb_first(topo, scheme):
        rest, values[name] = divmod(rest, radix)
    subarray, row_ext = divmod(values.pop("row"), topo.rows_per_subarray)
    row_int = row_map.to_internal(row_ext) if row_map is not None else row_ext
    return Address(subarray=subarray, row_external=row_ext, row_internal=row_int, **values)


def encode_address(addr: Address, topo: Topology, scheme: str = "row_interleaved") -> int:
    values = dataclasses.asdict(addr)
    values["row"] = addr.subarray * topo.rows_per_subarray + addr.row_external
    out = 0
    scale = 1
    for name, radix in _fields_lsb_first(topo, scheme):
        v = values[name]
        if not 0 <= v < radix:
            raise AddressError(f"{name}={v} out of range [0, {radix})")
        out += v * scale
        scale *= radix
    return out


class CommandKind(enum.Enum):
    ACT = "ACT"
    RD = "RD"
    WR = "WR"
    PRE = "PRE"
    REF = "REF"
    TRANSFER = "TRANSFER"


@dataclass(frozen=True)
class Command:
    kind: CommandKind
    address: Address
    issue_time: int = 0

    @property
    def row(self) -> tuple:
        return (self.address.subarray, self.address.row_external)


class BankStatus(enum.Enum):
    PRECHARGED = "Precharged"
    ACTIVATING = "Activating"
    ACTIVATED = "Activated"
    PRECHARGING = "Precharging"


_NEVER = -(10 ** 12)


@dataclass(frozen=True)
class BankState:
    """Per-bank command bookkeeping; times are controller cycles.

    ``open_row`` is a ``(subarray, row)`` pair. ``row_timings`` holds the
    timing set of the most recently activated row, which governs the
    constraints that row imposes (per-segment timings under TL-DRAM).
    """

    status: BankStatus = BankStatus.PRECHARGED
    open_row: Optional[tuple] = None
    last_act: int = _NEVER
    last_col: int = _NEVER
    last_pre: int = _NEVER
    last_wr_end: int = _NEVER
    busy_until: int = 0
    segment: Optional[str] = None
    row_timings: Optional[TimingParams] = None

    def __post_init__(self):
        is_open = self.status in (BankStatus.ACTIVATING, BankStatus.ACTIVATED)
        if is_open != (self.open_row is not None):
            raise ConfigError("open_row must be set iff the bank is activating/activated")

    def status_at(self, now: int, clock_ps: int) -> BankStatus:
        if self.status is BankStatus.ACTIVATED and self.row_timings is not None:
            if now < self.last_act + ps_to_cycles(self.row_timings.trcd, clock_ps):
                return BankStatus.ACTIVATING
        if self.status is BankStatus.PRECHARGED and self.row_timings is not None:
            if now < self.last_pre + ps_to_cycles(self.row_timings.trp, clock_ps):
                return BankStatus.PRECHARGING
        return self.status


@lru_cache(maxsize=256)
def cycle_timings(timings: TimingParams, clock_ps: int) -> dict:
    return {k: ps_to_cycles(getattr(timings, k), clock_ps)
            for k in TIMING_FIELDS + ("trc",)}


def earliest_legal_time(state: BankState, cmd: Command, timings: TimingParams,
                        now: int, clock_ps: int) -> int:
    """Earliest cycle >= ``now`` at which ``cmd`` violates no constraint.

    ``timings`` applies to the row named by ``cmd``; constraints left behind
    by the previously activated row use that row's own timing set.
    """
    prev = cycle_timings(state.row_timings or timings, clock_ps)
    kind = cmd.kind
    t = max(now, state.busy_until)
    if kind in (CommandKind.ACT, CommandKind.REF, CommandKind.TRANSFER):
        if state.status is not BankStatus.PRECHARGED:
            raise IllegalCommand(f"{kind.value} while bank is {state.status.value}")
        t = max(t, state.last_pre + prev["trp"])
        if kind is not CommandKind.REF:
            t = max(t, state.last_act + prev["trc"])
        return t
    if state.status is not BankStatus.ACTIVATED:
        raise IllegalCommand(f"{kind.value} while bank is {state.status.value}")
    if kind in (CommandKind.RD, CommandKind.WR):
        if state.open_row != cmd.row:
            raise IllegalCommand(f"{kind.value} to row {cmd.row} but row {state.open_row} is open")
        return max(t, state.last_act + prev["trcd"])
    if kind is CommandKind.PRE:
        return max(t, state.last_act + prev["tras"], state.last_wr_end + prev["twr"])
    raise IllegalCommand(f"unsupported command {kind}")


def apply_command(state: BankState, cmd: Command, timings: Optional[TimingParams] = None,
                  clock_ps: int = DDR3_1066_CLOCK_PS, segment: Optional[str] = None) -> BankState:
    """Return the bank state after issuing ``cmd`` at ``cmd.issue_time``.

    The caller is responsible for issuing at a legal time; only structural
    legality (command vs. state) is checked here.
    """
    t = cmd.issue_time
    kind = cmd.kind
    if kind is CommandKind.ACT:
        if state.status is not BankStatus.PRECHARGED:
            raise IllegalCommand(f"ACT while bank is {state.status.value}")
        return dataclasses.replace(state, status=BankStatus.ACTIVATED, open_row=cmd.row,
                                   last_act=t, segment=segment,
                                   row_timings=timings or state.row_timings)
    if kind is CommandKind.PRE:
        if state.status is not BankStatus.ACTIVATED:
            raise IllegalCommand(f"PRE while bank is {state.status.value}")
        return dataclasses.replace(state, status=BankStatus.PRECHARGED, open_row=None,
                                   last_pre=t, segment=None)
    if kind in (CommandKind.RD, CommandKind.WR):
        if state.status is not BankStatus.ACTIVATED or state.open_row != cmd.row:
            raise IllegalCommand(f"{kind.value} to a row that is not open")
        if kind is CommandKind.WR:
            tm = cycle_timings(state.row_timings or timings, clock_ps)
            return dataclasses.replace(state, last_col=t,
                                       last_wr_end=t + tm["tcwl"] + tm["tbl"])
        return dataclasses.replace(state, last_col=t)
    if kind is CommandKind.REF:
        if state.status is not BankStatus.PRECHARGED:
            raise IllegalCommand("REF while a row is open")
        return state
    raise IllegalCommand(f"apply_command does not handle {kind}")


def access_latency(loaded: bool, timings: TimingParams) -> int:
    """Unloaded (tRCD+tCL+tBL) or back-to-back row-conflict latency in ps."""
    unloaded = timings.trcd + timings.tcl + timings.tbl
    return unloaded + timings.trc if loaded else unloaded


def access_latency_ps(loaded: bool, trcd: int, tcl: int, tbl: int, trc: int = 0) -> int:
    unloaded = trcd + tcl + tbl
    return unloaded + trc if loaded else unloaded


@dataclass
class LoggedCommand:
    """A command as recorded by the simulator, with the timing set it used."""

    kind: CommandKind
    bank_key: tuple
    row: Optional[tuple]
    time: int
    timings: Optional[TimingParams] = None
    segment: Optional[str] = None
    end: Optional[int] = None  # TRANSFER occupancy end


def check_command_log(log: Sequence[LoggedCommand], clock_ps: int) -> list:
    """Return human-readable timing violations found in a command log."""
    problems = []
    per_bank: dict = {}
    for c in log:
        per_bank.setdefault(c.bank_key, []).append(c)
    for key, cmds in per_bank.items():
        cmds = sorted(cmds, key=lambda c: c.time)
        last_act = None
        last_act_t = None
        last_pre_t = None
        last_pre_trp = None
        busy_until = None
        for c in cmds:
            if c.kind is CommandKind.ACT:
                if last_act is not None:
                    tm = cycle_timings(last_act.timings, clock_ps)
                    if c.time - last_act.time < tm["trc"]:
                        problems.append(f"{key}: ACT@{c.time} violates tRC after ACT@{last_act.time}")
                if last_pre_t is not None and c.time - last_pre_t < last_pre_trp:
                    problems.append(f"{key}: ACT@{c.time} violates tRP after PRE@{last_pre_t}")
                if busy_until is not None and c.time < busy_until:
                    problems.append(f"{key}: ACT@{c.time} inside transfer ending @{busy_until}")
                last_act, last_act_t = c, c.time
            elif c.kind in (CommandKind.RD, CommandKind.WR):
                tm = cycle_timings(last_act.timings, clock_ps)
                if c.time - last_act_t < tm["trcd"]:
                    problems.append(f"{key}: {c.kind.value}@{c.time} violates tRCD after ACT@{last_act_t}")
            elif c.kind is CommandKind.PRE:
                tm = cycle_timings(last_act.timings, clock_ps)
                if c.time - last_act_t < tm["tras"]:
                    problems.append(f"{key}: PRE@{c.time} violates tRAS after ACT@{last_act_t}")
                last_pre_t, last_pre_trp = c.time, tm["trp"]
            elif c.kind is CommandKind.TRANSFER:
                if busy_until is not None and c.time < busy_until:
                    problems.append(f"{key}: TRANSFER@{c.time} overlaps previous transfer")
                if last_pre_t is not None and c.time - last_pre_t < last_pre_trp:
                    problems.append(f"{key}: TRANSFER@{c.time} violates tRP after PRE@{last_pre_t}")
                busy_until = c.end
                # a transfer ends in the precharged state
                last_act = None
                last_pre_t, last_pre_trp = c.end, 0
    return problems
