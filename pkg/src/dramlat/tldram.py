"""Tiered-Latency DRAM substrate.

Segment timings (table presets and piecewise-linear interpolation), inter-segment
transfer scheduling, isolation-transistor area accounting and a per-command
energy model. Tier 0 is the near segment (next to the sense amplifiers).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import (DDR3_1066, Address, BankState, BankStatus, Command, CommandKind,
                   TimingParams, Topology, ps_to_cycles)
from .errors import ConfigError, TransferError

ROWS = 512
TRANSFER_WRITE_PS = 4000

# (near rows) -> ((near tRCD, near tRC), (far tRCD, far tRC)) in ps, DDR3-1066 base
TABLE_PRESETS = {
    128: ((9300, 27800), (13200, 64100)),
    32: ((8200, 23100), (12100, 65800)),
}

# three tiers of 32/224/256 rows: (tRCD, tRC) in ps, DDR3-1066 base
THREE_TIER_ROWS = (32, 224, 256)
THREE_TIER_PS = ((8220, 23100), (10605, 40845), (15615, 82372))

# Interpolation anchors over near-segment length: (near rows, near tRCD, near tRC,
# far tRCD, far tRC), ns. The two middle anchors are the table presets; the
# others follow the published sensitivity curves (near latency rises with near
# length; far tRC falls and far tRCD rises as the far segment gets shorter).
INTERP_ANCHORS = (
    (1, 7.6, 20.5, 11.8, 66.2),
    (32, 8.2, 23.1, 12.1, 65.8),
    (128, 9.3, 27.8, 13.2, 64.1),
    (256, 11.0, 36.0, 14.6, 61.0),
    (384, 12.8, 44.5, 15.9, 58.0),
    (511, 14.8, 52.0, 17.0, 55.0),
)

E_WORDLINE = 1.0
E_BITLINE = 10.0
E_IO = 2.0

# isolation transistor width vs. cell and sense-amplifier footprint (per bitline)
ISO_AREA = 11.5
SENSE_AMP_AREA = 115.2
# array share of the die, chosen so two isolation sets (3.66% of a subarray) are 3.15% of the die
DIE_ARRAY_RATIO = 0.0315 / (2 * ISO_AREA / (SENSE_AMP_AREA + ROWS))


@dataclass(frozen=True)
class Tier:
    rows: int
    timings: TimingParams


@dataclass(frozen=True)
class SegmentConfig:
    tiers: tuple
    base: TimingParams = DDR3_1066
    isolation_sets: int = 2
    transfer_write_ps: int = TRANSFER_WRITE_PS

    def __post_init__(self):
        tiers = tuple(self.tiers)
        if len(tiers) < 2:
            raise ConfigError("a segmented bitline needs at least two tiers")
        if any(t.rows < 1 for t in tiers):
            raise ConfigError("every tier needs at least one row")
        if any(t.timings.trcd < tiers[0].timings.trcd for t in tiers[1:]):
            raise ConfigError("near tier tRCD must not exceed other tiers")
        if len(tiers) == 2 and not (tiers[0].timings.trc < self.base.trc < tiers[1].timings.trc):
            raise ConfigError("two-tier config needs near tRC < base tRC < far tRC")
        if self.isolation_sets < 1 or self.transfer_write_ps < 0:
            raise ConfigError("invalid isolation_sets or transfer_write_ps")
        object.__setattr__(self, "tiers", tiers)

    @property
    def rows_per_subarray(self) -> int:
        return sum(t.rows for t in self.tiers)

    @property
    def near_rows(self) -> int:
        return self.tiers[0].rows

    @property
    def near(self) -> TimingParams:
        return self.tiers[0].timings

    @property
    def far(self) -> TimingParams:
        return self.tiers[-1].timings

    def tier_of_row(self, physical_row: int) -> int:
        edge = 0
        for k, t in enumerate(self.tiers):
            edge += t.rows
            if physical_row < edge:
                return k
        raise ConfigError("row beyond the segmented bitline")

    def check_topology(self, topo: Topology):
        if self.rows_per_subarray != topo.rows_per_subarray:
            raise ConfigError("tier rows must add up to rows_per_subarray")


def _scale_from_1066(ps: int, base_value: int, ref_value: int) -> int:
    return ps if base_value == ref_value else round(ps * base_value / ref_value)


def segment_timings(base: TimingParams, trcd: int, trc: int) -> TimingParams:
    """Full timing set for a segment with the given tRCD and tRC.

    tRAS and tRP keep the base split of tRC; tWR scales with tRAS (restoration).
    """
    tras = round(base.tras * trc / base.trc)
    twr = max(1, round(base.twr * tras / base.tras))
    return base.replace(trcd=int(trcd), tras=int(tras), trp=int(trc - tras), twr=twr)


def _interp(x: float, xs: Sequence[float], ys: Sequence[float]) -> float:
    i = bisect.bisect_right(xs, x) - 1
    i = min(max(i, 0), len(xs) - 2)
    x0, x1 = xs[i], xs[i + 1]
    return ys[i] + (ys[i + 1] - ys[i]) * (x - x0) / (x1 - x0)


def derive_segment_timings(near_rows: int, base: TimingParams = DDR3_1066,
                           mode: str = "table", rows_per_subarray: int = ROWS) -> SegmentConfig:
    """Near/far timings for a two-tier bitline of ``rows_per_subarray`` cells."""
    if not 1 <= near_rows < rows_per_subarray:
        raise ConfigError(f"near_rows must be in [1, {rows_per_subarray})")
    if mode == "table":
        if rows_per_subarray != ROWS or near_rows not in TABLE_PRESETS:
            raise ConfigError(f"no table entry for {near_rows} near rows; use mode 'interp'")
        (n_rcd, n_rc), (f_rcd, f_rc) = TABLE_PRESETS[near_rows]
    elif mode == "interp":
        # anchors are defined for a 512-cell bitline; other lengths scale the near length
        x = near_rows * ROWS / rows_per_subarray
        xs = [a[0] for a in INTERP_ANCHORS]
        n_rcd, n_rc, f_rcd, f_rc = (round(1000 * _interp(x, xs, [a[k] for a in INTERP_ANCHORS]))
                                    for k in (1, 2, 3, 4))
    else:
        raise ConfigError(f"unknown segment timing mode {mode!r}")
    ref = DDR3_1066
    near = segment_timings(base, _scale_from_1066(n_rcd, base.trcd, ref.trcd),
                           _scale_from_1066(n_rc, base.trc, ref.trc))
    far = segment_timings(base, _scale_from_1066(f_rcd, base.trcd, ref.trcd),
                          _scale_from_1066(f_rc, base.trc, ref.trc))
    return SegmentConfig((Tier(near_rows, near), Tier(rows_per_subarray - near_rows, far)), base)


def three_tier_config(base: TimingParams = DDR3_1066) -> SegmentConfig:
    ref = DDR3_1066
    tiers = []
    for rows, (rcd, rc) in zip(THREE_TIER_ROWS, THREE_TIER_PS):
        tiers.append(Tier(rows, segment_timings(base, _scale_from_1066(rcd, base.trcd, ref.trcd),
                                                _scale_from_1066(rc, base.trc, ref.trc))))
    return SegmentConfig(tuple(tiers), base, isolation_sets=4)


def percent_of_base(cfg: SegmentConfig) -> list:
    """(tRCD %, tRC %) of every tier relative to the base timings."""
    return [(100.0 * t.timings.trcd / cfg.base.trcd, 100.0 * t.timings.trc / cfg.base.trc)
            for t in cfg.tiers]


# --- inter-segment transfer ---------------------------------------------------------------

@dataclass(frozen=True)
class TransferSchedule:
    """Commands (ps offsets from the transfer start) and bank occupancy."""

    commands: tuple            # ((offset_ps, CommandKind, row), ...)
    occupancy_ps: int
    src_row: Optional[int] = None
    dst_row: Optional[int] = None

    def apply(self, contents: dict, subarray) -> None:
        """Copy the source row's content to the destination row."""
        if self.src_row is None or self.src_row == self.dst_row:
            return
        contents[(subarray, self.dst_row)] = contents.get((subarray, self.src_row))


def transfer_occupancy_ps(src: TimingParams, far: TimingParams,
                          write_ps: int = TRANSFER_WRITE_PS, elapsed_ps: int = 0) -> int:
    """Bank busy time of a transfer whose source was activated ``elapsed_ps`` ago.

    The destination ACT follows once the source row is sensed (tRCD) and its
    write overlaps the source's restoration (tRAS); the connected bitline is
    then precharged with far-segment tRP.
    """
    restore_done = max(src.tras, max(elapsed_ps, src.trcd) + write_ps)
    return max(0, restore_done - elapsed_ps) + far.trp


def intersegment_transfer(src: Address, dst: Address, state: BankState,
                          cfg: SegmentConfig) -> TransferSchedule:
    """Schedule copying row ``src`` into row ``dst`` of the same subarray.

    Rows are physical row indices within the subarray (``row_internal``). The
    bank must be precharged or have ``src`` open.
    """
    if (src.channel, src.rank, src.bank, src.subarray) != (dst.channel, dst.rank, dst.bank, dst.subarray):
        raise TransferError("transfer source and destination must share a subarray")
    if src.row_internal == dst.row_internal:
        return TransferSchedule((), 0, src.row_internal, dst.row_internal)
    src_t = cfg.tiers[cfg.tier_of_row(src.row_internal)].timings
    cfg.tier_of_row(dst.row_internal)
    open_src = state.status is BankStatus.ACTIVATED and state.open_row == (src.subarray, src.row_external)
    if state.status is not BankStatus.PRECHARGED and not open_src:
        raise TransferError("bank must be precharged or have the source row open")
    dst_at = src_t.trcd
    cmds = []
    if not open_src:
        cmds.append((0, CommandKind.ACT, src.row_internal))
    cmds.append((dst_at, CommandKind.ACT, dst.row_internal))
    occ = transfer_occupancy_ps(src_t, cfg.far, cfg.transfer_write_ps)
    cmds.append((occ - cfg.far.trp, CommandKind.PRE, None))
    return TransferSchedule(tuple(cmds), occ, src.row_internal, dst.row_internal)


def serial_copy_ps(src: TimingParams, dst: TimingParams) -> int:
    """Bank time of a copy without overlap: full src cycle then full dst cycle."""
    return src.trc + dst.trc


# --- area -----------------------------------------------------------------------------------

@dataclass(frozen=True)
class AreaReport:
    isolation_overhead_frac: float
    capacity_loss_frac: float
    die_overhead_frac: float

    @property
    def total_frac(self) -> float:
        return self.die_overhead_frac + self.capacity_loss_frac


def isolation_fraction(sets: int, cells_per_bitline: int = ROWS) -> float:
    return sets * ISO_AREA / (SENSE_AMP_AREA + cells_per_bitline)


def area_overhead(cfg: Optional[SegmentConfig], topo: Topology = Topology(),
                  isolation_sets: Optional[int] = None) -> AreaReport:
    """Subarray and die overhead of the isolation transistors, plus the open-bitline
    capacity loss of the near segment."""
    sets = isolation_sets if isolation_sets is not None else (cfg.isolation_sets if cfg else 2)
    iso = isolation_fraction(sets, topo.rows_per_subarray)
    near = cfg.near_rows if cfg else 0
    cap = (near / 2) / topo.rows_per_subarray
    return AreaReport(iso, cap, iso * DIE_ARRAY_RATIO)


# --- energy --------------------------------------------------------------------------------

def activation_energy(tier: Optional[int], cfg: Optional[SegmentConfig]) -> float:
    """ACT energy of a row in ``tier`` (None: unsegmented bitline)."""
    if cfg is None or tier is None:
        return E_WORDLINE + E_BITLINE
    full = cfg.rows_per_subarray
    eff = sum(t.rows for t in cfg.tiers[:tier + 1])
    return E_WORDLINE + E_BITLINE * eff / full + 2 * E_WORDLINE * tier


def command_energy(kind: CommandKind, tier: Optional[int] = None,
                   cfg: Optional[SegmentConfig] = None) -> float:
    """Energy units of one command; ``tier`` is the segment the row lives in.

    ACT charges the wordline and the connected part of the bitline, plus the
    isolation transistors crossed; PRE charges the same bitline span; RD/WR
    cost IO energy; TRANSFER is a far activation plus a second wordline raise;
    REF is an unsegmented ACT plus PRE.
    """
    if kind is CommandKind.ACT:
        return activation_energy(tier, cfg)
    if kind is CommandKind.PRE:
        if cfg is None or tier is None:
            return E_WORDLINE + E_BITLINE
        eff = sum(t.rows for t in cfg.tiers[:tier + 1])
        return E_WORDLINE + E_BITLINE * eff / cfg.rows_per_subarray
    if kind in (CommandKind.RD, CommandKind.WR):
        return E_IO
    if kind is CommandKind.TRANSFER:
        far = len(cfg.tiers) - 1 if cfg is not None else None
        return activation_energy(far, cfg) + E_WORDLINE
    if kind is CommandKind.REF:
        return 2 * (E_WORDLINE + E_BITLINE)
    raise ConfigError(f"no energy model for {kind}")


def account_energy(log: Sequence, cfg: Optional[SegmentConfig] = None) -> float:
    """Sum of command energies over a command log (LoggedCommand entries)."""
    total = 0.0
    for c in log:
        tier = getattr(c, "segment", None)
        total += command_energy(c.kind, tier if isinstance(tier, int) else None, cfg)
    return total
