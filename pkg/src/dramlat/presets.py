"""Named chip models and operating points.

The module topologies are reduced (one bank, few subarrays) so full-module
scans run in seconds; the cell-level model is the same as for a full chip.
Calibrated values are frozen here; the calibration targets are noted next to
each preset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import DDR3_1600, RowMap, TimingParams, Topology
from .errors import ConfigError
from .variation import ChipModel, VariationParams

SMALL = Topology(banks_per_rank=1, subarrays_per_bank=1, mats_per_subarray_row=4)

# bits 4..8 of the row address are permuted inside the chip
ROWMAP_PERM = (0, 1, 2, 3, 7, 5, 8, 4, 6)


@dataclass(frozen=True)
class ChipPreset:
    name: str
    topology: Topology
    params: VariationParams
    base_ps: Optional[dict] = None
    floors_ps: Optional[dict] = None
    row_perm: Optional[tuple] = None
    note: str = ""

    def build(self, seed: Optional[int] = None, **overrides) -> ChipModel:
        params = self.params
        if seed is not None:
            params = params.replace(seed=int(seed))
        if overrides:
            params = params.replace(**overrides)
        row_map = RowMap(self.topology.row_address_bits, self.row_perm) if self.row_perm else None
        return ChipModel(self.topology, params, self.base_ps, self.floors_ps, row_map, self.name)


@dataclass(frozen=True)
class OperatingPoint:
    timings: TimingParams
    temp_c: float
    refresh_ms: float


CHIP_PRESETS = {
    p.name: p for p in (
        ChipPreset("default", Topology(banks_per_rank=1, subarrays_per_bank=4, mats_per_subarray_row=4),
                   VariationParams(), note="reference variation parameters"),
        ChipPreset("toy", SMALL, VariationParams(sigma_process=0.0, sigma_test=0.0, retention_sigma=0.0),
                   note="noise-free: requirements depend on cell position only"),
        # calibrated: read/write max error-free refresh 208/160 ms at 85 C, DDR3-1600 timings
        ChipPreset("reference", SMALL, VariationParams(retention_sigma=0.35, gamma_charge=2.0),
                   base_ps={"trcd": 5150, "tras": 13200, "trp": 4950},
                   note="safe refresh 200/152 ms"),
        # calibrated: variation-aware profiling at 55 C cuts the read path by ~35%
        # and the write path by ~58% (the write path bottoms out on the grid)
        ChipPreset("typical", SMALL, VariationParams(),
                   base_ps={"trcd": 3000, "tras": 17000, "trp": 2800, "twr": 3000},
                   note="typical module for variation-aware timing"),
        # one bit per mat per burst beat, with a pronounced slow-precharge mat,
        # so precharge errors cluster in one burst position of every chip
        ChipPreset("clustered", Topology(banks_per_rank=1, subarrays_per_bank=1, mats_per_subarray_row=8),
                   VariationParams(kappa_precharge=0.6), note="same-burst error clusters"),
        ChipPreset("rowmap", Topology(banks_per_rank=1, subarrays_per_bank=1, mats_per_subarray_row=16),
                   VariationParams(sigma_process=0.02), row_perm=ROWMAP_PERM,
                   note="planted internal row-address permutation"),
    )
}

# operating point at which the clustered preset shows multi-bit codewords; the
# tRP is set so shuffling corrects roughly a quarter of what plain ECC cannot
CLUSTERED_OPERATING = OperatingPoint(DDR3_1600.replace(trp=9450), 55.0, 64.0)


def chip_preset(name: str, seed: Optional[int] = None, **overrides) -> ChipModel:
    try:
        preset = CHIP_PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown chip preset {name!r}; known: {sorted(CHIP_PRESETS)}") from None
    return preset.build(seed, **overrides)
