"""Memory traces: the text format and two synthetic workload generators.

A trace line is ``<gap> <R|W> <hex_addr>``: ``gap`` non-memory instructions
precede the access. ``#`` starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import Address, Topology, encode_address
from .errors import TraceError


@dataclass(frozen=True)
class TraceRecord:
    gap: int
    is_write: bool
    addr: int

    def format(self) -> str:
        return f"{self.gap} {'W' if self.is_write else 'R'} 0x{self.addr:x}"


def parse_trace(text: str, path: Optional[str] = None) -> list:
    records = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise TraceError(f"expected '<gap> <R|W> <hex_addr>', got {raw.strip()!r}", n, path)
        gap_s, op, addr_s = parts
        try:
            gap = int(gap_s)
        except ValueError:
            raise TraceError(f"gap {gap_s!r} is not an integer", n, path) from None
        if gap < 0:
            raise TraceError("gap must be non-negative", n, path)
        if op.upper() not in ("R", "W"):
            raise TraceError(f"operation must be R or W, got {op!r}", n, path)
        try:
            addr = int(addr_s, 16)
        except ValueError:
            raise TraceError(f"address {addr_s!r} is not hexadecimal", n, path) from None
        if addr < 0:
            raise TraceError("address must be non-negative", n, path)
        records.append(TraceRecord(gap, op.upper() == "W", addr))
    return records


def load_trace(path) -> list:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceError(f"cannot read trace: {exc.strerror}", None, str(path)) from None
    return parse_trace(text, str(path))


def format_trace(records: Iterable[TraceRecord]) -> str:
    return "".join(r.format() + "\n" for r in records)


def _line_addr(topo: Topology, bank: int, subarray: int, row: int, column: int) -> int:
    return encode_address(Address(0, 0, bank, subarray, row, row, column), topo)


def high_locality(n: int, seed: int = 0, topo: Topology = Topology(), core: int = 0,
                  hot_rows: int = 28, subarrays: int = 4, scan_frac: float = 0.05,
                  burst: tuple = (1, 4), mean_gap: int = 40, write_frac: float = 0.2) -> list:
    """Repeated visits to a small hot set of rows plus occasional streaming scans.

    Each visit touches 1-4 consecutive lines of one hot row. Scans walk rows
    that are never revisited, so a caching policy that admits them pollutes
    the near segment.
    """
    rng = np.random.default_rng([seed, core, 11])
    banks = topo.banks_per_rank
    cols = topo.columns_per_row
    # each core owns a distinct band of subarrays
    sa0 = (core * subarrays) % topo.subarrays_per_bank
    hot = [(b, (sa0 + s) % topo.subarrays_per_bank, int(r))
           for b in range(banks) for s in range(subarrays)
           for r in rng.choice(topo.rows_per_subarray, hot_rows, replace=False)]
    weights = rng.pareto(1.2, len(hot)) + 1.0
    weights /= weights.sum()
    scan_pos = int(rng.integers(0, banks * subarrays * topo.rows_per_subarray))
    out: list = []
    while len(out) < n:
        if rng.random() < scan_frac:
            # scans sweep the same subarrays as the hot set
            b = scan_pos % banks
            sa = (sa0 + (scan_pos // banks) % subarrays) % topo.subarrays_per_bank
            row = (scan_pos // (banks * subarrays)) % topo.rows_per_subarray
            scan_pos += 1
            target, k = (b, sa, row), 1
        else:
            target = hot[int(rng.choice(len(hot), p=weights))]
            k = int(rng.integers(burst[0], burst[1] + 1))
        col = int(rng.integers(0, cols))
        for j in range(k):
            gap = int(rng.geometric(1.0 / mean_gap)) if j == 0 else int(rng.integers(0, 3))
            out.append(TraceRecord(gap, bool(rng.random() < write_frac),
                                   _line_addr(topo, target[0], target[1], target[2], (col + j) % cols)))
    return out[:n]


def random_intensive(n: int, seed: int = 0, topo: Topology = Topology(), core: int = 0,
                     mean_gap: int = 4, write_frac: float = 0.25) -> list:
    """Uniformly random lines with short gaps: little locality, many conflicts."""
    rng = np.random.default_rng([seed, core, 13])
    lines = topo.capacity_bytes // 64
    addrs = rng.integers(0, lines, n) * 64
    gaps = rng.geometric(1.0 / mean_gap, n) - 1
    writes = rng.random(n) < write_frac
    return [TraceRecord(int(g), bool(w), int(a)) for g, w, a in zip(gaps, writes, addrs)]


WORKLOADS = {"high_locality": high_locality, "random_intensive": random_intensive}


def generate(name: str, n: int, seed: int = 0, topo: Topology = Topology(), core: int = 0) -> list:
    try:
        fn = WORKLOADS[name]
    except KeyError:
        raise TraceError(f"unknown workload preset {name!r}") from None
    return fn(n, seed, topo, core)
