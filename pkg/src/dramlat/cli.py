"""Command-line front end.

    dramlat run --config exp.yaml --trace a.trc --trace b.trc,c.trc --out-dir out
    dramlat sweep --config sweep.yaml
    dramlat profile --config chip.yaml --mode ava
    dramlat shuffle-eval --config shuffle.yaml --jobs 4

Each ``--trace`` value is one workload; comma-separated paths form one
multi-core workload, one trace per core. Outputs are written under the output
directory and depend only on the configuration and the seed.

Exit codes: 0 success, 2 input error, 3 reliability threshold exceeded,
4 module rejected by profiling.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import aldram, ava, harness
from .config import RunConfig, ava_document, load_config, parse_config, parse_shuffle, parse_timing
from .core import REDUCIBLE
from .errors import ConfigError, DramlatError, ModuleRejected, TraceError
from .presets import CLUSTERED_OPERATING
from .sim import profile_run, results_csv, simulate
from .workloads import generate, load_trace

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RELIABILITY = 3
EXIT_REJECTED = 4


def _pmap(fn, items: Sequence, jobs: int) -> list:
    """Map in input order, across processes when ``jobs`` > 1."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    return path


def _dump(doc) -> str:
    return yaml.safe_dump(doc, sort_keys=False)


# --- run ----------------------------------------------------------------------------------

def _collect_workloads(cfg: RunConfig, trace_args: Sequence[str]) -> list:
    """(name, [per-core records]) for config presets first, then trace files."""
    out = []
    for w in cfg.workloads:
        traces = [generate(w["preset"], w["requests"], cfg.seed, cfg.topology, core)
                  for core in range(w["cores"])]
        out.append((w["name"], traces))
    for arg in trace_args:
        paths = [p for p in arg.split(",") if p]
        if not paths:
            raise ConfigError("empty --trace value")
        traces = [load_trace(p) for p in paths]
        out.append(("+".join(Path(p).stem for p in paths), traces))
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate workload names: {names}")
    return out


def _simulate_one(job):
    name, traces, sim_cfg = job
    if sim_cfg.mechanism == "tldram" and sim_cfg.policy == "profile":
        sim_cfg = dataclasses.replace(sim_cfg, profile_mapping=profile_run(traces, sim_cfg))
    res = simulate(traces, sim_cfg, record_log=False)
    return name, res


def cmd_run(cfg: RunConfig, args) -> int:
    workloads = _collect_workloads(cfg, args.trace or [])
    if not workloads:
        raise ConfigError("nothing to run: give --trace or a 'workloads' section")
    sim_cfg = cfg.sim_config()
    results = _pmap(_simulate_one, [(n, t, sim_cfg) for n, t in workloads], args.jobs)
    label = cfg.mechanism_label
    rows = [res.csv_row(name, label) for name, res in results]
    out = Path(args.out_dir)
    _write(out, "run.csv", results_csv(rows))
    report = {
        "seed": cfg.seed,
        "mechanism": label,
        "workloads": [{
            "name": name, "cores": len(res.cores), "reads": res.reads, "writes": res.writes,
            "cycles": res.cycles, "transfers": res.transfers, "refreshes": res.refreshes,
            "errors_total": res.errors_total, "timing_errors": res.timing_errors,
            "retention_errors": res.retention_errors,
            "core_ipc": [round(float(c.ipc), 6) for c in res.cores],
        } for name, res in results],
        "config": cfg.to_dict(),
    }
    _write(out, "run_report.yaml", _dump(report))
    sys.stdout.write(results_csv(rows))
    if args.fail_on_uncorrectable is not None:
        worst = max(res.errors_uncorrectable for _, res in results)
        if worst > args.fail_on_uncorrectable:
            print(f"uncorrectable errors ({worst}) exceed the threshold "
                  f"({args.fail_on_uncorrectable})", file=sys.stderr)
            return EXIT_RELIABILITY
    return EXIT_OK


# --- sweep --------------------------------------------------------------------------------

def sweep_template(cfg: RunConfig) -> harness.TestSpec:
    s = cfg.sweep
    region = {k: s[k] for k in ("chips", "banks", "subarrays", "rows", "mats", "cols") if k in s}
    return harness.TestSpec(op=s.get("op", "read"), timings=parse_timing(s.get("timing"), "ddr3_1600")[0],
                            temp_c=float(s.get("temp_c", 85.0)), refresh_ms=float(s.get("refresh_ms", 64.0)),
                            pattern=s.get("pattern", "0101"), iterations=int(s.get("iterations", 1)),
                            **region)


def _sweep_one(job):
    chip, axes, template = job
    return harness.sweep(chip, axes, template)


def merge_sweeps(parts: Sequence[harness.SweepResult]) -> harness.SweepResult:
    return harness.SweepResult(
        [c for p in parts for c in p.combos],
        np.concatenate([p.totals for p in parts]),
        np.concatenate([p.row_histogram for p in parts]),
        np.concatenate([p.row_counts for p in parts]),
        np.concatenate([p.burst_profile for p in parts]),
    )


def cmd_sweep(cfg: RunConfig, args) -> int:
    axes = cfg.sweep.get("axes")
    if not axes or not isinstance(axes, dict):
        raise ConfigError("sweep needs a non-empty 'axes' mapping")
    if any(not isinstance(v, list) or not v for v in axes.values()):
        raise ConfigError("every sweep axis must be a non-empty list")
    chip = cfg.require_chip()
    template = sweep_template(cfg)
    harness.sweep_combos(axes, template)  # validates the axes before any work
    # combos are ordered temperature-major, so per-temperature parts concatenate in order
    temps = axes.get("temps", [template.temp_c])
    jobs = [(chip, {**axes, "temps": [t]}, template) for t in temps]
    result = merge_sweeps(_pmap(_sweep_one, jobs, args.jobs))
    out = Path(args.out_dir)
    _write(out, "sweep.csv", result.to_csv())
    _write(out, "sweep_report.yaml", _dump({"seed": cfg.seed, "chip": chip.name,
                                            "chip_seed": int(chip.params.seed),
                                            "combos": len(result.combos),
                                            "config": cfg.to_dict()}))
    print(f"{len(result.combos)} combinations, {int(result.totals.sum())} failing cells in total")
    return EXIT_OK


# --- profile ------------------------------------------------------------------------------

def _grid(spec, default: dict) -> dict:
    if spec is None:
        return default
    if not isinstance(spec, dict) or set(spec) - set(REDUCIBLE):
        raise ConfigError(f"profile grid must map a subset of {REDUCIBLE} to lists of ps values")
    grid = dict(default)
    for c, vals in spec.items():
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"profile grid for {c} must be a non-empty list")
        grid[c] = sorted({int(v) for v in vals})
    return grid


def cmd_profile(cfg: RunConfig, args) -> int:
    p = cfg.profile
    mode = args.mode or p.get("mode", "aldram")
    if mode not in ("aldram", "ava"):
        raise ConfigError("profile mode must be 'aldram' or 'ava'")
    chip = cfg.require_chip()
    standard, clock = parse_timing(p.get("timing"), "ddr3_1600")
    iterations = int(p.get("iterations", 10 if mode == "aldram" else 1))
    out = Path(args.out_dir)
    if mode == "aldram":
        table = aldram.identify_timing_table(
            chip, temps=p.get("temps", aldram.DEFAULT_TEMPS),
            grid=_grid(p.get("grid"), aldram.default_grid(standard)),
            standard=standard, iterations=iterations)
        prov = dict(table.provenance, config_seed=cfg.seed)
        table = dataclasses.replace(table, provenance=prov)
        path = _write(out, "timing_table.yaml", table.to_yaml())
        for t, tp in table.entries:
            print(f"{t:g} C: trcd {tp.trcd} tras {tp.tras} trp {tp.trp} twr {tp.twr} ps")
    else:
        region = ava.select_test_region(chip)
        prof = ava.ava_profile(chip, region, float(p.get("temp_c", cfg.constant_temp())),
                               grid=_grid(p.get("grid"), ava.ava_grid(standard)),
                               refresh_ms=float(p.get("refresh_ms", 64.0)), standard=standard,
                               clock_ps=clock, iterations=iterations)
        path = _write(out, "ava_profile.yaml", _dump(ava_document(prof, region, chip, cfg.seed)))
        red = prof.reduction(standard)
        print(f"read path -{red['read']:.1%}, write path -{red['write']:.1%}")
    print(f"wrote {path}")
    return EXIT_OK


# --- shuffle-eval -------------------------------------------------------------------------

def _shuffle_one(job):
    cfg, seed, timings, temp_c, refresh_ms, trials, op, smap = job
    chip = cfg.build_chip(seed)
    plain = ava.evaluate_correction(chip, timings, temp_c, refresh_ms, None, trials, seed, op)
    shuf = ava.evaluate_correction(chip, timings, temp_c, refresh_ms, smap, trials, seed, op)
    return seed, plain, shuf


def cmd_shuffle_eval(cfg: RunConfig, args) -> int:
    s = cfg.shuffle_eval
    if cfg.chip is None:
        cfg = dataclasses.replace(cfg, chip={"preset": "clustered"})
    clustered = cfg.chip["preset"] == "clustered"
    if "timing" in s:
        timings = parse_timing(s["timing"], "ddr3_1600")[0]
    else:
        timings = CLUSTERED_OPERATING.timings if clustered else parse_timing("ddr3_1600")[0]
    temp_c = float(s.get("temp_c", CLUSTERED_OPERATING.temp_c))
    refresh_ms = float(s.get("refresh_ms", CLUSTERED_OPERATING.refresh_ms))
    seeds = s.get("seeds", 20)
    if isinstance(seeds, int):
        if seeds < 1:
            raise ConfigError("shuffle_eval seeds must be positive")
        seeds = list(range(cfg.seed, cfg.seed + seeds))
    elif not isinstance(seeds, list) or not seeds:
        raise ConfigError("shuffle_eval seeds must be a count or a non-empty list")
    trials = int(s.get("trials", 2048))
    smap = parse_shuffle(s.get("shuffle", "rotation"))
    jobs = [(cfg, int(sd), timings, temp_c, refresh_ms, trials, s.get("op", "read"), smap) for sd in seeds]
    results = _pmap(_shuffle_one, jobs, args.jobs)
    rows = [(sd, p.total_errors, p.corrected, q.corrected) for sd, p, q in results]
    out = Path(args.out_dir)
    _write(out, "shuffle.csv", ava.correction_csv(rows))
    fracs = [ava.newly_corrected_fraction(p, q) for _, p, q in results]
    _write(out, "shuffle_report.yaml", _dump({
        "seeds": [int(x) for x in seeds], "trials": trials, "temp_c": temp_c,
        "refresh_ms": refresh_ms, "timings": timings.as_dict(),
        "newly_corrected_fraction": [round(float(f), 6) for f in fracs],
        "mean_newly_corrected_fraction": round(float(np.mean(fracs)), 6),
        "config": cfg.to_dict()}))
    print(f"newly corrected by shuffling: {np.mean(fracs):.1%} of errors plain ECC leaves "
          f"(mean over {len(seeds)} seeds)")
    return EXIT_OK


# --- entry point --------------------------------------------------------------------------

COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "profile": cmd_profile, "shuffle-eval": cmd_shuffle_eval}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dramlat", description="DRAM latency mechanism simulator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment configuration")
    common.add_argument("--out-dir", help="output directory (default: config 'output.dir' or ./out)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="simulate traces under one mechanism")
    run.add_argument("--trace", action="append", help="trace file; repeatable; a,b,c = one multi-core workload")
    run.add_argument("--fail-on-uncorrectable", type=int, nargs="?", const=0, default=None,
                     metavar="N", help="exit 3 if any workload has more than N uncorrectable errors")
    sub.add_parser("sweep", parents=[common], help="error counts over a parameter grid")
    prof = sub.add_parser("profile", parents=[common], help="identify AL-DRAM or AVA timings")
    prof.add_argument("--mode", choices=("aldram", "ava"))
    sub.add_parser("shuffle-eval", parents=[common], help="ECC correction with and without shuffling")
    return parser


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config({"schema_version": 1})
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.seed = args.seed
        if cfg.chip is not None:
            cfg.chip = {**cfg.chip, "seed": args.seed}
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    args.out_dir = args.out_dir or cfg.out_dir or "out"
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except ModuleRejected as exc:
        print(f"dramlat: module rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except (ConfigError, TraceError) as exc:
        print(f"dramlat: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DramlatError as exc:
        print(f"dramlat: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
