"""YAML experiment configuration.

Every document carries ``schema_version: 1``; unknown keys are rejected so a
typo never silently falls back to a default. A minimal run config::

    schema_version: 1
    seed: 7
    timing: ddr3_1066
    mechanism: {kind: tldram, policy: bbc, near_rows: 32}
    workloads:
      - {preset: high_locality, requests: 20000}

``to_dict`` returns the normalized form (all defaults filled in, timings in
picoseconds); parsing it again yields an equal configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .aldram import DDR3_1600_TABLE, TemperatureTrace, TimingTable, identify_timing_table
from .ava import ShuffleMap, ava_profile, select_test_region
from .core import TIMING_FIELDS, TIMING_PRESETS, TimingParams, Topology
from .errors import ConfigError
from .policies import POLICIES
from .presets import CHIP_PRESETS, chip_preset
from .sim import MECHANISMS, CoreModel, SimConfig
from .variation import ChipModel, VariationParams
from .workloads import WORKLOADS

SCHEMA_VERSION = 1

TOP_KEYS = {"schema_version", "seed", "topology", "timing", "core", "page_policy", "mapping",
            "write_queue", "refresh", "mechanism", "workloads", "chip", "temperature",
            "sweep", "profile", "shuffle_eval", "output"}
MECH_KEYS = {
    "baseline": {"kind"},
    "tldram": {"kind", "policy", "near_rows", "segment_mode"},
    "aldram": {"kind", "table", "interval_ms"},
    "ava": {"kind", "profile", "shuffle"},
}
SWEEP_KEYS = {"op", "timing", "pattern", "iterations", "temp_c", "refresh_ms", "axes",
              "chips", "banks", "subarrays", "rows", "mats", "cols"}
PROFILE_KEYS = {"mode", "timing", "temps", "iterations", "grid", "temp_c", "refresh_ms"}
SHUFFLE_KEYS = {"seeds", "trials", "shuffle", "timing", "temp_c", "refresh_ms", "op"}


def _check_keys(section, allowed: set, where: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    extra = set(section) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")
    return section


def parse_timing(spec, default: str = "ddr3_1066") -> tuple:
    """(TimingParams, clock_ps) from a preset name or a mapping such as
    ``{preset: ddr3_1600, trcd_ns: 10, tras_ps: 30000}``."""
    if spec is None:
        spec = default
    if isinstance(spec, str):
        try:
            return TIMING_PRESETS[spec]
        except KeyError:
            raise ConfigError(f"unknown timing preset {spec!r}; known: {sorted(TIMING_PRESETS)}") from None
    if not isinstance(spec, dict):
        raise ConfigError("timing must be a preset name or a mapping")
    spec = dict(spec)
    base, clock = parse_timing(spec.pop("preset", default))
    merged = base.as_dict()
    for k, v in spec.items():
        if k in ("trc_ps", "trc_ns"):
            merged[k] = v
            continue
        if not (k.endswith("_ns") or k.endswith("_ps")) or k[:-3] not in TIMING_FIELDS:
            raise ConfigError(f"unknown timing key {k!r}")
        merged.pop(k[:-3] + "_ps", None)
        merged[k] = v
    try:
        return TimingParams.from_dict(merged), clock
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad timing value: {exc}") from None


def parse_shuffle(spec) -> ShuffleMap:
    if spec in (None, "identity"):
        return ShuffleMap.identity()
    if spec == "rotation":
        return ShuffleMap.rotation()
    if isinstance(spec, list):
        try:
            return ShuffleMap(tuple(tuple(int(x) for x in p) for p in spec))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad shuffle map: {exc}") from None
    raise ConfigError("shuffle must be 'identity', 'rotation' or a list of 8 permutations")


def _shuffle_form(spec):
    if spec is None or isinstance(spec, str):
        return spec or "identity"
    return [list(p) for p in parse_shuffle(spec).perms]


# --- profile documents ---------------------------------------------------------------

def ava_document(profile, region, chip: ChipModel, seed: int) -> dict:
    """Serialized AVA profile; ``mechanism: {kind: ava, profile: <path>}`` reads it back."""
    return {
        "schema_version": 1,
        "kind": "ava_profile",
        "timings": profile.timings.as_dict(),
        "minimal": None if profile.minimal is None else {f"{k}_ps": int(v) for k, v in profile.minimal.items()},
        "provenance": {
            "chip": chip.name, "seed": int(seed), "temp_c": float(profile.temp_c),
            "refresh_ms": float(profile.refresh_ms),
            "region_full_rows": [int(r) for r in region.full_rows],
            "region_mat_rows": [[int(r), int(m)] for r, m in region.mat_rows],
        },
    }


def load_ava_document(data) -> TimingParams:
    if not isinstance(data, dict) or data.get("kind") != "ava_profile":
        raise ConfigError("document is not an AVA profile")
    if data.get("schema_version") != 1:
        raise ConfigError(f"unsupported AVA profile schema_version {data.get('schema_version')!r}")
    return TimingParams.from_dict(data.get("timings") or {})


def read_yaml(path: Path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None


# --- the configuration ---------------------------------------------------------------

@dataclass
class RunConfig:
    seed: int = 0
    topology: Topology = field(default_factory=Topology)
    timings: TimingParams = TIMING_PRESETS["ddr3_1066"][0]
    core: CoreModel = field(default_factory=CoreModel)
    page_policy: str = "closed"
    mapping: str = "row_interleaved"
    write_queue: int = 64
    refresh: bool = True
    refresh_ms: float = 64.0
    mechanism: dict = field(default_factory=lambda: {"kind": "baseline"})
    workloads: list = field(default_factory=list)
    chip: Optional[dict] = None
    temperature: Optional[dict] = None
    sweep: dict = field(default_factory=dict)
    profile: dict = field(default_factory=dict)
    shuffle_eval: dict = field(default_factory=dict)
    out_dir: Optional[str] = None
    base_dir: Path = field(default_factory=Path, compare=False)

    def resolve(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def build_chip(self, seed: Optional[int] = None) -> Optional[ChipModel]:
        """Chip model from the ``chip`` section; ``seed`` overrides the configured one,
        which in turn defaults to the top-level seed."""
        if self.chip is None:
            return None
        spec = dict(self.chip)
        name = spec.pop("preset")
        chip_seed = spec.pop("seed", None)
        if seed is not None:
            chip_seed = seed
        elif chip_seed is None:
            chip_seed = self.seed
        return chip_preset(name, chip_seed, **spec)

    def require_chip(self, seed: Optional[int] = None) -> ChipModel:
        chip = self.build_chip(seed)
        if chip is None:
            raise ConfigError("this command needs a 'chip' section")
        return chip

    def temperature_trace(self) -> Optional[TemperatureTrace]:
        t = self.temperature
        if not t:
            return None
        if "trace" in t:
            return TemperatureTrace.load(self.resolve(t["trace"]))
        return TemperatureTrace.constant(float(t["constant"]), float(t.get("duration_s", 1.0)))

    def constant_temp(self, default: float = 55.0) -> float:
        """Operating temperature for mechanisms that take a single value; a
        trace contributes its maximum."""
        t = self.temperature or {}
        if "constant" in t:
            return float(t["constant"])
        trace = self.temperature_trace()
        if trace is not None:
            return float(max(trace.temps_c))
        return default

    @property
    def mechanism_label(self) -> str:
        m = self.mechanism
        if m["kind"] == "tldram":
            return f"tldram-{m['policy']}"
        return m["kind"]

    def sim_config(self) -> SimConfig:
        """SimConfig for the configured mechanism. Profiles marked ``identify``
        are computed here from the chip model."""
        m = self.mechanism
        kind = m["kind"]
        kw = dict(topology=self.topology, timings=self.timings, mechanism=kind,
                  mapping=self.mapping, page_policy=self.page_policy, core=self.core,
                  write_queue=self.write_queue, refresh=self.refresh, refresh_ms=self.refresh_ms,
                  chip=self.build_chip(), seed=self.seed, temp_c=self.constant_temp())
        if kind == "tldram":
            kw.update(policy=m["policy"], near_rows=m["near_rows"], segment_mode=m["segment_mode"])
        elif kind == "aldram":
            table = m["table"]
            if table == "ddr3_1600":
                tt = DDR3_1600_TABLE
            elif table == "identify":
                tt = identify_timing_table(self.require_chip(), standard=self.timings)
            else:
                tt = TimingTable.from_dict(read_yaml(self.resolve(table)))
            kw.update(timing_table=tt, temperature=self.temperature_trace(),
                      interval_ms=m["interval_ms"])
        elif kind == "ava":
            prof = m["profile"]
            if prof == "identify":
                chip = self.require_chip()
                timings = ava_profile(chip, select_test_region(chip), self.constant_temp(),
                                      standard=self.timings,
                                      clock_ps=self.topology.clock_period_ps).timings
            elif isinstance(prof, str):
                timings = load_ava_document(read_yaml(self.resolve(prof)))
            else:
                timings = TimingParams.from_dict(prof)
            kw.update(ava_timings=timings, shuffle=parse_shuffle(m["shuffle"]))
        return SimConfig(**kw)

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "topology": self.topology.as_dict(),
            "timing": self.timings.as_dict(),
            "core": {"nonmem_ipc": self.core.nonmem_ipc, "mshr_limit": self.core.mshr_limit,
                     "clock_ratio": self.core.clock_ratio},
            "page_policy": self.page_policy,
            "mapping": self.mapping,
            "write_queue": self.write_queue,
            "refresh": {"enabled": self.refresh, "interval_ms": self.refresh_ms},
            "mechanism": dict(self.mechanism),
            "workloads": [dict(w) for w in self.workloads],
        }
        for key in ("chip", "temperature"):
            if getattr(self, key) is not None:
                d[key] = dict(getattr(self, key))
        for key in ("sweep", "profile", "shuffle_eval"):
            if getattr(self, key):
                d[key] = dict(getattr(self, key))
        if self.out_dir is not None:
            d["output"] = {"dir": self.out_dir}
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _parse_mechanism(spec, cfg: RunConfig) -> dict:
    if spec is None:
        spec = "baseline"
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict):
        raise ConfigError("mechanism must be a name or a mapping with 'kind'")
    kind = spec.get("kind", "baseline")
    if kind not in MECHANISMS:
        raise ConfigError(f"mechanism kind must be one of {MECHANISMS}, got {kind!r}")
    _check_keys(spec, MECH_KEYS[kind], f"mechanism ({kind})")
    m = {"kind": kind}
    if kind == "tldram":
        policy = spec.get("policy", "sc")
        if policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {policy!r}")
        near = spec.get("near_rows", 32)
        if not isinstance(near, int) or near < 1:
            raise ConfigError("near_rows must be a positive integer")
        mode = spec.get("segment_mode", "table")
        if mode not in ("table", "interp"):
            raise ConfigError("segment_mode must be 'table' or 'interp'")
        m.update(policy=policy, near_rows=near, segment_mode=mode)
    elif kind == "aldram":
        table = spec.get("table", "ddr3_1600")
        if not isinstance(table, str):
            raise ConfigError("aldram table must be 'ddr3_1600', 'identify' or a file path")
        if table not in ("ddr3_1600", "identify") and not cfg.resolve(table).is_file():
            raise ConfigError(f"timing table file not found: {cfg.resolve(table)}")
        m.update(table=table, interval_ms=float(spec.get("interval_ms", 256.0)))
        if m["interval_ms"] <= 0:
            raise ConfigError("interval_ms must be positive")
    elif kind == "ava":
        prof = spec.get("profile")
        if prof is None:
            raise ConfigError("ava mechanism needs 'profile': identify, a profile file or explicit timings")
        if isinstance(prof, dict):
            prof = parse_timing(prof, "ddr3_1600")[0].as_dict()
        elif not isinstance(prof, str):
            raise ConfigError("ava profile must be 'identify', a file path or a timing mapping")
        elif prof != "identify" and not cfg.resolve(prof).is_file():
            raise ConfigError(f"AVA profile file not found: {cfg.resolve(prof)}")
        shuffle = spec.get("shuffle", "rotation")
        m.update(profile=prof, shuffle=_shuffle_form(shuffle))
    return m


def _parse_chip(spec) -> Optional[dict]:
    if spec is None:
        return None
    allowed = {"preset", "seed"} | (set(VariationParams.__dataclass_fields__) - {"seed"})
    _check_keys(spec, allowed, "chip")
    chip = {"preset": spec.get("preset", "default")}
    chip.update((k, v) for k, v in spec.items() if k != "preset")
    if chip["preset"] not in CHIP_PRESETS:
        raise ConfigError(f"unknown chip preset {chip['preset']!r}; known: {sorted(CHIP_PRESETS)}")
    try:
        chip_preset(chip["preset"], chip.get("seed"),
                    **{k: v for k, v in chip.items() if k not in ("preset", "seed")})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad chip parameter: {exc}") from None
    return chip


def _parse_workloads(spec) -> list:
    if spec is None:
        return []
    if not isinstance(spec, list):
        raise ConfigError("workloads must be a list")
    out = []
    for w in spec:
        _check_keys(w, {"name", "preset", "requests", "cores"}, "workloads entry")
        preset = w.get("preset")
        if preset not in WORKLOADS:
            raise ConfigError(f"workload preset must be one of {sorted(WORKLOADS)}, got {preset!r}")
        req, cores = w.get("requests", 10000), w.get("cores", 1)
        if not isinstance(req, int) or req < 1 or not isinstance(cores, int) or cores < 1:
            raise ConfigError("workload requests and cores must be positive integers")
        out.append({"name": str(w.get("name", preset)), "preset": preset,
                    "requests": req, "cores": cores})
    names = [w["name"] for w in out]
    if len(set(names)) != len(names):
        raise ConfigError("workload names must be unique")
    return out


def parse_config(data, base_dir: Path = Path(".")) -> RunConfig:
    if data is None:
        data = {}
    _check_keys(data, TOP_KEYS, "config")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"config needs schema_version: {SCHEMA_VERSION}")
    cfg = RunConfig(base_dir=Path(base_dir))
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    cfg.seed = seed
    topo = _check_keys(data.get("topology") or {}, set(Topology.__dataclass_fields__), "topology")
    cfg.timings, clock = parse_timing(data.get("timing"))
    cfg.topology = Topology(**{"clock_period_ps": clock, **topo})
    core = _check_keys(data.get("core") or {}, {"nonmem_ipc", "mshr_limit", "clock_ratio"}, "core")
    cfg.core = CoreModel(**core)
    cfg.page_policy = data.get("page_policy", "closed")
    if cfg.page_policy not in ("closed", "open"):
        raise ConfigError("page_policy must be 'closed' or 'open'")
    cfg.mapping = data.get("mapping", "row_interleaved")
    if cfg.mapping not in ("row_interleaved", "line_interleaved"):
        raise ConfigError("mapping must be 'row_interleaved' or 'line_interleaved'")
    cfg.write_queue = int(data.get("write_queue", 64))
    ref = _check_keys(data.get("refresh") or {}, {"enabled", "interval_ms"}, "refresh")
    cfg.refresh = bool(ref.get("enabled", True))
    cfg.refresh_ms = float(ref.get("interval_ms", 64.0))
    cfg.chip = _parse_chip(data.get("chip"))
    temp = data.get("temperature")
    if temp is not None:
        _check_keys(temp, {"constant", "trace", "duration_s"}, "temperature")
        if ("constant" in temp) == ("trace" in temp):
            raise ConfigError("temperature needs exactly one of 'constant' or 'trace'")
        if "trace" in temp and not cfg.resolve(temp["trace"]).is_file():
            raise ConfigError(f"temperature trace not found: {cfg.resolve(temp['trace'])}")
        temp = dict(temp)
    cfg.temperature = temp
    cfg.mechanism = _parse_mechanism(data.get("mechanism"), cfg)
    cfg.workloads = _parse_workloads(data.get("workloads"))
    for name, keys in (("sweep", SWEEP_KEYS), ("profile", PROFILE_KEYS), ("shuffle_eval", SHUFFLE_KEYS)):
        setattr(cfg, name, dict(_check_keys(data.get(name) or {}, keys, name)))
    out = _check_keys(data.get("output") or {}, {"dir"}, "output")
    cfg.out_dir = out.get("dir")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(read_yaml(path), path.parent)
