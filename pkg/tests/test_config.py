import pytest
import yaml

from dramlat.config import (load_config, parse_config, parse_shuffle, parse_timing)
from dramlat.core import DDR3_1066, DDR3_1600
from dramlat.errors import ConfigError

FULL = {
    "schema_version": 1, "seed": 5, "timing": {"preset": "ddr3_1600", "trcd_ns": 12.5},
    "core": {"mshr_limit": 4}, "page_policy": "open",
    "refresh": {"interval_ms": 32},
    "mechanism": {"kind": "tldram", "policy": "wmc", "near_rows": 64, "segment_mode": "interp"},
    "workloads": [{"preset": "high_locality", "requests": 100, "cores": 2},
                  {"name": "rand", "preset": "random_intensive", "requests": 50}],
    "chip": {"preset": "default", "sigma_process": 0.02},
    "temperature": {"constant": 70},
    "sweep": {"op": "write", "axes": {"twr": [10000, 5000]}},
    "output": {"dir": "results"},
}


def test_round_trip_normalized_form():
    cfg = parse_config(FULL)
    again = parse_config(cfg.to_dict())
    assert again == cfg
    assert parse_config(yaml.safe_load(cfg.to_yaml())) == cfg
    assert cfg.timings.trcd == 12500 and cfg.topology.clock_period_ps == 1250
    assert cfg.mechanism_label == "tldram-wmc"


def test_minimal_config_defaults():
    cfg = parse_config({"schema_version": 1})
    assert cfg.timings == DDR3_1066 and cfg.mechanism == {"kind": "baseline"}
    assert parse_config(cfg.to_dict()) == cfg


@pytest.mark.parametrize("bad", [
    {"schema_version": 2},
    {},
    {"schema_version": 1, "typo": 1},
    {"schema_version": 1, "mechanism": {"kind": "tldram", "polcy": "sc"}},
    {"schema_version": 1, "mechanism": {"kind": "tldram", "policy": "lru"}},
    {"schema_version": 1, "mechanism": "quantum"},
    {"schema_version": 1, "mechanism": {"kind": "ava"}},
    {"schema_version": 1, "mechanism": {"kind": "aldram", "table": "missing.yaml"}},
    {"schema_version": 1, "chip": {"preset": "nonesuch"}},
    {"schema_version": 1, "chip": {"preset": "default", "kappa": 1}},
    {"schema_version": 1, "timing": "ddr5"},
    {"schema_version": 1, "timing": {"trcd_ms": 1}},
    {"schema_version": 1, "temperature": {"constant": 50, "trace": "t.txt"}},
    {"schema_version": 1, "temperature": {"trace": "absent.txt"}},
    {"schema_version": 1, "workloads": [{"preset": "zipf"}]},
    {"schema_version": 1, "workloads": [{"preset": "high_locality"}, {"preset": "high_locality"}]},
    {"schema_version": 1, "seed": -1},
    {"schema_version": 1, "page_policy": "adaptive"},
])
def test_invalid_configs_rejected(bad, tmp_path):
    with pytest.raises(ConfigError):
        parse_config(bad, tmp_path)


def test_parse_timing_forms():
    assert parse_timing("ddr3_1600") == (DDR3_1600, 1250)
    t, clk = parse_timing({"preset": "ddr3_1600", "trp_ps": 11250, "tras_ns": 30})
    assert (t.trp, t.tras, t.trc, clk) == (11250, 30000, 41250, 1250)


def test_parse_shuffle_forms():
    assert parse_shuffle("identity").perms[3] == tuple(range(8))
    assert parse_shuffle("rotation").perms[1][0] == 1
    with pytest.raises(ConfigError):
        parse_shuffle([[0] * 8] * 8)


def test_file_references_resolve_relative_to_config(tmp_path):
    (tmp_path / "temps.txt").write_text("0 50\n10 50.5\n")
    (tmp_path / "c.yaml").write_text("schema_version: 1\nmechanism: {kind: aldram}\n"
                                     "temperature: {trace: temps.txt}\n")
    cfg = load_config(tmp_path / "c.yaml")
    assert cfg.constant_temp() == 50.5
    assert cfg.sim_config().temperature.temps_c == (50.0, 50.5)


def test_invalid_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("schema_version: [1\n")
    with pytest.raises(ConfigError):
        load_config(p)
