"""End-to-end scenario runner: config parsing, suite runs, reports."""

from __future__ import annotations

import json
from dataclasses import replace

import numpy as np
import pytest

from edgevad.channel import DeviceProfile
from edgevad.data_io import generate_synthetic, write_feature_dataset
from edgevad.pipeline import (
    PUBLISHED_TIMINGS_RESOURCE,
    SCENARIO_ORDER,
    ConfigError,
    RunConfig,
    Scenario,
    ScenarioError,
    SynthParams,
    config_from_dict,
    default_scenarios,
    default_synthetic_config,
    derive_seed,
    format_suite_report,
    load_config,
    replay_published_tables,
    run_scenario,
    run_suite,
    suite_to_dict,
    write_suite_outputs,
)

# PQ settings that divide the synthetic patch dimensionality (d = 30).
PQ_SMALL = {"pq_m": 6, "pq_k": 16}


def tiny_config(**overrides) -> RunConfig:
    """A fast single-category setup used by most tests here."""
    base = dict(
        seed=1,
        synth=SynthParams(n_categories=1, n_train=6, n_test=10, grid=8),
        scenario_params=(("pq", dict(PQ_SMALL)), ("rs50_pq", dict(PQ_SMALL))),
    )
    base.update(overrides)
    return RunConfig(**base)


# ---------------------------------------------------------------------------
# Scenario definitions


def test_default_scenarios_cover_report_order():
    stock = default_scenarios()
    assert tuple(stock) == SCENARIO_ORDER
    assert len(stock) == 7
    assert stock["original"].codec == "raw"
    assert stock["webp"].codec == "deflate"
    assert stock["rs25"].alpha == 0.25
    assert stock["rs50_webp"].alpha == 0.5
    assert stock["rs50_pq"].alpha == 0.5


def test_scenario_validation():
    with pytest.raises(ConfigError, match="mode"):
        Scenario(name="x", mode="telepathy")
    with pytest.raises(ConfigError, match="alpha"):
        Scenario(name="x", mode="sampled_features")
    with pytest.raises(ConfigError, match="alpha"):
        Scenario(name="x", mode="tiled_features", alpha=1.5)
    with pytest.raises(ConfigError, match="quality"):
        Scenario(name="x", mode="compressed_image", quality=101)
    with pytest.raises(ConfigError, match="PQ"):
        Scenario(name="x", mode="pq_features", pq_m=0)


def test_default_synthetic_config_sizes_pq_to_d30():
    cfg = default_synthetic_config()
    by_name = {s.name: s for s in cfg.scenarios()}
    assert by_name["pq"].pq_m == 6 and by_name["pq"].pq_k == 16
    assert by_name["rs50_pq"].pq_m == 6 and by_name["rs50_pq"].pq_k == 16
    assert by_name["original"].codec == "raw"


# ---------------------------------------------------------------------------
# RunConfig and config files


def test_run_config_validation():
    with pytest.raises(ConfigError, match="feature_source"):
        RunConfig(feature_source="oracle")
    with pytest.raises(ConfigError, match="dataset_root"):
        RunConfig(feature_source="features_dir")
    with pytest.raises(ConfigError, match="coreset_ratio"):
        RunConfig(coreset_ratio=0.0)
    with pytest.raises(ConfigError, match="sigma"):
        RunConfig(sigma=-1.0)


def test_scenarios_rejects_unknown_names_and_fields():
    with pytest.raises(ConfigError, match="unknown scenario"):
        RunConfig(scenario_names=("original", "zstd")).scenarios()
    cfg = RunConfig(scenario_params=(("pq", {"pq_bits": 4}),))
    with pytest.raises(ConfigError, match="pq"):
        cfg.scenarios()


def test_config_from_dict_round_trip():
    raw = {
        "seed": 7,
        "coreset_ratio": 0.5,
        "categories": ["alpha"],
        "scenarios": ["original", "pq"],
        "scenario_params": {"pq": {"pq_m": 6, "pq_k": 16}},
        "profile": {"bandwidth_bytes_per_s": 50_000.0},
        "synthetic": {"n_train": 4, "grid": 8},
        "parallel": True,
    }
    cfg = config_from_dict(raw)
    assert cfg.seed == 7
    assert cfg.categories == ("alpha",)
    assert cfg.scenario_names == ("original", "pq")
    assert cfg.scenario_params == (("pq", {"pq_m": 6, "pq_k": 16}),)
    assert cfg.profile == DeviceProfile(bandwidth_bytes_per_s=50_000.0)
    assert cfg.synth.n_train == 4 and cfg.synth.grid == 8
    assert cfg.parallel


def test_config_from_dict_rejects_bad_input():
    with pytest.raises(ConfigError, match="object"):
        config_from_dict(["not", "a", "dict"])
    with pytest.raises(ConfigError, match="unknown config keys"):
        config_from_dict({"seeed": 1})
    with pytest.raises(ConfigError, match="scenario_params"):
        config_from_dict({"scenario_params": [["pq", {}]]})
    with pytest.raises(ConfigError):
        config_from_dict({"synthetic": {"n_trainn": 4}})
    with pytest.raises(ConfigError):
        config_from_dict({"profile": {"baud": 9600}})


def test_load_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 3, "scenarios": ["original"]}))
    cfg = load_config(path)
    assert cfg.seed == 3 and cfg.scenario_names == ("original",)

    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{seed: 3}")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(bad)


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, "bank", "cat00") == derive_seed(1, "bank", "cat00")
    assert derive_seed(1, "bank", "cat00") != derive_seed(2, "bank", "cat00")
    assert derive_seed(1, "bank", "cat00") != derive_seed(1, "pq", "cat00")
    assert derive_seed(1, "bank", "cat00") != derive_seed(1, "bank", "cat01")
    assert derive_seed("ab") != derive_seed("ba")
    assert 0 <= derive_seed(0) < 2**64


# ---------------------------------------------------------------------------
# Single-scenario runs


def test_run_scenario_result_shape():
    res = run_scenario(default_scenarios()["original"], tiny_config())
    assert res.scenario == "original"
    assert len(res.per_category) == 1
    assert res.per_category[0].category == "cat00"
    assert res.mean_payload_bytes > 0
    assert res.metric_report.roc_overall == 1.0
    assert set(res.timings_ms) == {
        "edge_encode_ms",
        "server_decode_ms",
        "server_ad_ms",
    }
    assert all(v == 0.0 for v in res.timings_ms.values())


def test_payload_sizes_match_wire_arithmetic():
    """Scenarios whose payloads are deterministic arithmetic, not codec output.

    grid=8 gives N=64 patches of d=30 floats per image; with m=6, K=16 the
    PQ codes pack to 4 bits each.
    """
    cfg = tiny_config()
    stock = default_scenarios()
    expected = {
        # 1 + 3 layer descriptors of 7 bytes + 64 * 30 float32
        "raw_features": 1 + 21 + 64 * 30 * 4,
        # 10-byte header + ceil(0.25 * 64) patches of (2 u16 + 30 f32)
        "rs25": 10 + 16 * (4 + 120),
        # 15-byte header + ceil(64 * 6 * 4 / 8) packed code bytes
        "pq": 15 + 192,
        # 15-byte header + 32 coordinate pairs + ceil(32 * 6 * 4 / 8)
        "rs50_pq": 15 + 32 * 4 + 96,
    }
    for name, size in expected.items():
        sc = next(s for s in cfg.scenarios() if s.name == name)
        res = run_scenario(sc, cfg)
        assert res.mean_payload_bytes == size, name


def test_lossless_image_reference_matches_original():
    """The compressed-image scenario defaults to a lossless codec, so its
    metrics must equal the uncompressed baseline while paying fewer bytes."""
    cfg = tiny_config()
    original = run_scenario(default_scenarios()["original"], cfg)
    webp = run_scenario(default_scenarios()["webp"], cfg)
    assert webp.metric_report.f1_overall == original.metric_report.f1_overall
    assert webp.metric_report.roc_overall == original.metric_report.roc_overall
    assert webp.mean_payload_bytes < original.mean_payload_bytes


def test_capture_timings_records_stage_costs():
    sc = replace(default_scenarios()["pq"], **PQ_SMALL)
    res = run_scenario(sc, tiny_config(capture_timings=True))
    assert all(v > 0.0 for v in res.timings_ms.values())


def test_run_scenario_rejects_bad_pq_split():
    with pytest.raises(ScenarioError, match="divide"):
        run_scenario(default_scenarios()["pq"], tiny_config(scenario_params=()))


def test_run_scenario_unknown_category(tmp_path):
    ds = generate_synthetic(1, 6, 10, 0.5, 1, grid=8)
    write_feature_dataset(ds, tmp_path)
    cfg = tiny_config(
        categories=("nope",),
        feature_source="features_dir",
        dataset_root=str(tmp_path),
    )
    with pytest.raises(ScenarioError, match="nope"):
        run_scenario(default_scenarios()["original"], cfg)


# ---------------------------------------------------------------------------
# Whole-suite runs


def test_run_suite_tiny():
    suite = run_suite(tiny_config())
    assert suite.failures == ()
    assert tuple(r.scenario for r in suite.results) == SCENARIO_ORDER
    assert suite.baseline == "original"
    rows = {r.scenario: r for r in suite.latency.rows}
    assert set(rows) == set(SCENARIO_ORDER)
    assert rows["original"].delta_vs_baseline_percent == 0.0
    assert all(r.total_s > 0 for r in suite.latency.rows)


def test_run_suite_records_failures_and_continues():
    cfg = tiny_config(
        scenario_params=(("pq", {"pq_m": 7, "pq_k": 16}), ("rs50_pq", dict(PQ_SMALL)))
    )
    suite = run_suite(cfg)
    assert len(suite.failures) == 1
    name, message = suite.failures[0]
    assert name == "pq"
    assert "divide" in message
    assert len(suite.results) == 6
    assert "pq" not in {r.scenario for r in suite.results}


def test_run_suite_deterministic():
    a = run_suite(tiny_config())
    b = run_suite(tiny_config())
    assert format_suite_report(a) == format_suite_report(b)
    assert json.dumps(suite_to_dict(a), sort_keys=True) == json.dumps(
        suite_to_dict(b), sort_keys=True
    )


def test_parallel_matches_serial():
    serial = run_suite(tiny_config())
    parallel = run_suite(tiny_config(parallel=True))
    assert suite_to_dict(serial) == suite_to_dict(parallel)


def test_features_dir_source_matches_synthetic(tmp_path):
    cfg = tiny_config()
    ds = generate_synthetic(1, 6, 10, 0.5, 1, grid=8)
    write_feature_dataset(ds, tmp_path)
    from_dir = run_suite(
        replace(cfg, feature_source="features_dir", dataset_root=str(tmp_path))
    )
    from_synth = run_suite(cfg)
    assert suite_to_dict(from_dir) == suite_to_dict(from_synth)


def test_category_filter(tmp_path):
    ds = generate_synthetic(["alpha", "beta"], 6, 10, 0.5, 1, grid=8)
    write_feature_dataset(ds, tmp_path)
    cfg = tiny_config(
        feature_source="features_dir",
        dataset_root=str(tmp_path),
        categories=("beta",),
        scenario_names=("original",),
    )
    suite = run_suite(cfg)
    assert [c.category for c in suite.results[0].per_category] == ["beta"]


def test_format_suite_report_layout():
    suite = run_suite(tiny_config(scenario_names=("original", "rs25")))
    text = format_suite_report(suite)
    assert "original" in text and "rs25" in text
    assert "payload" in text.lower()
    # the baseline row shows a zero delta
    assert "+0.00" in text


def test_write_suite_outputs(tmp_path):
    suite = run_suite(tiny_config(scenario_names=("original", "pq")))
    write_suite_outputs(suite, tmp_path)
    text = (tmp_path / "report.txt").read_text()
    assert text == format_suite_report(suite)
    data = json.loads((tmp_path / "report.json").read_text())
    assert data == json.loads(json.dumps(suite_to_dict(suite)))


def test_suite_to_dict_fields():
    suite = run_suite(tiny_config(scenario_names=("original",)))
    data = suite_to_dict(suite)
    assert data["baseline"] == "original"
    assert data["failures"] == []
    assert list(data["scenarios"]) == ["original"]
    row = data["scenarios"]["original"]
    assert row["mean_payload_bytes"] > 0
    assert 0.0 <= row["roc_overall"] <= 1.0
    assert row["per_category"][0]["category"] == "cat00"
    assert data["latency"]["rows"][0]["scenario"] == "original"


# ---------------------------------------------------------------------------
# Scoring sanity on the synthetic task


def test_anomalies_score_above_normals():
    cfg = tiny_config()
    res = run_scenario(default_scenarios()["raw_features"], cfg)
    # a perfect ROC on every category means full separation
    assert all(c.roc_image == 1.0 for c in res.per_category)


def test_seed_changes_the_data_but_not_the_contract():
    a = run_scenario(default_scenarios()["raw_features"], tiny_config(seed=1))
    b = run_scenario(default_scenarios()["raw_features"], tiny_config(seed=2))
    assert a.mean_payload_bytes == b.mean_payload_bytes  # arithmetic size
    assert a.metric_report.rows != b.metric_report.rows  # different draws


def test_np_payload_means_are_plain_floats():
    res = run_scenario(default_scenarios()["rs25"], tiny_config())
    assert isinstance(res.mean_payload_bytes, float)
    assert not isinstance(res.mean_payload_bytes, np.floating)


# ---------------------------------------------------------------------------
# Replaying published latency tables


def replay_row(scenario, payload_kb, **ms):
    row = {
        "scenario": scenario,
        "payload_kb": payload_kb,
        "edge_feature_ms": 0.0,
        "edge_encode_ms": 0.0,
        "server_decode_ms": 0.0,
        "server_feature_ms": 0.0,
        "server_ad_ms": 0.0,
    }
    row.update(ms)
    return row


def test_replay_bundled_table():
    report = replay_published_tables(PUBLISHED_TIMINGS_RESOURCE)
    assert report.baseline == "original"
    rows = {r.scenario: r for r in report.rows}
    assert set(rows) == set(SCENARIO_ORDER)
    assert rows["original"].tx_s == pytest.approx(0.60, abs=5e-3)
    assert rows["original"].delta_vs_baseline_percent == 0.0


def test_replay_applies_cpu_scale_to_edge_times_only():
    base = {
        "baseline": "a",
        "rows": [
            replay_row("a", 0.0, edge_feature_ms=100.0, server_ad_ms=100.0),
        ],
    }
    plain = replay_published_tables(dict(base))
    scaled = replay_published_tables(dict(base, apply_cpu_scale=True))
    # edge 100 ms -> 300 ms while the server 100 ms stays put
    assert plain.rows[0].total_s == pytest.approx(0.2)
    assert scaled.rows[0].total_s == pytest.approx(0.4)


def test_replay_deltas_use_printed_precision():
    overrides = {
        "baseline": "a",
        "rows": [
            replay_row("a", 0.0, server_ad_ms=710.1),
            replay_row("b", 0.0, server_ad_ms=171.6),
        ],
    }
    report = replay_published_tables(overrides)
    by_name = {r.scenario: r for r in report.rows}
    # deltas come from totals rounded to 2 decimals: (0.17 - 0.71) / 0.71
    assert by_name["b"].delta_vs_baseline_percent == pytest.approx(100 * (0.17 - 0.71) / 0.71)


def test_replay_rejects_malformed_overrides(tmp_path):
    with pytest.raises(ConfigError, match="rows"):
        replay_published_tables({"bandwidth_bytes_per_s": 1.0})
    with pytest.raises(ConfigError, match="rows"):
        replay_published_tables([1, 2, 3])
    with pytest.raises(ConfigError, match="missing"):
        replay_published_tables({"rows": [{"scenario": "a", "payload_kb": 1.0}]})
    with pytest.raises(ConfigError, match="baseline"):
        replay_published_tables({"rows": [replay_row("b", 1.0)]})
    with pytest.raises(ConfigError, match="not found"):
        replay_published_tables(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{rows:}")
    with pytest.raises(ConfigError, match="JSON"):
        replay_published_tables(bad)
