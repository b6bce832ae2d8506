"""Scenario orchestration: run the transmission strategies end to end.

Each scenario is an edge stage g (feature extraction / compression into
payloads), the channel (serialized payload frames, byte-counted), and a
server stage f (parse, reconstruct, detect). The server only ever sees
payload bytes plus pre-shared model metadata (codebook, memory bank,
feature shapes, sampling seed), so the f(g(x)) split is structural.
"""

from __future__ import annotations

import json
import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import channel as ch
from .codecs import (
    Payload,
    get_codec,
    image_decode,
    image_encode,
    parse_raw_features_payload,
    parse_rs_payload,
    parse_tiled_payload,
    raw_features_payload,
    read_payload_stream,
    rs_encode,
    rs_payload,
    tile_pack,
    tile_unpack,
    tiled_payload,
    SampledPatchSet,
)
from .data_io import SyntheticDataset, generate_synthetic, load_feature_dataset
from .detector import MemoryBank, coreset_select, detect
from .metrics import CategoryMetrics, MetricReport, delta_percent, pixel_f1_best, roc_auc
from .model import LABEL_ANOMALOUS, FeatureStack, PatchFeature, PatchGrid, build_patch_grid
from .pq import parse_pq_payload, pq_decode, pq_encode, pq_payload, pq_train

PUBLISHED_TIMINGS_RESOURCE = Path(__file__).parent / "data" / "published_latency.json"

SCENARIO_ORDER = (
    "original",
    "raw_features",
    "webp",
    "rs25",
    "pq",
    "rs50_webp",
    "rs50_pq",
)

MODE_RAW_IMAGE = "raw_image"
MODE_RAW_FEATURES = "raw_features"
MODE_COMPRESSED_IMAGE = "compressed_image"
MODE_SAMPLED = "sampled_features"
MODE_PQ = "pq_features"
MODE_SAMPLED_PQ = "sampled_pq"
MODE_TILED = "tiled_features"

_MODES = {
    MODE_RAW_IMAGE,
    MODE_RAW_FEATURES,
    MODE_COMPRESSED_IMAGE,
    MODE_SAMPLED,
    MODE_PQ,
    MODE_SAMPLED_PQ,
    MODE_TILED,
}


class ConfigError(Exception):
    """Bad configuration or overrides file (CLI exit code 2)."""


class ScenarioError(Exception):
    """A scenario failed to run (CLI exit code 1)."""


@dataclass(frozen=True)
class Scenario:
    """One transmission strategy: what the edge sends and how.

    The stock names follow the strategies compared in the latency and
    metric tables; the codec is configurable (the "webp"-named scenarios
    default to the lossless reference codec so results do not depend on
    an optional dependency).
    """

    name: str
    mode: str
    alpha: Optional[float] = None  # sampling ratio for sampled/tiled modes
    quality: int = 80
    codec: str = "deflate"
    pq_m: int = 8
    pq_k: int = 256

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ConfigError(f"unknown scenario mode {self.mode!r}")
        if self.mode in (MODE_SAMPLED, MODE_SAMPLED_PQ, MODE_TILED):
            if self.alpha is None or not 0.0 < self.alpha <= 1.0:
                raise ConfigError(
                    f"scenario {self.name}: alpha must be in (0, 1], got {self.alpha}"
                )
        if not 0 <= self.quality <= 100:
            raise ConfigError(f"scenario {self.name}: quality out of range")
        if self.mode in (MODE_PQ, MODE_SAMPLED_PQ):
            if self.pq_m < 1 or self.pq_k < 1:
                raise ConfigError(f"scenario {self.name}: bad PQ parameters")


def default_scenarios() -> dict:
    """The seven stock strategies, keyed by name, in report order."""
    return {
        "original": Scenario(name="original", mode=MODE_RAW_IMAGE, codec="raw"),
        "raw_features": Scenario(name="raw_features", mode=MODE_RAW_FEATURES),
        "webp": Scenario(name="webp", mode=MODE_COMPRESSED_IMAGE, quality=80),
        "rs25": Scenario(name="rs25", mode=MODE_SAMPLED, alpha=0.25),
        "pq": Scenario(name="pq", mode=MODE_PQ),
        "rs50_webp": Scenario(name="rs50_webp", mode=MODE_TILED, alpha=0.5),
        "rs50_pq": Scenario(name="rs50_pq", mode=MODE_SAMPLED_PQ, alpha=0.5),
    }


def default_synthetic_config() -> "RunConfig":
    """Out-of-the-box setup: the synthetic dataset, with PQ parameters
    sized to the synthetic patch dimensionality (d = 30)."""
    pq_params = {"pq_m": 6, "pq_k": 16}
    return RunConfig(
        scenario_params=(("pq", dict(pq_params)), ("rs50_pq", dict(pq_params)))
    )


@dataclass(frozen=True)
class SynthParams:
    """Knobs forwarded to the synthetic dataset generator."""

    n_categories: int = 2
    n_train: int = 20
    n_test: int = 40
    anomaly_fraction: float = 0.5
    n_layers: int = 3
    channels_per_layer: int = 10
    grid: int = 16
    base_block: int = 4
    noise_block: int = 4
    base_std: float = 6.0
    noise_std: float = 1.0
    delta: float = 6.0
    region_min: int = 4
    region_max: int = 8
    map_scale: int = 4


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs besides the scenario definitions."""

    feature_source: str = "synthetic"  # or "features_dir"
    dataset_root: Optional[str] = None
    categories: tuple = ()
    seed: int = 0
    coreset_ratio: float = 0.1
    sigma: float = 4.0
    pq_max_iters: int = 25
    profile: ch.DeviceProfile = field(default_factory=ch.DeviceProfile)
    capture_timings: bool = False
    parallel: bool = False
    scenario_names: tuple = SCENARIO_ORDER
    scenario_params: tuple = ()  # ((name, {field: value}), ...)
    synth: SynthParams = field(default_factory=SynthParams)

    def __post_init__(self):
        if self.feature_source not in ("synthetic", "features_dir"):
            raise ConfigError(f"unknown feature_source {self.feature_source!r}")
        if self.feature_source == "features_dir" and not self.dataset_root:
            raise ConfigError("feature_source 'features_dir' needs dataset_root")
        if not 0.0 < self.coreset_ratio <= 1.0:
            raise ConfigError("coreset_ratio must be in (0, 1]")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")

    def scenarios(self) -> list:
        stock = default_scenarios()
        params = dict(self.scenario_params)
        out = []
        for name in self.scenario_names:
            if name not in stock:
                raise ConfigError(f"unknown scenario {name!r}")
            sc = stock[name]
            if name in params:
                try:
                    sc = replace(sc, **params[name])
                except TypeError as exc:
                    raise ConfigError(f"scenario {name}: {exc}") from exc
            out.append(sc)
        return out


def load_config(path) -> RunConfig:
    """Read a JSON config file; unknown keys are rejected."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    known = {
        "feature_source",
        "dataset_root",
        "categories",
        "seed",
        "coreset_ratio",
        "sigma",
        "pq_max_iters",
        "profile",
        "capture_timings",
        "parallel",
        "scenarios",
        "scenario_params",
        "synthetic",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key in (
        "feature_source",
        "dataset_root",
        "seed",
        "coreset_ratio",
        "sigma",
        "pq_max_iters",
        "capture_timings",
        "parallel",
    ):
        if key in raw:
            kwargs[key] = raw[key]
    if "categories" in raw:
        kwargs["categories"] = tuple(raw["categories"])
    if "scenarios" in raw:
        kwargs["scenario_names"] = tuple(raw["scenarios"])
    if "scenario_params" in raw:
        sp = raw["scenario_params"]
        if not isinstance(sp, dict):
            raise ConfigError("scenario_params must be an object")
        kwargs["scenario_params"] = tuple((k, dict(v)) for k, v in sorted(sp.items()))
    try:
        if "profile" in raw:
            kwargs["profile"] = ch.DeviceProfile(**raw["profile"])
        if "synthetic" in raw:
            kwargs["synth"] = SynthParams(**raw["synthetic"])
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from integer parts (and strings, via CRC-32)."""
    ints = []
    for p in parts:
        if isinstance(p, str):
            ints.append(zlib.crc32(p.encode("utf-8")))
        else:
            ints.append(int(p))
    state = np.random.SeedSequence(ints).generate_state(2, np.uint32)
    return (int(state[0]) << 32) | int(state[1])


# ---------------------------------------------------------------------------
# Edge and server stages


@dataclass(frozen=True)
class _CategoryContext:
    """Pre-shared model metadata for one (scenario, category) pair.

    In a deployment this is what edge and server agree on offline:
    feature shapes, the trained codebook, the sampling seed for the
    tiled strategy, and the codec. Nothing here crosses the channel.
    """

    scenario: Scenario
    category: str
    rows: int
    cols: int
    d: int
    layer_indices: tuple
    layer_channels: tuple
    codec: object
    codebook: object = None
    tiled_indices: object = None  # fixed sampled cell indices, row-major
    seed: int = 0


def _grid_from_matrix(matrix: np.ndarray, rows: int, cols: int) -> PatchGrid:
    patches = tuple(
        PatchFeature(vector=matrix[i], grid_row=i // cols, grid_col=i % cols)
        for i in range(rows * cols)
    )
    return PatchGrid(patches=patches, rows=rows, cols=cols, d=matrix.shape[1])


def _set_from_matrix(
    matrix: np.ndarray, coords: np.ndarray, rows: int, cols: int
) -> SampledPatchSet:
    patches = tuple(
        PatchFeature(vector=matrix[i], grid_row=int(coords[i, 0]), grid_col=int(coords[i, 1]))
        for i in range(matrix.shape[0])
    )
    return SampledPatchSet(
        patches=patches, source_rows=rows, source_cols=cols, d=matrix.shape[1]
    )


def _image_seed(ctx: _CategoryContext, image_id: str) -> int:
    return derive_seed(ctx.seed, "rs", ctx.category, image_id)


def _pack_sampled_layers(stack: FeatureStack, indices: np.ndarray):
    """Gather sampled grid cells per layer into dense near-square tensors.

    Cell values become columns of a (C, n) matrix reshaped to (C, h, w)
    with h·w ≥ n; the padding cells repeat the per-tensor minimum so they
    quantize to zero.
    """
    n = indices.size
    h = max(1, int(math.floor(math.sqrt(n))))
    w = math.ceil(n / h)
    tensors = []
    for t in stack.layers:
        arr = t.as_array().reshape(t.channels, -1)[:, indices]
        padded = np.full((t.channels, h * w), arr.min(), dtype=np.float32)
        padded[:, :n] = arr
        tensors.append(
            type(t)(t.channels, h, w, padded.reshape(-1), t.layer_index)
        )
    return tensors


def _edge_stage(stack: FeatureStack, ctx: _CategoryContext) -> list:
    """g: turn one image's features into the payload frames to transmit."""
    sc = ctx.scenario
    if sc.mode == MODE_RAW_FEATURES:
        return [raw_features_payload(stack.layers)]
    if sc.mode in (MODE_RAW_IMAGE, MODE_COMPRESSED_IMAGE):
        # The synthetic "image" is the stack of per-layer 8-bit mosaics;
        # sending it raw or codec-compressed stands in for raw/compressed
        # image transmission with server-side feature extraction.
        frames = []
        for t in stack.layers:
            plane, plan = tile_pack(t)
            frames.append(tiled_payload(plane, plan, sc.quality, ctx.codec))
        return frames
    if sc.mode == MODE_SAMPLED:
        grid = build_patch_grid(stack)
        sampled = rs_encode(grid, sc.alpha, _image_seed(ctx, stack.image_id))
        return [rs_payload(sampled)]
    if sc.mode == MODE_PQ:
        grid = build_patch_grid(stack)
        codes = pq_encode(grid.to_matrix(), ctx.codebook)
        return [
            pq_payload(codes, source_rows=grid.rows, source_cols=grid.cols)
        ]
    if sc.mode == MODE_SAMPLED_PQ:
        grid = build_patch_grid(stack)
        sampled = rs_encode(grid, sc.alpha, _image_seed(ctx, stack.image_id))
        codes = pq_encode(sampled.to_matrix(), ctx.codebook)
        return [
            pq_payload(
                codes,
                source_rows=grid.rows,
                source_cols=grid.cols,
                coords=sampled.coords(),
            )
        ]
    if sc.mode == MODE_TILED:
        frames = []
        for t in _pack_sampled_layers(stack, ctx.tiled_indices):
            plane, plan = tile_pack(t)
            frames.append(tiled_payload(plane, plan, sc.quality, ctx.codec))
        return frames
    raise ScenarioError(f"unhandled mode {sc.mode}")


def _server_stage(data: bytes, ctx: _CategoryContext):
    """f: parse the payload stream and rebuild the detector input."""
    sc = ctx.scenario
    frames = read_payload_stream(data)
    if sc.mode == MODE_RAW_FEATURES:
        layers = parse_raw_features_payload(frames[0])
        stack = FeatureStack(
            image_id="rx", layers=layers, label="normal", category=ctx.category
        )
        return build_patch_grid(stack)
    if sc.mode in (MODE_RAW_IMAGE, MODE_COMPRESSED_IMAGE):
        layers = []
        for i, frame in enumerate(frames):
            plane, plan = parse_tiled_payload(frame, ctx.codec)
            layers.append(tile_unpack(plane, plan, layer_index=ctx.layer_indices[i]))
        stack = FeatureStack(
            image_id="rx", layers=tuple(layers), label="normal", category=ctx.category
        )
        return build_patch_grid(stack)
    if sc.mode == MODE_SAMPLED:
        return parse_rs_payload(frames[0])
    if sc.mode in (MODE_PQ, MODE_SAMPLED_PQ):
        tx = parse_pq_payload(frames[0])
        cb = tx.codebook if tx.codebook is not None else ctx.codebook
        vectors = pq_decode(tx.codes, cb)
        if tx.coords is None:
            return _grid_from_matrix(vectors, tx.source_rows, tx.source_cols)
        return _set_from_matrix(vectors, tx.coords, tx.source_rows, tx.source_cols)
    if sc.mode == MODE_TILED:
        n = ctx.tiled_indices.size
        per_location = []
        for frame in frames:
            plane, plan = parse_tiled_payload(frame, ctx.codec)
            tensor = tile_unpack(plane, plan)
            per_location.append(
                tensor.as_array().reshape(plan.channel_count, -1)[:, :n]
            )
        matrix = np.concatenate(per_location, axis=0).T.astype(np.float32)
        coords = np.stack(
            [ctx.tiled_indices // ctx.cols, ctx.tiled_indices % ctx.cols], axis=1
        )
        return _set_from_matrix(matrix, coords, ctx.rows, ctx.cols)
    raise ScenarioError(f"unhandled mode {sc.mode}")


# ---------------------------------------------------------------------------
# Scenario execution


@dataclass(frozen=True)
class CategoryResult:
    category: str
    f1_pixel: float
    f1_threshold: float
    roc_image: float
    mean_payload_bytes: float


@dataclass(frozen=True)
class ScenarioResult:
    scenario: str
    metric_report: MetricReport
    per_category: tuple  # CategoryResult
    mean_payload_bytes: float
    timings_ms: dict  # edge_encode/server_decode/server_ad (0.0 unless captured)


def _load_dataset(config: RunConfig) -> SyntheticDataset:
    if config.feature_source == "synthetic":
        s = config.synth
        categories = (
            list(config.categories)
            if config.categories
            else s.n_categories
        )
        return generate_synthetic(
            categories,
            s.n_train,
            s.n_test,
            s.anomaly_fraction,
            config.seed,
            n_layers=s.n_layers,
            channels_per_layer=s.channels_per_layer,
            grid=s.grid,
            base_block=s.base_block,
            noise_block=s.noise_block,
            base_std=s.base_std,
            noise_std=s.noise_std,
            delta=s.delta,
            region_min=s.region_min,
            region_max=s.region_max,
            map_scale=s.map_scale,
        )
    try:
        ds = load_feature_dataset(config.dataset_root)
    except Exception as exc:
        raise ScenarioError(f"cannot load features from {config.dataset_root}: {exc}")
    if config.categories:
        wanted = set(config.categories)
        cats = tuple(c for c in ds.categories if c.name in wanted)
        missing = wanted - {c.name for c in cats}
        if missing:
            raise ScenarioError(f"dataset lacks categories: {sorted(missing)}")
        ds = SyntheticDataset(categories=cats, map_h=ds.map_h, map_w=ds.map_w)
    return ds


def _category_context(
    scenario: Scenario, config: RunConfig, ci: int, name: str, train
) -> _CategoryContext:
    first = train[0]
    stack_grid = build_patch_grid(first)
    rows, cols, d = stack_grid.rows, stack_grid.cols, stack_grid.d
    codec = get_codec(scenario.codec)
    codebook = None
    if scenario.mode in (MODE_PQ, MODE_SAMPLED_PQ):
        if d % scenario.pq_m != 0:
            raise ScenarioError(
                f"scenario {scenario.name}: pq_m={scenario.pq_m} does not divide d={d}"
            )
        vectors = np.concatenate([build_patch_grid(s).to_matrix() for s in train])
        codebook = pq_train(
            vectors,
            scenario.pq_m,
            scenario.pq_k,
            max_iters=config.pq_max_iters,
            seed=derive_seed(config.seed, "pq", name),
        )
    tiled_indices = None
    if scenario.mode == MODE_TILED:
        n = rows * cols
        k = math.ceil(scenario.alpha * n)
        rng = np.random.default_rng(derive_seed(config.seed, "tile", name))
        tiled_indices = np.sort(rng.choice(n, size=k, replace=False))
    return _CategoryContext(
        scenario=scenario,
        category=name,
        rows=rows,
        cols=cols,
        d=d,
        layer_indices=tuple(t.layer_index for t in first.layers),
        layer_channels=tuple(t.channels for t in first.layers),
        codec=codec,
        codebook=codebook,
        tiled_indices=tiled_indices,
        seed=config.seed,
    )


def _transmit(stack: FeatureStack, ctx: _CategoryContext) -> tuple:
    """Edge → bytes → server; returns (detector input, payload bytes)."""
    frames = _edge_stage(stack, ctx)
    wire = b"".join(p.serialize() for p in frames)
    size = sum(p.size_bytes for p in frames)
    return _server_stage(wire, ctx), size


def run_scenario(scenario: Scenario, config: RunConfig, dataset=None) -> ScenarioResult:
    """Evaluate one strategy over every category of the dataset.

    The memory bank is built from the train split passed through the same
    edge/server transformation as the test split; image scores are
    min-max normalized to [0, 1] per category over the test set.
    """
    if dataset is None:
        dataset = _load_dataset(config)
    rows = []
    timings = {"edge_encode_ms": 0.0, "server_decode_ms": 0.0, "server_ad_ms": 0.0}
    timed_images = 0
    for ci, cat in enumerate(dataset.categories):
        if not cat.train:
            raise ScenarioError(f"category {cat.name} has no train split")
        ctx = _category_context(scenario, config, ci, cat.name, cat.train)
        train_inputs = [_transmit(s, ctx)[0] for s in cat.train]
        pooled = np.concatenate([ti.to_matrix() for ti in train_inputs])
        idx = coreset_select(
            pooled, config.coreset_ratio, derive_seed(config.seed, "bank", cat.name)
        )
        bank = MemoryBank(
            entries=pooled[idx].astype(np.float32),
            d=pooled.shape[1],
            coreset_ratio=config.coreset_ratio,
            source_count=pooled.shape[0],
            seed=config.seed,
        )

        def evaluate(stack):
            t0 = time.perf_counter()
            frames = _edge_stage(stack, ctx)
            t1 = time.perf_counter()
            wire = b"".join(p.serialize() for p in frames)
            size = sum(p.size_bytes for p in frames)
            t2 = time.perf_counter()
            inp = _server_stage(wire, ctx)
            t3 = time.perf_counter()
            result = detect(
                bank,
                inp,
                dataset.map_h,
                dataset.map_w,
                sigma=config.sigma,
                image_id=stack.image_id,
            )
            t4 = time.perf_counter()
            return result, size, (t1 - t0, t3 - t2, t4 - t3)

        if config.parallel and not config.capture_timings:
            with ThreadPoolExecutor() as pool:
                evaluated = list(pool.map(evaluate, cat.test))
        else:
            evaluated = [evaluate(s) for s in cat.test]

        scores = np.array([r.image_score for r, _, _ in evaluated])
        lo, hi = scores.min(), scores.max()
        norm_scores = (scores - lo) / (hi - lo) if hi > lo else np.zeros_like(scores)
        labels = [s.label == LABEL_ANOMALOUS for s in cat.test]
        auc = roc_auc(labels, norm_scores)
        masks = [
            s.mask
            if s.mask is not None
            else np.zeros((dataset.map_h, dataset.map_w), dtype=np.uint8)
            for s in cat.test
        ]
        maps = [r.anomaly_map for r, _, _ in evaluated]
        f1, threshold = pixel_f1_best(masks, maps)
        payload = float(np.mean([size for _, size, _ in evaluated]))
        rows.append(
            CategoryResult(
                category=cat.name,
                f1_pixel=f1,
                f1_threshold=threshold,
                roc_image=auc,
                mean_payload_bytes=payload,
            )
        )
        if config.capture_timings:
            for _, _, (enc, dec, ad) in evaluated:
                timings["edge_encode_ms"] += enc * 1000.0
                timings["server_decode_ms"] += dec * 1000.0
                timings["server_ad_ms"] += ad * 1000.0
            timed_images += len(evaluated)
    if timed_images:
        timings = {k: v / timed_images for k, v in timings.items()}
        timings["edge_encode_ms"] = ch.scale_edge_time(
            timings["edge_encode_ms"], config.profile
        )
    report = MetricReport.from_rows(
        [CategoryMetrics(r.category, r.f1_pixel, r.roc_image) for r in rows]
    )
    return ScenarioResult(
        scenario=scenario.name,
        metric_report=report,
        per_category=tuple(rows),
        mean_payload_bytes=float(np.mean([r.mean_payload_bytes for r in rows])),
        timings_ms=timings,
    )


# ---------------------------------------------------------------------------
# Suite


@dataclass(frozen=True)
class SuiteResult:
    results: tuple  # ScenarioResult, in run order
    failures: tuple  # (scenario name, message)
    latency: ch.LatencyReport
    baseline: str

    def result(self, name: str) -> ScenarioResult:
        for r in self.results:
            if r.scenario == name:
                return r
        raise KeyError(f"no result for scenario {name!r}")


def run_suite(config: RunConfig) -> SuiteResult:
    """Run every configured scenario on one shared dataset.

    Scenario failures do not abort the suite; they are recorded and the
    remaining scenarios still run. The latency report uses captured
    timings when enabled, otherwise zeros (byte-identical reports).
    """
    dataset = _load_dataset(config)
    scenarios = config.scenarios()
    results = []
    failures = []
    lat_rows = []
    for sc in scenarios:
        try:
            res = run_scenario(sc, config, dataset)
        except Exception as exc:
            failures.append((sc.name, f"{type(exc).__name__}: {exc}"))
            continue
        results.append(res)
        lat_rows.append(
            ch.build_latency_row(
                sc.name,
                edge_feature_ms=0.0,
                edge_encode_ms=res.timings_ms["edge_encode_ms"],
                server_decode_ms=res.timings_ms["server_decode_ms"],
                server_feature_ms=0.0,
                server_ad_ms=res.timings_ms["server_ad_ms"],
                payload_bytes=res.mean_payload_bytes,
                profile=config.profile,
            )
        )
    baseline = "original" if any(r.scenario == "original" for r in results) else (
        results[0].scenario if results else "original"
    )
    latency = ch.LatencyReport(rows=tuple(lat_rows), baseline=baseline)
    if results:
        latency = ch.attach_deltas(latency)
    return SuiteResult(
        results=tuple(results),
        failures=tuple(failures),
        latency=latency,
        baseline=baseline,
    )


def format_suite_report(suite: SuiteResult) -> str:
    """Delimited-text report: per-category metrics, summary with deltas vs
    the baseline, the latency tables, and the accuracy/payload trade-off."""
    lines = ["# per-category metrics", "scenario|category|f1_pixel|roc_image"]
    for res in suite.results:
        for row in res.per_category:
            lines.append(
                f"{res.scenario}|{row.category}|{row.f1_pixel:.4f}|{row.roc_image:.4f}"
            )
    lines.append("")
    lines.append("# summary")
    lines.append(
        "scenario|f1_overall|roc_overall|delta_f1_percent|delta_roc_percent"
        "|mean_payload_bytes"
    )
    base = next((r for r in suite.results if r.scenario == suite.baseline), None)
    for res in suite.results:
        if base is not None and base.metric_report.f1_overall > 0:
            df = delta_percent(
                res.metric_report.f1_overall, base.metric_report.f1_overall
            )
            dr = delta_percent(
                res.metric_report.roc_overall, base.metric_report.roc_overall
            )
            delta_f, delta_r = f"{df:+.2f}", f"{dr:+.2f}"
        else:
            delta_f = delta_r = "-"
        lines.append(
            f"{res.scenario}|{res.metric_report.f1_overall:.4f}"
            f"|{res.metric_report.roc_overall:.4f}|{delta_f}|{delta_r}"
            f"|{res.mean_payload_bytes:.1f}"
        )
    lines.append("")
    lines.append("# trade-off (pixel F1 vs payload)")
    lines.append("scenario|f1_overall|mean_payload_bytes")
    for res in suite.results:
        lines.append(
            f"{res.scenario}|{res.metric_report.f1_overall:.4f}"
            f"|{res.mean_payload_bytes:.1f}"
        )
    lines.append("")
    lines.append("# latency components")
    lines.append(ch.format_component_table(suite.latency).rstrip("\n"))
    lines.append("")
    lines.append("# latency summary")
    lines.append(ch.format_summary_table(suite.latency).rstrip("\n"))
    if suite.failures:
        lines.append("")
        lines.append("# failures")
        for name, msg in suite.failures:
            lines.append(f"{name}|{msg}")
    return "\n".join(lines) + "\n"


def suite_to_dict(suite: SuiteResult) -> dict:
    return {
        "baseline": suite.baseline,
        "scenarios": {
            res.scenario: {
                "f1_overall": res.metric_report.f1_overall,
                "roc_overall": res.metric_report.roc_overall,
                "f1_objects": res.metric_report.f1_objects,
                "f1_textures": res.metric_report.f1_textures,
                "roc_objects": res.metric_report.roc_objects,
                "roc_textures": res.metric_report.roc_textures,
                "mean_payload_bytes": res.mean_payload_bytes,
                "per_category": [
                    {
                        "category": r.category,
                        "f1_pixel": r.f1_pixel,
                        "f1_threshold": r.f1_threshold,
                        "roc_image": r.roc_image,
                        "mean_payload_bytes": r.mean_payload_bytes,
                    }
                    for r in res.per_category
                ],
            }
            for res in suite.results
        },
        "failures": [{"scenario": n, "error": m} for n, m in suite.failures],
        "latency": ch.report_to_dict(suite.latency),
    }


def write_suite_outputs(suite: SuiteResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(format_suite_report(suite))
    (out / "report.json").write_text(
        json.dumps(suite_to_dict(suite), indent=2, sort_keys=True) + "\n"
    )


# ---------------------------------------------------------------------------
# Replaying published latency tables


def replay_published_tables(overrides) -> ch.LatencyReport:
    """Recompute Tx/Total/Δ from externally supplied per-row payloads and
    component timings (the exact-reproduction path).

    The overrides are a JSON object: bandwidth, cpu scale, a flag saying
    whether edge times still need CPU scaling, and one row per scenario
    with payload_kb plus the five component times in ms. Deltas use totals
    rounded to 2 decimals, matching the printed precision of the source.
    """
    if isinstance(overrides, (str, Path)):
        try:
            overrides = json.loads(Path(overrides).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"overrides file not found: {overrides}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"overrides file is not valid JSON: {exc}") from exc
    if not isinstance(overrides, dict) or "rows" not in overrides:
        raise ConfigError("overrides must be an object with a 'rows' list")
    profile = ch.DeviceProfile(
        bandwidth_bytes_per_s=float(
            overrides.get("bandwidth_bytes_per_s", ch.DEFAULT_BANDWIDTH_BYTES_PER_S)
        ),
        cpu_scale=float(overrides.get("cpu_scale", ch.DEFAULT_CPU_SCALE)),
    )
    apply_scale = bool(overrides.get("apply_cpu_scale", False))
    required = (
        "scenario",
        "payload_kb",
        "edge_feature_ms",
        "edge_encode_ms",
        "server_decode_ms",
        "server_feature_ms",
        "server_ad_ms",
    )
    rows = []
    for raw in overrides["rows"]:
        missing = [k for k in required if k not in raw]
        if missing:
            raise ConfigError(
                f"override row {raw.get('scenario', '?')!r} missing {missing}"
            )
        edge_feature = float(raw["edge_feature_ms"])
        edge_encode = float(raw["edge_encode_ms"])
        if apply_scale:
            edge_feature = ch.scale_edge_time(edge_feature, profile)
            edge_encode = ch.scale_edge_time(edge_encode, profile)
        rows.append(
            ch.build_latency_row(
                str(raw["scenario"]),
                edge_feature_ms=edge_feature,
                edge_encode_ms=edge_encode,
                server_decode_ms=float(raw["server_decode_ms"]),
                server_feature_ms=float(raw["server_feature_ms"]),
                server_ad_ms=float(raw["server_ad_ms"]),
                payload_bytes=float(raw["payload_kb"]) * 1000.0,
                profile=profile,
            )
        )
    baseline = str(overrides.get("baseline", "original"))
    if all(r.scenario != baseline for r in rows):
        raise ConfigError(f"overrides have no baseline row {baseline!r}")
    report = ch.LatencyReport(rows=tuple(rows), baseline=baseline)
    return ch.attach_deltas(report, round_digits=2)
