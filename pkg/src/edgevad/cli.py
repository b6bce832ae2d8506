"""Command-line interface.

Subcommands: `run` (one scenario), `suite` (all configured scenarios),
`replay` (recompute latency tables from published component timings),
`synth-data` (write a synthetic feature dataset), `inspect-payload`
(describe serialized payload frames). Exit codes: 0 success, 1 scenario
error, 2 config error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .binio import FormatError, Reader
from .channel import format_component_table, format_summary_table, report_to_dict
from .codecs import (
    KIND_COMPRESSED_IMAGE,
    KIND_PQ_CODES,
    KIND_RAW_FEATURES,
    KIND_RAW_IMAGE,
    KIND_SAMPLED_FEATURES,
    KIND_TILED_FEATURES,
    parse_tile_plan,
    read_payload_stream,
)
from .data_io import write_feature_dataset
from .pipeline import (
    PUBLISHED_TIMINGS_RESOURCE,
    ConfigError,
    RunConfig,
    ScenarioError,
    _load_dataset,
    default_synthetic_config,
    format_suite_report,
    load_config,
    replay_published_tables,
    run_suite,
    write_suite_outputs,
)


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else default_synthetic_config()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "parallel", False):
        config = replace(config, parallel=True)
    return config


def _cmd_run(args) -> int:
    config = _load_run_config(args)
    config = replace(config, scenario_names=(args.scenario,))
    suite = run_suite(config)
    sys.stdout.write(format_suite_report(suite))
    if args.out:
        write_suite_outputs(suite, args.out)
    if suite.failures:
        for name, msg in suite.failures:
            print(f"scenario {name} failed: {msg}", file=sys.stderr)
        return 1
    return 0


def _cmd_suite(args) -> int:
    config = _load_run_config(args)
    suite = run_suite(config)
    sys.stdout.write(format_suite_report(suite))
    if args.out:
        write_suite_outputs(suite, args.out)
    if suite.failures:
        for name, msg in suite.failures:
            print(f"scenario {name} failed: {msg}", file=sys.stderr)
        return 1
    return 0


def _cmd_replay(args) -> int:
    path = args.timings or PUBLISHED_TIMINGS_RESOURCE
    report = replay_published_tables(path)
    sys.stdout.write("# latency components\n")
    sys.stdout.write(format_component_table(report))
    sys.stdout.write("\n# latency summary\n")
    sys.stdout.write(format_summary_table(report))
    if args.out:
        import json

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "replay.txt").write_text(
            "# latency components\n"
            + format_component_table(report)
            + "\n# latency summary\n"
            + format_summary_table(report)
        )
        (out / "replay.json").write_text(
            json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
        )
    return 0


def _cmd_synth_data(args) -> int:
    config = _load_run_config(args)
    if config.feature_source != "synthetic":
        raise ConfigError("synth-data needs a config with feature_source 'synthetic'")
    dataset = _load_dataset(config)
    write_feature_dataset(dataset, args.out)
    n = sum(len(c.train) + len(c.test) for c in dataset.categories)
    print(f"wrote {n} feature files for {len(dataset.categories)} categories to {args.out}")
    return 0


def _describe_frame(i: int, p) -> str:
    head = f"frame {i}: kind={p.kind} meta={len(p.meta)}B body={len(p.body)}B size={p.size_bytes}B"
    r = Reader(p.meta)
    if p.kind in (KIND_RAW_IMAGE, KIND_COMPRESSED_IMAGE):
        h, w, c = r.u16(), r.u16(), r.u8()
        detail = f"image {h}x{w}x{c}"
        if p.kind == KIND_COMPRESSED_IMAGE:
            detail += f" codec_id={r.u8()} quality={r.u8()}"
    elif p.kind == KIND_RAW_FEATURES:
        layers = [(r.u8(), r.u16(), r.u16(), r.u16()) for _ in range(r.u8())]
        detail = "layers " + ", ".join(f"l{l}:{c}x{h}x{w}" for l, c, h, w in layers)
    elif p.kind == KIND_SAMPLED_FEATURES:
        detail = (
            f"grid {r.u16()}x{r.u16()} d={r.u16()} patches={r.u32()}"
        )
    elif p.kind == KIND_PQ_CODES:
        m, k, n = r.u16(), r.u32(), r.u32()
        rows, cols, flags = r.u16(), r.u16(), r.u8()
        detail = (
            f"m={m} K={k} n={n} grid {rows}x{cols}"
            f" coords={'yes' if flags & 1 else 'no'}"
            f" codebook={'yes' if flags & 2 else 'no'}"
        )
    elif p.kind == KIND_TILED_FEATURES:
        plan = parse_tile_plan(p.meta)
        detail = (
            f"tiles {plan.tiles_per_col}x{plan.tiles_per_row}"
            f" channels={plan.channel_count} tile {plan.tile_h}x{plan.tile_w}"
            f" range [{plan.value_min:.6g}, {plan.value_max:.6g}]"
        )
    else:
        detail = ""
    return f"{head}\n  {detail}"


def _cmd_inspect_payload(args) -> int:
    data = Path(args.path).read_bytes()
    frames = read_payload_stream(data)
    total = 0
    for i, p in enumerate(frames):
        print(_describe_frame(i, p))
        total += p.size_bytes
    print(f"{len(frames)} frame(s), payload total {total} bytes "
          f"({len(data)} bytes on the wire with framing)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgevad",
        description="Edge-to-server visual anomaly detection scenario runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_scenario=False, with_parallel=True):
        p.add_argument("--config", help="JSON config file (defaults to the synthetic setup)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", help="directory for report files")
        if with_parallel:
            p.add_argument(
                "--parallel",
                action="store_true",
                help="evaluate images in a worker pool (disables timing capture)",
            )
        if with_scenario:
            p.add_argument("--scenario", required=True, help="scenario name to run")

    p_run = sub.add_parser("run", help="run a single scenario")
    add_common(p_run, with_scenario=True)
    p_run.set_defaults(func=_cmd_run)

    p_suite = sub.add_parser("suite", help="run every configured scenario")
    add_common(p_suite)
    p_suite.set_defaults(func=_cmd_suite)

    p_replay = sub.add_parser(
        "replay", help="recompute latency tables from component timings"
    )
    p_replay.add_argument(
        "--timings",
        help="JSON component-timings file (defaults to the bundled table)",
    )
    p_replay.add_argument("--out", help="directory for report files")
    p_replay.set_defaults(func=_cmd_replay)

    p_synth = sub.add_parser("synth-data", help="write a synthetic feature dataset")
    p_synth.add_argument("--config", help="JSON config file")
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--out", required=True, help="output dataset directory")
    p_synth.set_defaults(func=_cmd_synth_data)

    p_inspect = sub.add_parser(
        "inspect-payload", help="describe serialized payload frames"
    )
    p_inspect.add_argument("path", help="file of payload frames")
    p_inspect.set_defaults(func=_cmd_inspect_payload)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ScenarioError, FormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
