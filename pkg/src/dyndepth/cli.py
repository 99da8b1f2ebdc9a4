"""Command-line harness: generate, ablate and probe.

Exit codes: 0 on success, 2 for config problems, 3 for runtime failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import report as report_mod
from .config import ConfigError, apply_overrides, build_spec, load_config
from .dynamic import PipelineConfig, run_pipeline
from .grid import ssim, write_pgm
from .model import full_scale_inference, head_and_lookup, layer_similarity
from .schedule import ReferenceMetric, ScheduleFamily, SchedulerConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

ABLATION_AXES = ("family", "rotation", "mask_strategy", "metric", "layer_range", "reference_scale")


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError as e:
        raise ConfigError(f"bad seed list {text!r}: {e}") from e
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def _load_spec(args):
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, args.set)
    return build_spec(cfg)


def cmd_generate(args) -> int:
    spec = _load_spec(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in _parse_seeds(args.seeds):
        model = spec.build_model(seed)
        rep = run_pipeline(model, spec.schedule, spec.pipeline)
        report_mod.write_report_json(out / f"report_s{seed}.json", rep, seed)
        report_mod.write_metrics_csv(out / f"metrics_s{seed}.csv", rep)
        for i, depths in sorted(rep.depth_maps.items()):
            write_pgm(out / f"depth_{i}_s{seed}.pgm", depths)
        write_pgm(out / f"final_s{seed}.pgm", rep.final_feature.mean(axis=-1))
    return EXIT_OK


def _axis_variants(spec, axis: str):
    """(label, PipelineConfig) pairs sweeping one axis, all else fixed."""
    base = spec.pipeline
    sched = base.scheduler

    def with_sched(**kw):
        return PipelineConfig(
            scheduler=SchedulerConfig(
                metric=kw.get("metric", sched.metric),
                layer_range=kw.get("layer_range", sched.layer_range),
                family=kw.get("family", sched.family),
                eta=sched.eta,
                reference_scale=kw.get("reference_scale", sched.reference_scale),
                rotation_enabled=kw.get("rotation", sched.rotation_enabled),
                budget_mode=sched.budget_mode,
            ),
            dynamic_start=base.dynamic_start,
            mask_strategy=kw.get("mask_strategy", base.mask_strategy),
            blending_enabled=base.blending_enabled,
            restore_threshold=base.restore_threshold,
            restore_window=base.restore_window,
        )

    if axis == "family":
        for label, fam in (
            ("sigmoid_k12", ScheduleFamily("sigmoid", 12.0)),
            ("sigmoid_k3", ScheduleFamily("sigmoid", 3.0)),
            ("sigmoid_k256", ScheduleFamily("sigmoid", 256.0)),
            ("linear_a", ScheduleFamily("linear_a")),
            ("linear_b", ScheduleFamily("linear_b")),
        ):
            yield label, with_sched(family=fam)
    elif axis == "rotation":
        yield "rotation_on", with_sched(rotation=True)
        yield "rotation_off", with_sched(rotation=False)
    elif axis == "mask_strategy":
        yield "bit_reversal", with_sched(mask_strategy="bit_reversal")
        yield "uniform", with_sched(mask_strategy="uniform")
    elif axis == "metric":
        for metric in ReferenceMetric:
            yield metric.value, with_sched(metric=metric)
    elif axis == "layer_range":
        for lo, hi in ((3, 19), (0, spec.num_layers - 1), (8, 8), (10, 16), (26, 28)):
            if hi < spec.num_layers:
                yield f"{lo}-{hi}", with_sched(layer_range=(lo, hi))
    elif axis == "reference_scale":
        for ref in (3, 5, 7):
            if ref < len(spec.schedule):
                yield f"R{ref}", with_sched(reference_scale=ref)
    else:
        raise ConfigError(f"unknown ablation axis {axis!r} (choose from {', '.join(ABLATION_AXES)})")


ABLATE_COLUMNS = ["axis", "value", "seed", "scale", "compute_fraction", "mean_depth", "ssim_codes", "ssim_feature", "mse_feature", "speedup"]


def cmd_ablate(args) -> int:
    spec = _load_spec(args)
    seeds = _parse_seeds(args.seeds)
    variants = list(_axis_variants(spec, args.axis))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows, summary = [], []
    for label, pipe_cfg in variants:
        finals = []
        for seed in seeds:
            model = spec.build_model(seed)
            rep = run_pipeline(model, spec.schedule, pipe_cfg)
            for s in rep.scales:
                rows.append(
                    {
                        "axis": args.axis,
                        "value": label,
                        "seed": seed,
                        "scale": s.scale,
                        "compute_fraction": s.compute_fraction,
                        "mean_depth": s.mean_depth,
                        "ssim_codes": s.ssim_codes,
                        "ssim_feature": s.ssim_feature,
                        "mse_feature": s.mse_feature,
                        "speedup": rep.speedup,
                    }
                )
            finals.append((rep.scales[-1].ssim_feature, rep.speedup))
        summary.append(
            {
                "axis": args.axis,
                "value": label,
                "seed": "mean",
                "scale": "final",
                "ssim_feature": float(np.mean([x[0] for x in finals])),
                "speedup": float(np.mean([x[1] for x in finals])),
            }
        )
    report_mod.write_table_csv(out / f"ablate_{args.axis}.csv", ABLATE_COLUMNS, rows + summary)
    return EXIT_OK


def cmd_probe(args) -> int:
    spec = _load_spec(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in _parse_seeds(args.seeds):
        model = spec.build_model(seed)
        h_f, w_f = spec.schedule.final_size
        f = np.zeros((h_f, w_f, model.channels))
        sim_rows, exit_rows = [], []
        from .dynamic import accumulate_feature  # local import to avoid a cycle at module load

        for i, (h, w) in enumerate(spec.schedule.sizes):
            states, _, codes = full_scale_inference(model, f, h, w, i)
            sims = layer_similarity(states)
            for layer in range(sims.shape[0]):
                sim_rows.append(
                    {
                        "scale": i,
                        "layer": layer,
                        "mean_similarity": float(sims[layer].mean()),
                        "min_similarity": float(sims[layer].min()),
                        "max_similarity": float(sims[layer].max()),
                    }
                )
            full_mean = codes.mean(axis=-1)
            for exit_layer in range(1, model.num_layers + 1):
                _, exit_codes = head_and_lookup(model, states[exit_layer])
                exit_rows.append(
                    {
                        "scale": i,
                        "exit_layer": exit_layer,
                        "ssim_codes": ssim(exit_codes.mean(axis=-1), full_mean) if h >= 2 else 1.0,
                    }
                )
            f = accumulate_feature(f, codes, h_f, w_f)
        report_mod.write_table_csv(
            out / f"similarity_s{seed}.csv",
            ["scale", "layer", "mean_similarity", "min_similarity", "max_similarity"],
            sim_rows,
        )
        report_mod.write_table_csv(
            out / f"early_exit_s{seed}.csv", ["scale", "exit_layer", "ssim_codes"], exit_rows
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyndepth", description="Dynamic-depth toy pipeline harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="TOML config path (defaults built in)")
        p.add_argument("--seeds", default="0", help="comma-separated seed list")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override, repeatable")
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("generate", help="run the pipeline per seed and write reports")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ablate", help="sweep one axis holding everything else fixed")
    common(p)
    p.add_argument("--axis", required=True, help=f"one of: {', '.join(ABLATION_AXES)}")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("probe", help="layer-similarity and early-exit sweeps on the dense pipeline")
    common(p)
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
