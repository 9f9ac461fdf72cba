"""Command-line front end: runs, ablations, spectrum export, utilities.

Exit codes: 0 success, 2 configuration problems, 3 data problems (missing or
malformed files), 4 numeric failures (divergence, non-finite values).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .experiments import (
    ExperimentConfig,
    ablate_alpha,
    ablate_filter_placement,
    ablate_layers,
    export_spectra,
    load_experiment_config,
    load_series,
    run,
    tiny_experiment_config,
)
from .data import SyntheticSpec, load_synthetic_spec, make_windows, stack_windows, synth_three_sine, write_series_csv
from .model import FilterFormer, count_parameters, load_checkpoint


def _parse_int_list(text: str, flag: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"{flag} expects a comma-separated integer list, got {text!r}") from None


def _parse_channel_list(text: str):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        out.append(int(tok) if tok.isdigit() else tok)
    return tuple(out)


def _load_config(args) -> ExperimentConfig:
    if args.tiny and args.config:
        raise ConfigError("--tiny and --config are mutually exclusive")
    if args.tiny:
        config = tiny_experiment_config(
            out_dir=args.out or "runs/tiny",
            seed=args.seed if args.seed is not None else 0,
        )
    elif args.config:
        config = load_experiment_config(args.config)
    else:
        raise ConfigError("pass --config <file> or --tiny")

    if args.seed is not None:
        config = dataclasses.replace(
            config, train=dataclasses.replace(config.train, seed=args.seed)
        )
    if args.out:
        config = dataclasses.replace(config, out_dir=args.out)
    if args.horizon:
        config = dataclasses.replace(
            config, horizons=_parse_int_list(args.horizon, "--horizon")
        )
    if args.exclude_channels:
        config = dataclasses.replace(
            config, exclude=_parse_channel_list(args.exclude_channels)
        )
    return config


def _print_metric_rows(rows, label: str) -> None:
    for setting, metrics in rows:
        print(f"{label}={setting}: mse={metrics.mse:.6g} mae={metrics.mae:.6g}")


def cmd_run(args) -> int:
    config = _load_config(args)
    report = run(config)
    _print_metric_rows(report.metrics, "horizon")
    for horizon, count in report.param_counts.items():
        print(f"parameters (h={horizon}): {count}")
    print(f"wrote {len(report.artifacts)} files to {config.out_dir}")
    return 0


def cmd_ablate_layers(args) -> int:
    config = _load_config(args)
    counts = _parse_int_list(args.attention_blocks, "--attention-blocks")
    rows, path = ablate_layers(config, counts)
    _print_metric_rows(rows, "attention_blocks")
    print(f"wrote {path}")
    return 0


def cmd_ablate_alpha(args) -> int:
    config = _load_config(args)
    if args.alphas:
        alphas = _parse_int_list(args.alphas, "--alphas")
    else:
        alphas = tuple(range(config.model.total_layers + 1))
    rows, path = ablate_alpha(config, alphas)
    _print_metric_rows(rows, "alpha")
    print(f"wrote {path}")
    return 0


def cmd_ablate_placement(args) -> int:
    config = _load_config(args)
    rows, path = ablate_filter_placement(config)
    _print_metric_rows(rows, "placement")
    print(f"wrote {path}")
    return 0


def cmd_export_spectra(args) -> int:
    config = _load_config(args)
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    else:
        model_cfg = dataclasses.replace(config.model, horizon=config.horizons[0])
        model = FilterFormer(model_cfg, np.random.default_rng([config.train.seed, 0]))
    series = load_series(config)
    windows = make_windows(series, config.split, model.config.lookback, model.config.horizon)
    x, _ = stack_windows(windows.test[:64])
    probe = x.reshape(-1, x.shape[-1])
    paths = export_spectra(model, probe, config.out_dir, config.tag)
    for path in paths:
        print(f"wrote {path}")
    return 0


def cmd_param_count(args) -> int:
    config = _load_config(args)
    model_cfg = dataclasses.replace(config.model, horizon=config.horizons[0])
    total, breakdown = count_parameters(model_cfg)
    print(json.dumps({"total": total, "breakdown": breakdown}, indent=2, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    spec = load_synthetic_spec(args.spec) if args.spec else SyntheticSpec()
    rng = None
    if spec.noise > 0:
        rng = np.random.default_rng([args.seed if args.seed is not None else 0, 3])
    series = synth_three_sine(spec, rng)
    if not args.out:
        raise ConfigError("synth needs --out <csv path>")
    write_series_csv(args.out, series)
    print(f"wrote {series.n_steps} steps to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectral-forecaster",
        description="Train and analyze frequency-filter transformer forecasters.",
        epilog="Set SPECTRAL_FORECASTER_THREADS to cap BLAS worker threads.",
    )
    sub = parser.add_subparsers(dest="command")

    def add_common(p, out_is_dir=True):
        p.add_argument("--config", help="experiment YAML file")
        p.add_argument("--seed", type=int, help="override the training seed")
        if out_is_dir:
            p.add_argument("--out", help="override the output directory")
        p.add_argument("--horizon", help="comma-separated horizon list, e.g. 96,192")
        p.add_argument("--exclude-channels",
                       help="comma-separated channel names or indices to drop")
        p.add_argument("--tiny", action="store_true",
                       help="built-in smoke-test preset (width-8 model, synthetic data)")

    p = sub.add_parser("run", help="train and evaluate one configuration")
    add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate-layers", help="sweep attention depth at fixed filter count")
    add_common(p)
    p.add_argument("--attention-blocks", default="0,1,2,4",
                   help="comma-separated attention-block counts")
    p.set_defaults(func=cmd_ablate_layers)

    p = sub.add_parser("ablate-alpha", help="sweep spectral-block count at fixed depth")
    add_common(p)
    p.add_argument("--alphas", help="comma-separated spectral-block counts (default 0..total)")
    p.set_defaults(func=cmd_ablate_alpha)

    p = sub.add_parser("ablate-placement", help="compare filter placements and no-filter baseline")
    add_common(p)
    p.set_defaults(func=cmd_ablate_placement)

    p = sub.add_parser("export-spectra", help="write filter and probe amplitude spectra")
    add_common(p)
    p.add_argument("--checkpoint", help="trained checkpoint; omitted means untrained weights")
    p.set_defaults(func=cmd_export_spectra)

    p = sub.add_parser("param-count", help="print the parameter count and its breakdown")
    add_common(p)
    p.set_defaults(func=cmd_param_count)

    p = sub.add_parser("synth", help="generate a synthetic three-sine CSV")
    p.add_argument("--spec", help="JSON synthetic spec (defaults built in)")
    p.add_argument("--seed", type=int, help="noise seed")
    p.add_argument("--out", help="destination CSV path")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # library-level precondition failures on user-supplied values
        print(f"invalid value: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
