"""Config-file experiments: full runs, ablation sweeps, spectrum exports.

An experiment is one YAML file naming the data source (CSV path or synthetic
spec), the model and training settings, and an output directory. Everything
downstream is seeded from TrainConfig.seed through fixed substreams (0 model
init, 1 batch shuffling, 2 dropout, 3 synthetic noise), so rerunning a config
reproduces every output file byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os

import numpy as np
import yaml

from .data import (
    RawSeries,
    SplitSpec,
    SyntheticSpec,
    exclude_channels,
    load_csv,
    make_windows,
    stack_windows,
    synth_three_sine,
)
from .errors import ConfigError
from .model import FilterFormer, ModelConfig, count_parameters, save_checkpoint
from .numeric import rfft_kernel
from .spectral import amplitude_spectrum, write_amplitude_csv
from .training import (
    Metrics,
    TrainConfig,
    evaluate,
    fit,
    write_loss_curve,
    write_metrics_csv,
)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """One run: data source, model, optimizer, split, and output destination.

    Exactly one of `dataset` (CSV path) and `synthetic` must be set. The
    model is retrained once per entry in `horizons`, which defaults to the
    model's own horizon.
    """

    model: ModelConfig
    train: TrainConfig = TrainConfig()
    split: SplitSpec = SplitSpec()
    dataset: str | None = None
    synthetic: SyntheticSpec | None = None
    exclude: tuple = ()
    horizons: tuple[int, ...] = ()
    out_dir: str = "runs"
    tag: str = "run"

    def __post_init__(self):
        if (self.dataset is None) == (self.synthetic is None):
            raise ConfigError("exactly one of dataset and synthetic must be set")
        if not self.horizons:
            object.__setattr__(self, "horizons", (self.model.horizon,))
        horizons = tuple(int(h) for h in self.horizons)
        if any(h < 1 for h in horizons):
            raise ConfigError(f"horizons must be >= 1, got {horizons}")
        object.__setattr__(self, "horizons", horizons)
        object.__setattr__(self, "exclude", tuple(self.exclude))
        if not self.tag or any(c in self.tag for c in "/\\"):
            raise ConfigError(f"tag must be a nonempty path-free name, got {self.tag!r}")


@dataclasses.dataclass
class RunReport:
    """What a finished run produced; every listed artifact exists on disk."""

    tag: str
    metrics: list[tuple[int, Metrics]]
    param_counts: dict[int, int]
    epochs_run: dict[int, int]
    best_epochs: dict[int, int]
    artifacts: list[str]

    def to_dict(self, relative_to=None) -> dict:
        paths = self.artifacts
        if relative_to is not None:
            # keep the report portable: a moved run directory stays valid
            paths = [os.path.relpath(p, relative_to) for p in paths]
        return {
            "tag": self.tag,
            "metrics": {
                str(h): {"mse": m.mse, "mae": m.mae} for h, m in self.metrics
            },
            "param_counts": {str(h): c for h, c in self.param_counts.items()},
            "epochs_run": {str(h): e for h, e in self.epochs_run.items()},
            "best_epochs": {str(h): e for h, e in self.best_epochs.items()},
            "artifacts": list(paths),
        }


def tiny_experiment_config(out_dir: str = "runs/tiny", seed: int = 0,
                           tag: str = "tiny") -> ExperimentConfig:
    """Smoke-test preset: 2-layer, width-8 model on a short synthetic series."""
    return ExperimentConfig(
        model=ModelConfig(lookback=16, horizon=8, patch_len=4, d_model=8,
                          n_heads=2, total_layers=2, alpha=1, dropout=0.0),
        train=TrainConfig(learning_rate=1e-3, batch_size=32, max_epochs=5,
                          patience=5, seed=seed),
        synthetic=SyntheticSpec(length=400),
        horizons=(8,),
        out_dir=out_dir,
        tag=tag,
    )


def _int_field(section: str, key: str, value) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key} must be an integer, got {value!r}") from None


def _float_field(section: str, key: str, value) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}") from None


_TRAIN_INT_FIELDS = ("batch_size", "max_epochs", "patience", "seed")


def _train_from_dict(raw: dict) -> TrainConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"train section must be a mapping, got {raw!r}")
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown train keys {sorted(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        if key == "learning_rate":
            kwargs[key] = _float_field("train", key, value)  # YAML may give "1e-4" as text
        elif key in _TRAIN_INT_FIELDS:
            kwargs[key] = _int_field("train", key, value)
    return TrainConfig(**kwargs)


def _split_from_dict(raw: dict) -> SplitSpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"split section must be a mapping, got {raw!r}")
    known = {f.name for f in dataclasses.fields(SplitSpec)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown split keys {sorted(unknown)}")
    kwargs = dict(raw)
    if "boundaries" in kwargs and kwargs["boundaries"] is not None:
        kwargs["boundaries"] = tuple(int(v) for v in kwargs["boundaries"])
    for key in ("train_frac", "val_frac", "test_frac"):
        if key in kwargs:
            kwargs[key] = _float_field("split", key, kwargs[key])
    return SplitSpec(**kwargs)


def _synthetic_from_dict(raw: dict) -> SyntheticSpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"synthetic section must be a mapping, got {raw!r}")
    unknown = set(raw) - {"components", "length", "noise"}
    if unknown:
        raise ConfigError(f"unknown synthetic keys {sorted(unknown)}")
    kwargs = {}
    if "components" in raw:
        try:
            kwargs["components"] = tuple(tuple(float(v) for v in c) for c in raw["components"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed synthetic components: {exc}") from exc
    if "length" in raw:
        kwargs["length"] = _int_field("synthetic", "length", raw["length"])
    if "noise" in raw:
        kwargs["noise"] = _float_field("synthetic", "noise", raw["noise"])
    return SyntheticSpec(**kwargs)


_TOP_LEVEL_KEYS = {
    "model", "train", "split", "dataset", "synthetic",
    "exclude_channels", "horizons", "out_dir", "tag",
}


def load_experiment_config(path) -> ExperimentConfig:
    """Parse a YAML experiment file; every schema problem raises ConfigError."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: experiment config must be a mapping")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    if "model" not in raw:
        raise ConfigError(f"{path}: missing required section: model")

    horizons = tuple(_int_field("horizons", str(i), h)
                     for i, h in enumerate(raw.get("horizons", ())))
    model_dict = raw["model"]
    if not isinstance(model_dict, dict):
        raise ConfigError(f"{path}: model section must be a mapping")
    model_dict = dict(model_dict)
    if "dropout" in model_dict:
        model_dict["dropout"] = _float_field("model", "dropout", model_dict["dropout"])
    if "horizon" not in model_dict:
        if not horizons:
            raise ConfigError(f"{path}: set model.horizon or a horizons list")
        model_dict["horizon"] = horizons[0]
    try:
        model = ModelConfig.from_dict(model_dict)
    except TypeError as exc:
        raise ConfigError(f"{path}: bad model section: {exc}") from exc

    dataset = raw.get("dataset")
    split_raw = raw.get("split")
    if split_raw is not None:
        split = _split_from_dict(split_raw)
    elif dataset is not None:
        split = SplitSpec.for_name(dataset)
    else:
        split = SplitSpec()

    try:
        return ExperimentConfig(
            model=model,
            train=_train_from_dict(raw.get("train", {})),
            split=split,
            dataset=str(dataset) if dataset is not None else None,
            synthetic=_synthetic_from_dict(raw["synthetic"]) if "synthetic" in raw else None,
            exclude=tuple(raw.get("exclude_channels", ())),
            horizons=horizons,
            out_dir=str(raw.get("out_dir", "runs")),
            tag=str(raw.get("tag", "run")),
        )
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_series(config: ExperimentConfig) -> RawSeries:
    """Materialize the configured data source and apply channel exclusions."""
    if config.dataset is not None:
        series = load_csv(config.dataset)
    else:
        rng = None
        if config.synthetic.noise > 0:
            rng = np.random.default_rng([config.train.seed, 3])
        series = synth_three_sine(config.synthetic, rng)
    return exclude_channels(series, config.exclude)


def _probe_rows(samples, limit: int = 64) -> np.ndarray:
    x, _ = stack_windows(samples[:limit])
    return x.reshape(-1, x.shape[-1])


def _train_once(config: ExperimentConfig, model_cfg: ModelConfig,
                series: RawSeries) -> tuple[FilterFormer, object, Metrics]:
    windows = make_windows(series, config.split, model_cfg.lookback, model_cfg.horizon)
    model = FilterFormer(model_cfg, np.random.default_rng([config.train.seed, 0]))
    result = fit(model, windows, config.train)
    return model, result, evaluate(model, windows.test)


def run(config: ExperimentConfig) -> RunReport:
    """Train and evaluate at each configured horizon; write all artifacts."""
    series = load_series(config)
    os.makedirs(config.out_dir, exist_ok=True)
    artifacts: list[str] = []
    metrics_rows: list[tuple[int, Metrics]] = []
    param_counts: dict[int, int] = {}
    epochs_run: dict[int, int] = {}
    best_epochs: dict[int, int] = {}

    for horizon in config.horizons:
        model_cfg = dataclasses.replace(config.model, horizon=horizon)
        model, result, metrics = _train_once(config, model_cfg, series)
        metrics_rows.append((horizon, metrics))
        param_counts[horizon] = count_parameters(model)[0]
        epochs_run[horizon] = result.stopped_epoch
        best_epochs[horizon] = result.best_epoch

        base = os.path.join(config.out_dir, f"{config.tag}_h{horizon}")
        write_loss_curve(base + "_loss.csv", result.history)
        artifacts.append(base + "_loss.csv")
        save_checkpoint(model, base + ".ckpt")
        artifacts.append(base + ".ckpt")
        if model.spectral_filters():
            windows = make_windows(series, config.split, model_cfg.lookback, horizon)
            probe = _probe_rows(windows.test)
            artifacts.extend(
                export_spectra(model, probe, config.out_dir, f"{config.tag}_h{horizon}")
            )

    metrics_path = os.path.join(config.out_dir, f"{config.tag}_metrics.csv")
    write_metrics_csv(metrics_path, metrics_rows)
    artifacts.append(metrics_path)

    report = RunReport(
        tag=config.tag, metrics=metrics_rows, param_counts=param_counts,
        epochs_run=epochs_run, best_epochs=best_epochs, artifacts=artifacts,
    )
    report_path = os.path.join(config.out_dir, f"{config.tag}_report.json")
    report.artifacts.append(report_path)
    with open(report_path, "w") as fh:
        json.dump(report.to_dict(relative_to=config.out_dir), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def _write_sweep_csv(path, column: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([column, "mse", "mae"])
        for setting, metrics in rows:
            writer.writerow([setting, repr(metrics.mse), repr(metrics.mae)])


def _sweep(config: ExperimentConfig, column: str, settings) -> tuple[list, str]:
    """Train one model per (label, ModelConfig) pair, all sharing the seed."""
    series = load_series(config)
    os.makedirs(config.out_dir, exist_ok=True)
    rows = []
    for label, model_cfg in settings:
        _, _, metrics = _train_once(config, model_cfg, series)
        rows.append((label, metrics))
    path = os.path.join(config.out_dir, f"{config.tag}_ablate_{column}.csv")
    _write_sweep_csv(path, column, rows)
    return rows, path


def ablate_layers(config: ExperimentConfig, attention_counts) -> tuple[list, str]:
    """Sweep attention-block count with the spectral count fixed at model.alpha."""
    counts = [int(n) for n in attention_counts]
    if not counts:
        raise ConfigError("attention-count list is empty")
    if any(n < 0 for n in counts):
        raise ConfigError(f"attention counts must be >= 0, got {counts}")
    base = dataclasses.replace(config.model, horizon=config.horizons[0])
    settings = [
        (n, dataclasses.replace(base, total_layers=base.alpha + n))
        for n in counts
    ]
    return _sweep(config, "attention_blocks", settings)


def ablate_alpha(config: ExperimentConfig, alphas) -> tuple[list, str]:
    """Sweep the spectral-block count with total depth fixed at model.total_layers."""
    values = [int(a) for a in alphas]
    if not values:
        raise ConfigError("alpha list is empty")
    base = dataclasses.replace(config.model, horizon=config.horizons[0])
    settings = [(a, dataclasses.replace(base, alpha=a)) for a in values]
    return _sweep(config, "alpha", settings)


def ablate_filter_placement(config: ExperimentConfig) -> tuple[list, str]:
    """Train both filter placements plus the filterless baseline, same seed."""
    base = dataclasses.replace(config.model, horizon=config.horizons[0])
    if base.alpha < 1:
        raise ConfigError("placement ablation needs alpha >= 1 in the base model")
    settings = [
        ("post-embedding", dataclasses.replace(base, filter_placement="post-embedding")),
        ("pre-embedding", dataclasses.replace(base, filter_placement="pre-embedding")),
        ("none", dataclasses.replace(base, alpha=0, filter_placement="post-embedding")),
    ]
    return _sweep(config, "placement", settings)


def _mean_amplitude(rows: np.ndarray) -> np.ndarray:
    """Mean rfft magnitude over all leading axes; rows transform along axis -1."""
    re, im = rfft_kernel(rows)
    return np.hypot(re, im).reshape(-1, re.shape[-1]).mean(axis=0)


def export_spectra(model: FilterFormer, probe: np.ndarray, out_dir, tag: str) -> list[str]:
    """Write per-filter amplitude spectra and the pre/post-filter probe spectrum.

    Produces {tag}_filter{i}.csv (bin_index,amplitude) for each filter and
    {tag}_embedding_spectrum.csv (bin_index,pre_amplitude,post_amplitude)
    from the first filter's input/output on the probe rows.
    """
    filters = model.spectral_filters()
    if not filters:
        raise ConfigError("model has no spectral filters (alpha is 0); nothing to export")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, f in enumerate(filters):
        path = os.path.join(out_dir, f"{tag}_filter{i}.csv")
        write_amplitude_csv(path, amplitude_spectrum(f))
        paths.append(path)

    fin, fout = model.filter_probe(probe)
    pre = _mean_amplitude(fin)
    post = _mean_amplitude(fout)
    path = os.path.join(out_dir, f"{tag}_embedding_spectrum.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_index", "pre_amplitude", "post_amplitude"])
        for k in range(pre.shape[0]):
            writer.writerow([k, repr(float(pre[k])), repr(float(post[k]))])
    paths.append(path)
    return paths
