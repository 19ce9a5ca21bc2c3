"""Command-line entry point.

Subcommands cover the whole workflow: encoder pretraining, fine-tuning,
evaluation, the embedding ablation, and the negative-sample sweep. Every run
echoes its resolved configuration into the output directory, refuses to
clobber a non-empty directory unless --overwrite is given, and exits with a
distinct code per failure family: 2 for configuration, 3 for data, 4 for
numeric problems.

Wall-clock timings are written to a separate timing.json so that report
files stay byte-identical across repeated runs with the same seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backbone import frozen_checksum
from .contrastive import train_encoder
from .data import (
    SyntheticSpec,
    load_dataset,
    subsample_training,
)
from .detector import ThresholdPolicy
from .errors import CONFIG_ERRORS, DATA_ERRORS, NUMERIC_ERRORS, ConfigError
from .metrics import f1_score, roc_auc
from .params import ParameterStore
from .pipeline import (
    FittedPipeline,
    PipelineConfig,
    windows_from_values,
    build_untrained,
    fit,
    stage_seeds,
    synthetic_split,
)
from .plots import (
    save_ablation_bars,
    save_loss_curves,
    save_score_timeline,
    save_sweep_curve,
)
from .tokenizer import FeatureStats

log = logging.getLogger(__name__)

_RUN_KEYS = {
    "dataset",
    "fraction",
    "threshold_policy",
    "quantile",
    "point_adjust",
    "aggregate",
}

_SYNTHETIC_INT_KEYS = {"n_features", "length", "event_len", "seed"}
_SYNTHETIC_FLOAT_KEYS = {
    "confounder_rate",
    "anomaly_rate",
    "noise_std",
    "spike_scale",
}


@dataclass
class RunOptions:
    """Resolved run-level settings shared by all subcommands."""

    dataset: str | None
    fraction: float
    policy_kind: str
    quantile: float | None
    point_adjust: bool
    aggregate: str
    ignore_labels: bool
    out: Path
    overwrite: bool


@dataclass
class ResolvedDataset:
    name: str
    train: np.ndarray
    test: np.ndarray
    labels: np.ndarray | None
    declared_ratio: float | None  # anomaly fraction in [0, 1), when declared


# -- configuration resolution ----------------------------------------------------


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        payload = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    return payload


def resolve_run(args: argparse.Namespace) -> tuple[PipelineConfig, RunOptions]:
    """Merge defaults, config file, and flags; flags win over the file."""
    payload = _load_config_file(args.config) if args.config else {}
    run_file = {k: payload.pop(k) for k in list(payload) if k in _RUN_KEYS}
    cfg = PipelineConfig.from_dict(payload) if payload else PipelineConfig()

    overrides = {}
    for flag in ("seed", "n_negatives", "encoder_epochs", "finetune_epochs"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = value
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)

    policy_kind = args.threshold_policy or run_file.get("threshold_policy") or "quantile"
    if policy_kind not in ("quantile", "best_f1"):
        raise ConfigError(f"unknown threshold policy '{policy_kind}'")
    quantile = args.quantile if args.quantile is not None else run_file.get("quantile")
    if quantile is not None and policy_kind != "quantile":
        raise ConfigError("--quantile only applies to the quantile threshold policy")

    fraction = args.fraction if args.fraction is not None else run_file.get("fraction", 1.0)
    if not 0.0 < float(fraction) <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")

    if not args.out:
        raise ConfigError("--out is required")

    opts = RunOptions(
        dataset=args.dataset or run_file.get("dataset"),
        fraction=float(fraction),
        policy_kind=policy_kind,
        quantile=None if quantile is None else float(quantile),
        point_adjust=bool(args.point_adjust or run_file.get("point_adjust", False)),
        aggregate=args.aggregate or run_file.get("aggregate", "average"),
        ignore_labels=bool(getattr(args, "ignore_labels", False)),
        out=Path(args.out),
        overwrite=bool(args.overwrite),
    )
    if opts.aggregate not in ("average", "concat"):
        raise ConfigError(f"unknown aggregation '{opts.aggregate}'")
    return cfg, opts


def _parse_synthetic(text: str, default_seed: int) -> SyntheticSpec:
    """'synthetic' or 'synthetic:key=value,...' with SyntheticSpec field names."""
    kwargs: dict = {"seed": default_seed}
    _, _, tail = text.partition(":")
    if tail:
        for item in tail.split(","):
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"bad synthetic dataset option '{item}' (need key=value)")
            key = key.strip()
            if key in _SYNTHETIC_INT_KEYS:
                kwargs[key] = int(raw)
            elif key in _SYNTHETIC_FLOAT_KEYS:
                kwargs[key] = float(raw)
            else:
                raise ConfigError(f"unknown synthetic dataset option '{key}'")
    return SyntheticSpec(**kwargs)


def resolve_datasets(opts: RunOptions, cfg: PipelineConfig) -> list[ResolvedDataset]:
    if not opts.dataset:
        raise ConfigError("--dataset is required (manifest path, directory, or 'synthetic')")

    if opts.dataset.startswith("synthetic"):
        spec = _parse_synthetic(opts.dataset, cfg.seed)
        train, test = synthetic_split(spec)
        labels = None if opts.ignore_labels else test.labels
        return [
            ResolvedDataset(
                name=f"synthetic-{spec.seed}",
                train=train,
                test=test.values,
                labels=labels,
                declared_ratio=spec.anomaly_rate,
            )
        ]

    path = Path(opts.dataset)
    if not path.exists():
        raise ConfigError(f"dataset path not found: {path}")
    manifest_files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    if not manifest_files:
        raise ConfigError(f"no manifest files (*.json) in directory {path}")

    out = []
    for mf in manifest_files:
        train, test, labels = load_dataset(mf)
        name = json.loads(Path(mf).read_text())["name"]
        out.append(
            ResolvedDataset(
                name=str(name),
                train=train,
                test=test,
                labels=None if opts.ignore_labels else labels,
                declared_ratio=json.loads(Path(mf).read_text())["anomaly_ratio_percent"] / 100.0,
            )
        )
    return out


def _policy_for(opts: RunOptions, ds: ResolvedDataset) -> ThresholdPolicy:
    if opts.policy_kind == "best_f1":
        if ds.labels is None:
            raise ConfigError("best_f1 threshold policy needs labels")
        return ThresholdPolicy(kind="best_f1")
    q = opts.quantile
    if q is None:
        ratio = ds.declared_ratio if ds.declared_ratio is not None else 0.01
        q = min(max(1.0 - ratio, 0.5), 0.9999)
    return ThresholdPolicy(kind="quantile", q=q)


# -- output helpers ---------------------------------------------------------------


def _check_clobber(opts: RunOptions) -> None:
    if opts.out.exists() and any(opts.out.iterdir()) and not opts.overwrite:
        raise ConfigError(
            f"output directory {opts.out} is not empty; pass --overwrite to replace it"
        )


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):  # before int: bool is an int subclass
        return bool(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return None if np.isnan(value) else value
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, Path):
        return str(value)
    return value


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n")


def _write_report_txt(path: Path, flat: dict) -> None:
    lines = []
    for key, value in flat.items():
        if value is None or (isinstance(value, float) and np.isnan(value)):
            value = "n/a"
        lines.append(f"{key}: {value}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _write_loss_csv(path: Path, losses: list[float]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = ["epoch,loss"] + [f"{i + 1},{repr(float(v))}" for i, v in enumerate(losses)]
    path.write_text("\n".join(rows) + "\n")


def _write_scores_csv(
    path: Path,
    scores: np.ndarray,
    predictions: np.ndarray,
    labels: np.ndarray | None,
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "timestamp,score,prediction" + (",label" if labels is not None else "")
    lines = [header]
    for t in range(scores.shape[0]):
        row = f"{t},{repr(float(scores[t]))},{int(predictions[t])}"
        if labels is not None:
            row += f",{int(labels[t])}"
        lines.append(row)
    path.write_text("\n".join(lines) + "\n")


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _echo_config(out: Path, command: str, cfg: PipelineConfig, opts: RunOptions) -> None:
    _write_json(
        out / "resolved_config.json",
        {
            "command": command,
            "pipeline": cfg.to_dict(),
            "dataset": opts.dataset,
            "fraction": opts.fraction,
            "threshold_policy": opts.policy_kind,
            "quantile": opts.quantile,
            "point_adjust": opts.point_adjust,
            "aggregate": opts.aggregate,
            "ignore_labels": opts.ignore_labels,
            "out": str(opts.out),
        },
    )


def _write_timing(out: Path, command: str, seconds: float) -> None:
    _write_json(out / "timing.json", {"command": command, "runtime_seconds": seconds})


# -- subcommands ------------------------------------------------------------------


def _single_dataset(datasets: list[ResolvedDataset], command: str) -> ResolvedDataset:
    if len(datasets) != 1:
        raise ConfigError(f"{command} needs a single dataset, got {len(datasets)}")
    return datasets[0]


def cmd_train_encoder(args: argparse.Namespace) -> int:
    cfg, opts = resolve_run(args)
    _check_clobber(opts)
    started = time.perf_counter()
    ds = _single_dataset(resolve_datasets(opts, cfg), "train-encoder")
    train = subsample_training(ds.train, opts.fraction)

    stats = FeatureStats.fit(train)
    windows, _ = windows_from_values(train, stats, cfg)
    losses: list[float] = []
    encoder_params = train_encoder(
        windows,
        cfg.encoder,
        n_negatives=cfg.n_negatives,
        epochs=cfg.encoder_epochs,
        lr=cfg.encoder_lr,
        seed=stage_seeds(cfg.seed).encoder,
        record_losses=losses,
    )

    out = opts.out
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "encoder.ckpt"
    encoder_params.save(ckpt)
    _write_loss_csv(out / "encoder_loss.csv", losses)
    save_loss_curves(out / "loss.png", {"encoder": losses})
    _echo_config(out, "train-encoder", cfg, opts)
    _write_json(
        out / "summary.json",
        {
            "command": "train-encoder",
            "dataset": ds.name,
            "n_windows": len(windows),
            "epochs": cfg.encoder_epochs,
            "final_loss": losses[-1] if losses else None,
            "checkpoint_digest": _file_digest(ckpt),
            "runtime_seconds": time.perf_counter() - started,
        },
    )
    _write_timing(out, "train-encoder", time.perf_counter() - started)
    print(
        f"encoder trained on {ds.name}: {len(windows)} windows, "
        f"{cfg.encoder_epochs} epochs, final loss "
        f"{losses[-1]:.6f} -> {out}" if losses else f"encoder trained -> {out}"
    )
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    cfg, opts = resolve_run(args)
    _check_clobber(opts)
    started = time.perf_counter()
    ds = _single_dataset(resolve_datasets(opts, cfg), "finetune")
    train = subsample_training(ds.train, opts.fraction)

    seeds = stage_seeds(cfg.seed)
    encoder_params = None
    enc_losses: list[float] = []
    if args.encoder_checkpoint:
        encoder_params = ParameterStore.load(args.encoder_checkpoint)
    if args.init_checkpoint:
        initial = ParameterStore.load(args.init_checkpoint)
    else:
        initial = build_untrained(cfg, seeds)

    digest_before = frozen_checksum(initial)
    tune_losses: list[float] = []
    fitted = fit(
        train,
        cfg,
        encoder_params=encoder_params,
        initial_params=initial,
        encoder_loss_log=enc_losses,
        finetune_loss_log=tune_losses,
    )
    digest_after = frozen_checksum(fitted.params)
    if digest_before != digest_after:
        raise AssertionError("frozen tensors changed during fine-tuning")

    out = opts.out
    fitted.save(out)
    _write_loss_csv(out / "finetune_loss.csv", tune_losses)
    curves = {"finetune": tune_losses}
    if enc_losses:
        _write_loss_csv(out / "encoder_loss.csv", enc_losses)
        curves["encoder"] = enc_losses
    if any(curves.values()):
        save_loss_curves(out / "loss.png", curves)
    _echo_config(out, "finetune", cfg, opts)
    _write_json(
        out / "summary.json",
        {
            "command": "finetune",
            "dataset": ds.name,
            "epochs": cfg.finetune_epochs,
            "final_loss": tune_losses[-1] if tune_losses else None,
            "frozen_digest": digest_after,
            "frozen_digest_unchanged": True,
            "model_digest": _file_digest(out / "model.ckpt"),
            "encoder_digest": _file_digest(out / "encoder.ckpt"),
            "runtime_seconds": time.perf_counter() - started,
        },
    )
    _write_timing(out, "finetune", time.perf_counter() - started)
    print(
        f"pipeline fine-tuned on {ds.name}: {cfg.finetune_epochs} epochs, "
        f"frozen digest unchanged -> {out}"
    )
    return 0


def _evaluate_one(
    cfg: PipelineConfig,
    opts: RunOptions,
    ds: ResolvedDataset,
    out: Path,
    model_dir: str | None,
) -> dict:
    """Fit (or load), evaluate, and write one dataset's outputs under out."""
    enc_losses: list[float] = []
    tune_losses: list[float] = []
    if model_dir:
        fitted = FittedPipeline.load(model_dir)
    else:
        train = subsample_training(ds.train, opts.fraction)
        fitted = fit(
            train, cfg, encoder_loss_log=enc_losses, finetune_loss_log=tune_losses
        )
        fitted.save(out / "model")

    policy = _policy_for(opts, ds)
    report, scores, predictions = fitted.evaluate(
        ds.test, ds.labels, policy, point_adjusted=opts.point_adjust
    )

    labels = None
    if ds.labels is not None:
        labels = np.asarray(ds.labels, dtype=bool)[: scores.shape[0]]
    payload = {"dataset": ds.name, **report.to_dict()}
    _write_json(out / "report.json", payload)
    _write_report_txt(
        out / "report.txt",
        {
            "dataset": ds.name,
            "precision": report.precision,
            "recall": report.recall,
            "f1": report.f1,
            "auc": report.auc,
            "auc_omitted_reason": report.auc_omitted_reason,
            "threshold": report.threshold,
            "threshold_policy": report.threshold_policy,
            "point_adjusted": report.point_adjusted,
            "n_scored": report.n_scored,
            "n_dropped": report.n_dropped,
        },
    )
    _write_scores_csv(out / "scores.csv", scores, predictions, labels)
    save_score_timeline(
        out / "scores.png",
        scores,
        threshold=report.threshold,
        labels=labels,
        predictions=predictions,
    )
    if tune_losses or enc_losses:
        curves = {}
        if enc_losses:
            curves["encoder"] = enc_losses
        if tune_losses:
            curves["finetune"] = tune_losses
        save_loss_curves(out / "loss.png", curves)

    payload["_scores"] = scores
    payload["_predictions"] = predictions
    payload["_labels"] = labels
    return payload


def _aggregate_reports(reports: list[dict], mode: str) -> dict:
    if mode == "average":
        f1s = [r["f1"] for r in reports if r["f1"] is not None and not np.isnan(r["f1"])]
        aucs = [r["auc"] for r in reports if r["auc"] is not None]
        return {
            "aggregation": "average",
            "n_datasets": len(reports),
            "f1": float(np.mean(f1s)) if f1s else None,
            "auc": float(np.mean(aucs)) if aucs else None,
        }
    # concat: pool timestamps across datasets, then measure once
    labeled = [r for r in reports if r["_labels"] is not None]
    out = {"aggregation": "concat", "n_datasets": len(reports), "f1": None, "auc": None}
    if labeled:
        preds = np.concatenate([r["_predictions"] for r in labeled])
        labels = np.concatenate([r["_labels"] for r in labeled])
        scores = np.concatenate([r["_scores"] for r in labeled])
        result = f1_score(preds, labels)
        out["f1"] = result.f1
        out["precision"] = result.precision
        out["recall"] = result.recall
        if labels.any() and not labels.all():
            out["auc"] = roc_auc(scores, labels)
    return out


def cmd_eval(args: argparse.Namespace) -> int:
    cfg, opts = resolve_run(args)
    _check_clobber(opts)
    started = time.perf_counter()
    datasets = resolve_datasets(opts, cfg)
    if args.model and len(datasets) != 1:
        raise ConfigError("--model applies to a single dataset, not a collection")

    out = opts.out
    if len(datasets) == 1:
        payload = _evaluate_one(cfg, opts, datasets[0], out, args.model)
        reports = [payload]
    else:
        reports = []
        for ds in datasets:
            reports.append(_evaluate_one(cfg, opts, ds, out / ds.name, None))
        aggregate = _aggregate_reports(reports, opts.aggregate)
        _write_json(
            out / "report.json",
            {
                "aggregate": {k: v for k, v in aggregate.items()},
                "datasets": {
                    r["dataset"]: {k: v for k, v in r.items() if not k.startswith("_")}
                    for r in reports
                },
            },
        )
        _write_report_txt(
            out / "report.txt",
            {"aggregation": aggregate["aggregation"], "f1": aggregate["f1"], "auc": aggregate["auc"]},
        )

    _echo_config(out, "eval", cfg, opts)
    _write_timing(out, "eval", time.perf_counter() - started)
    for r in reports:
        f1 = "n/a" if r["f1"] is None or np.isnan(r["f1"]) else f"{r['f1']:.4f}"
        auc = "n/a" if r["auc"] is None else f"{r['auc']:.4f}"
        print(f"{r['dataset']}: f1={f1} auc={auc} threshold={r['threshold']:.6g}")
    return 0


_ABLATION_VARIANTS = [
    ("full", {}),
    ("no_skip", {"include_skip_code": False}),
    ("no_feature", {"include_feature_term": False}),
]


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg, opts = resolve_run(args)
    _check_clobber(opts)
    started = time.perf_counter()
    ds = _single_dataset(resolve_datasets(opts, cfg), "ablate")
    train = subsample_training(ds.train, opts.fraction)

    rows = []
    for variant, flags in _ABLATION_VARIANTS:
        variant_cfg = dataclasses.replace(cfg, **flags)
        fitted = fit(train, variant_cfg)
        policy = _policy_for(opts, ds)
        report, _, _ = fitted.evaluate(
            ds.test, ds.labels, policy, point_adjusted=opts.point_adjust
        )
        rows.append(
            {
                "variant": variant,
                "f1": report.f1,
                "auc": report.auc,
                "precision": report.precision,
                "recall": report.recall,
                "threshold": report.threshold,
            }
        )

    out = opts.out
    _write_json(
        out / "report.json",
        {"dataset": ds.name, "seed": cfg.seed, "rows": rows},
    )
    _write_report_txt(
        out / "report.txt",
        {f"{row['variant']}_f1": row["f1"] for row in rows}
        | {f"{row['variant']}_auc": row["auc"] for row in rows},
    )
    save_ablation_bars(out / "ablation.png", rows)
    _echo_config(out, "ablate", cfg, opts)
    _write_timing(out, "ablate", time.perf_counter() - started)
    for row in rows:
        auc = "n/a" if row["auc"] is None else f"{row['auc']:.4f}"
        print(f"{row['variant']}: f1={row['f1']:.4f} auc={auc}")
    return 0


def cmd_sweep_n(args: argparse.Namespace) -> int:
    cfg, opts = resolve_run(args)
    _check_clobber(opts)
    started = time.perf_counter()
    if not args.n_list:
        raise ConfigError("--n-list is required (comma-separated negative counts)")
    try:
        n_values = [int(v) for v in args.n_list.split(",")]
    except ValueError:
        raise ConfigError(f"--n-list must be comma-separated integers, got '{args.n_list}'") from None
    if not n_values or any(n < 1 for n in n_values):
        raise ConfigError("--n-list needs positive integers")

    ds = _single_dataset(resolve_datasets(opts, cfg), "sweep-n")
    train = subsample_training(ds.train, opts.fraction)
    n_features = train.shape[1]

    rows = []
    for n in n_values:
        sweep_cfg = dataclasses.replace(cfg, n_negatives=n)
        fitted = fit(train, sweep_cfg)
        policy = _policy_for(opts, ds)
        report, _, _ = fitted.evaluate(
            ds.test, ds.labels, policy, point_adjusted=opts.point_adjust
        )
        rows.append(
            {
                "n_negatives": n,
                "f1": report.f1,
                "auc": report.auc,
                # negatives beyond the other-feature count reuse features
                "replacement_fallback": n > n_features - 1,
            }
        )

    out = opts.out
    out.mkdir(parents=True, exist_ok=True)
    csv_lines = ["n_negatives,f1,auc,replacement_fallback"]
    for row in rows:
        auc = "" if row["auc"] is None else repr(float(row["auc"]))
        csv_lines.append(
            f"{row['n_negatives']},{repr(float(row['f1']))},{auc},{int(row['replacement_fallback'])}"
        )
    (out / "sweep.csv").write_text("\n".join(csv_lines) + "\n")
    _write_json(out / "report.json", {"dataset": ds.name, "seed": cfg.seed, "rows": rows})
    save_sweep_curve(out / "sweep.png", n_values, rows)
    _echo_config(out, "sweep-n", cfg, opts)
    _write_timing(out, "sweep-n", time.perf_counter() - started)
    for row in rows:
        note = " (replacement fallback)" if row["replacement_fallback"] else ""
        print(f"N={row['n_negatives']}: f1={row['f1']:.4f}{note}")
    return 0


# -- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tripatch",
        description="Multivariate time-series anomaly detection workflows.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument(
            "--dataset",
            help="manifest path, directory of manifests, or 'synthetic[:key=value,...]'",
        )
        p.add_argument("--out", help="output directory (required)")
        p.add_argument("--overwrite", action="store_true", help="replace non-empty output directory")
        p.add_argument("--seed", type=int, help="root seed for the run")
        p.add_argument("--fraction", type=float, help="training prefix fraction in (0, 1]")
        p.add_argument("--n-negatives", type=int, dest="n_negatives")
        p.add_argument("--encoder-epochs", type=int, dest="encoder_epochs")
        p.add_argument("--finetune-epochs", type=int, dest="finetune_epochs")
        p.add_argument(
            "--threshold-policy",
            choices=("quantile", "best_f1"),
            dest="threshold_policy",
        )
        p.add_argument("--quantile", type=float, help="quantile for the quantile policy")
        p.add_argument("--point-adjust", action="store_true", dest="point_adjust")
        p.add_argument(
            "--ignore-labels",
            action="store_true",
            dest="ignore_labels",
            help="evaluate as if the dataset had no labels",
        )
        p.add_argument("--aggregate", choices=("average", "concat"))

    p = sub.add_parser("train-encoder", help="contrastive encoder pretraining only")
    common(p)
    p.set_defaults(func=cmd_train_encoder)

    p = sub.add_parser("finetune", help="train the full pipeline and save it")
    common(p)
    p.add_argument("--encoder-checkpoint", help="reuse a trained encoder checkpoint")
    p.add_argument("--init-checkpoint", help="fine-tune from an existing model checkpoint")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="fit (or load) and evaluate on the test split")
    common(p)
    p.add_argument("--model", help="directory of a saved pipeline to evaluate")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="full vs no-skip vs no-feature comparison")
    common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep-n", help="repeat training across negative-sample counts")
    common(p)
    p.add_argument("--n-list", help="comma-separated negative counts, e.g. 1,3,5")
    p.set_defaults(func=cmd_sweep_n)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NUMERIC_ERRORS as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
