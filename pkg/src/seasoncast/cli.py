"""Command-line entry point: ``seasoncast {synth,ingest,train,evaluate,compare}``.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import baselines, evaluation, features, presets, synth, training
from .checkpoint import file_digest, read_checkpoint, write_checkpoint
from .errors import ConfigError, ConfigMismatch, DataError, NonFiniteLoss, SeasoncastError
from .features import SeriesKind
from .model import LrlSnn, ModelConfig, quantile_crossings
from .training import SplitSpec, TrainConfig

logger = logging.getLogger("seasoncast")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
DEFAULT_FRACTIONS = (0.5, 0.2, 0.3)
MODEL_LABELS = {
    "lrl-snn": "LRL-SNN",
    "persistence": "Persistence",
    "seasonal-naive": "Seasonal naive",
    "oracle": "Oracle",
}


class UsageError(SeasoncastError):
    pass


def _read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p}: invalid JSON ({exc})") from None


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _data_hash(data_dir: Path) -> str:
    h = hashlib.sha256()
    for name in (features.SERIES_FILE, features.ENSEMBLE_FILE):
        p = data_dir / name
        if p.exists():
            h.update(name.encode())
            h.update(file_digest(p).encode())
    return h.hexdigest()


def _quantiles(raw):
    if not raw:
        return ()
    try:
        return tuple(float(q) for q in raw.split(","))
    except ValueError:
        raise UsageError(f"--quantiles expects comma-separated numbers, got {raw!r}") from None


# -- commands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = synth.SynthConfig.from_dict(_read_json(args.config)) if args.config else synth.SynthConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    paths = synth.write_dataset(synth.generate(cfg), args.out)
    for p in paths:
        print(p)
    return 0


def cmd_ingest(args) -> int:
    """Convert a daily series file to the weekly input format."""
    src = Path(args.daily)
    if not src.is_file():
        raise DataError(f"{src}: not found")
    df = pd.read_csv(src, dtype={"entity_id": str, "series_id": str, "date": str}, float_precision="round_trip")
    missing = [c for c in features.SERIES_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"{src}: missing column(s) {', '.join(missing)}")
    df["date"] = pd.to_datetime(df["date"], format="ISO8601")
    rows = []
    for (entity, sid), g in df.groupby(["entity_id", "series_id"], sort=True):
        reducer = "sum" if sid in args.sum_series else "mean"
        weekly = features.weekly_aggregate(pd.Series(g["value"].to_numpy(), index=g["date"]), reducer)
        rows.append(pd.DataFrame({"entity_id": entity, "date": weekly.index.strftime("%Y-%m-%d"),
                                  "series_id": sid, "value": weekly.to_numpy()}))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = pd.concat(rows) if rows else pd.DataFrame(columns=features.SERIES_COLUMNS)
    result.to_csv(out / features.SERIES_FILE, index=False)
    print(out / features.SERIES_FILE)
    return 0


def _resolve_configs(args):
    quantiles = _quantiles(args.quantiles)
    model_cfg, train_cfg = presets.preset(args.preset, quantiles=quantiles)
    fractions = DEFAULT_FRACTIONS
    if args.config:
        raw = _read_json(args.config)
        if "model" in raw:
            model_cfg = ModelConfig.from_dict(raw["model"])
            if quantiles:
                model_cfg = ModelConfig.from_dict({**model_cfg.to_dict(), "quantiles": list(quantiles)})
        if "train" in raw:
            train_cfg = TrainConfig(**raw["train"])
        fractions = tuple(raw.get("split", {}).get("fractions", fractions))
    if args.seed is not None:
        train_cfg.seed = args.seed
    if model_cfg.quantiles:
        train_cfg.loss = "pinball"
    if args.no_climate:
        model_cfg = model_cfg.without_climate()
    return model_cfg, train_cfg, fractions


def cmd_train(args) -> int:
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    data_dir = Path(args.data)
    model_cfg, train_cfg, fractions = _resolve_configs(args)
    dataset = features.load_dataset(data_dir)
    samples, skipped = features.assemble_samples(
        dataset, model_cfg.features, model_cfg.lookback, model_cfg.horizon,
        target=model_cfg.target, workers=features.threads_from_env(),
    )
    if not samples:
        raise DataError(f"{data_dir}: no usable samples (skipped: {dict(skipped)})")
    split = SplitSpec.from_fractions([s.t for s in samples], fractions, model_cfg.horizon)
    train_s, dev_s, test_s = training.chronological_split(samples, split)

    kind = args.baseline or "lrl-snn"
    variant = "noclimate" if args.no_climate else "climate"
    hashes = {
        "model": model_cfg.config_hash(),
        "train": _sha(json.dumps(train_cfg.to_dict(), sort_keys=True)),
        "data": _data_hash(data_dir),
    }
    run_key = _sha(json.dumps({"kind": kind, "variant": variant, "hashes": hashes, "seed": train_cfg.seed},
                              sort_keys=True))
    run_id = f"{kind}-{variant}-{run_key[:12]}"
    run_dir = Path(args.out) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)

    ckpt = run_dir / "best.ckpt"
    history = None
    if kind == "lrl-snn":
        model = LrlSnn.init(model_cfg, train_cfg.seed)
        model, history = training.train(model, train_s, train_cfg, dev_s, log_path=run_dir / "train_log.jsonl")
        model.save(ckpt, train_cfg.seed)
        (run_dir / "history.json").write_text(_dump(history.to_dict()))
    else:
        write_checkpoint(ckpt, {}, {"kind": kind, "config_hash": hashes["model"], "seed": train_cfg.seed})

    run_config = {
        "kind": kind,
        "variant": variant,
        "dataset": data_dir.resolve().name,
        "model": model_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "split": {"fractions": list(fractions), "train_end": split.train_end,
                  "dev_end": split.dev_end, "horizon": split.horizon},
    }
    (run_dir / "config.json").write_text(_dump(run_config))
    features.write_skip_report(skipped, run_dir / "skipped.csv")
    manifest = {
        "run_id": run_id,
        "kind": kind,
        "variant": variant,
        "seed": train_cfg.seed,
        "hashes": hashes,
        "features": [{"id": f.id, "kind": f.kind.value} for f in model_cfg.features],
        "climate_features": [f.id for f in model_cfg.features if f.kind is SeriesKind.CLIMATE],
        "samples": {"train": len(train_s), "dev": len(dev_s), "test": len(test_s), "skipped": dict(skipped)},
        "best_epoch": None if history is None else history.best_epoch,
        "checkpoint_sha256": file_digest(ckpt),
        "artifacts": {"checkpoint": "best.ckpt", "config": "config.json", "skip_report": "skipped.csv",
                      **({"history": "history.json", "log": "train_log.jsonl"} if history else {})},
        "timestamps": {"started": started, "finished": datetime.now(timezone.utc).isoformat(timespec="seconds")},
    }
    (run_dir / "manifest.json").write_text(_dump(manifest))
    print(run_dir)
    return 0


def evaluate_run(checkpoint, data_dir):
    """Forecast the test split for a trained run; returns everything needed
    for the report files. Shared by the CLI and tests."""
    checkpoint = Path(checkpoint)
    run_config = _read_json(checkpoint.parent / "config.json")
    model_cfg = ModelConfig.from_dict(run_config["model"])
    header, _ = read_checkpoint(checkpoint)
    if header.get("config_hash") != model_cfg.config_hash():
        raise ConfigMismatch(f"{checkpoint}: checkpoint config hash does not match config.json")
    dataset = features.load_dataset(data_dir)
    samples, _ = features.assemble_samples(
        dataset, model_cfg.features, model_cfg.lookback, model_cfg.horizon,
        target=model_cfg.target, workers=features.threads_from_env(),
    )
    sp = run_config["split"]
    _, _, test = training.chronological_split(samples, SplitSpec(sp["train_end"], sp["dev_end"], sp["horizon"]))
    kind = header["kind"]
    notes = []
    if kind == "lrl-snn":
        model = LrlSnn.load(checkpoint, model_cfg)
        fc = model.predict_batch(test)
        preds = np.stack([f.point for f in fc])
        if model_cfg.quantiles:
            notes.append(f"quantile crossings: {quantile_crossings(fc)}")
    elif kind == "persistence":
        preds = baselines.persistence(test, model_cfg.horizon, model_cfg.target)
    elif kind == "seasonal-naive":
        preds, n_fb = baselines.seasonal_naive(test, dataset, model_cfg.horizon, model_cfg.target)
        notes.append(f"seasonal-naive persistence fallbacks: {n_fb}")
    elif kind == "oracle":
        preds = baselines.oracle(test)
    else:
        raise ConfigError(f"{checkpoint}: unknown model kind {kind!r}")
    truths = np.stack([s.target for s in test])
    label = MODEL_LABELS[kind]
    if kind == "lrl-snn" and run_config["variant"] == "climate":
        label += " + Climate"
    return {
        "dataset": run_config["dataset"],
        "model": label,
        "entities": [s.entity for s in test],
        "forecasts": preds,
        "truths": truths,
        "notes": notes,
    }


def cmd_evaluate(args) -> int:
    res = evaluate_run(args.checkpoint, args.data)
    report = evaluation.bucketed_report(res["forecasts"], res["truths"])
    out = Path(args.out)
    evaluation.write_report(out, res["dataset"], res["model"], report, res["notes"])
    evaluation.write_scenarios(out / "scenarios.csv",
                               evaluation.scenario_metrics(res["entities"], res["forecasts"], res["truths"]))
    print(out / "report.txt")
    return 0


def cmd_compare(args) -> int:
    dataset, _, base = evaluation.read_report(args.base)
    _, _, variant = evaluation.read_report(args.variant)
    row = evaluation.error_reduction(base, variant, dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = None
    if args.base_scenarios or args.variant_scenarios:
        if not (args.base_scenarios and args.variant_scenarios):
            raise UsageError("--base-scenarios and --variant-scenarios must be given together")
        verdicts, summary = evaluation.win_tie_loss(
            evaluation.read_scenarios(args.variant_scenarios), evaluation.read_scenarios(args.base_scenarios)
        )
        with open(out / "verdicts.csv", "w") as fh:
            fh.write("product,region,verdict\n")
            for v in verdicts:
                fh.write(f"{v.scenario[0]},{v.scenario[1]},{v.verdict}\n")
    with open(out / "comparison.csv", "w") as fh:
        fh.write("dataset,mape_reduction_pct,rmse_reduction_pct,mae_reduction_pct\n")
        fh.write(f"{row.dataset},{row.mape_reduction_pct!r},{row.rmse_reduction_pct!r},{row.mae_reduction_pct!r}\n")
    text = evaluation.format_comparison(row, summary)
    (out / "comparison.txt").write_text(text)
    sys.stdout.write(text)
    return 0


# -- wiring ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seasoncast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", help="synth config JSON (defaults built in)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="aggregate a daily series file to weeks")
    p.add_argument("--daily", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sum-series", nargs="*", default=[features.TARGET],
                   help="series ids summed per week; all others are averaged")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model or register a baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="run config JSON with optional model/train/split sections")
    p.add_argument("--preset", default="desk", choices=sorted(presets.PRESETS))
    p.add_argument("--seed", type=int)
    p.add_argument("--no-climate", action="store_true", help="drop every climate feature")
    p.add_argument("--baseline", choices=baselines.KINDS)
    p.add_argument("--quantiles", help="e.g. 0.1,0.5,0.9 (pinball loss)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="bucketed test-split report for a run")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="error reduction of VARIANT over BASE")
    p.add_argument("base", help="report.csv of the climate-agnostic model")
    p.add_argument("variant", help="report.csv of the climate-aware model")
    p.add_argument("--base-scenarios")
    p.add_argument("--variant-scenarios")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigMismatch as exc:
        print(f"seasoncast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, ConfigError) as exc:
        print(f"seasoncast: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLoss as exc:
        print(f"seasoncast: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SeasoncastError, OSError) as exc:
        print(f"seasoncast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
