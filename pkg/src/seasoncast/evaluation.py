"""Error metrics, horizon-bucketed reports and climate ablation comparisons.

Metrics pool residuals over every (entity, t, horizon step) point inside a
bucket before reducing; they are never averages of per-entity averages.
MAPE is reported as a fraction, not a percentage.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    AllTargetsNearZero,
    DataError,
    DimensionMismatch,
    HorizonMismatch,
    KeyMismatch,
    ZeroBaseMetric,
)

EPS_MAPE = 1e-6
BUCKETS = (("W1_4", 0, 4), ("W5_8", 4, 8), ("W9_12", 8, 12), ("Overall", 0, 12))
BUCKET_TITLES = {"W1_4": "week 1-4", "W5_8": "week 5-8", "W9_12": "week 9-12", "Overall": "Overall"}
METRICS = ("rmse", "mape", "mae")
REPORT_COLUMNS = ("dataset", "model", "bucket", "metric", "value")
SCENARIO_COLUMNS = ("product", "region", "metric", "value")

BETTER, TIE, WORSE = "Better", "Tie", "Worse"


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise DimensionMismatch(f"{y.shape} vs {yhat.shape}")
    return y, yhat


def mape_with_count(y, yhat) -> tuple[float, int]:
    y, yhat = _pair(y, yhat)
    ok = np.abs(y) >= EPS_MAPE
    if not ok.any():
        raise AllTargetsNearZero("every target is within EPS_MAPE of zero")
    err = np.abs(y[ok] - yhat[ok]) / np.maximum(np.abs(y[ok]), EPS_MAPE)
    return float(err.mean()), int(ok.sum())


def mape(y, yhat) -> float:
    """Mean absolute percentage error over targets with ``|y| >= EPS_MAPE``."""
    return mape_with_count(y, yhat)[0]


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


@dataclass(frozen=True)
class MetricBucket:
    label: str
    rmse: float
    mape: float
    mae: float
    n_points: int = 0
    n_mape_points: int = 0

    def metric(self, name: str) -> float:
        return getattr(self, name)


def bucketed_report(forecasts, truths) -> list[MetricBucket]:
    """Weeks 1-4, 5-8, 9-12 and Overall metrics for (N, 12) arrays."""
    f = np.asarray(forecasts, dtype=float)
    y = np.asarray(truths, dtype=float)
    if f.shape != y.shape:
        raise DimensionMismatch(f"{f.shape} vs {y.shape}")
    if f.ndim != 2 or f.shape[1] != 12:
        raise HorizonMismatch(f"bucketed report needs a 12-step horizon, got shape {f.shape}")
    out = []
    for label, lo, hi in BUCKETS:
        fy, yy = f[:, lo:hi], y[:, lo:hi]
        m, n_m = mape_with_count(yy, fy)
        out.append(MetricBucket(label, rmse(yy, fy), m, mae(yy, fy), yy.size, n_m))
    return out


def overall(report: Sequence[MetricBucket]) -> MetricBucket:
    for b in report:
        if b.label == "Overall":
            return b
    raise KeyMismatch("report has no Overall bucket")


@dataclass(frozen=True)
class ComparisonRow:
    dataset: str
    mape_reduction_pct: float
    rmse_reduction_pct: float
    mae_reduction_pct: float


def _reduction(base: float, variant: float, name: str) -> float:
    if base == 0:
        raise ZeroBaseMetric(f"base {name} is zero")
    return 100.0 * (base - variant) / base


def error_reduction(base_report, variant_report, dataset: str = "") -> ComparisonRow:
    """Percentage error reduction of the variant over the base (Overall bucket).

    Positive means the variant is better.
    """
    b, v = overall(base_report), overall(variant_report)
    return ComparisonRow(
        dataset,
        _reduction(b.mape, v.mape, "MAPE"),
        _reduction(b.rmse, v.rmse, "RMSE"),
        _reduction(b.mae, v.mae, "MAE"),
    )


@dataclass(frozen=True)
class ScenarioVerdict:
    scenario: tuple[str, str]  # (product, region)
    verdict: str


def win_tie_loss(climate: Mapping, base: Mapping):
    """Per-scenario verdicts comparing the climate model against the base.

    Each mapping goes scenario -> {"mape": .., "rmse": ..}. The climate model
    wins a metric when its error is lower or equal. Returns the verdicts and
    the share of each verdict in percent.
    """
    if set(climate) != set(base):
        raise KeyMismatch("climate and base reports cover different scenarios")
    verdicts = []
    for key in sorted(climate):
        wins = sum(climate[key][m] <= base[key][m] for m in ("mape", "rmse"))
        verdicts.append(ScenarioVerdict(tuple(key), {2: BETTER, 1: TIE, 0: WORSE}[wins]))
    n = len(verdicts)
    summary = {
        v: (100.0 * sum(x.verdict == v for x in verdicts) / n if n else 0.0) for v in (BETTER, TIE, WORSE)
    }
    return verdicts, summary


def scenario_metrics(entities: Sequence[str], forecasts, truths) -> dict[tuple[str, str], dict[str, float]]:
    """Overall metrics per (product, region) scenario; entities are ``region/product``."""
    f = np.asarray(forecasts, dtype=float)
    y = np.asarray(truths, dtype=float)
    groups: dict[tuple[str, str], list[int]] = {}
    for i, e in enumerate(entities):
        region, _, product = e.partition("/")
        groups.setdefault((product, region), []).append(i)
    out = {}
    for key, idx in sorted(groups.items()):
        out[key] = {"rmse": rmse(y[idx], f[idx]), "mape": mape(y[idx], f[idx]), "mae": mae(y[idx], f[idx])}
    return out


# -- rendering and files ------------------------------------------------------


def _cell(x: float) -> str:
    return "  -  " if x is None or not np.isfinite(x) else f"{x:.2f}"


def format_table(rows: Sequence[tuple[str, Sequence[MetricBucket]]]) -> str:
    """Aligned RMSE/MAPE table with one line per model, two decimals."""
    name_w = max([len("Algorithms")] + [len(n) for n, _ in rows])
    labels = [label for label, _, _ in BUCKETS]
    head1 = "Algorithms".ljust(name_w) + "".join(f" | {BUCKET_TITLES[lab]:^13}" for lab in labels)
    head2 = " " * name_w + "".join(f" | {'RMSE':>6}{'MAPE':>7}" for _ in labels)
    lines = [head1, head2, "-" * len(head2)]
    for name, report in rows:
        by = {b.label: b for b in report}
        cells = "".join(f" | {_cell(by[lab].rmse):>6}{_cell(by[lab].mape):>7}" for lab in labels)
        lines.append(name.ljust(name_w) + cells)
    return "\n".join(lines) + "\n"


def write_report(out_dir, dataset: str, model: str, report: Sequence[MetricBucket], notes: Sequence[str] = ()):
    """Write ``report.txt`` (table) and ``report.csv`` (long format)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = format_table([(model, report)])
    for b in report:
        text += f"{b.label}: MAE {b.mae:.4f}, points {b.n_points}, MAPE-admissible {b.n_mape_points}\n"
    text += "MAPE is a fraction (0.19 = 19%).\n"
    for line in notes:
        text += line + "\n"
    (out / "report.txt").write_text(text)
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for b in report:
            for m in METRICS:
                w.writerow([dataset, model, b.label, m, repr(b.metric(m))])


def read_report(path) -> tuple[str, str, list[MetricBucket]]:
    """Parse a ``report.csv``; returns ``(dataset, model, buckets)``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        for c in REPORT_COLUMNS:
            if c not in cols:
                raise DataError(f"{path}: missing column {c!r}")
        rows = list(reader)
    values: dict[str, dict[str, float]] = {}
    dataset = model = ""
    for r in rows:
        dataset, model = r["dataset"], r["model"]
        try:
            values.setdefault(r["bucket"], {})[r["metric"]] = float(r["value"])
        except ValueError:
            raise DataError(f"{path}: non-numeric value in column 'value': {r['value']!r}") from None
    buckets = []
    for label, _, _ in BUCKETS:
        if label not in values or any(m not in values[label] for m in METRICS):
            raise DataError(f"{path}: bucket {label} incomplete")
        v = values[label]
        buckets.append(MetricBucket(label, v["rmse"], v["mape"], v["mae"]))
    return dataset, model, buckets


def write_scenarios(path, scenarios: Mapping[tuple[str, str], Mapping[str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCENARIO_COLUMNS)
        for (product, region), metrics in sorted(scenarios.items()):
            for m in METRICS:
                w.writerow([product, region, m, repr(float(metrics[m]))])


def read_scenarios(path) -> dict[tuple[str, str], dict[str, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for c in SCENARIO_COLUMNS:
            if c not in (reader.fieldnames or []):
                raise DataError(f"{path}: missing column {c!r}")
        out: dict[tuple[str, str], dict[str, float]] = {}
        for r in reader:
            out.setdefault((r["product"], r["region"]), {})[r["metric"]] = float(r["value"])
    return out


def format_comparison(row: ComparisonRow, summary: Mapping[str, float] = None) -> str:
    lines = [
        f"{'Dataset':<24}{'MAPE':>8}{'RMSE':>8}{'MAE':>8}",
        f"{row.dataset:<24}{row.mape_reduction_pct:>8.2f}{row.rmse_reduction_pct:>8.2f}{row.mae_reduction_pct:>8.2f}",
    ]
    if summary is not None:
        lines.append(
            "scenarios: "
            + ", ".join(f"{k} {summary[k]:.1f}%" for k in (BETTER, TIE, WORSE))
            + f" (better or equal: {summary[BETTER] + summary[TIE]:.1f}%)"
        )
    return "\n".join(lines) + "\n"


def favorita_fixture() -> list[tuple[str, list[MetricBucket]]]:
    """Published Favorita results table as stored values (documentation only)."""
    raw = json.loads(resources.files("seasoncast.data").joinpath("favorita_table.json").read_text())
    rows = []
    for entry in raw["rows"]:
        buckets = [
            MetricBucket(label, entry[label]["rmse"], entry[label]["mape"], float("nan"))
            for label, _, _ in BUCKETS
        ]
        rows.append((entry["model"], buckets))
    return rows
