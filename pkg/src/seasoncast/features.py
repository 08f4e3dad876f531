"""Feature windows, ensemble statistics and sample assembly.

Time is a weekly calendar index ``0..T-1``. For a sample anchored at ``t`` with
lookback ``k``, an Observed window covers ``t-k..t`` and a Climate or Known
window covers ``t-k..t+offset``.

Climate windows are stitched: the part up to ``t`` comes from the observed
climate series (the past is known, so std features are zero there) and the
part after ``t`` from the ensemble statistics of the most recent forecast
issued at or before ``t``.
"""

from __future__ import annotations

import bisect
import csv
import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import (
    ConfigError,
    DataError,
    EmptySeries,
    InsufficientForecast,
    InsufficientHistory,
    MissingValue,
    NoForecastVintage,
    TooFewMembers,
    WindowError,
)

logger = logging.getLogger(__name__)

SERIES_FILE = "series.csv"
ENSEMBLE_FILE = "ensembles.csv"
SERIES_COLUMNS = ("entity_id", "date", "series_id", "value")
ENSEMBLE_COLUMNS = ("location", "attribute", "issue_date", "lead_week", "member_idx", "value")

ATTRIBUTES = ("TMin", "TAvg", "TMax", "Precip")

# climate feature id -> (ensemble attribute, statistic)
CLIMATE_FEATURES = {
    "T_min": ("TMin", "mean"),
    "T_avg": ("TAvg", "mean"),
    "T_max": ("TMax", "mean"),
    "P_avg": ("Precip", "mean"),
    "sigma(T_min)": ("TMin", "std"),
    "sigma(T_avg)": ("TAvg", "std"),
    "sigma(T_max)": ("TMax", "std"),
    "sigma(P_avg)": ("Precip", "std"),
}
KNOWN_FEATURES = ("W_nbr", "M_nbr")
TARGET = "P_sales"


class SeriesKind(str, Enum):
    OBSERVED = "observed"
    CLIMATE = "climate"
    KNOWN = "known"


@dataclass(frozen=True)
class FeatureSpec:
    id: str
    kind: SeriesKind
    offset: int = 0
    apply_diff: bool = True
    apply_norm: bool = True
    encoder: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", SeriesKind(self.kind))
        object.__setattr__(self, "encoder", tuple(int(n) for n in self.encoder))
        if self.offset < 0:
            raise ConfigError(f"{self.id}: offset must be >= 0")
        if self.kind is SeriesKind.OBSERVED and self.offset != 0:
            raise ConfigError(f"{self.id}: observed features must have offset 0")
        if self.kind is SeriesKind.CLIMATE and self.id not in CLIMATE_FEATURES:
            raise ConfigError(f"unknown climate feature {self.id!r}")
        if self.kind is SeriesKind.KNOWN and self.id not in KNOWN_FEATURES:
            raise ConfigError(f"unknown known feature {self.id!r}")

    @property
    def is_std(self) -> bool:
        return self.kind is SeriesKind.CLIMATE and CLIMATE_FEATURES[self.id][1] == "std"

    def window_length(self, k: int) -> int:
        return k + 1 + self.offset

    def input_dim(self, k: int) -> int:
        return self.window_length(k) - int(self.apply_diff)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "offset": self.offset,
            "apply_diff": self.apply_diff,
            "apply_norm": self.apply_norm,
            "encoder": list(self.encoder),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(**{**d, "encoder": tuple(d.get("encoder", ()))})


def climate_spec(feature_id: str, offset: int, encoder: Sequence[int] = ()) -> FeatureSpec:
    """Climate spec with the default pipeline flags: level features are
    differenced and normalized, uncertainty (std) features pass through raw."""
    level = CLIMATE_FEATURES[feature_id][1] == "mean"
    return FeatureSpec(feature_id, SeriesKind.CLIMATE, offset, level, level, tuple(encoder))


@dataclass(frozen=True)
class EnsembleForecast:
    location: str
    attribute: str
    issue_time: int
    members: np.ndarray  # (n_members, n_leads); lead l covers index issue_time + l
    lead_unit: str = "weeks"

    @property
    def n_members(self) -> int:
        return self.members.shape[0]

    @property
    def n_leads(self) -> int:
        return self.members.shape[1]

    @cached_property
    def stats(self) -> tuple[np.ndarray, np.ndarray]:
        return ensemble_stats(self)


def ensemble_stats(f: EnsembleForecast) -> tuple[np.ndarray, np.ndarray]:
    """Per-lead member mean and population standard deviation."""
    m = np.asarray(f.members, dtype=float)
    if m.ndim != 2 or m.shape[0] < 2:
        raise TooFewMembers(f"need >= 2 members, got shape {m.shape}")
    return m.mean(axis=0), m.std(axis=0)


def weekly_aggregate(daily: pd.Series, reducer: str = "sum") -> pd.Series:
    """Aggregate a daily series into ISO weeks (Monday-labelled).

    Only complete weeks are kept, so partial leading/trailing weeks drop out.
    Use ``sum`` for sales and ``mean`` for climate.
    """
    if reducer not in ("sum", "mean"):
        raise ValueError(f"reducer must be 'sum' or 'mean', got {reducer!r}")
    daily = daily.dropna()
    if daily.empty:
        raise EmptySeries("no daily values to aggregate")
    idx = pd.DatetimeIndex(daily.index).normalize()
    if idx.has_duplicates:
        raise ValueError("daily series has duplicate dates")
    values = pd.Series(daily.to_numpy(dtype=float), index=idx)
    grouped = values.groupby(idx - pd.to_timedelta(idx.weekday, unit="D"))
    agg = grouped.sum() if reducer == "sum" else grouped.mean()
    agg = agg[grouped.count() == 7]
    agg.index = pd.DatetimeIndex(agg.index, name="week")
    return agg


def build_window(series, t: int, spec: FeatureSpec, k: int) -> np.ndarray:
    """Slice ``series[t-k : t+offset]`` (inclusive) for one feature."""
    series = np.asarray(series, dtype=float)
    start, end = t - k, t + spec.offset
    if start < 0:
        raise InsufficientHistory(f"{spec.id}: window start {start} precedes series start")
    if end >= len(series):
        if spec.kind is SeriesKind.OBSERVED:
            raise InsufficientHistory(f"{spec.id}: t={t} beyond series end")
        raise InsufficientForecast(f"{spec.id}: needs index {end}, series ends at {len(series) - 1}")
    w = series[start : end + 1]
    if not np.isfinite(w).all():
        raise MissingValue(f"{spec.id}: missing values in window ending at {end}")
    return w


@dataclass
class Dataset:
    """Weekly series keyed by entity plus ensemble forecasts keyed by location.

    Product-level entities are named ``"<location>/<product>"``; observed
    climate lives under the bare location id.
    """

    dates: pd.DatetimeIndex
    series: dict[str, dict[str, np.ndarray]]
    ensembles: dict[tuple[str, str], list[EnsembleForecast]] = field(default_factory=dict)

    def __post_init__(self):
        # stable sort keeps file order among equal issue times
        self.ensembles = {k: sorted(v, key=lambda f: f.issue_time) for k, v in self.ensembles.items()}
        self._issues = {k: [f.issue_time for f in v] for k, v in self.ensembles.items()}
        self._known: dict[tuple[str, int], np.ndarray] = {}

    @property
    def n_times(self) -> int:
        return len(self.dates)

    def entities(self, target: str = TARGET) -> list[str]:
        return sorted(e for e, s in self.series.items() if target in s)

    @staticmethod
    def location_of(entity: str) -> str:
        return entity.split("/", 1)[0]

    def known_series(self, feature_id: str, length: int) -> np.ndarray:
        key = (feature_id, length)
        if key not in self._known:
            dates = self.dates[0] + pd.to_timedelta(7 * np.arange(length), unit="D")
            if feature_id == "W_nbr":
                vals = dates.isocalendar().week.to_numpy(dtype=float)
            elif feature_id == "M_nbr":
                vals = dates.month.to_numpy(dtype=float)
            else:
                raise ConfigError(f"unknown known feature {feature_id!r}")
            self._known[key] = vals
        return self._known[key]

    def vintage(self, location: str, attribute: str, t: int) -> EnsembleForecast:
        """Latest forecast issued at or before ``t`` (ties: last in file order)."""
        issues = self._issues.get((location, attribute))
        if not issues:
            raise NoForecastVintage(f"no {attribute} forecasts for {location}")
        i = bisect.bisect_right(issues, t) - 1
        if i < 0:
            raise NoForecastVintage(f"no {attribute} forecast for {location} issued by t={t}")
        return self.ensembles[(location, attribute)][i]

    def climate_series(self, location: str, spec: FeatureSpec, t: int) -> np.ndarray:
        attribute, stat = CLIMATE_FEATURES[spec.id]
        if stat == "std":
            hist = np.zeros(t + 1)
        else:
            obs = self.series.get(location, {}).get(spec.id)
            if obs is None:
                raise MissingValue(f"no observed {spec.id} series for {location}")
            hist = obs[: t + 1]
        if spec.offset == 0:
            return hist
        f = self.vintage(location, attribute, t)
        values = f.stats[0] if stat == "mean" else f.stats[1]
        first_lead = t + 1 - f.issue_time
        future = values[first_lead - 1 : first_lead - 1 + spec.offset]
        return np.concatenate([hist, future])


@dataclass
class Sample:
    entity: str
    t: int
    windows: dict[str, np.ndarray]
    ends: dict[str, int]
    target: Optional[np.ndarray] = None


def feature_window(dataset: Dataset, entity: str, spec: FeatureSpec, t: int, k: int) -> np.ndarray:
    if spec.kind is SeriesKind.OBSERVED:
        s = dataset.series[entity].get(spec.id)
        if s is None:
            raise MissingValue(f"{entity} has no series {spec.id!r}")
        # never hand anything after t to the slicer
        return build_window(s[: t + 1], t, spec, k)
    if spec.kind is SeriesKind.KNOWN:
        return build_window(dataset.known_series(spec.id, dataset.n_times + spec.offset), t, spec, k)
    return build_window(dataset.climate_series(dataset.location_of(entity), spec, t), t, spec, k)


def _entity_samples(dataset, entity, specs, k, horizon, target, with_target, t_values):
    samples, skipped = [], Counter()
    y = dataset.series[entity][target]
    last = dataset.n_times - 1 - (horizon if with_target else 0)
    ts = range(k, last + 1) if t_values is None else [t for t in t_values if k <= t <= last]
    for t in ts:
        try:
            windows = {s.id: feature_window(dataset, entity, s, t, k) for s in specs}
        except WindowError as exc:
            skipped[exc.cause] += 1
            continue
        tgt = None
        if with_target:
            tgt = y[t + 1 : t + 1 + horizon]
            if not np.isfinite(tgt).all():
                skipped["missing_target"] += 1
                continue
        ends = {s.id: t + s.offset for s in specs}
        samples.append(Sample(entity, t, windows, ends, tgt))
    return samples, skipped


def assemble_samples(
    dataset: Dataset,
    specs: Sequence[FeatureSpec],
    k: int,
    horizon: int,
    target: str = TARGET,
    with_target: bool = True,
    workers: Optional[int] = None,
    t_values: Optional[Iterable[int]] = None,
) -> tuple[list[Sample], Counter]:
    """Build one sample per (entity, valid t), skipping and counting failures.

    Output is entity-sorted then time-sorted regardless of ``workers``.
    """
    if target not in [s.id for s in specs if s.kind is SeriesKind.OBSERVED]:
        raise ConfigError(f"target {target!r} must be an observed feature")
    if len({s.id for s in specs}) != len(specs):
        raise ConfigError("feature ids must be unique")
    t_values = None if t_values is None else sorted(set(t_values))
    entities = dataset.entities(target)

    def work(entity):
        return _entity_samples(dataset, entity, specs, k, horizon, target, with_target, t_values)

    workers = workers or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, entities))
    else:
        parts = [work(e) for e in entities]
    samples: list[Sample] = []
    skipped: Counter = Counter()
    for s, c in parts:
        samples.extend(s)
        skipped.update(c)
    if skipped:
        logger.info("skipped samples: %s", dict(sorted(skipped.items())))
    return samples, skipped


def write_skip_report(skipped: Counter, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cause", "count"])
        for cause, n in sorted(skipped.items()):
            w.writerow([cause, n])


# -- file formats ---------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset_files(dataset: Dataset, out_dir) -> tuple[Path, Path]:
    """Write ``series.csv`` and ``ensembles.csv`` (deterministic bytes)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dates = [d.strftime("%Y-%m-%d") for d in dataset.dates]
    series_path = out / SERIES_FILE
    with open(series_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for entity in sorted(dataset.series):
            for sid in sorted(dataset.series[entity]):
                for d, v in zip(dates, dataset.series[entity][sid]):
                    if np.isfinite(v):
                        w.writerow([entity, d, sid, _fmt(v)])
    ens_path = out / ENSEMBLE_FILE
    with open(ens_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENSEMBLE_COLUMNS)
        for key in sorted(dataset.ensembles):
            for f in dataset.ensembles[key]:
                issue = (dataset.dates[0] + pd.Timedelta(days=7 * f.issue_time)).strftime("%Y-%m-%d")
                for member in range(f.n_members):
                    for lead in range(f.n_leads):
                        w.writerow([f.location, f.attribute, issue, lead + 1, member, _fmt(f.members[member, lead])])
    return series_path, ens_path


def _require_columns(df: pd.DataFrame, columns: Sequence[str], path) -> None:
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")


def load_dataset(data_dir) -> Dataset:
    """Read ``series.csv`` (required) and ``ensembles.csv`` (optional)."""
    data_dir = Path(data_dir)
    series_path = data_dir / SERIES_FILE
    if not series_path.exists():
        raise DataError(f"{series_path}: not found")
    df = pd.read_csv(series_path, dtype={"entity_id": str, "series_id": str, "date": str},
                     float_precision="round_trip")
    _require_columns(df, SERIES_COLUMNS, series_path)
    df["date"] = pd.to_datetime(df["date"], format="ISO8601")
    dates = pd.DatetimeIndex(sorted(df["date"].unique()))
    if len(dates) == 0:
        dates = pd.DatetimeIndex([])
    elif len(dates) > 1 and not (np.diff(dates.asi8) == 7 * 86400 * 10**9).all():
        raise DataError(f"{series_path}: dates must form a gap-free weekly calendar")
    pos = pd.Series(np.arange(len(dates)), index=dates)
    series: dict[str, dict[str, np.ndarray]] = {}
    for (entity, sid), g in df.groupby(["entity_id", "series_id"], sort=True):
        arr = np.full(len(dates), np.nan)
        arr[pos[g["date"]].to_numpy()] = g["value"].to_numpy(dtype=float)
        series.setdefault(entity, {})[sid] = arr

    ensembles: dict[tuple[str, str], list[EnsembleForecast]] = {}
    ens_path = data_dir / ENSEMBLE_FILE
    if ens_path.exists() and len(dates):
        edf = pd.read_csv(ens_path, dtype={"location": str, "attribute": str, "issue_date": str},
                          float_precision="round_trip")
        _require_columns(edf, ENSEMBLE_COLUMNS, ens_path)
        issue = pd.to_datetime(edf["issue_date"], format="ISO8601")
        offset_days = (issue - dates[0]).dt.days.to_numpy()
        if (offset_days % 7).any():
            raise DataError(f"{ens_path}: issue dates must fall on the weekly calendar")
        edf["issue_time"] = offset_days // 7
        for (loc, attr, it), g in edf.groupby(["location", "attribute", "issue_time"], sort=True):
            members = g["member_idx"].to_numpy(dtype=int)
            leads = g["lead_week"].to_numpy(dtype=int)
            grid = np.full((members.max() + 1, leads.max()), np.nan)
            grid[members, leads - 1] = g["value"].to_numpy(dtype=float)
            if not np.isfinite(grid).all():
                raise DataError(f"{ens_path}: incomplete member x lead grid for {loc}/{attr}/{it}")
            ensembles.setdefault((loc, attr), []).append(EnsembleForecast(loc, attr, int(it), grid))
    return Dataset(dates, series, ensembles)


def threads_from_env(default: int = 1) -> int:
    raw = os.environ.get("SEASONCAST_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"SEASONCAST_THREADS must be an integer, got {raw!r}") from None
