"""Synthetic weekly demand with planted climate sensitivity.

Each store has a seasonal temperature cycle plus an AR(1) anomaly. Seasonal
ensemble forecasts are issued every few weeks, centred on the true future
climate with member spread growing linearly with lead. Product demand is

    sales = base + seasonality + beta * (T_avg - store mean T) + noise

truncated at zero, with base, seasonality, beta and noise all scaled by the
product's level relative to ``base_level``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError
from .features import ATTRIBUTES, TARGET, Dataset, EnsembleForecast, write_dataset_files

ATTRIBUTE_SERIES = {"TAvg": "T_avg", "TMin": "T_min", "TMax": "T_max", "Precip": "P_avg"}
PERIOD = 52


@dataclass
class SynthConfig:
    n_stores: int = 20
    n_products: int = 10
    n_weeks: int = 150
    seed: int = 0
    start_date: str = "2014-01-06"  # a Monday
    # climate, degrees C
    temp_mean: float = 15.0
    temp_mean_spread: float = 6.0
    temp_amplitude: float = 8.0
    temp_amplitude_spread: float = 3.0
    anomaly_std: float = 3.0
    anomaly_persistence: float = 0.8
    diurnal_range: float = 9.0
    precip_mean: float = 20.0  # mm/week
    attributes: tuple[str, ...] = ("TAvg",)
    # ensembles
    n_members: int = 50
    n_leads: int = 16
    issue_every: int = 4
    member_noise_std: float = 0.6  # spread at lead 0; grows as (1 + 0.1 * lead)
    # demand, in units for a product at base_level
    base_level: float = 100.0
    base_level_spread: float = 0.5
    seasonality_amplitude: float = 15.0
    beta: float = 1.75  # units per degree C; oracle regression gains ~20% MAPE
    noise_std: float = 4.0

    def __post_init__(self):
        self.attributes = tuple(self.attributes)
        for a in self.attributes:
            if a not in ATTRIBUTES:
                raise ConfigError(f"unknown climate attribute {a!r}")
        if "TAvg" not in self.attributes:
            raise ConfigError("TAvg is required: demand depends on it")
        if self.n_members < 2:
            raise ConfigError("n_members must be >= 2")
        if min(self.n_stores, self.n_products, self.n_weeks) < 0 or self.n_leads < 1 or self.issue_every < 1:
            raise ConfigError("sizes must be non-negative and leads/issue cadence positive")
        if not 0 <= self.anomaly_persistence < 1:
            raise ConfigError("anomaly_persistence must lie in [0, 1)")
        for name in ("noise_std", "anomaly_std", "member_noise_std", "base_level"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attributes"] = list(self.attributes)
        return d


def lead_spread(cfg: SynthConfig, lead) -> np.ndarray:
    return cfg.member_noise_std * (1.0 + 0.1 * np.asarray(lead, dtype=float))


@dataclass
class SynthArtifacts:
    dataset: Dataset
    climate: dict[str, dict[str, np.ndarray]]  # store -> attribute -> true weekly values
    truth: dict = field(default_factory=dict)


def _ar1(rng, n, std, phi):
    out = np.empty(n)
    innov = std * np.sqrt(1.0 - phi**2)
    x = rng.normal(0.0, std)
    for i in range(n):
        out[i] = x
        x = phi * x + rng.normal(0.0, innov)
    return out


def generate(cfg: SynthConfig) -> SynthArtifacts:
    """Generate a dataset; fully determined by ``cfg`` (including its seed)."""
    rng = np.random.default_rng(cfg.seed)
    T = cfg.n_weeks
    dates = pd.date_range(cfg.start_date, periods=T, freq="7D")
    weeks = np.arange(T)
    series: dict[str, dict[str, np.ndarray]] = {}
    ensembles: dict[tuple[str, str], list[EnsembleForecast]] = {}
    climate: dict[str, dict[str, np.ndarray]] = {}
    truth = {"config": cfg.to_dict(), "stores": {}, "products": {}}
    if cfg.n_stores == 0 or cfg.n_products == 0:
        return SynthArtifacts(Dataset(dates, series, ensembles), climate, truth)

    horizon_weeks = np.arange(T + cfg.n_leads + 1)
    products = []
    for p in range(cfg.n_products):
        level = cfg.base_level * (1.0 + rng.uniform(-cfg.base_level_spread, cfg.base_level_spread))
        products.append({"id": f"P{p:02d}", "level": level, "phase": rng.uniform(0, PERIOD)})

    for s in range(cfg.n_stores):
        store = f"S{s:02d}"
        mean_t = cfg.temp_mean + rng.uniform(-cfg.temp_mean_spread, cfg.temp_mean_spread)
        amp = max(0.0, cfg.temp_amplitude + rng.uniform(-cfg.temp_amplitude_spread, cfg.temp_amplitude_spread))
        phase = rng.uniform(-4, 4)
        n_ext = len(horizon_weeks)
        seasonal = mean_t + amp * np.sin(2 * np.pi * (horizon_weeks - 13 + phase) / PERIOD)
        tavg = seasonal + _ar1(rng, n_ext, cfg.anomaly_std, cfg.anomaly_persistence)
        true = {"TAvg": tavg}
        true["TMin"] = tavg - cfg.diurnal_range / 2 + rng.normal(0, 0.5, n_ext)
        true["TMax"] = tavg + cfg.diurnal_range / 2 + rng.normal(0, 0.5, n_ext)
        true["Precip"] = np.maximum(0.0, cfg.precip_mean * (1 + 0.5 * np.sin(2 * np.pi * horizon_weeks / PERIOD))
                                    + rng.normal(0, cfg.precip_mean / 3, n_ext))
        climate[store] = {a: true[a][:T] for a in cfg.attributes}
        series[store] = {ATTRIBUTE_SERIES[a]: true[a][:T].copy() for a in cfg.attributes}

        leads = np.arange(1, cfg.n_leads + 1)
        for a in cfg.attributes:
            forecasts = []
            for issue in range(0, T, cfg.issue_every):
                centre = true[a][issue + leads]
                noise = rng.normal(size=(cfg.n_members, cfg.n_leads)) * lead_spread(cfg, leads)
                members = centre + noise
                if a == "Precip":
                    members = np.maximum(members, 0.0)
                forecasts.append(EnsembleForecast(store, a, issue, members))
            ensembles[(store, a)] = forecasts
        truth["stores"][store] = {"temp_mean": mean_t, "temp_amplitude": amp, "phase": phase}

        for prod in products:
            scale = prod["level"] / cfg.base_level
            seas = cfg.seasonality_amplitude * np.sin(2 * np.pi * (weeks + prod["phase"]) / PERIOD)
            climate_effect = cfg.beta * (tavg[:T] - mean_t)
            noise = rng.normal(0.0, cfg.noise_std, T)
            sales = np.maximum(0.0, scale * (cfg.base_level + seas + climate_effect + noise))
            series[f"{store}/{prod['id']}"] = {TARGET: sales}

    for prod in products:
        scale = prod["level"] / cfg.base_level
        truth["products"][prod["id"]] = {
            "level": prod["level"],
            "phase": prod["phase"],
            "beta": cfg.beta * scale,
            "noise_std": cfg.noise_std * scale,
        }
    return SynthArtifacts(Dataset(dates, series, ensembles), climate, truth)


def write_dataset(artifacts: SynthArtifacts, out_dir) -> list[Path]:
    """Write ``series.csv``, ``ensembles.csv`` and ``truth.json``."""
    out = Path(out_dir)
    series_path, ens_path = write_dataset_files(artifacts.dataset, out)
    truth_path = out / "truth.json"
    truth_path.write_text(json.dumps(artifacts.truth, sort_keys=True, indent=2) + "\n")
    return [series_path, ens_path, truth_path]


def oracle_mape_reduction(artifacts: SynthArtifacts, k: int = 12, horizon: int = 12) -> float:
    """MAPE reduction of a linear regression that sees the true future T_avg
    over the same regression without it.

    Both regressions predict ``(y[t+j] - y[t]) / m`` with ``m`` the mean of
    the last ``k + 1`` sales, from that window divided by ``m`` and annual
    harmonics of the target week; the oracle adds the true temperature at
    ``t`` and ``t + j``. They are fit on the first half of each series and
    scored on the second half. Returns a fraction.
    """
    ds = artifacts.dataset
    T = ds.n_times
    rows_blind, rows_clim, ys, last, level, split = [], [], [], [], [], []
    for entity in ds.entities():
        y = ds.series[entity][TARGET]
        temp = artifacts.climate[ds.location_of(entity)]["TAvg"]
        for t in range(k, T - horizon):
            hist = y[t - k : t + 1]
            m = max(hist.mean(), 1e-6)
            for j in range(1, horizon + 1):
                w = 2 * np.pi * (t + j) / PERIOD
                onehot = np.zeros(horizon)
                onehot[j - 1] = 1.0
                blind = np.concatenate([(hist - hist[-1]) / m, [np.sin(w), np.cos(w)], onehot])
                rows_blind.append(blind)
                rows_clim.append(np.concatenate([blind, [temp[t], temp[t + j]]]))
                ys.append((y[t + j] - hist[-1]) / m)
                last.append(hist[-1])
                level.append(m)
                split.append(t < T // 2)
    Xb, Xc = np.array(rows_blind), np.array(rows_clim)
    yv, lv, mv, tr = np.array(ys), np.array(last), np.array(level), np.array(split)
    truth = yv * mv + lv

    def score(X):
        X = np.column_stack([X, np.ones(len(X))])
        coef, *_ = np.linalg.lstsq(X[tr], yv[tr], rcond=None)
        pred = (X[~tr] @ coef) * mv[~tr] + lv[~tr]
        y_true = truth[~tr]
        ok = np.abs(y_true) >= 1e-6
        return np.mean(np.abs(y_true[ok] - pred[ok]) / np.abs(y_true[ok]))

    base, oracle = score(Xb), score(Xc)
    return float((base - oracle) / base)
