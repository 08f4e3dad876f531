"""LRL-SNN forecaster: per-feature temporal encoders over transformed
windows, a concatenated latent vector, a shared dense trunk, and an output
head whose predictions are mapped back to sales units by inverting the target
window's normalization and differencing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import nn
from .checkpoint import read_checkpoint, write_checkpoint
from .errors import ConfigError, ConfigMismatch, DimensionMismatch, InvalidQuantile
from .features import TARGET, FeatureSpec, Sample, SeriesKind
from .transforms import DiffMeta, NormMeta, difference, invert_difference, invert_normalize, normalize

TRUNK_WIRINGS = ("single",)


@dataclass(frozen=True)
class ModelConfig:
    features: tuple[FeatureSpec, ...]
    trunk: tuple[int, ...]
    horizon: int = 12
    lookback: int = 12
    dropout_rate: float = 0.2
    quantiles: tuple[float, ...] = ()  # empty -> point forecast
    target: str = TARGET
    # "single" = one shared trunk; a separate concatenation FFN ahead of the
    # trunk is recognised in configs but not supported.
    trunk_wiring: str = "single"

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "trunk", tuple(int(n) for n in self.trunk))
        object.__setattr__(self, "quantiles", tuple(float(q) for q in self.quantiles))
        if self.trunk_wiring not in TRUNK_WIRINGS:
            raise ConfigError(f"trunk wiring {self.trunk_wiring!r} is not supported (only 'single')")
        ids = [f.id for f in self.features]
        if len(set(ids)) != len(ids):
            raise ConfigError("feature ids must be unique")
        target = [f for f in self.features if f.id == self.target]
        if not target or target[0].kind is not SeriesKind.OBSERVED:
            raise ConfigError(f"target {self.target!r} must be an observed feature")
        for f in self.features:
            if f.offset > self.horizon:
                raise ConfigError(f"{f.id}: offset {f.offset} exceeds horizon {self.horizon}")
            if f.input_dim(self.lookback) < 1:
                raise ConfigError(f"{f.id}: window too short for lookback {self.lookback}")
        for q in self.quantiles:
            if not 0.0 < q < 1.0:
                raise InvalidQuantile(f"quantile {q} outside (0, 1)")
        if self.horizon < 1 or self.lookback < 1:
            raise ConfigError("horizon and lookback must be positive")

    @property
    def n_quantiles(self) -> int:
        return max(1, len(self.quantiles))

    @property
    def n_outputs(self) -> int:
        return self.horizon * self.n_quantiles

    def latent_dim(self, spec: FeatureSpec) -> int:
        return spec.encoder[-1] if spec.encoder else spec.input_dim(self.lookback)

    @property
    def latent_layout(self) -> list[tuple[str, int]]:
        return [(f.id, self.latent_dim(f)) for f in self.features]

    def without_climate(self) -> "ModelConfig":
        return replace(self, features=tuple(f for f in self.features if f.kind is not SeriesKind.CLIMATE))

    def to_dict(self) -> dict:
        return {
            "features": [f.to_dict() for f in self.features],
            "trunk": list(self.trunk),
            "horizon": self.horizon,
            "lookback": self.lookback,
            "dropout_rate": self.dropout_rate,
            "quantiles": list(self.quantiles),
            "target": self.target,
            "trunk_wiring": self.trunk_wiring,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["features"] = tuple(FeatureSpec.from_dict(f) for f in d["features"])
        return cls(**d)

    def config_hash(self) -> str:
        raw = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()


@dataclass
class Forecast:
    entity: str
    t: int
    values: np.ndarray  # (n_quantiles, horizon), sales units
    quantiles: tuple[float, ...] = ()

    @property
    def point(self) -> np.ndarray:
        if not self.quantiles:
            return self.values[0]
        if 0.5 in self.quantiles:
            return self.values[self.quantiles.index(0.5)]
        return self.values[len(self.quantiles) // 2]


@dataclass
class Batch:
    entities: list[str]
    ts: np.ndarray
    windows: dict[str, np.ndarray]  # id -> (N, window_length)
    targets: Optional[np.ndarray]  # (N, horizon)

    def __len__(self) -> int:
        return len(self.entities)

    def take(self, idx) -> "Batch":
        return Batch(
            [self.entities[i] for i in idx],
            self.ts[idx],
            {k: v[idx] for k, v in self.windows.items()},
            None if self.targets is None else self.targets[idx],
        )


def stack_samples(samples: Sequence[Sample], config: ModelConfig) -> Batch:
    ids = [f.id for f in config.features]
    windows = {}
    for f in config.features:
        if samples:
            windows[f.id] = np.stack([s.windows[f.id] for s in samples])
        else:
            windows[f.id] = np.empty((0, f.window_length(config.lookback)))
    has_target = bool(samples) and all(s.target is not None for s in samples)
    targets = np.stack([s.target for s in samples]) if has_target else None
    for i in ids:
        if windows[i].shape[1] != next(f for f in config.features if f.id == i).window_length(config.lookback):
            raise DimensionMismatch(f"{i}: window length {windows[i].shape[1]} does not match config")
    return Batch([s.entity for s in samples], np.array([s.t for s in samples], dtype=int), windows, targets)


def transform_window(w, spec: FeatureSpec):
    """Apply the feature's optional differencing then normalization."""
    diff_meta = norm_meta = None
    x = np.asarray(w, dtype=float)
    if spec.apply_diff:
        x, diff_meta = difference(x)
    if spec.apply_norm:
        x, norm_meta = normalize(x)
    return x, diff_meta, norm_meta


def encode_feature(window, spec: FeatureSpec, encoder: nn.Mlp, training: bool = False, rng=None):
    """Transform one feature window (or a stack of them) and run its encoder.

    Returns ``(latent, (diff_meta, norm_meta))``.
    """
    x, dm, nm = transform_window(window, spec)
    if x.shape[-1] != encoder.in_dim:
        raise DimensionMismatch(f"{spec.id}: transformed width {x.shape[-1]} != encoder input {encoder.in_dim}")
    h, _ = nn.forward(encoder, x, training, rng)
    return h, (dm, nm)


@dataclass
class ForwardCache:
    enc_caches: list
    trunk_cache: nn.ForwardCache
    scale: np.ndarray  # (N,) floored target-window sigma
    anchor: np.ndarray  # (N,) last observed target value


class LrlSnn:
    def __init__(self, config: ModelConfig, encoders: dict[str, nn.Mlp], trunk: nn.Mlp):
        self.config = config
        self.encoders = encoders
        self.trunk = trunk
        width = sum(d for _, d in config.latent_layout)
        if trunk.in_dim != width:
            raise DimensionMismatch(f"trunk input {trunk.in_dim} != latent width {width}")
        if trunk.out_dim != config.n_outputs:
            raise DimensionMismatch(f"head output {trunk.out_dim} != {config.n_outputs}")

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "LrlSnn":
        rng = np.random.default_rng(seed)
        encoders = {}
        for f in config.features:
            sizes = [f.input_dim(config.lookback), *f.encoder]
            encoders[f.id] = nn.init_mlp(sizes, rng, config.dropout_rate)
        width = sum(d for _, d in config.latent_layout)
        trunk = nn.init_mlp([width, *config.trunk, config.n_outputs], rng, config.dropout_rate)
        return cls(config, encoders, trunk)

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for f in self.config.features:
            for i, layer in enumerate(self.encoders[f.id].layers):
                out += [(f"encoder/{f.id}/{i}/weights", layer.weights), (f"encoder/{f.id}/{i}/biases", layer.biases)]
        for i, layer in enumerate(self.trunk.layers):
            out += [(f"trunk/{i}/weights", layer.weights), (f"trunk/{i}/biases", layer.biases)]
        return out

    def parameters(self) -> list[np.ndarray]:
        return [p for _, p in self.named_parameters()]

    def copy_parameters(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def load_parameters(self, values: Sequence[np.ndarray]) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise DimensionMismatch("parameter count mismatch")
        for p, v in zip(params, values):
            if p.shape != np.shape(v):
                raise DimensionMismatch(f"parameter shape {p.shape} vs {np.shape(v)}")
            p[...] = v

    # -- computation --------------------------------------------------------

    def forward_batch(self, batch: Batch, training: bool = False, rng=None):
        """Return ``(yhat, cache)`` with ``yhat`` shaped (N, n_quantiles, horizon)."""
        cfg = self.config
        latents, enc_caches = [], []
        for f in cfg.features:
            x, _, _ = transform_window(batch.windows[f.id], f)
            h, c = nn.forward(self.encoders[f.id], x, training, rng)
            latents.append(h)
            enc_caches.append(c)
        H = np.concatenate(latents, axis=1)
        P, trunk_cache = nn.forward(self.trunk, H, training, rng)
        P = P.reshape(len(batch), cfg.n_quantiles, cfg.horizon)

        target = batch.windows[cfg.target]
        d, _ = difference(target)
        _, norm_meta = normalize(d)
        anchor = target[:, -1]
        Q = invert_normalize(P, NormMeta(norm_meta.mu[:, None], norm_meta.sigma[:, None]))
        yhat = invert_difference(Q, DiffMeta(anchor[:, None]))[..., 1:]
        return yhat, ForwardCache(enc_caches, trunk_cache, np.asarray(norm_meta.scale), anchor)

    def backward_batch(self, cache: ForwardCache, grad_yhat: np.ndarray) -> list[np.ndarray]:
        """Gradients of the loss w.r.t. ``parameters()`` given dL/d yhat."""
        cfg = self.config
        # yhat_j = anchor + sum_{i<=j} (P_i * scale + mu)
        gP = np.cumsum(grad_yhat[..., ::-1], axis=-1)[..., ::-1] * cache.scale[:, None, None]
        trunk_grads, gH = nn.backward(self.trunk, cache.trunk_cache, gP.reshape(len(gP), -1))
        grads, start = [], 0
        for f, c in zip(cfg.features, cache.enc_caches):
            width = cfg.latent_dim(f)
            g, _ = nn.backward(self.encoders[f.id], c, gH[:, start : start + width])
            grads += g
            start += width
        return grads + trunk_grads

    def forward(self, sample: Sample, training: bool = False, rng=None) -> Forecast:
        batch = stack_samples([sample], self.config)
        yhat, _ = self.forward_batch(batch, training, rng)
        return Forecast(sample.entity, sample.t, yhat[0], self.config.quantiles)

    def predict_batch(self, samples: Sequence[Sample], chunk: int = 4096) -> list[Forecast]:
        """Inference-mode forecasts in input order."""
        out: list[Forecast] = []
        for i in range(0, len(samples), chunk):
            part = samples[i : i + chunk]
            yhat, _ = self.forward_batch(stack_samples(part, self.config), training=False)
            out += [Forecast(s.entity, s.t, y, self.config.quantiles) for s, y in zip(part, yhat)]
        return out

    # -- persistence ----------------------------------------------------------

    def save(self, path, seed: int, extra: Optional[dict] = None):
        meta = {"kind": "lrl-snn", "config_hash": self.config.config_hash(), "seed": int(seed)}
        meta.update(extra or {})
        return write_checkpoint(path, dict(self.named_parameters()), meta)

    @classmethod
    def load(cls, path, config: ModelConfig) -> "LrlSnn":
        header, tensors = read_checkpoint(path)
        if header.get("config_hash") != config.config_hash():
            raise ConfigMismatch(f"{path}: checkpoint config hash does not match the runtime config")
        model = cls.init(config, seed=0)
        names = [n for n, _ in model.named_parameters()]
        if set(names) != set(tensors):
            raise ConfigMismatch(f"{path}: tensor names do not match the config")
        model.load_parameters([tensors[n] for n in names])
        return model


def quantile_crossings(forecasts: Sequence[Forecast]) -> int:
    """Count (forecast, step) pairs where a lower quantile exceeds a higher one."""
    n = 0
    for f in forecasts:
        if len(f.quantiles) > 1:
            order = np.argsort(f.quantiles)
            n += int((np.diff(f.values[order], axis=0) < 0).any(axis=0).sum())
    return n
