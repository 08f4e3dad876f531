"""Losses, chronological splitting and the minibatch training loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import nn
from .errors import ConfigError, DegenerateSplit, DimensionMismatch, InvalidQuantile, NonFiniteLoss
from .features import Sample
from .model import Batch, LrlSnn, stack_samples

logger = logging.getLogger(__name__)


def _check_quantile(q: float) -> None:
    if not 0.0 < q < 1.0:
        raise InvalidQuantile(f"quantile must lie in (0, 1), got {q}")


def pinball_loss(q: float, y, yhat):
    """Quantile (pinball) loss, elementwise for array inputs."""
    _check_quantile(q)
    u = np.asarray(y, dtype=float) - np.asarray(yhat, dtype=float)
    out = np.where(u >= 0, q * u, (q - 1.0) * u)
    return float(out) if out.ndim == 0 else out


def mse_loss(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise DimensionMismatch(f"shapes {y.shape} and {yhat.shape} differ")
    return float(np.mean((y - yhat) ** 2))


@dataclass
class TrainConfig:
    epochs: int = 100
    minibatch_size: int = 32
    learning_rate: float = 0.001
    seed: int = 0
    loss: str = "mse"  # "mse" or "pinball"
    shuffle: bool = True
    clip_norm: float = 10.0

    def __post_init__(self):
        if self.epochs < 1 or self.minibatch_size < 1:
            raise ConfigError("epochs and minibatch_size must be >= 1")
        if self.loss not in ("mse", "pinball"):
            raise ConfigError(f"unknown loss {self.loss!r}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def window_loss(yhat: np.ndarray, y: np.ndarray, scale: np.ndarray, loss: str, quantiles=()):
    """Loss on errors expressed in target-window scale units, plus dL/d yhat.

    ``yhat`` is (N, n_quantiles, horizon), ``y`` is (N, horizon) and ``scale``
    the floored std of each target window's differences. Dividing by the
    window scale keeps entities of different sales volume on equal footing.
    """
    s = scale[:, None, None]
    r = (yhat - y[:, None, :]) / s
    if loss == "mse":
        value = float(np.mean(r * r))
        grad = 2.0 * r / r.size
    else:
        q = np.asarray(quantiles, dtype=float)[None, :, None]
        u = -r  # y - yhat
        value = float(np.mean(np.where(u >= 0, q * u, (q - 1.0) * u)))
        grad = np.where(u >= 0, -q, 1.0 - q) / r.size
    return value, grad / s


def batch_loss(model: LrlSnn, batch: Batch, cfg: TrainConfig, training=False, rng=None):
    yhat, cache = model.forward_batch(batch, training, rng)
    value, grad = window_loss(yhat, batch.targets, cache.scale, cfg.loss, model.config.quantiles)
    return value, grad, cache


# -- splitting ------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    """Chronological cut points on the time index.

    A sample at ``t`` is train if ``t <= train_end``, dev if
    ``train_end < t <= dev_end`` and test otherwise. Train and dev samples
    whose ``horizon``-step target would cross their partition's cut are
    dropped.
    """

    train_end: int
    dev_end: int
    horizon: int = 0

    def __post_init__(self):
        if self.dev_end < self.train_end:
            raise ConfigError("dev_end must not precede train_end")

    @classmethod
    def from_fractions(cls, t_values, fractions=(0.5, 0.12, 0.38), horizon: int = 0) -> "SplitSpec":
        """Cut the sorted distinct time indices by the given proportions."""
        ts = np.unique(np.asarray(list(t_values), dtype=int))
        if len(ts) < 3:
            raise DegenerateSplit("need at least three distinct time indices to split")
        f = np.asarray(fractions, dtype=float)
        f = f / f.sum()
        n_train = max(1, int(round(f[0] * len(ts))))
        n_dev = max(1, int(round(f[1] * len(ts))))
        n_train = min(n_train, len(ts) - 2)
        n_dev = min(n_dev, len(ts) - n_train - 1)
        return cls(int(ts[n_train - 1]), int(ts[n_train + n_dev - 1]), horizon)


def chronological_split(samples: Sequence[Sample], spec: SplitSpec):
    train, dev, test = [], [], []
    for s in samples:
        if s.t <= spec.train_end:
            if s.t + spec.horizon <= spec.train_end:
                train.append(s)
        elif s.t <= spec.dev_end:
            if s.t + spec.horizon <= spec.dev_end:
                dev.append(s)
        else:
            test.append(s)
    for name, part in (("train", train), ("dev", dev), ("test", test)):
        if not part:
            raise DegenerateSplit(f"{name} partition is empty under {spec}")
    return train, dev, test


# -- training loop ----------------------------------------------------------


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    dev_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list, compare=False)
    best_epoch: int = -1

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "dev_loss": self.dev_loss,
            "seconds": self.seconds,
            "best_epoch": self.best_epoch,
        }


def evaluate_loss(model: LrlSnn, batch: Batch, cfg: TrainConfig, chunk: int = 4096) -> float:
    total = 0.0
    for i in range(0, len(batch), chunk):
        part = batch.take(np.arange(i, min(i + chunk, len(batch))))
        value, _, _ = batch_loss(model, part, cfg)
        total += value * len(part)
    return total / len(batch)


def train(
    model: LrlSnn,
    train_samples: Sequence[Sample],
    cfg: TrainConfig,
    dev_samples: Optional[Sequence[Sample]] = None,
    log_path=None,
) -> tuple[LrlSnn, TrainHistory]:
    """Fit ``model`` in place and return it with the best-dev-loss parameters.

    Without dev samples the epoch with the lowest train loss is kept.
    """
    if not train_samples:
        raise DegenerateSplit("training split is empty")
    if (cfg.loss == "pinball") != bool(model.config.quantiles):
        raise ConfigError("pinball loss requires a quantile model and vice versa")
    train_batch = stack_samples(train_samples, model.config)
    dev_batch = stack_samples(dev_samples, model.config) if dev_samples else None
    if train_batch.targets is None:
        raise ConfigError("training samples need targets")

    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    state = nn.AdamState.for_params(params, learning_rate=cfg.learning_rate)
    history = TrainHistory()
    best, best_params = np.inf, model.copy_parameters()
    log = open(log_path, "w") if log_path else None
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            order = rng.permutation(len(train_batch)) if cfg.shuffle else np.arange(len(train_batch))
            losses = []
            for b, i in enumerate(range(0, len(order), cfg.minibatch_size)):
                mb = train_batch.take(order[i : i + cfg.minibatch_size])
                value, grad, cache = batch_loss(model, mb, cfg, training=True, rng=rng)
                if not np.isfinite(value):
                    raise NonFiniteLoss(epoch, b, value)
                grads = model.backward_batch(cache, grad)
                nn.clip_by_global_norm(grads, cfg.clip_norm)
                nn.adam_step(params, grads, state)
                losses.append(value * len(mb))
            train_loss = float(np.sum(losses) / len(train_batch))
            dev_loss = evaluate_loss(model, dev_batch, cfg) if dev_batch is not None else float("nan")
            elapsed = time.perf_counter() - t0
            history.train_loss.append(train_loss)
            history.dev_loss.append(dev_loss)
            history.seconds.append(elapsed)
            score = dev_loss if dev_batch is not None else train_loss
            if not np.isfinite(score):
                raise NonFiniteLoss(epoch, -1, score)
            if score < best:
                best, best_params = score, model.copy_parameters()
                history.best_epoch = epoch
            if log:
                for split, loss in (("train", train_loss), ("dev", dev_loss)):
                    if split == "dev" and dev_batch is None:
                        continue
                    rec = {"epoch": epoch, "split": split, "loss": loss, "seconds": round(elapsed, 6)}
                    log.write(json.dumps(rec) + "\n")
            logger.debug("epoch %d train %.5f dev %.5f (%.2fs)", epoch, train_loss, dev_loss, elapsed)
    finally:
        if log:
            log.close()
    model.load_parameters(best_params)
    return model, history
