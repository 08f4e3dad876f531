"""Named model/training configurations.

``desk`` is the small default used for the synthetic ablation. The other
three carry the published layer sizes, dropout, learning rate and minibatch
size for each retail dataset; encoder stacks for observed and known inputs
are not published and use ``[64, 32]``.
"""

from __future__ import annotations

from .errors import ConfigError
from .features import FeatureSpec, SeriesKind, climate_spec
from .model import ModelConfig
from .training import TrainConfig

K = 12
TAU = 12
CLIMATE_STACK = (512, 256, 128, 64)
AUX_ENCODER = (64, 32)


def _observed(fid, encoder=AUX_ENCODER):
    return FeatureSpec(fid, SeriesKind.OBSERVED, 0, True, True, encoder)


def _known(fid, encoder=AUX_ENCODER):
    return FeatureSpec(fid, SeriesKind.KNOWN, TAU, True, True, encoder)


def desk_model(quantiles=()) -> ModelConfig:
    features = (
        _observed("P_sales", (32, 16)),
        climate_spec("T_avg", TAU, (32, 16)),
        climate_spec("sigma(T_avg)", TAU, (16, 8)),
        _known("W_nbr", (16, 8)),
        _known("M_nbr", (16, 8)),
    )
    return ModelConfig(features, (128, 64), TAU, K, dropout_rate=0.1, quantiles=tuple(quantiles))


def desk_train(seed: int = 0) -> TrainConfig:
    return TrainConfig(epochs=30, minibatch_size=32, learning_rate=0.001, seed=seed)


def _climate(mean_tails, std_tails, stack, attrs):
    feats = [climate_spec(a, TAU, (*stack, x)) for a, x in zip(attrs, mean_tails)]
    feats += [climate_spec(f"sigma({a})", TAU, (*stack, y)) for a, y in zip(attrs, std_tails)]
    return feats


def favorita_model(quantiles=()) -> ModelConfig:
    attrs = ("T_avg", "T_min", "T_max", "P_avg")
    features = [_observed("P_sales"), _observed("P_price")]
    features += _climate((32, 16, 16, 16), (16, 8, 8, 8), CLIMATE_STACK, attrs)
    features += [_known("W_nbr"), _known("M_nbr")]
    return ModelConfig(tuple(features), (2000, 1000, 240), TAU, K, 0.2, tuple(quantiles))


def apparel_model(quantiles=()) -> ModelConfig:
    attrs = ("T_avg", "T_min", "T_max")
    features = [_observed("P_sales")]
    features += _climate((32, 16, 16), (16, 8, 8), CLIMATE_STACK, attrs)
    features += [_known("W_nbr"), _known("M_nbr")]
    return ModelConfig(tuple(features), (2000, 1000, 200), TAU, K, 0.2, tuple(quantiles))


def gear_model(quantiles=()) -> ModelConfig:
    attrs = ("T_avg", "T_min", "T_max")
    features = [_observed("P_sales")]
    features += _climate((250, 100, 100), (), (5000, 2500, 1000), attrs)
    features += [_known("W_nbr"), _known("M_nbr")]
    return ModelConfig(tuple(features), (5000, 2500, 1000, 500), TAU, K, 0.2, tuple(quantiles))


PRESETS = {
    "desk": (desk_model, desk_train),
    "favorita": (favorita_model, lambda seed=0: TrainConfig(100, 32, 0.001, seed)),
    "apparel": (apparel_model, lambda seed=0: TrainConfig(100, 16, 0.01, seed)),
    "gear": (gear_model, lambda seed=0: TrainConfig(100, 16, 0.01, seed)),
}


def preset(name: str, seed: int = 0, quantiles=()) -> tuple[ModelConfig, TrainConfig]:
    try:
        model_fn, train_fn = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return model_fn(quantiles), train_fn(seed)
