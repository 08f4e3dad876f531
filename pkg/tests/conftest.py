import numpy as np
import pytest

from seasoncast.features import FeatureSpec, SeriesKind, climate_spec
from seasoncast.model import ModelConfig
from seasoncast.synth import SynthConfig, generate


def tiny_config(k=4, tau=2, encoder=(6,), trunk=(8,), quantiles=(), dropout=0.0, climate=True):
    feats = [FeatureSpec("P_sales", SeriesKind.OBSERVED, 0, True, True, encoder)]
    if climate:
        feats += [climate_spec("T_avg", tau, encoder), climate_spec("sigma(T_avg)", tau, encoder)]
    feats.append(FeatureSpec("W_nbr", SeriesKind.KNOWN, tau, True, True, encoder))
    return ModelConfig(tuple(feats), trunk, tau, k, dropout, tuple(quantiles))


@pytest.fixture(scope="session")
def small_artifacts():
    return generate(SynthConfig(n_stores=2, n_products=2, n_weeks=60, n_members=5, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[number])
