"""Test configuration and fixtures for driftcast tests."""
import numpy as np
import pytest
from prometheus_client import REGISTRY

from driftcast.engine import OnlineConfig, Strategy, StrategySpec
from driftcast.forecasters import ForecastModel, build_mlp
from driftcast.seriesdata import (
    RegimeSpec,
    SeriesFrame,
    SyntheticSpec,
    chronological_split,
    generate_synthetic,
    recurring_schedule,
)


@pytest.fixture
def rng() -> np.random.Generator:
    """Create a seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def regimes():
    """Create two clearly distinct regimes."""
    return (
        RegimeSpec(ar=(0.5, -0.1), amplitude=1.0, period=12.0, noise=0.05, level=0.0),
        RegimeSpec(ar=(0.1, 0.0), amplitude=2.0, period=6.0, noise=0.05, level=1.0),
    )


@pytest.fixture
def small_frame(regimes) -> SeriesFrame:
    """Create a short two-variate series with recurring regimes."""
    spec = SyntheticSpec(2, 400, regimes, recurring_schedule(400, 2, 50), seed=3)
    frame, _ = generate_synthetic(spec)
    return frame


@pytest.fixture
def small_split(small_frame):
    """Split the short series 50:25:25."""
    return chronological_split(small_frame, (50, 25, 25))


@pytest.fixture
def micro_model() -> ForecastModel:
    """Create the micro forecaster used for gradient checks."""
    return build_mlp(1, 8, 2, hidden=4, revin=True, seed=0)


@pytest.fixture
def tiny_config() -> OnlineConfig:
    """Create a fast online configuration for the short series."""
    return OnlineConfig(
        lookback=16,
        horizon=4,
        pretrain_lr=1e-2,
        epochs=2,
        adapter_epochs=2,
        batch_size=16,
        patience=None,
        d_c=6,
        rank=3,
        strategy=StrategySpec(Strategy.FROZEN),
    )


def _sample_value(name: str, labels=None) -> float:
    value = REGISTRY.get_sample_value(name, labels or {})
    return 0.0 if value is None else value


@pytest.fixture
def metric_value():
    """Read a collector sample from the default registry (0 when unset)."""
    return _sample_value
