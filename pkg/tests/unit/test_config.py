"""Unit tests for settings and the experiment configuration dialect."""
import pytest

from driftcast.config import (
    ExperimentConfig,
    Settings,
    SyntheticConfig,
    parse_config,
    parse_config_text,
    serialize_config,
)
from driftcast.engine import ProceedVariant, Strategy
from driftcast.exceptions import (
    BadValue,
    ConfigError,
    ConfigParseError,
    DataError,
    MissingConfig,
    UnknownKey,
)


def test_empty_text_gives_defaults():
    """Test an empty file and comments alone yield the default config."""
    assert parse_config_text("") == ExperimentConfig()
    assert parse_config_text("# nothing here\n\n") == ExperimentConfig()
    assert parse_config(None) == ExperimentConfig()


def test_values_are_json_or_strings():
    """Test lists, numbers, nulls and bare strings decode as expected."""
    cfg = parse_config_text(
        'dataset = "synthetic"\n'
        "horizon = [4, 8, 16]\n"
        "online_lr = null\n"
        "pretrain_lr = 0.01  # faster\n"
        "output_dir = results\n"
        'strategy = ["frozen", "concept_only"]\n'
    )
    assert cfg.horizon == [4, 8, 16]
    assert cfg.online_lr is None
    assert cfg.pretrain_lr == 0.01
    assert cfg.output_dir == "results"
    assert cfg.strategy == ["frozen", "concept_only"]


def test_misspelled_strategy_names_its_key():
    """Test validation failures report the offending key."""
    with pytest.raises(BadValue) as err:
        parse_config_text('strategy = ["procede"]\n')
    assert err.value.key == "strategy"
    with pytest.raises(BadValue) as err:
        parse_config_text("horizon = [0]\n")
    assert err.value.key == "horizon"
    with pytest.raises(BadValue) as err:
        parse_config_text('dataset = "etth1"\n')
    assert err.value.key == "config"


def test_unknown_key():
    """Test keys outside the schema are refused by name."""
    with pytest.raises(UnknownKey) as err:
        parse_config_text("horizn = [4]\n")
    assert err.value.name == "horizn"


def test_parse_error_reports_line():
    """Test malformed lines are reported with their line number."""
    with pytest.raises(ConfigParseError) as err:
        parse_config_text('dataset = "synthetic"\nthis is not a binding\n')
    assert err.value.line == 2
    with pytest.raises(ConfigParseError) as err:
        parse_config_text("lookback = 48\nhorizon\n")
    assert err.value.line == 2


def test_serialize_is_a_fixed_point():
    """Test serializing a parsed serialization reproduces it exactly."""
    cfg = ExperimentConfig(
        horizon=[4, 8],
        strategy=["frozen", "proceed"],
        synthetic=SyntheticConfig(n_variates=2, n_steps=500, schedule=[(1, 0), (101, 1), (201, 0), (301, 1)]),
        online_lr=1e-4,
    )
    text = serialize_config(cfg)
    again = parse_config_text(text)
    assert again == cfg
    assert serialize_config(again) == text
    assert text.splitlines()[0] == 'dataset = "synthetic"'


def test_parse_config_file(tmp_path):
    """Test configs load from disk and missing files are reported."""
    path = tmp_path / "exp.env"
    path.write_text("lookback = 48\nseeds = [7]\n")
    cfg = parse_config(str(path))
    assert (cfg.lookback, cfg.seeds) == (48, [7])
    with pytest.raises(MissingConfig) as err:
        parse_config(str(tmp_path / "absent.env"))
    assert isinstance(err.value, ConfigError)
    assert not isinstance(err.value, DataError)


def test_online_config_per_cell():
    """Test cell configs carry the horizon, strategy and learning rates."""
    cfg = ExperimentConfig(pretrain_lr=1e-2, save_traces=True)
    online = cfg.online_config(8, "concept_only")
    assert online.horizon == 8
    assert (online.strategy.strategy, online.strategy.variant) == (Strategy.PROCEED, ProceedVariant.CONCEPT_ONLY)
    assert online.effective_online_lr == pytest.approx(1e-3)
    assert online.keep_trace
    assert cfg.model_options("tcn") == {"subtract_last": False, "channels": 8, "kernel": 3}


def test_synthetic_config_builds_recurring_schedule():
    """Test the default synthetic source cycles its regimes."""
    spec = SyntheticConfig(n_variates=2, n_steps=1000, n_regimes=2, segment_length=250).to_spec()
    assert spec.schedule == ((1, 0), (251, 1), (501, 0), (751, 1))
    assert len(spec.regimes) == 2


def test_settings_read_environment(monkeypatch):
    """Test process settings come from DRIFTCAST_* variables."""
    monkeypatch.setenv("DRIFTCAST_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("DRIFTCAST_JOBS", "3")
    monkeypatch.setenv("DRIFTCAST_LOG_JSON", "true")
    settings = Settings()
    assert settings.log_level == "DEBUG"
    assert settings.jobs == 3
    assert settings.log_json
