"""Pretraining, adapter training and the delay-aware online harness.

Online protocol at clock ``t`` (1-based): the forecast issued at origin
``t-H`` is scored first, since its horizon has just become observable. The
strategy then takes its feedback step and finally forecasts ``Y_t`` from
``X_t``. Feedback strategies learn from ``(X_{t-H}, Y_{t-H})``, the newest
fully labelled sample; the oracle baseline learns from ``(X_{t-1}, Y_{t-1})``
and needs an oracle-mode stream to read that far ahead.
"""
import enum
import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from driftcast import metrics
from driftcast.adapter import AdapterConfig, DriftAdapter, naive_param_count
from driftcast.exceptions import (
    BadValue,
    ConfigMismatch,
    Diverged,
    EmptyRange,
    StrategyArgMismatch,
    ZeroDenominator,
)
from driftcast.forecasters import ForecastModel, clone_params, restore_params
from driftcast.nncore import (
    AdamState,
    adam_step,
    batch_mse,
    batch_mse_grad,
    mae,
    mse,
    param_checksum,
)
from driftcast.seriesdata import GuardedStream, SeriesFrame, SplitIndices, WindowSet, make_windows


class Strategy(str, enum.Enum):
    FROZEN = "frozen"
    GD_PRACTICAL = "gd_practical"
    GD_OPTIMAL = "gd_optimal"
    PROCEED = "proceed"


class ProceedVariant(str, enum.Enum):
    NONE = "none"
    FEEDBACK_ONLY = "feedback_only"
    CONCEPT_ONLY = "concept_only"
    SHARED_ENCODER = "shared_encoder"
    UNSHARED_W1W2 = "unshared_w1w2"


@dataclass(frozen=True)
class StrategySpec:
    strategy: Strategy
    variant: ProceedVariant = ProceedVariant.NONE

    def __post_init__(self):
        if self.variant is not ProceedVariant.NONE and self.strategy is not Strategy.PROCEED:
            raise StrategyArgMismatch(f"variant {self.variant.value} needs the proceed strategy")

    @classmethod
    def parse(cls, name: str) -> "StrategySpec":
        """Accept a strategy name or a proceed variant id."""
        if name in {s.value for s in Strategy}:
            return cls(Strategy(name))
        if name in {v.value for v in ProceedVariant} and name != ProceedVariant.NONE.value:
            return cls(Strategy.PROCEED, ProceedVariant(name))
        raise BadValue("strategy", f"unknown strategy {name!r}")

    @property
    def name(self) -> str:
        return self.strategy.value if self.variant is ProceedVariant.NONE else self.variant.value

    @property
    def uses_adapter(self) -> bool:
        return self.strategy is Strategy.PROCEED and self.variant is not ProceedVariant.FEEDBACK_ONLY

    @property
    def oracle(self) -> bool:
        return self.strategy is Strategy.GD_OPTIMAL

    @property
    def updates(self) -> bool:
        return self.strategy is not Strategy.FROZEN


STRATEGY_NAMES = tuple(s.value for s in Strategy) + tuple(
    v.value for v in ProceedVariant if v is not ProceedVariant.NONE
)


@dataclass
class OnlineConfig:
    """Knobs shared by pretraining, adapter training and the online phase."""

    lookback: int = 96
    horizon: int = 24
    pretrain_lr: float = 1e-3
    online_lr: Optional[float] = None
    adapter_lr: Optional[float] = None
    epochs: int = 20
    adapter_epochs: int = 10
    batch_size: int = 32
    patience: Optional[int] = 3
    d_c: int = 100
    rank: int = 32
    aggregation: str = "average"
    prev_batch_encoder: str = "e"
    feedback_through_adapter: bool = True
    seeds: Tuple[int, ...] = (0, 1, 2)
    strategy: StrategySpec = field(default_factory=lambda: StrategySpec(Strategy.FROZEN))
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    keep_trace: bool = False

    def __post_init__(self):
        for key in ("lookback", "horizon", "batch_size"):
            if getattr(self, key) < 1:
                raise BadValue(key, f"must be >= 1, got {getattr(self, key)}")
        for key in ("epochs", "adapter_epochs"):
            if getattr(self, key) < 0:
                raise BadValue(key, f"must be >= 0, got {getattr(self, key)}")
        for key in ("pretrain_lr", "online_lr", "adapter_lr"):
            value = getattr(self, key)
            if value is not None and not value > 0:
                raise BadValue(key, f"must be > 0, got {value}")

    @property
    def effective_online_lr(self) -> float:
        return self.online_lr if self.online_lr is not None else self.pretrain_lr * 0.1

    @property
    def effective_adapter_lr(self) -> float:
        return self.adapter_lr if self.adapter_lr is not None else self.pretrain_lr

    def with_strategy(self, spec: StrategySpec) -> "OnlineConfig":
        return replace(self, strategy=spec)

    def adapter_config(self) -> AdapterConfig:
        base = AdapterConfig(
            d_c=self.d_c, rank=self.rank, aggregation=self.aggregation, prev_encoder=self.prev_batch_encoder
        )
        variant = self.strategy.variant
        if variant is ProceedVariant.CONCEPT_ONLY:
            return replace(base, generator_input="concept")
        if variant is ProceedVariant.SHARED_ENCODER:
            return replace(base, shared_encoder=True)
        if variant is ProceedVariant.UNSHARED_W1W2:
            return replace(base, share_w1w2=False)
        return base

    def adam(self, lr: float) -> AdamState:
        return AdamState(lr=lr, beta1=self.adam_beta1, beta2=self.adam_beta2, eps=self.adam_eps)

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload["strategy"] = self.strategy.name
        payload["seeds"] = list(self.seeds)
        payload["online_lr"] = self.effective_online_lr
        payload["adapter_lr"] = self.effective_adapter_lr
        return payload


def derive_seed(seed: int, component: int) -> int:
    """Independent, reproducible seed for one component of a run."""
    return int(np.random.SeedSequence([seed, component]).generate_state(1)[0])


def training_windows(frame: SeriesFrame, split: SplitIndices, lookback: int, horizon: int) -> Tuple[WindowSet, WindowSet]:
    """Training windows lie inside the training segment; validation windows
    have their origin in the validation segment and their horizon before the
    test segment."""
    train = make_windows(frame, lookback, horizon, (lookback, split.train_end - horizon))
    valid = make_windows(frame, lookback, horizon, (split.train_end, split.valid_end - horizon))
    return train, valid


# Training -------------------------------------------------------------------


@dataclass
class TrainingRecord:
    best_epoch: int = 0
    best_valid_mse: Optional[float] = None
    train_losses: List[float] = field(default_factory=list)
    valid_losses: List[float] = field(default_factory=list)


def _check_finite(loss: float, phase: str) -> None:
    if not np.isfinite(loss):
        metrics.DIVERGED.labels(phase=phase).inc()
        raise Diverged(f"non-finite loss during {phase}: {loss}")


def _batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


def evaluate(model: ForecastModel, windows: WindowSet, chunk: int = 512) -> float:
    """Mean per-sample MSE of plain forecasts."""
    total = 0.0
    for lo in range(0, len(windows), chunk):
        part = windows[lo:lo + chunk]
        total += batch_mse(model.predict(part.x), part.y) * len(part)
    return total / len(windows)


def pretrain(
    model: ForecastModel,
    train: WindowSet,
    valid: Optional[WindowSet],
    cfg: OnlineConfig,
    seed: int = 0,
) -> Tuple[ForecastModel, TrainingRecord]:
    """Adam on shuffled mini-batches; keeps the epoch with the best validation MSE.

    Without validation windows the final epoch is kept.
    """
    if len(train) == 0:
        raise EmptyRange("pretraining needs at least one window")
    rng = np.random.default_rng(seed)
    state = cfg.adam(cfg.pretrain_lr)
    record = TrainingRecord()
    best = None
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for idx in _batches(rng.permutation(len(train)), cfg.batch_size):
            batch = train.take(idx)
            yhat, cache = model.forward(batch.x)
            loss = batch_mse(yhat, batch.y)
            _check_finite(loss, "pretrain")
            model.backward(cache, batch_mse_grad(yhat, batch.y))
            adam_step(state, model.param_list())
            losses.append(loss)
        record.train_losses.append(float(np.mean(losses)))
        if valid is None or len(valid) == 0:
            record.best_epoch = epoch
            continue
        valid_mse = evaluate(model, valid)
        _check_finite(valid_mse, "pretrain")
        record.valid_losses.append(valid_mse)
        logger.debug("Pretrain epoch", epoch=epoch, train_mse=record.train_losses[-1], valid_mse=valid_mse)
        if record.best_valid_mse is None or valid_mse < record.best_valid_mse:
            record.best_epoch, record.best_valid_mse, best, stale = epoch, valid_mse, clone_params(model), 0
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                logger.info(f"Early stop after epoch {epoch}", best_epoch=record.best_epoch)
                break
    if best is not None:
        restore_params(model, best)
    logger.info("Pretraining finished", best_epoch=record.best_epoch, best_valid_mse=record.best_valid_mse)
    return model, record


def adapter_batch_loss(
    model: ForecastModel,
    adapter: DriftAdapter,
    x: np.ndarray,
    y: np.ndarray,
    prev_x: Optional[np.ndarray] = None,
    prev_y: Optional[np.ndarray] = None,
    backward: bool = True,
) -> float:
    """Batch-mean MSE of adapted forecasts; accumulates gradients of the model
    and the adapter when ``backward`` is set."""
    coeffs, adapter_cache = adapter.coefficients(x, prev_x, prev_y)
    yhat, model_cache = model.forward(x, coeffs.layers)
    loss = batch_mse(yhat, y)
    if backward:
        grads = model.backward(model_cache, batch_mse_grad(yhat, y))
        adapter.backward(adapter_cache, grads.scaling)
    return loss


def evaluate_adapted(
    model: ForecastModel, adapter: DriftAdapter, windows: WindowSet, batch_size: int, lag: Optional[int] = None
) -> float:
    """Mean per-sample MSE of adapted forecasts over chronological windows.

    Window ``i`` drifts from window ``max(i - lag, 0)``, the newest sample an
    online forecaster would have fully observed; ``lag`` defaults to the
    horizon.
    """
    lag = adapter.horizon if lag is None else lag
    total = 0.0
    for lo in range(0, len(windows), batch_size):
        part = windows[lo:lo + batch_size]
        prev = windows.take(np.maximum(np.arange(lo, lo + len(part)) - lag, 0))
        total += adapter_batch_loss(model, adapter, part.x, part.y, prev.x, prev.y, backward=False) * len(part)
    return total / len(windows)


def train_adapter(
    model: ForecastModel,
    adapter: DriftAdapter,
    train: WindowSet,
    cfg: OnlineConfig,
    seed: int = 0,
    valid: Optional[WindowSet] = None,
    update_adapter: bool = True,
) -> Tuple[ForecastModel, DriftAdapter, TrainingRecord]:
    """Jointly fit the model and the adapter on shuffled batches.

    Item ``i`` of a batch drifts from item ``i mod P`` of the previous batch
    (see :meth:`DriftAdapter.coefficients`); the first batch of every epoch
    sees zero drift. With validation windows, ``valid_losses[0]`` scores the
    incoming parameters as epoch 0 and the best epoch, possibly 0, is kept.
    """
    if len(train) == 0:
        raise EmptyRange("adapter training needs at least one window")
    rng = np.random.default_rng(seed)
    state = cfg.adam(cfg.effective_adapter_lr)
    trainable = model.param_list() + (adapter.param_list() if update_adapter else [])
    record = TrainingRecord()
    validate = valid is not None and len(valid) > 0
    best = None
    if validate:
        record.best_valid_mse = evaluate_adapted(model, adapter, valid, cfg.batch_size)
        _check_finite(record.best_valid_mse, "adapter")
        record.valid_losses.append(record.best_valid_mse)
        best = [p.values.copy() for p in model.param_list() + adapter.param_list()]
    for epoch in range(1, cfg.adapter_epochs + 1):
        losses = []
        prev = None
        for idx in _batches(rng.permutation(len(train)), cfg.batch_size):
            batch = train.take(idx)
            loss = adapter_batch_loss(
                model, adapter, batch.x, batch.y,
                None if prev is None else prev.x, None if prev is None else prev.y,
            )
            _check_finite(loss, "adapter")
            adam_step(state, trainable)
            if not update_adapter:
                adapter.zero_grad()
            losses.append(loss)
            prev = batch
        record.train_losses.append(float(np.mean(losses)))
        logger.debug("Adapter epoch", epoch=epoch, train_mse=record.train_losses[-1])
        if not validate:
            record.best_epoch = epoch
            continue
        valid_mse = evaluate_adapted(model, adapter, valid, cfg.batch_size)
        _check_finite(valid_mse, "adapter")
        record.valid_losses.append(valid_mse)
        if valid_mse < record.best_valid_mse:
            record.best_epoch, record.best_valid_mse = epoch, valid_mse
            best = [p.values.copy() for p in model.param_list() + adapter.param_list()]
    if best is not None:
        for p, values in zip(model.param_list() + adapter.param_list(), best):
            p.assign(values)
    logger.info("Adapter training finished", best_epoch=record.best_epoch, best_valid_mse=record.best_valid_mse)
    return model, adapter, record


def build_adapter(model: ForecastModel, cfg: OnlineConfig, seed: int = 0) -> Optional[DriftAdapter]:
    """Adapter matching the configured strategy, or None when it needs none."""
    if not cfg.strategy.uses_adapter:
        return None
    return DriftAdapter.for_model(model, cfg.adapter_config(), seed)


# Online harness -------------------------------------------------------------


@dataclass(frozen=True)
class StepEvent:
    """What the harness did at one clock tick (handed to ``hook``)."""

    clock: int
    feedback_origin: Optional[int]
    forecast_origin: int
    params_before_forecast: str
    params_after_forecast: str


@dataclass
class RunReport:
    dataset: str
    model: str
    strategy: str
    variant: str
    lookback: int
    horizon: int
    seed: int
    mse: float
    mae: float
    n_test: int
    n_warmup: int
    leakage_audit: Dict[str, int]
    param_counts: Dict[str, int]
    config: Dict[str, Any]
    delta_mse: Optional[float] = None
    delta_mae: Optional[float] = None
    improvement_vs_frozen_pct: Optional[float] = None
    trace: Optional[List[Tuple[int, float]]] = None

    _RENAMED = {"lookback": "L", "horizon": "H"}

    def to_dict(self) -> Dict[str, Any]:
        payload = {self._RENAMED.get(k, k): v for k, v in asdict(self).items() if k != "trace"}
        return payload

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "RunReport":
        inverse = {v: k for k, v in cls._RENAMED.items()}
        return cls(**{inverse.get(k, k): v for k, v in payload.items()})

    def trace_frame(self) -> pd.DataFrame:
        rows = self.trace or []
        return pd.DataFrame(
            {"t": [t for t, _ in rows], "loss": [loss for _, loss in rows], "strategy": self.strategy}
        )

    @property
    def cell(self) -> Tuple[str, str, int, int, int]:
        return self.dataset, self.model, self.lookback, self.horizon, self.seed


class _ConceptMemo:
    """Per-origin concept vectors; the adapter is frozen online so they never change."""

    def __init__(self, adapter: DriftAdapter, stream: GuardedStream, lookback: int, horizon: int):
        self.adapter = adapter
        self.stream = stream
        self.lookback = lookback
        self.horizon = horizon
        self.previous: Dict[int, np.ndarray] = {}
        self.current: Dict[int, np.ndarray] = {}

    def previous_concept(self, origin: int) -> np.ndarray:
        if origin not in self.previous:
            sample = self.stream.window(origin, self.lookback, self.horizon)
            self.previous[origin] = self.adapter.previous_concepts(sample.x[None], sample.y[None])[0]
        return self.previous[origin]

    def current_concept(self, origin: int) -> np.ndarray:
        if origin not in self.current:
            x = self.stream.lookback(origin, self.lookback)
            self.current[origin] = self.adapter.current_concepts(x[None])[0]
        return self.current[origin]

    def generator_inputs(self, origin: int, prev_origin: int) -> np.ndarray:
        current = self.current_concept(origin)
        if self.adapter.config.generator_input == "concept":
            return current
        return self.adapter.generator_inputs(current, self.previous_concept(prev_origin))

    def prune(self, oldest: int) -> None:
        for memo in (self.previous, self.current):
            for key in [k for k in memo if k < oldest]:
                del memo[key]


def online_start(split: SplitIndices, lookback: int, horizon: int) -> int:
    return max(split.train_end, lookback + horizon + 1)


def run_online(
    model: ForecastModel,
    adapter: Optional[DriftAdapter],
    stream: GuardedStream,
    cfg: OnlineConfig,
    split: SplitIndices,
    dataset: str = "dataset",
    seed: int = 0,
    hook: Optional[Callable[[StepEvent], None]] = None,
) -> RunReport:
    """Run one strategy over the validation (warm-up) and test segments."""
    spec = cfg.strategy
    if spec.uses_adapter != (adapter is not None):
        raise StrategyArgMismatch(f"{spec.name} {'needs' if spec.uses_adapter else 'takes no'} adapter")
    if stream.oracle_mode != spec.oracle:
        raise StrategyArgMismatch(f"{spec.name} cannot run on a stream with oracle_mode={stream.oracle_mode}")
    lookback, horizon = cfg.lookback, cfg.horizon
    if (model.lookback, model.horizon) != (lookback, horizon):
        raise StrategyArgMismatch("model dims differ from the online config")
    steps = stream.frame.n_steps
    start = online_start(split, lookback, horizon)
    if start > steps - horizon or split.valid_end > steps - horizon:
        raise EmptyRange(f"no online origin for L={lookback}, H={horizon} on {steps} steps")
    if stream.clock > start:
        raise StrategyArgMismatch(f"stream clock {stream.clock} is already past the online start {start}")

    state = cfg.adam(cfg.effective_online_lr)
    memo = _ConceptMemo(adapter, stream, lookback, horizon) if adapter is not None else None
    adapted_feedback = memo is not None and cfg.feedback_through_adapter
    pending: Dict[int, np.ndarray] = {}
    test_mse: List[float] = []
    test_mae: List[float] = []
    n_warmup = 0
    trace: List[Tuple[int, float]] = []
    step_seconds = metrics.ONLINE_STEP_SECONDS.labels(strategy=spec.name)
    step_counter = metrics.ONLINE_STEPS.labels(strategy=spec.name)

    for clock in range(start, steps + 1):
        stream.advance(clock)
        tick = time.perf_counter()
        scored = clock - horizon
        if scored in pending:
            truth = stream.target(scored, horizon)
            yhat = pending.pop(scored)
            step_mse = mse(yhat, truth)
            if scored >= split.valid_end:
                test_mse.append(step_mse)
                test_mae.append(mae(yhat, truth))
            else:
                n_warmup += 1
            if cfg.keep_trace:
                trace.append((scored, step_mse))
        if clock > steps - horizon:
            continue

        feedback_origin = None
        if spec.updates:
            feedback_origin = clock - 1 if spec.oracle else clock - horizon
            sample = stream.window(feedback_origin, lookback, horizon)
            scaling = None
            if adapted_feedback:
                inputs = memo.generator_inputs(feedback_origin, feedback_origin - 1)
                scaling = adapter.generator.generate(inputs[None] if inputs.ndim == 1 else inputs)[0].layers
            yhat, cache = model.forward(sample.x[None], scaling)
            loss = batch_mse(yhat, sample.y[None])
            _check_finite(loss, "online")
            model.backward(cache, batch_mse_grad(yhat, sample.y[None]))
            adam_step(state, model.param_list())

        before = param_checksum(model.param_list()) if hook is not None else ""
        x = stream.lookback(clock, lookback)[None]
        scaling = None
        if memo is not None:
            inputs = memo.generator_inputs(clock, clock - horizon)
            scaling = adapter.generator.generate(inputs[None] if inputs.ndim == 1 else inputs)[0].layers
            memo.prune(clock - horizon - 1)
        pending[clock] = model.predict(x, scaling)[0]
        if hook is not None:
            hook(StepEvent(clock, feedback_origin, clock, before, param_checksum(model.param_list())))
        step_seconds.observe(time.perf_counter() - tick)
        step_counter.inc()

    if not test_mse:
        raise EmptyRange("no forecast fell into the test segment")
    report = RunReport(
        dataset=dataset,
        model=model.architecture,
        strategy=spec.strategy.value,
        variant=spec.variant.value,
        lookback=lookback,
        horizon=horizon,
        seed=seed,
        mse=float(np.mean(test_mse)),
        mae=float(np.mean(test_mae)),
        n_test=len(test_mse),
        n_warmup=n_warmup,
        leakage_audit={"violations": stream.violations, "oracle_reads": stream.oracle_reads},
        param_counts=_param_counts(model, adapter, cfg),
        config=cfg.to_dict(),
        trace=trace if cfg.keep_trace else None,
    )
    logger.info(
        f"Online run finished: {spec.name}",
        mse=report.mse,
        mae=report.mae,
        n_test=report.n_test,
        oracle_reads=stream.oracle_reads,
    )
    return report


def _param_counts(model: ForecastModel, adapter: Optional[DriftAdapter], cfg: OnlineConfig) -> Dict[str, int]:
    counts = {"model": model.param_count(), "naive_generator": naive_param_count(model.registry, cfg.d_c)}
    if adapter is not None:
        counts["adapter_generator"] = adapter.generator.param_count()
        counts["adapter_encoders"] = adapter.encoder_param_count()
    return counts


def run_variant(
    variant: ProceedVariant,
    model: ForecastModel,
    adapter: Optional[DriftAdapter],
    stream: GuardedStream,
    cfg: OnlineConfig,
    split: SplitIndices,
    dataset: str = "dataset",
    seed: int = 0,
    hook: Optional[Callable[[StepEvent], None]] = None,
) -> RunReport:
    """Run one ablation of the adaptive strategy; the report carries the variant id.

    ``feedback_only`` is plain delayed gradient descent and takes no adapter.
    """
    variant = ProceedVariant(variant)
    if variant is ProceedVariant.NONE:
        raise StrategyArgMismatch("run_variant needs a variant id; use run_online for proceed")
    return run_online(
        model, adapter, stream, cfg.with_strategy(StrategySpec(Strategy.PROCEED, variant)), split, dataset, seed, hook
    )


def concept_trajectory(
    adapter: DriftAdapter, stream: GuardedStream, split: SplitIndices, lookback: int, horizon: int
) -> List[Tuple[int, str, np.ndarray]]:
    """Concepts and drift the adapter sees at every online forecast.

    Rows are ``(t, kind, vector)`` with kind ``concept_train`` (previous
    labelled sample through the training-side encoder), ``concept_test``
    (lookback at ``t``) and ``drift``.
    """
    steps = stream.frame.n_steps
    memo = _ConceptMemo(adapter, stream, lookback, horizon)
    rows: List[Tuple[int, str, np.ndarray]] = []
    for clock in range(online_start(split, lookback, horizon), steps - horizon + 1):
        stream.advance(clock)
        c_train = memo.previous_concept(clock - horizon)[0]
        c_test = memo.current_concept(clock)[0]
        rows += [
            (clock, "concept_train", c_train),
            (clock, "concept_test", c_test),
            (clock, "drift", c_test - c_train),
        ]
        memo.prune(clock - horizon)
    return rows


# Gap analysis ---------------------------------------------------------------


@dataclass(frozen=True)
class GapResult:
    delta_mse: float
    delta_mae: float


def relative_gap(practical: float, optimal: float) -> float:
    """Signed percentage ``(practical - optimal) / optimal * 100``."""
    if optimal == 0:
        raise ZeroDenominator("reference error is zero")
    return (practical - optimal) / optimal * 100.0


def compute_gap(report_practical: RunReport, report_optimal: RunReport) -> GapResult:
    if report_practical.cell != report_optimal.cell:
        raise ConfigMismatch(f"cannot compare {report_practical.cell} with {report_optimal.cell}")
    return GapResult(
        delta_mse=relative_gap(report_practical.mse, report_optimal.mse),
        delta_mae=relative_gap(report_practical.mae, report_optimal.mae),
    )


def annotate_reports(reports: Sequence[RunReport]) -> None:
    """Fill gap and improvement fields across the reports of one cell group."""
    by_cell: Dict[Tuple, Dict[str, RunReport]] = {}
    for report in reports:
        name = report.strategy if report.variant == ProceedVariant.NONE.value else report.variant
        by_cell.setdefault(report.cell, {})[name] = report
    for runs in by_cell.values():
        practical = runs.get(Strategy.GD_PRACTICAL.value)
        optimal = runs.get(Strategy.GD_OPTIMAL.value)
        if practical is not None and optimal is not None:
            try:
                gap = compute_gap(practical, optimal)
            except ZeroDenominator:
                logger.warning("Oracle error is zero; gap left empty", cell=practical.cell)
            else:
                practical.delta_mse, practical.delta_mae = gap.delta_mse, gap.delta_mae
        frozen = runs.get(Strategy.FROZEN.value)
        if frozen is not None and frozen.mse > 0:
            for report in runs.values():
                if report is not frozen:
                    report.improvement_vs_frozen_pct = (frozen.mse - report.mse) / frozen.mse * 100.0
