"""Reference forecast models and the layer-type registry.

All models are channel independent: one set of weights maps each variate's
lookback (L) to its horizon (H), so inputs are (B, N, L) and outputs (B, N, H).
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from driftcast.exceptions import ShapeMismatch, WiringMismatch
from driftcast.nncore import (
    AddChannel,
    Conv1d,
    Dense,
    ForwardCache,
    Flatten,
    Gelu,
    Gradients,
    LayerScaling,
    Network,
    ParamKind,
    ParamTensor,
    RevinState,
    op_from_dict,
    op_to_dict,
    revin_denormalize,
    revin_normalize,
    uniform_init,
)


@dataclass(frozen=True)
class LayerTypeEntry:
    type_id: int
    kind: ParamKind
    dims: Tuple[int, ...]
    members: Tuple[str, ...]

    @property
    def d_in(self) -> int:
        return 0 if self.kind is ParamKind.BIAS else self.dims[0]

    @property
    def d_out(self) -> int:
        return self.dims[0] if self.kind is ParamKind.BIAS else self.dims[1]


class LayerTypeRegistry:
    """Groups parameters that share (kind, dims) under one dense type id."""

    def __init__(self, entries: Sequence[LayerTypeEntry]):
        self.entries: Dict[int, LayerTypeEntry] = {e.type_id: e for e in entries}
        self.layer_to_type: Dict[str, int] = {}
        for entry in entries:
            for name in entry.members:
                if name in self.layer_to_type:
                    raise ShapeMismatch(name, "layer listed under two types")
                self.layer_to_type[name] = entry.type_id

    @classmethod
    def from_params(cls, params: Sequence[ParamTensor]) -> "LayerTypeRegistry":
        """Assign type ids by first appearance of each signature and tag the params."""
        order: List[Tuple[str, Tuple[int, ...]]] = []
        members: Dict[Tuple[str, Tuple[int, ...]], List[str]] = {}
        for p in params:
            sig = p.signature
            if sig not in members:
                order.append(sig)
                members[sig] = []
            members[sig].append(p.name)
            p.layer_type_id = order.index(sig)
        entries = [
            LayerTypeEntry(i, ParamKind(sig[0]), sig[1], tuple(members[sig])) for i, sig in enumerate(order)
        ]
        return cls(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def layers(self) -> List[str]:
        return [name for entry in self.entries.values() for name in entry.members]

    def entry_for(self, layer: str) -> LayerTypeEntry:
        return self.entries[self.layer_to_type[layer]]

    def fingerprint(self) -> Tuple[Tuple[int, str, Tuple[int, ...], Tuple[str, ...]], ...]:
        return tuple((e.type_id, e.kind.value, e.dims, e.members) for e in self.entries.values())


class ForecastModel:
    """A channel-independent direct forecaster with optional RevIN."""

    def __init__(
        self,
        architecture: str,
        network: Network,
        n_variates: int,
        lookback: int,
        horizon: int,
        revin: bool = True,
        options: Optional[Dict[str, Any]] = None,
    ):
        self.architecture = architecture
        self.network = network
        self.n_variates = n_variates
        self.lookback = lookback
        self.horizon = horizon
        self.revin = revin
        self.options = dict(options or {})
        self.registry = LayerTypeRegistry.from_params(network.param_list())

    @property
    def params(self) -> Dict[str, ParamTensor]:
        return self.network.params

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.n_variates, self.lookback, self.horizon

    def param_list(self) -> List[ParamTensor]:
        return self.network.param_list()

    def param_count(self) -> int:
        return self.network.param_count()

    def wiring(self) -> Dict[str, Any]:
        """Descriptor stored next to the tensors in checkpoints."""
        return {
            "architecture": self.architecture,
            "n_variates": self.n_variates,
            "lookback": self.lookback,
            "horizon": self.horizon,
            "revin": self.revin,
            "options": self.options,
            "ops": [op_to_dict(op) for op in self.network.ops],
        }

    def forward(
        self, x: np.ndarray, scaling: Optional[Mapping[str, LayerScaling]] = None
    ) -> Tuple[np.ndarray, Tuple[ForwardCache, Optional[RevinState]]]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1:] != (self.n_variates, self.lookback):
            raise ShapeMismatch(
                "input", f"expected (B, {self.n_variates}, {self.lookback}), got {x.shape}"
            )
        state = None
        if self.revin:
            x, state = revin_normalize(x, subtract_last=bool(self.options.get("subtract_last", False)))
        out, cache = self.network.forward(x, scaling)
        if state is not None:
            out = revin_denormalize(out, state)
        return out, (cache, state)

    def backward(self, cache: Tuple[ForwardCache, Optional[RevinState]], grad_out: np.ndarray) -> Gradients:
        net_cache, state = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if state is not None:
            g = g * state.std
        return self.network.backward(net_cache, g)

    def predict(self, x: np.ndarray, scaling: Optional[Mapping[str, LayerScaling]] = None) -> np.ndarray:
        return self.forward(x, scaling)[0]

    def zero_grad(self) -> None:
        self.network.zero_grad()


def _linear_params(rng, name, d_in, d_out) -> List[ParamTensor]:
    return [
        ParamTensor(f"{name}.weight", ParamKind.LINEAR, uniform_init(rng, (d_in, d_out), d_in)),
        ParamTensor(f"{name}.bias", ParamKind.BIAS, uniform_init(rng, (d_out,), d_in)),
    ]


def _check_dims(**dims: int) -> None:
    for key, value in dims.items():
        if value < 1:
            raise ShapeMismatch(key, f"must be >= 1, got {value}")


def build_linear(n_variates: int, lookback: int, horizon: int, revin: bool = True, seed: int = 0) -> ForecastModel:
    """Per-variate linear map L -> H plus bias."""
    _check_dims(n_variates=n_variates, lookback=lookback, horizon=horizon)
    rng = np.random.default_rng(seed)
    params = _linear_params(rng, "linear", lookback, horizon)
    network = Network(params, [Dense("linear.weight", "linear.bias")])
    return ForecastModel("linear", network, n_variates, lookback, horizon, revin)


def build_mlp(
    n_variates: int, lookback: int, horizon: int, hidden: int = 64, revin: bool = True, seed: int = 0
) -> ForecastModel:
    """Per-variate MLP L -> hidden -> hidden -> H with GeLU between layers."""
    _check_dims(n_variates=n_variates, lookback=lookback, horizon=horizon, hidden=hidden)
    rng = np.random.default_rng(seed)
    params = (
        _linear_params(rng, "input", lookback, hidden)
        + _linear_params(rng, "hidden", hidden, hidden)
        + _linear_params(rng, "output", hidden, horizon)
    )
    ops = [
        Dense("input.weight", "input.bias"),
        Gelu(),
        Dense("hidden.weight", "hidden.bias"),
        Gelu(),
        Dense("output.weight", "output.bias"),
    ]
    return ForecastModel("mlp", Network(params, ops), n_variates, lookback, horizon, revin, {"hidden": hidden})


def build_tcn(
    n_variates: int,
    lookback: int,
    horizon: int,
    channels: int = 8,
    kernel: int = 3,
    revin: bool = True,
    seed: int = 0,
) -> ForecastModel:
    """Two causal convolutions over the lookback, then a linear head to H."""
    _check_dims(n_variates=n_variates, lookback=lookback, horizon=horizon, channels=channels, kernel=kernel)
    rng = np.random.default_rng(seed)
    params = [
        ParamTensor("conv1.filter", ParamKind.CONV_FILTER, uniform_init(rng, (1, channels, kernel), kernel)),
        ParamTensor("conv1.bias", ParamKind.BIAS, uniform_init(rng, (channels,), kernel)),
        ParamTensor(
            "conv2.filter",
            ParamKind.CONV_FILTER,
            uniform_init(rng, (channels, channels, kernel), channels * kernel),
        ),
        ParamTensor("conv2.bias", ParamKind.BIAS, uniform_init(rng, (channels,), channels * kernel)),
    ] + _linear_params(rng, "head", channels * lookback, horizon)
    ops = [
        AddChannel(),
        Conv1d("conv1.filter", "conv1.bias"),
        Gelu(),
        Conv1d("conv2.filter", "conv2.bias"),
        Gelu(),
        Flatten(),
        Dense("head.weight", "head.bias"),
    ]
    options = {"channels": channels, "kernel": kernel}
    return ForecastModel("tcn", Network(params, ops), n_variates, lookback, horizon, revin, options)


def build_model(
    architecture: str,
    n_variates: int,
    lookback: int,
    horizon: int,
    revin: bool = True,
    seed: int = 0,
    **options: Any,
) -> ForecastModel:
    if architecture == "linear":
        model = build_linear(n_variates, lookback, horizon, revin, seed)
    elif architecture == "mlp":
        model = build_mlp(n_variates, lookback, horizon, options.get("hidden", 64), revin, seed)
    elif architecture == "tcn":
        model = build_tcn(
            n_variates, lookback, horizon, options.get("channels", 8), options.get("kernel", 3), revin, seed
        )
    else:
        raise WiringMismatch(f"unknown architecture: {architecture}")
    if options.get("subtract_last"):
        model.options["subtract_last"] = True
    return model


def model_from_checkpoint(wiring: Mapping[str, Any], tensors: Sequence[ParamTensor]) -> ForecastModel:
    """Rebuild a model from a checkpoint's wiring block and tensors."""
    try:
        ops = [op_from_dict(op) for op in wiring["ops"]]
        model = ForecastModel(
            wiring["architecture"],
            Network([t.copy() for t in tensors], ops),
            int(wiring["n_variates"]),
            int(wiring["lookback"]),
            int(wiring["horizon"]),
            bool(wiring["revin"]),
            wiring.get("options", {}),
        )
    except (KeyError, ShapeMismatch) as e:
        raise WiringMismatch(f"checkpoint wiring unusable: {e}") from e
    for tensor in tensors:
        if model.params[tensor.name].layer_type_id != tensor.layer_type_id:
            raise WiringMismatch(f"{tensor.name}: stored layer type differs from registry")
    return model


@dataclass(frozen=True)
class ParamSnapshot:
    signatures: Tuple[Tuple[str, str, Tuple[int, ...]], ...]
    values: Tuple[np.ndarray, ...]


def clone_params(model: ForecastModel) -> ParamSnapshot:
    params = model.param_list()
    return ParamSnapshot(
        signatures=tuple((p.name,) + p.signature for p in params),
        values=tuple(p.values.copy() for p in params),
    )


def restore_params(model: ForecastModel, snapshot: ParamSnapshot) -> None:
    params = model.param_list()
    current = tuple((p.name,) + p.signature for p in params)
    if current != snapshot.signatures:
        raise WiringMismatch("snapshot was taken from a differently wired model")
    for p, values in zip(params, snapshot.values):
        p.assign(values)
        p.zero_grad()
    logger.debug(f"Restored {len(params)} parameter tensors")
