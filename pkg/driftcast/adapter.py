"""Drift-conditioned model adapter.

Two concept encoders map windows to ``d_c``-dimensional concept vectors: ``E``
reads a full training sample (lookback and horizon) and ``E'`` reads only a
lookback. The difference between the concept of the sample being forecast and
the concept of the latest fully observed sample is the drift vector. A
bottleneck generator turns the drift into per-layer coefficients
``alpha`` (input side) and ``beta`` (output side) that rescale every tagged
model parameter as ``outer(alpha, beta) * theta``.

Generator layout, per layer type::

    h     = sigmoid(W1 @ drift + b_layer)    W1: (r, d_c), b_layer: (r,)
    coeff = W2 @ h + 1                        W2: (d_in + d_out, r), zero at init

so a fresh adapter leaves the model untouched.
"""
import enum
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from driftcast.exceptions import (
    ArityMismatch,
    BadValue,
    BatchArityMismatch,
    DimMismatch,
    ModeDimMismatch,
    RegistryMismatch,
    WiringMismatch,
)
from driftcast.forecasters import ForecastModel, LayerTypeRegistry
from driftcast.nncore import (
    Dense,
    ForwardCache,
    Gelu,
    LayerScaling,
    Network,
    ParamKind,
    ParamTensor,
    param_checksum,
    uniform_init,
)
from driftcast.seriesdata import WindowSample, WindowSet

ADAPTABLE_KINDS = (ParamKind.LINEAR, ParamKind.BIAS, ParamKind.CONV_FILTER)

ConceptVector = np.ndarray
DriftVector = np.ndarray


class AggregationMode(str, enum.Enum):
    AVERAGE = "average"
    LINEAR = "linear"
    WEIGHTED = "weighted"


# Aggregation ----------------------------------------------------------------


def aggregate_concepts(
    features: np.ndarray, mode: Union[AggregationMode, str] = AggregationMode.AVERAGE, weight: Optional[np.ndarray] = None
) -> ConceptVector:
    """Combine per-variate features (N, d_c) or (B, N, d_c) into concepts.

    ``linear`` needs ``weight`` of shape (N*d_c, d_c) and concatenates variates
    in order; ``weighted`` needs ``weight`` of shape (N,).
    """
    mode = AggregationMode(mode)
    feats = np.asarray(features, dtype=np.float64)
    single = feats.ndim == 2
    if single:
        feats = feats[None]
    batch, n_variates, d_c = feats.shape
    if mode is AggregationMode.AVERAGE:
        out = feats.mean(axis=1)
    elif mode is AggregationMode.LINEAR:
        if weight is None or weight.shape != (n_variates * d_c, d_c):
            raise ModeDimMismatch(f"linear aggregation weight {None if weight is None else weight.shape} for N={n_variates}")
        out = feats.reshape(batch, n_variates * d_c) @ weight
    else:
        if weight is None or weight.shape != (n_variates,):
            raise ModeDimMismatch(f"weighted aggregation weight {None if weight is None else weight.shape} for N={n_variates}")
        out = np.einsum("n,bnd->bd", weight, feats)
    return out[0] if single else out


def _aggregate_backward(
    feats: np.ndarray, mode: AggregationMode, weight: Optional[np.ndarray], grad: np.ndarray
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    batch, n_variates, d_c = feats.shape
    if mode is AggregationMode.AVERAGE:
        return np.repeat(grad[:, None, :] / n_variates, n_variates, axis=1), None
    if mode is AggregationMode.LINEAR:
        gfeat = (grad @ weight.T).reshape(batch, n_variates, d_c)
        return gfeat, feats.reshape(batch, n_variates * d_c).T @ grad
    gfeat = weight[None, :, None] * grad[:, None, :]
    return gfeat, np.einsum("bnd,bd->n", feats, grad)


# Encoders -------------------------------------------------------------------


@dataclass
class EncoderCache:
    net_cache: ForwardCache
    features: np.ndarray


class ConceptEncoder:
    """Per-variate two-layer perceptron (linear, GeLU, linear) plus aggregation."""

    def __init__(
        self,
        prefix: str,
        in_dim: int,
        d_c: int,
        n_variates: int,
        aggregation: Union[AggregationMode, str] = AggregationMode.AVERAGE,
        rng: Optional[np.random.Generator] = None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.prefix = prefix
        self.in_dim = in_dim
        self.d_c = d_c
        self.n_variates = n_variates
        self.aggregation = AggregationMode(aggregation)
        params = [
            ParamTensor(f"{prefix}.first.weight", ParamKind.LINEAR, uniform_init(rng, (in_dim, d_c), in_dim)),
            ParamTensor(f"{prefix}.first.bias", ParamKind.BIAS, np.zeros(d_c)),
            ParamTensor(f"{prefix}.second.weight", ParamKind.LINEAR, uniform_init(rng, (d_c, d_c), d_c)),
            ParamTensor(f"{prefix}.second.bias", ParamKind.BIAS, np.zeros(d_c)),
        ]
        self.network = Network(
            params,
            [Dense(f"{prefix}.first.weight", f"{prefix}.first.bias"), Gelu(),
             Dense(f"{prefix}.second.weight", f"{prefix}.second.bias")],
        )
        self.aggregate_weight: Optional[ParamTensor] = None
        if self.aggregation is AggregationMode.LINEAR:
            stacked = np.tile(np.eye(d_c), (n_variates, 1)) / n_variates
            self.aggregate_weight = ParamTensor(f"{prefix}.aggregate.weight", ParamKind.LINEAR, stacked)
        elif self.aggregation is AggregationMode.WEIGHTED:
            self.aggregate_weight = ParamTensor(
                f"{prefix}.aggregate.weight", ParamKind.BIAS, np.full(n_variates, 1.0 / n_variates)
            )

    def param_list(self) -> List[ParamTensor]:
        params = self.network.param_list()
        if self.aggregate_weight is not None:
            params.append(self.aggregate_weight)
        return params

    def param_count(self) -> int:
        return sum(p.size for p in self.param_list())

    def encode(self, inputs: np.ndarray) -> Tuple[np.ndarray, EncoderCache]:
        """Concepts (B, d_c) for per-variate inputs (B, N, in_dim)."""
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 3 or inputs.shape[-1] != self.in_dim:
            raise ArityMismatch(f"{self.prefix} expects per-variate length {self.in_dim}, got {inputs.shape}")
        features, net_cache = self.network.forward(inputs)
        weight = None if self.aggregate_weight is None else self.aggregate_weight.values
        return aggregate_concepts(features, self.aggregation, weight), EncoderCache(net_cache, features)

    def backward(self, cache: EncoderCache, grad: np.ndarray) -> None:
        weight = None if self.aggregate_weight is None else self.aggregate_weight.values
        gfeat, gweight = _aggregate_backward(cache.features, self.aggregation, weight, grad)
        if gweight is not None:
            self.aggregate_weight.grad += gweight
        self.network.backward(cache.net_cache, gfeat)


class ConceptEncoderE(ConceptEncoder):
    """Encoder over a full sample: each variate's lookback followed by its horizon."""

    def __init__(self, lookback: int, horizon: int, d_c: int, n_variates: int, aggregation="average", rng=None):
        super().__init__("encoder_e", lookback + horizon, d_c, n_variates, aggregation, rng)
        # zero output layer: training concepts start at the origin and grow
        self.network.params["encoder_e.second.weight"].assign(np.zeros((d_c, d_c)))
        self.lookback = lookback
        self.horizon = horizon

    def encode_pairs(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, EncoderCache]:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.shape[:2] != y.shape[:2] or x.shape[-1] + y.shape[-1] != self.in_dim:
            raise ArityMismatch(f"encoder_e expects L+H={self.in_dim}, got {x.shape} and {y.shape}")
        return self.encode(np.concatenate([x, y], axis=-1))


class ConceptEncoderEPrime(ConceptEncoder):
    """Encoder over a lookback only."""

    def __init__(self, lookback: int, d_c: int, n_variates: int, aggregation="average", rng=None):
        super().__init__("encoder_e_prime", lookback, d_c, n_variates, aggregation, rng)
        self.lookback = lookback


def _stack_samples(samples) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, WindowSet):
        return samples.x, samples.y
    if isinstance(samples, WindowSample):
        samples = [samples]
    return np.stack([s.x for s in samples]), np.stack([s.y for s in samples])


def encode_train_concept(
    enc: ConceptEncoderE, samples: Union[WindowSample, Sequence[WindowSample], WindowSet]
) -> ConceptVector:
    """Concept of one or more fully observed samples (mean over samples)."""
    x, y = _stack_samples(samples)
    return enc.encode_pairs(x, y)[0].mean(axis=0)


def encode_test_concept(enc: ConceptEncoderEPrime, x: np.ndarray) -> ConceptVector:
    """Concept of a single N×L lookback."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ArityMismatch(f"expected an N×L lookback, got {x.shape}")
    return enc.encode(x[None])[0][0]


def estimate_drift(c_to: ConceptVector, c_from: ConceptVector) -> DriftVector:
    c_to = np.asarray(c_to, dtype=np.float64)
    c_from = np.asarray(c_from, dtype=np.float64)
    if c_to.shape != c_from.shape:
        raise DimMismatch(f"concept shapes differ: {c_to.shape} vs {c_from.shape}")
    return c_to - c_from


# Coefficient generator ------------------------------------------------------


@dataclass
class AdaptationCoefficients:
    """Per-layer scalings for a batch; ``alpha`` is None for bias layers."""

    layers: Dict[str, LayerScaling]

    @property
    def batch_size(self) -> int:
        return next(iter(self.layers.values())).batch_size if self.layers else 0

    def item(self, index: int) -> Dict[str, Tuple[Optional[np.ndarray], np.ndarray]]:
        return {
            name: (None if s.alpha is None else s.alpha[index], s.beta[index]) for name, s in self.layers.items()
        }


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class GeneratorCache:
    inputs: np.ndarray
    hidden: Dict[str, np.ndarray] = field(default_factory=dict)


class CoeffGenerator:
    """Bottleneck generator with W1/W2 shared by layer type (or per layer)."""

    def __init__(
        self,
        registry: LayerTypeRegistry,
        d_c: int,
        rank: int,
        shared: bool = True,
        rng: Optional[np.random.Generator] = None,
    ):
        if rank < 1:
            raise BadValue("rank", f"must be >= 1, got {rank}")
        if d_c < 1:
            raise BadValue("d_c", f"must be >= 1, got {d_c}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.registry_fingerprint = registry.fingerprint()
        self.d_c = d_c
        self.rank = rank
        self.shared = shared
        self.layers: List[str] = []
        self.layer_dims: Dict[str, Tuple[int, int]] = {}
        self.slot_of: Dict[str, str] = {}
        self.w1: Dict[str, ParamTensor] = {}
        self.w2: Dict[str, ParamTensor] = {}
        self.bias: Dict[str, ParamTensor] = {}
        for entry in registry.entries.values():
            if entry.kind not in ADAPTABLE_KINDS:
                logger.warning(f"Layer type {entry.type_id} ({entry.kind}) is not adapted", members=len(entry.members))
                continue
            for layer in entry.members:
                slot = f"type{entry.type_id}" if shared else layer
                self.layers.append(layer)
                self.layer_dims[layer] = (entry.d_in, entry.d_out)
                self.slot_of[layer] = slot
                if slot not in self.w1:
                    self.w1[slot] = ParamTensor(
                        f"generator.{slot}.w1", ParamKind.LINEAR, uniform_init(rng, (rank, d_c), d_c)
                    )
                    self.w2[slot] = ParamTensor(
                        f"generator.{slot}.w2", ParamKind.LINEAR, np.zeros((entry.d_in + entry.d_out, rank))
                    )
                self.bias[layer] = ParamTensor(f"generator.{layer}.b", ParamKind.BIAS, np.zeros(rank))

    def param_list(self) -> List[ParamTensor]:
        params: List[ParamTensor] = []
        for slot in self.w1:
            params += [self.w1[slot], self.w2[slot]]
        return params + [self.bias[layer] for layer in self.layers]

    def param_count(self) -> int:
        return sum(p.size for p in self.param_list())

    def check_registry(self, registry: LayerTypeRegistry) -> None:
        if registry.fingerprint() != self.registry_fingerprint:
            raise RegistryMismatch("generator was built for a different layer registry")

    def generate(self, inputs: np.ndarray) -> Tuple[AdaptationCoefficients, GeneratorCache]:
        """Coefficients for a batch of generator inputs (B, d_c)."""
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.d_c:
            raise DimMismatch(f"generator expects (B, {self.d_c}), got {inputs.shape}")
        cache = GeneratorCache(inputs)
        layers: Dict[str, LayerScaling] = {}
        for layer in self.layers:
            slot = self.slot_of[layer]
            hidden = _sigmoid(inputs @ self.w1[slot].values.T + self.bias[layer].values)
            out = hidden @ self.w2[slot].values.T + 1.0
            d_in, _ = self.layer_dims[layer]
            layers[layer] = LayerScaling(out[:, :d_in] if d_in else None, out[:, d_in:])
            cache.hidden[layer] = hidden
        return AdaptationCoefficients(layers), cache

    def backward(self, cache: GeneratorCache, grads: Mapping[str, LayerScaling]) -> np.ndarray:
        """Accumulate parameter gradients; return the gradient wrt the inputs."""
        g_inputs = np.zeros_like(cache.inputs)
        for layer in self.layers:
            if layer not in grads:
                continue
            g = grads[layer]
            g_out = g.beta if g.alpha is None else np.concatenate([g.alpha, g.beta], axis=1)
            slot = self.slot_of[layer]
            hidden = cache.hidden[layer]
            self.w2[slot].grad += g_out.T @ hidden
            g_pre = (g_out @ self.w2[slot].values) * hidden * (1.0 - hidden)
            self.w1[slot].grad += g_pre.T @ cache.inputs
            self.bias[layer].grad += g_pre.sum(axis=0)
            g_inputs += g_pre @ self.w1[slot].values
        return g_inputs


def generate_coefficients(
    gen: CoeffGenerator, drift: DriftVector, registry: LayerTypeRegistry
) -> AdaptationCoefficients:
    """Coefficients for one drift vector (d_c,) or a batch (B, d_c)."""
    gen.check_registry(registry)
    drift = np.asarray(drift, dtype=np.float64)
    return gen.generate(drift[None] if drift.ndim == 1 else drift)[0]


def adapter_param_count(gen: CoeffGenerator, registry: LayerTypeRegistry) -> int:
    """Generator parameters: per slot r·d_c + r·(d_in+d_out), plus r per layer."""
    gen.check_registry(registry)
    return gen.param_count()


def naive_param_count(registry: LayerTypeRegistry, d_c: int) -> int:
    """Size of a dense map from a d_c drift to every adapted parameter."""
    total = 0
    for entry in registry.entries.values():
        if entry.kind in ADAPTABLE_KINDS:
            total += len(entry.members) * d_c * int(np.prod(entry.dims))
    return total


# Applying coefficients ------------------------------------------------------


def materialize_adapted(theta: ParamTensor, alpha: Optional[np.ndarray], beta: np.ndarray) -> np.ndarray:
    """Return ``outer(alpha, beta) * theta`` (``beta * theta`` for a bias); theta is untouched."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (theta.d_out,):
        raise DimMismatch(f"{theta.name}: beta {beta.shape} vs d_out {theta.d_out}")
    if theta.kind is ParamKind.BIAS:
        return beta * theta.values
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (theta.d_in,):
        raise DimMismatch(f"{theta.name}: alpha {alpha.shape} vs d_in {theta.d_in}")
    scale = np.outer(alpha, beta)
    if theta.kind is ParamKind.CONV_FILTER:
        scale = scale[:, :, None]
    return scale * theta.values


def adapted_forward(model: ForecastModel, coeffs: AdaptationCoefficients, x: np.ndarray) -> np.ndarray:
    """Forecast each batch item with its own coefficients, applied to activations."""
    x = np.asarray(x, dtype=np.float64)
    if coeffs.batch_size != x.shape[0]:
        raise BatchArityMismatch(f"{coeffs.batch_size} coefficient sets for a batch of {x.shape[0]}")
    return model.forward(x, coeffs.layers)[0]


def materialized_forward(model: ForecastModel, coeffs: AdaptationCoefficients, x: np.ndarray) -> np.ndarray:
    """Reference path: build each item's rescaled parameters and run a plain forward."""
    x = np.asarray(x, dtype=np.float64)
    if coeffs.batch_size != x.shape[0]:
        raise BatchArityMismatch(f"{coeffs.batch_size} coefficient sets for a batch of {x.shape[0]}")
    outputs = []
    for i in range(x.shape[0]):
        scalings = coeffs.item(i)
        params = []
        for p in model.param_list():
            values = p.values if p.name not in scalings else materialize_adapted(p, *scalings[p.name])
            params.append(ParamTensor(p.name, p.kind, values, p.layer_type_id))
        clone = ForecastModel(
            model.architecture,
            Network(params, model.network.ops),
            model.n_variates,
            model.lookback,
            model.horizon,
            model.revin,
            model.options,
        )
        outputs.append(clone.predict(x[i:i + 1])[0])
    return np.stack(outputs)


# Adapter --------------------------------------------------------------------


@dataclass(frozen=True)
class AdapterConfig:
    """Adapter hyperparameters and ablation switches.

    ``generator_input`` is ``drift`` (concept difference) or ``concept`` (the
    current concept alone). ``prev_encoder`` picks the encoder for already
    observed samples: ``e`` reads lookback and horizon, ``e_prime`` reads the
    lookback only; ``shared_encoder`` forces ``e_prime``.
    """

    d_c: int = 100
    rank: int = 32
    aggregation: str = "average"
    prev_encoder: str = "e"
    generator_input: str = "drift"
    shared_encoder: bool = False
    share_w1w2: bool = True

    def __post_init__(self):
        if self.d_c < 1:
            raise BadValue("d_c", f"must be >= 1, got {self.d_c}")
        if self.rank < 1:
            raise BadValue("rank", f"must be >= 1, got {self.rank}")
        if self.aggregation not in {m.value for m in AggregationMode}:
            raise BadValue("aggregation", self.aggregation)
        if self.prev_encoder not in ("e", "e_prime"):
            raise BadValue("prev_batch_encoder", self.prev_encoder)
        if self.generator_input not in ("drift", "concept"):
            raise BadValue("generator_input", self.generator_input)

    @property
    def effective_prev_encoder(self) -> str:
        return "e_prime" if self.shared_encoder else self.prev_encoder

    @property
    def uses_encoder_e(self) -> bool:
        return self.generator_input == "drift" and self.effective_prev_encoder == "e"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class AdapterCache:
    current: EncoderCache
    generator: GeneratorCache
    previous: Optional[EncoderCache] = None
    previous_encoder: Optional[ConceptEncoder] = None
    previous_index: Optional[np.ndarray] = None


class DriftAdapter:
    """Concept encoders plus coefficient generator for one forecast model."""

    def __init__(
        self,
        registry: LayerTypeRegistry,
        n_variates: int,
        lookback: int,
        horizon: int,
        config: Optional[AdapterConfig] = None,
        seed: int = 0,
    ):
        self.config = config or AdapterConfig()
        self.n_variates = n_variates
        self.lookback = lookback
        self.horizon = horizon
        self.seed = seed
        rng = np.random.default_rng(seed)
        cfg = self.config
        # E last: configurations without it draw identical E' and generator weights
        self.encoder_e_prime = ConceptEncoderEPrime(lookback, cfg.d_c, n_variates, cfg.aggregation, rng)
        self.generator = CoeffGenerator(registry, cfg.d_c, cfg.rank, cfg.share_w1w2, rng)
        self.encoder_e: Optional[ConceptEncoderE] = None
        if cfg.uses_encoder_e:
            self.encoder_e = ConceptEncoderE(lookback, horizon, cfg.d_c, n_variates, cfg.aggregation, rng)
        logger.info(
            "Adapter built",
            layers=len(self.generator.layers),
            generator_params=self.generator.param_count(),
            encoder_params=self.encoder_param_count(),
        )

    @classmethod
    def for_model(cls, model: ForecastModel, config: Optional[AdapterConfig] = None, seed: int = 0) -> "DriftAdapter":
        return cls(model.registry, model.n_variates, model.lookback, model.horizon, config, seed)

    def param_list(self) -> List[ParamTensor]:
        params: List[ParamTensor] = []
        if self.encoder_e is not None:
            params += self.encoder_e.param_list()
        return params + self.encoder_e_prime.param_list() + self.generator.param_list()

    def encoder_param_count(self) -> int:
        count = self.encoder_e_prime.param_count()
        return count + (self.encoder_e.param_count() if self.encoder_e is not None else 0)

    def checksum(self) -> str:
        return param_checksum(self.param_list())

    def zero_grad(self) -> None:
        for p in self.param_list():
            p.zero_grad()

    # concepts -----------------------------------------------------------

    def previous_concepts(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, EncoderCache, ConceptEncoder]:
        """Concepts (B, d_c) of fully observed samples."""
        if self.config.effective_prev_encoder == "e" and self.encoder_e is not None:
            concepts, cache = self.encoder_e.encode_pairs(x, y)
            return concepts, cache, self.encoder_e
        concepts, cache = self.encoder_e_prime.encode(x)
        return concepts, cache, self.encoder_e_prime

    def current_concepts(self, x: np.ndarray) -> Tuple[np.ndarray, EncoderCache]:
        return self.encoder_e_prime.encode(x)

    def generator_inputs(self, current: np.ndarray, previous: Optional[np.ndarray]) -> np.ndarray:
        """Drift from ``previous`` to ``current`` (or the current concept alone)."""
        if self.config.generator_input == "concept":
            return current
        if previous is None:
            return np.zeros_like(current)
        return estimate_drift(current, np.broadcast_to(previous, current.shape))

    # training path --------------------------------------------------------

    def coefficients(
        self, x: np.ndarray, prev_x: Optional[np.ndarray] = None, prev_y: Optional[np.ndarray] = None
    ) -> Tuple[AdaptationCoefficients, AdapterCache]:
        """Per-item coefficients for lookbacks ``x`` (B, N, L).

        Item ``i`` drifts from previous sample ``i mod P`` of the ``P`` samples
        ``(prev_x, prev_y)``, one observed sample per forecast as in the online
        loop. Without previous samples the drift is zero.
        """
        current, current_cache = self.current_concepts(x)
        previous = prev_cache = prev_encoder = index = None
        if self.config.generator_input == "drift" and prev_x is not None:
            prev_concepts, prev_cache, prev_encoder = self.previous_concepts(prev_x, prev_y)
            index = np.arange(current.shape[0]) % prev_concepts.shape[0]
            previous = prev_concepts[index]
        coeffs, gen_cache = self.generator.generate(self.generator_inputs(current, previous))
        return coeffs, AdapterCache(current_cache, gen_cache, prev_cache, prev_encoder, index)

    def backward(self, cache: AdapterCache, scaling_grads: Mapping[str, LayerScaling]) -> None:
        g_inputs = self.generator.backward(cache.generator, scaling_grads)
        if self.config.generator_input == "concept":
            self.encoder_e_prime.backward(cache.current, g_inputs)
            return
        if cache.previous is None:
            return
        self.encoder_e_prime.backward(cache.current, g_inputs)
        g_prev = np.zeros((cache.previous.features.shape[0], g_inputs.shape[1]))
        np.add.at(g_prev, cache.previous_index, -g_inputs)
        cache.previous_encoder.backward(cache.previous, g_prev)

    # persistence ----------------------------------------------------------

    def checkpoint_metadata(self) -> Dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "n_variates": self.n_variates,
            "lookback": self.lookback,
            "horizon": self.horizon,
            "seed": self.seed,
        }

    @classmethod
    def from_checkpoint(
        cls, metadata: Mapping[str, Any], tensors: Sequence[ParamTensor], registry: LayerTypeRegistry
    ) -> "DriftAdapter":
        try:
            adapter = cls(
                registry,
                int(metadata["n_variates"]),
                int(metadata["lookback"]),
                int(metadata["horizon"]),
                AdapterConfig(**metadata["config"]),
                int(metadata.get("seed", 0)),
            )
        except (KeyError, TypeError) as e:
            raise WiringMismatch(f"adapter checkpoint metadata unusable: {e}") from e
        own = {p.name: p for p in adapter.param_list()}
        if set(own) != {t.name for t in tensors}:
            raise RegistryMismatch("adapter checkpoint tensors do not match the model registry")
        for tensor in tensors:
            own[tensor.name].assign(tensor.values)
        return adapter
