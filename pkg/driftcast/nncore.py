"""Dense numpy network core.

Parameters live in :class:`ParamTensor` records tagged with a kind and a
layer-type id. A :class:`Network` wires them through a short tuple of ops.
Every tagged parameter can be rescaled per batch item on its input side
(``alpha``) and output side (``beta``); the rescaling is applied to the
activations, so the stored values are never written by a forward pass.

Array layout is ``(batch, variates, features...)``. Dense ops act on the last
axis; Conv1d acts on ``(..., channels, time)``.
"""
import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from driftcast.exceptions import ShapeMismatch, StaleCache

# tanh approximation of GeLU
GELU_COEF = math.sqrt(2.0 / math.pi)
GELU_CUBIC = 0.044715


class ParamKind(str, enum.Enum):
    """Shape family of a parameter tensor."""

    LINEAR = "linear"  # (d_in, d_out)
    BIAS = "bias"  # (d_out,)
    CONV_FILTER = "conv_filter"  # (d_in, d_out, d_k)


_KIND_RANK = {ParamKind.LINEAR: 2, ParamKind.BIAS: 1, ParamKind.CONV_FILTER: 3}


@dataclass
class ParamTensor:
    """A named parameter with its gradient accumulator.

    ``version`` is bumped whenever the values are replaced or stepped; forward
    caches remember it so a backward after an update is refused.
    """

    name: str
    kind: ParamKind
    values: np.ndarray
    layer_type_id: int = 0
    grad: Optional[np.ndarray] = None
    version: int = 0

    def __post_init__(self):
        self.kind = ParamKind(self.kind)
        self.values = np.array(self.values, dtype=np.float64, copy=True)
        if self.values.ndim != _KIND_RANK[self.kind]:
            raise ShapeMismatch(
                self.name, f"{self.kind.value} needs rank {_KIND_RANK[self.kind]}, got {self.values.shape}"
            )
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        elif self.grad.shape != self.values.shape:
            raise ShapeMismatch(self.name, "gradient shape differs from values")

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def d_in(self) -> int:
        return 0 if self.kind is ParamKind.BIAS else self.values.shape[0]

    @property
    def d_out(self) -> int:
        return self.values.shape[0] if self.kind is ParamKind.BIAS else self.values.shape[1]

    @property
    def signature(self) -> Tuple[str, Tuple[int, ...]]:
        return self.kind.value, self.dims

    @property
    def size(self) -> int:
        return int(self.values.size)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def assign(self, values: np.ndarray) -> None:
        """Overwrite the values in place and invalidate outstanding caches."""
        if np.shape(values) != self.values.shape:
            raise ShapeMismatch(self.name, f"cannot assign {np.shape(values)} to {self.values.shape}")
        self.values[...] = values
        self.version += 1

    def copy(self) -> "ParamTensor":
        return ParamTensor(self.name, self.kind, self.values, self.layer_type_id)


@dataclass(frozen=True)
class LayerScaling:
    """Per-item rescaling of one parameter: ``alpha`` (B, d_in), ``beta`` (B, d_out).

    Bias parameters carry ``beta`` only.
    """

    alpha: Optional[np.ndarray]
    beta: np.ndarray

    @property
    def batch_size(self) -> int:
        return int(self.beta.shape[0])


# Wiring ops -----------------------------------------------------------------


@dataclass(frozen=True)
class Dense:
    weight: str
    bias: Optional[str] = None


@dataclass(frozen=True)
class Conv1d:
    """Causal 1-D convolution, stride 1, dilation 1, left zero padding."""

    filter: str
    bias: Optional[str] = None


@dataclass(frozen=True)
class Gelu:
    pass


@dataclass(frozen=True)
class AddChannel:
    """(..., T) -> (..., 1, T)."""


@dataclass(frozen=True)
class Flatten:
    """(..., C, T) -> (..., C*T)."""


Op = Union[Dense, Conv1d, Gelu, AddChannel, Flatten]


def op_to_dict(op: Op) -> Dict[str, Optional[str]]:
    payload: Dict[str, Optional[str]] = {"op": type(op).__name__}
    if isinstance(op, Dense):
        payload.update(weight=op.weight, bias=op.bias)
    elif isinstance(op, Conv1d):
        payload.update(filter=op.filter, bias=op.bias)
    return payload


def op_from_dict(payload: Mapping[str, Optional[str]]) -> Op:
    kind = payload["op"]
    if kind == "Dense":
        return Dense(payload["weight"], payload.get("bias"))
    if kind == "Conv1d":
        return Conv1d(payload["filter"], payload.get("bias"))
    if kind == "Gelu":
        return Gelu()
    if kind == "AddChannel":
        return AddChannel()
    if kind == "Flatten":
        return Flatten()
    raise ShapeMismatch(str(kind), "unknown op")


@dataclass
class ForwardCache:
    owner: "Network"
    records: List[tuple]
    versions: Dict[str, int]
    output_shape: Tuple[int, ...]


@dataclass
class Gradients:
    """Result of :meth:`Network.backward`.

    ``params`` holds this call's gradients (they are also accumulated into each
    ``ParamTensor.grad``); ``scaling`` holds gradients for every scaled layer.
    """

    input: np.ndarray
    params: Dict[str, np.ndarray] = field(default_factory=dict)
    scaling: Dict[str, LayerScaling] = field(default_factory=dict)


def _expand(coef: np.ndarray, ndim: int, axis: int) -> np.ndarray:
    shape = [1] * ndim
    shape[0] = coef.shape[0]
    shape[axis] = coef.shape[1]
    return coef.reshape(shape)


def _sum_items(arr: np.ndarray, axis: int) -> np.ndarray:
    """Sum over everything except the batch axis and the feature ``axis``."""
    keep = arr.ndim + axis
    axes = tuple(i for i in range(1, arr.ndim) if i != keep)
    return arr.sum(axis=axes)


def _sum_all_but(arr: np.ndarray, axis: int) -> np.ndarray:
    keep = arr.ndim + axis
    return arr.sum(axis=tuple(i for i in range(arr.ndim) if i != keep))


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(GELU_COEF * (x + GELU_CUBIC * x ** 3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    th = np.tanh(GELU_COEF * (x + GELU_CUBIC * x ** 3))
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th ** 2) * GELU_COEF * (1.0 + 3.0 * GELU_CUBIC * x ** 2)


class Network:
    """An ordered parameter store plus the ops that wire it."""

    def __init__(self, params: Sequence[ParamTensor], ops: Sequence[Op]):
        self.params: Dict[str, ParamTensor] = {}
        for p in params:
            if p.name in self.params:
                raise ShapeMismatch(p.name, "duplicate parameter name")
            self.params[p.name] = p
        self.ops: Tuple[Op, ...] = tuple(ops)
        for op in self.ops:
            self._check_op(op)

    def _check_op(self, op: Op) -> None:
        if isinstance(op, Dense):
            main, main_kind = op.weight, ParamKind.LINEAR
        elif isinstance(op, Conv1d):
            main, main_kind = op.filter, ParamKind.CONV_FILTER
        else:
            return
        if main not in self.params or self.params[main].kind is not main_kind:
            raise ShapeMismatch(main, f"expected a {main_kind.value} parameter")
        if op.bias is not None:
            bias = self.params.get(op.bias)
            if bias is None or bias.kind is not ParamKind.BIAS:
                raise ShapeMismatch(op.bias, "expected a bias parameter")
            if bias.d_out != self.params[main].d_out:
                raise ShapeMismatch(op.bias, "bias width differs from its layer")

    def param_list(self) -> List[ParamTensor]:
        return list(self.params.values())

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    # forward ------------------------------------------------------------

    def forward(
        self, x: np.ndarray, scaling: Optional[Mapping[str, LayerScaling]] = None
    ) -> Tuple[np.ndarray, ForwardCache]:
        h = np.ascontiguousarray(x, dtype=np.float64)
        records: List[tuple] = []
        for op in self.ops:
            if isinstance(op, Dense):
                h, rec = self._dense_forward(op, h, scaling)
            elif isinstance(op, Conv1d):
                h, rec = self._conv_forward(op, h, scaling)
            elif isinstance(op, Gelu):
                rec = ("gelu", h)
                h = gelu(h)
            elif isinstance(op, AddChannel):
                rec = ("reshape", h.shape)
                h = h.reshape(h.shape[:-1] + (1, h.shape[-1]))
            elif isinstance(op, Flatten):
                rec = ("reshape", h.shape)
                h = h.reshape(h.shape[:-2] + (h.shape[-2] * h.shape[-1],))
            else:
                raise ShapeMismatch(type(op).__name__, "unknown op")
            records.append(rec)
        versions = {name: p.version for name, p in self.params.items()}
        return h, ForwardCache(self, records, versions, h.shape)

    def _scaling_for(self, scaling, name, batch) -> Optional[LayerScaling]:
        if not scaling or name not in scaling:
            return None
        s = scaling[name]
        if s.beta.shape[0] != batch:
            raise ShapeMismatch(name, f"scaling for {s.beta.shape[0]} items, batch has {batch}")
        return s

    def _dense_forward(self, op: Dense, h: np.ndarray, scaling):
        w = self.params[op.weight]
        if h.ndim < 2 or h.shape[-1] != w.d_in:
            raise ShapeMismatch(op.weight, f"input {h.shape} vs weight {w.dims}")
        s = self._scaling_for(scaling, op.weight, h.shape[0])
        u = h * _expand(s.alpha, h.ndim, -1) if s is not None and s.alpha is not None else h
        z = u @ w.values
        y = z * _expand(s.beta, z.ndim, -1) if s is not None else z
        sb = None
        if op.bias is not None:
            b = self.params[op.bias]
            sb = self._scaling_for(scaling, op.bias, h.shape[0])
            y = y + (b.values * _expand(sb.beta, y.ndim, -1) if sb is not None else b.values)
        return y, ("dense", op, h, u, z, s, sb)

    def _conv_forward(self, op: Conv1d, h: np.ndarray, scaling):
        f = self.params[op.filter]
        d_in, _, d_k = f.dims
        if h.ndim < 3 or h.shape[-2] != d_in:
            raise ShapeMismatch(op.filter, f"input {h.shape} vs filter {f.dims}")
        s = self._scaling_for(scaling, op.filter, h.shape[0])
        u = h * _expand(s.alpha, h.ndim, -2) if s is not None and s.alpha is not None else h
        pad = [(0, 0)] * (u.ndim - 1) + [(d_k - 1, 0)]
        up = np.pad(u, pad)
        win = sliding_window_view(up, d_k, axis=-1)  # (..., C_in, T, K)
        nd = win.ndim
        z = np.tensordot(win, f.values, axes=([nd - 3, nd - 1], [0, 2]))  # (..., T, C_out)
        z = np.ascontiguousarray(np.swapaxes(z, -1, -2))
        y = z * _expand(s.beta, z.ndim, -2) if s is not None else z
        sb = None
        if op.bias is not None:
            b = self.params[op.bias]
            sb = self._scaling_for(scaling, op.bias, h.shape[0])
            column = b.values[:, None]
            y = y + (column * _expand(sb.beta, y.ndim, -2) if sb is not None else column)
        return y, ("conv", op, h, u, up.shape, win, z, s, sb)

    # backward -----------------------------------------------------------

    def backward(self, cache: ForwardCache, grad_out: np.ndarray) -> Gradients:
        if cache.owner is not self:
            raise StaleCache("cache was produced by another network")
        for name, version in cache.versions.items():
            if self.params[name].version != version:
                raise StaleCache(f"{name} changed since the forward pass")
        g = np.asarray(grad_out, dtype=np.float64)
        if g.shape != cache.output_shape:
            raise ShapeMismatch("output", f"upstream gradient {g.shape} vs output {cache.output_shape}")
        result = Gradients(input=g)
        for rec in reversed(cache.records):
            tag = rec[0]
            if tag == "dense":
                g = self._dense_backward(rec, g, result)
            elif tag == "conv":
                g = self._conv_backward(rec, g, result)
            elif tag == "gelu":
                g = g * gelu_grad(rec[1])
            else:
                g = g.reshape(rec[1])
        result.input = g
        return result

    def _accumulate(self, result: Gradients, name: str, grad: np.ndarray) -> None:
        self.params[name].grad += grad
        if name in result.params:
            result.params[name] = result.params[name] + grad
        else:
            result.params[name] = grad

    def _dense_backward(self, rec, g: np.ndarray, result: Gradients) -> np.ndarray:
        _, op, h, u, z, s, sb = rec
        w = self.params[op.weight]
        if op.bias is not None:
            b = self.params[op.bias]
            if sb is not None:
                self._accumulate(result, op.bias, _sum_all_but(g * _expand(sb.beta, g.ndim, -1), -1))
                result.scaling[op.bias] = LayerScaling(None, _sum_items(g * b.values, -1))
            else:
                self._accumulate(result, op.bias, _sum_all_but(g, -1))
        if s is not None:
            gbeta = _sum_items(g * z, -1)
            gz = g * _expand(s.beta, g.ndim, -1)
        else:
            gz = g
        self._accumulate(result, op.weight, u.reshape(-1, w.d_in).T @ gz.reshape(-1, w.d_out))
        gu = gz @ w.values.T
        if s is None:
            return gu
        if s.alpha is None:
            result.scaling[op.weight] = LayerScaling(None, gbeta)
            return gu
        result.scaling[op.weight] = LayerScaling(_sum_items(gu * h, -1), gbeta)
        return gu * _expand(s.alpha, gu.ndim, -1)

    def _conv_backward(self, rec, g: np.ndarray, result: Gradients) -> np.ndarray:
        _, op, h, u, up_shape, win, z, s, sb = rec
        f = self.params[op.filter]
        d_k = f.dims[2]
        steps = g.shape[-1]
        if op.bias is not None:
            b = self.params[op.bias]
            column = b.values[:, None]
            if sb is not None:
                self._accumulate(result, op.bias, _sum_all_but(g * _expand(sb.beta, g.ndim, -2), -2))
                result.scaling[op.bias] = LayerScaling(None, _sum_items(g * column, -2))
            else:
                self._accumulate(result, op.bias, _sum_all_but(g, -2))
        if s is not None:
            gbeta = _sum_items(g * z, -2)
            gz = g * _expand(s.beta, g.ndim, -2)
        else:
            gz = g
        nd = win.ndim
        lead = list(range(nd - 3))
        gf = np.tensordot(win, gz, axes=(lead + [nd - 2], lead + [gz.ndim - 1]))  # (C_in, K, C_out)
        self._accumulate(result, op.filter, np.ascontiguousarray(gf.transpose(0, 2, 1)))
        gup = np.zeros(up_shape)
        for j in range(d_k):
            contrib = np.tensordot(gz, f.values[:, :, j], axes=([gz.ndim - 2], [1]))  # (..., T, C_in)
            gup[..., j:j + steps] += np.swapaxes(contrib, -1, -2)
        gu = gup[..., d_k - 1:]
        if s is None:
            return gu
        if s.alpha is None:
            result.scaling[op.filter] = LayerScaling(None, gbeta)
            return gu
        result.scaling[op.filter] = LayerScaling(_sum_items(gu * h, -2), gbeta)
        return gu * _expand(s.alpha, gu.ndim, -2)


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def param_checksum(params: Iterable[ParamTensor]) -> str:
    digest = hashlib.sha256()
    for p in params:
        digest.update(p.name.encode("utf-8"))
        digest.update(np.ascontiguousarray(p.values).tobytes())
    return digest.hexdigest()


# Losses ---------------------------------------------------------------------


def _check_pair(yhat: np.ndarray, y: np.ndarray, ndim: int) -> Tuple[np.ndarray, np.ndarray]:
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.shape != y.shape or yhat.ndim != ndim:
        raise ShapeMismatch("loss", f"{yhat.shape} vs {y.shape}")
    return yhat, y


def mse(yhat: np.ndarray, y: np.ndarray) -> float:
    """Squared L2 error of one N×H forecast, divided by N (not by H)."""
    yhat, y = _check_pair(yhat, y, 2)
    return float(np.sum((yhat - y) ** 2) / yhat.shape[0])


def mae(yhat: np.ndarray, y: np.ndarray) -> float:
    """L1 error of one N×H forecast, divided by N."""
    yhat, y = _check_pair(yhat, y, 2)
    return float(np.sum(np.abs(yhat - y)) / yhat.shape[0])


def batch_mse(yhat: np.ndarray, y: np.ndarray) -> float:
    """Mean over the batch of :func:`mse` for (B, N, H) arrays."""
    yhat, y = _check_pair(yhat, y, 3)
    return float(np.mean(np.sum((yhat - y) ** 2, axis=(1, 2)) / yhat.shape[1]))


def batch_mse_grad(yhat: np.ndarray, y: np.ndarray) -> np.ndarray:
    yhat, y = _check_pair(yhat, y, 3)
    return 2.0 * (yhat - y) / (yhat.shape[0] * yhat.shape[1])


# Adam -----------------------------------------------------------------------


@dataclass
class AdamState:
    """Adam moments keyed by parameter name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"Invalid learning rate: {self.lr}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"Invalid beta values: {self.beta1}, {self.beta2}")
        if not self.eps > 0:
            raise ValueError(f"Invalid epsilon value: {self.eps}")

    def hyperparameters(self) -> Dict[str, float]:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


def adam_step(state: AdamState, params: Iterable[ParamTensor]) -> AdamState:
    """One bias-corrected Adam update; gradients are zeroed afterwards."""
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for p in params:
        m = state.m.get(p.name)
        v = state.v.get(p.name)
        if m is None:
            m = np.zeros_like(p.values)
            v = np.zeros_like(p.values)
        elif m.shape != p.values.shape:
            raise ShapeMismatch(p.name, "optimizer moments do not match parameter")
        m = state.beta1 * m + (1.0 - state.beta1) * p.grad
        v = state.beta2 * v + (1.0 - state.beta2) * p.grad * p.grad
        state.m[p.name] = m
        state.v[p.name] = v
        p.values -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        p.version += 1
        p.zero_grad()
    return state


# RevIN ----------------------------------------------------------------------


@dataclass(frozen=True)
class RevinState:
    """Instance statistics over the last axis, kept with ``keepdims``."""

    center: np.ndarray
    std: np.ndarray
    eps: float


def revin_normalize(
    x: np.ndarray, eps: float = 1e-5, subtract_last: bool = False
) -> Tuple[np.ndarray, RevinState]:
    x = np.asarray(x, dtype=np.float64)
    std = np.maximum(np.sqrt(np.var(x, axis=-1, keepdims=True)), eps)
    center = x[..., -1:].copy() if subtract_last else np.mean(x, axis=-1, keepdims=True)
    return (x - center) / std, RevinState(center=center, std=std, eps=eps)


def revin_denormalize(yhat: np.ndarray, state: RevinState) -> np.ndarray:
    return np.asarray(yhat, dtype=np.float64) * state.std + state.center
