"""Dense-network numeric core: forward evaluation, reverse-mode gradients, AdamW.

Tensors are plain ``numpy.ndarray`` values. Parameters live in a flat dict keyed
``"<layer index>.weight"`` / ``"<layer index>.bias"``; dense weights have shape
``(in_dim, out_dim)`` so a layer computes ``x @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import ConfigError, NumericError, ShapeError, UsageError

Params = Dict[str, np.ndarray]


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    bias: bool = True


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Sigmoid:
    pass


@dataclass(frozen=True)
class Softmax:
    pass


Layer = Union[Dense, ReLU, Sigmoid, Softmax]
_ACTIVATIONS = {"relu": ReLU, "sigmoid": Sigmoid, "softmax": Softmax}


def layer_to_dict(layer: Layer) -> dict:
    if isinstance(layer, Dense):
        return {"type": "dense", "in_dim": layer.in_dim, "out_dim": layer.out_dim, "bias": layer.bias}
    return {"type": type(layer).__name__.lower()}


def layer_from_dict(d: dict) -> Layer:
    kind = d.get("type")
    if kind == "dense":
        return Dense(int(d["in_dim"]), int(d["out_dim"]), bool(d.get("bias", True)))
    if kind in _ACTIVATIONS:
        return _ACTIVATIONS[kind]()
    raise ConfigError(f"unknown layer type {kind!r}", key="type")


@dataclass(frozen=True)
class NetworkSpec:
    layers: Tuple[Layer, ...]
    role: str = "encoder"
    feature_dim: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        validate_spec(self)

    @property
    def in_dim(self) -> int:
        return next(l.in_dim for l in self.layers if isinstance(l, Dense))

    @property
    def out_dim(self) -> int:
        return [l for l in self.layers if isinstance(l, Dense)][-1].out_dim

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        shapes = {}
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Dense):
                shapes[f"{i}.weight"] = (layer.in_dim, layer.out_dim)
                if layer.bias:
                    shapes[f"{i}.bias"] = (layer.out_dim,)
        return shapes

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "feature_dim": self.feature_dim,
            "layers": [layer_to_dict(l) for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            layers=tuple(layer_from_dict(l) for l in d["layers"]),
            role=d.get("role", "encoder"),
            feature_dim=d.get("feature_dim"),
        )


def mlp(dims, role="encoder", final_activation=None, bias=True) -> NetworkSpec:
    """Dense stack with relu between consecutive dense layers.

    ``mlp([16, 64, 64], role="encoder")`` gives dense(16,64) relu dense(64,64),
    and for encoders ``final_activation`` defaults to relu so features are
    non-negative activations like a pooled conv trunk.
    """
    layers: List[Layer] = []
    for k in range(len(dims) - 1):
        layers.append(Dense(dims[k], dims[k + 1], bias))
        if k < len(dims) - 2:
            layers.append(ReLU())
    if final_activation is None and role == "encoder":
        final_activation = "relu"
    if final_activation:
        layers.append(_ACTIVATIONS[final_activation]())
    feature_dim = dims[-1] if role == "encoder" else None
    return NetworkSpec(tuple(layers), role=role, feature_dim=feature_dim)


def validate_spec(spec: NetworkSpec) -> None:
    if spec.role not in ("encoder", "classifier"):
        raise ConfigError(f"unknown network role {spec.role!r}", key="role")
    dense = [l for l in spec.layers if isinstance(l, Dense)]
    if not dense:
        raise ConfigError("network needs at least one dense layer", key="layers")
    for layer in spec.layers:
        if not isinstance(layer, (Dense, ReLU, Sigmoid, Softmax)):
            raise ConfigError(f"unsupported layer {layer!r}", key="layers")
        if isinstance(layer, Dense) and (layer.in_dim < 1 or layer.out_dim < 1):
            raise ConfigError(f"dense dimensions must be positive, got {layer}", key="layers")
    for a, b in zip(dense, dense[1:]):
        if a.out_dim != b.in_dim:
            raise ConfigError(
                f"dimension chain broken: dense out_dim {a.out_dim} feeds in_dim {b.in_dim}",
                key="layers",
            )
    if spec.role == "encoder" and spec.feature_dim is not None and spec.feature_dim != dense[-1].out_dim:
        raise ConfigError(
            f"encoder output {dense[-1].out_dim} != declared feature_dim {spec.feature_dim}",
            key="feature_dim",
        )


def init_network(spec: NetworkSpec, seed: int) -> Params:
    """He-scaled normal weights, zero biases; bit-identical for a fixed seed."""
    validate_spec(spec)
    rng = np.random.default_rng(seed)
    params: Params = {}
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            std = np.sqrt(2.0 / layer.in_dim)
            params[f"{i}.weight"] = rng.standard_normal((layer.in_dim, layer.out_dim)) * std
            if layer.bias:
                params[f"{i}.bias"] = np.zeros(layer.out_dim)
    return params


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class GradientTape:
    spec: NetworkSpec
    params: Params
    inputs: List[np.ndarray]
    outputs: List[np.ndarray]
    squeeze: bool
    used: bool = field(default=False)


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


def forward(params: Params, spec: NetworkSpec, x: np.ndarray, record: bool = False):
    """Evaluate the network on ``x`` of shape ``(in_dim,)`` or ``(batch, in_dim)``.

    Returns ``(output, tape)``; ``tape`` is None unless ``record`` is set.
    Computation happens in the dtype of ``x`` (float64 for training, float32
    for bundle inference).
    """
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != spec.in_dim:
        raise ShapeError(f"input shape {x.shape} does not match network in_dim {spec.in_dim}")
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    inputs, outputs = [], []
    for i, layer in enumerate(spec.layers):
        inputs.append(h)
        if isinstance(layer, Dense):
            out = h @ params[f"{i}.weight"]
            if layer.bias:
                out = out + params[f"{i}.bias"]
        elif isinstance(layer, ReLU):
            out = np.maximum(h, 0)
        elif isinstance(layer, Sigmoid):
            out = sigmoid(h)
        else:
            out = softmax(h)
        outputs.append(out)
        h = out
    _check_finite(h, "network output")
    result = h[0] if squeeze else h
    tape = GradientTape(spec, params, inputs, outputs, squeeze) if record else None
    return result, tape


def backward(tape: GradientTape, output_grad: np.ndarray):
    """Back-propagate ``output_grad`` through a recorded pass.

    Returns ``(param_grads, input_grad)``. A tape is single-use.
    """
    if tape.used:
        raise UsageError("gradient tape already consumed by a previous backward call")
    tape.used = True
    g = np.asarray(output_grad, dtype=tape.outputs[-1].dtype)
    if tape.squeeze:
        g = g[None, :] if g.ndim == 1 else g
    if g.shape != tape.outputs[-1].shape:
        raise ShapeError(f"output_grad shape {np.shape(output_grad)} != forward output shape")
    grads: Params = {}
    for i in range(len(tape.spec.layers) - 1, -1, -1):
        layer = tape.spec.layers[i]
        x_in, y = tape.inputs[i], tape.outputs[i]
        if isinstance(layer, Dense):
            w = tape.params[f"{i}.weight"]
            grads[f"{i}.weight"] = x_in.T @ g
            if layer.bias:
                grads[f"{i}.bias"] = g.sum(axis=0)
            g = g @ w.T
        elif isinstance(layer, ReLU):
            g = g * (x_in > 0)
        elif isinstance(layer, Sigmoid):
            g = g * y * (1.0 - y)
        else:
            g = y * (g - np.sum(g * y, axis=-1, keepdims=True))
    input_grad = g[0] if tape.squeeze else g
    return grads, input_grad


@dataclass
class OptimizerState:
    learning_rate: float = 3e-5
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def adamw_step(state: OptimizerState, params: Params, grads: Params):
    """One AdamW update with decoupled weight decay. Returns ``(params, state)``; inputs are not mutated."""
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name!r}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    step = state.step + 1
    lr, wd = state.learning_rate, state.weight_decay
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** step
    bc2 = 1.0 - b2 ** step
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = b1 * state.m.get(name, np.zeros_like(p)) + (1.0 - b1) * g
        v = b2 * state.v.get(name, np.zeros_like(p)) + (1.0 - b2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        decayed = p - lr * wd * p
        new_params[name] = decayed - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        new_m[name], new_v[name] = m, v
    new_state = OptimizerState(
        learning_rate=lr, weight_decay=wd, beta1=b1, beta2=b2, epsilon=state.epsilon,
        step=step, m=new_m, v=new_v,
    )
    return new_params, new_state


# per-entry relative error floor; central differences at h=1e-6 carry ~1e-10 absolute noise
GRAD_CHECK_FLOOR = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = GRAD_CHECK_FLOOR) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f`` around ``x`` (copied, never mutated)."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + eps
        up = f(x)
        flat[j] = orig - eps
        down = f(x)
        flat[j] = orig
        gflat[j] = (up - down) / (2 * eps)
    return grad


def grad_check(spec: NetworkSpec, params: Params, loss_fn, x: np.ndarray, eps: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(output) -> (scalar, d scalar / d output)``. Every parameter and
    the input are probed.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive", key="eps")
    out, tape = forward(params, spec, x, record=True)
    _, out_grad = loss_fn(out)
    grads, input_grad = backward(tape, out_grad)

    worst = 0.0
    for name, p in params.items():
        def f(value, name=name):
            trial = dict(params)
            trial[name] = value
            return loss_fn(forward(trial, spec, x)[0])[0]

        worst = max(worst, relative_error(grads[name], numeric_gradient(f, p, eps)))

    def fx(value):
        return loss_fn(forward(params, spec, value)[0])[0]

    worst = max(worst, relative_error(input_grad, numeric_gradient(fx, x, eps)))
    return worst


def cast_params(params: Params, dtype) -> Params:
    return {k: np.asarray(v, dtype=dtype) for k, v in params.items()}
