"""Small dense MLPs with tape-based reverse mode and first-order optimizers.

Everything is float64. Parameters are immutable values: optimizer steps
return new objects instead of writing into the old arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "relu")


class NonFiniteGradientError(FloatingPointError):
    """Raised when an optimizer is handed NaN/Inf gradient entries."""


@dataclass(frozen=True)
class MLPSpec:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(k) < 1 for k in dims):
            raise ValueError(f"all MLP dims must be >= 1, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer."""
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MLPSpec":
        return cls(d["input_dim"], tuple(d["hidden_dims"]), d["output_dim"], d.get("activation", "tanh"))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MLPParams:
    """Weights ``W[l]`` of shape (fan_out, fan_in) and biases ``b[l]`` per layer."""

    spec: MLPSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        w = tuple(_frozen(x) for x in self.weights)
        b = tuple(_frozen(x) for x in self.biases)
        layers = self.spec.layer_dims
        if len(w) != len(layers) or len(b) != len(layers):
            raise ValueError("layer count does not match spec")
        for (fi, fo), wi, bi in zip(layers, w, b):
            if wi.shape != (fo, fi) or bi.shape != (fo,):
                raise ValueError(f"bad layer shapes {wi.shape}, {bi.shape} for ({fi}->{fo})")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    def arrays(self) -> list[np.ndarray]:
        """Row-major layer order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, spec: MLPSpec, flat) -> "MLPParams":
        flat = np.asarray(flat, dtype=np.float64)
        ws, bs, k = [], [], 0
        for fi, fo in spec.layer_dims:
            ws.append(flat[k : k + fi * fo].reshape(fo, fi))
            k += fi * fo
            bs.append(flat[k : k + fo])
            k += fo
        if k != flat.size:
            raise ValueError(f"expected {k} parameters, got {flat.size}")
        return cls(spec, tuple(ws), tuple(bs))

    def map(self, fn) -> "MLPParams":
        return MLPParams(self.spec, tuple(fn(w) for w in self.weights), tuple(fn(b) for b in self.biases))

    def equals(self, other: "MLPParams") -> bool:
        """Bitwise equality of spec and every entry."""
        return self.spec == other.spec and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "params": self.flat().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MLPParams":
        return cls.from_flat(MLPSpec.from_dict(d["spec"]), d["params"])


@dataclass(frozen=True, eq=False)
class GradientSet:
    """Partial derivatives laid out like an :class:`MLPParams`."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    @classmethod
    def zeros_like(cls, params: MLPParams) -> "GradientSet":
        return cls(
            tuple(np.zeros_like(w) for w in params.weights),
            tuple(np.zeros_like(b) for b in params.biases),
        )

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet(
            tuple(a + b for a, b in zip(self.weights, other.weights)),
            tuple(a + b for a, b in zip(self.biases, other.biases)),
        )

    def scale(self, c: float) -> "GradientSet":
        return GradientSet(tuple(c * w for w in self.weights), tuple(c * b for b in self.biases))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_params(spec: MLPSpec, seed: int) -> MLPParams:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in spec.layer_dims:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return MLPParams(spec, tuple(ws), tuple(bs))


def zero_params(spec: MLPSpec) -> MLPParams:
    return MLPParams(
        spec,
        tuple(np.zeros((fo, fi)) for fi, fo in spec.layer_dims),
        tuple(np.zeros(fo) for _, fo in spec.layer_dims),
    )


@dataclass
class MLPTape:
    params: MLPParams
    inputs: list[np.ndarray]  # input to each layer, (B, fan_in)
    outputs: list[np.ndarray]  # post-activation of each hidden layer
    squeeze: bool

    @property
    def batch(self) -> int:
        return self.inputs[0].shape[0]


def _relu(z):
    return np.maximum(z, 0.0)


def _act_grad(name, a):
    # derivative expressed through the activation output
    return 1.0 - a * a if name == "tanh" else (a > 0.0).astype(np.float64)


def mlp_forward(params: MLPParams, x) -> tuple[np.ndarray, MLPTape]:
    """Evaluate the network on one input (1-D) or a batch (rows of a 2-D array)."""
    if type(x) is not np.ndarray or x.dtype != np.float64:
        x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    a = x[None, :] if squeeze else x
    if a.ndim != 2 or a.shape[1] != params.spec.input_dim:
        raise ValueError(f"expected input dim {params.spec.input_dim}, got shape {x.shape}")
    inputs, outputs = [], []
    act = np.tanh if params.spec.activation == "tanh" else _relu
    ws, bs = params.weights, params.biases
    last = len(ws) - 1
    for l in range(last):
        inputs.append(a)
        a = act(a @ ws[l].T + bs[l])
        outputs.append(a)
    inputs.append(a)
    a = a @ ws[last].T + bs[last]
    return (a[0] if squeeze else a), MLPTape(params, inputs, outputs, squeeze)


def mlp_backward(tape: MLPTape, dy) -> tuple[np.ndarray, GradientSet]:
    """Reverse pass for ``sum(y * dy)``; parameter gradients are summed over the batch."""
    dy = np.asarray(dy, dtype=np.float64)
    spec = tape.params.spec
    expected = (spec.output_dim,) if tape.squeeze else (tape.batch, spec.output_dim)
    if dy.shape != expected:
        raise ValueError(f"dy shape {dy.shape} does not match tape output {expected}")
    delta = dy[None, :] if tape.squeeze else dy
    n = len(tape.params.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for l in range(n - 1, -1, -1):
        if l < n - 1:
            delta = delta * _act_grad(spec.activation, tape.outputs[l])
        gw[l] = delta.T @ tape.inputs[l]
        gb[l] = delta.sum(axis=0)
        delta = delta @ tape.params.weights[l]
    dx = delta[0] if tape.squeeze else delta
    return dx, GradientSet(tuple(gw), tuple(gb))


def _check_grads(params: MLPParams, grads: GradientSet):
    for p, g in zip(params.arrays(), grads.arrays()):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
    if not grads.is_finite():
        raise NonFiniteGradientError("non-finite gradient entries; step rejected")


def sgd_step(params: MLPParams, grads: GradientSet, lr: float) -> MLPParams:
    if lr <= 0:
        raise ValueError("lr must be positive")
    _check_grads(params, grads)
    return MLPParams(
        params.spec,
        tuple(w - lr * g for w, g in zip(params.weights, grads.weights)),
        tuple(b - lr * g for b, g in zip(params.biases, grads.biases)),
    )


@dataclass(frozen=True, eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, params: MLPParams) -> "AdamState":
        n = params.flat().size
        return cls(np.zeros(n), np.zeros(n), 0)

    def to_dict(self) -> dict:
        return {"t": self.t, "m": self.m.tolist(), "v": self.v.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "AdamState":
        return cls(np.asarray(d["m"], dtype=np.float64), np.asarray(d["v"], dtype=np.float64), int(d["t"]))


def adam_step(
    params: MLPParams,
    grads: GradientSet,
    state: AdamState | None = None,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[MLPParams, AdamState]:
    if lr <= 0:
        raise ValueError("lr must be positive")
    _check_grads(params, grads)
    p = params.flat()
    g = grads.flat()
    if state is None:
        state = AdamState.fresh(params)
    if state.m.shape != p.shape:
        raise ValueError("Adam state does not match parameters")
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * g
    v = beta2 * state.v + (1 - beta2) * g * g
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return MLPParams.from_flat(params.spec, p), AdamState(m, v, t)


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.kind!r}")


@dataclass
class Optimizer:
    """Keeps one Adam state per named module; SGD is stateless."""

    config: OptimizerConfig = field(default_factory=OptimizerConfig)
    states: dict[str, AdamState] = field(default_factory=dict)

    def step(self, key: str, params: MLPParams, grads: GradientSet) -> MLPParams:
        c = self.config
        if c.kind == "sgd":
            return sgd_step(params, grads, c.lr)
        new, self.states[key] = adam_step(params, grads, self.states.get(key), c.lr, c.beta1, c.beta2, c.eps)
        return new

    def to_dict(self) -> dict:
        return {
            "config": vars(self.config).copy(),
            "states": {k: s.to_dict() for k, s in sorted(self.states.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Optimizer":
        return cls(OptimizerConfig(**d["config"]), {k: AdamState.from_dict(s) for k, s in d["states"].items()})


def numeric_grad(f, params: MLPParams, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar ``f(params)`` w.r.t. the flat parameter vector."""
    p0 = params.flat()
    out = np.empty_like(p0)
    for i in range(p0.size):
        p = p0.copy()
        p[i] += h
        fp = f(MLPParams.from_flat(params.spec, p))
        p[i] -= 2 * h
        fm = f(MLPParams.from_flat(params.spec, p))
        out[i] = (fp - fm) / (2 * h)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """max |a-b| / max(|a|, |b|, floor), elementwise."""
    a, b = np.asarray(a), np.asarray(b)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0

