"""Dense networks, multiscale subnet ensembles, Adam, checkpoints.

A MultiscaleNet evaluates each subnet on a scaled copy of its input
(subnet i sees scales[i] * x) and concatenates the outputs, so every
subnet works on a slowed-down view of one frequency band.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, concat, no_grad, parameter, stack

ACTIVATIONS = ("sin", "relu", "identity")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _apply_activation(name: str, x: Tensor) -> Tensor:
    if name == "sin":
        return x.sin()
    if name == "relu":
        return x.relu()
    return x


@dataclass
class DenseNet:
    """Fully connected net: affine-activation chain, affine output layer."""

    layer_sizes: list
    activation: str
    weights: list = field(default_factory=list)   # Tensor (n_in, n_out) per layer
    biases: list = field(default_factory=list)    # Tensor (n_out,) per layer

    @classmethod
    def create(cls, layer_sizes, activation: str, seed_or_rng=0) -> "DenseNet":
        """Glorot-uniform weights, zero biases, deterministic in the seed."""
        if len(layer_sizes) < 2:
            raise ValueError("need at least an input and an output size")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}; choose from {ACTIVATIONS}")
        rng = _as_rng(seed_or_rng)
        net = cls(layer_sizes=list(layer_sizes), activation=activation)
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            net.weights.append(parameter(glorot_uniform(rng, n_in, n_out)))
            net.biases.append(parameter(np.zeros(n_out)))
        return net

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x):
        """Evaluate on a (batch, n_in) array/Tensor or a plain n_in vector.

        Array inputs evaluate without building a graph and return arrays;
        Tensor inputs stay on the tape and return Tensors.
        """
        x_t, squeeze, as_array = _prepare_input(x, self.input_size)
        if as_array:
            with no_grad():
                out = self._run(x_t)
            return out.data[0] if squeeze else out.data
        return self._run(x_t)

    def _run(self, x: Tensor) -> Tensor:
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = _apply_activation(self.activation, h)
        return h


@dataclass
class MultiscaleNet:
    """Bank of identical-arity subnets, subnet i driven by scales[i] * x."""

    scales: np.ndarray
    subnets: list

    def __post_init__(self):
        self.scales = np.asarray(self.scales, dtype=np.float64)
        if self.scales.ndim != 1 or self.scales.size != len(self.subnets):
            raise ValueError("need exactly one scale per subnet")
        if np.any(self.scales <= 0):
            raise ValueError("scales must be strictly positive")
        in_sizes = {net.input_size for net in self.subnets}
        if len(in_sizes) > 1:
            raise ValueError("subnets must share the input arity")

    @classmethod
    def create(cls, scales, subnet_layer_sizes, activation: str = "sin",
               seed_or_rng=0) -> "MultiscaleNet":
        rng = _as_rng(seed_or_rng)
        subnets = [DenseNet.create(subnet_layer_sizes, activation, rng) for _ in scales]
        return cls(scales=np.asarray(scales, dtype=np.float64), subnets=subnets)

    @property
    def input_size(self) -> int:
        return self.subnets[0].input_size

    @property
    def output_size(self) -> int:
        return sum(net.output_size for net in self.subnets)

    def parameters(self) -> list:
        out = []
        for net in self.subnets:
            out.extend(net.parameters())
        return out

    def forward(self, x):
        x_t, squeeze, as_array = _prepare_input(x, self.input_size)
        if as_array:
            with no_grad():
                out = self._run(x_t)
            return out.data[0] if squeeze else out.data
        return self._run(x_t)

    def _run(self, x: Tensor) -> Tensor:
        if self._uniform_subnets():
            return self._run_stacked(x)
        outputs = [net._run(x * float(s)) for s, net in zip(self.scales, self.subnets)]
        return concat(outputs, axis=1)

    def _uniform_subnets(self) -> bool:
        first = self.subnets[0].layer_sizes
        return all(net.layer_sizes == first for net in self.subnets)

    def _run_stacked(self, x: Tensor) -> Tensor:
        """All subnets at once via batched matmuls over a leading subnet axis.

        Equivalent to the per-subnet loop (same parameters, same math) but
        turns n_subnets small matmuls per layer into one 3-D product.
        """
        s = len(self.subnets)
        n_rows = x.data.shape[0]
        h = x * self.scales.reshape(s, 1, 1)              # (s, rows, in)
        n_layers = len(self.subnets[0].weights)
        for layer in range(n_layers):
            W = stack([net.weights[layer] for net in self.subnets])   # (s, in, out)
            out_size = self.subnets[0].weights[layer].data.shape[1]
            B = stack([net.biases[layer] for net in self.subnets]).reshape((s, 1, out_size))
            h = h @ W + B
            if layer < n_layers - 1:
                h = _apply_activation(self.subnets[0].activation, h)
        # (s, rows, out) -> (rows, s * out), matching per-subnet concatenation
        return h.transpose((1, 0, 2)).reshape((n_rows, s * h.data.shape[2]))


def _prepare_input(x, expected: int):
    """Promote to a 2-D Tensor; report whether to hand back a plain array."""
    if isinstance(x, Tensor):
        if x.data.ndim != 2:
            raise ValueError("Tensor inputs must be 2-D (batch, features)")
        if x.data.shape[1] != expected:
            raise ValueError(f"expected {expected} input features, got {x.data.shape[1]}")
        return x, False, False
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != expected:
        raise ValueError(f"expected {expected} input features, got shape {np.shape(x)}")
    return Tensor(arr), squeeze, True


def dense_forward(net: DenseNet, x):
    return net.forward(x)


def multiscale_forward(net: MultiscaleNet, x):
    return net.forward(x)


def count_net_parameters(net) -> int:
    return sum(p.data.size for p in net.parameters())


@dataclass
class AdamState:
    """First/second-moment accumulators plus the step counter."""

    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params],
                   step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update, applied to params in place."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("parameter/gradient/state length mismatch")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


CHECKPOINT_VERSION = 1


def save_checkpoint(path, meta: dict, params) -> None:
    """Bit-exact parameter snapshot: npz with a JSON metadata entry."""
    arrays = {f"p{i:04d}": p.data for i, p in enumerate(params)}
    header = dict(meta)
    header["format_version"] = CHECKPOINT_VERSION
    header["n_params"] = len(arrays)
    np.savez(path, __meta__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
             **arrays)


def load_checkpoint(path):
    """Returns (meta, list of arrays) saved by save_checkpoint."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        arrays = [data[f"p{i:04d}"] for i in range(meta["n_params"])]
    return meta, arrays


def assign_parameters(params, arrays) -> None:
    if len(params) != len(arrays):
        raise ValueError(f"checkpoint holds {len(arrays)} arrays, model has {len(params)}")
    for p, a in zip(params, arrays):
        if p.data.shape != a.shape:
            raise ValueError(f"shape mismatch: {p.data.shape} vs {a.shape}")
        p.data = a.astype(np.float64, copy=True)
