"""MLP layers, initialization and the Adam optimizer shared by every agent."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .data import Rng
from .tensor import Tensor

ACTIVATIONS = ("leaky_relu", "tanh", "sigmoid", "identity")
LEAKY_SLOPE = 0.2


class NumericalError(ArithmeticError):
    pass


def activate(x: Tensor, name: str) -> Tensor:
    if name == "leaky_relu":
        return T.leaky_relu(x, LEAKY_SLOPE)
    if name == "tanh":
        return T.tanh(x)
    if name == "sigmoid":
        return T.sigmoid(x)
    if name == "identity":
        return x
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    weight: Tensor
    bias: Tensor
    activation: str

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return activate(T.add(T.matmul(x, self.weight), self.bias), self.activation)


@dataclass
class Mlp:
    layers: list[DenseLayer]
    name: str = "mlp"

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in (layer.weight, layer.bias)]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.append((f"{i}/weight", layer.weight))
            out.append((f"{i}/bias", layer.bias))
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def hidden(self, x: Tensor) -> Tensor:
        """Activations feeding the final layer."""
        self._check_input(x)
        for layer in self.layers[:-1]:
            x = layer(x)
        return x

    def __call__(self, x: Tensor) -> Tensor:
        return self.layers[-1](self.hidden(x))

    def _check_input(self, x: Tensor) -> None:
        if x.values.ndim != 2 or x.shape[1] != self.in_dim:
            raise T.ShapeError(f"{self.name}: expected input [batch x {self.in_dim}], got {x.shape}")


def init_mlp(layer_dims: Sequence[int], activations: Sequence[str], seed: int, name: str = "mlp") -> Mlp:
    """Glorot-normal weights (variance 2/(fan_in+fan_out)) and zero biases."""
    dims = list(layer_dims)
    if len(dims) < 2:
        raise ValueError(f"need at least two layer dims, got {dims}")
    if any(d <= 0 for d in dims):
        raise ValueError(f"layer dims must be positive, got {dims}")
    if len(activations) != len(dims) - 1:
        raise ValueError(f"expected {len(dims) - 1} activations, got {len(activations)}")
    rng = Rng(seed)
    layers = []
    for d_in, d_out, act in zip(dims[:-1], dims[1:], activations):
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")
        std = np.sqrt(2.0 / (d_in + d_out))
        w = std * rng.normal(d_in * d_out).reshape(d_in, d_out)
        layers.append(DenseLayer(Tensor(w, requires_grad=True), Tensor(np.zeros(d_out), requires_grad=True), act))
    return Mlp(layers, name)


def mlp_forward(net: Mlp, x: Tensor) -> Tensor:
    return net(x)


@dataclass
class AdamState:
    shapes: list[tuple[int, ...]]
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros(s) for s in self.shapes]
            self.v = [np.zeros(s) for s in self.shapes]

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "AdamState":
        return cls([p.shape for p in params], **hyper)


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    if len(params) != len(state.m):
        raise ValueError(f"optimizer tracks {len(state.m)} params, got {len(params)}")
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValueError(f"parameter {i} has no gradient")
        if not np.all(np.isfinite(p.grad)):
            raise NumericalError(f"parameter {i} has a non-finite gradient")
    state.step += 1
    b1, b2, t = state.beta1, state.beta2, state.step
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.values -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        p.grad = np.zeros_like(p.values)
