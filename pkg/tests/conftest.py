import numpy as np
import pytest

from mpmgan.config import TrainConfig


def np_forward(net, x):
    """Forward pass of an Mlp written directly in numpy (test oracle)."""
    for layer in net.layers:
        x = x @ layer.weight.values + layer.bias.values
        if layer.activation == "leaky_relu":
            x = np.where(x > 0, x, 0.2 * x)
        elif layer.activation == "tanh":
            x = np.tanh(x)
        elif layer.activation == "sigmoid":
            x = 1.0 / (1.0 + np.exp(-x))
    return x


@pytest.fixture
def small_config():
    def make(**kw):
        base = dict(hidden=16, batch=16, n_iters=5, checkpoint_every=2,
                    dataset={"kind": "ring_mixture", "k": 8, "radius": 2.0, "sigma": 0.02, "n": 500})
        base.update(kw)
        return TrainConfig.from_dict(base)

    return make


_ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
