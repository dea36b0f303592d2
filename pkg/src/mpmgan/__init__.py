"""Two-generator GANs with message passing, on a small numpy autodiff engine."""

from .config import TrainConfig, load_config
from .tensor import Tensor, backward, no_grad

__all__ = ["Tensor", "TrainConfig", "backward", "load_config", "no_grad"]
__version__ = "0.1.0"
