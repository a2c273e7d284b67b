"""Gradient-flow laboratory for learning a single neuron under Gaussian inputs."""

__version__ = "0.1.0"

from .activations import ActivationSpec, make_activation, parse_activation  # noqa: E402
from .hermite import CorrelationFunction, expand, gauss_hermite  # noqa: E402

__all__ = ["ActivationSpec", "CorrelationFunction", "expand", "gauss_hermite",
           "make_activation", "parse_activation", "__version__"]
