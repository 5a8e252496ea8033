"""Differentiable logic rule layers: model, data, training, and rule tooling."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ArityError,
    CapacityError,
    DivergenceError,
    DomainError,
    FormulaSyntaxError,
    NLRLError,
    ResourceError,
    ShapeError,
)
from .layer import LayerParams, NegationMode, Variant, layer_backward, layer_forward  # noqa: E402
from .network import (  # noqa: E402
    Network,
    NetworkSpec,
    load_checkpoint,
    network_backward,
    network_forward,
    parse_arch,
    save_checkpoint,
)

__all__ = [
    "ArityError", "CapacityError", "DivergenceError", "DomainError", "FormulaSyntaxError",
    "NLRLError", "ResourceError", "ShapeError",
    "LayerParams", "NegationMode", "Variant", "layer_backward", "layer_forward",
    "Network", "NetworkSpec", "load_checkpoint", "network_backward", "network_forward",
    "parse_arch", "save_checkpoint",
]
