"""Stacks of logic rule layers, their gradients and JSON checkpoints."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ShapeError
from .layer import (
    EPSILON,
    LayerGrads,
    LayerParams,
    LayerTrace,
    NegationMode,
    Variant,
    layer_backward,
    layer_forward,
)

CHECKPOINT_FORMAT = "nlrl-checkpoint"
CHECKPOINT_VERSION = 1

_ARCH = re.compile(r"^\d+(-\d+)+$")


def parse_arch(text: str) -> Tuple[int, ...]:
    """``"2-4-4-10"`` -> ``(2, 4, 4, 10)``."""
    text = text.strip()
    if not _ARCH.match(text):
        raise ValueError(f"architecture must look like 2-4-4-10, got {text!r}")
    sizes = tuple(int(s) for s in text.split("-"))
    if min(sizes) < 1:
        raise ValueError(f"layer sizes must be positive: {text!r}")
    return sizes


def format_arch(sizes: Sequence[int]) -> str:
    return "-".join(str(s) for s in sizes)


@dataclass(frozen=True)
class NetworkSpec:
    sizes: Tuple[int, ...]
    variant: Variant = Variant.AND_NONEG
    negation_mode: NegationMode = NegationMode.PER_INPUT
    epsilon: float = EPSILON

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 2:
            raise ValueError("a network needs at least one layer (two sizes)")
        if min(sizes) < 1:
            raise ValueError("layer sizes must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "negation_mode", NegationMode(self.negation_mode))

    @classmethod
    def from_arch(cls, arch: str, variant=Variant.AND_NONEG, negation_mode=NegationMode.PER_INPUT,
                  epsilon=EPSILON) -> "NetworkSpec":
        return cls(parse_arch(arch), variant, negation_mode, epsilon)

    @property
    def arch(self) -> str:
        return format_arch(self.sizes)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    def layer_shapes(self) -> List[dict]:
        """Expected array shapes per layer."""
        shapes = []
        for n, m in zip(self.sizes[:-1], self.sizes[1:]):
            s = {"A_raw": (m, n), "g_raw": (n,) if self.negation_mode is NegationMode.PER_INPUT else (m, n)}
            if self.variant.has_gate:
                s["gate_raw"] = (m,)
            shapes.append(s)
        return shapes

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes), "variant": self.variant.value,
                "negation_mode": self.negation_mode.value, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(d["sizes"]), Variant(d["variant"]), NegationMode(d["negation_mode"]),
                   float(d["epsilon"]))


@dataclass(frozen=True)
class Network:
    """A :class:`NetworkSpec` together with one :class:`LayerParams` per layer."""

    spec: NetworkSpec
    layers: Tuple[LayerParams, ...] = field(default=())

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if len(layers) != self.spec.n_layers:
            raise ShapeError(f"spec {self.spec.arch} has {self.spec.n_layers} layers, got {len(layers)}")
        for k, (layer, shapes) in enumerate(zip(layers, self.spec.layer_shapes())):
            if layer.variant is not self.spec.variant or layer.negation_mode is not self.spec.negation_mode:
                raise ShapeError(f"layer {k} variant/negation mode disagrees with the spec")
            for name, shape in shapes.items():
                if layer.arrays()[name].shape != shape:
                    raise ShapeError(f"layer {k} {name} has shape {layer.arrays()[name].shape}, expected {shape}")

    @classmethod
    def from_arrays(cls, spec: NetworkSpec, arrays: Sequence[dict]) -> "Network":
        layers = [LayerParams(np.asarray(a["A_raw"], dtype=np.float64), np.asarray(a["g_raw"], dtype=np.float64),
                              None if a.get("gate_raw") is None else np.asarray(a["gate_raw"], dtype=np.float64),
                              spec.variant, spec.negation_mode)
                  for a in arrays]
        return cls(spec, layers)

    @classmethod
    def constant(cls, spec: NetworkSpec, value: float = 0.0) -> "Network":
        return cls.from_arrays(spec, [{k: np.full(s, value) for k, s in shapes.items()}
                                      for shapes in spec.layer_shapes()])

    def predict(self, x) -> np.ndarray:
        return network_forward(x, self)[0]

    def arrays(self) -> List[dict]:
        return [layer.arrays() for layer in self.layers]

    def with_arrays(self, arrays: Sequence[dict]) -> "Network":
        return Network(self.spec, [layer.replace(**a) for layer, a in zip(self.layers, arrays)])

    def flat(self) -> np.ndarray:
        """All raw weights concatenated in layer order, then A_raw, g_raw, gate_raw."""
        return np.concatenate([a.ravel() for layer in self.arrays() for a in layer.values()])

    def from_flat(self, theta) -> "Network":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.flat().size,):
            raise ShapeError(f"flat vector has shape {theta.shape}, network has {self.flat().size} weights")
        out, pos = [], 0
        for layer in self.arrays():
            new = {}
            for name, a in layer.items():
                new[name] = theta[pos:pos + a.size].reshape(a.shape)
                pos += a.size
            out.append(new)
        return self.with_arrays(out)

    def __eq__(self, other):
        if not isinstance(other, Network) or other.spec != self.spec:
            return NotImplemented if not isinstance(other, Network) else False
        return all(a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)
                   for a, b in zip(self.arrays(), other.arrays()))

    __hash__ = None


@dataclass(frozen=True)
class ForwardTrace:
    layers: Tuple[LayerTrace, ...]
    squeeze: bool = False


def network_forward(x, net: Network) -> Tuple[np.ndarray, ForwardTrace]:
    """Run ``x`` (n,) or (B, n) through every layer in order."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != net.spec.n_in:
        raise ShapeError(f"network {net.spec.arch} expects {net.spec.n_in} inputs, got {h.shape[1]}")
    traces = []
    for layer in net.layers:
        h, tr = layer_forward(h, layer, net.spec.epsilon)
        traces.append(tr)
    return (h[0] if squeeze else h), ForwardTrace(tuple(traces), squeeze)


def network_backward(trace: ForwardTrace, dout) -> Tuple[np.ndarray, List[LayerGrads]]:
    """Gradients of every layer's raw weights and of the network input."""
    g = np.asarray(dout, dtype=np.float64)
    if trace.squeeze:
        g = g[None, :]
    grads = []
    for tr in reversed(trace.layers):
        lg = layer_backward(tr, g)
        grads.append(lg)
        g = lg.x
    grads.reverse()
    return (g[0] if trace.squeeze else g), grads


def flat_grads(grads: Sequence[LayerGrads]) -> np.ndarray:
    """Flatten layer gradients in the order used by :meth:`Network.flat`."""
    return np.concatenate([a.ravel() for g in grads for a in g.arrays().values()])


# -- checkpoints --------------------------------------------------------------

def _matrix(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def network_to_dict(net: Network) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": net.spec.to_dict(),
        "layers": [{name: _matrix(a) for name, a in layer.items()} for layer in net.arrays()],
    }


def network_from_dict(d: dict) -> Network:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not an nlrl checkpoint")
    spec = NetworkSpec.from_dict(d["spec"])
    arrays = [{name: np.array(m["data"], dtype=np.float64).reshape(m["shape"]) for name, m in layer.items()}
              for layer in d["layers"]]
    return Network.from_arrays(spec, arrays)


def save_checkpoint(net: Network, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1) + "\n")


def load_checkpoint(path) -> Network:
    return network_from_dict(json.loads(Path(path).read_text()))
