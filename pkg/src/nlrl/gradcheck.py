"""Central finite differences as an independent check on the analytic backward pass."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .layer import NegationMode, Variant
from .network import Network, NetworkSpec, flat_grads, network_backward, network_forward

REL_TOL = 1e-4
ABS_TOL = 1e-8


def finite_diff_grad(theta, loss: Callable[[np.ndarray], float], h: float = 1e-5) -> np.ndarray:
    """``(L(theta + h e_k) - L(theta - h e_k)) / 2h`` for every coordinate ``k``."""
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h={h} outside [1e-7, 1e-3]")
    return _central_diff(theta, loss, h)


def _central_diff(theta, loss, h):
    theta = np.array(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    flat = theta.reshape(-1)
    out = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = loss(theta)
        flat[k] = orig - h
        down = loss(theta)
        flat[k] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise ArithmeticError(f"non-finite loss at coordinate {k}")
        out[k] = (up - down) / (2.0 * h)
    return grad


def mse(pred, target) -> float:
    return float(np.mean((pred - target) ** 2))


def network_mse_grads(net: Network, x, target):
    """Analytic gradients of the MSE w.r.t. the flat weights and the input."""
    pred, trace = network_forward(x, net)
    dx, grads = network_backward(trace, 2.0 * (pred - target) / pred.size)
    return flat_grads(grads), dx


def relative_error(analytic, numeric):
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    diff = np.abs(analytic - numeric)
    return np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), 0.0), diff


@dataclass
class TrialResult:
    variant: Variant
    negation_mode: NegationMode
    trial: int
    arch: str
    worst_rel: float
    worst_coord: str
    passed: bool


@dataclass
class GradCheckReport:
    trials: List[TrialResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.trials)

    def failures(self) -> List[TrialResult]:
        return [t for t in self.trials if not t.passed]

    def worst(self) -> Optional[TrialResult]:
        return max(self.trials, key=lambda t: t.worst_rel, default=None)


def _coord_names(net: Network) -> List[str]:
    names = []
    for k, layer in enumerate(net.arrays()):
        for name, a in layer.items():
            names.extend(f"layer{k}.{name}{list(idx)}" for idx in np.ndindex(a.shape))
    return names


def check_trial(net: Network, x, target, h: float = 1e-5, step_check: bool = True) -> TrialResult:
    theta = net.flat()
    analytic, dx = network_mse_grads(net, x, target)
    diff_fn = finite_diff_grad if step_check else _central_diff
    numeric = diff_fn(theta, lambda t: mse(net.from_flat(t).predict(x), target), h)
    numeric_x = diff_fn(x, lambda xx: mse(net.predict(xx), target), h)
    a = np.concatenate([analytic, dx.ravel()])
    n = np.concatenate([numeric, numeric_x.ravel()])
    rel, absdiff = relative_error(a, n)
    ok = (rel <= REL_TOL) | (absdiff <= ABS_TOL)
    badness = np.where(ok, 0.0, rel)
    k = int(np.argmax(badness)) if not ok.all() else int(np.argmax(np.where(absdiff > ABS_TOL, rel, 0.0)))
    names = _coord_names(net) + [f"input{list(i)}" for i in np.ndindex(np.shape(x))]
    return TrialResult(net.spec.variant, net.spec.negation_mode, -1, net.spec.arch,
                       float(rel[k]), names[k], bool(ok.all()))


def random_trial_network(rng: np.random.Generator, variant, negation_mode, raw_scale: float = 2.0):
    depth = int(rng.integers(1, 4))
    sizes = tuple(int(s) for s in rng.integers(1, 5, size=depth + 1))
    spec = NetworkSpec(sizes, variant, negation_mode)
    arrays = [{k: rng.uniform(-raw_scale, raw_scale, size=s) for k, s in shapes.items()}
              for shapes in spec.layer_shapes()]
    net = Network.from_arrays(spec, arrays)
    batch = int(rng.integers(1, 4))
    x = rng.uniform(0.0, 1.0, size=(batch, sizes[0]))
    target = rng.uniform(0.0, 1.0, size=(batch, sizes[-1]))
    return net, x, target


def run_grad_check(trials: int = 100, h: float = 1e-5, seed: int = 0) -> GradCheckReport:
    """``trials`` random networks for every variant and negation mode."""
    if trials < 1:
        raise ValueError("need at least one trial")
    report = GradCheckReport()
    for vi, (variant, mode) in enumerate(itertools.product(Variant, NegationMode)):
        rng = np.random.default_rng([seed, vi])
        for t in range(trials):
            net, x, target = random_trial_network(rng, variant, mode)
            res = check_trial(net, x, target, h, step_check=False)
            res.trial = t
            report.trials.append(res)
    return report
