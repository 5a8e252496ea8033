"""Minibatch SGD, accuracy metrics, the architecture grid and step timing."""
from __future__ import annotations

import csv
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .data import N_TARGETS, Dataset
from .errors import DivergenceError, ShapeError
from .layer import EPSILON, NegationMode, Variant, layer_backward, layer_forward
from .network import Network, NetworkSpec, network_backward, network_forward, parse_arch
from .prng import SplitMix64, derive_seed

GRID_ARCHITECTURES = (
    "2-2-2-10", "2-2-2-2-10", "2-4-4-10", "2-4-4-4-10", "2-6-6-10",
    "2-6-6-6-10", "2-8-8-10", "2-8-8-8-10", "2-10-10-10", "2-10-10-10-10",
)

_INIT_KEY = 1
_SHUFFLE_KEY = 2

METRICS_HEADER = (["epoch", "iteration", "train_loss", "val_loss"]
                  + [f"acc_f{k}" for k in range(N_TARGETS)] + ["acc_overall", "elapsed_s"])
GRID_HEADER = (["architecture", "variant", "overall_acc"] + [f"acc_f{k}" for k in range(N_TARGETS)]
               + ["train_seconds", "stopped_epoch", "status"])
TIMING_HEADER = ["architecture", "variant", "connection_size", "seconds_per_step", "train_seconds", "iterations"]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 10.0
    batch_size: int = 20
    max_epochs: int = 50
    early_stop_patience: int = 5
    accuracy_tolerance: float = 0.1
    init_range: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be at least 1")
        if not 0 < self.accuracy_tolerance < 1:
            raise ValueError("accuracy_tolerance must lie in (0, 1)")
        if self.init_range < 0:
            raise ValueError("init_range must be non-negative")


@dataclass
class MetricsRecord:
    epoch: int
    iteration: int
    train_loss: float
    val_loss: float
    accuracy: List[float]
    overall: float
    elapsed_s: float = 0.0

    def row(self) -> list:
        return ([self.epoch, self.iteration, repr(self.train_loss), repr(self.val_loss)]
                + [repr(a) for a in self.accuracy] + [repr(self.overall), f"{self.elapsed_s:.6f}"])


def mse_loss(pred, target) -> Tuple[float, np.ndarray]:
    """Mean squared error over every entry and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def init_params(spec: NetworkSpec, seed: int, init_range: float = 0.5) -> Network:
    """Raw weights i.i.d. uniform on [-init_range, init_range], layer by layer."""
    rng = SplitMix64(derive_seed(seed, _INIT_KEY))
    arrays = []
    for shapes in spec.layer_shapes():
        layer = {}
        for name, shape in shapes.items():
            u = rng.uniform(math.prod(shape)).reshape(shape)
            layer[name] = init_range * (2.0 * u - 1.0)
        arrays.append(layer)
    return Network.from_arrays(spec, arrays)


def sgd_step(net: Network, grads, learning_rate: float) -> Network:
    """``raw - learning_rate * grad`` for every weight array; returns a new network.

    ``grads`` is one mapping (or :class:`~nlrl.layer.LayerGrads`) per layer.
    """
    new = []
    for k, (arrays, g) in enumerate(zip(net.arrays(), grads)):
        g = g.arrays() if hasattr(g, "arrays") else g
        layer = {}
        for name, a in arrays.items():
            if not np.isfinite(g[name]).all():
                raise DivergenceError(f"non-finite gradient in layer {k} {name}")
            layer[name] = a - learning_rate * g[name]
        new.append(layer)
    return net.with_arrays(new)


def accuracy(pred, targets, tau: float) -> Tuple[np.ndarray, float]:
    """Percent of rows with ``|pred - target| <= tau``, per column and averaged."""
    pred = np.asarray(pred, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(targets) == 0:
        raise ValueError("empty evaluation set")
    if pred.shape != targets.shape:
        raise ShapeError(f"prediction {pred.shape} and target {targets.shape} differ")
    per = 100.0 * np.mean(np.abs(pred - targets) <= tau, axis=0)
    return per, float(np.mean(per))


def _split(testset):
    if isinstance(testset, Dataset):
        return testset.test
    return testset


def evaluate(net: Network, testset, tau: float = 0.1) -> MetricsRecord:
    """Loss and accuracy of ``net`` on a dataset's test split or an ``(inputs, targets)`` pair."""
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    inputs, targets = _split(testset)
    if len(inputs) == 0:
        raise ValueError("empty evaluation set")
    pred = net.predict(inputs)
    loss, _ = mse_loss(pred, targets)
    per, overall = accuracy(pred, targets, tau)
    return MetricsRecord(0, 0, float("nan"), loss, [float(a) for a in per], overall)


def _full_loss(net: Network, inputs, targets, chunk: int = 20000) -> float:
    total = 0.0
    for start in range(0, len(inputs), chunk):
        pred = net.predict(inputs[start:start + chunk])
        total += float(np.sum((pred - targets[start:start + chunk]) ** 2))
    return total / targets.size


def _check_arity(spec: NetworkSpec, dataset: Dataset):
    if dataset.inputs.shape[1] != spec.n_in or dataset.targets.shape[1] != spec.n_out:
        raise ShapeError(f"dataset has {dataset.inputs.shape[1]} inputs / {dataset.targets.shape[1]} targets, "
                         f"network {spec.arch} expects {spec.n_in} / {spec.n_out}")


def train(spec: NetworkSpec, dataset: Dataset, config: TrainConfig = TrainConfig(),
          init: Optional[Network] = None,
          on_epoch: Optional[Callable[[MetricsRecord], None]] = None) -> Tuple[Network, List[MetricsRecord]]:
    """Train with shuffled minibatch SGD and early stopping on the held-out split.

    History starts with an epoch-0 record of the initial network. The returned
    network is the snapshot with the lowest validation loss.
    """
    _check_arity(spec, dataset)
    if dataset.n_train == 0 or dataset.n_test == 0:
        raise ValueError("dataset needs both a train and a test split")
    net = init if init is not None else init_params(spec, config.seed, config.init_range)
    if net.spec != spec:
        raise ShapeError("initial network does not match the spec")
    x_train, y_train = dataset.train
    x_val, y_val = dataset.test
    tau = config.accuracy_tolerance
    lr = config.learning_rate
    eps = spec.epsilon

    # the trainer owns private copies and updates them in place
    layers = [lay.replace(**{k: a.copy() for k, a in lay.arrays().items()}) for lay in net.layers]
    work = Network(spec, layers)

    start = time.perf_counter()
    history: List[MetricsRecord] = []

    def record(epoch, iteration):
        rec = evaluate(work, (x_val, y_val), tau)
        rec.epoch, rec.iteration = epoch, iteration
        rec.train_loss = _full_loss(work, x_train, y_train)
        rec.elapsed_s = time.perf_counter() - start
        history.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        return rec

    record(0, 0)
    best_loss, best_arrays, since_best = math.inf, None, 0
    iteration = 0
    bs = config.batch_size
    n = len(x_train)
    for epoch in range(1, config.max_epochs + 1):
        order = SplitMix64(derive_seed(config.seed, _SHUFFLE_KEY, epoch)).permutation(n)
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            h = x_train[idx]
            traces = []
            for layer in layers:
                h, tr = layer_forward(h, layer, eps)
                traces.append(tr)
            diff = h - y_train[idx]
            loss = float(np.mean(diff * diff))
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}, iteration {iteration}",
                                      last_finite_epoch=epoch - 1)
            g = 2.0 * diff / diff.size
            for layer, tr in zip(reversed(layers), reversed(traces)):
                lg = layer_backward(tr, g)
                g = lg.x
                for name, a in layer.arrays().items():
                    a -= lr * getattr(lg, name)
            iteration += 1
        rec = record(epoch, iteration)
        if not (math.isfinite(rec.val_loss) and math.isfinite(rec.train_loss)):
            raise DivergenceError(f"non-finite loss after epoch {epoch}", last_finite_epoch=epoch - 1)
        if rec.val_loss < best_loss:
            best_loss, since_best = rec.val_loss, 0
            best_arrays = [{k: a.copy() for k, a in lay.arrays().items()} for lay in layers]
        else:
            since_best += 1
            if since_best >= config.early_stop_patience:
                break
    return net.with_arrays(best_arrays), history


def write_metrics_csv(history: Sequence[MetricsRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for rec in history:
            w.writerow(rec.row())


# -- timing -------------------------------------------------------------------

def measure_step_time(spec: NetworkSpec, repetitions: int = 200, batch_size: int = 20, seed: int = 0) -> float:
    """Median wall-clock seconds of one forward+backward pass on a fixed random batch."""
    return measure_step_times([spec], repetitions, batch_size, seed)[0]


def measure_step_times(specs: Sequence[NetworkSpec], repetitions: int = 200, batch_size: int = 20,
                       seed: int = 0) -> List[float]:
    """Like :func:`measure_step_time` for several specs, with repetitions interleaved
    round-robin so that machine-load drift hits every spec alike."""
    if repetitions < 100:
        raise ValueError("use at least 100 repetitions")
    cases = []
    for spec in specs:
        net = init_params(spec, seed)
        rng = SplitMix64(derive_seed(seed, 99))
        x = rng.uniform(batch_size * spec.n_in).reshape(batch_size, spec.n_in)
        target = rng.uniform(batch_size * spec.n_out).reshape(batch_size, spec.n_out)
        for _ in range(10):
            _step(net, x, target)
        cases.append((net, x, target))
    times = np.empty((repetitions, len(cases)))
    for r in range(repetitions):
        for c, (net, x, target) in enumerate(cases):
            t0 = time.perf_counter()
            _step(net, x, target)
            times[r, c] = time.perf_counter() - t0
    return [float(t) for t in np.median(times, axis=0)]


def _step(net, x, target):
    pred, trace = network_forward(x, net)
    network_backward(trace, 2.0 * (pred - target) / pred.size)


# -- grid ---------------------------------------------------------------------

def cell_seed(master_seed: int, arch: str, variant) -> int:
    """Seed of one grid cell; depends only on the master seed and the cell's identity."""
    key = zlib.crc32(f"{arch}/{Variant(variant).value}".encode())
    return derive_seed(master_seed, key) & 0x7FFF_FFFF_FFFF_FFFF


@dataclass
class GridCell:
    architecture: str
    variant: str
    seed: int
    overall_acc: float = float("nan")
    accuracy: List[float] = field(default_factory=lambda: [float("nan")] * N_TARGETS)
    train_seconds: float = float("nan")
    stopped_epoch: int = -1
    iterations: int = 0
    seconds_per_step: float = float("nan")
    status: str = "ok"

    def row(self) -> list:
        return ([self.architecture, self.variant, repr(self.overall_acc)] + [repr(a) for a in self.accuracy]
                + [f"{self.train_seconds:.6f}", self.stopped_epoch, self.status])


def _run_cell(args) -> GridCell:
    arch, variant, negation_mode, dataset, config = args
    seed = cell_seed(config.seed, arch, variant)
    cell = GridCell(arch, Variant(variant).value, seed)
    spec = NetworkSpec(parse_arch(arch), Variant(variant), NegationMode(negation_mode))
    t0 = time.perf_counter()
    try:
        net, history = train(spec, dataset, replace(config, seed=seed))
    except DivergenceError as exc:
        cell.status = f"diverged after epoch {exc.last_finite_epoch}: {exc}"
        cell.train_seconds = time.perf_counter() - t0
        return cell
    cell.train_seconds = time.perf_counter() - t0
    rec = evaluate(net, dataset, config.accuracy_tolerance)
    cell.overall_acc, cell.accuracy = rec.overall, rec.accuracy
    cell.stopped_epoch = history[-1].epoch
    cell.iterations = history[-1].iteration
    return cell


def run_grid(architectures: Sequence[str], variants: Sequence, dataset: Dataset,
             config: TrainConfig = TrainConfig(), negation_mode=NegationMode.PER_INPUT,
             parallel: int = 1, timing_repetitions: int = 0) -> List[GridCell]:
    """Train and evaluate every architecture x variant cell.

    Cells may run in ``parallel`` worker processes. With ``timing_repetitions``
    set, per-step times are measured afterwards, one cell at a time.
    """
    jobs = [(arch, Variant(v).value, NegationMode(negation_mode).value, dataset, config)
            for arch in architectures for v in variants]
    for arch in architectures:
        parse_arch(arch)
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = [_run_cell(job) for job in jobs]
    if timing_repetitions:
        for cell in cells:
            spec = NetworkSpec(parse_arch(cell.architecture), Variant(cell.variant), NegationMode(negation_mode))
            cell.seconds_per_step = measure_step_time(spec, timing_repetitions, config.batch_size)
    return cells


def write_grid_csv(cells: Sequence[GridCell], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_HEADER)
        for c in cells:
            w.writerow(c.row())


def write_table2_csv(cells: Sequence[GridCell], path) -> None:
    """Overall accuracy with one row per architecture and one column per variant."""
    variants = [v.value for v in Variant if any(c.variant == v.value for c in cells)]
    archs = list(dict.fromkeys(c.architecture for c in cells))
    lookup = {(c.architecture, c.variant): c.overall_acc for c in cells}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["architecture"] + variants)
        for a in archs:
            w.writerow([a] + [repr(lookup.get((a, v), float("nan"))) for v in variants])


def write_table1_csv(cells: Sequence[GridCell], path, function_names: Sequence[str]) -> None:
    """Per-function accuracy with one row per function and one column per cell."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["function"] + [f"{c.architecture} {c.variant}" for c in cells])
        for k, name in enumerate(function_names):
            w.writerow([name] + [repr(c.accuracy[k]) for c in cells])
        w.writerow(["overall"] + [repr(c.overall_acc) for c in cells])


def write_timing_csv(cells: Sequence[GridCell], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMING_HEADER)
        for c in cells:
            sizes = parse_arch(c.architecture)
            w.writerow([c.architecture, c.variant, sizes[1], repr(c.seconds_per_step),
                        f"{c.train_seconds:.6f}", c.iterations])
