"""Synthetic two-input dataset with ten logic/arithmetic targets."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple

import numpy as np

from .errors import DomainError
from .prng import SplitMix64

N_TARGETS = 10
TEST_FRACTION = 0.1
CONSTANT_TARGET = 0.7

TARGET_NAMES = (
    "x/2+y/2",
    "x*!y",
    "x AND y",
    "x OR y",
    "x XOR y",
    "x",
    "y",
    "!x",
    "!y",
    "0.7",
)

HEADER = ["x", "y"] + [f"f{k}" for k in range(N_TARGETS)] + ["split"]


def xor_algebraic(x, y):
    """Product-logic XOR in disjunctive form: ``u + v - uv`` with ``u = x(1-y)``, ``v = (1-x)y``."""
    u = x * (1.0 - y)
    v = (1.0 - x) * y
    return u + v - u * v


def target_matrix(x, y) -> np.ndarray:
    """Targets for arrays ``x``, ``y``; shape (len(x), 10)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return np.stack([
        x / 2.0 + y / 2.0,
        x * (1.0 - y),
        x * y,
        x + y - x * y,
        xor_algebraic(x, y),
        x,
        y,
        1.0 - x,
        1.0 - y,
        np.full_like(x, CONSTANT_TARGET),
    ], axis=-1)


def target_vector(x: float, y: float) -> np.ndarray:
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise DomainError(f"targets are defined on [0, 1]^2, got ({x}, {y})")
    return target_matrix(np.array([x]), np.array([y]))[0]


class Sample(NamedTuple):
    x: float
    y: float
    targets: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Inputs (N, 2), targets (N, 10); the last ``n_test`` rows form the test split."""

    inputs: np.ndarray
    targets: np.ndarray
    n_train: int
    seed: int = 0

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.targets.ndim != 2 or len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets must be 2-D with matching row counts")
        if not 0 <= self.n_train <= len(self.inputs):
            raise ValueError("train count outside the dataset")

    def __len__(self):
        return len(self.inputs)

    @property
    def n_test(self) -> int:
        return len(self) - self.n_train

    def sample(self, i: int) -> Sample:
        return Sample(float(self.inputs[i, 0]), float(self.inputs[i, 1]), self.targets[i].copy())

    @property
    def train(self):
        return self.inputs[:self.n_train], self.targets[:self.n_train]

    @property
    def test(self):
        return self.inputs[self.n_train:], self.targets[self.n_train:]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.n_train == other.n_train and np.array_equal(self.inputs, other.inputs)
                and np.array_equal(self.targets, other.targets))

    __hash__ = None


def split_sizes(n: int):
    n_test = int(math.floor(n * TEST_FRACTION + 0.5))
    return n - n_test, n_test


def generate(seed: int, n: int = 100_000) -> Dataset:
    """Draw ``n`` points uniformly from [0, 1)^2 with SplitMix64(seed), x before y per row."""
    if n < 2:
        raise ValueError("dataset needs at least two samples")
    u = SplitMix64(seed).uniform(2 * n).reshape(n, 2)
    n_train, _ = split_sizes(n)
    return Dataset(u, target_matrix(u[:, 0], u[:, 1]), n_train, seed)


def validate_targets(d: Dataset) -> List[int]:
    """Row indices whose stored targets differ from the recomputed ones."""
    want = target_matrix(d.inputs[:, 0], d.inputs[:, 1])
    return [int(i) for i in np.flatnonzero((want != d.targets).any(axis=1))]


def _fmt(v: float) -> str:
    return format(v, ".17g")


def save_csv(d: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for i in range(len(d)):
            split = "train" if i < d.n_train else "test"
            w.writerow([_fmt(v) for v in d.inputs[i]] + [_fmt(v) for v in d.targets[i]] + [split])


def load_csv(path, seed: int = 0) -> Dataset:
    inputs, targets, splits = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(HEADER)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row[:-1]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if row[-1] not in ("train", "test"):
                raise ValueError(f"{path}:{lineno}: split must be train or test, got {row[-1]!r}")
            if splits and splits[-1] == "test" and row[-1] == "train":
                raise ValueError(f"{path}:{lineno}: train row after the test split began")
            inputs.append(vals[:2])
            targets.append(vals[2:])
            splits.append(row[-1])
    if not inputs:
        raise ValueError(f"{path}: no data rows")
    return Dataset(np.array(inputs), np.array(targets), splits.count("train"), seed)
