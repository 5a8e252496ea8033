"""Neural logic rule layer: forward pass and exact analytic gradients.

A layer maps ``n`` inputs in [0, 1] to ``m`` rule outputs. All learnable
weights are unconstrained logits squashed through the logistic function:

* negation gate ``g``:  ``xh = (1 - s(g)) * x + s(g) * (1 - x)``
* rule membership ``A`` (m x n), shared by both connectors:
  ``AND_j = prod_i (xh_i + eps) ** s(A_ji)`` and
  ``OR_j = 1 - prod_i (1 - s(A_ji) * xh_i)``
* per-rule output gate, depending on the variant:
  AND-OR mixes the connectors, AND-NEG optionally negates the conjunction,
  AND-NONEG has no gate.

Every array carries a leading batch axis. Forward returns an explicit
:class:`LayerTrace`; backward consumes it and never touches hidden state.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy.special import expit

from .errors import ResourceError, ShapeError

EPSILON = 1e-5
SATURATION = 40.0
MAX_KRONECKER_N = 16


class Variant(str, enum.Enum):
    AND_OR = "and-or"
    AND_NEG = "and-neg"
    AND_NONEG = "and-noneg"

    @property
    def has_gate(self) -> bool:
        return self is not Variant.AND_NONEG


class NegationMode(str, enum.Enum):
    PER_INPUT = "per-input"
    PER_INPUT_PER_RULE = "per-input-per-rule"


def squash(raw):
    """Logistic function ``1 / (1 + exp(-raw))``; saturates without overflow."""
    return expit(np.asarray(raw, dtype=np.float64))


def negation_gate(x, g_raw):
    """Soft negation of ``x`` (..., n).

    With a vector ``g_raw`` (n,) the result has the shape of ``x``; with a
    matrix (m, n) each rule gets its own row and the result is (..., m, n).
    """
    x = np.asarray(x, dtype=np.float64)
    g_raw = np.asarray(g_raw, dtype=np.float64)
    if g_raw.shape[-1] != x.shape[-1]:
        raise ShapeError(f"negation weights {g_raw.shape} do not match input width {x.shape[-1]}")
    s = squash(g_raw)
    if g_raw.ndim == 2:
        x = x[..., None, :]
    return (1.0 - s) * x + s * (1.0 - x)


def and_rule(xh, A_raw, epsilon=EPSILON, per_rule=False):
    """Weighted product conjunction ``exp(sum_i s(A_ji) log(max(xh_i, 0) + eps))``.

    ``xh`` is (..., n) shared by all rules, or (..., m, n) with ``per_rule``.
    """
    xh = np.asarray(xh, dtype=np.float64)
    A = squash(A_raw)
    if A.shape[-1] != xh.shape[-1] or (per_rule and xh.shape[-2] != A.shape[0]):
        raise ShapeError(f"rule weights {A.shape} do not match negated input {xh.shape}")
    logs = np.log(np.maximum(xh, 0.0) + epsilon)
    if per_rule:
        return np.exp((A * logs).sum(-1))
    return np.exp(logs @ A.T)


def or_rule(xh, A_raw, per_rule=False):
    """Probabilistic-sum disjunction ``1 - prod_i (1 - s(A_ji) xh_i)``."""
    xh = np.asarray(xh, dtype=np.float64)
    A = squash(A_raw)
    if A.shape[-1] != xh.shape[-1] or (per_rule and xh.shape[-2] != A.shape[0]):
        raise ShapeError(f"rule weights {A.shape} do not match negated input {xh.shape}")
    if not per_rule:
        xh = xh[..., None, :]
    return 1.0 - np.prod(1.0 - A * xh, axis=-1)


def or_rule_kronecker(xh, a):
    """Literal Kronecker-product form of the disjunction of one rule.

    Builds ``(1, -a_n xh_n) (x) ... (x) (1, -a_2 xh_2) (x) (-1, a_1 xh_1)``,
    sums its 2^n entries and adds one. Exponential in ``n``; test use only.
    """
    xh = np.asarray(xh, dtype=np.float64).ravel()
    a = np.asarray(a, dtype=np.float64).ravel()
    if xh.shape != a.shape:
        raise ShapeError("weights and inputs differ in length")
    n = xh.size
    if n > MAX_KRONECKER_N:
        raise ResourceError(f"Kronecker expansion of {n} inputs exceeds 2^{MAX_KRONECKER_N} terms")
    if n == 0:
        return 0.0
    v = np.array([-1.0, a[0] * xh[0]])
    for i in range(1, n):
        v = np.kron(np.array([1.0, -a[i] * xh[i]]), v)
    return float(v.sum() + 1.0)


def output_gate(and_vec, or_vec, gate_raw):
    """``(1 - s(g)) * AND + s(g) * OR``."""
    and_vec = np.asarray(and_vec, dtype=np.float64)
    or_vec = np.asarray(or_vec, dtype=np.float64)
    if and_vec.shape != or_vec.shape:
        raise ShapeError(f"AND {and_vec.shape} and OR {or_vec.shape} differ")
    s = squash(gate_raw)
    return (1.0 - s) * and_vec + s * or_vec


@dataclass(frozen=True)
class LayerParams:
    """Raw (unsquashed) weights of one layer.

    ``A_raw`` is (m, n); ``g_raw`` is (n,) or (m, n) depending on the
    negation mode; ``gate_raw`` is (m,) or ``None`` for AND-NONEG.
    """

    A_raw: np.ndarray
    g_raw: np.ndarray
    gate_raw: Optional[np.ndarray]
    variant: Variant
    negation_mode: NegationMode = NegationMode.PER_INPUT

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "negation_mode", NegationMode(self.negation_mode))
        if self.A_raw.ndim != 2:
            raise ShapeError("A_raw must be a matrix")
        m, n = self.A_raw.shape
        want_g = (n,) if self.negation_mode is NegationMode.PER_INPUT else (m, n)
        if self.g_raw.shape != want_g:
            raise ShapeError(f"g_raw has shape {self.g_raw.shape}, expected {want_g}")
        if self.variant.has_gate:
            if self.gate_raw is None or self.gate_raw.shape != (m,):
                raise ShapeError(f"{self.variant.value} layer needs gate_raw of shape ({m},)")
        elif self.gate_raw is not None:
            raise ShapeError("and-noneg layers have no output gate")

    @property
    def n_in(self) -> int:
        return self.A_raw.shape[1]

    @property
    def n_out(self) -> int:
        return self.A_raw.shape[0]

    @property
    def per_rule(self) -> bool:
        return self.negation_mode is NegationMode.PER_INPUT_PER_RULE

    def arrays(self) -> dict:
        out = {"A_raw": self.A_raw, "g_raw": self.g_raw}
        if self.gate_raw is not None:
            out["gate_raw"] = self.gate_raw
        return out

    def replace(self, **arrays) -> "LayerParams":
        merged = {**self.arrays(), **arrays}
        return LayerParams(merged["A_raw"], merged["g_raw"], merged.get("gate_raw"),
                           self.variant, self.negation_mode)


@dataclass(frozen=True)
class LayerTrace:
    """Values cached by :func:`layer_forward` for the backward pass.

    ``xh`` and ``logs`` are stored as (B, k, n) with ``k = 1`` when the
    negation is shared by all rules and ``k = m`` per rule.
    """

    params: LayerParams
    epsilon: float
    x: np.ndarray
    xh: np.ndarray
    logs: np.ndarray
    and_vec: np.ndarray
    or_vec: Optional[np.ndarray]
    y: np.ndarray
    A: np.ndarray
    s_g: np.ndarray
    s_r: np.ndarray

    @property
    def negated(self) -> np.ndarray:
        """Negated inputs as (B, n), or (B, m, n) per rule."""
        return self.xh if self.params.per_rule else self.xh[:, 0, :]


@dataclass(frozen=True)
class LayerGrads:
    x: np.ndarray
    A_raw: np.ndarray
    g_raw: np.ndarray
    gate_raw: Optional[np.ndarray]

    def arrays(self) -> dict:
        out = {"A_raw": self.A_raw, "g_raw": self.g_raw}
        if self.gate_raw is not None:
            out["gate_raw"] = self.gate_raw
        return out


_VARIANT_CODE = {Variant.AND_OR: 0, Variant.AND_NEG: 1, Variant.AND_NONEG: 2}
_NO_GATE = np.zeros(0)


@njit(cache=True)
def _forward_kernel(x, A, s_g, s_r, eps, variant, xh, logs, and_vec, or_vec, y):
    B, n = x.shape
    m = A.shape[0]
    k = s_g.shape[0]
    for b in range(B):
        for r in range(k):
            for i in range(n):
                v = x[b, i] + s_g[r, i] * (1.0 - 2.0 * x[b, i])
                xh[b, r, i] = v
                logs[b, r, i] = np.log(max(v, 0.0) + eps)
        for j in range(m):
            r = j if k > 1 else 0
            acc = 0.0
            for i in range(n):
                acc += A[j, i] * logs[b, r, i]
            a = np.exp(acc)
            and_vec[b, j] = a
            if variant == 0:
                p = 1.0
                for i in range(n):
                    p *= 1.0 - A[j, i] * xh[b, r, i]
                o = 1.0 - p
                or_vec[b, j] = o
                y[b, j] = a + s_r[j] * (o - a)
            elif variant == 1:
                y[b, j] = s_r[j] + (1.0 - 2.0 * s_r[j]) * a
            else:
                y[b, j] = a


@njit(cache=True)
def _backward_kernel(dy, x, A, s_g, s_r, eps, variant, xh, logs, and_vec, or_vec,
                     dx, dA, dg, dgate):
    B, n = x.shape
    m = A.shape[0]
    k = s_g.shape[0]
    dxh = np.zeros((k, n))
    before = np.empty(n + 1)
    after = np.empty(n + 1)
    for b in range(B):
        dxh[:, :] = 0.0
        for j in range(m):
            r = j if k > 1 else 0
            g = dy[b, j]
            a = and_vec[b, j]
            if variant == 0:
                d_or = g * s_r[j]
                d_and = g - d_or
                dgate[j] += g * (or_vec[b, j] - a)
            elif variant == 1:
                d_or = 0.0
                d_and = g * (1.0 - 2.0 * s_r[j])
                dgate[j] += g * (1.0 - 2.0 * a)
            else:
                d_or = 0.0
                d_and = g
            # d AND_j / d (sum_i A_ji log_i) = AND_j
            d_sum = d_and * a
            for i in range(n):
                dA[j, i] += d_sum * logs[b, r, i]
                v = xh[b, r, i]
                if v >= 0.0:
                    dxh[r, i] += d_sum * A[j, i] / (v + eps)
            if variant == 0:
                before[0] = 1.0
                for i in range(n):
                    before[i + 1] = before[i] * (1.0 - A[j, i] * xh[b, r, i])
                after[n] = 1.0
                for i in range(n - 1, -1, -1):
                    after[i] = after[i + 1] * (1.0 - A[j, i] * xh[b, r, i])
                for i in range(n):
                    t = d_or * before[i] * after[i + 1]
                    dA[j, i] += t * xh[b, r, i]
                    dxh[r, i] += t * A[j, i]
        for r in range(k):
            for i in range(n):
                dx[b, i] += dxh[r, i] * (1.0 - 2.0 * s_g[r, i])
                dg[r, i] += dxh[r, i] * (1.0 - 2.0 * x[b, i])
    for j in range(m):
        for i in range(n):
            dA[j, i] *= A[j, i] * (1.0 - A[j, i])
    for r in range(k):
        for i in range(n):
            dg[r, i] *= s_g[r, i] * (1.0 - s_g[r, i])
    for j in range(dgate.shape[0]):
        dgate[j] *= s_r[j] * (1.0 - s_r[j])


def layer_forward(x, params: LayerParams, epsilon=EPSILON):
    """Apply one layer to a batch ``x`` of shape (B, n); returns ``(y, trace)``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.n_in:
        raise ShapeError(f"layer expects input (B, {params.n_in}), got {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("non-finite layer input")
    B, n = x.shape
    m = params.n_out
    A = expit(params.A_raw)
    s_g = expit(params.g_raw).reshape(-1, n)
    variant = params.variant
    s_r = expit(params.gate_raw) if variant.has_gate else _NO_GATE
    k = s_g.shape[0]
    xh = np.empty((B, k, n))
    logs = np.empty((B, k, n))
    and_vec = np.empty((B, m))
    or_vec = np.empty((B, m)) if variant is Variant.AND_OR else None
    y = np.empty((B, m))
    _forward_kernel(x, A, s_g, s_r, float(epsilon), _VARIANT_CODE[variant], xh, logs, and_vec,
                    and_vec if or_vec is None else or_vec, y)
    return y, LayerTrace(params, epsilon, x, xh, logs, and_vec, or_vec, y, A, s_g, s_r)


def layer_backward(trace: LayerTrace, dy) -> LayerGrads:
    """Chain rule through one layer given ``dL/dy`` of shape (B, m)."""
    p = trace.params
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    if dy.shape != trace.y.shape:
        raise ShapeError(f"upstream gradient {dy.shape} does not match layer output {trace.y.shape}")
    dx = np.zeros(trace.x.shape)
    dA = np.zeros(trace.A.shape)
    dg = np.zeros(trace.s_g.shape)
    dgate = np.zeros(trace.s_r.shape)
    _backward_kernel(dy, trace.x, trace.A, trace.s_g, trace.s_r, float(trace.epsilon),
                     _VARIANT_CODE[p.variant], trace.xh, trace.logs, trace.and_vec,
                     trace.and_vec if trace.or_vec is None else trace.or_vec,
                     dx, dA, dg, dgate)
    return LayerGrads(dx, dA, dg.reshape(p.g_raw.shape), dgate if p.variant.has_gate else None)
