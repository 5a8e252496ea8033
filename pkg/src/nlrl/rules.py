"""Moving between formulas and network weights.

:func:`init_from_formula` writes saturated weights (raw values of +/-40)
so that a network computes given formulas on boolean inputs;
:func:`extract` reads a formula back out of weights whose squashed values
are close enough to 0 or 1.

Injection works from truth tables. A single layer can host a conjunction of
literals (all variants) or a disjunction of literals (AND-OR, AND-NEG).
Deeper networks copy the inputs through all but the last two layers, then
place a two-level normal form there: AND terms in the hidden layer and a
final disjunction, which AND-NEG realises as ``!AND(!h)`` and AND-NONEG
realises as a CNF ``AND(!h)`` over terms of the complemented function.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import CapacityError, ShapeError
from .layer import SATURATION, NegationMode, Variant, squash
from .logic import (
    And,
    Const,
    Formula,
    Not,
    Or,
    Var,
    arity,
    assignments,
    big_and,
    big_or,
    eval_boolean,
    to_text,
    truth_table,
)
from .network import Network, NetworkSpec

Cube = Tuple[Optional[int], ...]


# -- two-level covers -----------------------------------------------------------

def _merge(a: Cube, b: Cube) -> Optional[Cube]:
    diff = -1
    for i, (u, v) in enumerate(zip(a, b)):
        if u != v:
            if u is None or v is None or diff >= 0:
                return None
            diff = i
    if diff < 0:
        return None
    return a[:diff] + (None,) + a[diff + 1:]


def prime_implicants(minterms: Sequence[int], n: int) -> List[Cube]:
    """Quine-McCluskey prime implicants of the on-set ``minterms``."""
    current = {tuple((m >> (n - 1 - i)) & 1 for i in range(n)) for m in minterms}
    primes = set()
    while current:
        merged, used = set(), set()
        items = sorted(current, key=lambda c: tuple(-1 if v is None else v for v in c))
        for a, b in itertools.combinations(items, 2):
            c = _merge(a, b)
            if c is not None:
                merged.add(c)
                used.update((a, b))
        primes |= current - used
        current = merged
    return sorted(primes, key=lambda c: tuple(-1 if v is None else v for v in c))


def _covers(cube: Cube, m: int, n: int) -> bool:
    return all(v is None or v == (m >> (n - 1 - i)) & 1 for i, v in enumerate(cube))


def cube_cover(minterms: Sequence[int], n: int) -> List[Cube]:
    """A small set of cubes whose union is exactly the on-set (greedy over prime implicants)."""
    todo = set(minterms)
    if not todo:
        return []
    primes = prime_implicants(sorted(todo), n)
    chosen = []
    while todo:
        best = max(primes, key=lambda c: sum(_covers(c, m, n) for m in todo))
        chosen.append(best)
        todo = {m for m in todo if not _covers(best, m, n)}
    return chosen


def _on_set(f: Formula, n: int, negate: bool = False) -> List[int]:
    bits = truth_table(f, n).bits
    return [k for k, b in enumerate(bits) if b != negate]


# -- injection ----------------------------------------------------------------

@dataclass
class _Neuron:
    literals: Dict[int, bool] = field(default_factory=dict)  # input index -> negated
    disjunction: bool = False
    negate_out: bool = False


def _term(cube: Cube) -> _Neuron:
    return _Neuron({i: v == 0 for i, v in enumerate(cube) if v is not None})


def _encode_layer(neurons: List[_Neuron], n_in: int, width: int, variant: Variant,
                  mode: NegationMode, layer_index: int) -> dict:
    S = SATURATION
    A = np.full((width, n_in), -S)
    per_rule = mode is NegationMode.PER_INPUT_PER_RULE
    g = np.full((width, n_in) if per_rule else (n_in,), -S)
    shared: Dict[int, bool] = {}
    gate = np.full(width, -S)
    for j, nr in enumerate(neurons):
        for i, neg in nr.literals.items():
            A[j, i] = S
            if per_rule:
                g[j, i] = S if neg else -S
            else:
                if shared.setdefault(i, neg) != neg:
                    raise CapacityError(
                        f"layer {layer_index} needs input {i} both plain and negated; "
                        "use the per-input-per-rule negation mode")
                g[i] = S if neg else -S
        if variant is Variant.AND_OR:
            if nr.negate_out:
                raise CapacityError("and-or layers cannot negate their output")
            gate[j] = S if nr.disjunction else -S
        elif variant is Variant.AND_NEG:
            if nr.disjunction:
                raise CapacityError("and-neg layers have no disjunction")
            gate[j] = S if nr.negate_out else -S
        elif nr.disjunction or nr.negate_out:
            raise CapacityError("and-noneg layers only compute conjunctions of literals")
    out = {"A_raw": A, "g_raw": g}
    if variant.has_gate:
        out["gate_raw"] = gate
    return out


def _single_layer_neuron(f: Formula, n: int, variant: Variant) -> _Neuron:
    cover = cube_cover(_on_set(f, n), n)
    if len(cover) == 1:
        return _term(cover[0])
    off = cube_cover(_on_set(f, n, negate=True), n)
    if len(off) == 1 and variant is not Variant.AND_NONEG:
        c = off[0]
        if variant is Variant.AND_OR:
            return _Neuron({i: v == 1 for i, v in enumerate(c) if v is not None}, disjunction=True)
        return _Neuron(_term(c).literals, negate_out=True)
    raise CapacityError(f"{to_text(f)} is not a single {variant.value} rule; the network needs at least 2 layers")


def _normalise_targets(f, spec: NetworkSpec) -> List[Optional[Formula]]:
    if isinstance(f, (list, tuple)):
        targets = list(f)
        if len(targets) != spec.n_out:
            raise ShapeError(f"{len(targets)} formulas for {spec.n_out} outputs")
    else:
        targets = [f] * spec.n_out
    for t in targets:
        if t is not None and arity(t) > spec.n_in:
            raise CapacityError(f"{to_text(t)} uses {arity(t)} variables, network has {spec.n_in} inputs")
    return targets


def init_from_formula(f: Union[Formula, Sequence[Optional[Formula]]], spec: NetworkSpec) -> Network:
    """Saturated weights computing ``f`` on boolean inputs.

    ``f`` is either one formula (placed on every output) or one formula per
    output, where ``None`` leaves that output at the constant 1.
    """
    targets = _normalise_targets(f, spec)
    n0, L, variant, mode = spec.n_in, spec.n_layers, spec.variant, spec.negation_mode
    plans: List[List[_Neuron]] = []

    if L == 1:
        plans.append([_Neuron() if t is None else _single_layer_neuron(t, n0, variant) for t in targets])
    else:
        for k in range(L - 2):
            if spec.sizes[k + 1] < n0:
                raise CapacityError(f"layer {k} must be at least {n0} wide to pass the inputs through, "
                                    f"has {spec.sizes[k + 1]}")
            plans.append([_Neuron({i: False}) for i in range(n0)])
        terms: Dict[Cube, int] = {}
        out_layer = []
        for t in targets:
            if t is None:
                out_layer.append(_Neuron())
                continue
            cover = cube_cover(_on_set(t, n0, negate=variant is Variant.AND_NONEG), n0)
            idx = [terms.setdefault(c, len(terms)) for c in cover]
            if variant is Variant.AND_OR:
                out_layer.append(_Neuron({h: False for h in idx}, disjunction=True))
            else:
                out_layer.append(_Neuron({h: True for h in idx}, negate_out=variant is Variant.AND_NEG))
        width = spec.sizes[L - 1]
        if len(terms) > width:
            raise CapacityError(f"layer {L - 2} needs width >= {len(terms)} for the normal form, has {width}")
        plans.append([_term(c) for c in terms])
        plans.append(out_layer)

    arrays = [_encode_layer(plan, n_in, width, variant, mode, k)
              for k, (plan, n_in, width) in enumerate(zip(plans, spec.sizes[:-1], spec.sizes[1:]))]
    return Network.from_arrays(spec, arrays)


# -- verification and extraction ------------------------------------------------

def verify(f: Union[Formula, Sequence[Optional[Formula]]], net: Network) -> float:
    """Largest ``|network - f|`` over all boolean input corners."""
    targets = _normalise_targets(f, net.spec)
    corners = assignments(net.spec.n_in)
    out = net.predict(corners.astype(np.float64))
    worst = 0.0
    for j, t in enumerate(targets):
        if t is not None:
            worst = max(worst, float(np.max(np.abs(out[:, j] - eval_boolean(t, corners)))))
    return worst


def simplify(f: Formula) -> Formula:
    """Drop double negations and single-child And/Or nodes (no minimisation)."""
    if isinstance(f, Not):
        inner = simplify(f.child)
        return inner.child if isinstance(inner, Not) else Not(inner)
    if isinstance(f, (And, Or)):
        kids = [simplify(c) for c in f.children]
        return kids[0] if len(kids) == 1 else type(f)(*kids)
    return f


@dataclass
class NeuronRule:
    index: int
    formula: Optional[Formula]
    unsaturated: List[str]
    max_corner_deviation: Optional[float]

    @property
    def text(self) -> str:
        if self.formula is not None:
            return to_text(self.formula)
        return "UNSATURATED(" + ", ".join(self.unsaturated) + ")"


@dataclass
class ExtractionReport:
    theta: float
    outputs: List[NeuronRule]

    def text(self) -> str:
        return "\n".join(r.text for r in self.outputs)

    def to_json(self) -> str:
        return json.dumps({
            "theta": self.theta,
            "outputs": [{"index": r.index,
                         "formula": None if r.formula is None else to_text(r.formula),
                         "unsaturated": r.unsaturated,
                         "max_corner_deviation": r.max_corner_deviation} for r in self.outputs],
        }, indent=1)


def _state(s: np.ndarray, theta: float) -> np.ndarray:
    """1 where saturated high, 0 where saturated low, -1 otherwise."""
    return np.where(s >= theta, 1, np.where(s <= 1.0 - theta, 0, -1))


def extract(net: Network, theta: float = 0.9) -> ExtractionReport:
    if not 0.5 < theta < 1.0:
        raise ValueError("theta must lie in (0.5, 1)")
    spec = net.spec
    prev: List[Optional[Formula]] = [Var(i) for i in range(spec.n_in)]
    prev_cone: List[set] = [set() for _ in range(spec.n_in)]
    per_rule = spec.negation_mode is NegationMode.PER_INPUT_PER_RULE
    for k, layer in enumerate(net.layers):
        A = _state(squash(layer.A_raw), theta)
        G = _state(squash(layer.g_raw), theta)
        R = None if layer.gate_raw is None else _state(squash(layer.gate_raw), theta)
        formulas, cones = [], []
        for j in range(layer.n_out):
            cone, lits, ok = set(), [], True
            for i in range(layer.n_in):
                if A[j, i] == 0:
                    continue
                cone |= prev_cone[i]
                gi = G[j, i] if per_rule else G[i]
                gname = f"layer{k}.g_raw[{j}, {i}]" if per_rule else f"layer{k}.g_raw[{i}]"
                if A[j, i] < 0:
                    cone.add(f"layer{k}.A_raw[{j}, {i}]")
                    ok = False
                if gi < 0:
                    cone.add(gname)
                    ok = False
                if prev[i] is None:
                    ok = False
                if ok and A[j, i] == 1:
                    lits.append(Not(prev[i]) if gi == 1 else prev[i])
            if R is not None and R[j] < 0:
                cone.add(f"layer{k}.gate_raw[{j}]")
                ok = False
            f = None
            if ok:
                if layer.variant is Variant.AND_OR and R[j] == 1:
                    f = big_or(lits)
                else:
                    f = big_and(lits)
                    if layer.variant is Variant.AND_NEG and R[j] == 1:
                        f = Not(f)
                f = simplify(f)
            formulas.append(f)
            cones.append(cone)
        prev, prev_cone = formulas, cones

    corners = assignments(spec.n_in)
    out = net.predict(corners.astype(np.float64))
    rules = []
    for j, f in enumerate(prev):
        dev = None
        if f is not None:
            dev = float(np.max(np.abs(out[:, j] - eval_boolean(f, corners))))
        rules.append(NeuronRule(j, f, sorted(prev_cone[j], key=_coord_key), dev))
    return ExtractionReport(theta, rules)


def _coord_key(name: str):
    layer, rest = name.split(".", 1)
    param, idx = rest.split("[", 1)
    return int(layer[5:]), param, tuple(int(v) for v in idx.rstrip("]").split(","))


# -- firing ---------------------------------------------------------------------

def fired(outputs, threshold: float = 0.5):
    """Which outputs reach ``threshold`` and whether none did (a "not classified" input)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    outputs = np.asarray(outputs, dtype=np.float64)
    hits = outputs >= threshold
    none = ~hits.any(axis=-1)
    return hits, (bool(none) if none.ndim == 0 else none)
