"""Propositional formulas with boolean and product-logic semantics.

Formulas are immutable trees. ``eval_boolean`` implements ordinary
propositional semantics on bits; ``eval_algebraic`` extends them to the unit
interval with the product t-norm (AND = product, OR = probabilistic sum,
NOT = 1 - x). Both agree exactly on {0, 1}.

Text syntax::

    x0  x1  0  1  !e  (e & e & ...)  (e | e | ...)  (e ^ e)  (e -> e)  (e <-> e)
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import reduce
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import ArityError, DomainError, FormulaSyntaxError, ResourceError

MAX_ENUM_ARITY = 20

XOR_DNF = "dnf"
XOR_CONORM = "conorm"
XOR_MODES = (XOR_DNF, XOR_CONORM)


@dataclass(frozen=True)
class Var:
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("variable index must be non-negative")


@dataclass(frozen=True)
class Const:
    value: int

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ValueError("constant must be 0 or 1")


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    children: tuple

    def __init__(self, *children):
        if len(children) == 1 and not isinstance(children[0], _NODE_TYPES):
            children = tuple(children[0])
        if not children:
            raise ValueError("And needs at least one child")
        object.__setattr__(self, "children", tuple(children))


@dataclass(frozen=True)
class Or:
    children: tuple

    def __init__(self, *children):
        if len(children) == 1 and not isinstance(children[0], _NODE_TYPES):
            children = tuple(children[0])
        if not children:
            raise ValueError("Or needs at least one child")
        object.__setattr__(self, "children", tuple(children))


@dataclass(frozen=True)
class Xor:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Equiv:
    left: "Formula"
    right: "Formula"


Formula = Union[Var, Const, Not, And, Or, Xor, Implies, Equiv]
_NODE_TYPES = (Var, Const, Not, And, Or, Xor, Implies, Equiv)


@dataclass(frozen=True)
class TruthTable:
    """Output bits of a formula over ``arity`` variables, lexicographic order, x0 most significant."""

    arity: int
    bits: tuple

    def __post_init__(self):
        if len(self.bits) != 1 << self.arity:
            raise ValueError(f"truth table over {self.arity} variables needs {1 << self.arity} bits")


def arity(f: Formula) -> int:
    """One more than the largest variable index in ``f`` (0 for closed formulas)."""
    return max((v.index + 1 for v in variables(f)), default=0)


def variables(f: Formula) -> Iterator[Var]:
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            yield node
        elif isinstance(node, Not):
            stack.append(node.child)
        elif isinstance(node, (And, Or)):
            stack.extend(node.children)
        elif isinstance(node, (Xor, Implies, Equiv)):
            stack.extend((node.left, node.right))


def lower(f: Formula, xor_mode: str = XOR_DNF) -> Formula:
    """Rewrite Xor/Implies/Equiv in terms of Not/And/Or.

    ``xor_mode`` selects between ``(x & !y) | (!x & y)`` ("dnf", the default)
    and ``(x | y) & !(x & y)`` ("conorm"). The two agree on bits but not on
    the open unit square. Equivalence is lowered as the negated XOR.
    """
    if xor_mode not in XOR_MODES:
        raise ValueError(f"unknown xor mode {xor_mode!r}")
    if isinstance(f, (Var, Const)):
        return f
    if isinstance(f, Not):
        return Not(lower(f.child, xor_mode))
    if isinstance(f, And):
        return And(*(lower(c, xor_mode) for c in f.children))
    if isinstance(f, Or):
        return Or(*(lower(c, xor_mode) for c in f.children))
    left, right = lower(f.left, xor_mode), lower(f.right, xor_mode)
    if isinstance(f, Implies):
        return Or(Not(left), right)
    if xor_mode == XOR_DNF:
        xor = Or(And(left, Not(right)), And(Not(left), right))
    else:
        xor = And(Or(left, right), Not(And(left, right)))
    if isinstance(f, Xor):
        return xor
    return Not(xor)


def is_lowered(f: Formula) -> bool:
    if isinstance(f, (Var, Const)):
        return True
    if isinstance(f, Not):
        return is_lowered(f.child)
    if isinstance(f, (And, Or)):
        return all(is_lowered(c) for c in f.children)
    return False


# -- evaluation ---------------------------------------------------------------

def _bool_eval(f: Formula, cols) -> np.ndarray:
    if isinstance(f, Var):
        return cols[f.index]
    if isinstance(f, Const):
        return np.full(cols.shape[1:], bool(f.value))
    if isinstance(f, Not):
        return ~_bool_eval(f.child, cols)
    if isinstance(f, And):
        return reduce(np.logical_and, (_bool_eval(c, cols) for c in f.children))
    if isinstance(f, Or):
        return reduce(np.logical_or, (_bool_eval(c, cols) for c in f.children))
    left, right = _bool_eval(f.left, cols), _bool_eval(f.right, cols)
    if isinstance(f, Xor):
        return left != right
    if isinstance(f, Implies):
        return ~left | right
    return left == right


def _alg_eval(f: Formula, cols) -> np.ndarray:
    # f must already be lowered
    if isinstance(f, Var):
        return cols[f.index]
    if isinstance(f, Const):
        return np.full(cols.shape[1:], float(f.value))
    if isinstance(f, Not):
        return 1.0 - _alg_eval(f.child, cols)
    if isinstance(f, And):
        return reduce(np.multiply, (_alg_eval(c, cols) for c in f.children))
    if isinstance(f, Or):
        return 1.0 - reduce(np.multiply, (1.0 - _alg_eval(c, cols) for c in f.children))
    raise TypeError(f"formula is not lowered: {f!r}")


def _columns(f: Formula, points, dtype) -> np.ndarray:
    pts = np.asarray(points, dtype=dtype)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    need = arity(f)
    if pts.shape[1] < need:
        raise ArityError(f"formula uses x{need - 1} but only {pts.shape[1]} inputs were given")
    return pts.T, single


def eval_boolean(f: Formula, assignment) -> Union[int, np.ndarray]:
    """Evaluate ``f`` on a bit vector, or row-wise on a 2-D array of bit vectors."""
    raw = np.asarray(assignment)
    if raw.size and not np.isin(raw, (0, 1)).all():
        raise DomainError("boolean assignment must contain only 0 and 1")
    cols, single = _columns(f, raw, bool)
    out = _bool_eval(f, cols).astype(np.int64)
    return int(out[0]) if single else out


def eval_algebraic(f: Formula, point, xor_mode: str = XOR_DNF) -> Union[float, np.ndarray]:
    """Evaluate ``f`` under product logic on a point (or rows of points) in [0, 1]^n."""
    cols, single = _columns(f, point, np.float64)
    if cols.size and (np.isnan(cols).any() or cols.min() < 0.0 or cols.max() > 1.0):
        raise DomainError("algebraic evaluation requires inputs in [0, 1]")
    out = _alg_eval(lower(f, xor_mode), cols)
    out = np.broadcast_to(out, cols.shape[1:])
    return float(out[0]) if single else np.array(out)


def assignments(n: int) -> np.ndarray:
    """All 2^n bit vectors as rows, lexicographic with x0 as the most significant bit."""
    if n > MAX_ENUM_ARITY:
        raise ResourceError(f"refusing to enumerate 2^{n} assignments (limit 2^{MAX_ENUM_ARITY})")
    k = np.arange(1 << n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((k[:, None] >> shifts[None, :]) & 1).astype(np.int8)


def truth_table(f: Formula, n: int) -> TruthTable:
    if n > MAX_ENUM_ARITY:
        raise ResourceError(f"arity {n} exceeds the enumeration limit {MAX_ENUM_ARITY}")
    if n < arity(f):
        raise ArityError(f"formula needs {arity(f)} variables, got n={n}")
    rows = assignments(n)
    if n == 0:
        bits = (int(_bool_eval(f, np.zeros((0, 1), bool))[0]),)
    else:
        bits = tuple(int(b) for b in eval_boolean(f, rows))
    return TruthTable(n, bits)


def equivalent(f: Formula, g: Formula, n: int) -> bool:
    return truth_table(f, n) == truth_table(g, n)


# -- text syntax --------------------------------------------------------------

_BINARY = {Xor: "^", Implies: "->", Equiv: "<->"}
_NARY = {And: "&", Or: "|"}
_TOKEN = re.compile(r"\s*(?:(x\d+)|(<->|->|[!()&|^01]))")


def to_text(f: Formula) -> str:
    """Render ``f`` in the text syntax; single-child And/Or print as their child."""
    if isinstance(f, Var):
        return f"x{f.index}"
    if isinstance(f, Const):
        return str(f.value)
    if isinstance(f, Not):
        return "!" + to_text(f.child)
    if isinstance(f, (And, Or)):
        if len(f.children) == 1:
            return to_text(f.children[0])
        op = f" {_NARY[type(f)]} "
        return "(" + op.join(to_text(c) for c in f.children) + ")"
    return f"({to_text(f.left)} {_BINARY[type(f)]} {to_text(f.right)})"


def _tokenize(text: str) -> list:
    tokens, pos = [], 0
    stripped = text.rstrip()
    while pos < len(stripped):
        m = _TOKEN.match(stripped, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character at offset {pos}: {stripped[pos:pos + 10]!r}")
        tokens.append(m.group(1) or m.group(2))
        pos = m.end()
    return tokens


def parse(text: str) -> Formula:
    """Parse the text syntax; the outermost parentheses may be omitted."""
    tokens = _tokenize(text)
    if not tokens:
        raise FormulaSyntaxError("empty formula")
    tokens = ["("] + tokens + [")"]
    f, pos = _parse_expr(tokens, 0)
    if pos != len(tokens):
        raise FormulaSyntaxError(f"unbalanced ')' at token {pos - 1}")
    return f


def _parse_expr(tokens, pos):
    if pos >= len(tokens):
        raise FormulaSyntaxError("unexpected end of formula")
    tok = tokens[pos]
    if tok.startswith("x"):
        return Var(int(tok[1:])), pos + 1
    if tok in ("0", "1"):
        return Const(int(tok)), pos + 1
    if tok == "!":
        child, pos = _parse_expr(tokens, pos + 1)
        return Not(child), pos
    if tok != "(":
        raise FormulaSyntaxError(f"unexpected token {tok!r}")
    first, pos = _parse_expr(tokens, pos + 1)
    operands, op = [first], None
    while pos < len(tokens) and tokens[pos] != ")":
        this = tokens[pos]
        if this not in ("&", "|", "^", "->", "<->"):
            raise FormulaSyntaxError(f"expected an operator, got {this!r}")
        if op is not None and this != op:
            raise FormulaSyntaxError(f"mixed operators {op!r} and {this!r} need parentheses")
        op = this
        nxt, pos = _parse_expr(tokens, pos + 1)
        operands.append(nxt)
    if pos >= len(tokens):
        raise FormulaSyntaxError("missing ')'")
    pos += 1
    if op is None:
        return first, pos
    if op == "&":
        return And(*operands), pos
    if op == "|":
        return Or(*operands), pos
    if len(operands) != 2:
        raise FormulaSyntaxError(f"operator {op!r} is binary")
    cls = {"^": Xor, "->": Implies, "<->": Equiv}[op]
    return cls(*operands), pos


def big_and(fs: Sequence[Formula]) -> Formula:
    """Conjunction of ``fs``; the empty conjunction is ``Const(1)``."""
    fs = list(fs)
    return Const(1) if not fs else fs[0] if len(fs) == 1 else And(*fs)


def big_or(fs: Sequence[Formula]) -> Formula:
    fs = list(fs)
    return Const(0) if not fs else fs[0] if len(fs) == 1 else Or(*fs)
