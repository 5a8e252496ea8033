import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from nlrl.logic import And, Const, Equiv, Implies, Not, Or, Var, Xor

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def formulas(max_var=3, max_leaves=8, lowered=False):
    """Random formula trees over variables x0..x{max_var}."""
    leaves = st.one_of(st.builds(Var, st.integers(0, max_var)), st.builds(Const, st.integers(0, 1)))

    def extend(children):
        nary = st.lists(children, min_size=2, max_size=3)
        options = [
            st.builds(Not, children),
            nary.map(lambda cs: And(*cs)),
            nary.map(lambda cs: Or(*cs)),
        ]
        if not lowered:
            options += [st.builds(Xor, children, children), st.builds(Implies, children, children),
                        st.builds(Equiv, children, children)]
        return st.one_of(options)

    return st.recursive(leaves, extend, max_leaves=max_leaves)


def random_formula(rng: np.random.Generator, n_vars: int, depth: int = 3):
    """Random formula with Xor/Implies/Equiv nodes, drawn from ``rng``."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.08:
            return Const(int(rng.integers(2)))
        return Var(int(rng.integers(n_vars)))
    kind = rng.integers(6)
    if kind == 0:
        return Not(random_formula(rng, n_vars, depth - 1))
    if kind in (1, 2):
        cs = [random_formula(rng, n_vars, depth - 1) for _ in range(int(rng.integers(2, 4)))]
        return And(*cs) if kind == 1 else Or(*cs)
    cls = (Xor, Implies, Equiv)[kind - 3]
    return cls(random_formula(rng, n_vars, depth - 1), random_formula(rng, n_vars, depth - 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
