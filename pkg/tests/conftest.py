import math
import sys
from pathlib import Path

import numpy as np
import pytest

from redeq.data import Dataset
from redeq.eds.base import EdsModel
from redeq.expr import parse_expression

CHILDREN = Path(__file__).parent / "children"
SAMPLE_TREE = "sin(x0)*x0 + ln(x1^2)"


def child_command(script, *args):
    return [sys.executable, str(CHILDREN / script), *args]


class ConstantModel(EdsModel):
    """Always proposes the same equation."""

    def __init__(self, text):
        self.expr = parse_expression(text)
        self.calls = 0

    def fit(self, data, target):
        self.calls += 1
        return self.expr


class ScriptedModel(EdsModel):
    """Returns queued answers in order; the last one repeats."""

    def __init__(self, *texts):
        self.answers = [parse_expression(t) for t in texts]
        self.targets = []

    def fit(self, data, target):
        self.targets.append(np.array(target))
        return self.answers.pop(0) if len(self.answers) > 1 else self.answers[0]


def make_data(fn, n=200, n_vars=1, lo=-2.0, hi=2.0, seed=0, role="full"):
    rng = np.random.default_rng(seed)
    X = rng.uniform(lo, hi, size=(n, n_vars))
    return Dataset(X, fn(X), role=role)


@pytest.fixture
def sample_tree():
    return parse_expression(SAMPLE_TREE)


@pytest.fixture
def sextic_data():
    return make_data(lambda X: X[:, 1] ** 6 + np.sin(X[:, 1]), n=300, n_vars=2, seed=1)


@pytest.fixture
def echo_command():
    return child_command("echo_child.py", "x0 + 1")


def random_body(rng, depth, n_vars=2, ops=None):
    """Random expression body using every operator kind, at most ``depth`` deep."""
    from redeq.expr import OPERATORS, const, op, var

    ops = list(ops or OPERATORS)
    if depth <= 1 or rng.random() < 0.2:
        if rng.random() < 0.5:
            return var(int(rng.integers(n_vars)))
        return const(float(np.round(rng.uniform(0.5, 3.0), 3)))
    kind = ops[rng.integers(len(ops))]
    return op(kind, *[random_body(rng, depth - 1, n_vars, ops) for _ in range(kind.arity)])


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
