"""Residual-driven refinement of an equation (RED).

Nodes are visited in residual-list order.  For each one the residual target
is computed on the training data, the equation discovery model proposes a
replacement subtree, and the spliced equation is kept if its validation MSE
is strictly lower.  After every accepted change the residual list is built
afresh for the new tree, minus the updated node and its ancestors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .eds.base import EdsModel, fit
from .errors import RedError
from .expr import Expression, count_operators, evaluate, replace_subtree
from .residual import build_residual_list, compute_residual, prune_after_update

__all__ = [
    "RedConfig",
    "RedRecord",
    "RedTrace",
    "ResidualCursor",
    "get_next_residual_node",
    "red_refine",
    "test_equation",
]

log = logging.getLogger(__name__)

STALE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class RedConfig:
    i_max: int = 10
    T: float = 0.001
    record_trace: bool = True

    def __post_init__(self):
        if int(self.i_max) < 1:
            raise ValueError("i_max must be at least 1")
        if not self.T >= 0:
            raise ValueError("T must be non-negative")


@dataclass(frozen=True)
class RedRecord:
    iteration: int
    node: int
    candidate: Expression | None
    val_mse: float
    accepted: bool
    train_mse: float
    operators: int
    tree: Expression
    error: str | None = None


@dataclass
class RedTrace:
    records: list = field(default_factory=list)
    initial_val_mse: float = np.inf
    final_val_mse: float = np.inf
    no_operator: bool = False
    n_iterations: int = 0

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def accepted(self):
        return [r for r in self.records if r.accepted]

    @property
    def iterations(self) -> int:
        return self.n_iterations


def test_equation(tree: Expression, data: Dataset) -> float:
    """Mean squared error of ``tree`` on ``data``; inf if any row is non-finite."""
    with np.errstate(all="ignore"):
        pred = evaluate(tree, data)
        if not np.all(np.isfinite(pred)):
            return np.inf
        r = pred - data.y
        mse = float(np.mean(r * r))
    return mse if np.isfinite(mse) else np.inf


test_equation.__test__ = False  # not a pytest test despite the name


class ResidualCursor:
    """The residual list of the current tree plus the pop/rebuild protocol."""

    def __init__(self, tree: Expression):
        self.tree = tree
        self.pending = build_residual_list(tree)
        self.last_updated = None

    def __len__(self):
        return len(self.pending)

    def update(self, tree: Expression, node: int):
        """Register an accepted replacement at ``node``."""
        self.tree = tree
        self.last_updated = node
        self.pending = prune_after_update(build_residual_list(tree), tree, node)

    def next(self):
        if not self.pending:
            return None
        return self.pending.pop(0)


def get_next_residual_node(state) -> int | None:
    """Pop the next node id from a :class:`ResidualCursor` (or ``None``).

    ``state`` may also be a ``(tree, residual_list, last_updated)`` tuple; a
    non-``None`` ``last_updated`` rebuilds and prunes the list for ``tree``
    first.  The tuple's list is consumed in place.
    """
    if isinstance(state, ResidualCursor):
        return state.next()
    tree, residual_list, last_updated = state
    if last_updated is not None:
        residual_list[:] = prune_after_update(build_residual_list(tree), tree, last_updated)
    if not residual_list:
        return None
    return residual_list.pop(0)


def red_refine(model: EdsModel, tree: Expression, train: Dataset, val: Dataset,
               config: RedConfig | None = None, error_val: float | None = None):
    """Refine ``tree`` with residual-driven subtree replacement.

    Returns ``(tree, trace)``.  The returned tree's validation MSE is never
    above the (recomputed if stale) ``error_val``.
    """
    config = config or RedConfig()
    actual = test_equation(tree, val)
    if error_val is None or not (
        abs(error_val - actual) <= STALE_TOLERANCE or error_val == actual
    ):
        if error_val is not None:
            log.debug("stale error_val %r replaced by %r", error_val, actual)
        error_val = actual
    trace = RedTrace(initial_val_mse=error_val, final_val_mse=error_val)
    if not tree.has_operator:
        trace.no_operator = True
        return tree, trace

    cursor = ResidualCursor(tree)
    i = 0
    while error_val > config.T and i < config.i_max and len(cursor) > 0:
        i += 1
        node = cursor.next()
        candidate = None
        err = None
        val_mse = np.inf
        try:
            res = compute_residual(tree, node, train)
            sub = fit(model, train, res)
            candidate = replace_subtree(tree, node, sub)
            val_mse = test_equation(candidate, val)
        except (RedError, ArithmeticError, ValueError) as exc:
            err = f"{type(exc).__name__}: {exc}"
            log.debug("node %d skipped: %s", node, err)
        accepted = candidate is not None and val_mse < error_val
        if accepted:
            tree = candidate
            error_val = val_mse
            cursor.update(tree, node)
        if config.record_trace:
            trace.records.append(RedRecord(
                iteration=i,
                node=node,
                candidate=candidate,
                val_mse=val_mse,
                accepted=accepted,
                train_mse=test_equation(tree, train),
                operators=count_operators(tree),
                tree=tree,
                error=err,
            ))
    trace.final_val_mse = error_val
    trace.n_iterations = i
    return tree, trace
