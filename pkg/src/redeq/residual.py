"""Residual targets for subexpressions via caller-dependent operator inversion.

When a node asks its parent for a value, the parent answers with the
quantity its calling child would have to produce for the parent to output
what *its* parent asked of it.  Starting from the ``Y`` node, which answers
with the target column, this walks down the path to the chosen node and
yields ``y_res``: the per-row values that make the whole equation reproduce
``y`` when substituted for that node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllRowsInvalid, NodeNotFound, NotApplicable, NotInvertible
from .expr import Expression, NodeKind, _design_matrix, apply_operator, check_variables, evaluate_node

__all__ = [
    "ResidualTarget",
    "NON_INVERTIBLE",
    "MIN_VALID_ROWS",
    "invert_step",
    "compute_residual",
    "build_residual_list",
    "prune_after_update",
    "is_eligible",
]

NON_INVERTIBLE = frozenset({NodeKind.SINE, NodeKind.COSINE})
MIN_VALID_ROWS = 10
# relative tolerance for accepting one inversion step as exact
ROUND_TRIP_RTOL = 1e-10


@dataclass(frozen=True)
class ResidualTarget:
    values: np.ndarray
    valid_mask: np.ndarray
    source_node: int

    @property
    def n_valid(self) -> int:
        return int(self.valid_mask.sum())

    def __len__(self):
        return len(self.values)


def _odd_integer(a):
    r = np.round(a)
    return (a == r) & (np.mod(r, 2) == 1)


def invert_step(kind, caller, parent_values, sibling_values=None):
    """Value the ``caller``-th child of a ``kind`` node must take.

    ``parent_values`` is what the node's own parent asks it to output (for
    the ``Y`` node it is the target column itself).  ``sibling_values`` is
    the forward value of the other child of a binary node.  Rows without a
    real solution come back as nan.

    For ``POWER``, child 0 is the exponent and child 1 the base.
    """
    kind = NodeKind(kind)
    if kind in NON_INVERTIBLE:
        raise NotInvertible(f"{kind.name} has no inverse")
    if kind in (NodeKind.CONSTANT, NodeKind.VARIABLE):
        raise NotApplicable(f"{kind.name} nodes have no children")
    if caller not in range(kind.arity):
        raise ValueError(f"{kind.name} has no child {caller}")
    p = np.asarray(parent_values, dtype=float)
    if kind is NodeKind.Y:
        return p.copy()
    if kind.arity == 2:
        if sibling_values is None:
            raise ValueError(f"{kind.name} inversion needs the sibling's values")
        s = np.broadcast_to(np.asarray(sibling_values, dtype=float), p.shape)

    with np.errstate(all="ignore"):
        if kind is NodeKind.PLUS:
            out = p - s
        elif kind is NodeKind.MINUS:
            out = p + s if caller == 0 else s - p
        elif kind is NodeKind.PRODUCT:
            out = np.where(s != 0, p / s, np.nan)
        elif kind is NodeKind.DIVISION:
            # child 0 is the numerator and the sibling the denominator
            if caller == 0:
                out = np.where(s != 0, p * s, np.nan)
            else:
                out = np.where(s != 0, s / p, np.nan)
        elif kind is NodeKind.POWER:
            if caller == 0:
                base = s
                ok = (p > 0) & (base > 0) & (base != 1)
                out = np.where(ok, np.log(p) / np.log(base), np.nan)
            else:
                exponent = s
                odd = _odd_integer(exponent)
                root = np.power(np.abs(p), 1.0 / exponent)
                out = np.where(
                    exponent == 0,
                    np.nan,
                    np.where(odd, np.sign(p) * root, np.power(p, 1.0 / exponent)),
                )
        elif kind is NodeKind.LOGARITHM:
            out = np.exp(p)
        elif kind is NodeKind.EXPONENTIAL:
            out = np.where(p > 0, np.log(p), np.nan)
        elif kind is NodeKind.SQUARE_ROOT:
            out = np.where(p >= 0, p * p, np.nan)
        else:  # pragma: no cover
            raise NotApplicable(kind.name)
    out = np.asarray(out, dtype=float)
    return np.where(np.isfinite(out), out, np.nan)


def _round_trips(kind, pos, child_values, parent_values, sibling):
    """Rows where re-applying the operator to the inverse gives back the parent value.

    Catches inversions that are finite but numerically meaningless, such as
    ``p ** (1 / c)`` underflowing to zero for a tiny exponent ``c``.
    """
    if sibling is None:
        args = (child_values,)
    else:
        args = (child_values, sibling) if pos == 0 else (sibling, child_values)
    back = apply_operator(kind, args)
    scale = np.maximum(np.abs(parent_values), np.finfo(float).tiny)
    with np.errstate(invalid="ignore"):
        return np.abs(back - parent_values) <= ROUND_TRIP_RTOL * scale


def is_eligible(tree: Expression, node: int) -> bool:
    """True if a residual can be computed for ``node`` (ignoring Y's child rule)."""
    if node == 0:
        return False
    return not any(tree.kind(a) in NON_INVERTIBLE for a in tree.ancestors(node))


def compute_residual(tree: Expression, node: int, data, counter=None,
                     min_valid=MIN_VALID_ROWS) -> ResidualTarget:
    """Residual target for ``node`` on ``data`` (a Dataset with ``y``).

    Each sibling subtree on the path to the root is evaluated once, so the
    cost stays within one forward pass over the tree.
    """
    nid = tree._check(node)
    if nid == 0:
        raise NodeNotFound("the Y node has no residual")
    path = [nid] + tree.ancestors(nid)  # node ... Y
    for anc in path[1:]:
        if tree.kind(anc) in NON_INVERTIBLE:
            raise NotInvertible(
                f"node {nid} sits below {tree.kind(anc).name} (node {anc})"
            )
    X = _design_matrix(data)
    check_variables(tree, X.shape[1])
    y = np.asarray(data.y, dtype=float)

    values = y.copy()
    valid = np.isfinite(values)
    with np.errstate(all="ignore"):
        for parent, child in zip(reversed(path[1:]), reversed(path[:-1])):
            kind = tree.kind(parent)
            if kind is NodeKind.Y:
                values = invert_step(kind, 0, y)
                continue
            kids = tree.children(parent)
            pos = kids.index(child)
            sibling = None
            if len(kids) == 2:
                sibling = evaluate_node(tree, kids[1 - pos], X, counter=counter)
                valid &= np.isfinite(sibling)
            target = values
            values = invert_step(kind, pos, target, sibling)
            valid &= np.isfinite(values)
            valid &= _round_trips(kind, pos, values, target, sibling)
    values = np.where(valid, values, np.nan)
    n_valid = int(valid.sum())
    if n_valid < min_valid:
        raise AllRowsInvalid(
            f"only {n_valid} of {len(values)} rows have a residual for node {nid}"
        )
    return ResidualTarget(values, valid, nid)


def build_residual_list(tree: Expression) -> list[int]:
    """BFS-ordered node ids eligible for residual refinement.

    Leaves the Y node and its direct child out, as well as everything below
    a non-invertible operator.
    """
    out = []
    blocked = set()
    for nid in tree.node_ids():
        parent = tree.parent(nid)
        if parent is not None and (
            parent in blocked or tree.kind(parent) in NON_INVERTIBLE
        ):
            blocked.add(nid)
            continue
        if nid <= 1:
            continue
        out.append(nid)
    return out


def prune_after_update(residual_list, tree_new: Expression, last_updated: int) -> list[int]:
    """Drop ``last_updated`` and all of its ancestors from the list."""
    nid = tree_new._check(last_updated)
    drop = {nid, *tree_new.ancestors(nid)}
    return [n for n in residual_list if n not in drop]
