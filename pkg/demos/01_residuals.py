"""
Residual targets inside an expression tree
==========================================

A residual answers the question: *what would this subexpression have to
output, row by row, for the whole equation to hit y exactly?*  It is found
by walking from the root down to the node and inverting every operator on
the way.
"""

import numpy as np

from redeq.data import Dataset
from redeq.expr import evaluate, parse_expression
from redeq.residual import build_residual_list, compute_residual

tree = parse_expression("sin(x0)*x0 + ln(x1^2)")
print("equation:", tree)

# Node ids are assigned breadth-first.  Id 0 is the synthetic Y root.
for nid in tree.node_ids():
    print(f"  {nid:2d}  {tree.kind(nid).name:<12} parent={tree.parent(nid)}")

# Nodes eligible for refinement: everything below Y's child, except what
# sits under a sine (its inverse is not a function).
print("residual list:", build_residual_list(tree))

# %%
# Residual of the logarithm node on a hand-made row: x0 = 0, x1 = e, y = 2.
# The product term vanishes, so the logarithm alone has to produce 2.
row = Dataset(np.repeat([[0.0, np.e]], 12, axis=0), np.full(12, 2.0))
print("residual of ln(...):", compute_residual(tree, 3, row).values[0])

# %%
# The defining property: plugging the residual in reproduces y.
rng = np.random.default_rng(0)
X = rng.uniform(0.5, 2.0, size=(50, 2))
data = Dataset(X, np.cos(X[:, 0]) + X[:, 1])
for node in build_residual_list(tree):
    res = compute_residual(tree, node, data)
    out = evaluate(tree, data, overrides={node: res.values})
    err = np.max(np.abs(out - data.y)[res.valid_mask])
    print(f"node {node}: {res.n_valid:2d} valid rows, max |f - y| = {err:.1e}")
