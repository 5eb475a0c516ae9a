"""
Refining an incomplete equation
===============================

The target is y = x1^6 + sin(x1).  An equation discovery system that only
found the dominant polynomial term leaves a residual that is exactly the
missing sine -- a much easier problem to solve on its own.
"""

import numpy as np

from redeq.bench import load_corpus, sample_dataset, split_dataset
from redeq.eds import GpConfig, GpModel, fit
from redeq.red import RedConfig, red_refine, test_equation
from redeq.residual import compute_residual
from redeq.expr import parse_expression

eq = next(e for e in load_corpus() if e.id == "sextic")
train, val, test = split_dataset(sample_dataset(eq, 300, 0), rng_seed=0)

# %%
# Suppose a first pass produced "x1^6 + x1": right shape, wrong small term.
initial = parse_expression("x1^6 + x1")
print("initial:", initial, " val MSE", test_equation(initial, val))

# The residual for the lone "x1" leaf (node 3) is y - x1^6 = sin(x1).
res = compute_residual(initial, 3, train)
print("residual ~ sin(x1):", np.allclose(res.values, np.sin(train.X[:, 1])))

# %%
# Let the GP engine refine the equation node by node.
gp = GpModel(GpConfig(population_size=500, generations=20, rng_seed=1))
refined, trace = red_refine(gp, initial, train, val, RedConfig(i_max=10))
for r in trace:
    state = "accepted" if r.accepted else "rejected"
    print(f"  iteration {r.iteration}: node {r.node} {state}, val MSE {r.val_mse:.3g}")
print("refined:", refined)
print("test MSE:", test_equation(refined, test))

# %%
# Starting from the bare "x1^6" is a different story: the only nodes under
# the power are its base and exponent, and no real base raised to the 6th
# power can produce the negative y values near x1 = -0.5.
bare = parse_expression("x1^6")
out, trace = red_refine(gp, bare, train, val)
print("from x1^6:", out, f"({trace.iterations} iterations, val MSE {trace.final_val_mse:.3g})")
