"""
Plugging in an external equation discovery system
=================================================

Any program that reads one JSON request per line and answers with a JSON
line ``{"ok": true, "equation": "..."}`` can stand in for the built-in GP.
Here the "system" is a 15-line least-squares fitter over a few basis
functions, written to a temporary file and launched as a child process.
"""

import sys
import tempfile
import textwrap
from pathlib import Path

import numpy as np

from redeq.data import Dataset
from redeq.bench import split_dataset
from redeq.eds import ExternalModel
from redeq.expr import parse_expression
from redeq.red import red_refine, test_equation

CHILD = textwrap.dedent('''
    import json, sys
    import numpy as np
    BASIS = ["x0", "x1", "sin(x0)", "sin(x1)", "x0 * x1"]
    for line in sys.stdin:
        req = json.loads(line)
        X, t = np.array(req["rows"]), np.array(req["target"])
        cols = [X[:, 0], X[:, 1], np.sin(X[:, 0]), np.sin(X[:, 1]), X[:, 0] * X[:, 1]]
        A = np.column_stack(cols + [np.ones(len(t))])
        coef = np.linalg.lstsq(A, t, rcond=None)[0]
        terms = [f"{float(c)!r} * {b}" for c, b in zip(coef, BASIS) if abs(c) > 1e-8]
        eq = " + ".join(terms + [repr(float(coef[-1]))])
        print(json.dumps({"ok": True, "equation": eq}), flush=True)
''')

rng = np.random.default_rng(0)
X = rng.uniform(-2, 2, size=(300, 2))
data = Dataset(X, np.exp(X[:, 0]) + 3 * np.sin(X[:, 1]))
train, val, test = split_dataset(data, rng_seed=0)

with tempfile.TemporaryDirectory() as tmp:
    script = Path(tmp) / "lstsq_child.py"
    script.write_text(CHILD)
    with ExternalModel([sys.executable, str(script)], timeout=30) as model:
        initial = parse_expression("exp(x0) + x1")
        tree, trace = red_refine(model, initial, train, val)

for r in trace:
    print(f"iteration {r.iteration}: node {r.node}", "accepted" if r.accepted else "rejected", r.candidate)
print("initial:", initial, "test MSE", test_equation(initial, test))
print("refined:", tree, "test MSE", test_equation(tree, test))
