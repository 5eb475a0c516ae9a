"""Residual-driven refinement of symbolic equations.

The package is organised bottom-up:

* :mod:`redeq.expr` -- expression trees, parsing, printing, evaluation
* :mod:`redeq.residual` -- per-node residual targets by operator inversion
* :mod:`redeq.eds` -- equation discovery systems (built-in GP, external processes)
* :mod:`redeq.red` -- the refinement loop
* :mod:`redeq.postproc` -- competing post-processing methods and win ratios
* :mod:`redeq.bench` -- benchmark corpus, protocol and reports
"""

from .data import Dataset, parse_csv, read_csv, write_csv
from .eds import EdsModel, ExternalModel, GpConfig, GpModel, refit_constants
from .errors import *  # noqa: F401,F403
from .expr import (
    Expression,
    NodeKind,
    count_operators,
    evaluate,
    parse_expression,
    print_expression,
    replace_subtree,
)
from .red import RedConfig, RedTrace, red_refine, test_equation
from .residual import ResidualTarget, build_residual_list, compute_residual, invert_step

__version__ = "0.1.0"
