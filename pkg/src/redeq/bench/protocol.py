"""Dataset generation, relative noise and train/validation/test splitting."""

from __future__ import annotations

import math

import numpy as np

from ..data import Dataset
from ..errors import TooFewRows, UnsatisfiableRanges
from ..expr import evaluate
from .corpus import BenchmarkEquation

PROTOCOL_SPLIT = (0.6, 0.2, 0.2)
MAX_DRAW_FACTOR = 100


def sample_dataset(eq: BenchmarkEquation, rows: int, rng_seed: int) -> Dataset:
    """Draw ``rows`` uniform samples of the variables and evaluate ``eq``.

    Rows whose ``y`` is not finite are redrawn.  Gives up with
    :class:`UnsatisfiableRanges` after ``100 * rows`` draws in total.
    """
    if rows < 1:
        raise ValueError("rows must be positive")
    rng = np.random.default_rng(rng_seed)
    expr = eq.expression
    lo = np.array([r[0] for r in eq.variable_ranges])
    hi = np.array([r[1] for r in eq.variable_ranges])
    kept_X, kept_y = [], []
    have = drawn = 0
    limit = MAX_DRAW_FACTOR * rows
    while have < rows:
        batch = min(rows - have, limit - drawn)
        if batch <= 0:
            raise UnsatisfiableRanges(
                f"{eq.id}: only {have} of {rows} rows finite after {drawn} draws"
            )
        X = rng.uniform(lo, hi, size=(batch, len(lo)))
        drawn += batch
        y = evaluate(expr, X)
        ok = np.isfinite(y)
        kept_X.append(X[ok])
        kept_y.append(y[ok])
        have += int(ok.sum())
    return Dataset(np.vstack(kept_X)[:rows], np.concatenate(kept_y)[:rows], "full")


def add_noise(data: Dataset, rel_noise: float, rng_seed: int) -> Dataset:
    """Multiply every cell, ``y`` included, by ``1 + U(-rel_noise, rel_noise)``."""
    if rel_noise < 0:
        raise ValueError("rel_noise must be non-negative")
    if rel_noise == 0:
        return data
    rng = np.random.default_rng(rng_seed)
    table = data.table()
    factor = 1.0 + rng.uniform(-rel_noise, rel_noise, size=table.shape)
    noisy = table * factor
    return Dataset(noisy[:, :-1], noisy[:, -1], data.role, data.names)


def split_sizes(m: int, fractions=PROTOCOL_SPLIT):
    f_train, f_val, f_test = fractions
    if abs(f_train + f_val + f_test - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError("split fractions must be non-negative and sum to 1")
    n_val = math.floor(m * f_val + 1e-9)
    n_test = math.floor(m * f_test + 1e-9)
    n_train = m - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise TooFewRows(f"{m} rows cannot fill a {fractions} split")
    return n_train, n_val, n_test


def split_dataset(data: Dataset, fractions=PROTOCOL_SPLIT, rng_seed: int = 0):
    """Random disjoint partition; rounding leftovers go to the training part."""
    n_train, n_val, _ = split_sizes(data.n_rows, fractions)
    perm = np.random.default_rng(rng_seed).permutation(data.n_rows)
    return (
        data.take(perm[:n_train], "train"),
        data.take(perm[n_train:n_train + n_val], "validation"),
        data.take(perm[n_train + n_val:], "test"),
    )
