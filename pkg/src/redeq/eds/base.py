"""The equation discovery model interface and the masked ``fit`` entry point."""

from __future__ import annotations

import abc

import numpy as np

from ..data import Dataset
from ..errors import AllRowsInvalid
from ..expr import Expression
from ..residual import MIN_VALID_ROWS, ResidualTarget


class EdsModel(abc.ABC):
    """Anything that maps a dataset and a target column to an equation.

    Implementations only ever see finite targets; masking of residual rows
    happens in :func:`fit`.  Failures are reported by raising a subclass of
    :class:`~redeq.errors.FitFailed`.
    """

    @abc.abstractmethod
    def fit(self, data: Dataset, target: np.ndarray) -> Expression:
        ...

    def reseeded(self, seed: int) -> "EdsModel":
        """A copy drawing from a different random stream (identity by default)."""
        return self

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def fit(model: EdsModel, data: Dataset, target=None) -> Expression:
    """Fit ``model`` on the rows of ``data`` where ``target`` is valid.

    ``target`` may be a :class:`ResidualTarget`, a plain vector, or ``None``
    to fit the dataset's own ``y`` column.  A returned expression without
    any operator (``not expr.has_operator``) is a usable result, but RED
    cannot refine it further.
    """
    if target is None:
        values = np.asarray(data.y, dtype=float)
        mask = np.ones(len(values), bool)
    elif isinstance(target, ResidualTarget):
        values = np.asarray(target.values, dtype=float)
        mask = np.asarray(target.valid_mask, bool) & np.isfinite(values)
    else:
        values = np.asarray(target, dtype=float)
        mask = np.isfinite(values)
    if len(values) != data.n_rows:
        raise ValueError(f"target has {len(values)} rows, data has {data.n_rows}")
    if mask.sum() < MIN_VALID_ROWS:
        raise AllRowsInvalid(f"only {int(mask.sum())} valid target rows")
    rows = np.flatnonzero(mask)
    sub = data.take(rows).with_y(values[rows])
    return model.fit(sub, sub.y)
