"""Levenberg-Marquardt refitting of the numeric constants in an expression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..expr import Expression, evaluate

__all__ = ["RefitInfo", "refit_constants"]

LAMBDA_START = 1e-3
LAMBDA_UP = 10.0
LAMBDA_DOWN = 0.1
LAMBDA_MAX = 1e16
MAX_ITER = 100
REL_TOL = 1e-10


@dataclass(frozen=True)
class RefitInfo:
    """Outcome flags of :func:`refit_constants`.

    ``status`` is one of ``"ok"``, ``"no_constants"``, ``"singular"``,
    ``"too_few_rows"``.
    """

    status: str
    mse_before: float
    mse_after: float
    iterations: int = 0


def _mse(expr, X, t):
    with np.errstate(all="ignore"):
        r = evaluate(expr, X) - t
        m = float(np.mean(r * r))
    return m if np.isfinite(m) else np.inf


def refit_constants(expr: Expression, data, target=None, full_output=False):
    """Damped least-squares refit of every constant in ``expr``.

    The current constants are the starting point and the Jacobian is taken
    by forward differences.  Only rows where the target is finite and the
    starting expression evaluates finitely take part; on those rows the
    result never has a larger MSE than the input.

    Returns the refitted expression, or ``(expression, RefitInfo)`` when
    ``full_output`` is set.
    """
    X = np.asarray(getattr(data, "X", data), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    t = np.asarray(data.y if target is None else target, dtype=float)
    ids = expr.constants()
    theta0 = np.array([expr.node(i).value for i in ids], dtype=float)

    def done(e, status, before, after, it=0):
        info = RefitInfo(status, before, after, it)
        return (e, info) if full_output else e

    with np.errstate(all="ignore"):
        start = evaluate(expr, X)
    rows = np.isfinite(t) & np.isfinite(start)
    X, t = X[rows], t[rows]
    if len(t) == 0:
        return done(expr, "too_few_rows", np.inf, np.inf)
    before = float(np.mean((start[rows] - t) ** 2))
    if not ids:
        return done(expr, "no_constants", before, before)
    if len(t) < len(ids) + 1:
        return done(expr, "too_few_rows", before, before)

    def residuals(theta):
        with np.errstate(all="ignore"):
            return evaluate(expr.with_constants(theta), X) - t

    def jacobian(theta, r0):
        J = np.empty((len(t), len(theta)))
        for k in range(len(theta)):
            h = np.sqrt(np.finfo(float).eps) * max(abs(theta[k]), 1.0)
            step = theta.copy()
            step[k] += h
            J[:, k] = (residuals(step) - r0) / h
        return J

    theta = theta0.copy()
    r = residuals(theta)
    cost = float(np.mean(r * r))
    lam = LAMBDA_START
    it = 0
    singular = False
    while it < MAX_ITER and cost > 0:
        it += 1
        J = jacobian(theta, r)
        if not np.all(np.isfinite(J)):
            singular = True
            break
        JtJ = J.T @ J
        g = J.T @ r
        improved = False
        while lam <= LAMBDA_MAX:
            A = JtJ + lam * np.diag(np.maximum(np.diag(JtJ), 1e-12))
            try:
                delta = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                lam *= LAMBDA_UP
                continue
            trial = theta + delta
            r_trial = residuals(trial)
            with np.errstate(over="ignore", invalid="ignore"):
                c_trial = float(np.mean(r_trial * r_trial))
            if np.isfinite(c_trial) and c_trial < cost:
                rel = (cost - c_trial) / cost
                theta, r, cost = trial, r_trial, c_trial
                lam = max(lam * LAMBDA_DOWN, 1e-15)
                improved = True
                break
            lam *= LAMBDA_UP
        if not improved or rel < REL_TOL:
            break

    if singular and cost >= before:
        return done(expr, "singular", before, before, it)
    if not cost <= before:
        return done(expr, "ok", before, before, it)
    return done(expr.with_constants(theta), "ok", before, cost, it)
