"""Post-processing methods compared against RED, and win/draw/loss statistics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .eds.base import EdsModel, fit
from .eds.gp import GpConfig, GpModel
from .eds.refit import refit_constants
from .errors import CannotReplaceRoot, EmptyComparison, RedError
from .expr import Expression, count_operators, replace_subtree, var, const
from .red import RedConfig, red_refine, test_equation

__all__ = [
    "Classic",
    "Red",
    "Permute",
    "HyperGrid",
    "Refit",
    "SeededGp",
    "EquationResult",
    "RunResult",
    "run_method",
    "seed_for_node",
    "compare_counts",
    "win_ratio",
    "draw_ratio",
    "default_grid",
    "DRAW_TOLERANCE",
]

DRAW_TOLERANCE = 1e-12


def default_grid(base: GpConfig | None = None) -> tuple:
    """The default GP configuration plus two alternatives."""
    base = base or GpConfig()
    return (
        base,
        replace(base, population_size=2000, mutation_prob=0.35, crossover_prob=0.6,
                max_depth=10),
        replace(base, population_size=500, mutation_prob=0.1, max_depth=6,
                parsimony_coefficient=0.01),
    )


@dataclass(frozen=True)
class Classic:
    name = "Classic"


@dataclass(frozen=True)
class Red:
    config: RedConfig = RedConfig()
    name = "RED"


@dataclass(frozen=True)
class Permute:
    # None: use the paired RED run's iteration count, else RedConfig().i_max
    n: int | None = None
    name = "Permute"

    def __post_init__(self):
        if self.n is not None and self.n < 1:
            raise ValueError("Permute needs n >= 1")


@dataclass(frozen=True)
class HyperGrid:
    configs: tuple = field(default_factory=default_grid)
    name = "HyperGrid"

    def __post_init__(self):
        if len(self.configs) < 3:
            raise ValueError("HyperGrid needs the default plus at least two other configs")


@dataclass(frozen=True)
class Refit:
    name = "Refit"


@dataclass(frozen=True)
class SeededGp:
    gp: GpConfig = GpConfig()
    name = "SeededGP"


METHODS = {m.name: m for m in (Classic, Red, Permute, HyperGrid, Refit, SeededGp)}


@dataclass(frozen=True)
class EquationResult:
    expression: Expression
    train_mse: float
    val_mse: float
    test_mse: float
    operator_count: int


@dataclass
class RunResult:
    method: object
    dataset_id: str
    seed: int
    equations: list = field(default_factory=list)
    runtime_seconds: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return bool(self.equations)

    @property
    def best(self) -> int | None:
        """Index of the equation with the lowest test MSE (first on ties)."""
        if not self.equations:
            return None
        mses = [_key(e.test_mse) for e in self.equations]
        return int(np.argmin(mses))

    @property
    def best_equation(self) -> EquationResult | None:
        i = self.best
        return None if i is None else self.equations[i]

    @property
    def test_mses(self) -> list:
        return [e.test_mse for e in self.equations]


def _key(x):
    return np.inf if x is None or not np.isfinite(x) else x


def _derive(*parts) -> int:
    return int(np.random.SeedSequence([abs(int(p)) for p in parts]).generate_state(1)[0])


def seed_for_node(initial: Expression, node: int, seed: int = 0, n_vars=None) -> Expression:
    """``initial`` with the subtree at ``node`` cut down to a random leaf.

    The leaf is drawn uniformly from the variables and the constant 1.
    """
    if initial._check(node) == 0:
        raise CannotReplaceRoot("the Y node cannot be pruned")
    if n_vars is None:
        used = initial.variables()
        n_vars = max(used) + 1 if used else 1
    rng = np.random.default_rng([abs(int(seed)), int(node)])
    k = int(rng.integers(n_vars + 1))
    leaf = const(1.0) if k == n_vars else var(k)
    return replace_subtree(initial, node, leaf)


def _record(expr, train, val, test) -> EquationResult:
    return EquationResult(
        expression=expr,
        train_mse=test_equation(expr, train),
        val_mse=test_equation(expr, val),
        test_mse=test_equation(expr, test),
        operator_count=count_operators(expr),
    )


def run_method(method, model: EdsModel, initial: Expression | None, splits,
               dataset_id: str = "", seed: int = 0, red_iterations: int | None = None) -> RunResult:
    """Run one post-processing method on ``(train, val, test)`` splits.

    Every method except RED trains on train and validation merged.  Failures
    of single fits are collected in ``result.info["errors"]``.
    """
    train, val, test = splits
    merged = Dataset.concat([train, val], role="train")
    result = RunResult(method, dataset_id, seed)
    errors = result.info.setdefault("errors", [])
    start = time.perf_counter()

    def attempt(fn, *args, fit_data=merged):
        try:
            expr = fn(*args)
        except (RedError, ArithmeticError, ValueError) as exc:
            errors.append(f"{type(exc).__name__}: {exc}")
            return None
        result.equations.append(_record(expr, fit_data, val, test))
        return expr

    needs_initial = isinstance(method, (Red, Refit, SeededGp))
    if needs_initial and initial is None:
        errors.append(f"{method.name} needs an initial equation")
    elif isinstance(method, Classic):
        attempt(fit, model, merged)
    elif isinstance(method, Red):
        tree, trace = red_refine(model, initial, train, val, method.config,
                                 test_equation(initial, val))
        result.info["iterations"] = trace.iterations
        result.info["trace"] = trace
        accepted = [r.tree for r in trace.records if r.accepted] or [tree]
        for t in accepted:
            result.equations.append(_record(t, train, val, test))
    elif isinstance(method, Permute):
        n = method.n or red_iterations or RedConfig().i_max
        n = max(1, int(n))
        result.info["n"] = n
        for k in range(n):
            rng = np.random.default_rng(_derive(seed, k, 17))
            shuffled = merged.take(rng.permutation(merged.n_rows))
            attempt(fit, model.reseeded(_derive(seed, k)), shuffled)
    elif isinstance(method, HyperGrid):
        if not hasattr(model, "with_config"):
            errors.append("HyperGrid needs a configurable model")
        else:
            for cfg in method.configs:
                attempt(fit, model.with_config(cfg.with_seed(seed)), merged)
    elif isinstance(method, Refit):
        attempt(refit_constants, initial, merged)
    elif isinstance(method, SeededGp):
        for nid in list(initial.node_ids())[1:]:
            s = seed_for_node(initial, nid, seed, merged.n_vars)
            gp = GpModel(method.gp.with_seed(_derive(seed, nid)), seeds=[s])
            attempt(fit, gp, merged)
        result.info["runs"] = len(initial) - 1
    else:
        raise TypeError(f"unknown method {method!r}")
    result.runtime_seconds = time.perf_counter() - start
    return result


# ---------------------------------------------------------------------------
# win / draw / loss
# ---------------------------------------------------------------------------

def _mses(x):
    vals = x.test_mses if isinstance(x, RunResult) else list(x)
    return np.array([_key(v) for v in vals], dtype=float)


def compare_counts(a, b):
    """``(wins, draws, losses)`` of every equation of ``a`` against every one of ``b``."""
    ma, mb = _mses(a), _mses(b)
    if ma.size == 0 or mb.size == 0:
        raise EmptyComparison("both sides need at least one equation")
    A = ma[:, None]
    B = mb[None, :]
    with np.errstate(invalid="ignore"):
        draw = (A == B) | (np.abs(A - B) <= DRAW_TOLERANCE)
    win = (A < B) & ~draw
    loss = (A > B) & ~draw
    return int(win.sum()), int(draw.sum()), int(loss.sum())


def win_ratio(a, b) -> float:
    w, d, l = compare_counts(a, b)
    return w / (w + d + l)


def draw_ratio(a, b) -> float:
    w, d, l = compare_counts(a, b)
    return d / (w + d + l)
