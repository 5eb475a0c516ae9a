"""A small tree-based genetic programming engine for symbolic regression.

Programs are kept as prefix tuples while evolving: operator tokens are
:class:`NodeKind` members, variable tokens are ``int`` column indices and
constant tokens are ``float``.  Children of a power appear exponent first,
matching :class:`~redeq.expr.Node`.  Fitness is the MSE over the rows where
a program is finite plus a parsimony penalty per token; programs that are
non-finite on more than half of the rows get infinite fitness.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..data import Dataset
from ..errors import FitFailed
from ..expr import OPERATORS, Expression, Node, NodeKind, apply_operator
from .base import EdsModel
from .refit import refit_constants

__all__ = ["GpConfig", "GpModel", "seed_population", "DEFAULT_OPERATORS"]

DEFAULT_OPERATORS = (
    NodeKind.PLUS,
    NodeKind.MINUS,
    NodeKind.PRODUCT,
    NodeKind.DIVISION,
    NodeKind.SINE,
    NodeKind.COSINE,
    NodeKind.EXPONENTIAL,
    NodeKind.LOGARITHM,
    NodeKind.SQUARE_ROOT,
)

CONST_RANGE = (-5.0, 5.0)
CONST_MUTATION_SHARE = 0.2
CONST_SIGMA = 1.0
INIT_DEPTH = (2, 6)


@dataclass(frozen=True)
class GpConfig:
    population_size: int = 1000
    generations: int = 30
    tournament_size: int = 7
    crossover_prob: float = 0.7
    mutation_prob: float = 0.2
    max_depth: int = 8
    parsimony_coefficient: float = 0.001
    operator_set: tuple = DEFAULT_OPERATORS
    rng_seed: int = 0
    # stop once the best raw MSE drops below this
    stopping_mse: float = 1e-12
    refit: bool = True

    def __post_init__(self):
        ops = tuple(NodeKind(k) for k in self.operator_set)
        object.__setattr__(self, "operator_set", ops)
        if not ops:
            raise ValueError("operator_set must not be empty")
        for k in ops:
            if k not in OPERATORS:
                raise ValueError(f"{k.name} is not an operator")
        for name in ("population_size", "generations", "tournament_size", "max_depth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("crossover_prob", "mutation_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.crossover_prob + self.mutation_prob > 1.0 + 1e-12:
            raise ValueError("crossover_prob + mutation_prob must not exceed 1")
        if self.population_size < 2 * self.tournament_size:
            raise ValueError("population_size must be at least 2 * tournament_size")
        if self.parsimony_coefficient < 0:
            raise ValueError("parsimony_coefficient must be non-negative")

    def with_seed(self, seed: int) -> "GpConfig":
        return replace(self, rng_seed=int(seed))


# ---------------------------------------------------------------------------
# prefix-program helpers
# ---------------------------------------------------------------------------

def _is_op(tok):
    return isinstance(tok, NodeKind)


def subtree_end(program, start):
    """Index one past the subtree that begins at ``start``."""
    need = 1
    end = start
    while need:
        tok = program[end]
        need += tok.arity - 1 if _is_op(tok) else -1
        end += 1
    return end


def program_depth(program):
    stack = [0]
    depth = 0
    for tok in program:
        d = stack.pop()
        depth = max(depth, d)
        if _is_op(tok):
            stack.extend([d + 1] * tok.arity)
    return depth


def node_to_program(node: Node):
    out = []

    def walk(n):
        if n.kind is NodeKind.CONSTANT:
            out.append(float(n.value))
        elif n.kind is NodeKind.VARIABLE:
            out.append(int(n.value))
        else:
            out.append(n.kind)
            for c in n.children:
                walk(c)

    walk(node.body if isinstance(node, Expression) else node)
    return tuple(out)


def program_to_node(program) -> Node:
    pos = 0

    def build():
        nonlocal pos
        tok = program[pos]
        pos += 1
        if _is_op(tok):
            kids = tuple(build() for _ in range(tok.arity))
            return Node(tok, kids)
        if isinstance(tok, float):
            return Node(NodeKind.CONSTANT, (), tok)
        return Node(NodeKind.VARIABLE, (), tok)

    return build()


def execute(program, X):
    """Evaluate a prefix program on ``X``; call inside ``np.errstate``."""
    stack = []
    for tok in reversed(program):
        if _is_op(tok):
            if tok.arity == 2:
                a = stack.pop()
                b = stack.pop()
                stack.append(apply_operator(tok, (a, b)))
            else:
                stack.append(apply_operator(tok, (stack.pop(),)))
        elif isinstance(tok, float):
            stack.append(tok)
        else:
            stack.append(X[:, tok])
    out = stack[0]
    if np.ndim(out) == 0:
        out = np.full(X.shape[0], float(out))
    return out


# ---------------------------------------------------------------------------
# random program generation
# ---------------------------------------------------------------------------

class _Builder:
    def __init__(self, config: GpConfig, n_vars: int, rng: np.random.Generator):
        self.ops = config.operator_set
        self.n_vars = n_vars
        self.rng = rng
        self.max_depth = config.max_depth

    def terminal(self):
        if self.rng.random() < self.n_vars / (self.n_vars + 1):
            return int(self.rng.integers(self.n_vars))
        return float(self.rng.uniform(*CONST_RANGE))

    def operator(self):
        return self.ops[self.rng.integers(len(self.ops))]

    def random_program(self, depth, method):
        """Random prefix program of at most ``depth`` ('full' or 'grow')."""
        out = []
        n_ops = len(self.ops)
        n_terms = self.n_vars + 1
        stack = [0]
        while stack:
            d = stack.pop()
            if d < depth and (
                method == "full" or self.rng.random() < n_ops / (n_ops + n_terms)
            ):
                tok = self.operator()
                out.append(tok)
                stack.extend([d + 1] * tok.arity)
            else:
                out.append(self.terminal())
        return tuple(out)

    def ramped(self, count):
        lo, hi = INIT_DEPTH
        hi = max(1, min(hi, self.max_depth))
        lo = min(lo, hi)
        progs = []
        for i in range(count):
            depth = int(self.rng.integers(lo, hi + 1))
            method = "full" if i % 2 == 0 else "grow"
            progs.append(self.random_program(depth, method))
        return progs

    def truncate(self, program):
        """Cut ``program`` at ``max_depth``; cut branches become random leaves."""
        out = []
        stack = [0]
        i = 0
        while stack:
            d = stack.pop()
            tok = program[i]
            if _is_op(tok) and d >= self.max_depth:
                out.append(self.terminal())
                i = subtree_end(program, i)
                continue
            out.append(tok)
            i += 1
            if _is_op(tok):
                stack.extend([d + 1] * tok.arity)
        return tuple(out)


def seed_population(config: GpConfig, seeds, n_vars: int, rng=None):
    """Initial population whose first half is drawn from ``seeds``.

    Seeds are sampled uniformly with replacement and truncated at
    ``max_depth``; the other half comes from ramped half-and-half.  Returns
    a list of :class:`Expression`.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("seed_population needs at least one seed")
    rng = np.random.default_rng(config.rng_seed) if rng is None else rng
    builder = _Builder(config, n_vars, rng)
    progs = _seeded_programs(builder, config.population_size, seeds)
    return [Expression(program_to_node(p)) for p in progs]


def _seeded_programs(builder, size, seeds):
    n_seeded = size // 2
    seed_progs = [node_to_program(s) for s in seeds]
    picks = builder.rng.integers(len(seed_progs), size=n_seeded)
    progs = [builder.truncate(seed_progs[k]) for k in picks]
    progs.extend(builder.ramped(size - n_seeded))
    return progs


# ---------------------------------------------------------------------------
# the engine
# ---------------------------------------------------------------------------

@dataclass
class GpRun:
    """Book-keeping of one evolutionary run."""

    best_program: tuple | None = None
    best_fitness: float = np.inf
    best_mse: float = np.inf
    generations_run: int = 0
    history: list = field(default_factory=list)


class GpModel(EdsModel):
    """Genetic programming equation discovery with optional seeded start."""

    def __init__(self, config: GpConfig | None = None, seeds=None):
        self.config = config or GpConfig()
        self.seeds = list(seeds) if seeds else None
        self.last_run: GpRun | None = None

    def __repr__(self):
        return f"GpModel({self.config!r})"

    def reseeded(self, seed):
        return GpModel(self.config.with_seed(seed), self.seeds)

    def with_config(self, config: GpConfig):
        return GpModel(config, self.seeds)

    def with_seeds(self, seeds):
        return GpModel(self.config, seeds)

    def fit(self, data: Dataset, target=None) -> Expression:
        cfg = self.config
        X = np.asarray(data.X, dtype=float)
        y = np.asarray(data.y if target is None else target, dtype=float)
        ok = np.isfinite(y)
        X, y = X[ok], y[ok]
        if len(y) == 0:
            raise FitFailed("no finite target rows")
        n_vars = X.shape[1]
        ss = np.random.SeedSequence(cfg.rng_seed)
        var_rng, sel_rng = (np.random.default_rng(s) for s in ss.spawn(2))
        builder = _Builder(cfg, n_vars, var_rng)

        if self.seeds:
            population = _seeded_programs(builder, cfg.population_size, self.seeds)
        else:
            population = builder.ramped(cfg.population_size)

        cache = {}
        run = GpRun()

        def score(prog):
            hit = cache.get(prog)
            if hit is None:
                out = execute(prog, X)
                finite = np.isfinite(out)
                frac = finite.mean()
                if frac <= 0.5:
                    mse = np.inf
                else:
                    diff = out[finite] - y[finite]
                    mse = float(np.mean(diff * diff))
                    if not np.isfinite(mse):
                        mse = np.inf
                fitness = mse + cfg.parsimony_coefficient * len(prog)
                hit = (fitness, mse, bool(frac == 1.0))
                cache[prog] = hit
            return hit

        def consider(prog, res):
            fitness, mse, all_finite = res
            if all_finite and fitness < run.best_fitness:
                run.best_program, run.best_fitness, run.best_mse = prog, fitness, mse

        with np.errstate(all="ignore"):
            scores = [score(p) for p in population]
            for p, s in zip(population, scores):
                consider(p, s)
            for gen in range(cfg.generations):
                if run.best_mse <= cfg.stopping_mse:
                    break
                fitness = np.array([s[0] for s in scores])
                population = self._next_generation(population, fitness, builder, sel_rng)
                scores = [score(p) for p in population]
                for p, s in zip(population, scores):
                    consider(p, s)
                run.generations_run = gen + 1
                run.history.append(run.best_fitness)

        self.last_run = run
        if run.best_program is None:
            raise FitFailed("no individual was finite on every fitting row")
        expr = Expression(program_to_node(run.best_program))
        if cfg.refit and expr.constants():
            expr = refit_constants(expr, data.take(np.flatnonzero(ok)), y)
        return expr

    def _next_generation(self, population, fitness, builder, sel_rng):
        cfg = self.config
        rng = builder.rng
        size = len(population)
        elite = int(np.argmin(fitness))
        out = [population[elite]]

        def tournament():
            idx = sel_rng.integers(size, size=cfg.tournament_size)
            return population[idx[np.argmin(fitness[idx])]]

        while len(out) < size:
            parent = tournament()
            r = rng.random()
            if r < cfg.crossover_prob:
                child = _crossover(parent, tournament(), rng)
            elif r < cfg.crossover_prob + cfg.mutation_prob:
                child = _mutate(parent, builder)
            else:
                child = parent
            if program_depth(child) > cfg.max_depth:
                child = parent
            out.append(child)
        return out


def _pick_node(program, rng):
    """Random subtree start, preferring operators 90% of the time."""
    ops = [i for i, t in enumerate(program) if _is_op(t)]
    if ops and rng.random() < 0.9:
        return ops[rng.integers(len(ops))]
    leaves = [i for i, t in enumerate(program) if not _is_op(t)]
    return leaves[rng.integers(len(leaves))]


def _crossover(parent, donor, rng):
    start = _pick_node(parent, rng)
    end = subtree_end(parent, start)
    d_start = _pick_node(donor, rng)
    d_end = subtree_end(donor, d_start)
    return parent[:start] + donor[d_start:d_end] + parent[end:]


def _mutate(parent, builder):
    rng = builder.rng
    const_idx = [i for i, t in enumerate(parent) if isinstance(t, float)]
    if const_idx and rng.random() < CONST_MUTATION_SHARE:
        i = const_idx[rng.integers(len(const_idx))]
        new = parent[i] + float(rng.normal(0.0, CONST_SIGMA))
        return parent[:i] + (new,) + parent[i + 1:]
    r = rng.random()
    if r < 0.5:
        # subtree mutation
        start = _pick_node(parent, rng)
        end = subtree_end(parent, start)
        depth = int(rng.integers(1, INIT_DEPTH[0] + 3))
        return parent[:start] + builder.random_program(depth, "grow") + parent[end:]
    if r < 0.8:
        # point mutation: swap symbols keeping arity
        out = list(parent)
        for i, tok in enumerate(out):
            if rng.random() >= 0.1:
                continue
            if _is_op(tok):
                same = [k for k in builder.ops if k.arity == tok.arity]
                out[i] = same[rng.integers(len(same))]
            else:
                out[i] = builder.terminal()
        return tuple(out)
    # hoist mutation: replace a subtree by one of its own subtrees
    start = _pick_node(parent, rng)
    end = subtree_end(parent, start)
    sub = parent[start:end]
    h = _pick_node(sub, rng)
    return parent[:start] + sub[h:subtree_end(sub, h)] + parent[end:]
