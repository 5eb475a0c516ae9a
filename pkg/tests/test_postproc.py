import numpy as np
import pytest

from redeq.eds import GpConfig, GpModel
from redeq.errors import CannotReplaceRoot, EmptyComparison
from redeq.expr import NodeKind, parse_expression
from redeq.postproc import (
    Classic,
    HyperGrid,
    Permute,
    Red,
    Refit,
    SeededGp,
    compare_counts,
    default_grid,
    draw_ratio,
    run_method,
    seed_for_node,
    win_ratio,
)

from conftest import ConstantModel, make_data

SMALL = GpConfig(population_size=60, generations=3, tournament_size=3)


def three_splits(fn, n_vars=1):
    return tuple(make_data(fn, n=n, n_vars=n_vars, seed=s, role=r)
                 for n, s, r in [(60, 1, "train"), (20, 2, "validation"), (20, 3, "test")])


def test_win_ratio_examples():
    assert win_ratio([0.1, 0.2], [0.3]) == 1.0
    assert win_ratio([0.3], [0.3]) == 0.0
    assert draw_ratio([0.3], [0.3]) == 1.0
    assert win_ratio([0.1, 0.5], [0.2, 0.4]) == 0.5
    assert compare_counts([0.1, 0.5], [0.2, 0.4]) == (2, 0, 2)


def test_win_ratio_edge_cases():
    assert win_ratio([np.inf], [np.inf]) == 0.0 and draw_ratio([np.inf], [np.inf]) == 1.0
    assert win_ratio([1.0], [np.inf]) == 1.0
    assert win_ratio([1.0], [1.0 + 1e-14]) == 0.0  # draw within tolerance
    with pytest.raises(EmptyComparison):
        win_ratio([], [0.1])


def test_complementarity():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = rng.choice([0.1, 0.2, 0.3], size=rng.integers(1, 6))
        b = rng.choice([0.1, 0.2, 0.3], size=rng.integers(1, 6))
        total = win_ratio(a, b) + draw_ratio(a, b) + win_ratio(b, a)
        assert abs(total - 1.0) < 1e-12


def test_seed_for_node(sample_tree):
    pruned = seed_for_node(sample_tree, 3, seed=0)
    assert str(pruned).startswith("sin(x0) * x0 + ")
    leaf = pruned.node(3)
    assert leaf.kind in (NodeKind.VARIABLE, NodeKind.CONSTANT)
    whole = seed_for_node(sample_tree, 1, seed=0)
    assert len(whole) == 2
    const = seed_for_node(sample_tree, 9, seed=0)
    assert str(const).startswith("sin(x0) * x0 + ln(x1 ^ ")
    with pytest.raises(CannotReplaceRoot):
        seed_for_node(sample_tree, 0)
    assert seed_for_node(sample_tree, 3, seed=5) == seed_for_node(sample_tree, 3, seed=5)


def test_refit_method():
    splits = three_splits(lambda X: 3 * X[:, 0])
    res = run_method(Refit(), ConstantModel("x0"), parse_expression("1 * x0"), splits)
    assert len(res.equations) == 1
    eq = res.equations[0]
    assert eq.expression.node(2).value == pytest.approx(3.0, abs=1e-6)
    assert eq.test_mse < 1e-6


def test_permute_count():
    splits = three_splits(lambda X: X[:, 0] ** 2)
    res = run_method(Permute(3), GpModel(SMALL), None, splits)
    assert len(res.equations) == 3 and res.info["n"] == 3


def test_permute_follows_red_iterations():
    splits = three_splits(lambda X: X[:, 0] ** 2)
    res = run_method(Permute(), GpModel(SMALL), None, splits, red_iterations=2)
    assert len(res.equations) == 2


def test_seeded_gp_runs_per_node():
    splits = three_splits(lambda X: X[:, 0] * np.sin(X[:, 0]))
    initial = parse_expression("x0 * sin(x0)")  # 4 nodes below Y
    res = run_method(SeededGp(SMALL), ConstantModel("x0"), initial, splits)
    assert res.info["runs"] == 4
    assert 1 <= len(res.equations) <= 4


def test_hypergrid_uses_every_config():
    grid = default_grid(SMALL)
    assert len(grid) == 3
    for cfg in grid:
        assert cfg.crossover_prob + cfg.mutation_prob <= 1
    splits = three_splits(lambda X: X[:, 0] + 1)
    res = run_method(HyperGrid(grid), GpModel(SMALL), None, splits)
    assert len(res.equations) == 3


def test_classic_and_red():
    splits = three_splits(lambda X: X[:, 0] ** 2 + np.sin(X[:, 0]))
    classic = run_method(Classic(), ConstantModel("x0 * x0 + x0"), None, splits)
    assert classic.completed and classic.best == 0
    init = classic.best_equation.expression
    red = run_method(Red(), ConstantModel("sin(x0)"), init, splits)
    assert red.completed
    assert red.info["iterations"] >= 1
    assert red.best_equation.val_mse <= classic.best_equation.val_mse


def test_methods_needing_initial_report_error():
    splits = three_splits(lambda X: X[:, 0])
    res = run_method(Refit(), ConstantModel("x0"), None, splits)
    assert not res.completed and res.info["errors"]


def test_classic_failure_is_recorded():
    splits = tuple(make_data(lambda X: X[:, 0], n=4, seed=s) for s in (1, 2, 3))
    res = run_method(Classic(), ConstantModel("x0"), None, splits)
    assert not res.completed and "AllRowsInvalid" in res.info["errors"][0]
