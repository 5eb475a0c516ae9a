import math

import numpy as np
import pytest

from redeq.data import Dataset
from redeq.errors import AllRowsInvalid, NotApplicable, NotInvertible
from redeq.expr import EvalCounter, NodeKind, evaluate, parse_expression, replace_subtree
from redeq.residual import (
    build_residual_list,
    compute_residual,
    invert_step,
    is_eligible,
    prune_after_update,
)

from conftest import make_data

K = NodeKind
PRODUCT, LOG, SINE, IB, POWER, X1, TWO = 2, 3, 4, 5, 6, 8, 9


def arr(*v):
    return np.array(v, dtype=float)


def test_invert_examples():
    assert invert_step(K.PLUS, 0, arr(5), arr(2))[0] == 3
    assert invert_step(K.POWER, 1, arr(8), arr(3))[0] == pytest.approx(2)
    assert not np.isfinite(invert_step(K.PRODUCT, 0, arr(4), arr(0))[0])
    with pytest.raises(NotInvertible):
        invert_step(K.SINE, 0, arr(1))
    with pytest.raises(NotInvertible):
        invert_step(K.COSINE, 0, arr(1))
    with pytest.raises(NotApplicable):
        invert_step(K.CONSTANT, 0, arr(1))
    with pytest.raises(NotApplicable):
        invert_step(K.VARIABLE, 0, arr(1))


def test_invert_each_row():
    p = arr(6.0)
    assert invert_step(K.MINUS, 0, p, arr(2))[0] == 8       # c0 - 2 = 6
    assert invert_step(K.MINUS, 1, p, arr(10))[0] == 4      # 10 - c1 = 6
    assert invert_step(K.DIVISION, 0, p, arr(2))[0] == 12   # c0 / 2 = 6
    assert invert_step(K.DIVISION, 1, p, arr(12))[0] == 2   # 12 / c1 = 6
    assert invert_step(K.PRODUCT, 1, p, arr(3))[0] == 2
    assert invert_step(K.POWER, 0, arr(8), arr(2))[0] == pytest.approx(3)  # 2 ^ c0 = 8
    assert invert_step(K.LOGARITHM, 0, arr(1))[0] == pytest.approx(math.e)
    assert invert_step(K.EXPONENTIAL, 0, arr(math.e))[0] == pytest.approx(1)
    assert invert_step(K.SQUARE_ROOT, 0, arr(3))[0] == 9
    y = arr(1, 2, 3)
    np.testing.assert_array_equal(invert_step(K.Y, 0, y), y)


def test_invert_masks_undefined_rows():
    assert not np.isfinite(invert_step(K.EXPONENTIAL, 0, arr(-1))[0])
    assert not np.isfinite(invert_step(K.SQUARE_ROOT, 0, arr(-1))[0])
    assert not np.isfinite(invert_step(K.POWER, 0, arr(-8), arr(2))[0])
    assert not np.isfinite(invert_step(K.POWER, 0, arr(8), arr(1))[0])
    assert not np.isfinite(invert_step(K.POWER, 1, arr(8), arr(0))[0])
    assert not np.isfinite(invert_step(K.POWER, 1, arr(-4), arr(2))[0])
    assert not np.isfinite(invert_step(K.DIVISION, 1, arr(0), arr(0))[0])
    # odd integer exponents have a real root for negative values
    assert invert_step(K.POWER, 1, arr(-8), arr(3))[0] == pytest.approx(-2)


def test_residual_list_examples(sample_tree):
    assert build_residual_list(sample_tree) == [PRODUCT, LOG, SINE, IB, POWER, X1, TWO]
    assert build_residual_list(parse_expression("x0")) == []
    assert build_residual_list(parse_expression("sin(x0)")) == []
    assert is_eligible(sample_tree, 1)  # computable, but left out of the list
    assert not is_eligible(sample_tree, 0)
    assert not is_eligible(sample_tree, 7)


def test_prune_examples(sample_tree):
    full = build_residual_list(sample_tree)
    assert prune_after_update(full, sample_tree, POWER) == [PRODUCT, SINE, IB, X1, TWO]
    assert prune_after_update(full, sample_tree, 1) == full
    assert prune_after_update(full, sample_tree, PRODUCT) == [LOG, SINE, IB, POWER, X1, TWO]


def test_residual_examples(sample_tree):
    data = Dataset(arr(0, math.e)[None, :], arr(2))
    data = Dataset(np.repeat(data.X, 12, axis=0), np.repeat(data.y, 12))
    res = compute_residual(sample_tree, LOG, data)
    np.testing.assert_allclose(res.values, 2.0)

    data = Dataset(np.ones((12, 2)), np.full(12, math.sin(1)))
    res = compute_residual(sample_tree, SINE, data)
    np.testing.assert_allclose(res.values, 0.841470985, atol=1e-9)
    assert res.source_node == SINE and res.n_valid == 12


def test_residual_not_invertible(sample_tree):
    data = make_data(lambda X: X[:, 0], n_vars=2)
    with pytest.raises(NotInvertible):
        compute_residual(sample_tree, 7, data)


def test_residual_all_rows_invalid():
    tree = parse_expression("sqrt(x0 + 1)")
    # y < 0 is outside the range of sqrt: every row is masked
    data = Dataset(np.ones((20, 1)), -np.ones(20))
    with pytest.raises(AllRowsInvalid):
        compute_residual(tree, 2, data)


def test_residual_partial_mask():
    tree = parse_expression("sqrt(x0 + 1)")
    y = np.where(np.arange(30) % 3 == 0, -1.0, 2.0)
    res = compute_residual(tree, 2, Dataset(np.ones((30, 1)), y))
    np.testing.assert_array_equal(res.valid_mask, y > 0)
    np.testing.assert_allclose(res.values[res.valid_mask], 4.0)
    assert np.all(np.isfinite(res.values[res.valid_mask]))


def test_residual_evaluates_each_node_once(sample_tree):
    data = make_data(lambda X: X[:, 0] + 1, n_vars=2, lo=0.5, hi=2)
    counter = EvalCounter()
    compute_residual(sample_tree, X1, data, counter=counter)
    assert counter.per_node and max(counter.per_node.values()) == 1


def test_substitution_soundness(sample_tree):
    data = make_data(lambda X: np.cos(X[:, 0]) + X[:, 1], n=100, n_vars=2, lo=0.3, hi=2.0)
    for node in build_residual_list(sample_tree):
        res = compute_residual(sample_tree, node, data)
        out = evaluate(sample_tree, data, overrides={node: res.values})
        m = res.valid_mask
        np.testing.assert_allclose(out[m], data.y[m], rtol=1e-9, atol=1e-12)


def test_residual_on_spliced_tree(sextic_data):
    tree = parse_expression("x1^6 + x1")
    res = compute_residual(tree, 3, sextic_data)  # the lone x1 term
    np.testing.assert_allclose(res.values, np.sin(sextic_data.X[:, 1]), atol=1e-9)
    new = replace_subtree(tree, 3, parse_expression("sin(x1)"))
    assert str(new) == "x1 ^ 6 + sin(x1)"
