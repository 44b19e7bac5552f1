import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvcoattn.classification import (
    Classifier,
    Prediction,
    centroid_fuse,
    class_probs,
    classify,
    cross_entropy,
    fuse,
    one_hot,
    semisup_loss,
    shared_copies,
    squared_error,
)
from mvcoattn.coattention import ConfigError
from mvcoattn.numerics import ShapeError, Tape, grad_check


def colv(*xs):
    return np.array(xs, float).reshape(1, -1, 1)


def test_fuse_identical_codes(rng):
    z = rng.normal(size=(2, 3, 1))
    s = rng.normal(size=(2, 2, 1))
    f = fuse(z, z, s, s).value
    np.testing.assert_array_equal(f[:, :3], z)


def test_fuse_opposite_codes_cancel(rng):
    z = rng.normal(size=(2, 3, 1))
    s = rng.normal(size=(2, 1, 2))
    assert not fuse(z, -z, s, s).value[:, :3].any()


def test_fuse_ordering():
    f = fuse(colv(1, 2), colv(3, 4), colv(5, 6), colv(7, 8)).value.ravel()
    np.testing.assert_array_equal(f, [2, 3, 5, 6, 7, 8])


def test_fuse_flattens_residuals_row_major():
    s1 = np.array([[[1.0, 2.0], [3.0, 4.0]]])  # (1, d=2, k=2)
    f = fuse(colv(0), colv(0), s1, colv(9)).value.ravel()
    np.testing.assert_array_equal(f, [0, 1, 2, 3, 4, 9])


def test_fuse_code_mismatch():
    with pytest.raises(ShapeError):
        fuse(colv(1, 2), colv(1), colv(0), colv(0))


def test_centroid_fuse_two_views_bitwise(rng):
    zs = [rng.normal(size=(3, 4, 1)) for _ in range(2)]
    ss = [rng.normal(size=(3, 2, 3)) for _ in range(2)]
    assert np.array_equal(centroid_fuse(zs, ss).value, fuse(*zs, *ss).value)


def test_centroid_fuse_three_views(rng):
    zs = [rng.normal(size=(2, 3, 1)) for _ in range(3)]
    ss = [rng.normal(size=(2, 2, 2)) for _ in range(3)]
    expected = np.concatenate([sum(zs) / 3] + [s.reshape(2, -1, 1) for s in ss], axis=1)
    np.testing.assert_allclose(centroid_fuse(zs, ss).value, expected, atol=1e-15)


def test_centroid_fuse_equal_codes(rng):
    z = rng.normal(size=(1, 2, 1))
    f = centroid_fuse([z, z, z], [colv(0)] * 3).value
    np.testing.assert_allclose(f[:, :2], z, atol=1e-15)


def test_centroid_fuse_needs_two():
    with pytest.raises(ConfigError):
        centroid_fuse([colv(1)], [colv(1)])


def test_shared_copies_width(rng):
    zs = [rng.normal(size=(2, 3, 1)) for _ in range(2)]
    f = shared_copies(zs, 8).value
    assert f.shape == (2, 8, 1)
    mean = (zs[0] + zs[1]) * 0.5
    np.testing.assert_array_equal(f[:, :3], mean)
    np.testing.assert_array_equal(f[:, 6:8], mean[:, :2])


def test_zero_weight_classifier_uniform(rng):
    C = Classifier(4, 3, rng, hidden=5)
    for p in C.params:
        p.value = np.zeros_like(p.value)
    np.testing.assert_allclose(class_probs(rng.normal(size=(2, 4, 1)), C).value, 1 / 3)


def test_tie_break_lowest_index():
    assert Prediction(np.array([[0.5, 0.5], [0.2, 0.8], [1 / 3, 1 / 3]])).labels.tolist() == [0, 1, 0]


def test_classifier_hand_forward(rng):
    C = Classifier(3, 2, rng, hidden=4)
    for b in C.biases:
        b.value = rng.normal(size=b.value.shape)
    f = rng.normal(size=(1, 3, 1))
    W0, W1 = C.weights[0].value, C.weights[1].value
    b0, b1 = C.biases[0].value, C.biases[1].value
    logits = (W1 @ np.tanh(W0 @ f[0] + b0) + b1).ravel()
    e = np.exp(logits - logits.max())
    np.testing.assert_allclose(classify(f, C).probs[0], e / e.sum(), rtol=1e-13)


def test_classify_shape_error(rng):
    with pytest.raises(ShapeError):
        class_probs(rng.normal(size=(1, 5, 1)), Classifier(4, 2, rng))


# losses


def test_cross_entropy_perfect():
    Y = np.eye(2)
    assert cross_entropy(Y, Y).value.item() == pytest.approx(-math.log(1 - 1e-7), rel=1e-9)


def test_cross_entropy_half():
    assert abs(cross_entropy([[1.0, 0.0]], [[0.5, 0.5]]).value.item() - math.log(2)) < 1e-15


@pytest.mark.parametrize("c", [2, 3, 7])
def test_cross_entropy_uniform_is_log_c(c):
    Y = one_hot([0, c - 1], c)
    assert abs(cross_entropy(Y, np.full((2, c), 1 / c)).value.item() - math.log(c)) < 1e-14


def test_cross_entropy_rejects_non_one_hot():
    with pytest.raises(ValueError):
        cross_entropy([[0.5, 0.5]], [[0.5, 0.5]])


@given(st.integers(0, 10_000))
def test_cross_entropy_minimized_at_truth(seed):
    r = np.random.default_rng(seed)
    Y = one_hot(r.integers(0, 3, size=4), 3)
    P = r.dirichlet(np.ones(3), size=4)
    assert cross_entropy(Y, P).value.item() > cross_entropy(Y, Y).value.item()


def test_squared_error_hand():
    assert squared_error([[1.0, 0.0]], [[0.75, 0.25]]).value.item() == 0.125


def test_semisup_correct_agreeing_heads():
    Y = np.eye(2)
    loss = semisup_loss(Y, Y, Y, [True, False]).value.item()
    assert loss < 1e-6


def test_semisup_fully_labeled_reduces():
    r = np.random.default_rng(0)
    P1, P2 = r.dirichlet([1, 1], size=3), r.dirichlet([1, 1], size=3)
    Y = one_hot([0, 1, 1], 2)
    got = semisup_loss(P1, P2, Y, np.ones(3, bool)).value.item()
    assert abs(got - (cross_entropy(Y, P1).value.item() + cross_entropy(Y, P2).value.item())) < 1e-14


def test_semisup_mixed_rows_by_hand():
    P1 = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]])
    P2 = np.array([[0.7, 0.3], [0.4, 0.6], [0.5, 0.5], [0.1, 0.9]])
    Y = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]])
    mask = np.array([True, True, False, False])
    cons = -(0.6 * math.log(0.5) + 0.4 * math.log(0.5) + 0.3 * math.log(0.1) + 0.7 * math.log(0.9)) / 2
    sup1 = -(math.log(0.9) + math.log(0.8)) / 2
    sup2 = -(math.log(0.7) + math.log(0.6)) / 2
    assert abs(semisup_loss(P1, P2, Y, mask).value.item() - (cons + sup1 + sup2)) < 1e-14


def test_semisup_degenerate_warns():
    P = np.full((2, 2), 0.5)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        semisup_loss(P, P, np.eye(2), [False, False], consistency_weight=0.0)
    assert any("no labeled rows" in str(x.message) for x in w)


def test_label_gradient_reaches_both_codes(rng):
    C = Classifier(3 + 2 + 2, 2, rng, hidden=4)
    from mvcoattn.numerics import Param

    z1 = Param(rng.normal(size=(2, 3, 1)), "z1")
    z2 = Param(rng.normal(size=(2, 3, 1)), "z2")
    s = rng.normal(size=(2, 2, 1))
    with Tape() as tape:
        loss = cross_entropy(one_hot([0, 1], 2), class_probs(fuse(z1, z2, s, s), C))
    tape.backward(loss)
    assert np.linalg.norm(z1.grad) > 0 and np.linalg.norm(z2.grad) > 0


def test_classifier_gradients(rng):
    C = Classifier(4, 3, rng, hidden=5)
    f = rng.normal(size=(3, 4, 1))
    Y = one_hot([0, 2, 1], 3)
    assert grad_check(lambda: cross_entropy(Y, class_probs(f, C)), C.params) < 1e-6
