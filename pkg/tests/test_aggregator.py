import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pcnnrank.aggregator import aggregate_att, aggregate_ave, aggregator_backward
from pcnnrank.numeric import finite_diff_grad, relative_error, softmax

vals = st.floats(-3, 3, allow_nan=False)


def test_ave_cases():
    s1 = np.array([0.3, -0.2])
    assert np.array_equal(aggregate_ave([s1]).r, s1)
    assert np.array_equal(aggregate_ave([s1, s1]).r, s1)
    assert aggregate_ave([[1, 0], [0, 1]]).r.tolist() == [0.5, 0.5]
    with pytest.raises(ValueError):
        aggregate_ave(np.zeros((0, 2)))


def test_att_single_sentence_and_zero_row():
    W = np.array([[0.0, 0.0], [1.0, -2.0]])
    S = np.array([[0.5, 0.1]])
    rep = aggregate_att(S, 1, W)
    assert rep.alpha.tolist() == [1.0] and np.array_equal(rep.r, S[0])
    S = np.array([[1.0, 0.0], [0.0, 1.0], [0.2, 0.2]])
    assert np.allclose(aggregate_att(S, 0, W).r, aggregate_ave(S).r, rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        aggregate_att(np.zeros((0, 2)), 0, W)


def test_att_hand_computed():
    W = np.array([[2.0, 0.0]])
    S = np.array([[1.0, 0.0], [0.0, 1.0]])
    # e = 0.5 * [2, 0] = [1, 0]
    a1 = np.exp(1) / (np.exp(1) + 1)
    rep = aggregate_att(S, 0, W)
    assert rep.alpha == pytest.approx([a1, 1 - a1], abs=1e-15)
    assert rep.r == pytest.approx([a1, 1 - a1], abs=1e-15)


@settings(max_examples=50)
@given(arrays(float, (4, 3), elements=vals), arrays(float, 3, elements=vals), st.floats(-50, 50))
def test_att_shift_invariance_and_convexity(S, w, shift):
    W = w[None, :]
    rep = aggregate_att(S, 0, W)
    assert abs(rep.alpha.sum() - 1) < 1e-12 and np.all(rep.alpha >= 0)
    e = 0.5 * S @ w
    assert np.allclose(softmax(e + shift), rep.alpha, rtol=0, atol=1e-12)
    assert np.abs(rep.r).max() <= np.abs(S).max() + 1e-12


def test_att_equal_sentences():
    s = np.array([0.3, -0.7, 0.1])
    W = np.random.default_rng(0).normal(size=(2, 3))
    assert np.allclose(aggregate_att(np.stack([s, s, s]), 1, W).r, s, rtol=0, atol=1e-15)


def test_ave_backward():
    rep = aggregate_ave(np.zeros((2, 2)))
    gS, gw = aggregator_backward(np.array([2.0, 4.0]), rep)
    assert gS.tolist() == [[1, 2], [1, 2]] and gw is None
    with pytest.raises(ValueError):
        aggregator_backward(np.zeros(3), rep)


def test_att_backward_single_sentence():
    W = np.array([[0.3, -0.1]])
    rep = aggregate_att(np.array([[0.5, 0.2]]), 0, W)
    gS, gw = aggregator_backward(np.array([1.5, -2.0]), rep, W)
    assert np.allclose(gS, [[1.5, -2.0]]) and np.allclose(gw, 0)


@pytest.mark.parametrize("seed", range(20))
def test_att_backward_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, d, C = int(rng.integers(1, 5)), 4, 3
    S, W, c = rng.normal(size=(n, d)), rng.normal(size=(C, d)), int(rng.integers(C))
    g = rng.normal(size=d)
    gS, gw = aggregator_backward(g, aggregate_att(S, c, W), W)
    num_S = finite_diff_grad(lambda x: aggregate_att(x, c, W).r @ g, S)

    def fw(wc):
        W2 = W.copy()
        W2[c] = wc
        return aggregate_att(S, c, W2).r @ g

    num_w = finite_diff_grad(fw, W[c])
    assert relative_error(gS, num_S).max() < 1e-4
    assert relative_error(gw, num_w).max() < 1e-4
