import itertools

import numpy as np
import pytest

from pcnnrank import _pykernels, encoder, kernels
from pcnnrank.encoder import (EncoderParams, convolve, embed_tokens, encode, encoder_backward, finish,
                              piecewise_maxpool)
from pcnnrank.model import ModelShape, init_params
from pcnnrank.numeric import Rng, finite_diff_grad, relative_error


def small_params(seed=0, vocab=6, d_word=3, d_pos=2, kernels_=2, window=3, clip=3):
    shape = ModelShape(vocab, 3, d_word, d_pos, kernels_, window, clip)
    return init_params(shape, seed).enc


def brute_pool(row, p1, p2, n):
    # segments materialised explicitly
    segs = [list(row[0:p1 + 1]), list(row[p1 + 1:p2 + 1]), list(row[p2 + 1:n])]
    return [max(s) if s else 0.0 for s in segs]


def test_pool_example():
    z, arg = piecewise_maxpool(np.array([[1.0, 5, 3, 2, 4]]), 1, 3)
    assert z.tolist() == [5, 3, 4]
    assert arg.tolist() == [1, 2, 4]


def test_pool_constant_and_empty_segment():
    z, _ = piecewise_maxpool(np.full((1, 4), 2.5), 0, 2)
    assert z.tolist() == [2.5, 2.5, 2.5]
    z, arg = piecewise_maxpool(np.array([[-3.0, -1.0, -2.0]]), 1, 2)
    assert z.tolist() == [-1.0, -2.0, 0.0] and arg[2] == -1


def test_pool_ties_pick_lowest_index():
    _, arg = piecewise_maxpool(np.array([[1.0, 1.0, 7.0, 7.0, 0.0]]), 1, 4)
    assert arg.tolist() == [0, 2, -1]


def test_pool_exhaustive_against_brute_force():
    rng = np.random.default_rng(0)
    for n in range(1, 9):
        m = rng.normal(size=(3, n))
        for p1, p2 in itertools.combinations_with_replacement(range(n), 2):
            z, _ = piecewise_maxpool(m, p1, p2)
            expected = [v for k in range(3) for v in brute_pool(m[k], p1, p2, n)]
            assert z.tolist() == expected


def test_convolve_hand_oracle():
    p = small_params(d_word=1, d_pos=1, kernels_=1, window=2)
    q = np.array([[1.0, 0, 0], [2, 1, 0], [3, 0, 1], [4, 1, 1]])
    p.K[0] = [[1.0, 0.5, -1], [2, 0, 1]]
    p.b[0] = 0.25
    m = convolve(q, p)
    expected = []
    for i in range(4):
        total = p.b[0]
        for w in range(2):
            if i + w < 4:
                total += sum(q[i + w, c] * p.K[0, w, c] for c in range(3))
        expected.append(total)
    assert m.shape == (1, 4)
    assert np.allclose(m[0], expected, rtol=0, atol=1e-15)
    assert m[0, 0] == pytest.approx(1 + 0.5 * 0 - 0 + 2 * 2 + 0 + 0 + 0.25)


def test_convolve_single_token_and_zeros():
    p = small_params()
    q = np.zeros((1, p.K.shape[2]))
    p.b[:] = 0
    assert np.all(convolve(q, p) == 0)
    q[0] = 1.0
    m = convolve(q, p)
    assert m.shape == (p.n_kernels, 1)
    assert np.allclose(m[:, 0], p.K[:, 0, :].sum(axis=1))


def test_embed_tokens():
    p = small_params()
    grid = np.array([[0, 7, 7]])  # PAD everywhere
    assert np.all(embed_tokens(grid, p) == 0)
    grid = np.array([[2, 1, 4]])
    q = embed_tokens(grid, p)
    assert q.shape == (1, 3 + 2 + 2)
    assert np.array_equal(q[0], np.concatenate([p.V[2], p.P_head[1], p.P_tail[4]]))
    with pytest.raises(IndexError):
        embed_tokens(np.array([[99, 0, 0]]), p)


def test_table2_dimensions():
    shape = ModelShape(vocab_size=10, n_relations=53)
    p = init_params(shape, 0).enc
    assert p.K.shape[2] == 60 and p.d_out == 690
    s = encode([np.array([[2, 30, 31], [3, 31, 30]])], [(0, 1)], p).s
    assert s.shape == (1, 690)
    assert np.all(np.abs(s) < 1)


def test_finish_modes():
    assert np.all(finish(np.zeros(6)).s == 0)
    z = np.linspace(-2, 2, 6)
    assert np.array_equal(finish(z, Rng(1), 1.0, train=True).s, finish(z).s)
    out = finish(z, Rng(1), 0.5, train=True)
    kept = out.cache["mask"] != 0
    assert np.allclose(out.s[kept], 2 * np.tanh(z[kept]))
    assert np.all(out.s[~kept] == 0)


def random_batch(rng, params, n_sent=3, max_len=7):
    grids, positions = [], []
    vocab, pos_rows = params.V.shape[0], params.P_head.shape[0] - 1
    for _ in range(n_sent):
        n = int(rng.integers(1, max_len + 1))
        g = np.column_stack([rng.integers(1, vocab, n), rng.integers(0, pos_rows, n), rng.integers(0, pos_rows, n)])
        grids.append(g)
        positions.append(tuple(sorted(rng.choice(n, 2, replace=n < 2))))
    return grids, positions


def test_batched_encode_matches_single_sentence_ops():
    rng = np.random.default_rng(4)
    p = small_params(seed=2)
    grids, positions = random_batch(rng, p, n_sent=5)
    s = encode(grids, positions, p).s
    for i, (g, (h, t)) in enumerate(zip(grids, positions)):
        z, _ = piecewise_maxpool(convolve(embed_tokens(g, p), p), h, t)
        assert np.allclose(s[i], np.tanh(z), rtol=0, atol=1e-14)


def test_padded_grid_gives_same_encoding():
    p = small_params(seed=3)
    g = np.array([[2, 1, 3], [3, 2, 4], [4, 3, 5]])
    padded = np.vstack([g, [[0, 7, 7]] * 4])
    assert np.array_equal(encode([g], [(0, 2)], p).s, encode([padded], [(0, 2)], p).s)


def test_backends_bit_identical():
    rng = np.random.default_rng(8)
    m = rng.normal(size=(20, 4))
    offsets, lengths = np.array([0, 6, 13], np.int64), np.array([6, 7, 7], np.int64)
    p1, p2 = np.array([1, 0, 3], np.int64), np.array([4, 6, 3], np.int64)
    z_a, arg_a = _pykernels.pool_forward(m, offsets, lengths, p1, p2)
    z_b, arg_b = kernels.pool_forward(m, offsets, lengths, p1, p2)
    assert np.array_equal(z_a, z_b) and np.array_equal(arg_a, arg_b)
    gz = rng.normal(size=z_a.shape)
    assert np.array_equal(_pykernels.pool_backward(gz, arg_a, 20), kernels.pool_backward(gz, arg_b, 20))
    Q = rng.normal(size=(30, 5))
    starts = np.array([0, 1, 2, 5, 9, 20], np.int64)
    cols = _pykernels.gather_windows(Q, starts, 3)
    assert np.array_equal(cols, kernels.gather_windows(Q, starts, 3))
    gc = rng.normal(size=cols.shape)
    assert np.array_equal(_pykernels.scatter_windows(gc, starts, 3, 30), kernels.scatter_windows(gc, starts, 3, 30))


def test_backward_zero_grad():
    p = small_params()
    grids, positions = random_batch(np.random.default_rng(0), p)
    enc = encode(grids, positions, p)
    g = encoder_backward(np.zeros_like(enc.s), enc.cache, p)
    for arr in (g.V_rows, g.P_head, g.P_tail, g.K, g.b):
        assert np.all(arr == 0)
    with pytest.raises(ValueError):
        encoder_backward(np.zeros((1, 1)), enc.cache, p)


def test_identical_kernels_get_identical_gradients():
    p = small_params(kernels_=2)
    p.K[1] = p.K[0]
    p.b[1] = p.b[0]
    grids, positions = random_batch(np.random.default_rng(1), p)
    enc = encode(grids, positions, p)
    # weight each kernel's three outputs identically
    w = np.random.default_rng(2).normal(size=(len(grids), 1, 3))
    grad_s = np.broadcast_to(w, (len(grids), 2, 3)).reshape(len(grids), 6)
    g = encoder_backward(grad_s, enc.cache, p)
    assert np.array_equal(g.K[0], g.K[1])


def _encoder_fd_check(p, grids, positions, seed):
    proj = np.random.default_rng(seed).normal(size=(len(grids), p.d_out))
    enc = encode(grids, positions, p)
    g = encoder_backward(proj, enc.cache, p)
    analytic = {"V": g.dense_V(p.V.shape[0]), "P_head": g.P_head, "P_tail": g.P_tail, "K": g.K, "b": g.b}
    worst = 0.0
    for name, arr in (("V", p.V), ("P_head", p.P_head), ("P_tail", p.P_tail), ("K", p.K), ("b", p.b)):
        def f(theta, arr=arr):
            saved = arr.copy()
            arr[...] = theta
            try:
                return float((encode(grids, positions, p).s * proj).sum())
            finally:
                arr[...] = saved
        err = relative_error(analytic[name], finite_diff_grad(f, arr, 1e-4))
        if name == "V":
            err[0] = 0
        elif name.startswith("P"):
            err[-1] = 0
        worst = max(worst, err.max())
    return worst


def test_single_token_single_kernel_gradient():
    p = small_params(kernels_=1, seed=5)
    assert _encoder_fd_check(p, [np.array([[2, 3, 3]])], [(0, 0)], 0) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_encoder_gradient_random(seed):
    rng = np.random.default_rng(100 + seed)
    p = small_params(seed=seed, window=int(rng.integers(1, 4)))
    grids, positions = random_batch(rng, p)
    assert _encoder_fd_check(p, grids, positions, seed) < 1e-4
