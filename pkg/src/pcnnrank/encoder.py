"""Piecewise CNN sentence encoder: embeddings, convolution, three-piece max-pooling, tanh, dropout.

Sentences are processed in batches: all token rows are laid out in one flat
matrix, each sentence followed by ``window - 1`` PAD rows, so one matrix
product convolves the whole batch. The loops that do not vectorise well
(window gather/scatter and segment pooling) live in :mod:`pcnnrank.kernels`.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .numeric import bernoulli_mask


@dataclass
class EncoderParams:
    V: np.ndarray  # (vocab, d_word)
    P_head: np.ndarray  # (positions + PAD, d_pos)
    P_tail: np.ndarray
    K: np.ndarray  # (n_kernels, window, d_word + 2 * d_pos)
    b: np.ndarray  # (n_kernels,)

    @property
    def window(self):
        return self.K.shape[1]

    @property
    def n_kernels(self):
        return self.K.shape[0]

    @property
    def d_out(self):
        return 3 * self.K.shape[0]

    def copy(self):
        return EncoderParams(self.V.copy(), self.P_head.copy(), self.P_tail.copy(), self.K.copy(), self.b.copy())


@dataclass
class EncoderGrads:
    V_ids: np.ndarray  # distinct word ids touched by the batch
    V_rows: np.ndarray  # gradient for each of those rows
    P_head: np.ndarray
    P_tail: np.ndarray
    K: np.ndarray
    b: np.ndarray

    def dense_V(self, n_rows):
        out = np.zeros((n_rows, self.V_rows.shape[1]))
        out[self.V_ids] = self.V_rows
        return out


@dataclass
class SentenceEmbedding:
    s: np.ndarray  # (n_sentences, d_out)
    cache: dict


def sentence_length(grid, pad_id=0):
    """Number of real tokens in a (possibly PAD-padded) index grid."""
    real = np.flatnonzero(grid[:, 0] != pad_id)
    return int(real[-1]) + 1 if len(real) else 0


def _check_bounds(ids_w, ids_h, ids_t, params):
    for name, ids, table in (("word", ids_w, params.V), ("head position", ids_h, params.P_head),
                             ("tail position", ids_t, params.P_tail)):
        if len(ids) and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise IndexError(f"{name} index out of range for table with {table.shape[0]} rows")


def embed_tokens(grid, params):
    """Token representations q (n x d_w): word, head-position and tail-position embeddings side by side."""
    grid = np.asarray(grid, dtype=np.int64)
    _check_bounds(grid[:, 0], grid[:, 1], grid[:, 2], params)
    return np.hstack([params.V[grid[:, 0]], params.P_head[grid[:, 1]], params.P_tail[grid[:, 2]]])


def convolve(q, params):
    """Feature map m (n_kernels x n). Window i covers q[i .. i+window-1]; rows past the end are zero."""
    n, dw = q.shape
    win = params.window
    Q = np.vstack([q, np.zeros((win - 1, dw))])
    cols = kernels.gather_windows(np.ascontiguousarray(Q), np.arange(n, dtype=np.int64), win)
    return (cols @ params.K.reshape(params.n_kernels, -1).T + params.b).T


def piecewise_maxpool(m, p1, p2, length=None):
    """Max of each kernel row over [0..p1], [p1+1..p2], [p2+1..length-1].

    Returns (z, argmax) with z laid out kernel-major (z[3*k + j]); an empty piece
    pools to 0 and has argmax -1.
    """
    m = np.asarray(m, dtype=np.float64)
    p1, p2 = min(p1, p2), max(p1, p2)
    n = m.shape[1] if length is None else length
    z, arg = kernels.pool_forward(np.ascontiguousarray(m.T), np.zeros(1, np.int64), np.array([n], np.int64),
                                  np.array([p1], np.int64), np.array([p2], np.int64))
    return z.reshape(-1), arg.reshape(-1)


def finish(z_all, rng=None, p_keep=1.0, train=False):
    """tanh, then inverted dropout in train mode."""
    y = np.tanh(np.asarray(z_all, dtype=np.float64))
    cache = {"y": y, "mask": None}
    if train and p_keep < 1.0:
        mask = bernoulli_mask(rng, y.size, p_keep).reshape(y.shape) / p_keep
        cache["mask"] = mask
        return SentenceEmbedding(y * mask, cache)
    if not 0.0 < p_keep <= 1.0:
        raise ValueError(f"p_keep must lie in (0, 1], got {p_keep}")
    return SentenceEmbedding(y, cache)


def encode(grids, positions, params, rng=None, p_keep=1.0, train=False, pad_id=0):
    """Encode a batch of sentences.

    grids: sequence of (L, 3) index arrays from :func:`pcnnrank.corpus.featurize`.
    positions: sequence of (head_pos, tail_pos).
    Returns a SentenceEmbedding with ``s`` of shape (len(grids), 3 * n_kernels).
    """
    win = params.window
    n_sent = len(grids)
    lengths = np.array([sentence_length(g, pad_id) for g in grids], dtype=np.int64)
    if n_sent == 0 or lengths.min() < 1:
        raise ValueError("every sentence needs at least one token")
    offsets = np.zeros(n_sent, dtype=np.int64)
    np.cumsum(lengths[:-1], out=offsets[1:])
    total = int(lengths.sum())
    rows = total + n_sent * (win - 1)

    flat = np.empty((rows, 3), dtype=np.int64)
    flat[:, 0] = pad_id
    flat[:, 1] = params.P_head.shape[0] - 1
    flat[:, 2] = params.P_tail.shape[0] - 1
    starts = np.empty(total, dtype=np.int64)
    for i, g in enumerate(grids):
        lo = offsets[i] + i * (win - 1)
        flat[lo:lo + lengths[i]] = g[:lengths[i]]
        starts[offsets[i]:offsets[i] + lengths[i]] = np.arange(lo, lo + lengths[i])
    ids_w, ids_h, ids_t = flat[:, 0], flat[:, 1], flat[:, 2]
    _check_bounds(ids_w, ids_h, ids_t, params)

    Q = np.hstack([params.V[ids_w], params.P_head[ids_h], params.P_tail[ids_t]])
    cols = kernels.gather_windows(Q, starts, win)
    Kflat = params.K.reshape(params.n_kernels, -1)
    m = cols @ Kflat.T + params.b
    pos = np.asarray(positions, dtype=np.int64).reshape(n_sent, 2)
    p1 = np.ascontiguousarray(pos.min(axis=1))
    p2 = np.ascontiguousarray(pos.max(axis=1))
    z, arg = kernels.pool_forward(m, offsets, lengths, p1, p2)

    out = finish(z.reshape(n_sent, -1), rng, p_keep, train)
    out.cache.update(ids_w=ids_w, ids_h=ids_h, ids_t=ids_t, starts=starts, cols=cols, m=m, arg=arg,
                     offsets=offsets, lengths=lengths, p1=p1, p2=p2, rows=rows, pad_id=pad_id)
    return out


def encoder_backward(grad_s, cache, params):
    y, mask = cache["y"], cache["mask"]
    grad_s = np.asarray(grad_s, dtype=np.float64)
    if grad_s.shape != y.shape:
        raise ValueError(f"gradient shape {grad_s.shape} does not match encoder output {y.shape}")
    g = grad_s if mask is None else grad_s * mask
    grad_z = np.ascontiguousarray((g * (1.0 - y * y)).reshape(y.shape[0], params.n_kernels, 3))
    grad_m = kernels.pool_backward(grad_z, cache["arg"], cache["m"].shape[0])
    grad_b = grad_m.sum(axis=0)
    grad_K = (grad_m.T @ cache["cols"]).reshape(params.K.shape)
    grad_cols = grad_m @ params.K.reshape(params.n_kernels, -1)
    grad_Q = kernels.scatter_windows(grad_cols, cache["starts"], params.window, cache["rows"])

    d1, d2 = params.V.shape[1], params.P_head.shape[1]
    real = cache["ids_w"] != cache["pad_id"]
    ids_w, gq = cache["ids_w"][real], grad_Q[real]
    V_ids, inverse = np.unique(ids_w, return_inverse=True)
    V_rows = np.zeros((len(V_ids), d1))
    np.add.at(V_rows, inverse, gq[:, :d1])
    gPh = np.zeros_like(params.P_head)
    gPt = np.zeros_like(params.P_tail)
    np.add.at(gPh, cache["ids_h"][real], gq[:, d1:d1 + d2])
    np.add.at(gPt, cache["ids_t"][real], gq[:, d1 + d2:])
    return EncoderGrads(V_ids, V_rows, gPh, gPt, grad_K, grad_b)
