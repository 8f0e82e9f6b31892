"""numpy implementations of the encoder's inner loops (fallback for _ckernels)."""
import numpy as np


def gather_windows(Q, starts, win):
    # row t of the result is Q[starts[t]], ..., Q[starts[t] + win - 1] laid end to end
    idx = starts[:, None] + np.arange(win)[None, :]
    return Q[idx].reshape(len(starts), win * Q.shape[1])


def scatter_windows(grad_cols, starts, win, rows):
    dw = grad_cols.shape[1] // win
    out = np.zeros((rows, dw))
    for w in range(win):
        out[starts + w] += grad_cols[:, w * dw:(w + 1) * dw]
    return out


def pool_forward(m, offsets, lengths, p1, p2):
    n_sent = len(offsets)
    ds = m.shape[1]
    z = np.zeros((n_sent, ds, 3))
    arg = np.full((n_sent, ds, 3), -1, dtype=np.int64)
    for i in range(n_sent):
        o = offsets[i]
        bounds = ((0, p1[i] + 1), (p1[i] + 1, p2[i] + 1), (p2[i] + 1, lengths[i]))
        for j, (lo, hi) in enumerate(bounds):
            if hi <= lo:
                continue
            seg = m[o + lo:o + hi]
            a = seg.argmax(axis=0)
            arg[i, :, j] = a + o + lo
            z[i, :, j] = seg[a, np.arange(ds)]
    return z, arg


def pool_backward(grad_z, arg, rows):
    n_sent, ds, _ = grad_z.shape
    grad_m = np.zeros((rows, ds))
    cols = np.broadcast_to(np.arange(ds)[None, :, None], arg.shape)
    hit = arg >= 0
    # segments are disjoint, so every (row, kernel) receives at most one value
    grad_m[arg[hit], cols[hit]] = grad_z[hit]
    return grad_m
