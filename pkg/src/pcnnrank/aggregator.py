"""Bag representations: plain average of sentence embeddings, or relation-conditioned attention."""
from dataclasses import dataclass

import numpy as np

from .numeric import softmax

ATT_SCALE = 0.5


@dataclass
class BagRepr:
    r: np.ndarray
    alpha: np.ndarray
    relation: int = None  # conditioning relation for attention, None for the average
    S: np.ndarray = None


def aggregate_ave(S):
    S = np.asarray(S, dtype=np.float64)
    if S.shape[0] == 0:
        raise ValueError("cannot aggregate an empty bag")
    n = S.shape[0]
    return BagRepr(S.mean(axis=0), np.full(n, 1.0 / n), None, S)


def aggregate_att(S, c, W):
    """r^c = sum_j alpha_j s_j with alpha = softmax(0.5 * <W[c], s_j>)."""
    S = np.asarray(S, dtype=np.float64)
    if S.shape[0] == 0:
        raise ValueError("cannot aggregate an empty bag")
    alpha = softmax(ATT_SCALE * (S @ W[c]))
    return BagRepr(alpha @ S, alpha, c, S)


def aggregator_backward(grad_r, rep, W=None):
    """Returns (grad wrt each sentence embedding, grad wrt W[rep.relation] or None)."""
    grad_r = np.asarray(grad_r, dtype=np.float64)
    S, alpha = rep.S, rep.alpha
    if grad_r.shape != rep.r.shape:
        raise ValueError(f"gradient shape {grad_r.shape} does not match representation {rep.r.shape}")
    grad_S = np.outer(alpha, grad_r)
    if rep.relation is None:
        return grad_S, None
    # d r / d e_j = alpha_j (s_j - r)
    proj = S @ grad_r
    grad_e = alpha * (proj - alpha @ proj)
    wc = W[rep.relation]
    grad_S += ATT_SCALE * np.outer(grad_e, wc)
    grad_w = ATT_SCALE * (grad_e @ S)
    return grad_S, grad_w
