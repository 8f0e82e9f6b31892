"""Ranking losses over bag representations, with exact gradients.

Every pair term has the form softplus(rho * max(0, margin_arg)); the positive
argument is sigma_pos - F(r, c+) and the negative one sigma_neg + F(r, c-).
"""
from dataclasses import dataclass

import numpy as np

from .aggregator import aggregate_att, aggregate_ave, aggregator_backward
from .numeric import sigmoid, softplus_stable

VARIANTS = ("ave", "att", "cost_att")


@dataclass
class LossConfig:
    variant: str = "cost_att"
    rho: float = 2.0
    sigma_pos: float = 2.5
    sigma_neg: float = 0.5
    lam: float = 0.0  # weight of NR's own positive term (cost_att)
    gamma: float = 1.0  # weight of the auxiliary positive / NR terms (cost_att)
    eps: float = 1e-6
    eta: float = 1e-3
    regularize: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown loss variant {self.variant!r}; expected one of {VARIANTS}")


@dataclass
class LossResult:
    loss: float
    grad_S: np.ndarray
    grad_W: np.ndarray
    pos: float = 0.0
    neg: float = 0.0


def score(r, c, W):
    if not 0 <= c < W.shape[0]:
        raise IndexError(f"relation id {c} outside 0..{W.shape[0] - 1}")
    return float(W[c] @ r)


def pos_term(F, cfg):
    """(value, d value / d F) of the positive pair term."""
    u = cfg.rho * float(np.maximum(0.0, cfg.sigma_pos - F))  # propagates NaN
    d = -cfg.rho * sigmoid(u) if cfg.sigma_pos - F > 0.0 else 0.0
    return softplus_stable(u), d


def neg_term(F, cfg):
    u = cfg.rho * float(np.maximum(0.0, cfg.sigma_neg + F))
    d = cfg.rho * sigmoid(u) if cfg.sigma_neg + F > 0.0 else 0.0
    return softplus_stable(u), d


def pair_loss(F_pos, F_neg, cfg):
    return pos_term(F_pos, cfg)[0] + neg_term(F_neg, cfg)[0]


def select_negative(scores, positives):
    """Highest-scoring class outside ``positives``; lowest id wins ties."""
    scores = np.asarray(scores, dtype=np.float64)
    best, best_c = -np.inf, None
    for c in range(len(scores)):
        if c in positives:
            continue
        if best_c is None or scores[c] > best:
            best, best_c = scores[c], c
    if best_c is None:
        raise ValueError("every class is positive; no negative class to select")
    return best_c


def _check_labels(labels):
    if not labels:
        raise ValueError("bag has an empty label set")
    return sorted(labels)


def loss_ave(S, labels, W, cfg):
    pos_ids = _check_labels(labels)
    rep = aggregate_ave(S)
    F = W @ rep.r
    c_neg = select_negative(F, labels)
    grad_F = np.zeros(W.shape[0])
    pos = neg = 0.0
    for c in pos_ids:
        v, d = pos_term(F[c], cfg)
        pos += v
        grad_F[c] += d
    v, d = neg_term(F[c_neg], cfg)
    neg += len(pos_ids) * v
    grad_F[c_neg] += len(pos_ids) * d
    grad_W = np.outer(grad_F, rep.r)
    grad_S, _ = aggregator_backward(grad_F @ W, rep)
    return LossResult(pos + neg, grad_S, grad_W, pos, neg)


def _att_terms(S, labels, W, cfg, weights):
    """Shared body of the attention losses.

    ``weights(c_star, c_neg)`` yields (class, weight, kind) triples for one conditioning
    class; kind is "pos" or "neg" and selects the pair-term half.
    """
    grad_S = np.zeros_like(S)
    grad_W = np.zeros_like(W)
    total = pos = neg = 0.0
    for c_star in _check_labels(labels):
        rep = aggregate_att(S, c_star, W)
        F = W @ rep.r
        c_neg = select_negative(F, labels)
        grad_F = np.zeros(W.shape[0])
        for c, w, kind in weights(c_star, c_neg):
            v, d = pos_term(F[c], cfg) if kind == "pos" else neg_term(F[c], cfg)
            total += w * v
            if kind == "pos":
                pos += w * v
            else:
                neg += w * v
            grad_F[c] += w * d
        grad_W += np.outer(grad_F, rep.r)
        gS, gw = aggregator_backward(grad_F @ W, rep, W)
        grad_S += gS
        grad_W[c_star] += gw
    return LossResult(total, grad_S, grad_W, pos, neg)


def loss_att(S, labels, W, cfg):
    def weights(c_star, c_neg):
        return [(c_star, 1.0, "pos"), (c_neg, 1.0, "neg")]

    return _att_terms(np.asarray(S, dtype=np.float64), labels, W, cfg, weights)


def loss_cost_att(S, labels, W, cfg, nr):
    pos_ids = _check_labels(labels)

    def weights(c_star, c_neg):
        out = [(c_star, cfg.lam if c_star == nr else 1.0, "pos"), (c_neg, 1.0, "neg")]
        out += [(c, cfg.gamma, "pos") for c in pos_ids if c != c_star]
        if c_star != nr:
            out.append((nr, cfg.gamma, "neg"))
        return out

    return _att_terms(np.asarray(S, dtype=np.float64), labels, W, cfg, weights)


def bag_loss(S, labels, W, cfg, nr):
    if cfg.variant == "ave":
        return loss_ave(S, labels, W, cfg)
    if cfg.variant == "att":
        return loss_att(S, labels, W, cfg)
    return loss_cost_att(S, labels, W, cfg, nr)


def regularizer(W, cfg, nr):
    """eps * ||mean of non-NR rows|| + eta * mean of non-NR row norms, and its gradient."""
    C = W.shape[0]
    if C < 2:
        raise ValueError("regularizer needs at least one relation besides NR")
    keep = np.arange(C) != nr
    T = C - 1
    rows = W[keep]
    w_ave = rows.sum(axis=0) / T
    ave_norm = np.linalg.norm(w_ave)
    norms = np.linalg.norm(rows, axis=1)
    value = cfg.eps * ave_norm + cfg.eta * norms.sum() / T
    grad_rows = np.zeros_like(rows)
    if ave_norm > 0.0:
        grad_rows += cfg.eps * w_ave / (ave_norm * T)
    nz = norms > 0.0
    grad_rows[nz] += cfg.eta * rows[nz] / (norms[nz, None] * T)
    grad = np.zeros_like(W)
    grad[keep] = grad_rows
    return float(value), grad
