"""Mini-batch SGD over bags, plus the finite-difference gradient check."""
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .aggregator import aggregate_att, aggregate_ave
from .encoder import encode, encoder_backward
from .losses import VARIANTS, LossConfig, bag_loss, regularizer
from .model import Model, ModelShape, init_params  # noqa: F401  (re-exported)
from .numeric import Rng, finite_diff_grad, relative_error


class NumericError(Exception):
    """Raised when training produces a non-finite loss."""


@dataclass
class TrainConfig:
    batch: int = 160
    lr: float = 0.03
    epochs: int = 1
    seed: int = 1
    p_keep: float = 0.5
    shuffle: bool = True
    loss: LossConfig = field(default_factory=LossConfig)


@dataclass
class EpochReport:
    epoch: int
    mean_loss: float
    pos_term: float
    neg_term: float
    reg_term: float
    wall_seconds: float
    val_f: float = None


def batch_loss(model, bags, cfg, rng=None, train=True):
    """Summed loss over ``bags`` and the gradients of that sum.

    Returns (data_loss, pos, neg, enc_grads, grad_W). The regulariser is not included.
    """
    grids = [g for b in bags for g in b.grids]
    positions = np.concatenate([b.positions for b in bags])
    enc = encode(grids, positions, model.enc, rng, cfg.p_keep, train)
    grad_S = np.zeros_like(enc.s)
    grad_W = np.zeros_like(model.W)
    total = pos = neg = 0.0
    start = 0
    for b in bags:
        n = len(b.grids)
        res = bag_loss(enc.s[start:start + n], b.label_set, model.W, cfg.loss, model.nr)
        if not math.isfinite(res.loss):
            raise NumericError(f"non-finite loss on bag {b.entity_pair}")
        total += res.loss
        pos += res.pos
        neg += res.neg
        grad_S[start:start + n] = res.grad_S
        grad_W += res.grad_W
        start += n
    enc_grads = encoder_backward(grad_S, enc.cache, model.enc)
    return total, pos, neg, enc_grads, grad_W


def sgd_step(model, enc_grads, grad_W, lr, scale, reg_grad=None):
    """theta <- theta - lr * (scale * data gradient + regulariser gradient)."""
    e = model.enc
    step = lr * scale
    e.V[enc_grads.V_ids] -= step * enc_grads.V_rows
    e.P_head -= step * enc_grads.P_head
    e.P_tail -= step * enc_grads.P_tail
    e.K -= step * enc_grads.K
    e.b -= step * enc_grads.b
    gW = scale * grad_W if reg_grad is None else scale * grad_W + reg_grad
    model.W -= lr * gW
    # PAD rows are fixed zeros
    e.V[0] = 0.0
    e.P_head[-1] = 0.0
    e.P_tail[-1] = 0.0


def train_epoch(bags, model, cfg, epoch=1, validate=None):
    """One pass over ``bags`` in place on ``model``.

    ``validate(model)``, when given, returns a validation F-measure for the report.
    """
    if not bags:
        raise ValueError("no training bags")
    t0 = time.perf_counter()
    rng = Rng(cfg.seed).spawn(epoch)
    order = rng.permutation(len(bags)) if cfg.shuffle else np.arange(len(bags))
    total = pos = neg = reg = 0.0
    n_batches = 0
    for lo in range(0, len(bags), cfg.batch):
        batch = [bags[i] for i in order[lo:lo + cfg.batch]]
        loss, p, q, enc_grads, grad_W = batch_loss(model, batch, cfg, rng, train=True)
        reg_grad = None
        if cfg.loss.regularize:
            r, reg_grad = regularizer(model.W, cfg.loss, model.nr)
            reg += r
        total += loss
        pos += p
        neg += q
        n_batches += 1
        sgd_step(model, enc_grads, grad_W, cfg.lr, 1.0 / len(batch), reg_grad)
    n = len(bags)
    mean_reg = reg / n_batches
    val_f = validate(model) if validate is not None else None
    return EpochReport(epoch, total / n + mean_reg, pos / n, neg / n, mean_reg,
                       time.perf_counter() - t0, val_f)


# ---------------------------------------------------------------- gradient check

@dataclass
class GradCheckResult:
    variant: str
    regularize: bool
    trials: int
    max_rel_error: float
    worst_group: str
    per_group: dict
    rejected: int

    @property
    def passed(self):
        return self.max_rel_error < GRADCHECK_TOL


GRADCHECK_TOL = 1e-4
KINK_MARGIN = 1e-3


def _random_instance(rng, variant):
    C = int(rng.gen.integers(3, 7))
    shape = ModelShape(vocab_size=int(rng.gen.integers(4, 9)), n_relations=C, d_word=int(rng.gen.integers(2, 5)),
                       d_pos=2, n_kernels=int(rng.gen.integers(1, 4)), window=int(rng.gen.choice([1, 2, 3])),
                       pos_clip=3)
    model = init_params(shape, int(rng.gen.integers(2**31)), nr=0)
    # widen the ranges so scores spread beyond the small Glorot init
    e = model.enc
    e.V[1:] = rng.uniform(-1, 1, e.V[1:].shape)
    e.P_head[:-1] = rng.uniform(-1, 1, e.P_head[:-1].shape)
    e.P_tail[:-1] = rng.uniform(-1, 1, e.P_tail[:-1].shape)
    e.K[:] = rng.uniform(-1, 1, e.K.shape)
    e.b[:] = rng.uniform(-0.5, 0.5, e.b.shape)
    model.W[:] = rng.uniform(-1.5, 1.5, model.W.shape)

    from .corpus import EncodedBag
    grids, positions = [], []
    for _ in range(int(rng.gen.integers(1, 4))):
        n = int(rng.gen.integers(2, 8))
        h, t = (int(x) for x in rng.gen.choice(n, 2, replace=False))
        g = np.empty((n, 3), dtype=np.int64)
        g[:, 0] = rng.gen.integers(1, shape.vocab_size, n)
        g[:, 1] = np.clip(np.arange(n) - h, -3, 3) + 3
        g[:, 2] = np.clip(np.arange(n) - t, -3, 3) + 3
        grids.append(g)
        positions.append((h, t))
    if rng.gen.random() < 0.3:
        labels = frozenset([0])
    else:
        k = int(rng.gen.integers(1, min(3, C - 2) + 1))
        labels = frozenset(int(c) for c in rng.gen.choice(np.arange(1, C), k, replace=False))
    bag = EncodedBag(("h", "t"), labels, grids, np.array(positions, dtype=np.int64))
    loss = LossConfig(variant=variant, lam=float(rng.gen.uniform(0, 1)), gamma=float(rng.gen.uniform(0.2, 2)),
                      eps=float(rng.gen.uniform(0.01, 0.5)), eta=float(rng.gen.uniform(0.01, 0.5)))
    return model, bag, loss


def _kink_distance(model, bag, loss_cfg):
    """Smallest distance of this instance to a point where the loss is not differentiable."""
    enc = encode(bag.grids, bag.positions, model.enc, train=False)
    dists = [np.inf]
    c = enc.cache
    for i in range(len(bag.grids)):
        o, n, p1, p2 = c["offsets"][i], c["lengths"][i], c["p1"][i], c["p2"][i]
        for lo, hi in ((0, p1 + 1), (p1 + 1, p2 + 1), (p2 + 1, n)):
            if hi - lo >= 2:
                seg = np.sort(c["m"][o + lo:o + hi], axis=0)
                dists.append(float((seg[-1] - seg[-2]).min()))
    if loss_cfg.variant == "ave":
        reps = [aggregate_ave(enc.s).r]
    else:
        reps = [aggregate_att(enc.s, cc, model.W).r for cc in sorted(bag.label_set)]
    for r in reps:
        F = model.W @ r
        dists.append(float(np.abs(loss_cfg.sigma_pos - F).min()))
        dists.append(float(np.abs(loss_cfg.sigma_neg + F).min()))
        neg = np.sort([F[k] for k in range(len(F)) if k not in bag.label_set])
        if len(neg) >= 2:
            dists.append(float(neg[-1] - neg[-2]))
    return min(dists)


def analytic_gradients(model, bag, cfg):
    """Loss (with regulariser when enabled) and dense gradients per parameter group."""
    loss, _, _, eg, gW = batch_loss(model, [bag], cfg, train=False)
    if cfg.loss.regularize:
        r, rg = regularizer(model.W, cfg.loss, model.nr)
        loss += r
        gW = gW + rg
    grads = {"V": eg.dense_V(model.enc.V.shape[0]), "P_head": eg.P_head, "P_tail": eg.P_tail,
             "K": eg.K, "b": eg.b, "W": gW}
    return loss, grads


def _objective(model, bag, cfg):
    loss, _, _, _, _ = batch_loss(model, [bag], cfg, train=False)
    if cfg.loss.regularize:
        loss += regularizer(model.W, cfg.loss, model.nr)[0]
    return loss


def grad_check(variant, regularize, trials=20, seed=0, h=1e-4):
    """Compare analytic and central-difference gradients on random small bags.

    PAD rows of V and the position tables are constants, so they are left out.
    Instances closer than KINK_MARGIN to a hinge, pooling or argmax kink are redrawn.
    """
    rng = Rng(seed).spawn(VARIANTS.index(variant) * 2 + int(regularize))
    per_group = {}
    rejected = 0
    done = 0
    while done < trials:
        model, bag, loss_cfg = _random_instance(rng, variant)
        loss_cfg.regularize = regularize
        cfg = TrainConfig(p_keep=1.0, loss=loss_cfg)
        if _kink_distance(model, bag, loss_cfg) < KINK_MARGIN:
            rejected += 1
            continue
        _, grads = analytic_gradients(model, bag, cfg)
        params = model.arrays()
        for name in Model.PARAM_NAMES:
            arr = params[name]

            def f(theta, arr=arr):
                saved = arr.copy()
                arr[...] = theta
                try:
                    return _objective(model, bag, cfg)
                finally:
                    arr[...] = saved

            num = finite_diff_grad(f, arr, h)
            err = relative_error(grads[name], num)
            if name == "V":
                err[0] = 0.0
            elif name in ("P_head", "P_tail"):
                err[-1] = 0.0
            per_group[name] = max(per_group.get(name, 0.0), float(err.max()))
        done += 1
    worst = max(per_group, key=per_group.get)
    return GradCheckResult(variant, regularize, trials, per_group[worst], worst, per_group, rejected)
