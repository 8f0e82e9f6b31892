"""Held-out evaluation: score every (entity pair, relation) candidate, rank, and measure."""
import logging
from dataclasses import dataclass

import numpy as np

from .encoder import encode
from .numeric import softmax

log = logging.getLogger(__name__)

PN_LEVELS = (100, 200, 300, 400, 500)


@dataclass(frozen=True)
class EvalRecord:
    entity_pair: tuple
    relation: int
    score: float


@dataclass
class PRCurve:
    precision: np.ndarray
    recall: np.ndarray
    scores: np.ndarray
    n_gold: int

    @property
    def points(self):
        return list(zip(self.precision.tolist(), self.recall.tolist()))


def bag_scores(S, W, variant, att_scale=0.5):
    """Score of every relation for one bag's sentence embeddings S.

    Average aggregation gives one representation for all relations; attention
    recomputes the representation conditioned on each candidate relation.
    """
    if variant == "ave":
        return W @ S.mean(axis=0)
    scores = np.empty(W.shape[0])
    for c in range(W.shape[0]):
        alpha = softmax(att_scale * (S @ W[c]))
        scores[c] = W[c] @ (alpha @ S)
    return scores


def score_bags(bags, model, variant, chunk=256):
    """EvalRecords for every bag and every non-NR relation, in eval mode (no dropout)."""
    records = []
    usable = [b for b in bags if len(b.grids)]
    skipped = len(bags) - len(usable)
    if skipped:
        log.warning("skipped %d empty bags", skipped)
    for lo in range(0, len(usable), chunk):
        part = usable[lo:lo + chunk]
        grids = [g for b in part for g in b.grids]
        positions = np.concatenate([b.positions for b in part])
        S = encode(grids, positions, model.enc, train=False).s
        start = 0
        for b in part:
            n = len(b.grids)
            scores = bag_scores(S[start:start + n], model.W, variant)
            start += n
            for c in range(model.W.shape[0]):
                if c != model.nr:
                    records.append(EvalRecord(b.entity_pair, c, float(scores[c])))
    return records


def gold_facts(bags, nr):
    return {(b.entity_pair, c) for b in bags for c in b.label_set if c != nr}


def rank(records):
    """Sort by score descending; ties by entity pair, then relation id."""
    return sorted(records, key=lambda r: (-r.score, r.entity_pair, r.relation))


def hit_sequence(ranked, gold):
    seen = set()
    hits = np.zeros(len(ranked), dtype=bool)
    for i, r in enumerate(ranked):
        key = (r.entity_pair, r.relation)
        if key in gold and key not in seen:
            seen.add(key)
            hits[i] = True
    return hits


def pr_curve(records, gold):
    if not gold:
        raise ValueError("gold fact set is empty")
    ranked = rank(records)
    cum = np.cumsum(hit_sequence(ranked, gold))
    k = np.arange(1, len(ranked) + 1)
    return PRCurve(cum / k, cum / len(gold), np.array([r.score for r in ranked]), len(gold))


def precision_at(records, gold, n):
    """Precision (percent) among the top n ranked records."""
    if n > len(records):
        raise ValueError(f"P@{n} requested but only {len(records)} records")
    if n < 1:
        raise ValueError("n must be positive")
    hits = hit_sequence(rank(records)[:n], gold)
    return float(100.0 * hits.sum() / n)


def precision_at_levels(records, gold, levels=PN_LEVELS):
    """P@N for every level plus their mean."""
    ranked = rank(records)
    if max(levels) > len(ranked):
        raise ValueError(f"P@{max(levels)} requested but only {len(ranked)} records")
    cum = np.cumsum(hit_sequence(ranked, gold))
    values = [float(100.0 * cum[n - 1] / n) for n in levels]
    return values, float(np.mean(values))


def f_measure(p, r):
    if p == 0 and r == 0:
        log.warning("F-measure with precision = recall = 0; returning 0")
        return 0.0
    return 2.0 * p * r / (p + r)


def max_f_measure(curve):
    """Best F over all cut-offs of the ranking."""
    p, r = curve.precision, curve.recall
    denom = p + r
    f = np.divide(2 * p * r, denom, out=np.zeros_like(p), where=denom > 0)
    return float(f.max()) if len(f) else 0.0


def write_pr_csv(path, curve):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rank,precision,recall,score\n")
        for i, (p, r, s) in enumerate(zip(curve.precision, curve.recall, curve.scores), 1):
            fh.write(f"{i},{p:.6f},{r:.6f},{s:.6f}\n")


def write_pn_txt(path, values, mean, levels=PN_LEVELS):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(f"P@{n}" for n in levels) + " mean\n")
        fh.write(" ".join(f"{v:.1f}" for v in values) + f" {mean:.1f}\n")
