"""Seeded toy corpus in the mention-file layout, for desk-scale training runs.

Each positive relation has a handful of trigger words; a mention expresses a
relation by carrying one of its triggers between the two entity tokens. Some
relations are tied: a bag whose primary relation is the first of a tied pair
always carries the second one too. Positive bags also contain filler mentions
with no trigger (wrongly labelled sentences), and NR mentions occasionally
carry a stray trigger. Optionally, NR bags express relations outside the
schema through their own latent triggers.

The embedding file covers noise words and triggers; the triggers of one
relation lie close together.
"""
import json
import os
from dataclasses import asdict, dataclass

from .numeric import Rng

TIES = ((0, 1), (2, 3), (4, 5))


@dataclass
class SyntheticSpec:
    n_relations: int = 8
    n_train_bags: int = 2000
    n_test_bags: int = 500
    nr_fraction: float = 0.7
    noise_words: int = 300
    triggers_per_relation: int = 4
    min_tokens: int = 6
    max_tokens: int = 16
    filler_rate: float = 0.2  # mentions of a positive bag that express nothing
    stray_trigger_rate: float = 0.02  # NR mentions that carry a random trigger
    latent_relations: int = 0  # relations outside the schema; NR bags express them
    latent_rate: float = 0.0  # NR mentions that carry a latent-relation trigger
    dim: int = 50
    trigger_noise: float = 0.05  # spread of trigger vectors around their relation's centre
    seed: int = 7


def relation_names(spec):
    return ["NR"] + [f"/synthetic/rel_{i}" for i in range(spec.n_relations)]


def _bag_size(rng):
    u = rng.gen.random()
    return 1 if u < 0.5 else 2 if u < 0.75 else 3 if u < 0.9 else 4


def _sentence(rng, spec, head, tail, trigger):
    n = int(rng.gen.integers(spec.min_tokens, spec.max_tokens + 1))
    tokens = [f"w{int(rng.gen.zipf(1.3)) % spec.noise_words}" for _ in range(n)]
    h, t = (int(x) for x in rng.gen.choice(n, 2, replace=False))
    tokens[h], tokens[t] = head, tail
    if trigger is not None:
        lo, hi = min(h, t), max(h, t)
        if hi - lo >= 2:
            slot = int(rng.gen.integers(lo + 1, hi))
        else:
            candidates = [i for i in range(n) if i not in (h, t)]
            slot = candidates[int(rng.gen.integers(len(candidates)))]
        tokens[slot] = trigger
    return tokens, h, t


def _split(rng, spec, n_bags, prefix):
    names = relation_names(spec)
    ties = {a: b for a, b in TIES if b < spec.n_relations}
    n_nr = round(n_bags * spec.nr_fraction)
    kinds = [True] * n_nr + [False] * (n_bags - n_nr)
    kinds = [kinds[i] for i in rng.permutation(n_bags)]
    records = []
    for k, is_nr in enumerate(kinds):
        head, tail = f"{prefix}_h{k}", f"{prefix}_t{k}"
        latent = None
        if is_nr:
            labels = []
            if spec.latent_relations:
                latent = int(rng.gen.integers(spec.latent_relations))
        else:
            primary = int(rng.gen.integers(spec.n_relations))
            labels = [primary] + ([ties[primary]] if primary in ties else [])
        rel_names = [names[c + 1] for c in labels] or ["NR"]
        for _ in range(_bag_size(rng)):
            trigger = None
            if labels and rng.gen.random() >= spec.filler_rate:
                c = labels[int(rng.gen.integers(len(labels)))]
                trigger = f"t{c}_{int(rng.gen.integers(spec.triggers_per_relation))}"
            elif not labels and rng.gen.random() < spec.stray_trigger_rate:
                c = int(rng.gen.integers(spec.n_relations))
                trigger = f"t{c}_{int(rng.gen.integers(spec.triggers_per_relation))}"
            elif latent is not None and rng.gen.random() < spec.latent_rate:
                trigger = f"x{latent}_{int(rng.gen.integers(spec.triggers_per_relation))}"
            tokens, h, t = _sentence(rng, spec, head, tail, trigger)
            records.append({"head": head, "tail": tail, "relations": rel_names,
                            "tokens": tokens, "head_pos": h, "tail_pos": t})
    return records


def _counts(records):
    pairs = {}
    for r in records:
        pairs.setdefault((r["head"], r["tail"]), set()).update(r["relations"])
    nr = sum(1 for r in records if r["relations"] == ["NR"])
    return {
        "mentions": len(records),
        "bags": len(pairs),
        "relation_facts": sum(len(v - {"NR"}) for v in pairs.values()),
        "nr_percent": round(100.0 * nr / len(records), 2),
    }


def generate(out_dir, spec=None):
    """Write schema.tsv, train.jsonl, test.jsonl, embeddings.txt, manifest.json and
    synthetic.cfg into out_dir. Returns the manifest (exact counts per split)."""
    spec = spec or SyntheticSpec()
    os.makedirs(out_dir, exist_ok=True)
    rng = Rng(spec.seed)
    train = _split(rng.spawn(1), spec, spec.n_train_bags, "tr")
    test = _split(rng.spawn(2), spec, spec.n_test_bags, "te")

    with open(os.path.join(out_dir, "schema.tsv"), "w", encoding="utf-8") as fh:
        for i, n in enumerate(relation_names(spec)):
            fh.write(f"{n}\t{i}\n")
    for name, recs in (("train.jsonl", train), ("test.jsonl", test)):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            for r in recs:
                fh.write(json.dumps(r) + "\n")

    # pretrained vectors for noise words and triggers; triggers of one relation sit
    # near a shared centre, like synonyms in a real embedding space. Entities start random.
    erng = rng.spawn(3)
    rows = [(f"w{i}", erng.uniform(-0.25, 0.25, spec.dim)) for i in range(spec.noise_words)]
    groups = [f"t{c}" for c in range(spec.n_relations)] + [f"x{c}" for c in range(spec.latent_relations)]
    for g in groups:
        centre = erng.uniform(-0.25, 0.25, spec.dim)
        for k in range(spec.triggers_per_relation):
            rows.append((f"{g}_{k}", centre + erng.uniform(-spec.trigger_noise, spec.trigger_noise, spec.dim)))
    with open(os.path.join(out_dir, "embeddings.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"{len(rows)} {spec.dim}\n")
        for word, vec in rows:
            fh.write(word + " " + " ".join(f"{x:.6f}" for x in vec) + "\n")

    manifest = {"spec": asdict(spec), "train": _counts(train), "test": _counts(test)}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "synthetic.cfg"), "w", encoding="utf-8") as fh:
        fh.write(
            "# desk-scale run on the synthetic corpus\n"
            "train = train.jsonl\n"
            "test = test.jsonl\n"
            "schema = schema.tsv\n"
            "embeddings = embeddings.txt\n"
            "min_count = 0\n"
            "batch = 32\n"
            "epochs = 15\n"
        )
    return manifest
