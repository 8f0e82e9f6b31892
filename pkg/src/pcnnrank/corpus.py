"""Mention ingestion, vocabulary, relation schema, bag assembly and position features."""
import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

PAD = "<PAD>"
UNK = "UNK"
NR_NAME = "NR"


class DataError(Exception):
    """Malformed or inconsistent input data. Carries the file and line when known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class Mention:
    tokens: tuple
    head_pos: int
    tail_pos: int
    entity_pair: tuple
    labels: frozenset = frozenset()


@dataclass
class Bag:
    entity_pair: tuple
    label_set: frozenset
    mentions: list = field(default_factory=list)


class RelationSchema:
    def __init__(self, names):
        # names[i] is the relation with id i
        self.names = list(names)
        if len(set(self.names)) != len(self.names):
            raise DataError("duplicate relation names in schema")
        if self.names.count(NR_NAME) != 1:
            raise DataError(f"relation schema must contain exactly one {NR_NAME}")
        self.ids = {n: i for i, n in enumerate(self.names)}
        self.nr = self.ids[NR_NAME]

    def __len__(self):
        return len(self.names)

    def __eq__(self, other):
        return isinstance(other, RelationSchema) and self.names == other.names

    @classmethod
    def load(cls, path):
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataError("expected 'name<TAB>id'", path, lineno)
                try:
                    pairs.append((int(parts[1]), parts[0]))
                except ValueError:
                    raise DataError(f"relation id {parts[1]!r} is not an integer", path, lineno) from None
        pairs.sort()
        if [i for i, _ in pairs] != list(range(len(pairs))):
            raise DataError("relation ids must be dense 0..C-1", path)
        return cls([n for _, n in pairs])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for i, n in enumerate(self.names):
                fh.write(f"{n}\t{i}\n")

    def digest(self):
        return hashlib.sha256("\n".join(self.names).encode("utf-8")).hexdigest()


class Vocabulary:
    """word <-> id map. Ids 0 and 1 are PAD and UNK."""

    def __init__(self, words, min_count=0):
        self.min_count = min_count
        self.id2word = [PAD, UNK] + [w for w in words if w not in (PAD, UNK)]
        self.word2id = {w: i for i, w in enumerate(self.id2word)}
        self.pad = 0
        self.unk = 1

    @classmethod
    def build(cls, mentions, min_count=100):
        counts = Counter(tok for m in mentions for tok in m.tokens)
        # most frequent first, ties alphabetical, so ids do not depend on input order
        kept = sorted((w for w, c in counts.items() if c > min_count), key=lambda w: (-counts[w], w))
        return cls(kept, min_count)

    def __len__(self):
        return len(self.id2word)

    def lookup(self, word):
        return self.word2id.get(word, self.unk)

    def digest(self):
        return hashlib.sha256("\n".join(self.id2word).encode("utf-8")).hexdigest()


class PositionFeaturizer:
    def __init__(self, clip=30):
        self.clip = clip
        self.size = 2 * clip + 1
        self.pad = self.size  # extra all-zero row

    @property
    def table_rows(self):
        return self.size + 1

    def __call__(self, distance):
        return int(min(max(distance, -self.clip), self.clip)) + self.clip


def _parse_record(obj, schema, max_len, path, lineno):
    try:
        tokens = obj["tokens"]
        head_pos = obj["head_pos"]
        tail_pos = obj["tail_pos"]
        head, tail = obj["head"], obj["tail"]
        relations = obj.get("relations", [])
    except (KeyError, TypeError) as exc:
        raise DataError(f"missing field {exc}", path, lineno) from None
    if not isinstance(tokens, list) or not tokens:
        raise DataError("tokens must be a non-empty array", path, lineno)
    for name, pos in (("head_pos", head_pos), ("tail_pos", tail_pos)):
        if not isinstance(pos, int) or isinstance(pos, bool):
            raise DataError(f"{name} must be an integer", path, lineno)
        if not 0 <= pos < len(tokens):
            raise DataError(f"{name}={pos} out of range for {len(tokens)} tokens", path, lineno)
    if head_pos == tail_pos:
        raise DataError("head_pos and tail_pos coincide", path, lineno)
    if len(tokens) > max_len:
        if max(head_pos, tail_pos) >= max_len:
            raise DataError(f"truncation to {max_len} tokens would drop an entity", path, lineno)
        tokens = tokens[:max_len]
    labels = set()
    for r in relations:
        if r not in schema.ids:
            raise DataError(f"unknown relation {r!r}", path, lineno)
        labels.add(schema.ids[r])
    return Mention(tuple(str(t) for t in tokens), head_pos, tail_pos, (str(head), str(tail)), frozenset(labels))


def load_mentions(path, schema, max_len=120):
    mentions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed JSON ({exc.msg})", path, lineno) from None
            mentions.append(_parse_record(obj, schema, max_len, path, lineno))
    return mentions


def build_bags(mentions, nr_id):
    """Group mentions by entity pair. Bags come out sorted by entity pair."""
    groups = {}
    for m in mentions:
        groups.setdefault(m.entity_pair, []).append(m)
    bags = []
    for pair in sorted(groups):
        ms = groups[pair]
        labels = set().union(*(m.labels for m in ms))
        if len(labels) > 1:
            labels.discard(nr_id)
        bags.append(Bag(pair, frozenset(labels), ms))
    return bags


def nr_proportion(items, nr_id):
    """Percentage of mentions whose label set is exactly {NR}. Accepts mentions or bags."""
    items = list(items)
    if not items:
        raise ValueError("nr_proportion of empty input")
    if isinstance(items[0], Bag):
        items = [m for b in items for m in b.mentions]
    nr = sum(1 for m in items if m.labels == {nr_id})
    return 100.0 * nr / len(items)


def load_embeddings(path, vocab, dim=None, rng=None, init_range=0.25):
    """Read a word2vec-style text file into a |vocab| x dim matrix.

    Words missing from the file get uniform [-init_range, init_range] rows drawn from
    ``rng``; the PAD row is zero.
    """
    found = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                header_dim = int(parts[1])
                if dim is None:
                    dim = header_dim
                elif dim != header_dim:
                    raise DataError(f"header dimension {header_dim} != expected {dim}", path, lineno)
                continue
            vec = parts[1:]
            if dim is None:
                dim = len(vec)
            if len(vec) != dim:
                raise DataError(f"expected {dim} values, found {len(vec)}", path, lineno)
            if parts[0] in vocab.word2id:
                try:
                    found[vocab.word2id[parts[0]]] = np.array(vec, dtype=np.float64)
                except ValueError:
                    raise DataError("non-numeric embedding value", path, lineno) from None
    if dim is None:
        raise DataError("embedding file is empty", path)
    if rng is None:
        raise ValueError("load_embeddings needs an Rng for out-of-file words")
    V = rng.uniform(-init_range, init_range, (len(vocab), dim))
    for i, vec in found.items():
        V[i] = vec
    V[vocab.pad] = 0.0
    return V


def featurize(m, vocab, posf, max_len=None):
    """Per-token (word id, position-to-head id, position-to-tail id) as an (L, 3) int array.

    With max_len the grid is padded with PAD ids to that length; otherwise it has one
    row per token.
    """
    n = len(m.tokens)
    length = n if max_len is None else max_len
    grid = np.empty((length, 3), dtype=np.int64)
    grid[:, 0] = vocab.pad
    grid[:, 1:] = posf.pad
    for i, tok in enumerate(m.tokens[:length]):
        grid[i, 0] = vocab.lookup(tok)
        grid[i, 1] = posf(i - m.head_pos)
        grid[i, 2] = posf(i - m.tail_pos)
    return grid


def statistics_report(name, mentions, bags, schema):
    """Plain-text table of counts and NR proportions, one split per call."""
    facts = sum(len(b.label_set - {schema.nr}) for b in bags)
    rows = [
        ("split", name),
        ("mentions", str(len(mentions))),
        ("entity pairs", str(len(bags))),
        ("relation facts", str(facts)),
        ("relations (incl. NR)", str(len(schema))),
        ("NR mentions (%)", f"{nr_proportion(mentions, schema.nr):.2f}"),
        ("NR bags (%)", f"{100.0 * sum(1 for b in bags if b.label_set == {schema.nr}) / len(bags):.2f}"),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


@dataclass
class EncodedBag:
    """A bag with its mentions already turned into index grids."""
    entity_pair: tuple
    label_set: frozenset
    grids: list  # (n_tokens, 3) int arrays, unpadded
    positions: np.ndarray  # (n_mentions, 2) head/tail token indices


def encode_bags(bags, vocab, posf):
    return [
        EncodedBag(b.entity_pair, b.label_set, [featurize(m, vocab, posf) for m in b.mentions],
                   np.array([(m.head_pos, m.tail_pos) for m in b.mentions], dtype=np.int64))
        for b in bags
    ]
