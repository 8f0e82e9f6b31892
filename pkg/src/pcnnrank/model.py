"""Parameter container and initialisation."""
from dataclasses import asdict, dataclass

import numpy as np

from .encoder import EncoderParams
from .numeric import Rng


@dataclass
class ModelShape:
    vocab_size: int
    n_relations: int
    d_word: int = 50
    d_pos: int = 5
    n_kernels: int = 230
    window: int = 3
    pos_clip: int = 30

    @property
    def d_token(self):
        return self.d_word + 2 * self.d_pos

    @property
    def d_sentence(self):
        return 3 * self.n_kernels

    @property
    def pos_rows(self):
        return 2 * self.pos_clip + 2  # distances plus the PAD row

    def to_dict(self):
        return asdict(self)


@dataclass
class Model:
    enc: EncoderParams
    W: np.ndarray  # class embeddings, (n_relations, d_sentence)
    nr: int

    PARAM_NAMES = ("V", "P_head", "P_tail", "K", "b", "W")

    def arrays(self):
        e = self.enc
        return {"V": e.V, "P_head": e.P_head, "P_tail": e.P_tail, "K": e.K, "b": e.b, "W": self.W}

    def copy(self):
        return Model(self.enc.copy(), self.W.copy(), self.nr)


def glorot_bound(fan_in, fan_out):
    return np.sqrt(6.0 / (fan_in + fan_out))


def init_params(shape, seed, pretrained_V=None, nr=0, word_init_range=0.25):
    """Seeded initialisation. Uniform Glorot ranges for P, K and W; zero bias; zero PAD rows.

    ``pretrained_V`` (vocab x d_word) is copied in; without it V is uniform in
    [-word_init_range, word_init_range].
    """
    rng = Rng(seed)
    if pretrained_V is not None:
        V = np.array(pretrained_V, dtype=np.float64)
        if V.shape != (shape.vocab_size, shape.d_word):
            raise ValueError(f"pretrained embeddings have shape {V.shape}, "
                             f"expected {(shape.vocab_size, shape.d_word)}")
    else:
        V = rng.uniform(-word_init_range, word_init_range, (shape.vocab_size, shape.d_word))
    V[0] = 0.0
    bp = glorot_bound(shape.pos_rows, shape.d_pos)
    P_head = rng.uniform(-bp, bp, (shape.pos_rows, shape.d_pos))
    P_tail = rng.uniform(-bp, bp, (shape.pos_rows, shape.d_pos))
    P_head[-1] = 0.0
    P_tail[-1] = 0.0
    bk = glorot_bound(shape.window * shape.d_token, shape.n_kernels)
    K = rng.uniform(-bk, bk, (shape.n_kernels, shape.window, shape.d_token))
    b = np.zeros(shape.n_kernels)
    bw = glorot_bound(shape.d_sentence, shape.n_relations)
    W = rng.uniform(-bw, bw, (shape.n_relations, shape.d_sentence))
    return Model(EncoderParams(V, P_head, P_tail, K, b), W, nr)
