"""GRU encoder: token sequence -> fixed-length vector (last hidden state)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    embedding_column,
    matmul,
    mul,
    scale_shift,
    sigmoid,
    tanh,
)

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<unk>", "<bos>", "<eos>")


class Vocabulary:
    """Bijective token<->id map with four reserved ids."""

    def __init__(self, tokens):
        self.id_to_token = list(RESERVED_TOKENS)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        for tok in tokens:
            if tok not in self.token_to_id:
                self.token_to_id[tok] = len(self.id_to_token)
                self.id_to_token.append(tok)

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def id(self, token):
        """Id of ``token``, falling back to UNK."""
        return self.token_to_id.get(token, UNK)

    def ids(self, tokens):
        return [self.id(t) for t in tokens]

    def token(self, idx):
        return self.id_to_token[idx]


@dataclass
class EncoderParams:
    """Embedding table and GRU gate weights.

    E is [embed_dim x |V|] so that a token's vector is a column lookup,
    equivalent to multiplying E by a one-hot vector.
    """

    E: Tensor
    W_xz: Tensor
    W_xr: Tensor
    W_xh: Tensor
    W_hz: Tensor
    W_hr: Tensor
    U_hh: Tensor

    @classmethod
    def init(cls, rng, vocab_size, embed_dim, hidden, init_range):
        def u(*shape):
            return Tensor(rng.uniform(-init_range, init_range, shape), requires_grad=True)

        return cls(
            E=u(embed_dim, vocab_size),
            W_xz=u(hidden, embed_dim),
            W_xr=u(hidden, embed_dim),
            W_xh=u(hidden, embed_dim),
            W_hz=u(hidden, hidden),
            W_hr=u(hidden, hidden),
            U_hh=u(hidden, hidden),
        )

    @property
    def hidden_size(self):
        return self.W_hz.values.shape[0]

    def tensors(self, prefix=""):
        for name in ("E", "W_xz", "W_xr", "W_xh", "W_hz", "W_hr", "U_hh"):
            yield prefix + name, getattr(self, name)


def gru_step(params, token_id, h_prev):
    """One GRU update: gates z and r, candidate state, convex combination."""
    x = embedding_column(params.E, token_id)
    z = sigmoid(add(matmul(params.W_xz, x), matmul(params.W_hz, h_prev)))
    r = sigmoid(add(matmul(params.W_xr, x), matmul(params.W_hr, h_prev)))
    h_cand = tanh(add(matmul(params.W_xh, x), matmul(params.U_hh, mul(r, h_prev))))
    return add(mul(scale_shift(z, -1.0, 1.0), h_prev), mul(z, h_cand))


def encode(params, token_ids):
    """Fold gru_step over the sequence from a zero state; return the last state."""
    if len(token_ids) == 0:
        raise ValueError("cannot encode an empty token sequence")
    h = Tensor(np.zeros(params.hidden_size))
    for t in token_ids:
        h = gru_step(params, t, h)
    return h
