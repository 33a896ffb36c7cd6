"""GRU decoder used only at training time, for reconstruction likelihoods.

From a sentence's layer-0 encoding it predicts the sentence back, token by
token with teacher forcing, yielding the negative log-likelihood that feeds
the auxiliary part of the training loss. The embedding table is shared with
the encoder; the GRU and output weights are the decoder's own.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import encoder as enc
from .autodiff import Tensor, add_n, cross_entropy, matmul, softmax

AUX_MODES = ("none", "original", "abstract")


@dataclass
class DecoderParams:
    """Decoder GRU weights plus a vocabulary-sized output projection.

    ``E`` is the encoder's embedding table (shared, optimized once via the
    encoder's parameter list).
    """

    E: Tensor
    W_xz: Tensor
    W_xr: Tensor
    W_xh: Tensor
    W_hz: Tensor
    W_hr: Tensor
    U_hh: Tensor
    W_out: Tensor

    @classmethod
    def init(cls, rng, embedding, hidden, vocab_size, init_range):
        def u(*shape):
            return Tensor(rng.uniform(-init_range, init_range, shape), requires_grad=True)

        embed_dim = embedding.values.shape[0]
        return cls(
            E=embedding,
            W_xz=u(hidden, embed_dim),
            W_xr=u(hidden, embed_dim),
            W_xh=u(hidden, embed_dim),
            W_hz=u(hidden, hidden),
            W_hr=u(hidden, hidden),
            U_hh=u(hidden, hidden),
            W_out=u(vocab_size, hidden),
        )

    @property
    def hidden_size(self):
        return self.W_hz.values.shape[0]

    def tensors(self, prefix=""):
        # E belongs to the encoder and is reported there.
        for name in ("W_xz", "W_xr", "W_xh", "W_hz", "W_hr", "U_hh", "W_out"):
            yield prefix + name, getattr(self, name)


def decode_nll(params, context, target_ids):
    """Teacher-forced negative log-likelihood of ``target_ids`` + EOS.

    The decoder starts from ``context``; at step t its input is the previous
    target token (BOS at t=0), so the loss never depends on its own samples.
    """
    if len(target_ids) == 0:
        raise ValueError("cannot decode an empty target sequence")
    inputs = [enc.BOS] + list(target_ids)
    targets = list(target_ids) + [enc.EOS]
    h = context
    losses = []
    for inp, tgt in zip(inputs, targets):
        h = enc.gru_step(params, inp, h)
        probs = softmax(matmul(params.W_out, h))
        losses.append(cross_entropy(probs, tgt))
    return add_n(losses) if len(losses) > 1 else losses[0]


def recovering_loss(params, sentence_pairs):
    """Total reconstruction NLL over (encoding, target ids) pairs.

    Covers the question and every fact of one instance; also returns the
    number of predicted tokens (targets plus EOS) so callers can normalize.
    """
    losses = []
    n_tokens = 0
    for context, target_ids in sentence_pairs:
        losses.append(decode_nll(params, context, target_ids))
        n_tokens += len(target_ids) + 1
    if not losses:
        raise ValueError("recovering loss needs at least one sentence")
    total = add_n(losses) if len(losses) > 1 else losses[0]
    return total, n_tokens
