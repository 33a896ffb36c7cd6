"""Answer selection: softmax over a fixed class set, plus a dynamic scorer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, add, concat, matmul, softmax, tanh, vsum


class AnswerSpace:
    """Ordered set of answer strings with an index map."""

    def __init__(self, classes):
        classes = list(classes)
        if not classes:
            raise ValueError("answer space must be nonempty")
        if len(set(classes)) != len(classes):
            raise ValueError("answer classes must be unique")
        self.classes = classes
        self.index = {c: i for i, c in enumerate(classes)}

    @classmethod
    def from_answers(cls, answers):
        return cls(sorted(set(answers)))

    def __len__(self):
        return len(self.classes)

    def __contains__(self, answer):
        return answer in self.index


@dataclass
class AnswererParams:
    """Softmax weights; optionally a small match DNN for dynamic classes."""

    W_softmax: Tensor
    match_W1: Tensor | None = None
    match_b1: Tensor | None = None
    match_w2: Tensor | None = None

    @classmethod
    def init(cls, rng, num_classes, q_dim, init_range, match_hidden=0, class_dim=0):
        def u(*shape):
            return Tensor(rng.uniform(-init_range, init_range, shape), requires_grad=True)

        params = cls(W_softmax=u(num_classes, q_dim))
        if match_hidden:
            params.match_W1 = u(match_hidden, q_dim + class_dim)
            params.match_b1 = u(match_hidden)
            params.match_w2 = u(1, match_hidden)
        return params

    def tensors(self, prefix=""):
        yield prefix + "W_softmax", self.W_softmax
        for name in ("match_W1", "match_b1", "match_w2"):
            t = getattr(self, name)
            if t is not None:
                yield prefix + name, t


def classify(params, q_final):
    """Probability vector over the fixed answer classes."""
    return softmax(matmul(params.W_softmax, q_final))


def predicted_class(params, q_final):
    """Argmax class index; ties break to the lowest index."""
    return int(np.argmax(classify(params, q_final).values))


def score_dynamic(params, q_final, candidate_embeddings):
    """Per-candidate scalar scores from a 1-hidden-layer match DNN.

    Returns (scores, argmax index); equal scores break to the lowest index.
    """
    if not candidate_embeddings:
        raise ValueError("need at least one candidate")
    if params.match_W1 is None:
        raise ValueError("answerer was built without a match network")
    scores = []
    for w_z in candidate_embeddings:
        hidden = tanh(add(matmul(params.match_W1, concat([q_final, w_z])), params.match_b1))
        scores.append(vsum(matmul(params.match_w2, hidden)))
    best = int(np.argmax([s.values for s in scores]))
    return scores, best
