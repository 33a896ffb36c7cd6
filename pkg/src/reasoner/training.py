"""Optimization: combined loss, gradient clipping, AdaDelta, epoch loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, add, backward, cross_entropy, scale_shift
from .decoder import recovering_loss
from .model import forward

logger = logging.getLogger(__name__)


class NumericError(RuntimeError):
    """Raised when training produces a non-finite loss."""


@dataclass
class TrainConfig:
    alpha: float = 0.0
    epochs: int = 200
    clip_norm: float = 40.0
    batch_size: int = 32
    init_range: float = 0.1
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6
    seed: int = 0
    length_norm_aux: bool = True
    per_tensor_clip: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    reasoning_loss: float
    recovering_loss: float
    test_accuracy: float
    wall_ms: float
    max_grad_norm: float = 0.0

    def to_record(self):
        """The serialized per-epoch record (line-delimited JSON)."""
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "reasoning_loss": self.reasoning_loss,
            "recovering_loss": self.recovering_loss,
            "test_accuracy": self.test_accuracy,
            "wall_ms": self.wall_ms,
        }

    def to_line(self):
        return json.dumps(self.to_record())

    def key(self):
        """Deterministic fields only (wall time excluded), for comparisons.

        A NaN accuracy (no evaluation set) maps to None so two histories
        without evaluation compare equal.
        """
        accuracy = None if np.isnan(self.test_accuracy) else self.test_accuracy
        return (self.epoch, self.train_loss, self.reasoning_loss,
                self.recovering_loss, accuracy, self.max_grad_norm)


def combined_loss(model, rcfg, enc_inst, alpha, length_norm_aux=True):
    """alpha * reconstruction + (1 - alpha) * reasoning cross entropy.

    At alpha=0 (or without a decoder) the result is exactly the reasoning
    loss and the reconstruction pathway is never evaluated; at alpha=1 it is
    exactly the reconstruction loss. Returns (loss, reasoning, recovering)
    with the components as floats.
    """
    probs, q0, f_list = forward(model, rcfg, enc_inst)
    e_reason = cross_entropy(probs, enc_inst.target)
    use_aux = (alpha > 0 and model.decoder is not None
               and enc_inst.aux_question_ids is not None)
    if not use_aux:
        return e_reason, float(e_reason.values), 0.0
    pairs = [(f, ids) for f, ids in zip(f_list, enc_inst.aux_fact_ids)]
    pairs.append((q0, enc_inst.aux_question_ids))
    total, n_tokens = recovering_loss(model.decoder, pairs)
    e_rec = scale_shift(total, 1.0 / n_tokens) if length_norm_aux else total
    if alpha == 1.0:
        loss = e_rec
    else:
        loss = add(scale_shift(e_rec, alpha), scale_shift(e_reason, 1.0 - alpha))
    return loss, float(e_reason.values), float(e_rec.values)


def clip_gradients(grads, clip_norm, per_tensor=False):
    """Scale gradients in place so the l2 norm is at most ``clip_norm``.

    The norm is global across all arrays unless ``per_tensor``. Returns the
    post-clip global norm.
    """
    if clip_norm <= 0:
        raise ValueError("clip_norm must be positive")
    if per_tensor:
        for g in grads:
            norm = float(np.sqrt((g * g).sum()))
            if norm > clip_norm:
                g *= clip_norm / norm
    else:
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
        if norm > clip_norm:
            scale = clip_norm / norm
            for g in grads:
                g *= scale
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads)))


class AdadeltaState:
    """Per-parameter running averages E[g^2] and E[dx^2]."""

    def __init__(self, named_tensors):
        self.sq_grad = {name: np.zeros_like(t.values) for name, t in named_tensors}
        self.sq_delta = {name: np.zeros_like(t.values) for name, t in named_tensors}


def adadelta_step(named_tensors, state, rho, eps):
    """Standard AdaDelta update; there is no global learning rate."""
    for name, tensor in named_tensors:
        g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.values)
        eg2 = state.sq_grad[name]
        edx2 = state.sq_delta[name]
        eg2 *= rho
        eg2 += (1.0 - rho) * g * g
        dx = -np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps) * g
        edx2 *= rho
        edx2 += (1.0 - rho) * dx * dx
        tensor.values += dx


def train(model, rcfg, encoded, cfg, shuffle_rng, aux_mode="none", eval_fn=None):
    """Mini-batch training loop; returns the per-epoch metrics history."""
    if not encoded:
        raise ValueError("training set is empty")
    named = list(model.tensors())
    state = AdadeltaState(named)
    n = len(encoded)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        perm = shuffle_rng.permutation(n)
        loss_sum = reason_sum = rec_sum = 0.0
        max_norm = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = perm[start:start + cfg.batch_size]
            for _, tensor in named:
                tensor.zero_grad()
            for j in batch:
                with Tape() as tape:
                    loss, e_reason, e_rec = combined_loss(
                        model, rcfg, encoded[j], cfg.alpha,
                        length_norm_aux=cfg.length_norm_aux)
                if not np.isfinite(loss.values):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}, "
                        f"batch starting at {start} (instance {int(j)})")
                backward(loss, tape)
                loss_sum += float(loss.values)
                reason_sum += e_reason
                rec_sum += e_rec
            grads = [t.grad if t.grad is not None else np.zeros_like(t.values)
                     for _, t in named]
            norm = clip_gradients(grads, cfg.clip_norm, per_tensor=cfg.per_tensor_clip)
            max_norm = max(max_norm, norm)
            adadelta_step(named, state, cfg.adadelta_rho, cfg.adadelta_eps)
        accuracy = float("nan")
        if eval_fn is not None:
            accuracy = eval_fn()
        history.append(EpochMetrics(
            epoch=epoch,
            train_loss=loss_sum / n,
            reasoning_loss=reason_sum / n,
            recovering_loss=rec_sum / n,
            test_accuracy=accuracy,
            wall_ms=(time.perf_counter() - t0) * 1000.0,
            max_grad_norm=max_norm,
        ))
    return history


def evaluate_encoded(model, rcfg, encoded):
    """Accuracy over pre-encoded instances; unseen gold answers count wrong."""
    if not encoded:
        raise ValueError("cannot evaluate on an empty set")
    correct = 0
    for enc_inst in encoded:
        if enc_inst.target is None:
            continue
        probs, _, _ = forward(model, rcfg, enc_inst)
        correct += int(np.argmax(probs.values)) == enc_inst.target
    return correct / len(encoded)


def evaluate(classifier, instances):
    """Fraction of instances whose predicted class matches the gold answer."""
    instances = list(instances)
    if not instances:
        raise ValueError("cannot evaluate on an empty set")
    predictions = classifier.predict(instances)
    correct = 0
    unseen = set()
    for inst, pred in zip(instances, predictions):
        if inst.answer not in classifier.answers_:
            if inst.answer not in unseen:
                unseen.add(inst.answer)
                logger.warning("gold answer %r not in the answer space; counted wrong",
                               inst.answer)
            continue
        correct += inst.answer == pred
    return correct / len(instances)
