"""End-to-end model assembly and a scikit-learn style classifier facade."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .answerer import AnswererParams, classify
from .data import build_answer_space, build_vocab
from .decoder import AUX_MODES, DecoderParams
from .encoder import EncoderParams, encode
from .reasoning import LayerParams, ReasonerConfig, reason


@dataclass
class EncodedInstance:
    """Token-id view of one instance, ready for the forward pass."""

    fact_ids: list
    question_ids: list
    target: int | None
    aux_fact_ids: list | None = None
    aux_question_ids: list | None = None


@dataclass
class ModelParams:
    """All trainable parameter groups of one model."""

    encoder: EncoderParams
    layers: list
    answerer: AnswererParams
    decoder: DecoderParams | None = None

    def tensors(self):
        yield from self.encoder.tensors("enc.")
        for i, layer in enumerate(self.layers):
            yield from layer.tensors(f"layer{i}.")
        yield from self.answerer.tensors("ans.")
        if self.decoder is not None:
            yield from self.decoder.tensors("dec.")


def build_model(core_rng, dec_rng, vocab_size, num_classes, rcfg,
                embed_dim, hidden, init_range, aux_mode):
    """Initialize all parameters, uniform in [-init_range, init_range].

    The decoder draws from its own RNG stream so that core initialization is
    identical with and without the auxiliary pathway.
    """
    enc = EncoderParams.init(core_rng, vocab_size, embed_dim, hidden, init_range)
    if not rcfg.layer_dims:
        rcfg.layer_dims = [hidden] * rcfg.layers
    layers = []
    q_dim = hidden
    for idx in range(rcfg.layers):
        last = idx == rcfg.layers - 1
        layers.append(LayerParams.init(
            core_rng, q_dim, hidden, rcfg.layer_dims[idx], rcfg.dnn_depth,
            init_range,
            update_facts=rcfg.update_facts and not last,
            gating=rcfg.pooling == "gating",
        ))
        q_dim = rcfg.layer_dims[idx]
    ans = AnswererParams.init(core_rng, num_classes, rcfg.layer_dims[-1], init_range)
    dec = None
    if aux_mode != "none":
        dec = DecoderParams.init(dec_rng, enc.E, hidden, vocab_size, init_range)
    return ModelParams(encoder=enc, layers=layers, answerer=ans, decoder=dec)


def encode_instance(vocab, answers, instance, aux_mode="none"):
    """Map an instance's tokens to ids; unknown tokens become UNK."""
    target = answers.index.get(instance.answer)
    enc_inst = EncodedInstance(
        fact_ids=[vocab.ids(f) for f in instance.facts],
        question_ids=vocab.ids(instance.question),
        target=target,
    )
    if aux_mode == "original":
        enc_inst.aux_fact_ids = enc_inst.fact_ids
        enc_inst.aux_question_ids = enc_inst.question_ids
    elif aux_mode == "abstract":
        if instance.abstract_facts is None:
            raise ValueError("abstract auxiliary mode needs abstractized instances")
        enc_inst.aux_fact_ids = [vocab.ids(f) for f in instance.abstract_facts]
        enc_inst.aux_question_ids = vocab.ids(instance.abstract_question)
    return enc_inst


def forward(model, rcfg, enc_inst):
    """Encode, reason, classify. Returns (probs, q0, layer-0 fact vectors)."""
    q0 = encode(model.encoder, enc_inst.question_ids)
    f_list = [encode(model.encoder, ids) for ids in enc_inst.fact_ids]
    q_final = reason(rcfg, model.layers, q0, f_list)
    return classify(model.answerer, q_final), q0, f_list


class ReasonerClassifier(BaseEstimator):
    """Question-answering classifier over (facts, question) episodes.

    fit/predict operate on lists of :class:`reasoner.data.Instance`. Training
    minimizes cross entropy on the answer class, optionally mixed with a
    sentence-reconstruction loss weighted by ``alpha``.
    """

    def __init__(self, layers=2, dnn_depth=2, pooling="max", hidden_size=64,
                 embed_dim=32, update_facts=False, aux="none", alpha=0.0,
                 epochs=50, batch_size=32, clip_norm=40.0, init_range=0.1,
                 rho=0.95, eps=1e-6, seed=0, length_norm_aux=True,
                 per_tensor_clip=False):
        self.layers = layers
        self.dnn_depth = dnn_depth
        self.pooling = pooling
        self.hidden_size = hidden_size
        self.embed_dim = embed_dim
        self.update_facts = update_facts
        self.aux = aux
        self.alpha = alpha
        self.epochs = epochs
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.init_range = init_range
        self.rho = rho
        self.eps = eps
        self.seed = seed
        self.length_norm_aux = length_norm_aux
        self.per_tensor_clip = per_tensor_clip

    def _reasoner_config(self):
        return ReasonerConfig(
            layers=self.layers, dnn_depth=self.dnn_depth, pooling=self.pooling,
            layer_dims=[self.hidden_size] * self.layers,
            update_facts=self.update_facts,
        )

    def fit(self, X, y=None, eval_set=None):
        """Train on instances ``X``; ``y`` may override the answer strings.

        ``eval_set`` is an optional instance list evaluated once per epoch for
        the metrics history (``history_``).
        """
        from . import training  # deferred: training imports this module

        if self.aux not in AUX_MODES:
            raise ValueError(f"unknown aux mode {self.aux!r}")
        instances = list(X)
        if not instances:
            raise ValueError("training set is empty")
        if y is not None:
            from dataclasses import replace
            instances = [replace(inst, answer=a) for inst, a in zip(instances, y)]

        self.config_ = self._reasoner_config()
        self.vocab_ = build_vocab(instances, aux_mode=self.aux)
        self.answers_ = build_answer_space(instances)
        self.classes_ = list(self.answers_.classes)

        seeds = np.random.SeedSequence(self.seed).spawn(3)
        core_rng, dec_rng, shuffle_rng = (np.random.default_rng(s) for s in seeds)
        self.model_ = build_model(
            core_rng, dec_rng, len(self.vocab_), len(self.answers_),
            self.config_, self.embed_dim, self.hidden_size, self.init_range,
            aux_mode=self.aux if self.alpha > 0 else "none",
        )

        train_cfg = training.TrainConfig(
            alpha=self.alpha, epochs=self.epochs, clip_norm=self.clip_norm,
            batch_size=self.batch_size, init_range=self.init_range,
            adadelta_rho=self.rho, adadelta_eps=self.eps, seed=self.seed,
            length_norm_aux=self.length_norm_aux,
            per_tensor_clip=self.per_tensor_clip,
        )
        encoded = [encode_instance(self.vocab_, self.answers_, inst, self.aux)
                   for inst in instances]
        eval_fn = None
        if eval_set is not None:
            eval_set = list(eval_set)
            encoded_eval = [encode_instance(self.vocab_, self.answers_, inst)
                            for inst in eval_set]
            eval_fn = lambda: training.evaluate_encoded(
                self.model_, self.config_, encoded_eval)
        self.history_ = training.train(
            self.model_, self.config_, encoded, train_cfg, shuffle_rng,
            aux_mode=self.aux, eval_fn=eval_fn,
        )
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("classifier is not fitted")

    def predict_proba(self, X):
        self._check_fitted()
        out = np.empty((len(X), len(self.answers_)))
        for i, inst in enumerate(X):
            enc_inst = encode_instance(self.vocab_, self.answers_, inst)
            probs, _, _ = forward(self.model_, self.config_, enc_inst)
            out[i] = probs.values
        return out

    def predict(self, X):
        """Answer strings; ties break to the lowest class index."""
        proba = self.predict_proba(X)
        return [self.classes_[int(i)] for i in np.argmax(proba, axis=1)]

    def score(self, X, y=None):
        """Per-question accuracy against ``y`` or the instances' answers."""
        from . import training

        if y is not None:
            from dataclasses import replace
            X = [replace(inst, answer=a) for inst, a in zip(X, y)]
        return training.evaluate(self, X)
