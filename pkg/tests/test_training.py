import math

import numpy as np
import pytest

from reasoner.autodiff import Tensor
from reasoner.data import Instance, TaskSpec, generate
from reasoner.model import (
    ReasonerClassifier,
    build_model,
    encode_instance,
)
from reasoner.answerer import AnswerSpace
from reasoner.encoder import Vocabulary
from reasoner.reasoning import ReasonerConfig
from reasoner.training import (
    AdadeltaState,
    EpochMetrics,
    TrainConfig,
    clip_gradients,
    combined_loss,
    evaluate,
    train,
)


def tiny_setup(aux_mode="original", hidden=4, embed=3, seed=0):
    instances = generate(TaskSpec(task="positional", seed=seed), 8)
    vocab = Vocabulary(sorted({t for i in instances
                               for s in i.facts + [i.question] for t in s}))
    answers = AnswerSpace.from_answers([i.answer for i in instances] + ["yes", "no"])
    rcfg = ReasonerConfig(layers=2, dnn_depth=1, layer_dims=[hidden, hidden])
    seeds = np.random.SeedSequence(seed).spawn(3)
    core, dec, shuffle = (np.random.default_rng(s) for s in seeds)
    model = build_model(core, dec, len(vocab), len(answers), rcfg,
                        embed, hidden, 0.1, aux_mode=aux_mode)
    encoded = [encode_instance(vocab, answers, i, aux_mode) for i in instances]
    return model, rcfg, encoded, shuffle


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(alpha=1.5)
    with pytest.raises(ValueError):
        TrainConfig(clip_norm=0.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def test_combined_loss_alpha_zero_is_pure_reasoning():
    model, rcfg, encoded, _ = tiny_setup(aux_mode="none")
    loss, e_reason, e_rec = combined_loss(model, rcfg, encoded[0], 0.0)
    assert float(loss.values) == e_reason
    assert e_rec == 0.0


def test_combined_loss_alpha_one_is_pure_reconstruction():
    model, rcfg, encoded, _ = tiny_setup()
    loss, _, e_rec = combined_loss(model, rcfg, encoded[0], 1.0)
    assert float(loss.values) == e_rec


def test_combined_loss_half_mix_hand_check():
    model, rcfg, encoded, _ = tiny_setup()
    loss, e_reason, e_rec = combined_loss(model, rcfg, encoded[0], 0.5)
    assert float(loss.values) == pytest.approx(0.5 * e_reason + 0.5 * e_rec,
                                               rel=1e-12)


def test_combined_loss_skips_aux_without_decoder():
    # a decoder-free model with alpha > 0 still yields the reasoning loss
    model, rcfg, encoded, _ = tiny_setup(aux_mode="none")
    loss, e_reason, e_rec = combined_loss(model, rcfg, encoded[0], 0.5)
    assert float(loss.values) == e_reason
    assert e_rec == 0.0


def test_length_norm_divides_by_token_count():
    model, rcfg, encoded, _ = tiny_setup()
    inst = encoded[0]
    _, _, normed = combined_loss(model, rcfg, inst, 1.0, length_norm_aux=True)
    _, _, raw = combined_loss(model, rcfg, inst, 1.0, length_norm_aux=False)
    n_tokens = sum(len(ids) + 1 for ids in inst.aux_fact_ids)
    n_tokens += len(inst.aux_question_ids) + 1
    assert raw == pytest.approx(normed * n_tokens, rel=1e-9)


def test_clip_halves_norm_80():
    g = [np.full(16, 20.0)]  # norm 80
    norm = clip_gradients(g, 40.0)
    assert norm == pytest.approx(40.0, rel=1e-12)
    np.testing.assert_allclose(g[0], np.full(16, 10.0), rtol=1e-12)


def test_clip_leaves_small_gradients_untouched():
    g = [np.full(4, 5.0)]  # norm 10
    before = g[0].copy()
    norm = clip_gradients(g, 40.0)
    assert norm == pytest.approx(10.0, rel=1e-12)
    np.testing.assert_array_equal(g[0], before)


def test_clip_preserves_direction():
    rng = np.random.default_rng(0)
    g = [rng.normal(size=12) * 100.0]
    before = g[0] / np.linalg.norm(g[0])
    clip_gradients(g, 1.0)
    after = g[0] / np.linalg.norm(g[0])
    np.testing.assert_allclose(after, before, atol=1e-12)


def test_clip_per_tensor_mode():
    g = [np.full(4, 5.0), np.full(16, 20.0)]  # norms 10 and 80
    clip_gradients(g, 40.0, per_tensor=True)
    np.testing.assert_array_equal(g[0], np.full(4, 5.0))
    np.testing.assert_allclose(g[1], np.full(16, 10.0), rtol=1e-12)


def test_adadelta_first_step_closed_form():
    """With zeroed accumulators: dx = -sqrt(eps) / sqrt((1-rho) g^2 + eps) * g."""
    from reasoner.training import adadelta_step

    rho, eps = 0.95, 1e-6
    g = np.array([0.5, -2.0, 0.0])
    t = Tensor(np.zeros(3), requires_grad=True)
    t.grad = g.copy()
    state = AdadeltaState([("w", t)])
    adadelta_step([("w", t)], state, rho, eps)
    expected = -math.sqrt(eps) / np.sqrt((1 - rho) * g * g + eps) * g
    np.testing.assert_allclose(t.values, expected, rtol=1e-12)


def test_adadelta_zero_gradient_decays_accumulators():
    from reasoner.training import adadelta_step

    t = Tensor(np.zeros(2), requires_grad=True)
    t.grad = np.array([1.0, -1.0])
    state = AdadeltaState([("w", t)])
    adadelta_step([("w", t)], state, 0.95, 1e-6)
    sq_before = state.sq_grad["w"].copy()
    t.grad = np.zeros(2)
    adadelta_step([("w", t)], state, 0.95, 1e-6)
    np.testing.assert_allclose(state.sq_grad["w"], 0.95 * sq_before, rtol=1e-12)


def test_adadelta_accumulators_stay_nonnegative():
    from reasoner.training import adadelta_step

    rng = np.random.default_rng(1)
    t = Tensor(np.zeros(5), requires_grad=True)
    state = AdadeltaState([("w", t)])
    for _ in range(1000):
        t.grad = rng.normal(size=5)
        adadelta_step([("w", t)], state, 0.95, 1e-6)
    assert np.all(state.sq_grad["w"] >= 0)
    assert np.all(state.sq_delta["w"] >= 0)
    assert np.all(np.isfinite(t.values))


def test_one_epoch_changes_parameters():
    model, rcfg, encoded, shuffle = tiny_setup()
    before = {n: t.values.copy() for n, t in model.tensors()}
    cfg = TrainConfig(alpha=0.5, epochs=1, batch_size=4)
    history = train(model, rcfg, encoded, cfg, shuffle, aux_mode="original")
    assert len(history) == 1
    changed = [n for n, t in model.tensors()
               if not np.array_equal(t.values, before[n])]
    assert changed


def test_fixed_seed_reproduces_history_exactly():
    keys = []
    for _ in range(2):
        model, rcfg, encoded, shuffle = tiny_setup(seed=7)
        cfg = TrainConfig(alpha=0.5, epochs=3, batch_size=4)
        history = train(model, rcfg, encoded, cfg, shuffle, aux_mode="original")
        keys.append([m.key() for m in history])
    assert keys[0] == keys[1]


def test_history_records_max_grad_norm_within_clip():
    model, rcfg, encoded, shuffle = tiny_setup()
    cfg = TrainConfig(alpha=0.5, epochs=2, batch_size=4, clip_norm=40.0)
    history = train(model, rcfg, encoded, cfg, shuffle, aux_mode="original")
    for m in history:
        assert m.max_grad_norm <= 40.0 + 1e-9


def test_training_loss_trends_down_on_tiny_set():
    model, rcfg, encoded, shuffle = tiny_setup()
    cfg = TrainConfig(alpha=0.0, epochs=15, batch_size=4)
    history = train(model, rcfg, encoded, cfg, shuffle)
    assert history[-1].train_loss < history[0].train_loss


def test_train_empty_set_is_error():
    model, rcfg, _, shuffle = tiny_setup()
    with pytest.raises(ValueError):
        train(model, rcfg, [], TrainConfig(epochs=1), shuffle)


def test_epoch_metrics_record_fields():
    m = EpochMetrics(epoch=3, train_loss=1.0, reasoning_loss=0.5,
                     recovering_loss=0.5, test_accuracy=0.8, wall_ms=12.5,
                     max_grad_norm=2.0)
    record = m.to_record()
    assert set(record) == {"epoch", "train_loss", "reasoning_loss",
                           "recovering_loss", "test_accuracy", "wall_ms"}
    a = m.key()
    b = EpochMetrics(**{**record, "wall_ms": 99.0}, max_grad_norm=2.0).key()
    assert a == b


def test_evaluate_untrained_two_class_near_chance():
    train_set = generate(TaskSpec(task="positional", seed=0), 60)
    test_set = generate(TaskSpec(task="positional", seed=1), 1000)
    clf = ReasonerClassifier(epochs=1, hidden_size=8, embed_dim=4, seed=0)
    clf.fit(train_set)
    acc = evaluate(clf, test_set)
    assert abs(acc - 0.5) < 0.05


def test_evaluate_empty_set_is_error():
    clf = ReasonerClassifier(epochs=1, hidden_size=8, embed_dim=4)
    clf.fit(generate(TaskSpec(task="positional", seed=0), 10))
    with pytest.raises(ValueError):
        evaluate(clf, [])


def test_evaluate_counts_unseen_answer_wrong(caplog):
    import logging

    clf = ReasonerClassifier(epochs=1, hidden_size=8, embed_dim=4)
    instances = generate(TaskSpec(task="positional", seed=0), 10)
    clf.fit(instances)
    odd = Instance(facts=instances[0].facts, question=instances[0].question,
                   answer="maybe")
    with caplog.at_level(logging.WARNING, logger="reasoner.training"):
        acc = evaluate(clf, [odd])
    assert acc == 0.0
    assert any("maybe" in r.message for r in caplog.records)
