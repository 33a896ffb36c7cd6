import math

import numpy as np
import pytest

from reasoner.answerer import (
    AnswerSpace,
    AnswererParams,
    classify,
    predicted_class,
    score_dynamic,
)
from reasoner.autodiff import Tensor


def test_answer_space_ordering_and_lookup():
    space = AnswerSpace.from_answers(["yes", "no", "yes"])
    assert space.classes == ["no", "yes"]
    assert space.index["yes"] == 1
    assert "no" in space and "maybe" not in space


def test_answer_space_rejects_bad_input():
    with pytest.raises(ValueError):
        AnswerSpace([])
    with pytest.raises(ValueError):
        AnswerSpace(["a", "a"])


def test_classify_zero_weights_uniform():
    params = AnswererParams(W_softmax=Tensor(np.zeros((4, 3))))
    probs = classify(params, Tensor([1.0, -2.0, 0.5])).values
    np.testing.assert_allclose(probs, np.full(4, 0.25), atol=1e-12)


def test_classify_probabilities_sum_to_one():
    rng = np.random.default_rng(0)
    params = AnswererParams(W_softmax=Tensor(rng.normal(size=(5, 4))))
    probs = classify(params, Tensor(rng.normal(size=4))).values
    assert np.all(probs > 0)
    assert abs(probs.sum() - 1.0) <= 1e-9


def test_classify_two_class_hand_case():
    # logits [ln 3, 0] -> probabilities [0.75, 0.25]
    params = AnswererParams(W_softmax=Tensor([[math.log(3.0), 0.0], [0.0, 0.0]]))
    probs = classify(params, Tensor([1.0, 0.0])).values
    np.testing.assert_allclose(probs, [0.75, 0.25], atol=1e-12)


def test_classify_dim_mismatch():
    from reasoner.autodiff import ShapeError

    params = AnswererParams(W_softmax=Tensor(np.zeros((2, 3))))
    with pytest.raises(ShapeError):
        classify(params, Tensor([1.0, 2.0]))


def test_predicted_class_tie_breaks_low():
    params = AnswererParams(W_softmax=Tensor(np.zeros((3, 2))))
    assert predicted_class(params, Tensor([0.4, 0.6])) == 0


def match_params(rng, q_dim=3, class_dim=2, hidden=4, init_range=0.5):
    return AnswererParams.init(rng, 2, q_dim, init_range,
                               match_hidden=hidden, class_dim=class_dim)


def test_score_dynamic_identical_candidates_identical_scores():
    rng = np.random.default_rng(1)
    params = match_params(rng)
    q = Tensor(rng.normal(size=3))
    w = rng.normal(size=2)
    scores, best = score_dynamic(params, q, [Tensor(w), Tensor(w.copy())])
    assert float(scores[0].values) == float(scores[1].values)
    assert best == 0


def test_score_dynamic_single_candidate_selected():
    rng = np.random.default_rng(2)
    params = match_params(rng)
    _, best = score_dynamic(params, Tensor(rng.normal(size=3)),
                            [Tensor(rng.normal(size=2))])
    assert best == 0


def test_score_dynamic_zero_weights_all_equal_tie_low():
    rng = np.random.default_rng(3)
    params = AnswererParams.init(rng, 2, 3, 0.0, match_hidden=4, class_dim=2)
    candidates = [Tensor(rng.normal(size=2)) for _ in range(3)]
    scores, best = score_dynamic(params, Tensor(rng.normal(size=3)), candidates)
    assert len({float(s.values) for s in scores}) == 1
    assert best == 0


def test_score_dynamic_permutation_equivariant():
    rng = np.random.default_rng(4)
    params = match_params(rng)
    q = Tensor(rng.normal(size=3))
    cands = [Tensor(rng.normal(size=2)) for _ in range(4)]
    base = [float(s.values) for s in score_dynamic(params, q, cands)[0]]
    perm = [2, 0, 3, 1]
    permuted = [float(s.values)
                for s in score_dynamic(params, q, [cands[i] for i in perm])[0]]
    assert permuted == [base[i] for i in perm]


def test_score_dynamic_empty_candidates():
    rng = np.random.default_rng(5)
    params = match_params(rng)
    with pytest.raises(ValueError):
        score_dynamic(params, Tensor(np.zeros(3)), [])
