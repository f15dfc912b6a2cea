import math

import numpy as np
import pytest

from gradcheck import central_diff, rel_close
from vladapt import errors
from vladapt.rng import Stream
from vladapt.scoring import BatchScores, backprop_scores, bce_loss, cosine, predict, score_batch


def test_cosine_hand_cases():
    assert cosine(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0])) == pytest.approx(1.0, abs=1e-12)
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0, abs=1e-12)
    assert cosine(np.array([1.0, 0.0]), np.array([0.6, 0.8])) == pytest.approx(0.6, abs=1e-12)


def test_cosine_zero_norm():
    with pytest.raises(errors.ZeroNormVector):
        cosine(np.zeros(3), np.ones(3))
    with pytest.raises(errors.ZeroNormVector):
        cosine(np.ones(3), np.zeros(3))


def test_cosine_scale_invariance():
    stream = Stream(0, "scale")
    for _ in range(50):
        u = stream.normal_array(5)
        v = stream.normal_array(5)
        a = 10.0 ** stream.uniform_range(-3, 3, 1)[0]
        b = 10.0 ** stream.uniform_range(-3, 3, 1)[0]
        assert cosine(a * u, b * v) == pytest.approx(cosine(u, v), abs=1e-12)


def test_score_batch_matches_elementwise_cosine():
    stream = Stream(3, "batch")
    U = stream.normal_array((2, 2))
    P = stream.normal_array((2, 2))
    N = stream.normal_array((2, 2))
    scores = score_batch(U, P, N)
    for i in range(2):
        for j in range(2):
            assert scores.s_pos[i, j] == pytest.approx(cosine(U[i], P[j]), abs=1e-12)
            assert scores.s_neg[i, j] == pytest.approx(cosine(U[i], N[j]), abs=1e-12)
            assert scores.logits[i, j] == pytest.approx(
                cosine(U[i], P[j]) - cosine(U[i], N[j]), abs=1e-12)


def test_score_batch_aligned_and_degenerate_pairs():
    img = np.array([[1.0, 0.0]])
    pos = np.array([[2.0, 0.0]])
    neg = np.array([[0.0, 3.0]])
    s = score_batch(img, pos, neg)
    assert s.s_pos[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert s.s_neg[0, 0] == pytest.approx(0.0, abs=1e-12)
    # identical prompt pair: logit exactly 0 for every image
    same = score_batch(Stream(1, "im").normal_array((4, 3)), np.ones((2, 3)), np.ones((2, 3)))
    assert np.allclose(same.logits, 0.0, atol=1e-15)


def test_score_batch_zero_norm_names_row():
    with pytest.raises(errors.ZeroNormVector) as exc:
        score_batch(np.array([[1.0, 0.0], [0.0, 0.0]]), np.ones((1, 2)), np.ones((1, 2)))
    assert "row 1" in str(exc.value)


def test_bce_loss_at_zero_logit():
    scores = BatchScores(s_pos=np.array([[0.5]]), s_neg=np.array([[0.5]]))
    loss, grad = bce_loss(scores, np.array([[1.0]]), np.array([1.0]))
    assert loss == pytest.approx(math.log(2.0), abs=1e-12)
    assert grad[0, 0] == pytest.approx(-0.5, abs=1e-12)


def test_bce_loss_scalar_sigmoid_oracle():
    # z=2, y=1 -> -log sigma(2); z=-2, y=0 -> same by symmetry
    scores = BatchScores(s_pos=np.array([[1.0]]), s_neg=np.array([[-1.0]]))
    loss_pos, _ = bce_loss(scores, np.array([[1.0]]), np.ones(1))
    expected = -math.log(1.0 / (1.0 + math.exp(-2.0)))
    assert loss_pos == pytest.approx(expected, abs=1e-12)
    assert loss_pos == pytest.approx(0.126928, abs=1e-6)
    scores_neg = BatchScores(s_pos=np.array([[-1.0]]), s_neg=np.array([[1.0]]))
    loss_neg, _ = bce_loss(scores_neg, np.array([[0.0]]), np.ones(1))
    assert loss_neg == pytest.approx(loss_pos, abs=1e-15)


def test_bce_mask_drops_columns():
    stream = Stream(9, "mask")
    s_pos = stream.uniform_array((3, 2)) * 2 - 1
    s_neg = stream.uniform_array((3, 2)) * 2 - 1
    y = (stream.uniform_array((3, 2)) < 0.5).astype(float)
    full = BatchScores(s_pos=s_pos, s_neg=s_neg)
    col1 = BatchScores(s_pos=s_pos[:, :1], s_neg=s_neg[:, :1])
    loss_masked, grad_masked = bce_loss(full, y, np.array([1.0, 0.0]))
    loss_col1, grad_col1 = bce_loss(col1, y[:, :1], np.array([1.0]))
    assert loss_masked == pytest.approx(loss_col1, abs=1e-15)
    assert np.array_equal(grad_masked[:, 0], grad_col1[:, 0])
    assert not grad_masked[:, 1].any()


def test_bce_empty_mask():
    scores = BatchScores(s_pos=np.zeros((1, 2)), s_neg=np.zeros((1, 2)))
    with pytest.raises(errors.EmptyMask):
        bce_loss(scores, np.zeros((1, 2)), np.zeros(2))


def test_bce_loss_nonnegative_and_ln2_at_zero():
    stream = Stream(4, "nonneg")
    for _ in range(20):
        n, c = 3, 4
        scores = BatchScores(s_pos=stream.uniform_array((n, c)) * 2 - 1,
                             s_neg=stream.uniform_array((n, c)) * 2 - 1)
        y = (stream.uniform_array((n, c)) < 0.5).astype(float)
        loss, _ = bce_loss(scores, y, np.ones(c))
        assert loss >= 0.0
    zeros = BatchScores(s_pos=np.zeros((5, 3)), s_neg=np.zeros((5, 3)))
    loss, _ = bce_loss(zeros, np.zeros((5, 3)), np.ones(3))
    assert loss == pytest.approx(3 * math.log(2.0), abs=1e-12)


def test_bce_gradient_identity_vs_finite_differences():
    stream = Stream(5, "bcefd")
    n, c = 2, 3
    z = stream.uniform_array((n, c)) * 4 - 2
    y = (stream.uniform_array((n, c)) < 0.5).astype(float)
    mask = np.array([1.0, 0.0, 1.0])
    s_pos = z.copy()
    s_neg = np.zeros_like(z)
    scores = BatchScores(s_pos=s_pos, s_neg=s_neg)
    _, grad = bce_loss(scores, y, mask)
    sigma = 1.0 / (1.0 + np.exp(-z))
    expected = (sigma - y) / n * mask[None, :]
    assert np.allclose(grad, expected, atol=1e-15)

    def loss():
        return bce_loss(BatchScores(s_pos=s_pos, s_neg=s_neg), y, mask)[0]

    fd = central_diff(loss, s_pos)
    assert rel_close(grad, fd, rel=1e-6, floor=1e-10)


def test_per_disease_normalization_flag():
    zeros = BatchScores(s_pos=np.zeros((2, 4)), s_neg=np.zeros((2, 4)))
    y = np.zeros((2, 4))
    loss_plain, _ = bce_loss(zeros, y, np.ones(4))
    loss_norm, _ = bce_loss(zeros, y, np.ones(4), normalize_per_disease=True)
    assert loss_norm == pytest.approx(loss_plain / 4.0, abs=1e-15)


def test_predict_rule_with_ties():
    scores = BatchScores(
        s_pos=np.array([[0.3, 0.2, -0.5]]),
        s_neg=np.array([[0.1, 0.2, 0.0]]),
    )
    assert predict(scores).tolist() == [[True, True, False]]


def test_predict_invariant_under_monotone_transform():
    stream = Stream(6, "mono")
    s_pos = stream.uniform_array((4, 3)) * 2 - 1
    s_neg = stream.uniform_array((4, 3)) * 2 - 1
    base = predict(BatchScores(s_pos=s_pos, s_neg=s_neg))
    for f in (lambda s: 3.0 * s + 1.0, np.tanh, lambda s: s ** 3):
        assert np.array_equal(base, predict(BatchScores(s_pos=f(s_pos), s_neg=f(s_neg))))


def test_backprop_scores_zero_gradient():
    stream = Stream(8, "bz")
    U, P, N = (stream.normal_array((3, 4)) for _ in range(3))
    dU, dP, dN = backprop_scores(U, P, N, np.zeros((3, 3)))
    assert not dU.any() and not dP.any() and not dN.any()


def test_cosine_gradient_tangent_to_sphere():
    # for parallel u, v the gradient of cos w.r.t. u is orthogonal to u
    u = np.array([1.0, 2.0, -1.0])
    v = 2.5 * u
    dU, _, _ = backprop_scores(u[None, :], v[None, :], np.array([[5.0, 5.0, 5.0]]) @ np.eye(3),
                               np.array([[1.0]]))
    assert abs(dU[0] @ u) < 1e-10


def test_backprop_scores_matches_finite_differences():
    stream = Stream(10, "bpfd")
    n, c, dim = 2, 2, 3
    U = stream.uniform_range(-1, 1, (n, dim)) + 2.0
    P = stream.uniform_range(-1, 1, (c, dim)) - 2.0
    N = stream.uniform_range(-1, 1, (c, dim)) + 1.5
    G = stream.uniform_range(-1, 1, (n, c))
    dU, dP, dN = backprop_scores(U, P, N, G)

    def loss():
        scores = score_batch(U, P, N)
        return float((scores.logits * G).sum())

    assert rel_close(dU, central_diff(loss, U), rel=1e-4, floor=1e-8)
    assert rel_close(dP, central_diff(loss, P), rel=1e-4, floor=1e-8)
    assert rel_close(dN, central_diff(loss, N), rel=1e-4, floor=1e-8)


def test_logit_scale_invariance_end_to_end():
    stream = Stream(12, "scaleinv")
    U, P, N = (stream.normal_array((3, 4)) for _ in range(3))
    base = score_batch(U, P, N)
    scaled = score_batch(2.5 * U, 0.3 * P, 7.0 * N)
    assert np.allclose(base.logits, scaled.logits, atol=1e-12)
    assert np.array_equal(predict(base), predict(scaled))
