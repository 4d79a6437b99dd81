import math

import numpy as np
import pytest

from xsrank import autodiff as ad
from xsrank import losses
from xsrank.metrics import spearman

from gradcheck import max_rel_err, numeric_gradient


def oracle_loss(scores, returns):
    """Term-by-term double loop over all ordered off-diagonal pairs."""
    n = len(scores)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            z = math.tanh(scores[i] - scores[j]) * math.tanh(returns[i] - returns[j])
            total += math.log1p(math.exp(-z))
    return total / (n * (n - 1))


def test_matches_double_loop_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        s = rng.normal(size=n) * rng.uniform(0.1, 3.0)
        y = rng.normal(size=n) * rng.uniform(0.01, 1.0)
        assert abs(losses.rank_loss_value(s, y) - oracle_loss(s, y)) <= 1e-12


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(2, 9))
        s = rng.normal(size=n)
        y = rng.normal(size=n)
        g = losses.rank_loss_gradient(s, y)
        fd = numeric_gradient(lambda: losses.rank_loss_value(s, y), {"s": s})["s"]
        assert max_rel_err(g, fd) < 1e-6


def test_gradient_sign_pushes_reordering():
    # stock 0 has the higher return but the lower score; raising its score
    # must lower the loss, so the partial derivative is negative
    g = losses.rank_loss_gradient([-1.0, 1.0], [1.0, -1.0])
    assert g[0] < 0 < g[1]


def test_all_equal_returns_is_log2_with_zero_gradient():
    rng = np.random.default_rng(3)
    s = rng.normal(size=6)
    y = np.full(6, 0.02)
    loss = losses.rank_loss_value(s, y)
    assert abs(loss - math.log(2.0)) <= 2e-15
    assert np.all(losses.rank_loss_gradient(s, y) == 0.0)


def test_shift_invariance_exact():
    # dyadic scores and shifts make every f_i + c exactly representable, so
    # the pairwise differences, and hence the loss, are bit-identical
    s = np.array([3.0, -1.0, 5.0, 2.0, -4.0]) / 8.0
    y = np.array([0.01, -0.02, 0.005, 0.03, -0.01])
    base = losses.rank_loss_value(s, y)
    for c in (0.5, 3.0, -7.25, 1024.0):
        assert losses.rank_loss_value(s + c, y) == base


def test_shift_invariance_generic_floats():
    rng = np.random.default_rng(19)
    s = rng.normal(size=8)
    y = rng.normal(size=8) * 0.05
    base = losses.rank_loss_value(s, y)
    for c in rng.normal(size=5):
        assert abs(losses.rank_loss_value(s + c, y) - base) <= 1e-13


def test_saturation_limits():
    big = np.array([-1000.0, 1000.0])
    assert losses.rank_loss_value(big, big) == losses.PAIR_TERM_AGREE_LIMIT
    assert losses.rank_loss_value(big, -big) == losses.PAIR_TERM_DISAGREE_LIMIT
    assert abs(losses.PAIR_TERM_AGREE_LIMIT - 0.313262) < 1e-6
    assert abs(losses.PAIR_TERM_DISAGREE_LIMIT - 1.313262) < 1e-6


def test_loss_respects_pair_term_bounds():
    rng = np.random.default_rng(23)
    for _ in range(50):
        n = int(rng.integers(2, 12))
        loss = losses.rank_loss_value(rng.normal(size=n), rng.normal(size=n))
        assert losses.PAIR_TERM_AGREE_LIMIT <= loss <= losses.PAIR_TERM_DISAGREE_LIMIT


def test_joint_permutation_symmetry():
    rng = np.random.default_rng(29)
    s = rng.normal(size=9)
    y = rng.normal(size=9)
    base = losses.rank_loss_value(s, y)
    for _ in range(5):
        p = rng.permutation(9)
        assert abs(losses.rank_loss_value(s[p], y[p]) - base) <= 1e-14


def test_fused_and_composed_routes_agree():
    rng = np.random.default_rng(31)
    for _ in range(10):
        n = int(rng.integers(2, 9))
        s0 = rng.normal(size=(n, 1))
        y = rng.normal(size=n) * 0.1

        tape_a = ad.Tape()
        sa = tape_a.leaf(s0.copy())
        la = losses.pairwise_rank_loss(sa, y)
        tape_a.backward(la)

        tape_b = ad.Tape()
        sb = tape_b.leaf(s0.copy())
        lb = losses.pairwise_rank_loss_composed(sb, y)
        tape_b.backward(lb)

        assert abs(float(la.data) - float(lb.data)) <= 1e-14
        assert np.max(np.abs(sa.grad - sb.grad)) <= 1e-13


def test_fused_loss_scales_upstream_gradient():
    rng = np.random.default_rng(37)
    s0 = rng.normal(size=(5, 1))
    y = rng.normal(size=5)
    tape = ad.Tape()
    s = tape.leaf(s0)
    tape.backward(ad.scale(losses.pairwise_rank_loss(s, y), 3.5))
    direct = losses.rank_loss_gradient(s0.reshape(-1), y)
    assert np.allclose(s.grad.reshape(-1), 3.5 * direct, rtol=0, atol=1e-15)


def test_gradient_descent_on_scores_reaches_perfect_ordering():
    rng = np.random.default_rng(41)
    n = 50
    y = rng.normal(size=n)
    s = rng.normal(size=n) * 0.01
    for step in range(2000):
        s -= 30.0 * losses.rank_loss_gradient(s, y)
        if spearman(s, y) == 1.0:
            break
    assert spearman(s, y) == 1.0
    assert step < 2000


def test_input_validation():
    with pytest.raises(ValueError):
        losses.rank_loss_value([1.0], [1.0])
    with pytest.raises(ValueError):
        losses.rank_loss_value([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        losses.rank_loss_value([1.0, np.nan], [1.0, 2.0])
    with pytest.raises(ValueError):
        losses.rank_loss_gradient([1.0, 2.0], [np.inf, 0.0])
    tape = ad.Tape()
    s = tape.leaf(np.array([[1.0], [2.0]]))
    with pytest.raises(ValueError):
        losses.pairwise_rank_loss(s, np.array([0.1]))


def test_mse_hand_values():
    assert losses.mse_value([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert losses.mse_value([0.0, 2.0], [0.0, 0.0]) == 2.0


def test_mse_matches_numpy_oracle():
    rng = np.random.default_rng(43)
    s = rng.normal(size=20)
    y = rng.normal(size=20)
    assert losses.mse_value(s, y) == pytest.approx(np.mean((s - y) ** 2), abs=1e-15)


def test_mse_loss_gradient():
    rng = np.random.default_rng(47)
    s0 = rng.normal(size=(6, 1))
    y = rng.normal(size=6)
    tape = ad.Tape()
    s = tape.leaf(s0)
    loss = losses.mse_loss(s, y)
    tape.backward(loss)
    expected = 2.0 * (s0.reshape(-1) - y) / 6.0
    assert np.allclose(s.grad.reshape(-1), expected, rtol=0, atol=1e-15)
