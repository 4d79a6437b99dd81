"""Training objectives for cross-sectional ranking.

The primary objective scores a cross-section by how well the predicted order
matches the realized return order: for every ordered pair (i, j) it charges

    log(1 + exp(-tanh(f_i - f_j) * tanh(y_i - y_j)))

and averages over the n(n-1) off-diagonal pairs.  tanh smooths the sign of
each difference, so the term is the logistic log-loss on agreement of the
two order signs.  Each term lies in (0, log(1+e)); it equals log 2 exactly
when either difference is zero, and only the score *differences* matter, so
the loss is invariant to shifting all scores by a constant.

Averaging (not summing) keeps magnitudes comparable across sub-sample sizes.
Diagonal pairs are excluded: they contribute a constant log 2 with zero
gradient.

A mean-squared-error objective is included as the regression baseline for
ablation runs.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import kernels

# Saturation limits of a single pair term: tanh arguments at +/-inf.
PAIR_TERM_AGREE_LIMIT = float(np.log1p(np.exp(-1.0)))      # ~0.313262
PAIR_TERM_DISAGREE_LIMIT = float(np.log1p(np.exp(1.0)))    # ~1.313262


def _check_pair_inputs(scores: np.ndarray, returns: np.ndarray) -> None:
    if scores.ndim != 1 or returns.ndim != 1 or scores.shape != returns.shape:
        raise ValueError(f"scores and returns must be equal-length vectors, "
                         f"got {scores.shape} and {returns.shape}")
    if scores.shape[0] < 2:
        raise ValueError("pairwise rank loss needs at least 2 stocks")
    if not (np.all(np.isfinite(scores)) and np.all(np.isfinite(returns))):
        raise ValueError("non-finite values in scores or returns")


def rank_loss_value(scores, returns) -> float:
    """Pairwise rank loss of plain arrays (no tape)."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    returns = np.asarray(returns, dtype=np.float64).reshape(-1)
    _check_pair_inputs(scores, returns)
    return kernels.loss_value(scores, returns)


def rank_loss_gradient(scores, returns) -> np.ndarray:
    """Closed-form gradient of the pairwise rank loss w.r.t. scores."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    returns = np.asarray(returns, dtype=np.float64).reshape(-1)
    _check_pair_inputs(scores, returns)
    return kernels.loss_value_grad(scores, returns)[1]


def pairwise_rank_loss(scores: ad.Tensor, returns: np.ndarray) -> ad.Tensor:
    """Fused tape node: forward via the kernel backend, backward closed-form.

    `scores` is an (n, 1) column on a tape; `returns` is a constant vector.
    """
    f = scores.data.reshape(-1)
    y = np.asarray(returns, dtype=np.float64).reshape(-1)
    _check_pair_inputs(f, y)
    value, grad = kernels.loss_value_grad(f, y)

    def backward(g):
        ad.accumulate_grad(scores, float(g) * grad.reshape(scores.data.shape))

    return ad.custom(np.float64(value), (scores,), backward, "pairwise_rank_loss")


def pairwise_rank_loss_composed(scores: ad.Tensor, returns: np.ndarray) -> ad.Tensor:
    """Same loss built from primitive tape ops (log1p-exp composite included).

    Slower than the fused node; kept as an independent in-graph route for
    cross-checking the kernels.
    """
    f = scores.data.reshape(-1)
    y = np.asarray(returns, dtype=np.float64).reshape(-1)
    _check_pair_inputs(f, y)
    n = f.shape[0]
    col = scores if scores.data.ndim == 2 else None
    if col is None:
        raise ValueError("composed loss expects an (n, 1) score column")
    ones_row = ad.constant(np.ones((1, n)))
    tiled = ad.matmul(col, ones_row)                       # (n, n): f_i in row i
    diffs = ad.sub(tiled, ad.transpose(tiled))             # f_i - f_j
    ty = np.tanh(y[:, None] - y[None, :])
    prod = ad.mul(ad.tanh(diffs), ad.constant(-ty))        # -tanh(df) * tanh(dy)
    terms = ad.softplus(prod)
    mask = np.ones((n, n))
    np.fill_diagonal(mask, 0.0)
    off_diag = ad.mul(terms, ad.constant(mask))
    return ad.scale(ad.sum_all(off_diag), 1.0 / (n * (n - 1)))


def mse_value(scores, returns) -> float:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    returns = np.asarray(returns, dtype=np.float64).reshape(-1)
    if scores.shape != returns.shape:
        raise ValueError(f"length mismatch: {scores.shape} vs {returns.shape}")
    return float(np.mean((scores - returns) ** 2))


def mse_loss(scores: ad.Tensor, returns: np.ndarray) -> ad.Tensor:
    """Mean squared error against realized returns (regression baseline)."""
    y = np.asarray(returns, dtype=np.float64).reshape(scores.data.shape)
    err = ad.sub(scores, ad.constant(y))
    return ad.mean_all(ad.mul(err, err))
