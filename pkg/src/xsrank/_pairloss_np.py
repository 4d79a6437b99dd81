"""Numpy implementation of the pairwise rank-loss kernels.

Reference semantics for the compiled extension (`_pairloss_cy`); selected as
the fallback when the extension is not built.  Each per-pair term is

    log(1 + exp(-tanh(f_i - f_j) * tanh(y_i - y_j)))

averaged over the n(n-1) ordered off-diagonal pairs.  The exponent argument
is bounded in [-1, 1], so no branch here can overflow.
"""

import numpy as np

BACKEND = "numpy"


def loss_value(scores: np.ndarray, returns: np.ndarray) -> float:
    """Mean pair loss over ordered off-diagonal pairs."""
    n = scores.shape[0]
    tf = np.tanh(scores[:, None] - scores[None, :])
    ty = np.tanh(returns[:, None] - returns[None, :])
    terms = np.logaddexp(0.0, -tf * ty)
    np.fill_diagonal(terms, 0.0)
    return float(terms.sum() / (n * (n - 1)))


def loss_value_grad(scores: np.ndarray, returns: np.ndarray):
    """Loss and its gradient with respect to `scores`, in one pass."""
    n = scores.shape[0]
    tf = np.tanh(scores[:, None] - scores[None, :])
    ty = np.tanh(returns[:, None] - returns[None, :])
    z = tf * ty
    terms = np.logaddexp(0.0, -z)
    np.fill_diagonal(terms, 0.0)
    value = float(terms.sum() / (n * (n - 1)))
    # d term / d f_i = -ty * (1 - tf^2) * sigmoid(-z); the (j, i) pair
    # contributes identically, hence the factor 2.
    w = -ty * (1.0 - tf * tf) / (1.0 + np.exp(z))
    np.fill_diagonal(w, 0.0)
    grad = 2.0 * w.sum(axis=1) / (n * (n - 1))
    return value, grad


def pair_matrix(scores: np.ndarray, returns: np.ndarray) -> np.ndarray:
    """Full matrix of pair terms with a zeroed diagonal.

    Row/column sums over an index subset then give subset pair sums directly.
    """
    tf = np.tanh(scores[:, None] - scores[None, :])
    ty = np.tanh(returns[:, None] - returns[None, :])
    terms = np.logaddexp(0.0, -tf * ty)
    np.fill_diagonal(terms, 0.0)
    return terms


def subset_pair_mean(terms: np.ndarray, idx: np.ndarray) -> float:
    """Mean pair term over ordered off-diagonal pairs of a stock subset."""
    k = idx.shape[0]
    return float(terms[np.ix_(idx, idx)].sum() / (k * (k - 1)))
