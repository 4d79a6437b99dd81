"""Backend selection for the pairwise-loss kernels.

Prefers the compiled extension and falls back to the numpy implementation;
set XSRANK_FORCE_NUMPY=1 to force the fallback (used by the benchmark and
the parity tests).  All four entry points share one contract; see
`_pairloss_np` for the reference semantics.
"""

import os

import numpy as np

from . import _pairloss_np

if os.environ.get("XSRANK_FORCE_NUMPY"):
    _impl = _pairloss_np
else:
    try:
        from . import _pairloss_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pairloss_np

BACKEND: str = _impl.BACKEND


def _as_vec(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(-1))


def loss_value(scores, returns) -> float:
    return _impl.loss_value(_as_vec(scores), _as_vec(returns))


def loss_value_grad(scores, returns):
    return _impl.loss_value_grad(_as_vec(scores), _as_vec(returns))


def pair_matrix(scores, returns) -> np.ndarray:
    return np.asarray(_impl.pair_matrix(_as_vec(scores), _as_vec(returns)))


def subset_pair_mean(terms: np.ndarray, idx) -> float:
    terms = np.ascontiguousarray(terms, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    return _impl.subset_pair_mean(terms, idx)
