"""Cross-section sub-sampling.

One mini-batch = m distinct trading days drawn uniformly without
replacement, and for each day a uniform k-subset of its stocks.  Days are
drawn with replacement across batches, so an epoch is an iteration count,
not a permutation of days.  The pair-mean of any statistic over a uniform
k-subset is an unbiased estimate of its full-cross-section pair mean, which
is what makes training on sub-samples equivalent in expectation.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma, log

import numpy as np


@dataclass
class SubSampleSpec:
    m: int
    k: int
    seed: int = 0
    on_small_day: str = "error"   # or "resample": restrict to days with >= k stocks

    def validate(self) -> None:
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.on_small_day not in ("error", "resample"):
            raise ValueError(f"on_small_day must be 'error' or 'resample', "
                             f"got {self.on_small_day!r}")


class MinibatchSampler:
    """Owns its random stream; single-threaded by design."""

    def __init__(self, spec: SubSampleSpec):
        spec.validate()
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self.draws = 0

    def draw(self, data: list) -> list:
        batch = draw_minibatch(data, self.spec, self.rng)
        self.draws += 1
        return batch


def draw_minibatch(data: list, spec: SubSampleSpec, rng: np.random.Generator) -> list:
    """m sub-sampled cross-sections; returns stay aligned with panels."""
    spec.validate()
    if spec.on_small_day == "resample":
        candidates = [i for i, cs in enumerate(data) if cs.n >= spec.k]
    else:
        candidates = list(range(len(data)))
    if len(candidates) < spec.m:
        raise ValueError(f"need {spec.m} eligible days, have {len(candidates)}")
    days = rng.choice(len(candidates), size=spec.m, replace=False)
    out = []
    for d in days:
        cs = data[candidates[d]]
        if cs.n < spec.k:
            raise ValueError(f"{cs.date}: k={spec.k} exceeds cross-section "
                             f"size {cs.n}")
        if cs.n == spec.k:
            out.append(cs)
            continue
        idx = np.sort(rng.choice(cs.n, size=spec.k, replace=False))
        out.append(cs.subset(idx))
    return out


def count_unique_subsamples(n: int, k: int) -> float:
    """log10 of C(n, k), via log-gamma so huge counts never overflow."""
    if k < 0 or n < 0 or k > n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    return (lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1)) / log(10.0)
