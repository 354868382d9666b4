"""Few-shot refinement of synthesized class distributions.

A synthesized Gaussian (mean ``m``, variance ``v``) acts as the prior; given
``n`` labeled examples with running sums the update is::

    mean' = (m + sum(x)) / (1 + n)
    s2    = sum((x - m)^2) / n            # spread around the prior mean
    var'  = 1 / (1/v + n/s2)

Only the sufficient statistics ``(n, sum, sumsq)`` are kept, so examples can
be streamed in any order and the result equals the batch update.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .expfam import BernoulliProduct, FamilySpec, GaussianDiag

__all__ = [
    "FewShotStats",
    "accumulate",
    "stats_from_samples",
    "fewshot_update",
    "fewshot_update_bernoulli",
    "update_distribution",
    "apply_fewshot",
]

_P_CLIP = 1e-12


@dataclass(frozen=True, eq=False)
class FewShotStats:
    n: int
    sum: np.ndarray
    sumsq: np.ndarray

    def __post_init__(self):
        s = np.array(self.sum, dtype=np.float64).reshape(-1)
        q = np.array(self.sumsq, dtype=np.float64).reshape(-1)
        if s.shape != q.shape:
            raise ValueError("sum and sumsq must have the same length")
        if self.n < 0:
            raise ValueError("negative sample count")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "sum", s)
        object.__setattr__(self, "sumsq", q)

    @classmethod
    def empty(cls, dim: int) -> "FewShotStats":
        return cls(0, np.zeros(dim), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.sum.size

    def __eq__(self, other):
        if not isinstance(other, FewShotStats):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.sum, other.sum)
            and np.array_equal(self.sumsq, other.sumsq)
        )


def accumulate(stats: FewShotStats, x) -> FewShotStats:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != stats.dim:
        raise ValueError(f"observation has {x.size} dims, stats have {stats.dim}")
    return FewShotStats(stats.n + 1, stats.sum + x, stats.sumsq + x * x)


def stats_from_samples(X) -> FewShotStats:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return FewShotStats(X.shape[0], X.sum(axis=0), (X * X).sum(axis=0))


def fewshot_update(prior: GaussianDiag, stats: FewShotStats, var_floor: float = 1e-6) -> GaussianDiag:
    """Conjugate-style update of ``prior`` with the examples summarized in ``stats``.

    The spread is floored at ``var_floor`` before its reciprocal is taken.
    The posterior variance itself is not floored again: with ``n`` identical
    samples at the prior mean it is ``1 / (1/v + n/var_floor)``, which can
    fall below the floor. It is positive for any positive prior variance.
    """
    if stats.dim != prior.dim:
        raise ValueError(f"stats have {stats.dim} dims, prior has {prior.dim}")
    n = stats.n
    if n == 0:
        return prior
    mu0 = prior.mean
    mean = (mu0 + stats.sum) / (1.0 + n)
    spread = stats.sumsq / n - 2.0 * mu0 * stats.sum / n + mu0 * mu0
    spread = np.maximum(spread, var_floor)
    var = 1.0 / (1.0 / prior.var + n / spread)
    var = np.maximum(var, np.finfo(np.float64).tiny)
    return GaussianDiag(mean, np.log(var))


def fewshot_update_bernoulli(prior: BernoulliProduct, stats: FewShotStats) -> BernoulliProduct:
    """Pseudo-count-one analogue for binary features: ``p' = (p + sum(x)) / (1 + n)``."""
    if stats.dim != prior.dim:
        raise ValueError(f"stats have {stats.dim} dims, prior has {prior.dim}")
    if stats.n == 0:
        return prior
    p = (prior.prob + stats.sum) / (1.0 + stats.n)
    p = np.clip(p, _P_CLIP, 1.0 - _P_CLIP)
    return BernoulliProduct(np.log(p) - np.log1p(-p))


def update_distribution(
    prior: Union[GaussianDiag, BernoulliProduct], stats: FewShotStats, family: FamilySpec
):
    if isinstance(prior, GaussianDiag):
        return fewshot_update(prior, stats, family.var_floor)
    return fewshot_update_bernoulli(prior, stats)


def apply_fewshot(model, features):
    """Stream labeled unseen-class examples into ``model``'s few-shot state.

    Statistics accumulate on top of any already stored in the model and the
    prior stays the inductive (or transductive) distribution the class had
    before its first update, so feeding the data in several chunks gives the
    same result as feeding it at once.
    """
    unseen = set(model.unseen_ids)
    if features.n_examples == 0:
        return model
    if features.dim != model.dim:
        raise ValueError(f"features have {features.dim} dims, model has {model.dim}")
    priors = dict(model.fewshot_priors)
    stats = dict(model.fewshot_stats)
    for i, (x, c) in enumerate(zip(features.rows, features.labels)):
        c = int(c)
        if c not in unseen:
            raise ValueError(f"row {i}: label {c} is not an unseen class")
        if c not in stats:
            priors[c] = model.distributions[c]
            stats[c] = FewShotStats.empty(model.dim)
        stats[c] = accumulate(stats[c], x)
    fam = model.config.family
    updated = {c: update_distribution(priors[c], stats[c], fam) for c in stats}
    return model.with_distributions(updated).replace(
        fewshot_priors=priors, fewshot_stats=stats
    )
