"""Exponential-family class-conditional distributions.

Two families are supported:

* ``gaussian_diag`` -- a Gaussian with diagonal covariance, stored as a mean
  vector and a log-variance vector.
* ``bernoulli_product`` -- independent binary dimensions, stored as logits
  (the natural parameters).

Every distribution has an *unconstrained* vector form that is what the
attribute regressors predict. For the Gaussian that is ``[mean, log_var]``;
for the Bernoulli product it is just the logits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import expit

__all__ = [
    "GAUSSIAN",
    "BERNOULLI",
    "FamilySpec",
    "GaussianDiag",
    "BernoulliProduct",
    "ClassDistribution",
    "estimate",
    "log_density",
    "to_unconstrained",
    "from_unconstrained",
    "n_unconstrained",
]

GAUSSIAN = "gaussian_diag"
BERNOULLI = "bernoulli_product"

_LOG_2PI = float(np.log(2.0 * np.pi))
# exp() of log-variances stays a positive, finite float64 inside this range
LOG_VAR_BOUND = 700.0


@dataclass(frozen=True)
class FamilySpec:
    """Choice of class-conditional family and its numerical safeguards."""

    kind: str = GAUSSIAN
    var_floor: float = 1e-6
    smoothing: float = 1.0

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, BERNOULLI):
            raise ValueError(f"unknown family kind {self.kind!r}")
        if not self.var_floor > 0:
            raise ValueError("var_floor must be positive")
        if not self.smoothing > 0:
            raise ValueError("smoothing must be positive")

    @property
    def n_blocks(self) -> int:
        """Number of separately regressed parameter blocks."""
        return 2 if self.kind == GAUSSIAN else 1


@dataclass(frozen=True, eq=False)
class GaussianDiag:
    mean: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).reshape(-1)
        log_var = np.array(self.log_var, dtype=np.float64).reshape(-1)
        if mean.shape != log_var.shape:
            raise ValueError(
                f"mean has {mean.size} dims but log_var has {log_var.size}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(log_var))):
            raise ValueError("Gaussian parameters must be finite")
        mean.flags.writeable = False
        log_var.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_var", log_var)

    kind = GAUSSIAN

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def var(self) -> np.ndarray:
        return np.exp(self.log_var)

    def __eq__(self, other):
        if not isinstance(other, GaussianDiag):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(
            self.log_var, other.log_var
        )

    def __repr__(self):
        return f"GaussianDiag(dim={self.dim})"


@dataclass(frozen=True, eq=False)
class BernoulliProduct:
    logits: np.ndarray

    def __post_init__(self):
        logits = np.array(self.logits, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(logits)):
            raise ValueError("Bernoulli logits must be finite")
        logits.flags.writeable = False
        object.__setattr__(self, "logits", logits)

    kind = BERNOULLI

    @property
    def dim(self) -> int:
        return self.logits.size

    @property
    def prob(self) -> np.ndarray:
        return expit(self.logits)

    def __eq__(self, other):
        if not isinstance(other, BernoulliProduct):
            return NotImplemented
        return np.array_equal(self.logits, other.logits)

    def __repr__(self):
        return f"BernoulliProduct(dim={self.dim})"


ClassDistribution = Union[GaussianDiag, BernoulliProduct]


def estimate(
    family: FamilySpec,
    samples,
    weights: Optional[np.ndarray] = None,
) -> ClassDistribution:
    """Weighted maximum-likelihood estimate of one class distribution.

    Parameters
    ----------
    family : FamilySpec
    samples : (N, D) array_like
    weights : (N,) array_like, optional
        Nonnegative per-sample weights (EM responsibilities). Defaults to ones.

    Returns
    -------
    GaussianDiag or BernoulliProduct
        Gaussian variances are the weighted MLE (divide by total weight),
        clamped below at ``family.var_floor``. Bernoulli probabilities are
        Laplace-smoothed with ``family.smoothing`` pseudo-counts per outcome.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("estimate needs at least one sample")
    if weights is None:
        w = np.ones(X.shape[0])
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.size != X.shape[0]:
            raise ValueError(f"got {w.size} weights for {X.shape[0]} samples")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
    # Zero-weight rows are dropped so hard assignments reproduce the plain MLE exactly.
    keep = w > 0
    if not keep.all():
        X, w = X[keep], w[keep]
    total = w.sum()
    if not total > 0:
        raise ValueError("total sample weight is zero")

    if family.kind == GAUSSIAN:
        mean = w @ X / total
        var = w @ (X - mean) ** 2 / total
        var = np.maximum(var, family.var_floor)
        return GaussianDiag(mean, np.log(var))

    bad = np.flatnonzero(np.any((X != 0) & (X != 1), axis=1))
    if bad.size:
        raise ValueError(f"non-binary value in sample {bad[0]}")
    s = family.smoothing
    p = (w @ X + s) / (total + 2.0 * s)
    return BernoulliProduct(np.log(p) - np.log1p(-p))


def log_density(dist: ClassDistribution, x) -> Union[float, np.ndarray]:
    """Log-density of ``x`` under ``dist``.

    ``x`` may be a single D-vector (returns a float) or an (N, D) batch
    (returns an (N,) array).
    """
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.ndim != 2 or X2.shape[1] != dist.dim:
        raise ValueError(
            f"observation has {X2.shape[-1]} dims, distribution has {dist.dim}"
        )
    if isinstance(dist, GaussianDiag):
        z = (X2 - dist.mean) ** 2 * np.exp(-dist.log_var)
        out = -0.5 * (z.sum(axis=1) + dist.log_var.sum() + dist.dim * _LOG_2PI)
    else:
        th = dist.logits
        out = X2 @ th - np.logaddexp(0.0, th).sum()
    return float(out[0]) if single else out


def n_unconstrained(family: FamilySpec, dim: int) -> int:
    return family.n_blocks * dim


def to_unconstrained(dist: ClassDistribution) -> np.ndarray:
    if isinstance(dist, GaussianDiag):
        return np.concatenate([dist.mean, dist.log_var])
    return dist.logits.copy()


def from_unconstrained(
    family: FamilySpec, v, dim: Optional[int] = None
) -> ClassDistribution:
    """Inverse of :func:`to_unconstrained`.

    Log-variances are clipped to ``[-LOG_VAR_BOUND, LOG_VAR_BOUND]`` so the
    reconstructed variances are always positive and finite.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if dim is not None and v.size != n_unconstrained(family, dim):
        raise ValueError(
            f"expected {n_unconstrained(family, dim)} parameters, got {v.size}"
        )
    if family.kind == GAUSSIAN:
        if v.size % 2:
            raise ValueError(f"Gaussian parameter vector has odd length {v.size}")
        d = v.size // 2
        return GaussianDiag(v[:d], np.clip(v[d:], -LOG_VAR_BOUND, LOG_VAR_BOUND))
    return BernoulliProduct(v)
