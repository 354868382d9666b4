"""Synthetic datasets drawn from the model's own generative assumptions.

Class attributes are standard normal. With ``bias_attribute`` the last
attribute coordinate is fixed to 1, which lets a regressor without an
intercept represent the base noise level exactly. Class parameters come from
a true gating map:

* ``linear``: ``mean = W_mu a``, ``log_var = W_rho a`` (Gaussian) or
  ``logits = W_mu a`` (binary features);
* ``quadratic``: the same, with ``a`` replaced by all monomials of degree
  one and two, so a linear regressor is misspecified while a quadratic
  kernel is not.

Unseen-class samples can be shifted by a constant ``offset`` to simulate
domain shift between seen and unseen data.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .dataset import (
    AttributeTable,
    FeatureTable,
    SplitView,
    make_split,
    save_attributes,
    save_features,
)

__all__ = ["SynthConfig", "SynthTruth", "generate", "mean_separation", "reference_sigma", "write_dataset"]


@dataclass(frozen=True)
class SynthConfig:
    S: int = 8
    U: int = 2
    K: int = 4
    D: int = 16
    n_per_class: int = 200
    gating: str = "linear"
    mean_scale: float = 1.0
    logvar_scale: float = 0.3
    noise: float = 1.0
    offset: Union[float, Sequence[float], None] = None
    binary: bool = False
    bias_attribute: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.S < 1:
            raise ValueError("need at least one seen class")
        if self.U < 1:
            raise ValueError("need at least one unseen class")
        if self.K < (2 if self.bias_attribute else 1) or self.D < 1:
            raise ValueError("attribute and feature dimensions must be positive")
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be positive")
        if self.gating not in ("linear", "quadratic"):
            raise ValueError(f"unknown gating {self.gating!r}")
        if not self.noise > 0:
            raise ValueError("noise must be positive")

    @property
    def class_ids(self) -> tuple:
        return tuple(range(self.S + self.U))

    @property
    def seen_ids(self) -> tuple:
        return tuple(range(self.S))

    @property
    def unseen_ids(self) -> tuple:
        return tuple(range(self.S, self.S + self.U))


@dataclass(frozen=True, eq=False)
class SynthTruth:
    class_ids: tuple
    means: np.ndarray  # (C, D); logits when binary
    log_vars: Optional[np.ndarray]  # (C, D); None when binary
    offset: np.ndarray  # (D,)

    def mean(self, c) -> np.ndarray:
        return self.means[self.class_ids.index(int(c))]

    def log_var(self, c) -> np.ndarray:
        return self.log_vars[self.class_ids.index(int(c))]


def _quadratic_features(A: np.ndarray) -> np.ndarray:
    # A: (C, K) -> (C, K + K(K+1)/2)
    iu = np.triu_indices(A.shape[1])
    quad = (A[:, :, None] * A[:, None, :])[:, iu[0], iu[1]]
    return np.hstack([A, quad])


def generate(config: SynthConfig):
    """Draw a dataset.

    Returns
    -------
    features : FeatureTable
        ``n_per_class`` labeled rows for every seen and unseen class, grouped
        by class.
    attributes : AttributeTable
    split : SplitView
        Classes ``0..S-1`` seen, ``S..S+U-1`` unseen.
    truth : SynthTruth
    """
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    C = cfg.S + cfg.U
    n_free = cfg.K - 1 if cfg.bias_attribute else cfg.K
    attrs = rng.standard_normal((C, n_free))
    if cfg.bias_attribute:
        attrs = np.hstack([attrs, np.ones((C, 1))])

    inputs = attrs if cfg.gating == "linear" else _quadratic_features(attrs)
    P = inputs.shape[1]
    W_mu = rng.standard_normal((cfg.D, P)) * (cfg.mean_scale / np.sqrt(P))
    W_rho = rng.standard_normal((cfg.D, P)) * (cfg.logvar_scale / np.sqrt(P))
    means = inputs @ W_mu.T
    log_vars = inputs @ W_rho.T + 2.0 * np.log(cfg.noise)

    if cfg.offset is None:
        offset = np.zeros(cfg.D)
    else:
        offset = np.broadcast_to(np.asarray(cfg.offset, dtype=np.float64), (cfg.D,)).copy()

    n = cfg.n_per_class
    labels = np.repeat(np.arange(C), n)
    if cfg.binary:
        p = 1.0 / (1.0 + np.exp(-means))
        X = (rng.random((C, n, cfg.D)) < p[:, None, :]).astype(np.float64)
    else:
        eps = rng.standard_normal((C, n, cfg.D))
        X = means[:, None, :] + np.exp(0.5 * log_vars)[:, None, :] * eps
        X[cfg.S:] += offset
    X = X.reshape(C * n, cfg.D)

    features = FeatureTable(X, labels)
    attributes = AttributeTable(np.arange(C), attrs)
    split = make_split(features, attributes, cfg.seen_ids, cfg.unseen_ids)
    truth = SynthTruth(
        class_ids=cfg.class_ids,
        means=means,
        log_vars=None if cfg.binary else log_vars,
        offset=offset,
    )
    return features, attributes, split, truth


def reference_sigma(truth: SynthTruth, class_ids: Sequence[int]) -> float:
    """Root-mean-square per-dimension standard deviation over ``class_ids``."""
    return float(np.sqrt(np.mean([np.exp(truth.log_var(c)).mean() for c in class_ids])))


def mean_separation(truth: SynthTruth, class_ids: Sequence[int]) -> float:
    """Smallest Euclidean distance between two class means, in units of
    :func:`reference_sigma`."""
    ids = list(class_ids)
    M = np.stack([truth.mean(c) for c in ids])
    diff = M[:, None, :] - M[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    dist[np.diag_indices(len(ids))] = np.inf
    return float(dist.min() / reference_sigma(truth, ids))


def write_dataset(outdir, features: FeatureTable, attributes: AttributeTable, split: SplitView) -> dict:
    """Write ``features.csv``, ``attributes.csv``, ``seen.txt`` and ``unseen.txt``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "features": out / "features.csv",
        "attributes": out / "attributes.csv",
        "seen": out / "seen.txt",
        "unseen": out / "unseen.txt",
    }
    save_features(features, paths["features"])
    save_attributes(attributes, paths["attributes"])
    paths["seen"].write_text(",".join(map(str, split.seen_ids)) + "\n")
    paths["unseen"].write_text(",".join(map(str, split.unseen_ids)) + "\n")
    return paths
