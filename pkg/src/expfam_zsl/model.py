"""Attribute-gated generative classifier.

Fitting has three stages:

1. estimate one distribution per seen class from its labeled examples;
2. regress each block of unconstrained parameters (means, log-variances, or
   logits) on the seen-class attribute vectors, each block with its own
   ridge penalty;
3. push every unseen class's attribute vector through the regressors to
   synthesize its distribution.

Prediction is maximum likelihood over a candidate set of classes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dataset import AttributeTable, FeatureTable, SplitView
from .expfam import (
    BERNOULLI,
    GAUSSIAN,
    BernoulliProduct,
    ClassDistribution,
    FamilySpec,
    GaussianDiag,
    estimate,
    from_unconstrained,
    log_density,
    to_unconstrained,
)
from .fewshot import FewShotStats
from .regression import (
    KernelSolution,
    KernelSpec,
    RidgeSolution,
    fit_kernel_solution,
    fit_linear,
)

__all__ = [
    "FitError",
    "ModelFormatError",
    "GfzslConfig",
    "GfzslModel",
    "fit",
    "predict_params",
    "score",
    "score_batch",
    "classify",
    "classify_batch",
    "classify_generalized",
    "save_model",
    "load_model",
]


class FitError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GfzslConfig:
    """Model hyperparameters.

    ``lambda_sigma`` penalizes the log-variance regressor and is unused by the
    Bernoulli family, whose single logit block uses ``lambda_mu``.
    """

    lambda_mu: float
    lambda_sigma: float
    family: FamilySpec = FamilySpec()
    regressor: str = "linear"
    kernel: KernelSpec = KernelSpec("quadratic")

    def __post_init__(self):
        if self.regressor not in ("linear", "kernel"):
            raise ValueError(f"unknown regressor {self.regressor!r}")
        for name in ("lambda_mu", "lambda_sigma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")

    @property
    def block_lambdas(self) -> Tuple[float, ...]:
        if self.family.kind == GAUSSIAN:
            return (self.lambda_mu, self.lambda_sigma)
        return (self.lambda_mu,)


@dataclass(frozen=True, eq=False)
class GfzslModel:
    config: GfzslConfig
    dim: int
    n_attributes: int
    seen_ids: tuple
    unseen_ids: tuple
    distributions: Mapping[int, ClassDistribution]
    regressors: tuple
    # Mixing proportions over unseen classes, set by EM refinement.
    mixing: Optional[Mapping[int, float]] = None
    use_mixing: bool = True
    # Inductive priors and accumulated labeled statistics for few-shot updates.
    fewshot_priors: Mapping[int, ClassDistribution] = field(default_factory=dict)
    fewshot_stats: Mapping[int, FewShotStats] = field(default_factory=dict)

    @property
    def class_ids(self) -> tuple:
        return self.seen_ids + self.unseen_ids

    def replace(self, **changes) -> "GfzslModel":
        return dataclasses.replace(self, **changes)

    def with_distributions(self, updates: Mapping[int, ClassDistribution]) -> "GfzslModel":
        for c in updates:
            if c not in self.distributions:
                raise KeyError(f"unknown class {c}")
        merged = dict(self.distributions)
        merged.update(updates)
        return self.replace(distributions=merged)


def _check_binary(features: FeatureTable, index: np.ndarray) -> None:
    X = features.rows[index]
    bad = np.flatnonzero(np.any((X != 0) & (X != 1), axis=1))
    if bad.size:
        raise FitError(f"row {int(index[bad[0]])}: non-binary feature value")


def fit(
    split: SplitView,
    features: FeatureTable,
    attributes: AttributeTable,
    config: GfzslConfig,
) -> GfzslModel:
    """Fit seen-class distributions, the attribute regressors, and synthesize unseen classes."""
    fam = config.family
    train = split.train
    labels = features.labels[train]
    if fam.kind == BERNOULLI:
        _check_binary(features, train)

    seen_dists = {}
    for c in split.seen_ids:
        rows = features.rows[train[labels == c]]
        if rows.shape[0] == 0:
            raise FitError(f"seen class {c} has no labeled examples")
        seen_dists[c] = estimate(fam, rows)

    A = attributes.matrix(split.seen_ids)
    D = features.dim
    targets = np.stack([to_unconstrained(seen_dists[c]) for c in split.seen_ids], axis=1)
    regressors = []
    for b, lam in enumerate(config.block_lambdas):
        block = targets[b * D:(b + 1) * D]
        if config.regressor == "linear":
            regressors.append(fit_linear(block, A, lam))
        else:
            regressors.append(fit_kernel_solution(block, A, config.kernel, lam))

    model = GfzslModel(
        config=config,
        dim=D,
        n_attributes=attributes.dim,
        seen_ids=tuple(split.seen_ids),
        unseen_ids=tuple(split.unseen_ids),
        distributions=dict(seen_dists),
        regressors=tuple(regressors),
    )
    unseen = {c: predict_params(model, attributes.vector(c)) for c in split.unseen_ids}
    merged = dict(seen_dists)
    merged.update(unseen)
    return model.replace(distributions=merged)


def predict_params(model: GfzslModel, a) -> ClassDistribution:
    """Synthesize the distribution of a class from its attribute vector."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    if a.size != model.n_attributes:
        raise ValueError(f"attribute has {a.size} dims, expected {model.n_attributes}")
    v = np.concatenate([reg.predict(a) for reg in model.regressors])
    return from_unconstrained(model.config.family, v)


def _candidates(model: GfzslModel, candidates: Optional[Iterable[int]]) -> list:
    if candidates is None:
        ids = list(model.class_ids)
    else:
        ids = [int(c) for c in candidates]
    if not ids:
        raise ValueError("empty candidate set")
    for c in ids:
        if c not in model.distributions:
            raise KeyError(f"unknown class {c}")
    return sorted(set(ids))


def score_batch(model: GfzslModel, X, candidates=None) -> Tuple[np.ndarray, list]:
    """Log-likelihoods of each row of ``X`` under each candidate.

    Returns an (N, C) array and the sorted candidate ids labelling its columns.
    """
    ids = _candidates(model, candidates)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = np.empty((X.shape[0], len(ids)))
    for j, c in enumerate(ids):
        out[:, j] = log_density(model.distributions[c], X)
    return out, ids


def score(model: GfzslModel, x, candidates=None) -> Dict[int, float]:
    ll, ids = score_batch(model, np.asarray(x, dtype=np.float64)[None, :], candidates)
    return {c: float(v) for c, v in zip(ids, ll[0])}


def _log_prior(model: GfzslModel, ids: Sequence[int]) -> Optional[np.ndarray]:
    if not (model.use_mixing and model.mixing):
        return None
    if not all(c in model.mixing for c in ids):
        return None
    return np.log(np.array([model.mixing[c] for c in ids]))


def classify_batch(model: GfzslModel, X, candidates=None) -> np.ndarray:
    """Most likely class per row; ties go to the smallest class id.

    After EM refinement, the fitted mixing proportions act as class priors
    when every candidate is a mixture component and ``model.use_mixing``.
    """
    ll, ids = score_batch(model, X, candidates)
    prior = _log_prior(model, ids)
    if prior is not None:
        ll = ll + prior
    return np.asarray(ids, dtype=np.int64)[np.argmax(ll, axis=1)]


def classify(model: GfzslModel, x, candidates=None) -> int:
    return int(classify_batch(model, np.asarray(x, dtype=np.float64)[None, :], candidates)[0])


def classify_generalized(model: GfzslModel, x) -> int:
    """Classify over every seen and unseen class."""
    return classify(model, x, model.class_ids)


# ------------------------------------------------------------- persistence

_MAGIC = "expfam-zsl-model"
_VERSION = 1


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _ids(ids) -> str:
    return " ".join(str(int(c)) for c in ids)


def save_model(model: GfzslModel, path) -> None:
    """Write ``model`` in the versioned text format.

    Header lines are ``key value``; then ``array <name> <rows> <cols>``
    blocks, one matrix row per line, floats with 17 significant digits.
    """
    cfg = model.config
    lines = [
        f"{_MAGIC} {_VERSION}",
        f"family {cfg.family.kind}",
        f"var_floor {_fmt(cfg.family.var_floor)}",
        f"smoothing {_fmt(cfg.family.smoothing)}",
        f"regressor {cfg.regressor}",
        f"kernel {cfg.kernel.kind}",
        f"gamma {_fmt(cfg.kernel.gamma)}",
        f"lambda_mu {_fmt(cfg.lambda_mu)}",
        f"lambda_sigma {_fmt(cfg.lambda_sigma)}",
        f"S {len(model.seen_ids)}",
        f"U {len(model.unseen_ids)}",
        f"D {model.dim}",
        f"K {model.n_attributes}",
        f"seen_ids {_ids(model.seen_ids)}",
        f"unseen_ids {_ids(model.unseen_ids)}",
        f"use_mixing {int(model.use_mixing)}",
        f"mixing_ids {_ids(model.mixing or ())}",
        f"fewshot_ids {_ids(sorted(model.fewshot_stats))}",
        "end_header",
    ]

    def put(name, arr):
        arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
        lines.append(f"array {name} {arr.shape[0]} {arr.shape[1]}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in arr)

    def put_dist(prefix, dist):
        if isinstance(dist, GaussianDiag):
            put(f"{prefix}.mean", dist.mean)
            put(f"{prefix}.log_var", dist.log_var)
        else:
            put(f"{prefix}.logits", dist.logits)

    for c in model.class_ids:
        put_dist(f"dist.{c}", model.distributions[c])
    for i, reg in enumerate(model.regressors):
        if isinstance(reg, RidgeSolution):
            put(f"regressor.{i}.weights", reg.weights)
        else:
            put(f"regressor.{i}.coeffs", reg.coeffs)
            put(f"regressor.{i}.attributes", reg.attributes)
    if model.mixing:
        put("mixing", [model.mixing[c] for c in model.mixing])
    for c in sorted(model.fewshot_stats):
        put_dist(f"fewshot.{c}.prior", model.fewshot_priors[c])
        st = model.fewshot_stats[c]
        put(f"fewshot.{c}.n", [st.n])
        put(f"fewshot.{c}.sum", st.sum)
        put(f"fewshot.{c}.sumsq", st.sumsq)

    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_ids(text: str) -> tuple:
    return tuple(int(t) for t in text.split())


def load_model(path) -> GfzslModel:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
    if not lines or lines[0].split()[:1] != [_MAGIC]:
        raise ModelFormatError(f"{path}: not a model file")
    try:
        version = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise ModelFormatError(f"{path}: missing format version") from None
    if version != _VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version}")

    header = {}
    i = 1
    while i < len(lines) and lines[i] != "end_header":
        key, _, value = lines[i].partition(" ")
        header[key] = value
        i += 1
    if i == len(lines):
        raise ModelFormatError(f"{path}: unterminated header")
    i += 1

    arrays = {}
    try:
        while i < len(lines):
            tag, name, r, c = lines[i].split()
            if tag != "array":
                raise ValueError(f"unexpected line {lines[i]!r}")
            r, c = int(r), int(c)
            rows = lines[i + 1:i + 1 + r]
            if len(rows) != r:
                raise ValueError(f"array {name} is truncated")
            arr = np.array([[float(t) for t in row.split()] for row in rows])
            arrays[name] = arr.reshape(r, c)
            i += 1 + r
        family = FamilySpec(
            header["family"], float(header["var_floor"]), float(header["smoothing"])
        )
        config = GfzslConfig(
            lambda_mu=float(header["lambda_mu"]),
            lambda_sigma=float(header["lambda_sigma"]),
            family=family,
            regressor=header["regressor"],
            kernel=KernelSpec(header["kernel"], float(header["gamma"])),
        )
        seen = _parse_ids(header["seen_ids"])
        unseen = _parse_ids(header["unseen_ids"])

        def get_dist(prefix):
            if family.kind == GAUSSIAN:
                return GaussianDiag(arrays[f"{prefix}.mean"][0], arrays[f"{prefix}.log_var"][0])
            return BernoulliProduct(arrays[f"{prefix}.logits"][0])

        dists = {c: get_dist(f"dist.{c}") for c in seen + unseen}
        regs = []
        for b in range(family.n_blocks):
            if config.regressor == "linear":
                regs.append(RidgeSolution(arrays[f"regressor.{b}.weights"], config.block_lambdas[b]))
            else:
                regs.append(
                    KernelSolution(
                        arrays[f"regressor.{b}.coeffs"],
                        arrays[f"regressor.{b}.attributes"],
                        config.kernel,
                        config.block_lambdas[b],
                    )
                )
        mixing = None
        if "mixing" in arrays:
            mix_ids = _parse_ids(header["mixing_ids"])
            mixing = {c: float(p) for c, p in zip(mix_ids, arrays["mixing"][0])}
        fs_ids = _parse_ids(header.get("fewshot_ids", ""))
        priors = {c: get_dist(f"fewshot.{c}.prior") for c in fs_ids}
        stats = {
            c: FewShotStats(
                int(arrays[f"fewshot.{c}.n"][0, 0]),
                arrays[f"fewshot.{c}.sum"][0],
                arrays[f"fewshot.{c}.sumsq"][0],
            )
            for c in fs_ids
        }
        model = GfzslModel(
            config=config,
            dim=int(header["D"]),
            n_attributes=int(header["K"]),
            seen_ids=seen,
            unseen_ids=unseen,
            distributions=dists,
            regressors=tuple(regs),
            mixing=mixing,
            use_mixing=bool(int(header["use_mixing"])),
            fewshot_priors=priors,
            fewshot_stats=stats,
        )
    except (KeyError, ValueError, IndexError) as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
    if len(seen) != int(header["S"]) or len(unseen) != int(header["U"]):
        raise ModelFormatError(f"{path}: class counts disagree with id lists")
    return model
