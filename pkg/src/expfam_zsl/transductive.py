"""EM refinement of class distributions from unlabeled data.

The unlabeled examples are modelled as a mixture whose components are the
(unseen) classes, initialized from the inductive model with uniform mixing
proportions. Rows with a known class can be clamped: their responsibilities
are fixed one-hot, which turns the procedure into semi-supervised EM.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .expfam import FamilySpec, estimate, log_density, to_unconstrained

__all__ = [
    "EmConfig",
    "MixtureState",
    "EmTrace",
    "init_mixture",
    "e_step",
    "m_step",
    "mixture_loglik",
    "run_em",
]


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 100
    tol: float = 1e-6
    min_mix: float = 1e-8
    var_floor: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        for name in ("tol", "min_mix", "var_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class MixtureState:
    component_ids: tuple
    mixing: np.ndarray
    components: tuple
    loglik: float = -np.inf

    @property
    def n_components(self) -> int:
        return len(self.component_ids)


@dataclass
class EmTrace:
    """Per-iteration diagnostics. Row 0 is the initial (inductive) mixture."""

    iteration: List[int] = field(default_factory=list)
    loglik: List[float] = field(default_factory=list)
    max_delta: List[float] = field(default_factory=list)
    converged: bool = False
    n_resets: int = 0

    def __len__(self):
        return len(self.iteration)

    @property
    def n_iter(self) -> int:
        return len(self.iteration) - 1

    def to_csv(self, path) -> None:
        rows = ["iteration,loglik,max_delta"]
        rows += [
            f"{i},{ll!r},{d!r}"
            for i, ll, d in zip(self.iteration, self.loglik, self.max_delta)
        ]
        Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def init_mixture(model, component_ids: Optional[Sequence[int]] = None) -> MixtureState:
    ids = tuple(model.unseen_ids if component_ids is None else (int(c) for c in component_ids))
    if not ids:
        raise ValueError("need at least one mixture component")
    for c in ids:
        if c not in model.distributions:
            raise KeyError(f"unknown class {c}")
    U = len(ids)
    return MixtureState(ids, np.full(U, 1.0 / U), tuple(model.distributions[c] for c in ids))


def _log_joint(state: MixtureState, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("no examples")
    out = np.empty((X.shape[0], state.n_components))
    for j, dist in enumerate(state.components):
        out[:, j] = log_density(dist, X)
    return out + np.log(state.mixing)


def _responsibilities(log_joint: np.ndarray, clamp_rows, clamp_cols):
    norm = logsumexp(log_joint, axis=1, keepdims=True)
    resp = np.exp(log_joint - norm)
    row_ll = norm[:, 0]
    if clamp_rows is not None and clamp_rows.size:
        resp[clamp_rows] = 0.0
        resp[clamp_rows, clamp_cols] = 1.0
        row_ll = row_ll.copy()
        row_ll[clamp_rows] = log_joint[clamp_rows, clamp_cols]
    return resp, float(row_ll.sum())


def e_step(state: MixtureState, X) -> np.ndarray:
    """Posterior component probabilities for every row of ``X``, shape (N, U)."""
    resp, _ = _responsibilities(_log_joint(state, X), None, None)
    return resp


def mixture_loglik(state: MixtureState, X) -> float:
    return _responsibilities(_log_joint(state, X), None, None)[1]


def m_step(
    resp,
    X,
    family: FamilySpec,
    config: EmConfig = EmConfig(),
    component_ids: Optional[Sequence[int]] = None,
    fallback: Optional[Sequence] = None,
) -> MixtureState:
    """Re-estimate mixing proportions and components from responsibilities.

    A component whose effective count falls below ``min_mix * N`` is reset
    to its entry in ``fallback`` (the initial distribution) instead of being
    estimated from almost no data.
    """
    R = np.atleast_2d(np.asarray(resp, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    N, U = R.shape
    if X.shape[0] != N:
        raise ValueError(f"{N} responsibility rows for {X.shape[0]} examples")
    ids = tuple(range(U)) if component_ids is None else tuple(component_ids)
    fam = dataclasses.replace(family, var_floor=config.var_floor)

    counts = R.sum(axis=0)
    comps = []
    for j in range(U):
        if counts[j] < config.min_mix * N:
            if fallback is None:
                raise ValueError(f"component {ids[j]} has no support")
            comps.append(fallback[j])
        else:
            comps.append(estimate(fam, X, weights=R[:, j]))

    pi = counts / N
    low = pi < config.min_mix
    if low.any():
        pi[low] = config.min_mix
        pi[~low] *= (1.0 - config.min_mix * low.sum()) / pi[~low].sum()
    pi /= pi.sum()
    return MixtureState(ids, pi, tuple(comps))


def _max_delta(a: MixtureState, b: MixtureState) -> float:
    d = max(
        float(np.max(np.abs(to_unconstrained(p) - to_unconstrained(q))))
        for p, q in zip(a.components, b.components)
    )
    return max(d, float(np.max(np.abs(a.mixing - b.mixing))))


def run_em(
    model,
    X,
    component_ids: Optional[Sequence[int]] = None,
    config: EmConfig = EmConfig(),
    clamped: Optional[Mapping[int, int]] = None,
):
    """Refine ``model``'s component distributions by EM on ``X``.

    Parameters
    ----------
    model : GfzslModel
    X : (N, D) array
        Unlabeled examples (plus any clamped ones).
    component_ids : sequence of int, optional
        Classes to refine; defaults to the model's unseen classes.
    config : EmConfig
    clamped : mapping of row index -> class id, optional
        Rows whose class is known; their responsibilities stay one-hot.

    Returns
    -------
    (GfzslModel, EmTrace)
        The model with refined component distributions and the fitted
        mixing proportions, and the per-iteration trace. Iteration stops when
        ``|delta loglik| < tol * (1 + |loglik|)`` or after ``max_iters``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.size == 0 or X.shape[0] == 0:
        raise ValueError("no unlabeled examples")
    if X.shape[1] != model.dim:
        raise ValueError(f"examples have {X.shape[1]} dims, model has {model.dim}")
    state = init_mixture(model, component_ids)
    ids = state.component_ids
    initial = state.components

    clamp_rows = clamp_cols = None
    if clamped:
        col = {c: j for j, c in enumerate(ids)}
        rows, cols = [], []
        for n, c in sorted(clamped.items()):
            if int(c) not in col:
                raise ValueError(f"clamped class {c} is not a mixture component")
            if not 0 <= int(n) < X.shape[0]:
                raise IndexError(f"clamped row {n} out of range")
            rows.append(int(n))
            cols.append(col[int(c)])
        clamp_rows = np.array(rows, dtype=np.int64)
        clamp_cols = np.array(cols, dtype=np.int64)

    fam = model.config.family
    resp, ll = _responsibilities(_log_joint(state, X), clamp_rows, clamp_cols)
    state = dataclasses.replace(state, loglik=ll)
    trace = EmTrace([0], [ll], [0.0])
    for it in range(1, config.max_iters + 1):
        new = m_step(resp, X, fam, config, ids, fallback=initial)
        trace.n_resets += sum(
            1 for a, b in zip(new.components, initial) if a is b
        )
        resp, new_ll = _responsibilities(_log_joint(new, X), clamp_rows, clamp_cols)
        new = dataclasses.replace(new, loglik=new_ll)
        trace.iteration.append(it)
        trace.loglik.append(new_ll)
        trace.max_delta.append(_max_delta(state, new))
        done = abs(new_ll - ll) < config.tol * (1.0 + abs(new_ll))
        state, ll = new, new_ll
        if done:
            trace.converged = True
            break

    refined = model.with_distributions(dict(zip(ids, state.components)))
    mixing = {c: float(p) for c, p in zip(ids, state.mixing)}
    return refined.replace(mixing=mixing), trace
