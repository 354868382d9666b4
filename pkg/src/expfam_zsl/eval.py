"""Metrics and experimental protocols.

Protocols draw all randomness from one integer seed. Each trial gets its own
generator spawned from that seed, so trials can run on worker threads and
still produce identical numbers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .dataset import AttributeTable, FeatureTable, SplitView, validation_split
from .fewshot import apply_fewshot
from .model import GfzslConfig, GfzslModel, classify_batch, fit

__all__ = [
    "EvalReport",
    "ProtocolResult",
    "InsufficientPoolError",
    "evaluate",
    "tune",
    "fewshot_protocol",
    "generalized_protocol",
]


class InsufficientPoolError(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: Dict[int, float]
    recall: Dict[int, float]
    macro_precision: float
    macro_recall: float
    classes: Tuple[int, ...]
    confusion: np.ndarray = field(compare=False)  # rows: truth, cols: prediction

    def to_text(self) -> str:
        lines = [
            f"accuracy         {self.accuracy:.6f}",
            f"macro precision  {self.macro_precision:.6f}",
            f"macro recall     {self.macro_recall:.6f}",
            "class  precision  recall",
        ]
        for c in sorted(self.recall):
            lines.append(f"{c:5d}  {self.precision[c]:9.6f}  {self.recall[c]:6.6f}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["class,precision,recall"]
        rows += [f"{c},{self.precision[c]!r},{self.recall[c]!r}" for c in sorted(self.recall)]
        rows.append(f"macro,{self.macro_precision!r},{self.macro_recall!r}")
        rows.append(f"accuracy,{self.accuracy!r},")
        return "\n".join(rows) + "\n"


def evaluate(predictions, truth) -> EvalReport:
    """Top-1 accuracy and per-class / macro precision and recall.

    Macro averages run over the classes present in ``truth``. A class that
    is never predicted has precision 0.
    """
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    true = np.asarray(truth, dtype=np.int64).reshape(-1)
    if pred.size != true.size:
        raise ValueError(f"{pred.size} predictions for {true.size} labels")
    if pred.size == 0:
        raise ValueError("nothing to evaluate")
    classes = np.union1d(pred, true)
    pi = np.searchsorted(classes, pred)
    ti = np.searchsorted(classes, true)
    conf = np.zeros((classes.size, classes.size), dtype=np.int64)
    np.add.at(conf, (ti, pi), 1)

    tp = np.diag(conf)
    n_pred = conf.sum(axis=0)
    n_true = conf.sum(axis=1)
    present = np.flatnonzero(n_true > 0)
    prec = {int(classes[k]): (tp[k] / n_pred[k] if n_pred[k] else 0.0) for k in present}
    rec = {int(classes[k]): tp[k] / n_true[k] for k in present}
    return EvalReport(
        accuracy=float(tp.sum() / conf.sum()),
        precision={c: float(v) for c, v in prec.items()},
        recall={c: float(v) for c, v in rec.items()},
        macro_precision=float(np.mean(list(prec.values()))),
        macro_recall=float(np.mean(list(rec.values()))),
        classes=tuple(int(c) for c in classes),
        confusion=conf,
    )


def _accuracy(model, X, y, candidates) -> float:
    return float(np.mean(classify_batch(model, X, candidates) == y))


def tune(
    split: SplitView,
    features: FeatureTable,
    attributes: AttributeTable,
    grid: Sequence[Tuple[float, float]],
    base_config: Optional[GfzslConfig] = None,
    n_val_classes: Optional[int] = None,
    seed: int = 0,
):
    """Choose ``(lambda_mu, lambda_sigma)`` by zero-shot accuracy on held-out seen classes.

    A random ``n_val_classes`` of the seen classes (default a quarter) act
    as pseudo-unseen classes. Each grid point is fitted on the rest and
    scored on the held-out examples. Ties go to the lexicographically
    smallest pair.

    Returns
    -------
    best : (float, float)
    scores : dict mapping each pair to its validation accuracy
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    if n_val_classes is None:
        n_val_classes = max(1, split.n_seen // 4)
    base = base_config or GfzslConfig(1.0, 1.0)
    train_view, val_view = validation_split(split, n_val_classes, seed)
    X = features.rows[val_view.unseen_labeled]
    y = features.labels[val_view.unseen_labeled]
    if y.size == 0:
        raise ValueError("validation classes have no labeled examples")

    scores = {}
    best, best_acc = None, -np.inf
    for pair in sorted({(float(a), float(b)) for a, b in grid}):
        cfg = GfzslConfig(pair[0], pair[1], base.family, base.regressor, base.kernel)
        model = fit(train_view, features, attributes, cfg)
        acc = _accuracy(model, X, y, val_view.unseen_ids)
        scores[pair] = acc
        if acc > best_acc:
            best, best_acc = pair, acc
    return best, scores


@dataclass(frozen=True)
class ProtocolResult:
    shots: Tuple[int, ...]
    accuracy: np.ndarray  # (trials, len(shots))
    seen_accuracy: Optional[np.ndarray] = None

    @property
    def mean(self) -> np.ndarray:
        return self.accuracy.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        ddof = 1 if self.accuracy.shape[0] > 1 else 0
        return self.accuracy.std(axis=0, ddof=ddof)

    def to_csv(self) -> str:
        rows = ["shots,mean,std,trials"]
        n = self.accuracy.shape[0]
        rows += [f"{s},{m!r},{d!r},{n}" for s, m, d in zip(self.shots, self.mean, self.std)]
        return "\n".join(rows) + "\n"

    def to_text(self) -> str:
        head = "shots " + " ".join(f"{s:>15d}" for s in self.shots)
        body = "acc%  " + " ".join(
            f"{100 * m:7.2f} +- {100 * d:4.2f}" for m, d in zip(self.mean, self.std)
        )
        return head + "\n" + body + "\n"


def _pool_by_class(pool: FeatureTable, classes, need: int) -> Dict[int, np.ndarray]:
    out = {}
    for c in classes:
        idx = np.flatnonzero(pool.labels == c)
        if idx.size < need:
            raise InsufficientPoolError(
                f"class {c} has {idx.size} labeled examples, need at least {need}"
            )
        out[c] = idx
    return out


def _run_trials(fn, seed: int, trials: int, threads: Optional[int]):
    if trials < 1:
        raise ValueError("need at least one trial")
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]
    if threads == 1:
        return [fn(r) for r in streams]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, streams))


def _shot_protocol(model, pool, shots, trials, seed, threads, generalized):
    shots = tuple(int(s) for s in shots)
    if any(s < 0 for s in shots):
        raise ValueError("shot counts must be nonnegative")
    unseen = tuple(model.unseen_ids)
    by_class = _pool_by_class(pool, unseen, max(shots))
    candidates = model.class_ids if generalized else unseen
    is_unseen = np.isin(pool.labels, unseen)
    seen_rows = np.flatnonzero(~is_unseen & np.isin(pool.labels, model.seen_ids))

    def trial(rng):
        # Nested draws: the s-shot sample of a class is a prefix of one permutation.
        perms = {c: rng.permutation(by_class[c]) for c in unseen}
        acc = np.empty(len(shots))
        seen_acc = np.empty(len(shots))
        for j, s in enumerate(shots):
            taken = np.concatenate([perms[c][:s] for c in unseen]).astype(np.int64)
            m = apply_fewshot(model, pool.subset(taken)) if s else model
            test = np.ones(pool.n_examples, dtype=bool)
            test[taken] = False
            test &= is_unseen
            if not test.any():
                raise InsufficientPoolError(f"no unseen-class test examples left at {s} shots")
            acc[j] = _accuracy(m, pool.rows[test], pool.labels[test], candidates)
            if generalized and seen_rows.size:
                seen_acc[j] = _accuracy(m, pool.rows[seen_rows], pool.labels[seen_rows], candidates)
            else:
                seen_acc[j] = np.nan
        return acc, seen_acc

    results = _run_trials(trial, seed, trials, threads)
    acc = np.stack([r[0] for r in results])
    seen_acc = np.stack([r[1] for r in results]) if generalized else None
    return ProtocolResult(shots, acc, seen_acc)


def fewshot_protocol(
    model: GfzslModel,
    pool: FeatureTable,
    shots: Sequence[int] = (2, 5, 10, 15, 20),
    trials: int = 100,
    seed: int = 0,
    threads: Optional[int] = None,
) -> ProtocolResult:
    """Few-shot accuracy over unseen classes.

    For every trial and shot count ``s``, ``s`` labeled examples per unseen
    class are drawn without replacement from ``pool``, used to update the
    model, and removed from the test set; accuracy is measured on the
    remaining unseen-class examples with unseen classes as candidates.
    Rows of ``pool`` from other classes are ignored.
    """
    return _shot_protocol(model, pool, shots, trials, seed, threads, generalized=False)


def generalized_protocol(
    model: GfzslModel,
    pool: FeatureTable,
    shots: Sequence[int] = (2, 5, 10, 15, 20),
    trials: int = 100,
    seed: int = 0,
    threads: Optional[int] = None,
) -> ProtocolResult:
    """Like :func:`fewshot_protocol`, but every seen and unseen class is a candidate.

    ``accuracy`` is measured on unseen-class test examples; ``seen_accuracy``
    on the seen-class rows of ``pool``, which are never used for updates.
    """
    return _shot_protocol(model, pool, shots, trials, seed, threads, generalized=True)
