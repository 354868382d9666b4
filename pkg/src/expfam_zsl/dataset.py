"""Feature/attribute tables, their file formats, and seen/unseen splits.

File formats
------------
Feature CSV
    One example per line: ``label,v1,...,vD``. No header. ``label`` is an
    integer class id, or ``-1`` for an unlabeled example.
Attribute CSV
    One class per line: ``class_id,a1,...,aK``.
Packed binary features
    ``b"EFZS"``, format version (u16), D (u64), N (u64), then N*D float64
    values row-major, then N int64 labels. All little-endian. A negative
    label (sign bit set) marks an unlabeled example.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "UNLABELED",
    "LoadError",
    "SplitError",
    "FeatureTable",
    "AttributeTable",
    "SplitView",
    "load_features",
    "save_features",
    "load_attributes",
    "save_attributes",
    "make_split",
    "validation_split",
    "zscore_attributes",
]

UNLABELED = -1
MAGIC = b"EFZS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHQQ")


class LoadError(ValueError):
    pass


class SplitError(ValueError):
    pass


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FeatureTable:
    rows: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) int64, UNLABELED for missing

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows.reshape(-1, 1) if rows.size else rows.reshape(0, 0)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if rows.ndim != 2 or rows.shape[0] != labels.size:
            raise ValueError(
                f"{labels.size} labels for a feature array of shape {rows.shape}"
            )
        bad = np.flatnonzero(~np.all(np.isfinite(rows), axis=1))
        if bad.size:
            raise ValueError(f"non-finite feature value in row {bad[0]}")
        labels = np.where(labels < 0, UNLABELED, labels)
        object.__setattr__(self, "rows", _freeze(rows))
        object.__setattr__(self, "labels", _freeze(labels))

    @property
    def n_examples(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def subset(self, index) -> "FeatureTable":
        index = np.asarray(index, dtype=np.int64)
        return FeatureTable(self.rows[index], self.labels[index])


@dataclass(frozen=True, eq=False)
class AttributeTable:
    class_ids: np.ndarray  # (C,) int64
    vectors: np.ndarray  # (C, K) float64
    _pos: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = np.array(self.class_ids, dtype=np.int64).reshape(-1)
        vecs = np.array(self.vectors, dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[0] != ids.size:
            raise ValueError(
                f"{ids.size} class ids for attribute array of shape {vecs.shape}"
            )
        uniq, counts = np.unique(ids, return_counts=True)
        if np.any(counts > 1):
            raise ValueError(f"duplicate class id {int(uniq[counts > 1][0])}")
        if not np.all(np.isfinite(vecs)):
            raise ValueError("non-finite attribute value")
        object.__setattr__(self, "class_ids", _freeze(ids))
        object.__setattr__(self, "vectors", _freeze(vecs))
        object.__setattr__(self, "_pos", {int(c): i for i, c in enumerate(ids)})

    @property
    def n_classes(self) -> int:
        return self.class_ids.size

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, class_id) -> bool:
        return int(class_id) in self._pos

    def vector(self, class_id) -> np.ndarray:
        try:
            return self.vectors[self._pos[int(class_id)]]
        except KeyError:
            raise KeyError(f"class {class_id} has no attribute vector") from None

    def matrix(self, class_ids: Iterable[int]) -> np.ndarray:
        """Attribute vectors of ``class_ids`` as columns, shape (K, n)."""
        return np.stack([self.vector(c) for c in class_ids], axis=1)


@dataclass(frozen=True, eq=False)
class SplitView:
    """Which classes are seen/unseen and which examples carry usable labels.

    ``labeled`` and ``unlabeled`` partition the example indices.
    ``train`` are labeled examples of seen classes (what inductive fitting
    uses); ``unseen_labeled`` are labeled examples of unseen classes, kept
    for few-shot updates and evaluation only.
    """

    seen_ids: tuple
    unseen_ids: tuple
    labels: np.ndarray
    labeled: np.ndarray
    unlabeled: np.ndarray
    train: np.ndarray
    unseen_labeled: np.ndarray

    @property
    def n_seen(self) -> int:
        return len(self.seen_ids)

    @property
    def n_unseen(self) -> int:
        return len(self.unseen_ids)

    @property
    def all_ids(self) -> tuple:
        return self.seen_ids + self.unseen_ids


# --------------------------------------------------------------------- CSV


def _parse_csv(path: Path, what: str, allow_empty: bool = False) -> list:
    parsed = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) < 2:
                raise LoadError(f"{path}: line {lineno}: expected an id and values")
            try:
                key = int(fields[0])
            except ValueError:
                raise LoadError(
                    f"{path}: line {lineno}: {what} {fields[0]!r} is not an integer"
                ) from None
            try:
                vals = [float(f) for f in fields[1:]]
            except ValueError as exc:
                raise LoadError(f"{path}: line {lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise LoadError(f"{path}: line {lineno}: non-finite value")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise LoadError(
                    f"{path}: line {lineno}: ragged row with {len(vals)} values, "
                    f"expected {width}"
                )
            parsed.append((key, vals))
    if not parsed and not allow_empty:
        raise LoadError(f"{path}: no rows")
    return parsed


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, keys, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for k, row in zip(keys, rows):
            fh.write(",".join([str(int(k))] + [_fmt(v) for v in row]) + "\n")


# ------------------------------------------------------------------ binary


def _read_binary(path: Path) -> FeatureTable:
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise LoadError(f"{path}: offset 0: truncated header")
    magic, version, D, N = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise LoadError(f"{path}: offset 0: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise LoadError(f"{path}: offset 4: unsupported format version {version}")
    if N == 0:
        raise LoadError(f"{path}: no rows")
    need = _HEADER.size + 8 * N * D + 8 * N
    if len(buf) != need:
        raise LoadError(
            f"{path}: offset {min(len(buf), need)}: expected {need} bytes, got {len(buf)}"
        )
    rows = np.frombuffer(buf, dtype="<f8", count=N * D, offset=_HEADER.size)
    rows = rows.reshape(N, D).astype(np.float64)
    finite = np.isfinite(rows)
    if not finite.all():
        i = int(np.flatnonzero(~finite.reshape(-1))[0])
        raise LoadError(
            f"{path}: offset {_HEADER.size + 8 * i}: non-finite value in row {i // D}"
        )
    labels = np.frombuffer(buf, dtype="<i8", count=N, offset=_HEADER.size + 8 * N * D)
    return FeatureTable(rows, labels.astype(np.int64))


def _write_binary(path: Path, table: FeatureTable) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, table.dim, table.n_examples))
        fh.write(np.ascontiguousarray(table.rows, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(table.labels, dtype="<i8").tobytes())


# ------------------------------------------------------------------ public


def load_features(path, format: str = "csv", allow_empty: bool = False) -> FeatureTable:
    """Load a feature table; see the module docstring for the formats.

    An empty file is an error unless ``allow_empty`` is set, in which case a
    table with zero rows (and zero columns) is returned.
    """
    path = Path(path)
    if format == "binary":
        return _read_binary(path)
    if format != "csv":
        raise LoadError(f"unknown feature format {format!r}")
    parsed = _parse_csv(path, "label", allow_empty=allow_empty)
    if not parsed:
        return FeatureTable(np.zeros((0, 0)), np.zeros(0, dtype=np.int64))
    labels = np.array([k for k, _ in parsed], dtype=np.int64)
    rows = np.array([v for _, v in parsed], dtype=np.float64)
    return FeatureTable(rows, labels)


def save_features(table: FeatureTable, path, format: str = "csv") -> None:
    path = Path(path)
    if format == "binary":
        _write_binary(path, table)
    elif format == "csv":
        _write_csv(path, table.labels, table.rows)
    else:
        raise ValueError(f"unknown feature format {format!r}")


def load_attributes(path, expected_count: Optional[int] = None) -> AttributeTable:
    path = Path(path)
    parsed = _parse_csv(path, "class id")
    seen = set()
    for k, _ in parsed:
        if k in seen:
            raise LoadError(f"{path}: duplicate class id {k}")
        seen.add(k)
    if expected_count is not None and len(parsed) != expected_count:
        raise LoadError(
            f"{path}: expected {expected_count} classes, found {len(parsed)}"
        )
    ids = np.array([k for k, _ in parsed], dtype=np.int64)
    vecs = np.array([v for _, v in parsed], dtype=np.float64)
    return AttributeTable(ids, vecs)


def save_attributes(table: AttributeTable, path) -> None:
    _write_csv(Path(path), table.class_ids, table.vectors)


def _id_tuple(ids) -> tuple:
    return tuple(int(c) for c in ids)


def make_split(
    features: FeatureTable,
    attributes: AttributeTable,
    seen_ids: Sequence[int],
    unseen_ids: Sequence[int],
) -> SplitView:
    """Partition examples according to a seen/unseen class assignment.

    Labeled examples of unseen classes are flagged in ``unseen_labeled`` and
    excluded from ``train``.
    """
    seen = _id_tuple(seen_ids)
    unseen = _id_tuple(unseen_ids)
    if len(set(seen)) != len(seen) or len(set(unseen)) != len(unseen):
        raise SplitError("duplicate class id in seen/unseen list")
    overlap = sorted(set(seen) & set(unseen))
    if overlap:
        raise SplitError(f"seen and unseen classes overlap: {overlap}")
    if not seen:
        raise SplitError("need at least one seen class")
    for c in seen + unseen:
        if c not in attributes:
            raise SplitError(f"class {c} has no attribute vector")
    labels = features.labels
    known = labels != UNLABELED
    missing = sorted(set(np.unique(labels[known]).tolist()) - set(attributes._pos))
    if missing:
        raise SplitError(f"label {missing[0]} has no attribute vector")
    labeled = np.flatnonzero(known)
    return SplitView(
        seen_ids=seen,
        unseen_ids=unseen,
        labels=labels,
        labeled=_freeze(labeled),
        unlabeled=_freeze(np.flatnonzero(~known)),
        train=_freeze(labeled[np.isin(labels[labeled], seen)]),
        unseen_labeled=_freeze(labeled[np.isin(labels[labeled], unseen)]),
    )


def validation_split(split: SplitView, n_val_classes: int, seed: int) -> tuple:
    """Hold out ``n_val_classes`` seen classes as pseudo-unseen classes.

    Returns ``(train, val)``. Both views have the remaining seen classes as
    seen and the held-out ones as unseen. In ``train`` the held-out classes'
    examples are moved to ``unlabeled`` (hidden from the fit); in ``val``
    they are labeled, so they can be scored.
    """
    S = split.n_seen
    if not 1 <= n_val_classes < S:
        raise SplitError(f"n_val_classes must be in [1, {S - 1}], got {n_val_classes}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(np.array(split.seen_ids, dtype=np.int64))
    val_ids = tuple(sorted(int(c) for c in order[:n_val_classes]))
    train_ids = tuple(c for c in split.seen_ids if c not in set(val_ids))

    labels = split.labels
    n = labels.size
    is_val = np.zeros(n, dtype=bool)
    is_val[split.train] = np.isin(labels[split.train], val_ids)
    is_train = np.zeros(n, dtype=bool)
    is_train[split.train] = ~is_val[split.train]
    labeled_mask = np.zeros(n, dtype=bool)
    labeled_mask[split.labeled] = True

    train_labeled = labeled_mask & ~is_val
    train_view = SplitView(
        seen_ids=train_ids,
        unseen_ids=val_ids,
        labels=labels,
        labeled=_freeze(np.flatnonzero(train_labeled)),
        unlabeled=_freeze(np.flatnonzero(~train_labeled)),
        train=_freeze(np.flatnonzero(is_train)),
        unseen_labeled=_freeze(np.array([], dtype=np.int64)),
    )
    val_view = SplitView(
        seen_ids=train_ids,
        unseen_ids=val_ids,
        labels=labels,
        labeled=split.labeled,
        unlabeled=split.unlabeled,
        train=_freeze(np.flatnonzero(is_train)),
        unseen_labeled=_freeze(np.flatnonzero(is_val)),
    )
    return train_view, val_view


def zscore_attributes(attributes: AttributeTable, seen_ids: Sequence[int]) -> AttributeTable:
    """Standardize every attribute dimension with seen-class statistics.

    Dimensions that are constant over the seen classes are only centered.
    """
    A = attributes.matrix(seen_ids)
    mu = A.mean(axis=1)
    sd = A.std(axis=1)
    sd = np.where(sd > 0, sd, 1.0)
    return AttributeTable(attributes.class_ids, (attributes.vectors - mu) / sd)
