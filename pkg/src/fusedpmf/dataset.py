"""Review/view ingestion, dense indexing, holdout splits and cold-start segments.

A :class:`Dataset` keeps reviews and views as parallel numpy columns indexed
by dense user and item ids.  Reviews keep their ingest order, which is also
the tie-break for equal timestamps inside an item.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DataError",
    "ReviewRecord",
    "ViewRecord",
    "Dataset",
    "SplitSpec",
    "build_dataset",
    "split_train_test",
    "segment_cold_start",
    "training_counts",
    "read_reviews_jsonl",
    "read_views_tsv",
    "write_reviews_jsonl",
    "write_views_tsv",
    "save_dataset",
    "load_dataset",
    "COLD_THRESHOLD",
]

DATASET_FORMAT = "fusedpmf-dataset"
DATASET_VERSION = 1

# users/items with fewer training ratings than this are cold
COLD_THRESHOLD = 4

SPLIT_STREAM = 1


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class ReviewRecord:
    user_id: str
    item_id: str
    rating: float
    helpful_yes: int = 0
    helpful_total: int = 0
    timestamp: int = 0

    def validate(self) -> None:
        if not isinstance(self.user_id, str) or not self.user_id:
            raise DataError(f"empty user id in {self!r}")
        if not isinstance(self.item_id, str) or not self.item_id:
            raise DataError(f"empty item id in {self!r}")
        if not (math.isfinite(self.rating) and 1 <= self.rating <= 5):
            raise DataError(f"rating {self.rating!r} outside [1, 5] for ({self.user_id}, {self.item_id})")
        if self.helpful_yes < 0 or self.helpful_total < 0:
            raise DataError(f"negative helpful counts for ({self.user_id}, {self.item_id})")
        if self.helpful_yes > self.helpful_total:
            raise DataError(
                f"helpful_yes={self.helpful_yes} > helpful_total={self.helpful_total} "
                f"for ({self.user_id}, {self.item_id})"
            )


@dataclass(frozen=True)
class ViewRecord:
    user_id: str
    item_id: str
    timestamp: int | None = None


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    repeats: int = 5

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be positive, got {self.repeats}")


@dataclass(eq=False)
class Dataset:
    """Indexed review network plus view log.

    Review columns (``users``, ``items``, ``ratings``, ``helpful_yes``,
    ``helpful_total``, ``timestamps``) are aligned; so are the view columns.
    Views are deduplicated per (user, item), keeping the first occurrence.
    """

    user_ids: list[str]
    item_ids: list[str]
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    helpful_yes: np.ndarray
    helpful_total: np.ndarray
    timestamps: np.ndarray
    view_users: np.ndarray
    view_items: np.ndarray
    view_timestamps: np.ndarray  # -1 where the log carried no timestamp
    user_index: dict[str, int] = field(init=False, repr=False)
    item_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.user_index = {u: i for i, u in enumerate(self.user_ids)}
        self.item_index = {p: j for j, p in enumerate(self.item_ids)}
        for arr in vars(self).values():
            if isinstance(arr, np.ndarray):
                arr.flags.writeable = False

    @property
    def n(self) -> int:
        return len(self.user_ids)

    @property
    def m(self) -> int:
        return len(self.item_ids)

    @property
    def n_reviews(self) -> int:
        return len(self.users)

    @property
    def sparsity(self) -> float:
        return 1.0 - self.n_reviews / (self.n * self.m)

    def reviews(self) -> list[ReviewRecord]:
        return [
            ReviewRecord(
                self.user_ids[u], self.item_ids[p], _as_rating(r), int(x), int(y), int(t)
            )
            for u, p, r, x, y, t in zip(
                self.users, self.items, self.ratings, self.helpful_yes, self.helpful_total, self.timestamps
            )
        ]

    def views(self) -> list[ViewRecord]:
        return [
            ViewRecord(self.user_ids[u], self.item_ids[p], None if t < 0 else int(t))
            for u, p, t in zip(self.view_users, self.view_items, self.view_timestamps)
        ]

    def purchase_positions(self, review_idx: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Chronological position (1-based) of each selected review within its item.

        Returns ``(position, reviewers)`` aligned with ``review_idx``, where
        ``reviewers`` is the number of selected reviews of the same item.
        Equal timestamps keep ingest order.
        """
        if review_idx is None:
            review_idx = np.arange(self.n_reviews)
        review_idx = np.asarray(review_idx, dtype=np.int64)
        items = self.items[review_idx]
        # lexsort: last key is primary; review_idx keeps ingest order on ties
        order = np.lexsort((review_idx, self.timestamps[review_idx], items))
        sorted_items = items[order]
        starts = np.r_[0, np.flatnonzero(np.diff(sorted_items)) + 1]
        counts = np.diff(np.r_[starts, len(order)])
        group_start = np.repeat(starts, counts)
        position = np.empty(len(order), dtype=np.int64)
        position[order] = np.arange(len(order)) - group_start + 1
        reviewers = np.empty(len(order), dtype=np.int64)
        reviewers[order] = np.repeat(counts, counts)
        return position, reviewers

    def item_order(self, item: int | str) -> list[tuple[int, int]]:
        """``[(user index, position), ...]`` for one item, earliest reviewer first."""
        j = self.item_index[item] if isinstance(item, str) else int(item)
        idx = np.flatnonzero(self.items == j)
        pos, _ = self.purchase_positions(idx)
        order = np.argsort(pos, kind="stable")
        return [(int(self.users[idx[k]]), int(pos[k])) for k in order]

    def fingerprint(self) -> str:
        return hashlib.sha256(_dataset_json(self).encode()).hexdigest()[:16]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return _dataset_json(self) == _dataset_json(other)


def _as_rating(r) -> float | int:
    r = float(r)
    return int(r) if r.is_integer() else r


def build_dataset(reviews: Iterable[ReviewRecord], views: Iterable[ViewRecord] = ()) -> Dataset:
    """Index review and view records into a :class:`Dataset`.

    Users and items get dense indices in order of first appearance, reviews
    first, then views.  A repeated (user, item) review is rejected.
    """
    reviews = list(reviews)
    views = list(views)
    if not reviews:
        raise DataError("no review records")

    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    seen: set[tuple[str, str]] = set()
    cols: list[tuple] = []
    for rec in reviews:
        rec.validate()
        key = (rec.user_id, rec.item_id)
        if key in seen:
            raise DataError(f"duplicate review for (user={rec.user_id!r}, item={rec.item_id!r})")
        seen.add(key)
        u = user_index.setdefault(rec.user_id, len(user_index))
        p = item_index.setdefault(rec.item_id, len(item_index))
        cols.append((u, p, float(rec.rating), int(rec.helpful_yes), int(rec.helpful_total), int(rec.timestamp)))

    vseen: set[tuple[int, int]] = set()
    vcols: list[tuple[int, int, int]] = []
    for rec in views:
        if not rec.user_id or not rec.item_id:
            raise DataError(f"empty id in view record {rec!r}")
        u = user_index.setdefault(rec.user_id, len(user_index))
        p = item_index.setdefault(rec.item_id, len(item_index))
        if (u, p) in vseen:
            continue
        vseen.add((u, p))
        vcols.append((u, p, -1 if rec.timestamp is None else int(rec.timestamp)))

    u, p, r, x, y, t = (np.array(c) for c in zip(*cols))
    if vcols:
        vu, vp, vt = (np.array(c, dtype=np.int64) for c in zip(*vcols))
    else:
        vu = vp = vt = np.zeros(0, dtype=np.int64)
    return Dataset(
        user_ids=list(user_index),
        item_ids=list(item_index),
        users=u.astype(np.int64),
        items=p.astype(np.int64),
        ratings=r.astype(np.float64),
        helpful_yes=x.astype(np.int64),
        helpful_total=y.astype(np.int64),
        timestamps=t.astype(np.int64),
        view_users=vu,
        view_items=vp,
        view_timestamps=vt,
    )


def split_train_test(d: Dataset, s: SplitSpec, repeat_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Random holdout of review indices, ``round(train_fraction * N)`` for training.

    Deterministic in ``(s.seed, repeat_index)``.  Both halves are kept
    non-empty, so the training size is clamped to ``[1, N - 1]``.
    """
    if not 0 <= repeat_index < s.repeats:
        raise ValueError(f"repeat_index {repeat_index} outside [0, {s.repeats})")
    N = d.n_reviews
    if N < 2:
        raise DataError(f"cannot split {N} review(s) into train and test")
    n_train = min(max(int(math.floor(s.train_fraction * N + 0.5)), 1), N - 1)
    rng = np.random.default_rng([s.seed, SPLIT_STREAM, repeat_index])
    perm = rng.permutation(N)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def training_counts(d: Dataset, train_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-user and per-item rating counts over the training reviews."""
    users = np.bincount(d.users[train_idx], minlength=d.n)
    items = np.bincount(d.items[train_idx], minlength=d.m)
    return users, items


def segment_cold_start(d: Dataset, train_idx: np.ndarray, test_idx: np.ndarray | None = None) -> tuple[set[int], set[int]]:
    """Users and items with fewer than four training ratings.

    Membership is decided from training counts only; ``test_idx`` is accepted
    for call symmetry with :func:`split_train_test` and does not influence the
    result.  Every indexed user/item is classified, including ones seen only
    in the test half or only in views.
    """
    users, items = training_counts(d, train_idx)
    return (
        {int(i) for i in np.flatnonzero(users < COLD_THRESHOLD)},
        {int(j) for j in np.flatnonzero(items < COLD_THRESHOLD)},
    )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def read_reviews_jsonl(path: str | Path) -> list[ReviewRecord]:
    """Parse Amazon-style review JSON lines.

    Keys used: ``reviewerID``, ``asin``, ``overall``, ``helpful`` (``[yes,
    total]``, optional) and ``unixReviewTime``.  Blank lines are skipped.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                helpful = obj.get("helpful", [0, 0])
                if len(helpful) != 2:
                    raise ValueError("helpful must be a two-element array")
                rec = ReviewRecord(
                    user_id=str(obj["reviewerID"]),
                    item_id=str(obj["asin"]),
                    rating=float(obj["overall"]),
                    helpful_yes=int(helpful[0]),
                    helpful_total=int(helpful[1]),
                    timestamp=int(obj.get("unixReviewTime", 0)),
                )
                rec.validate()
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
    return records


def read_views_tsv(path: str | Path) -> list[ViewRecord]:
    """Parse ``user<TAB>item[<TAB>timestamp]`` lines."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3) or not parts[0] or not parts[1]:
                raise DataError(f"{path}:{lineno}: expected 'user<TAB>item[<TAB>timestamp]'")
            ts = None
            if len(parts) == 3:
                try:
                    ts = int(parts[2])
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: bad timestamp {parts[2]!r}") from exc
            records.append(ViewRecord(parts[0], parts[1], ts))
    return records


def write_reviews_jsonl(records: Sequence[ReviewRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {
                "reviewerID": r.user_id,
                "asin": r.item_id,
                "overall": _as_rating(r.rating),
                "helpful": [int(r.helpful_yes), int(r.helpful_total)],
                "unixReviewTime": int(r.timestamp),
            }
            fh.write(json.dumps(obj) + "\n")


def write_views_tsv(records: Sequence[ViewRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in records:
            tail = "" if v.timestamp is None else f"\t{v.timestamp}"
            fh.write(f"{v.user_id}\t{v.item_id}{tail}\n")


def _dataset_json(d: Dataset) -> str:
    payload = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "users": d.user_ids,
        "items": d.item_ids,
        "reviews": {
            "user": d.users.tolist(),
            "item": d.items.tolist(),
            "rating": [_as_rating(r) for r in d.ratings],
            "helpful_yes": d.helpful_yes.tolist(),
            "helpful_total": d.helpful_total.tolist(),
            "timestamp": d.timestamps.tolist(),
        },
        "views": {
            "user": d.view_users.tolist(),
            "item": d.view_items.tolist(),
            "timestamp": d.view_timestamps.tolist(),
        },
    }
    return json.dumps(payload, sort_keys=True)


def save_dataset(d: Dataset, path: str | Path) -> None:
    """Write the dataset as a versioned JSON document.

    Layout: ``{"format", "version", "users": [ids], "items": [ids],
    "reviews": {column: [...]}, "views": {column: [...]}}`` where review and
    view columns hold dense indices aligned with ``users``/``items``.
    """
    Path(path).write_text(_dataset_json(d) + "\n", encoding="utf-8")


def load_dataset(path: str | Path) -> Dataset:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if obj.get("format") != DATASET_FORMAT:
            raise DataError(f"{path}: not a {DATASET_FORMAT} file")
        if obj.get("version") != DATASET_VERSION:
            raise DataError(f"{path}: unsupported dataset version {obj.get('version')!r}")
        rv, vw = obj["reviews"], obj["views"]
        d = Dataset(
            user_ids=list(obj["users"]),
            item_ids=list(obj["items"]),
            users=np.asarray(rv["user"], dtype=np.int64),
            items=np.asarray(rv["item"], dtype=np.int64),
            ratings=np.asarray(rv["rating"], dtype=np.float64),
            helpful_yes=np.asarray(rv["helpful_yes"], dtype=np.int64),
            helpful_total=np.asarray(rv["helpful_total"], dtype=np.int64),
            timestamps=np.asarray(rv["timestamp"], dtype=np.int64),
            view_users=np.asarray(vw["user"], dtype=np.int64),
            view_items=np.asarray(vw["item"], dtype=np.int64),
            view_timestamps=np.asarray(vw["timestamp"], dtype=np.int64),
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: corrupt dataset file ({exc})") from exc
    _check_loaded(d, path)
    return d


def _check_loaded(d: Dataset, path) -> None:
    sizes = {len(d.users), len(d.items), len(d.ratings), len(d.helpful_yes), len(d.helpful_total), len(d.timestamps)}
    vsizes = {len(d.view_users), len(d.view_items), len(d.view_timestamps)}
    if len(sizes) != 1 or len(vsizes) != 1 or d.n_reviews == 0:
        raise DataError(f"{path}: ragged or empty record columns")
    for col, bound in ((d.users, d.n), (d.items, d.m), (d.view_users, d.n), (d.view_items, d.m)):
        if len(col) and (col.min() < 0 or col.max() >= bound):
            raise DataError(f"{path}: index out of range")
    if np.any(d.helpful_yes > d.helpful_total):
        raise DataError(f"{path}: helpful_yes exceeds helpful_total")
