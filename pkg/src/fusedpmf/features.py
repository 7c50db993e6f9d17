"""Feedback channels: ratings, helpfulness, review-network centrality and views.

Every channel is a sparse user x item observation set with a raw value per
observed pair and the interval used to map raw values onto [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .dataset import Dataset

__all__ = [
    "SignRule",
    "CentralityParams",
    "FeedbackChannel",
    "helpfulness_score",
    "most_recent_centrality",
    "top_rank_centrality",
    "total_centrality",
    "rank_reviews",
    "scale_value",
    "unscale_value",
    "rating_channel",
    "explicit_channels",
    "build_view_channel",
    "build_channels",
    "write_channel_triplets",
    "RATING_INTERVAL",
    "MODEL_INTERVAL",
]

RATING_INTERVAL = (1.0, 5.0)
MODEL_INTERVAL = (-1.0, 1.0)
VIEW_INTERVAL = (0.0, 1.0)


@dataclass(frozen=True)
class SignRule:
    """Ratings at or above ``positive_threshold`` come from positive reviewers."""

    positive_threshold: float = 3

    def theta(self, rating) -> int:
        return 2 if rating >= self.positive_threshold else 1

    def sign(self, rating):
        return np.where(np.asarray(rating) >= self.positive_threshold, 1.0, -1.0)


@dataclass(frozen=True)
class CentralityParams:
    alpha: float = 0.5

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True, eq=False)
class FeedbackChannel:
    """Sparse observations of one feedback kind (``R``, ``H``, ``D`` or ``V``)."""

    kind: str
    rows: np.ndarray
    cols: np.ndarray
    raw: np.ndarray
    interval: tuple[float, float]
    shape: tuple[int, int]

    def __post_init__(self):
        if not (len(self.rows) == len(self.cols) == len(self.raw)):
            raise ValueError("ragged channel columns")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def scaled(self) -> np.ndarray:
        if len(self.raw) == 0:
            return np.zeros(0)
        return scale_value(self.raw, self.interval, MODEL_INTERVAL)

    def indicator(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    def as_dict(self) -> dict[tuple[int, int], float]:
        return dict(zip(zip(self.rows.tolist(), self.cols.tolist()), self.raw.tolist()))

    @classmethod
    def empty(cls, kind: str, shape: tuple[int, int], interval=MODEL_INTERVAL) -> "FeedbackChannel":
        z = np.zeros(0, dtype=np.int64)
        return cls(kind, z, z.copy(), np.zeros(0), interval, shape)


# ---------------------------------------------------------------------------
# Scalar feature formulas
# ---------------------------------------------------------------------------

def helpfulness_score(x: int, y: int, rating, rule: SignRule = SignRule()) -> float | None:
    """Signed quadratic vote score ``(-1)**theta * x**2 / y``.

    Returns ``None`` when nobody voted (``y == 0``): the pair is then left
    out of the helpfulness channel instead of being scored 0.
    """
    if x < 0 or y < 0:
        raise ValueError(f"vote counts must be non-negative, got x={x}, y={y}")
    if x > y:
        raise ValueError(f"helpful votes x={x} exceed total votes y={y}")
    if y == 0:
        return None
    return (-1) ** rule.theta(rating) * x * x / y


@lru_cache(maxsize=8)
def _harmonic_table(size: int) -> np.ndarray:
    # Neumaier-compensated running sum; plain cumsum drifts by ulps
    out = np.zeros(size + 1)
    s = c = 0.0
    for r in range(1, size + 1):
        t = 1.0 / r
        total = s + t
        if abs(s) >= abs(t):
            c += (s - total) + t
        else:
            c += (t - total) + s
        s = total
        out[r] = s + c
    return out


def _harmonic(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=np.int64)
    if k.size == 0:
        return np.zeros(k.shape)
    size = 1 << max(int(k.max()), 1).bit_length()
    return _harmonic_table(size)[k]


def most_recent_centrality(i: int, n: int) -> float:
    """Recency exposure of the ``i``-th of ``n`` reviews: harmonic number ``H(n - i)``.

    Each later buyer reads this review as her ``r``-th most recent one and
    contributes ``1 / r``.
    """
    if not 1 <= i <= n:
        raise ValueError(f"purchase position {i} outside [1, {n}]")
    return float(_harmonic(np.array([n - i]))[0])


def top_rank_centrality(k: int, i: int, n: int) -> float:
    """Rank exposure ``(1 / k)**2 * (n - i)`` of a review ranked ``k`` in its group."""
    if k < 1:
        raise ValueError(f"rank must be >= 1, got {k}")
    if not 1 <= i <= n:
        raise ValueError(f"purchase position {i} outside [1, {n}]")
    return (n - i) / (k * k)


def total_centrality(top: float, most: float, rating, p: CentralityParams = CentralityParams(),
                     rule: SignRule = SignRule()) -> float:
    if top < 0 or most < 0:
        raise ValueError("centrality components must be non-negative")
    return (-1) ** rule.theta(rating) * (p.alpha * top + (1 - p.alpha) * most)


def rank_reviews(magnitudes, positive, timestamps=None, users=None) -> np.ndarray:
    """Rank one item's reviews by helpfulness, positive and critical groups apart.

    Larger ``|H|`` gets the smaller rank; ties go to the earlier timestamp,
    then the smaller user index.  Entries whose magnitude is NaN (no votes)
    are not ranked and get rank 0.
    """
    mag = np.abs(np.asarray(magnitudes, dtype=np.float64))
    positive = np.asarray(positive, dtype=bool)
    n = len(mag)
    ts = np.zeros(n, dtype=np.int64) if timestamps is None else np.asarray(timestamps)
    us = np.arange(n) if users is None else np.asarray(users)
    ranks = np.zeros(n, dtype=np.int64)
    for group in (True, False):
        idx = np.flatnonzero((positive == group) & ~np.isnan(mag))
        order = idx[np.lexsort((us[idx], ts[idx], -mag[idx]))]
        ranks[order] = np.arange(1, len(order) + 1)
    return ranks


def scale_value(x, src: tuple[float, float], dst: tuple[float, float] = MODEL_INTERVAL):
    """Affine map of ``x`` from interval ``src`` onto ``dst``."""
    a, b = src
    c, d = dst
    if not (a < b and c < d):
        raise ValueError(f"degenerate interval {src} -> {dst}")
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any((x_arr < a) | (x_arr > b)) or np.any(np.isnan(x_arr)):
        raise ValueError(f"value outside [{a}, {b}]")
    out = c + (x_arr - a) * ((d - c) / (b - a))
    return out if out.ndim else float(out)


def unscale_value(x, src: tuple[float, float], dst: tuple[float, float] = MODEL_INTERVAL):
    """Inverse of :func:`scale_value`: maps ``x`` from ``dst`` back onto ``src``."""
    return scale_value(x, dst, src)


# ---------------------------------------------------------------------------
# Channel construction
# ---------------------------------------------------------------------------

def rating_channel(d: Dataset, review_idx: np.ndarray) -> FeedbackChannel:
    review_idx = np.asarray(review_idx, dtype=np.int64)
    return FeedbackChannel(
        "R", d.users[review_idx], d.items[review_idx], d.ratings[review_idx].astype(np.float64),
        RATING_INTERVAL, (d.n, d.m),
    )


def _symmetric_interval(raw: np.ndarray) -> tuple[float, float]:
    bound = float(np.max(np.abs(raw))) if len(raw) else 0.0
    if bound == 0.0:
        bound = 1.0
    return (-bound, bound)


def explicit_channels(d: Dataset, review_idx: np.ndarray, rule: SignRule = SignRule(),
                      params: CentralityParams = CentralityParams()) -> tuple[FeedbackChannel, FeedbackChannel]:
    """Helpfulness and centrality channels computed from the selected reviews only.

    Purchase positions, reviewer counts and helpfulness ranks are all taken
    within ``review_idx`` so held-out reviews never leak into the features.
    """
    idx = np.asarray(review_idx, dtype=np.int64)
    users, items = d.users[idx], d.items[idx]
    x = d.helpful_yes[idx].astype(np.float64)
    y = d.helpful_total[idx].astype(np.float64)
    sign = rule.sign(d.ratings[idx])
    voted = y > 0

    h = np.full(len(idx), np.nan)
    h[voted] = sign[voted] * x[voted] ** 2 / y[voted]

    position, reviewers = d.purchase_positions(idx)
    followers = reviewers - position

    # rank within (item, sign group) by |H| desc, timestamp asc, user asc
    positive = sign > 0
    ts = d.timestamps[idx]
    ranks = np.zeros(len(idx), dtype=np.int64)
    if voted.any():
        cand = np.flatnonzero(voted)
        order = cand[np.lexsort((users[cand], ts[cand], -np.abs(h[cand]), ~positive[cand], items[cand]))]
        key_item, key_grp = items[order], positive[order]
        new = np.r_[True, (key_item[1:] != key_item[:-1]) | (key_grp[1:] != key_grp[:-1])]
        starts = np.flatnonzero(new)
        counts = np.diff(np.r_[starts, len(order)])
        ranks[order] = np.arange(len(order)) - np.repeat(starts, counts) + 1

    top = np.zeros(len(idx))
    top[voted] = followers[voted] / ranks[voted].astype(np.float64) ** 2
    most = _harmonic(followers)
    dval = sign * (params.alpha * top + (1 - params.alpha) * most)

    hchan = FeedbackChannel("H", users[voted], items[voted], h[voted], _symmetric_interval(h[voted]), (d.n, d.m))
    dchan = FeedbackChannel("D", users, items, dval, _symmetric_interval(dval), (d.n, d.m))
    return hchan, dchan


def build_view_channel(d: Dataset, negatives: bool = False, users: np.ndarray | None = None,
                       items: np.ndarray | None = None) -> FeedbackChannel:
    """Binary view channel.

    By default only viewed pairs are observed (raw 1, scaled +1).  With
    ``negatives=True`` every pair of the indexed users x items is observed
    and unviewed pairs carry raw 0 (scaled -1); ``users``/``items`` restrict
    that dense block to given index sets.
    """
    shape = (d.n, d.m)
    if not negatives:
        return FeedbackChannel("V", d.view_users.copy(), d.view_items.copy(),
                               np.ones(len(d.view_users)), VIEW_INTERVAL, shape)
    users = np.arange(d.n) if users is None else np.unique(users)
    items = np.arange(d.m) if items is None else np.unique(items)
    viewed = np.zeros(shape, dtype=bool)
    viewed[d.view_users, d.view_items] = True
    rows = np.repeat(users, len(items))
    cols = np.tile(items, len(users))
    return FeedbackChannel("V", rows, cols, viewed[rows, cols].astype(np.float64), VIEW_INTERVAL, shape)


def build_channels(d: Dataset, review_idx: np.ndarray | None = None, rule: SignRule = SignRule(),
                   params: CentralityParams = CentralityParams(),
                   view_negatives: bool = False) -> dict[str, FeedbackChannel]:
    """All four channels for a training subset (all reviews when ``review_idx`` is None)."""
    if review_idx is None:
        review_idx = np.arange(d.n_reviews)
    h, dch = explicit_channels(d, review_idx, rule, params)
    return {
        "R": rating_channel(d, review_idx),
        "H": h,
        "D": dch,
        "V": build_view_channel(d, negatives=view_negatives),
    }


def write_channel_triplets(channel: FeedbackChannel, d: Dataset, path: str | Path) -> None:
    """``user<TAB>item<TAB>raw_value<TAB>scaled_value`` lines, opaque ids."""
    scaled = channel.scaled
    with open(path, "w", encoding="utf-8") as fh:
        for u, p, r, s in zip(channel.rows, channel.cols, channel.raw, scaled):
            fh.write(f"{d.user_ids[u]}\t{d.item_ids[p]}\t{float(r)!r}\t{float(s)!r}\n")
