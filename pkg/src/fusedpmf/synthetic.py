"""Synthetic review/view corpora with planted low-rank structure.

Ratings come from planted user/item factors through ``tanh`` and the rating
scale map.  Helpful votes, per-item purchase order and views are driven by a
side user factor ``A = rho * W + sqrt(1 - rho**2) * noise``, so ``rho``
controls how much the auxiliary channels know about the rating factors.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataset import ReviewRecord, ViewRecord, write_reviews_jsonl, write_views_tsv

__all__ = ["SyntheticSpec", "SyntheticCorpus", "generate_synthetic", "write_synthetic"]

SYNTH_STREAM = 3
T0 = 1_300_000_000
DAY = 86_400


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 200
    m: int = 100
    k: int = 5
    noise: float = 0.5
    rho: float = 0.9
    density: float = 0.2
    view_density: float = 0.5
    votes: float = 8.0
    signal: float = 1.5
    round_ratings: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.density <= 1:
            raise ValueError(f"density must lie in (0, 1], got {self.density}")
        if not 0 <= self.view_density <= 1:
            raise ValueError(f"view_density must lie in [0, 1], got {self.view_density}")
        if not 0 <= self.rho <= 1:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.noise < 0 or self.votes < 0 or self.signal <= 0:
            raise ValueError("noise and votes must be non-negative, signal positive")
        if min(self.n, self.m, self.k) < 1:
            raise ValueError("n, m, k must be positive")


@dataclass
class SyntheticCorpus:
    spec: SyntheticSpec
    reviews: list[ReviewRecord]
    views: list[ViewRecord]
    user_factors: np.ndarray   # planted W, rows follow user ids u0..u{n-1}
    item_factors: np.ndarray   # planted Z
    side_factors: np.ndarray   # A, shared by the helpfulness/centrality/view channels


def _ids(prefix: str, count: int) -> list[str]:
    width = len(str(count - 1))
    return [f"{prefix}{i:0{width}d}" for i in range(count)]


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    """Draw one corpus.  Deterministic in ``spec`` (including ``spec.seed``)."""
    rng = np.random.default_rng([spec.seed, SYNTH_STREAM])
    n, m, k = spec.n, spec.m, spec.k
    # scale so planted dot products have std ``signal``
    s = np.sqrt(spec.signal / np.sqrt(k))
    W = rng.normal(0, s, (n, k))
    Z = rng.normal(0, s, (m, k))
    A = spec.rho * W + np.sqrt(1 - spec.rho ** 2) * rng.normal(0, s, (n, k))
    F = rng.normal(0, s, (m, k))
    O = rng.normal(0, s, (m, k))
    U = rng.normal(0, s, (m, k))

    mask = rng.random((n, m)) < spec.density
    # every user and item gets at least one review
    mask[np.arange(n), rng.integers(0, m, n)] = True
    mask[rng.integers(0, n, m), np.arange(m)] = True
    rows, cols = np.nonzero(mask)

    clean = 3.0 + 2.0 * np.tanh(np.einsum("ij,ij->i", W[rows], Z[cols]))
    ratings = np.clip(clean + spec.noise * rng.normal(size=len(rows)), 1.0, 5.0)
    if spec.round_ratings:
        ratings = np.rint(ratings)

    # helpful votes: share of "yes" follows the side factor
    total = rng.poisson(spec.votes, len(rows))
    share = 0.5 * (1.0 + np.tanh(np.einsum("ij,ij->i", A[rows], F[cols])))
    yes = rng.binomial(total, share)

    # earlier reviewers are the ones with a high side score on O
    order_score = np.einsum("ij,ij->i", A[rows], O[cols]) + 0.1 * rng.normal(size=len(rows))
    timestamps = np.empty(len(rows), dtype=np.int64)
    for j in range(m):
        idx = np.flatnonzero(cols == j)
        ranked = idx[np.argsort(-order_score[idx], kind="stable")]
        timestamps[ranked] = T0 + DAY * (np.arange(len(ranked)) + 1) + rng.integers(0, DAY // 2, len(ranked))

    # views: logistic in the side score on U, calibrated to the requested density
    view_logit = A @ U.T
    offset = np.quantile(view_logit, 1 - spec.view_density) if spec.view_density > 0 else np.inf
    p_view = 1.0 / (1.0 + np.exp(-4.0 * (view_logit - offset)))
    vr, vc = np.nonzero(rng.random((n, m)) < p_view)

    users, items = _ids("u", n), _ids("i", m)
    reviews = [
        ReviewRecord(users[i], items[j], int(r) if float(r).is_integer() else float(r), int(x), int(y), int(t))
        for i, j, r, x, y, t in zip(rows, cols, ratings, yes, total, timestamps)
    ]
    views = [ViewRecord(users[i], items[j]) for i, j in zip(vr, vc)]
    return SyntheticCorpus(spec, reviews, views, W, Z, A)


def write_synthetic(corpus: SyntheticCorpus, out_dir: str | Path) -> dict[str, Path]:
    """Write ``reviews.jsonl``, ``views.tsv`` and ``planted.npz`` (+ ``synth.json``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "reviews": out / "reviews.jsonl",
        "views": out / "views.tsv",
        "planted": out / "planted.npz",
        "spec": out / "synth.json",
    }
    write_reviews_jsonl(corpus.reviews, paths["reviews"])
    write_views_tsv(corpus.views, paths["views"])
    with open(paths["planted"], "wb") as fh:
        np.savez(fh, W=corpus.user_factors, Z=corpus.item_factors, A=corpus.side_factors)
    paths["spec"].write_text(json.dumps(asdict(corpus.spec), sort_keys=True, indent=2) + "\n")
    return paths
