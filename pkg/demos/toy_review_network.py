"""
Feedback features on a six-user toy network
===========================================

Five users buy P1 in order U1..U5, U4 and U6 buy P2.  We compute the
helpfulness score and the signed total centrality of every review, then
look at the scaled values the factorization actually consumes.
"""

# %%
from pathlib import Path

import numpy as np

from fusedpmf import build_channels, build_dataset, read_reviews_jsonl, read_views_tsv

data = Path(__file__).resolve().parent.parent / "tests" / "data"
d = build_dataset(read_reviews_jsonl(data / "toy_reviews.jsonl"), read_views_tsv(data / "toy_views.tsv"))
print(f"{d.n} users, {d.m} items, {d.n_reviews} reviews, sparsity {d.sparsity:.3f}")

# %%
# Purchase order per item; ties in timestamp keep file order.
for item in d.item_ids:
    print(item, [(d.user_ids[u], pos) for u, pos in d.item_order(item)])

# %%
# H is x^2/y signed by the rating group; D mixes a rank term and a harmonic
# recency term.  U5 has no votes, so it has no H entry and a zero D.
channels = build_channels(d)
H, D = channels["H"].as_dict(), channels["D"].as_dict()
print(f"{'user':4} {'item':4} {'rating':>6} {'H':>8} {'D':>8}")
for k in range(d.n_reviews):
    key = (int(d.users[k]), int(d.items[k]))
    h = H.get(key)
    print(f"{d.user_ids[key[0]]:4} {d.item_ids[key[1]]:4} {d.ratings[k]:6.0f} "
          f"{'-' if h is None else f'{h:8.4f}':>8} {D[key]:8.4f}")

# %%
# Each channel is mapped into [-1, 1] using a symmetric interval around zero,
# so the sign of a critical reviewer survives scaling.
for kind in "RHDV":
    ch = channels[kind]
    print(kind, "interval", ch.interval, "scaled range",
          (float(np.min(ch.scaled)), float(np.max(ch.scaled))) if len(ch) else "empty")
