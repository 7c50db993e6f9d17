"""
Latent size and cold-start users
================================

A sweep over K with five random 80/20 holdouts, reporting the full-test MSE
together with the MSE restricted to users and items that have fewer than
four training ratings.
"""

# %%
from fusedpmf import (
    Hyperparameters,
    SplitSpec,
    SyntheticSpec,
    TrainConfig,
    build_dataset,
    format_table,
    generate_synthetic,
    sweep_K,
)

corpus = generate_synthetic(SyntheticSpec(n=150, m=80, density=0.15, seed=1))
d = build_dataset(corpus.reviews, corpus.views)
print(f"{d.n} users, {d.m} items, {d.n_reviews} reviews, sparsity {d.sparsity:.3f}")

# %%
cfg = TrainConfig(hp=Hyperparameters(learning_rate=0.05, max_epochs=2000,
                                     **{f"lambda_{x}": 0.01 for x in "WZEFCOSU"}), seed=1)
reports = sweep_K(d, SplitSpec(seed=1), cfg, [2, 5, 10], view_negatives=True)

# %%
# The first block is the summary; one per-repeat block follows per K.
print(format_table(reports))
print("cold pairs per repeat at K=5:", reports[1].cold_user_pairs, "users,", reports[1].cold_item_pairs, "items")
