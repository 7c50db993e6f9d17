from pathlib import Path

import numpy as np
import pytest

from fusedpmf.dataset import build_dataset, read_reviews_jsonl, read_views_tsv
from fusedpmf.features import build_channels
from fusedpmf.synthetic import SyntheticSpec, generate_synthetic

DATA = Path(__file__).parent / "data"


@pytest.fixture
def toy_paths():
    return DATA / "toy_reviews.jsonl", DATA / "toy_views.tsv"


@pytest.fixture
def toy(toy_paths):
    """Toy review network: U1..U5 buy P1 in that order, U4 and U6 buy P2."""
    reviews, views = toy_paths
    return build_dataset(read_reviews_jsonl(reviews), read_views_tsv(views))


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic(SyntheticSpec(n=30, m=20, k=2, density=0.3, view_density=0.3, seed=7))


@pytest.fixture(scope="session")
def small_dataset(small_corpus):
    return build_dataset(small_corpus.reviews, small_corpus.views)


def random_instance(seed, n=8, m=6, density=0.5, view_negatives=True):
    """Tiny corpus with all four channels populated."""
    corpus = generate_synthetic(SyntheticSpec(n=n, m=m, k=2, density=density, view_density=0.4, seed=seed))
    d = build_dataset(corpus.reviews, corpus.views)
    channels = build_channels(d, view_negatives=view_negatives)
    assert all(len(ch) > 0 for ch in channels.values())
    return d, channels
