import numpy as np
import pytest

from fusedpmf.dataset import build_dataset, read_reviews_jsonl, read_views_tsv
from fusedpmf.synthetic import SyntheticSpec, generate_synthetic, write_synthetic


def test_same_seed_same_corpus():
    a = generate_synthetic(SyntheticSpec(n=40, m=30, seed=3))
    b = generate_synthetic(SyntheticSpec(n=40, m=30, seed=3))
    assert a.reviews == b.reviews and a.views == b.views
    np.testing.assert_array_equal(a.user_factors, b.user_factors)
    c = generate_synthetic(SyntheticSpec(n=40, m=30, seed=4))
    assert a.reviews != c.reviews


def test_every_user_and_item_reviewed():
    c = generate_synthetic(SyntheticSpec(n=50, m=40, density=0.01, seed=1))
    d = build_dataset(c.reviews)
    assert (d.n, d.m) == (50, 40)


def test_side_factor_correlation():
    def corr(rho):
        c = generate_synthetic(SyntheticSpec(n=400, m=10, rho=rho, seed=0))
        return np.corrcoef(c.user_factors.ravel(), c.side_factors.ravel())[0, 1]
    assert corr(1.0) == pytest.approx(1.0)
    assert abs(corr(0.0)) < 0.05
    assert corr(0.9) == pytest.approx(0.9, abs=0.03)


def test_noiseless_unrounded_ratings_follow_factors():
    c = generate_synthetic(SyntheticSpec(n=10, m=8, density=1.0, noise=0.0, round_ratings=False))
    W, Z = c.user_factors, c.item_factors
    for r in c.reviews:
        i, j = int(r.user_id[1:]), int(r.item_id[1:])
        assert r.rating == pytest.approx(3 + 2 * np.tanh(W[i] @ Z[j]))


def test_view_density_calibrated():
    c = generate_synthetic(SyntheticSpec(n=200, m=100, view_density=0.5, seed=2))
    assert len(c.views) / (200 * 100) == pytest.approx(0.5, abs=0.05)


@pytest.mark.parametrize("bad", [dict(density=0), dict(rho=1.5), dict(noise=-1), dict(n=0), dict(view_density=2)])
def test_invalid_spec(bad):
    with pytest.raises(ValueError):
        SyntheticSpec(**bad)


def test_written_files_ingest(tmp_path):
    corpus = generate_synthetic(SyntheticSpec(n=30, m=20, seed=5))
    paths = write_synthetic(corpus, tmp_path)
    d = build_dataset(read_reviews_jsonl(paths["reviews"]), read_views_tsv(paths["views"]))
    assert d.n_reviews == len(corpus.reviews)
    assert len(d.view_users) == len(corpus.views)
    planted = np.load(paths["planted"])
    np.testing.assert_array_equal(planted["W"], corpus.user_factors)
    again = tmp_path / "again"
    write_synthetic(generate_synthetic(SyntheticSpec(n=30, m=20, seed=5)), again)
    for name in ("reviews.jsonl", "views.tsv", "synth.json"):
        assert (again / name).read_bytes() == (tmp_path / name).read_bytes()
