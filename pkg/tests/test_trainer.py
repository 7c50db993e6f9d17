import csv

import numpy as np
import pytest

from fusedpmf.dataset import SplitSpec, build_dataset, split_train_test
from fusedpmf.factorization import FACTOR_NAMES, Hyperparameters, LatentFactors, predict_pairs
from fusedpmf.features import build_channels
from fusedpmf.synthetic import SyntheticSpec, generate_synthetic
from fusedpmf.trainer import DivergenceError, TrainConfig, fit, init_factors, write_trace_csv

from conftest import random_instance


def _same(a: LatentFactors, b: LatentFactors):
    for k in FACTOR_NAMES:
        np.testing.assert_array_equal(getattr(a, k), getattr(b, k))


def test_init_deterministic():
    _same(init_factors(7, 5, 3, seed=11), init_factors(7, 5, 3, seed=11))
    assert not np.array_equal(init_factors(7, 5, 3, seed=11).W, init_factors(7, 5, 3, seed=12).W)


def test_init_zero_std():
    f = init_factors(4, 3, 2, seed=0, init_std=0.0)
    assert all(not v.any() for v in f.as_dict().values())


def test_init_sample_mean():
    std = 0.1
    f = init_factors(5000, 3, 4, seed=9, init_std=std)
    for name in ("W", "E", "C", "S"):
        X = getattr(f, name)
        assert abs(X.mean()) < 3 * std / np.sqrt(X.size)
        assert X.std() == pytest.approx(std, rel=0.05)


def test_init_rejects_empty_dims():
    with pytest.raises(ValueError):
        init_factors(0, 3, 2)


def test_zero_init_converges_immediately():
    d, ch = random_instance(0)
    factors, trace = fit(ch, TrainConfig(hp=Hyperparameters(K=3), init_std=0.0))
    assert trace.termination == "converged" and trace.epochs == 1
    assert trace.grad_norm[0] == 0.0
    assert all(not v.any() for v in factors.as_dict().values())


def test_fit_deterministic():
    d, ch = random_instance(1)
    cfg = TrainConfig(hp=Hyperparameters(K=3, max_epochs=80), seed=5)
    f1, t1 = fit(ch, cfg)
    f2, t2 = fit(ch, cfg)
    _same(f1, f2)
    assert t1.objective == t2.objective


@pytest.mark.parametrize("variant", ["MF", "RHC-PMF", "RV-PMF", "RHCV-PMF"])
def test_first_epochs_strictly_decrease(variant):
    d, ch = random_instance(3)
    _, trace = fit(ch, TrainConfig(hp=Hyperparameters(K=3, variant=variant, max_epochs=50, conv_tol=0.0), seed=1))
    phi = np.r_[trace.initial_objective, trace.objective]
    assert len(phi) == 51
    assert np.all(np.diff(phi) < 0)


def test_mf_equals_fused_with_zero_side_weights():
    d, ch = random_instance(6)
    zero = dict(lambda_H=0.0, lambda_D=0.0, lambda_V=0.0, lambda_WE=0.0, lambda_WC=0.0, lambda_WS=0.0)
    f_mf, t_mf = fit(ch, TrainConfig(hp=Hyperparameters(K=3, variant="MF"), seed=2))
    f_fu, t_fu = fit(ch, TrainConfig(hp=Hyperparameters(K=3, variant="RHCV-PMF", **zero), seed=2))
    assert t_mf.objective == t_fu.objective
    assert t_mf.grad_norm == t_fu.grad_norm
    _same(f_mf, f_fu)


def test_converged_objective_not_above_initial():
    d, ch = random_instance(2)
    _, trace = fit(ch, TrainConfig(hp=Hyperparameters(K=3, learning_rate=0.05, max_epochs=3000), seed=0))
    assert trace.termination == "converged"
    assert trace.final_objective <= trace.initial_objective


def test_divergence_guard():
    d, ch = random_instance(0)
    with pytest.raises(DivergenceError) as info:
        fit(ch, TrainConfig(hp=Hyperparameters(K=3, learning_rate=10.0), seed=0, init_std=1.0))
    err = info.value
    assert err.epoch >= 1 and f"epoch {err.epoch}" in str(err)
    assert err.trace is not None and err.trace.termination == "diverged"


def test_warm_start_does_not_mutate_input():
    d, ch = random_instance(0)
    start = init_factors(d.n, d.m, 3, seed=4)
    snapshot = start.copy()
    fit(ch, TrainConfig(hp=Hyperparameters(K=3, max_epochs=5)), factors=start)
    _same(start, snapshot)


def test_trace_csv(tmp_path):
    d, ch = random_instance(0)
    _, trace = fit(ch, TrainConfig(hp=Hyperparameters(K=3, max_epochs=7, conv_tol=0.0)))
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    rows = list(csv.DictReader(path.open()))
    assert [int(r["epoch"]) for r in rows] == list(range(8))
    assert float(rows[0]["objective"]) == trace.initial_objective
    assert [float(r["objective"]) for r in rows[1:]] == trace.objective
    assert trace.termination == "max_epochs"


def test_planted_heldout_error_halves():
    corpus = generate_synthetic(SyntheticSpec(n=120, m=60, k=2, density=0.3, noise=0.3, round_ratings=False, seed=4))
    d = build_dataset(corpus.reviews)
    train, test = split_train_test(d, SplitSpec(seed=4), 0)
    ch = build_channels(d, train)
    hp = Hyperparameters(K=2, variant="MF", learning_rate=0.05, max_epochs=2000,
                         **{f"lambda_{x}": 0.01 for x in "WZ"})
    cfg = TrainConfig(hp=hp, seed=4)
    before = predict_pairs(init_factors(d.n, d.m, 2, seed=4), d.users[test], d.items[test])
    trained, _ = fit(ch, cfg)
    after = predict_pairs(trained, d.users[test], d.items[test])
    truth = d.ratings[test]
    err_before = np.mean((before - truth) ** 2)
    err_after = np.mean((after - truth) ** 2)
    assert err_after <= 0.5 * err_before


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(init_std=-1)
    with pytest.raises(ValueError):
        Hyperparameters(learning_rate=0)
