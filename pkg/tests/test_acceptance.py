"""End-to-end acceptance checks.  Each test prints one PASS/FAIL line with the measured numbers."""

import time
from fractions import Fraction

import numpy as np

from fusedpmf.dataset import SplitSpec, build_dataset, segment_cold_start, split_train_test
from fusedpmf.evaluation import run_experiment, write_report
from fusedpmf.factorization import (
    FACTOR_NAMES,
    VARIANTS,
    CountWeights,
    Hyperparameters,
    gradient,
    objective,
    predict_pairs,
)
from fusedpmf.features import (
    MODEL_INTERVAL,
    RATING_INTERVAL,
    VIEW_INTERVAL,
    build_channels,
    explicit_channels,
    most_recent_centrality,
    scale_value,
    unscale_value,
)
from fusedpmf.synthetic import SyntheticSpec, generate_synthetic
from fusedpmf.trainer import TrainConfig, fit, init_factors

from conftest import random_instance
from test_factorization import finite_difference, rel_err


def report(name, ok, detail):
    print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, detail


def test_feature_golden(toy):
    t0 = time.perf_counter()
    exact_most = most_recent_centrality(1, 5) == 25 / 12 and Fraction(most_recent_centrality(1, 5)) == \
        Fraction(25 / 12)
    h, dch = explicit_channels(toy, np.arange(toy.n_reviews))
    ids = lambda ch: {(toy.user_ids[u], toy.item_ids[p]): v for (u, p), v in ch.as_dict().items()}
    # helpfulness (-1)^theta x^2/y, theta = 2 for rating >= 3
    want_h = {("U1", "P1"): 10.0, ("U2", "P1"): 9 / 4, ("U3", "P1"): -9 / 4, ("U4", "P1"): -0.0,
              ("U4", "P2"): 2.0, ("U6", "P2"): -1 / 3}
    # 0.5 * top + 0.5 * most, signed by rating group
    want_d = {("U1", "P1"): 0.5 * 4 + 0.5 * 25 / 12, ("U2", "P1"): 0.5 * 3 / 4 + 0.5 * 11 / 6,
              ("U3", "P1"): -(0.5 * 2 + 0.5 * 1.5), ("U4", "P1"): -(0.5 * 1 / 4 + 0.5 * 1),
              ("U5", "P1"): 0.0, ("U4", "P2"): 0.5 * 1 + 0.5 * 1, ("U6", "P2"): -0.0}
    got_h, got_d = ids(h), ids(dch)
    err_h = max(abs(got_h[k] - v) for k, v in want_h.items()) if set(got_h) == set(want_h) else np.inf
    err_d = max(abs(got_d[k] - v) for k, v in want_d.items()) if set(got_d) == set(want_d) else np.inf
    elapsed = time.perf_counter() - t0
    report("feature golden", exact_most and err_h < 1e-12 and err_d < 1e-12 and elapsed < 1.0,
           f"most(U1,P1)==25/12 {exact_most}, max |dH| {err_h:.1e}, max |dD| {err_d:.1e}, {elapsed:.3f}s")


def test_gradient_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(20):
        variant = VARIANTS[trial % 4]
        n, m, K = int(rng.integers(5, 11)), int(rng.integers(4, 9)), int(rng.integers(1, 5))
        d, ch = random_instance(100 + trial, n=n, m=m, density=0.6)
        lam = {k: float(rng.uniform(0.05, 1.0)) for k in ("lambda_H", "lambda_D", "lambda_V", "lambda_WE",
                                                           "lambda_WC", "lambda_WS", "lambda_W", "lambda_E")}
        hp = Hyperparameters(K=K, variant=variant, **lam)
        f = init_factors(d.n, d.m, K, seed=trial, init_std=0.6)
        w = CountWeights.from_channels(ch, d.n, d.m)
        g = gradient(f, ch, w, hp)
        fd = finite_difference(objective, f, ch, w, hp)
        for name in FACTOR_NAMES:
            worst = max(worst, rel_err(getattr(g, name), fd[name]))
    elapsed = time.perf_counter() - t0
    report("gradient correctness", worst < 1e-4 and elapsed < 30,
           f"20 instances, worst relative error {worst:.2e}, {elapsed:.1f}s")


def test_reduction_equivalence():
    d, ch = random_instance(11, n=10, m=8)
    zero = dict(lambda_H=0.0, lambda_D=0.0, lambda_V=0.0, lambda_WE=0.0, lambda_WC=0.0, lambda_WS=0.0)
    f_mf, t_mf = fit(ch, TrainConfig(hp=Hyperparameters(K=4, variant="MF"), seed=8))
    f_fu, t_fu = fit(ch, TrainConfig(hp=Hyperparameters(K=4, variant="RHCV-PMF", **zero), seed=8))
    same_trace = t_mf.objective == t_fu.objective and t_mf.grad_norm == t_fu.grad_norm
    same_factors = all(np.array_equal(getattr(f_mf, k), getattr(f_fu, k)) for k in FACTOR_NAMES)
    report("reduction equivalence", same_trace and same_factors,
           f"{t_mf.epochs} epochs, trace identical {same_trace}, factors bitwise equal {same_factors}")


def test_descent_property():
    corpus = generate_synthetic(SyntheticSpec())
    d = build_dataset(corpus.reviews, corpus.views)
    ch = build_channels(d)
    _, trace = fit(ch, TrainConfig(hp=Hyperparameters(K=5, learning_rate=0.01)))
    phi = np.r_[trace.initial_objective, trace.objective]
    increases = int(np.sum(np.diff(phi) > 0))
    ok = increases == 0 and trace.termination == "converged" and trace.epochs <= 500
    report("descent property", ok,
           f"n={d.n} m={d.m} N={d.n_reviews}: {trace.termination} after {trace.epochs} epochs, "
           f"{increases} increases, objective {phi[0]:.2f} -> {phi[-1]:.2f}")


def test_planted_recovery():
    corpus = generate_synthetic(SyntheticSpec(n=20, m=20, k=2, density=1.0, noise=0.0, round_ratings=False))
    d = build_dataset(corpus.reviews)
    ch = build_channels(d)
    hp = Hyperparameters(K=2, variant="MF", learning_rate=0.01, max_epochs=500, lambda_W=1e-3, lambda_Z=1e-3)
    factors, trace = fit(ch, TrainConfig(hp=hp))
    train_mse = float(np.mean((predict_pairs(factors, d.users, d.items) - d.ratings) ** 2))
    report("planted recovery", train_mse < 0.01 and trace.epochs <= 500,
           f"train MSE {train_mse:.4f} after {trace.epochs} epochs ({trace.termination})")


# channel and coupling weights at their defaults; light priors suit the desk-scale corpus
FUSION_HP = dict(K=5, learning_rate=0.05, max_epochs=2000,
                 **{f"lambda_{x}": 0.01 for x in "WZEFCOSU"})


def _fusion_mse(rho, variant, seeds=range(5)):
    out = []
    for s in seeds:
        corpus = generate_synthetic(SyntheticSpec(rho=rho, noise=0.5, seed=s))
        d = build_dataset(corpus.reviews, corpus.views)
        cfg = TrainConfig(hp=Hyperparameters(variant=variant, **FUSION_HP), seed=s)
        out.append(run_experiment(d, SplitSpec(seed=s, repeats=1), cfg, view_negatives=True).mean)
    return float(np.mean(out))


def test_fusion_benefit():
    t0 = time.perf_counter()
    m = {v: _fusion_mse(0.9, v) for v in VARIANTS}
    mf0, fused0 = _fusion_mse(0.0, "MF"), _fusion_mse(0.0, "RHCV-PMF")
    elapsed = time.perf_counter() - t0
    fused = m["RHCV-PMF"]
    gain = 1 - fused / m["MF"]
    best_single = min(m["RHC-PMF"], m["RV-PMF"])
    ok = gain >= 0.05 and fused <= best_single + 0.02 and abs(fused0 - mf0) < 0.02 and elapsed < 300
    report("fusion benefit", ok,
           f"rho=0.9 MF {m['MF']:.4f} RHC {m['RHC-PMF']:.4f} RV {m['RV-PMF']:.4f} RHCV {fused:.4f} "
           f"(gain {gain:.1%}); rho=0 MF {mf0:.4f} RHCV {fused0:.4f} (gap {abs(fused0 - mf0):.4f}); {elapsed:.0f}s")


def test_cold_start_segmentation():
    problems = []
    for seed in range(3):
        corpus = generate_synthetic(SyntheticSpec(n=80, m=50, density=0.15, seed=seed))
        d = build_dataset(corpus.reviews, corpus.views)
        assert d.n_reviews <= 1000
        cfg = TrainConfig(hp=Hyperparameters(K=3, max_epochs=30), seed=seed)
        split = SplitSpec(seed=seed, repeats=2)
        rep = run_experiment(d, split, cfg)
        for r, res in enumerate(rep.repeats):
            train, _ = split_train_test(d, split, r)
            cu = {u for u in range(d.n) if sum(1 for k in train if d.users[k] == u) < 4}
            ci = {i for i in range(d.m) if sum(1 for k in train if d.items[k] == i) < 4}
            if (cu, ci) != (res.cold_users, res.cold_items):
                problems.append(f"seed {seed} repeat {r}: membership")
            for cold, ids, got in ((cu, res.users, rep.cold_user_mse[r]), (ci, res.items, rep.cold_item_mse[r])):
                sq = [(p - t) ** 2 for x, p, t in zip(ids, res.prediction, res.truth) if x in cold]
                want = sum(sq) / len(sq) if sq else None
                if (want is None) != (got is None) or (want is not None and abs(want - got) > 1e-12):
                    problems.append(f"seed {seed} repeat {r}: segment MSE {got} vs {want}")
    # exactly four training ratings is never cold
    corpus = generate_synthetic(SyntheticSpec(n=10, m=6, density=1.0, seed=0))
    d = build_dataset(corpus.reviews)
    train = np.flatnonzero(np.isin(d.items, [0, 1, 2, 3]))
    cold_u, _ = segment_cold_start(d, train)
    if cold_u:
        problems.append(f"users with four ratings marked cold: {sorted(cold_u)}")
    report("cold-start segmentation", not problems, "; ".join(problems) or "6 repeats recounted, boundary holds")


def test_protocol_fidelity(tmp_path, small_dataset):
    d = small_dataset
    a = run_experiment(d)
    b = run_experiment(d)
    N = d.n_reviews
    sizes_ok = all(len(split_train_test(d, SplitSpec(), r)[0]) == int(np.floor(0.8 * N + 0.5)) for r in range(5))
    pa = write_report(a, d, tmp_path / "a")
    pb = write_report(b, d, tmp_path / "b")
    identical = all(pa[k].read_bytes() == pb[k].read_bytes() for k in pa)
    ok = len(a.mse) == 5 and sizes_ok and identical
    report("protocol fidelity", ok, f"{len(a.mse)} repeats, 80% train sizes {sizes_ok}, "
                                    f"byte-identical reports {identical} ({len(pa)} files)")


def test_scaling_round_trip():
    rng = np.random.default_rng(0)
    worst = {}
    for name, src in (("R", RATING_INTERVAL), ("H", (-37.5, 37.5)), ("D", (-3.0416, 3.0416)), ("V", VIEW_INTERVAL)):
        x = rng.uniform(src[0], src[1], 100_000)
        back = unscale_value(scale_value(x, src), src)
        worst[name] = float(np.max(np.abs(back - x)))
    midpoint = scale_value(3.0, RATING_INTERVAL) == 0.0 and unscale_value(0.0, RATING_INTERVAL) == 3.0
    ok = max(worst.values()) < 1e-12 and midpoint and MODEL_INTERVAL == (-1.0, 1.0)
    report("scaling round trip", ok, f"max error per channel {worst}, rating 3 <-> 0 {midpoint}")
