"""Repeated-holdout MSE evaluation, K sweeps and cold-start segments."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset, SplitSpec, segment_cold_start, split_train_test, training_counts
from .factorization import predict_pairs
from .features import CentralityParams, SignRule, build_channels
from .trainer import DivergenceError, TrainConfig, fit

__all__ = [
    "mse",
    "EvalReport",
    "RepeatResult",
    "evaluate_split",
    "run_experiment",
    "sweep_K",
    "format_table",
    "write_predictions",
    "write_report",
]


def mse(predictions, truths) -> float:
    """Mean squared error on the rating scale."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("mse of an empty set")
    return float(np.mean((p - t) ** 2))


@dataclass
class RepeatResult:
    users: np.ndarray
    items: np.ndarray
    truth: np.ndarray
    prediction: np.ndarray
    fallback: np.ndarray
    cold_users: set[int]
    cold_items: set[int]
    mse: float
    cold_user_mse: float | None
    cold_item_mse: float | None
    epochs: int
    termination: str


@dataclass
class EvalReport:
    variant: str
    K: int
    lambdas: dict[str, float]
    dataset: str
    split: dict
    train_seed: int
    mse: list[float]
    cold_user_mse: list[float | None]
    cold_item_mse: list[float | None]
    test_pairs: list[int]
    cold_user_pairs: list[int]
    cold_item_pairs: list[int]
    fallback_pairs: list[int]
    epochs: list[int]
    termination: list[str]
    repeats: list[RepeatResult] = field(default_factory=list, repr=False)

    @property
    def mean(self) -> float:
        return float(np.mean(self.mse))

    @property
    def std(self) -> float:
        return float(np.std(self.mse))

    @staticmethod
    def _mean_of(values) -> float | None:
        vals = [v for v in values if v is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def cold_user_mean(self) -> float | None:
        return self._mean_of(self.cold_user_mse)

    @property
    def cold_item_mean(self) -> float | None:
        return self._mean_of(self.cold_item_mse)

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "repeats"}
        out.update(mean=self.mean, std=self.std, cold_user_mean=self.cold_user_mean,
                   cold_item_mean=self.cold_item_mean)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def evaluate_split(d: Dataset, train_idx: np.ndarray, test_idx: np.ndarray, config: TrainConfig,
                   rule: SignRule = SignRule(), params: CentralityParams = CentralityParams(),
                   view_negatives: bool = False) -> RepeatResult:
    """Build training channels, fit, and score the held-out reviews."""
    channels = build_channels(d, train_idx, rule, params, view_negatives)
    factors, trace = fit(channels, config)

    users, items = d.users[test_idx], d.items[test_idx]
    truth = d.ratings[test_idx].astype(np.float64)
    pred = predict_pairs(factors, users, items)
    u_count, i_count = training_counts(d, train_idx)
    fallback = (u_count[users] == 0) & (i_count[items] == 0)
    pred = np.where(fallback, float(np.mean(d.ratings[train_idx])), pred)

    cold_u, cold_i = segment_cold_start(d, train_idx, test_idx)
    in_cu = np.isin(users, list(cold_u))
    in_ci = np.isin(items, list(cold_i))
    return RepeatResult(
        users=users, items=items, truth=truth, prediction=pred, fallback=fallback,
        cold_users=cold_u, cold_items=cold_i,
        mse=mse(pred, truth),
        cold_user_mse=mse(pred[in_cu], truth[in_cu]) if in_cu.any() else None,
        cold_item_mse=mse(pred[in_ci], truth[in_ci]) if in_ci.any() else None,
        epochs=trace.epochs, termination=trace.termination,
    )


def run_experiment(d: Dataset, split: SplitSpec = SplitSpec(), config: TrainConfig = TrainConfig(),
                   rule: SignRule = SignRule(), params: CentralityParams = CentralityParams(),
                   view_negatives: bool = False) -> EvalReport:
    """Evaluate one model configuration over ``split.repeats`` random holdouts.

    Every repeat uses the same training seed, so reports for different
    variants at equal seeds are paired.
    """
    results = []
    for r in range(split.repeats):
        train_idx, test_idx = split_train_test(d, split, r)
        try:
            results.append(evaluate_split(d, train_idx, test_idx, config, rule, params, view_negatives))
        except DivergenceError as exc:
            raise DivergenceError(exc.epoch, f"repeat {r}: {exc}", exc.trace) from exc
    hp = config.hp
    return EvalReport(
        variant=hp.variant,
        K=hp.K,
        lambdas=hp.effective(),
        dataset=d.fingerprint(),
        split=asdict(split),
        train_seed=config.seed,
        mse=[res.mse for res in results],
        cold_user_mse=[res.cold_user_mse for res in results],
        cold_item_mse=[res.cold_item_mse for res in results],
        test_pairs=[len(res.truth) for res in results],
        cold_user_pairs=[int(np.isin(res.users, list(res.cold_users)).sum()) for res in results],
        cold_item_pairs=[int(np.isin(res.items, list(res.cold_items)).sum()) for res in results],
        fallback_pairs=[int(res.fallback.sum()) for res in results],
        epochs=[res.epochs for res in results],
        termination=[res.termination for res in results],
        repeats=results,
    )


def sweep_K(d: Dataset, split: SplitSpec, config: TrainConfig, K_values: Sequence[int], **kwargs) -> list[EvalReport]:
    """One report per latent size, same split and training seeds throughout."""
    K_values = list(K_values)
    if not K_values or any(k < 1 for k in K_values):
        raise ValueError(f"K values must be a non-empty list of positive ints, got {K_values}")
    return [
        run_experiment(d, split, replace(config, hp=replace(config.hp, K=int(k))), **kwargs)
        for k in K_values
    ]


def _fmt(x: float | None) -> str:
    return "-" if x is None else f"{x:.4f}"


def format_table(reports: Sequence[EvalReport]) -> str:
    """Aligned text: one row per report with repeat MSEs, mean, std and cold segments."""
    reports = list(reports)
    header = ["variant", "K", "MSE mean", "MSE std", "cold items", "cold users"]
    rows = [[r.variant, str(r.K), _fmt(r.mean), _fmt(r.std), _fmt(r.cold_item_mean), _fmt(r.cold_user_mean)]
            for r in reports]
    lines = _align([header] + rows)
    for r in reports:
        lines.append("")
        lines.append(f"{r.variant} K={r.K} per repeat")
        sub = [["repeat", "MSE", "cold items", "cold users", "test pairs"]]
        for i in range(len(r.mse)):
            sub.append([str(i), _fmt(r.mse[i]), _fmt(r.cold_item_mse[i]), _fmt(r.cold_user_mse[i]),
                        str(r.test_pairs[i])])
        lines.extend(_align(sub))
    return "\n".join(lines) + "\n"


def _align(table: list[list[str]]) -> list[str]:
    widths = [max(len(row[c]) for row in table) for c in range(len(table[0]))]
    out = []
    for k, row in enumerate(table):
        out.append("  ".join(cell.rjust(w) if c else cell.ljust(w) for c, (cell, w) in enumerate(zip(row, widths))))
        if k == 0:
            out.append("  ".join("-" * w for w in widths))
    return out


def write_predictions(d: Dataset, result: RepeatResult, path: str | Path) -> None:
    """``user<TAB>item<TAB>truth<TAB>prediction`` per test pair."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, p, t, y in zip(result.users, result.items, result.truth, result.prediction):
            fh.write(f"{d.user_ids[u]}\t{d.item_ids[p]}\t{float(t)!r}\t{float(y)!r}\n")


def write_report(report: EvalReport, d: Dataset, out_dir: str | Path, stem: str = "report") -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / f"{stem}.json", "table": out / f"{stem}.txt"}
    paths["json"].write_text(report.to_json(), encoding="utf-8")
    paths["table"].write_text(format_table([report]), encoding="utf-8")
    for i, res in enumerate(report.repeats):
        p = out / f"{stem}_predictions_{i}.tsv"
        write_predictions(d, res, p)
        paths[f"predictions_{i}"] = p
    return paths
