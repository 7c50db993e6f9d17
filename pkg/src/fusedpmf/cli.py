"""Command-line entry point: ``fusedpmf {ingest,features,train,evaluate,predict,synth}``.

Every command accepts ``--config PATH``, a flat ``key = value`` file.  Keys
are listed in :data:`CONFIG_KEYS`; command-line flags override file values.
Exit codes: 0 success, 1 usage, 2 data error, 3 divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .dataset import (
    DataError,
    SplitSpec,
    build_dataset,
    load_dataset,
    read_reviews_jsonl,
    read_views_tsv,
    save_dataset,
)
from .evaluation import format_table, run_experiment, sweep_K, write_report
from .factorization import Checkpoint, Hyperparameters, load_checkpoint, save_checkpoint
from .features import CentralityParams, SignRule, build_channels, write_channel_triplets
from .synthetic import SyntheticSpec, generate_synthetic, write_synthetic
from .trainer import DivergenceError, TrainConfig, fit, write_trace_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

_LAMBDAS = ["lambda_" + s for s in ("H", "D", "V", "WE", "WC", "WS", "W", "Z", "E", "F", "C", "O", "S", "U")]

# key -> parser for values read from a config file
CONFIG_KEYS = {
    "seed": int,
    "variant": str,
    "k": str,
    "learning_rate": float,
    "max_epochs": int,
    "conv_tol": float,
    "init_std": float,
    "log_every": int,
    "train_fraction": float,
    "repeats": int,
    "view_negatives": lambda v: _parse_bool(v),
    "positive_threshold": float,
    "alpha": float,
    **{name: float for name in _LAMBDAS},
}


class UsageError(Exception):
    pass


def _parse_bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def read_config(path: str | Path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown or malformed config entry {raw.strip()!r}")
        try:
            out[key] = CONFIG_KEYS[key](value.strip())
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return out


def _parse_k(text: str) -> list[int]:
    try:
        ks = [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"--k expects N[,N...], got {text!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise UsageError(f"--k values must be positive, got {text!r}")
    return ks


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, model: bool = False) -> None:
    p.add_argument("--config", help="flat key=value config file; flags win")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    if model:
        p.add_argument("--variant", choices=["mf", "rhc", "rv", "rhcv"])
        p.add_argument("--k", help="latent size, or comma list for a sweep")
        p.add_argument("--learning-rate", type=float, dest="learning_rate")
        p.add_argument("--max-epochs", type=int, dest="max_epochs")
        p.add_argument("--conv-tol", type=float, dest="conv_tol")
        p.add_argument("--init-std", type=float, dest="init_std")
        p.add_argument("--view-negatives", action="store_true", default=None, dest="view_negatives",
                       help="treat unviewed pairs as observed zeros in the view channel")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="any config key, e.g. --set lambda_V=0.5")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fusedpmf", description="Fused PMF with helpfulness, centrality and view channels.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse reviews (and views) into a dataset file")
    p.add_argument("reviews")
    p.add_argument("--views")
    _common(p)

    p = sub.add_parser("features", help="write R/H/D/V channel triplets")
    p.add_argument("dataset")
    p.add_argument("--view-negatives", action="store_true", default=None, dest="view_negatives")
    _common(p)

    p = sub.add_parser("train", help="fit factors on the whole dataset")
    p.add_argument("dataset")
    _common(p, model=True)

    p = sub.add_parser("evaluate", help="repeated 80/20 holdout evaluation")
    p.add_argument("dataset")
    p.add_argument("--repeats", type=int)
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    _common(p, model=True)

    p = sub.add_parser("predict", help="predict one rating from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("user")
    p.add_argument("item")

    p = sub.add_parser("synth", help="generate a synthetic corpus with planted factors")
    defaults = SyntheticSpec()
    p.add_argument("--n", type=int, default=defaults.n)
    p.add_argument("--m", type=int, default=defaults.m)
    p.add_argument("--k-true", type=int, default=defaults.k, dest="k_true")
    p.add_argument("--noise", type=float, default=defaults.noise)
    p.add_argument("--rho", type=float, default=defaults.rho)
    p.add_argument("--density", type=float, default=defaults.density)
    p.add_argument("--view-density", type=float, default=defaults.view_density, dest="view_density")
    p.add_argument("--votes", type=float, default=defaults.votes)
    p.add_argument("--no-round", action="store_true", dest="no_round")
    _common(p)
    return parser


def _settings(args) -> dict:
    """Config file values overridden by any flag that was given."""
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for item in getattr(args, "set", []) or []:
        key, sep, value = item.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in CONFIG_KEYS:
            raise UsageError(f"--set expects a config KEY=VALUE, got {item!r}")
        try:
            cfg[key] = CONFIG_KEYS[key](value.strip())
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from exc
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _train_config(cfg: dict, K: int) -> TrainConfig:
    hp_kw = {k: cfg[k] for k in _LAMBDAS + ["learning_rate", "max_epochs", "conv_tol"] if k in cfg}
    try:
        hp = Hyperparameters(K=K, variant=cfg.get("variant", "rhcv"), **hp_kw)
        return TrainConfig(hp=hp, seed=cfg.get("seed", 0), init_std=cfg.get("init_std", 0.1),
                           log_every=cfg.get("log_every", 50))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _feature_params(cfg: dict) -> tuple[SignRule, CentralityParams]:
    try:
        return SignRule(cfg.get("positive_threshold", 3)), CentralityParams(cfg.get("alpha", 0.5))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args) -> int:
    reviews = read_reviews_jsonl(args.reviews)
    views = read_views_tsv(args.views) if args.views else []
    d = build_dataset(reviews, views)
    out = _out_dir(args, ".")
    save_dataset(d, out / "dataset.json")
    print(f"users n       {d.n}")
    print(f"items m       {d.m}")
    print(f"reviews N     {d.n_reviews}")
    print(f"views         {len(d.view_users)}")
    print(f"sparsity      {d.sparsity:.6g}")
    print(f"dataset       {out / 'dataset.json'}")
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = _settings(args)
    d = load_dataset(args.dataset)
    rule, params = _feature_params(cfg)
    channels = build_channels(d, None, rule, params, view_negatives=cfg.get("view_negatives", False))
    out = _out_dir(args, "features")
    for kind, ch in channels.items():
        write_channel_triplets(ch, d, out / f"{kind}.tsv")
    meta = {kind: {"interval": list(ch.interval), "entries": len(ch)} for kind, ch in channels.items()}
    (out / "intervals.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    for kind, info in meta.items():
        lo, hi = info["interval"]
        print(f"{kind}: {info['entries']} entries, raw interval [{lo:.6g}, {hi:.6g}]")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _settings(args)
    ks = _parse_k(cfg.get("k", "5"))
    if len(ks) != 1:
        raise UsageError("train takes a single --k")
    config = _train_config(cfg, ks[0])
    d = load_dataset(args.dataset)
    rule, params = _feature_params(cfg)
    channels = build_channels(d, None, rule, params, view_negatives=cfg.get("view_negatives", False))
    out = _out_dir(args, "model")
    try:
        factors, trace = fit(channels, config)
    except DivergenceError as exc:
        if exc.trace is not None:
            write_trace_csv(exc.trace, out / "trace.csv")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    write_trace_csv(trace, out / "trace.csv")
    ck = Checkpoint(
        factors=factors, hp=config.hp, user_ids=list(d.user_ids), item_ids=list(d.item_ids),
        intervals={k: tuple(float(x) for x in ch.interval) for k, ch in channels.items()},
        global_mean=float(np.mean(d.ratings)),
        meta={"dataset": d.fingerprint(), "seed": config.seed, "init_std": config.init_std,
              "view_negatives": bool(cfg.get("view_negatives", False)),
              "termination": trace.termination, "epochs": trace.epochs},
    )
    save_checkpoint(ck, out / "checkpoint.npz")
    print(f"{config.hp.variant} K={config.hp.K}: {trace.termination} after {trace.epochs} epochs, "
          f"objective {trace.initial_objective:.6g} -> {trace.final_objective:.6g}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _settings(args)
    ks = _parse_k(cfg.get("k", "5"))
    config = _train_config(cfg, ks[0])
    try:
        split = SplitSpec(cfg.get("train_fraction", 0.8), cfg.get("seed", 0), cfg.get("repeats", 5))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    d = load_dataset(args.dataset)
    rule, params = _feature_params(cfg)
    kwargs = dict(rule=rule, params=params, view_negatives=cfg.get("view_negatives", False))
    out = _out_dir(args, "evaluation")
    try:
        if len(ks) == 1:
            reports = [run_experiment(d, split, config, **kwargs)]
        else:
            reports = sweep_K(d, split, config, ks, **kwargs)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    for rep in reports:
        write_report(rep, d, out, stem="report" if len(ks) == 1 else f"report_k{rep.K}")
    table = format_table(reports)
    if len(ks) > 1:
        (out / "sweep.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    value, fell_back = ck.predict(args.user, args.item)
    print(f"{value:.6f}" + ("\tfallback=global_mean" if fell_back else ""))
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        spec = SyntheticSpec(n=args.n, m=args.m, k=args.k_true, noise=args.noise, rho=args.rho,
                             density=args.density, view_density=args.view_density, votes=args.votes,
                             round_ratings=not args.no_round, seed=args.seed if args.seed is not None else 0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    corpus = generate_synthetic(spec)
    paths = write_synthetic(corpus, _out_dir(args, "synthetic"))
    print(f"{len(corpus.reviews)} reviews, {len(corpus.views)} views -> {paths['reviews'].parent}")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "features": cmd_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
