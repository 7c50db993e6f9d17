"""Fused PMF objective over rating, helpfulness, centrality and view channels.

Each channel ``X`` is factorized as ``g(A_i . B_j)`` with ``g = tanh``:

====  ============  ===========  ============  =============
chan  user factors  item factors  weight        coupling to W
====  ============  ===========  ============  =============
R     W             Z            1             --
H     E             F            lambda_H      lambda_WE
D     C             O            lambda_D      lambda_WC
V     S             U            lambda_V      lambda_WS
====  ============  ===========  ============  =============

Every factor row also carries a Gaussian prior whose precision grows with the
row's observation count in its channel.  An auxiliary block (E/F, C/O or S/U)
whose channel weight and coupling weight are both zero is *inactive*: it
contributes nothing to the objective, gets a zero gradient and is never
updated, so switching a channel off recovers the smaller models exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .features import FeedbackChannel, MODEL_INTERVAL, RATING_INTERVAL, unscale_value

__all__ = [
    "FACTOR_NAMES",
    "VARIANTS",
    "LatentFactors",
    "Hyperparameters",
    "CountWeights",
    "link",
    "link_derivative",
    "objective",
    "gradient",
    "objective_and_gradient",
    "active_blocks",
    "predict_rating",
    "predict_pairs",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]

FACTOR_NAMES = ("W", "Z", "E", "F", "C", "O", "S", "U")
USER_FACTORS = ("W", "E", "C", "S")

# channel -> (user factor, item factor, channel weight, coupling weight)
BLOCKS = {
    "R": ("W", "Z", None, None),
    "H": ("E", "F", "lambda_H", "lambda_WE"),
    "D": ("C", "O", "lambda_D", "lambda_WC"),
    "V": ("S", "U", "lambda_V", "lambda_WS"),
}

VARIANTS = ("MF", "RHC-PMF", "RV-PMF", "RHCV-PMF")
_VARIANT_ZEROED = {
    "MF": ("lambda_H", "lambda_D", "lambda_V", "lambda_WE", "lambda_WC", "lambda_WS"),
    "RHC-PMF": ("lambda_V", "lambda_WS"),
    "RV-PMF": ("lambda_H", "lambda_D", "lambda_WE", "lambda_WC"),
    "RHCV-PMF": (),
}
_VARIANT_ALIASES = {"mf": "MF", "rhc": "RHC-PMF", "rv": "RV-PMF", "rhcv": "RHCV-PMF"}

CHECKPOINT_FORMAT = "fusedpmf-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class LatentFactors:
    W: np.ndarray
    Z: np.ndarray
    E: np.ndarray
    F: np.ndarray
    C: np.ndarray
    O: np.ndarray
    S: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        K = self.W.shape[1]
        n, m = self.W.shape[0], self.Z.shape[0]
        for name in FACTOR_NAMES:
            arr = getattr(self, name)
            rows = n if name in USER_FACTORS else m
            if arr.ndim != 2 or arr.shape != (rows, K):
                raise ValueError(f"factor {name} has shape {arr.shape}, expected {(rows, K)}")

    @property
    def K(self) -> int:
        return self.W.shape[1]

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.Z.shape[0]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in FACTOR_NAMES}

    def copy(self) -> "LatentFactors":
        return LatentFactors(**{k: v.copy() for k, v in self.as_dict().items()})

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.as_dict().values())

    @classmethod
    def zeros(cls, n: int, m: int, K: int) -> "LatentFactors":
        return cls(**{k: np.zeros((n if k in USER_FACTORS else m, K)) for k in FACTOR_NAMES})


@dataclass(frozen=True)
class Hyperparameters:
    """Model weights and optimizer settings.

    The ``lambda_*`` values are variance ratios relative to the rating noise.
    ``variant`` zeroes the weights that the chosen model does not use; read
    them through :meth:`effective`.
    """

    K: int = 5
    lambda_H: float = 0.2
    lambda_D: float = 0.2
    lambda_V: float = 0.2
    lambda_WE: float = 0.2
    lambda_WC: float = 0.2
    lambda_WS: float = 0.2
    lambda_W: float = 0.1
    lambda_Z: float = 0.1
    lambda_E: float = 0.1
    lambda_F: float = 0.1
    lambda_C: float = 0.1
    lambda_O: float = 0.1
    lambda_S: float = 0.1
    lambda_U: float = 0.1
    learning_rate: float = 0.01
    max_epochs: int = 500
    conv_tol: float = 1e-5
    variant: str = "RHCV-PMF"

    def __post_init__(self):
        variant = _VARIANT_ALIASES.get(self.variant.lower(), self.variant) if isinstance(self.variant, str) else self.variant
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        object.__setattr__(self, "variant", variant)
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        for f in fields(self):
            if f.name.startswith("lambda_") and not getattr(self, f.name) >= 0:
                raise ValueError(f"{f.name} must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if not self.conv_tol >= 0:
            raise ValueError("conv_tol must be non-negative (0 runs all max_epochs)")

    def effective(self) -> dict[str, float]:
        """All lambda weights after applying the variant's zeroing."""
        out = {f.name: float(getattr(self, f.name)) for f in fields(self) if f.name.startswith("lambda_")}
        for name in _VARIANT_ZEROED[self.variant]:
            out[name] = 0.0
        return out

    def with_variant(self, variant: str) -> "Hyperparameters":
        return replace(self, variant=variant)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CountWeights:
    """Per-row observation counts for the count-weighted priors, floored at 1."""

    n_w: np.ndarray
    n_z: np.ndarray
    n_e: np.ndarray
    n_f: np.ndarray
    n_c: np.ndarray
    n_o: np.ndarray
    n_s: np.ndarray
    n_u: np.ndarray

    @classmethod
    def from_channels(cls, channels: Mapping[str, FeedbackChannel], n: int, m: int) -> "CountWeights":
        counts = {}
        for kind, (uf, itf, _, _) in BLOCKS.items():
            ch = channels.get(kind)
            if ch is None or len(ch) == 0:
                cu, ci = np.zeros(n), np.zeros(m)
            else:
                cu = np.bincount(ch.rows, minlength=n).astype(np.float64)
                ci = np.bincount(ch.cols, minlength=m).astype(np.float64)
            counts["n_" + uf.lower()] = np.maximum(cu, 1.0)
            counts["n_" + itf.lower()] = np.maximum(ci, 1.0)
        return cls(**counts)

    def for_factor(self, name: str) -> np.ndarray:
        return getattr(self, "n_" + name.lower())


def link(t):
    return np.tanh(t)


def link_derivative(t):
    g = np.tanh(t)
    return 1.0 - g * g


def active_blocks(hp: Hyperparameters) -> tuple[str, ...]:
    lam = hp.effective()
    out = ["R"]
    for kind in ("H", "D", "V"):
        _, _, w, c = BLOCKS[kind]
        if lam[w] > 0 or lam[c] > 0:
            out.append(kind)
    return tuple(out)


class _Prepared:
    """Channel arrays in model scale, cached per channel object."""

    def __init__(self, ch: FeedbackChannel):
        self.rows = np.asarray(ch.rows, dtype=np.int64)
        self.cols = np.asarray(ch.cols, dtype=np.int64)
        self.target = ch.scaled
        self.shape = ch.shape


def _prepare(channels: Mapping[str, FeedbackChannel], factors: LatentFactors) -> dict[str, _Prepared]:
    out = {}
    for kind in BLOCKS:
        ch = channels.get(kind)
        if ch is None:
            continue
        if tuple(ch.shape) != (factors.n, factors.m):
            raise ValueError(f"channel {kind} has shape {ch.shape}, factors imply {(factors.n, factors.m)}")
        out[kind] = _Prepared(ch)
    return out


def _evaluate(factors: LatentFactors, prepared: Mapping[str, _Prepared], weights: CountWeights,
              hp: Hyperparameters, want_grad: bool):
    lam = hp.effective()
    blocks = active_blocks(hp)
    f = factors.as_dict()
    grads = {k: np.zeros_like(v) for k, v in f.items()} if want_grad else None
    phi = 0.0

    for kind in blocks:
        uf, itf, wname, _ = BLOCKS[kind]
        weight = 1.0 if wname is None else lam[wname]
        ch = prepared.get(kind)
        if ch is None or len(ch.rows) == 0 or weight == 0.0:
            continue
        A, B = f[uf], f[itf]
        dots = np.einsum("ij,ij->i", A[ch.rows], B[ch.cols])
        pred = np.tanh(dots)
        resid = pred - ch.target
        phi += 0.5 * weight * float(resid @ resid)
        if want_grad:
            coef = weight * resid * (1.0 - pred * pred)
            M = sp.csr_matrix((coef, (ch.rows, ch.cols)), shape=ch.shape)
            grads[uf] += M @ B
            grads[itf] += M.T @ A

    W = f["W"]
    for kind in blocks[1:]:
        uf, _, _, cname = BLOCKS[kind]
        c = lam[cname]
        if c == 0.0:
            continue
        diff = W - f[uf]
        phi += 0.5 * c * float(np.sum(diff * diff))
        if want_grad:
            grads["W"] += c * diff
            grads[uf] -= c * diff

    for kind in blocks:
        uf, itf, _, _ = BLOCKS[kind]
        for name in (uf, itf):
            p = lam["lambda_" + name]
            if p == 0.0:
                continue
            cnt = weights.for_factor(name)
            X = f[name]
            sq = np.einsum("ij,ij->i", X, X)
            phi += 0.5 * p * float(cnt @ sq)
            if want_grad:
                grads[name] += (p * cnt)[:, None] * X

    if want_grad:
        return phi, LatentFactors(**grads)
    return phi


def objective(factors: LatentFactors, channels: Mapping[str, FeedbackChannel], weights: CountWeights,
              hp: Hyperparameters) -> float:
    """Value of the fused objective (non-negative)."""
    return _evaluate(factors, _prepare(channels, factors), weights, hp, want_grad=False)


def gradient(factors: LatentFactors, channels: Mapping[str, FeedbackChannel], weights: CountWeights,
             hp: Hyperparameters) -> LatentFactors:
    """Analytic gradient of :func:`objective` for all eight factor matrices."""
    return _evaluate(factors, _prepare(channels, factors), weights, hp, want_grad=True)[1]


def objective_and_gradient(factors, channels, weights, hp):
    return _evaluate(factors, _prepare(channels, factors), weights, hp, want_grad=True)


def predict_rating(w_i: np.ndarray, z_j: np.ndarray, interval: tuple[float, float] = RATING_INTERVAL) -> float:
    """Rating on the original scale: ``unscale(tanh(w_i . z_j))``."""
    g = np.tanh(float(np.dot(w_i, z_j)))
    return float(unscale_value(g, interval, MODEL_INTERVAL))


def predict_pairs(factors: LatentFactors, users: np.ndarray, items: np.ndarray,
                  interval: tuple[float, float] = RATING_INTERVAL) -> np.ndarray:
    dots = np.einsum("ij,ij->i", factors.W[users], factors.Z[items])
    return unscale_value(np.tanh(dots), interval, MODEL_INTERVAL)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    factors: LatentFactors
    hp: Hyperparameters
    user_ids: list[str]
    item_ids: list[str]
    intervals: dict[str, tuple[float, float]]
    global_mean: float
    meta: dict = field(default_factory=dict)

    def predict(self, user_id: str, item_id: str) -> tuple[float, bool]:
        """Predicted rating and whether the global-mean fallback was used."""
        try:
            i = self.user_ids.index(user_id)
            j = self.item_ids.index(item_id)
        except ValueError:
            return self.global_mean, True
        return predict_rating(self.factors.W[i], self.factors.Z[j], tuple(self.intervals["R"])), False


def save_checkpoint(ck: Checkpoint, path: str | Path) -> None:
    """Write an ``.npz`` holding the eight factor matrices and a JSON header.

    The header records format/version, K, n, m, per-channel scaling
    intervals, hyperparameters, id lists and the training-mean fallback.
    """
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "K": ck.factors.K,
        "n": ck.factors.n,
        "m": ck.factors.m,
        "intervals": {k: list(v) for k, v in ck.intervals.items()},
        "hyperparameters": ck.hp.to_dict(),
        "user_ids": ck.user_ids,
        "item_ids": ck.item_ids,
        "global_mean": ck.global_mean,
        "meta": ck.meta,
    }
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **ck.factors.as_dict())


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            arrays = {k: z[k] for k in FACTOR_NAMES}
    except (OSError, ValueError, KeyError) as exc:
        raise ValueError(f"{path}: unreadable checkpoint ({exc})") from exc
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT}")
    return Checkpoint(
        factors=LatentFactors(**arrays),
        hp=Hyperparameters(**header["hyperparameters"]),
        user_ids=list(header["user_ids"]),
        item_ids=list(header["item_ids"]),
        intervals={k: tuple(v) for k, v in header["intervals"].items()},
        global_mean=float(header["global_mean"]),
        meta=header.get("meta", {}),
    )
