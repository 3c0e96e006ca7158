"""Loss, metrics, Nadam, mini-batch training and session-level K-fold cross-validation."""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import model as M
from .errors import DataError, RejectedInput

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    H: int = 50
    batch_size: int = 16
    learning_rate: float = 0.0003
    epochs: int = 100
    patience: int = 10
    lambda_input: float = 0.0
    lambda_prm: float = 0.0
    head: str = "prm"
    seed: int = 0
    val_fraction: float = 0.1
    # (nontarget, target); None means inverse frequency: target 1, nontarget #target/#nontarget
    class_weights: Optional[tuple] = None

    def __post_init__(self):
        if self.batch_size < 1 or self.H < 1:
            raise RejectedInput("batch_size and H must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise RejectedInput("val_fraction must be in [0, 1)")
        if self.learning_rate <= 0:
            raise RejectedInput("learning_rate must be positive")
        if self.epochs < 0 or self.patience < 1:
            raise RejectedInput("epochs must be >= 0 and patience >= 1")
        if self.lambda_input < 0 or self.lambda_prm < 0:
            raise RejectedInput("regularization strengths must be non-negative")
        if self.head not in M.HEADS:
            raise RejectedInput(f"unknown head {self.head!r}")
        if self.class_weights is not None:
            self.class_weights = tuple(float(w) for w in self.class_weights)
            if len(self.class_weights) != 2 or min(self.class_weights) <= 0:
                raise RejectedInput("class_weights must be two positive numbers (nontarget, target)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise RejectedInput(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if self.class_weights is not None:
            d["class_weights"] = list(self.class_weights)
        return d


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise RejectedInput("confusion counts must be non-negative")

    @classmethod
    def from_predictions(cls, labels, predicted) -> "ConfusionCounts":
        labels = np.asarray(labels).astype(bool)
        predicted = np.asarray(predicted).astype(bool)
        return cls(
            tp=int(np.sum(labels & predicted)),
            fp=int(np.sum(~labels & predicted)),
            tn=int(np.sum(~labels & ~predicted)),
            fn=int(np.sum(labels & ~predicted)),
        )


@dataclass(frozen=True)
class BalancedAccuracy:
    bac: float
    recall: float
    specificity: float


def balanced_accuracy(c: ConfusionCounts) -> BalancedAccuracy:
    if c.tp + c.fn == 0 or c.tn + c.fp == 0:
        raise RejectedInput(f"balanced accuracy needs both classes present, got {c}")
    recall = c.tp / (c.tp + c.fn)
    specificity = c.tn / (c.tn + c.fp)
    return BalancedAccuracy((recall + specificity) / 2, recall, specificity)


def weighted_cross_entropy(probs, labels, weights) -> float:
    """Mean over samples of ``w * (-t log p - (1-t) log(1-p))``, with p clamped away from 0 and 1."""
    p = np.asarray(probs, dtype=np.float64)
    t = np.asarray(labels, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if p.size == 0:
        raise RejectedInput("cross-entropy of an empty batch")
    if not (p.shape == t.shape == w.shape):
        raise RejectedInput(f"length mismatch: probs {p.shape}, labels {t.shape}, weights {w.shape}")
    if np.any(w <= 0):
        raise RejectedInput("weights must be positive")
    p = M.clamp_prob(p)
    return float(np.mean(w * -(t * np.log(p) + (1 - t) * np.log(1 - p))))


# -- Nadam ----------------------------------------------------------------


@dataclass
class NadamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: M.ModelParams, **kw) -> "NadamState":
        tensors = params.tensors()
        return cls(
            m={k: np.zeros_like(v) for k, v in tensors.items()},
            v={k: np.zeros_like(v) for k, v in tensors.items()},
            **kw,
        )


def nadam_step(state: NadamState, params: M.ModelParams, grads: M.Gradients, lr: float):
    """One Nesterov-accelerated Adam update; returns ``(new_state, new_params)``.

    With step index ``t`` (1-based)::

        m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
        m_hat = m / (1 - b1^(t+1))    g_hat = g / (1 - b1^t)    v_hat = v / (1 - b2^t)
        theta <- theta - lr (b1 m_hat + (1-b1) g_hat) / (sqrt(v_hat) + eps)
    """
    b1, b2, eps = state.beta1, state.beta2, state.eps
    t = state.t + 1
    g_all = grads.tensors()
    theta = params.tensors()
    if set(g_all) != set(theta):
        raise RejectedInput(f"gradient tensors {sorted(g_all)} do not match parameters {sorted(theta)}")
    new_m, new_v, new_theta = {}, {}, {}
    for name, g in g_all.items():
        if not np.all(np.isfinite(g)):
            raise DataError(f"non-finite gradient in tensor {name} at step {t}")
        if g.shape != theta[name].shape:
            raise RejectedInput(f"gradient shape {g.shape} for {name} does not match {theta[name].shape}")
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** (t + 1))
        g_hat = g / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_theta[name] = theta[name] - lr * (b1 * m_hat + (1 - b1) * g_hat) / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    new_state = dataclasses.replace(state, m=new_m, v=new_v, t=t)
    return new_state, params.with_tensors(new_theta)


# -- training -------------------------------------------------------------


def stack_windows(windows) -> tuple[np.ndarray, np.ndarray]:
    if len(windows) == 0:
        return np.zeros((0, 32, 32)), np.zeros(0, dtype=int)
    x = np.stack([w.data for w in windows])
    y = np.array([w.label for w in windows], dtype=int)
    return x, y


def stratified_split(labels: np.ndarray, fraction: float, rng: np.random.Generator):
    """Indices (train, val) with ``round(fraction * n_class)`` (at least 1) per class in val."""
    train_idx, val_idx = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_val = max(1, int(round(fraction * len(idx)))) if fraction > 0 else 0
        if n_val >= len(idx):
            raise RejectedInput(f"class {cls} has too few windows ({len(idx)}) for a validation split")
        val_idx.append(idx[:n_val])
        train_idx.append(idx[n_val:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(val_idx))


def class_weight_vector(labels: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    if cfg.class_weights is not None:
        w_non, w_tgt = cfg.class_weights
    else:
        n_tgt = int(np.sum(labels == 1))
        w_tgt, w_non = 1.0, n_tgt / int(np.sum(labels == 0))
    return np.where(labels == 1, w_tgt, w_non)


def evaluate(params: M.ModelParams, x: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> ConfusionCounts:
    p = M.predict_proba(params, x)
    return ConfusionCounts.from_predictions(labels, p >= threshold)


def train(model_seed: int, windows, cfg: TrainConfig, *, data=None):
    """Train a fresh model; returns ``(params, history)``.

    ``history`` is a list of ``{"epoch", "train_loss", "val_bac"}`` dicts.
    Shuffling and the validation split use ``default_rng(cfg.seed)``;
    initialization uses ``model_seed``. ``data`` may pass pre-stacked
    ``(x, labels)`` instead of window objects.
    """
    x, y = data if data is not None else stack_windows(windows)
    if len(y) == 0 or len(np.unique(y)) < 2:
        raise RejectedInput("training data must contain both target and non-target windows")
    params = M.init_params(model_seed, H=cfg.H, head=cfg.head, T=x.shape[1], n_channels=x.shape[2])
    history: list[dict] = []
    if cfg.epochs == 0:
        return params, history

    rng = np.random.default_rng(cfg.seed)
    if cfg.val_fraction > 0:
        tr, va = stratified_split(y, cfg.val_fraction, rng)
    else:
        tr, va = np.arange(len(y)), np.array([], dtype=int)
    x_tr, y_tr = x[tr], y[tr]
    x_va, y_va = x[va], y[va]
    w_tr = class_weight_vector(y_tr, cfg)

    state = NadamState.zeros_like(params)
    best, best_bac, since_best = params, -np.inf, 0
    n = len(y_tr)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            b = order[start : start + cfg.batch_size]
            xb = x_tr[b]
            trace = M._forward(params, xb)
            grads = M.backward(params, trace, xb, y_tr[b], w_tr[b], cfg.lambda_input, cfg.lambda_prm)
            state, params = nadam_step(state, params, grads, cfg.learning_rate)
            losses.append(grads.loss)
        train_loss = float(np.mean(losses))
        val_bac = balanced_accuracy(evaluate(params, x_va, y_va)).bac if len(va) else float("nan")
        history.append({"epoch": epoch, "train_loss": train_loss, "val_bac": val_bac})
        log.debug("epoch %d loss %.5f val_bac %.4f", epoch, train_loss, val_bac)
        if not len(va):
            best = params
            continue
        if val_bac > best_bac:
            best, best_bac, since_best = params, val_bac, 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    return best, history


# -- cross-validation -----------------------------------------------------


@dataclass
class FoldReport:
    fold_index: int
    test_session: int
    bac: float
    recall: float
    specificity: float
    counts: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    model_path: Optional[str] = None
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _run_fold(args):
    k, train_x, train_y, test_x, test_y, test_session, cfg, model_seed = args
    params, history = train(model_seed, None, cfg, data=(train_x, train_y))
    counts = evaluate(params, test_x, test_y)
    m = balanced_accuracy(counts)
    report = FoldReport(
        fold_index=k,
        test_session=test_session,
        bac=m.bac,
        recall=m.recall,
        specificity=m.specificity,
        counts=dataclasses.asdict(counts),
        history=history,
        seed=model_seed,
    )
    return report, params


def kfold_cv(sessions: Sequence, cfg: TrainConfig, K: int = 4, jobs: int = 1, session_ids=None):
    """Leave-one-session-out training; returns ``(reports, models, summary)``.

    ``sessions`` is a list of K window lists (or pre-stacked ``(x, labels)``
    pairs). Fold k tests on session k with threshold 0.5. Fold k initializes
    its model with seed ``cfg.seed + k``.
    """
    if len(sessions) != K:
        raise RejectedInput(f"K={K} folds need {K} session groups, got {len(sessions)}")
    stacked = [s if isinstance(s, tuple) else stack_windows(s) for s in sessions]
    ids = list(session_ids) if session_ids is not None else list(range(1, K + 1))
    jobs_args = []
    for k in range(K):
        tr = [stacked[j] for j in range(K) if j != k]
        jobs_args.append(
            (
                k,
                np.concatenate([s[0] for s in tr]),
                np.concatenate([s[1] for s in tr]),
                stacked[k][0],
                stacked[k][1],
                ids[k],
                cfg,
                cfg.seed + k,
            )
        )
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, jobs_args))
    else:
        results = [_run_fold(a) for a in jobs_args]
    reports = [r for r, _ in results]
    models = [p for _, p in results]
    bacs = np.array([r.bac for r in reports])
    summary = {"mean_bac": float(bacs.mean()), "std_bac": float(bacs.std())}
    return reports, models, summary
