"""Explainability artifacts for trained networks.

* global electrode relevance: sum of absolute input weights per electrode
* PRM temporal profile: absolute PRM weights per timestep
* local relevance: gradient x input, signed, electrode x timestep
* hidden-state diagnostics: class activation differences and shrinkage-LDA separability
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import model as M
from .errors import RejectedInput
from .train import stack_windows

CLASS_FILTERS = ("target", "nontarget", "all")
LDA_MODES = ("last_state", "concat_states")


@dataclass
class RelevanceVector:
    per_electrode: np.ndarray
    normalized: bool = False


@dataclass
class AttributionMap:
    values: np.ndarray  # (electrodes, timesteps), signed
    window_meta: dict = field(default_factory=dict)
    normalization: str = "raw"

    def normalized(self) -> "AttributionMap":
        return AttributionMap(_max_one(self.values, signed=True), dict(self.window_meta), "max_abs_one")


@dataclass
class HiddenDiff:
    per_neuron: np.ndarray  # (H, T)
    mean_curve: np.ndarray  # (T,)


@dataclass
class SeparabilityReport:
    mode: str
    fisher_j: float
    projections: np.ndarray
    labels: np.ndarray
    shrinkage_gamma: float
    direction: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "fisher_j": self.fisher_j,
            "shrinkage_gamma": self.shrinkage_gamma,
            "n_windows": int(len(self.projections)),
            "n_target": int(np.sum(self.labels == 1)),
        }


def _max_one(values: np.ndarray, signed: bool) -> np.ndarray:
    peak = np.max(np.abs(values)) if signed else np.max(values)
    return values / peak if peak > 0 else values.copy()


def global_relevance(params: M.ModelParams, normalize: bool = True) -> RelevanceVector:
    r = np.abs(params.W_xh).sum(axis=1)
    return RelevanceVector(_max_one(r, signed=False) if normalize else r, normalized=normalize)


def prm_profile(params: M.ModelParams) -> np.ndarray:
    if params.head != "prm":
        raise RejectedInput("temporal weight profile needs a model with the PRM head")
    return np.abs(params.w_p)


def local_relevance(params: M.ModelParams, window) -> AttributionMap:
    """Gradient x input at the network output probability (no loss clamping)."""
    x = np.asarray(getattr(window, "data", window), dtype=np.float64)
    jac = M.input_jacobian(params, x)
    meta = dict(getattr(window, "meta", {}))
    return AttributionMap((x * jac).T, meta, "raw")


def _select(windows, class_filter: str):
    if class_filter not in CLASS_FILTERS:
        raise RejectedInput(f"class_filter must be one of {CLASS_FILTERS}")
    want = {"target": (1,), "nontarget": (0,), "all": (0, 1)}[class_filter]
    return [w for w in windows if w.label in want]


def average_relevance(params: M.ModelParams, windows, class_filter: str = "target") -> AttributionMap:
    chosen = _select(windows, class_filter)
    if not chosen:
        raise RejectedInput(f"no windows left after filtering for {class_filter!r}")
    x = stack_windows(chosen)[0]
    jac = M.input_jacobian(params, x)
    values = (x * jac).mean(axis=0).T
    return AttributionMap(values, {"class_filter": class_filter, "n_windows": len(chosen)}, "raw")


def _traces(params, windows):
    x, labels = stack_windows(list(windows))
    h = np.concatenate([M._forward(params, x[i : i + 512]).h for i in range(0, len(x), 512)])
    return h, labels


def hidden_activation_diff(params: M.ModelParams, windows) -> HiddenDiff:
    h, labels = _traces(params, windows)
    if len(np.unique(labels)) < 2:
        raise RejectedInput("activation difference needs both target and non-target windows")
    diff = np.abs(h[labels == 1].mean(axis=0) - h[labels == 0].mean(axis=0)).T  # (H, T)
    return HiddenDiff(diff, diff.mean(axis=0))


def fisher_lda(features: np.ndarray, labels: np.ndarray, gamma: float = 0.1):
    """Two-class LDA with shrunk pooled covariance; returns ``(fisher_j, direction, projections)``."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if not 0 <= gamma <= 1:
        raise RejectedInput(f"shrinkage gamma must lie in [0, 1], got {gamma}")
    if len(np.unique(labels)) < 2:
        raise RejectedInput("LDA needs both classes present")
    x0, x1 = features[labels == 0], features[labels == 1]
    mu0, mu1 = x0.mean(axis=0), x1.mean(axis=0)
    d = features.shape[1]
    delta = mu1 - mu0
    if not np.any(delta):
        # equal class means: no direction separates anything
        return 0.0, np.zeros(d), np.zeros(len(features))
    dof = max(len(features) - 2, 1)
    c0, c1 = x0 - mu0, x1 - mu1
    sigma = (c0.T @ c0 + c1.T @ c1) / dof
    sigma_g = (1 - gamma) * sigma + gamma * (np.trace(sigma) / d) * np.eye(d)
    if gamma == 0 and np.linalg.matrix_rank(sigma_g) < d:
        raise RejectedInput("pooled covariance is singular; use a positive shrinkage gamma")
    try:
        w = np.linalg.solve(sigma_g, delta)
    except np.linalg.LinAlgError as exc:
        raise RejectedInput("pooled covariance is singular; use a positive shrinkage gamma") from exc
    denom = float(w @ sigma_g @ w)
    fisher = float((w @ delta) ** 2 / denom) if denom > 0 else 0.0
    return fisher, w, features @ w


def lda_features(params: M.ModelParams, windows, mode: str) -> tuple[np.ndarray, np.ndarray]:
    if mode not in LDA_MODES:
        raise RejectedInput(f"mode must be one of {LDA_MODES}")
    h, labels = _traces(params, windows)
    feats = h[:, -1, :] if mode == "last_state" else h.reshape(len(h), -1)
    return feats, labels


def lda_separability(params: M.ModelParams, windows, mode: str = "last_state", gamma: float = 0.1) -> SeparabilityReport:
    feats, labels = lda_features(params, windows, mode)
    fisher, w, proj = fisher_lda(feats, labels, gamma)
    return SeparabilityReport(mode, fisher, proj, labels, gamma, w)
