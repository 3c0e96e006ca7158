"""Elman recurrent network with last-step or post-recurrent (PRM) prediction head.

All arithmetic is float64. Gradients are hand-derived (backpropagation through
time) and batched over windows: inputs are ``(N, T, C)`` arrays, a single
``(T, C)`` window is also accepted everywhere.

Conventions: row vectors, so ``h_t = tanh(x_t @ W_xh + h_{t-1} @ W_hh + b_h)``
with ``W_xh`` of shape ``(C, H)`` (row ``i`` holds the weights leaving
electrode ``i``) and ``W_hh`` of shape ``(H, H)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import RejectedInput

HEADS = ("last", "prm")
PROB_CLAMP = 1e-12


def sigmoid(z):
    # split by sign so exp never overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ModelParams:
    W_xh: np.ndarray
    W_hh: np.ndarray
    b_h: np.ndarray
    w_hy: np.ndarray
    b_y: float
    head: str = "prm"
    w_p: Optional[np.ndarray] = None
    b_p: Optional[float] = None
    T: int = 32

    def __post_init__(self):
        if self.head not in HEADS:
            raise RejectedInput(f"unknown head {self.head!r}; expected one of {HEADS}")
        H = self.W_hh.shape[0]
        if self.W_hh.shape != (H, H) or self.W_xh.ndim != 2 or self.W_xh.shape[1] != H:
            raise RejectedInput(f"inconsistent shapes W_xh{self.W_xh.shape} W_hh{self.W_hh.shape}")
        if self.b_h.shape != (H,) or self.w_hy.shape != (H,):
            raise RejectedInput("b_h and w_hy must have length H")
        if self.head == "prm":
            if self.w_p is None or self.b_p is None:
                raise RejectedInput("PRM head requires w_p and b_p")
            if self.w_p.shape != (self.T,):
                raise RejectedInput(f"w_p must have length T={self.T}, got {self.w_p.shape}")
        elif self.w_p is not None or self.b_p is not None:
            raise RejectedInput("last-step head must not carry w_p/b_p")

    @property
    def H(self) -> int:
        return self.W_hh.shape[0]

    @property
    def n_channels(self) -> int:
        return self.W_xh.shape[0]

    def tensor_names(self) -> tuple[str, ...]:
        base = ("W_xh", "W_hh", "b_h", "w_hy", "b_y")
        return base + ("w_p", "b_p") if self.head == "prm" else base

    def tensors(self) -> dict[str, np.ndarray]:
        """Every learnable tensor as a float64 array (scalars become 0-d arrays)."""
        return {k: np.asarray(getattr(self, k), dtype=np.float64) for k in self.tensor_names()}

    def with_tensors(self, tensors: dict) -> "ModelParams":
        updates = {}
        for k, v in tensors.items():
            updates[k] = float(v) if k in ("b_y", "b_p") else np.array(v, dtype=np.float64)
        return dataclasses.replace(self, **updates)

    def copy(self) -> "ModelParams":
        return self.with_tensors(self.tensors())


@dataclass
class ForwardTrace:
    """Per-timestep states of a forward pass. Leading axis is the batch when batched."""

    h: np.ndarray  # (N, T, H)
    y: np.ndarray  # (N, T)
    p: np.ndarray  # (N,)
    pre_h: np.ndarray  # (N, T, H)
    batched: bool = True


@dataclass
class Gradients:
    W_xh: np.ndarray
    W_hh: np.ndarray
    b_h: np.ndarray
    w_hy: np.ndarray
    b_y: float
    w_p: Optional[np.ndarray] = None
    b_p: Optional[float] = None
    loss: float = 0.0

    def tensors(self) -> dict[str, np.ndarray]:
        names = ["W_xh", "W_hh", "b_h", "w_hy", "b_y"]
        if self.w_p is not None:
            names += ["w_p", "b_p"]
        return {k: np.asarray(getattr(self, k), dtype=np.float64) for k in names}


def init_params(seed: int, H: int = 50, head: str = "prm", T: int = 32, n_channels: int = 32) -> ModelParams:
    """Uniform Glorot weights, zero biases, drawn from ``numpy.random.default_rng(seed)``."""
    if H < 1 or T < 1 or n_channels < 1:
        raise RejectedInput("H, T and n_channels must be >= 1")
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out, shape):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    W_xh = glorot(n_channels, H, (n_channels, H))
    W_hh = glorot(H, H, (H, H))
    w_hy = glorot(H, 1, (H,))
    w_p = glorot(T, 1, (T,)) if head == "prm" else None
    return ModelParams(
        W_xh=W_xh,
        W_hh=W_hh,
        b_h=np.zeros(H),
        w_hy=w_hy,
        b_y=0.0,
        head=head,
        w_p=w_p,
        b_p=0.0 if head == "prm" else None,
        T=T,
    )


def _as_batch(params: ModelParams, x) -> tuple[np.ndarray, bool]:
    x = getattr(x, "data", x)
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 3
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (params.T, params.n_channels):
        raise RejectedInput(
            f"input shape {x.shape} does not match model (T={params.T}, channels={params.n_channels})"
        )
    if not np.all(np.isfinite(x)):
        raise RejectedInput("input contains non-finite values")
    return x, batched


def _forward(params: ModelParams, x: np.ndarray) -> ForwardTrace:
    N, T, _ = x.shape
    H = params.H
    pre_h = x @ params.W_xh + params.b_h  # input contribution for all steps at once
    h = np.empty((N, T, H))
    prev = np.zeros((N, H))
    for t in range(T):
        pre_h[:, t] += prev @ params.W_hh
        prev = np.tanh(pre_h[:, t])
        h[:, t] = prev
    y = sigmoid(h @ params.w_hy + params.b_y)
    if params.head == "last":
        p = y[:, -1].copy()
    else:
        p = sigmoid(y @ params.w_p + params.b_p)
    return ForwardTrace(h=h, y=y, p=p, pre_h=pre_h)


def forward(params: ModelParams, window) -> ForwardTrace:
    """Run the network on one ``(T, C)`` window or a ``(N, T, C)`` batch."""
    x, batched = _as_batch(params, window)
    trace = _forward(params, x)
    if not batched:
        trace = ForwardTrace(trace.h[0], trace.y[0], trace.p[0], trace.pre_h[0], batched=False)
    return trace


def _batched_trace(trace: ForwardTrace) -> ForwardTrace:
    if trace.batched:
        return trace
    return ForwardTrace(trace.h[None], trace.y[None], np.atleast_1d(trace.p), trace.pre_h[None])


def _backprop(params: ModelParams, trace: ForwardTrace, x: np.ndarray, d_logit: np.ndarray, want_input: bool):
    """Propagate d(objective)/d(output logit), one value per window, back to parameters and inputs."""
    N, T, _ = x.shape
    h, y = trace.h, trace.y
    grads = {}
    if params.head == "last":
        d_a = np.zeros((N, T))
        d_a[:, -1] = d_logit
    else:
        grads["w_p"] = d_logit @ y
        grads["b_p"] = d_logit.sum()
        d_a = d_logit[:, None] * params.w_p[None, :] * y * (1.0 - y)
    grads["w_hy"] = np.einsum("nt,nth->h", d_a, h)
    grads["b_y"] = d_a.sum()

    d_h_out = d_a[:, :, None] * params.w_hy  # (N, T, H)
    d_pre = np.empty_like(h)
    carry = np.zeros((N, params.H))
    W_hh_T = params.W_hh.T
    for t in range(T - 1, -1, -1):
        d_pre[:, t] = (d_h_out[:, t] + carry) * (1.0 - h[:, t] ** 2)
        carry = d_pre[:, t] @ W_hh_T

    H = params.H
    flat_pre = d_pre.reshape(N * T, H)
    grads["W_xh"] = x.reshape(N * T, -1).T @ flat_pre
    grads["W_hh"] = h[:, :-1].reshape(-1, H).T @ d_pre[:, 1:].reshape(-1, H)
    grads["b_h"] = flat_pre.sum(axis=0)
    d_x = d_pre @ params.W_xh.T if want_input else None
    return grads, d_x


def clamp_prob(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def backward(
    params: ModelParams,
    trace: ForwardTrace,
    window,
    label,
    class_weight=1.0,
    lambda_input: float = 0.0,
    lambda_prm: float = 0.0,
) -> Gradients:
    """Exact gradient of ``mean(w * XE(label, p)) + lambda_input*|W_xh|_1 + lambda_prm*|w_p|_1``.

    ``label`` and ``class_weight`` are scalars for a single window or length-N
    arrays for a batch; the cross-entropy term is averaged over the batch.
    The L1 subgradient uses ``sign`` (zero at zero).
    """
    x, _ = _as_batch(params, window)
    trace = _batched_trace(trace)
    N = x.shape[0]
    if trace.h.shape != (N, params.T, params.H):
        raise RejectedInput(f"trace shape {trace.h.shape} does not match window batch {x.shape}")
    t = np.broadcast_to(np.asarray(label, dtype=np.float64), (N,))
    w = np.broadcast_to(np.asarray(class_weight, dtype=np.float64), (N,))
    p = trace.p
    pc = clamp_prob(p)
    xe = -(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc))
    loss = float(np.mean(w * xe))
    # d XE / d logit = p - t for a sigmoid output
    grads, _ = _backprop(params, trace, x, w * (p - t) / N, want_input=False)

    if lambda_input:
        loss += lambda_input * float(np.abs(params.W_xh).sum())
        grads["W_xh"] = grads["W_xh"] + lambda_input * np.sign(params.W_xh)
    if lambda_prm and params.head == "prm":
        loss += lambda_prm * float(np.abs(params.w_p).sum())
        grads["w_p"] = grads["w_p"] + lambda_prm * np.sign(params.w_p)

    grads["b_y"] = float(grads["b_y"])
    if "b_p" in grads:
        grads["b_p"] = float(grads["b_p"])
    return Gradients(loss=loss, **grads)


def input_jacobian(params: ModelParams, window) -> np.ndarray:
    """d p / d x for every input entry, same shape as the input (time x electrode)."""
    x, batched = _as_batch(params, window)
    trace = _forward(params, x)
    p = trace.p
    _, d_x = _backprop(params, trace, x, p * (1.0 - p), want_input=True)
    return d_x if batched else d_x[0]


def predict_proba(params: ModelParams, windows, chunk: int = 512) -> np.ndarray:
    x, _ = _as_batch(params, windows)
    return np.concatenate([_forward(params, x[i : i + chunk]).p for i in range(0, len(x), chunk)])
