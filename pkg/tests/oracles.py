"""Independent reference implementations used only by the tests.

Scalar Python loops with ``math`` functions; nothing here calls into the
package's numerical code.
"""

import math

import numpy as np


def sig(z, lib=math):
    return 1 / (1 + lib.exp(-z))


def ref_forward(W_xh, W_hh, b_h, w_hy, b_y, head, w_p, b_p, x, lib=math):
    """Single window, explicit loops. Returns (h list, y list, p).

    ``lib`` supplies ``exp`` and ``tanh``; pass ``mpmath`` (with ``mpf``
    entries) for an extended-precision evaluation.
    """
    T, C = len(x), len(x[0])
    H = len(b_h)
    h_prev = [0.0] * H
    hs, ys = [], []
    for t in range(T):
        h = []
        for j in range(H):
            a = b_h[j]
            for i in range(C):
                a += x[t][i] * W_xh[i][j]
            for k in range(H):
                a += h_prev[k] * W_hh[k][j]
            h.append(lib.tanh(a))
        y = sig(sum(w_hy[j] * h[j] for j in range(H)) + b_y, lib)
        hs.append(h)
        ys.append(y)
        h_prev = h
    if head == "last":
        p = ys[-1]
    else:
        p = sig(sum(w_p[t] * ys[t] for t in range(T)) + b_p, lib)
    return hs, ys, p


def ref_loss(tensors, head, xs, labels, weights, lam_in, lam_prm):
    """Mean weighted cross-entropy over windows plus L1 terms."""
    total = 0.0
    for x, t, w in zip(xs, labels, weights):
        _, _, p = ref_forward(
            tensors["W_xh"], tensors["W_hh"], tensors["b_h"], tensors["w_hy"], float(tensors["b_y"]),
            head, tensors.get("w_p"), float(tensors.get("b_p", 0.0)), x,
        )
        total += w * -(t * math.log(p) + (1 - t) * math.log(1 - p))
    loss = total / len(xs)
    loss += lam_in * float(np.abs(tensors["W_xh"]).sum())
    if head == "prm":
        loss += lam_prm * float(np.abs(tensors["w_p"]).sum())
    return loss


def mp_central_diff(f, args, idx, step="1e-25", dps=60):
    """Extended-precision central difference of ``f(args)`` in entry ``idx`` of nested list ``args``.

    Used only to diagnose disagreements at the resolution limit of the 64-bit stencil.
    """
    import mpmath

    with mpmath.workdps(dps):
        h = mpmath.mpf(step)

        def at(delta):
            a = _to_mp(args, mpmath)
            _set(a, idx, _get(a, idx) + delta)
            return f(a)

        return float((at(h) - at(-h)) / (2 * h))


def _to_mp(obj, mpmath):
    if isinstance(obj, (list, tuple)):
        return [_to_mp(o, mpmath) for o in obj]
    return mpmath.mpf(float(obj))


def _get(a, idx):
    for i in idx:
        a = a[i]
    return a


def _set(a, idx, value):
    for i in idx[:-1]:
        a = a[i]
    a[idx[-1]] = value


def central_diff(f, arr, step=1e-4):
    """Central finite differences of scalar f(arr) w.r.t. every entry of arr (modified in place, restored)."""
    arr = np.asarray(arr)
    g = np.zeros(arr.shape)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + step
        up = f()
        arr[idx] = old - step
        down = f()
        arr[idx] = old
        g[idx] = (up - down) / (2 * step)
    return g


def max_rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    denom = np.abs(a) + np.abs(b)
    mask = denom >= floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(a - b)[mask] / denom[mask]))


def df1_section(b, a, x, x0):
    """Direct-form-I biquad with history initialized as if x had been x0 forever."""
    dc = (b[0] + b[1] + b[2]) / (1.0 + a[1] + a[2])
    y0 = dc * x0
    x1 = x2 = x0
    y1 = y2 = y0
    out = []
    for v in x:
        y = b[0] * v + b[1] * x1 + b[2] * x2 - a[1] * y1 - a[2] * y2
        out.append(y)
        x2, x1 = x1, v
        y2, y1 = y1, y
    return out


def ref_filtfilt(sections, x, pad):
    """Odd-reflect pad, steady-state starts, forward-backward averaged with backward-forward."""
    x = list(x)
    left = [2 * x[0] - x[k] for k in range(pad, 0, -1)]
    right = [2 * x[-1] - x[-2 - k] for k in range(pad)]
    ext = left + x + right

    def cascade(seq):
        for b, a in sections:
            seq = df1_section(b, a, seq, seq[0])
        return seq

    def fb(seq):
        return cascade(cascade(seq)[::-1])[::-1]

    one = fb(ext)
    two = fb(ext[::-1])[::-1]
    y = [(u + v) / 2 for u, v in zip(one, two)]
    return y[pad : pad + len(x)]


def nadam_ref(theta, g, m, v, t, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    m_hat = m / (1 - b1 ** (t + 1))
    g_hat = g / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    return theta - lr * (b1 * m_hat + (1 - b1) * g_hat) / (math.sqrt(v_hat) + eps), m, v


def mp_loss_diff(ctx, name, idx):
    """Extended-precision central difference of the loss in one parameter entry."""
    import mpmath

    names = list(ctx["tensors"])
    args = [np.atleast_1d(ctx["tensors"][k]).tolist() for k in names]
    pos = (names.index(name),) + (idx if idx else (0,))
    lam_in, lam_prm = ctx["lam"]

    def f(a):
        t = dict(zip(names, a))
        total = 0
        for xw, lab, w in zip(ctx["x"].tolist(), ctx["labels"], ctx["weights"]):
            _, _, p = ref_forward(t["W_xh"], t["W_hh"], t["b_h"], t["w_hy"], t["b_y"][0], ctx["head"],
                                  t.get("w_p"), t["b_p"][0] if "b_p" in t else 0, xw, lib=mpmath)
            total += float(w) * -(lab * mpmath.log(p) + (1 - lab) * mpmath.log(1 - p))
        l1 = lambda rows: sum(abs(v) for r in rows for v in (r if isinstance(r, list) else [r]))  # noqa: E731
        loss = total / len(ctx["labels"]) + float(lam_in) * l1(t["W_xh"])
        if ctx["head"] == "prm":
            loss += float(lam_prm) * l1(t["w_p"])
        return loss

    return mp_central_diff(f, args, pos)


def mp_prob_diff(p, head, x, idx):
    """Extended-precision central difference of the output probability in one input entry."""
    import mpmath

    def f(a):
        return ref_forward(p.W_xh.tolist(), p.W_hh.tolist(), p.b_h.tolist(), p.w_hy.tolist(), p.b_y, head,
                           None if p.w_p is None else p.w_p.tolist(), p.b_p or 0.0, a, lib=mpmath)[2]

    return mp_central_diff(f, x.tolist(), idx)
