"""Reference implementations of the hot loops (numpy + plain Python).

Used when the compiled extension is unavailable, and as the cross-check
route for it in the test-suite.
"""
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _centers_from_vt(vt, s):
    # vt: (..., 4, 4) right singular vectors, s: (..., k) singular values
    u = vt[..., -1, :]
    smax = s[..., 0]
    second = s[..., 2] if s.shape[-1] >= 4 else np.zeros_like(smax)
    a = u[..., 0]
    ok = (smax > 0) & (second > 1e-12 * smax) & (np.abs(a) >= 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        cx = np.where(ok, -u[..., 1] / (2.0 * a), np.nan)
        cy = np.where(ok, -u[..., 2] / (2.0 * a), np.nan)
    return cx, cy, ok


def _design(x, y):
    return np.stack([x * x + y * y, x, y, np.ones_like(x)], axis=-1)


def fit_window(re, im):
    re = np.asarray(re, dtype=float)
    im = np.asarray(im, dtype=float)
    if re.shape != im.shape:
        raise ValueError("re and im lengths differ")
    b = _design(re, im)
    if b.shape[0] < 4:
        b = np.vstack([b, np.zeros((4 - b.shape[0], 4))])
    _, s, vt = np.linalg.svd(b)
    cx, cy, ok = _centers_from_vt(vt, s)
    return float(cx), float(cy), bool(ok)


def sliding_centers(re, im, omega):
    re = np.ascontiguousarray(re, dtype=float)
    im = np.ascontiguousarray(im, dtype=float)
    n = re.shape[0]
    if im.shape[0] != n:
        raise ValueError("re and im lengths differ")
    if omega < 3:
        raise ValueError("omega must be at least 3")
    cx = np.full(n, np.nan)
    cy = np.full(n, np.nan)
    ok = np.zeros(n, dtype=np.uint8)
    if n < omega:
        return cx, cy, ok
    b = _design(sliding_window_view(re, omega), sliding_window_view(im, omega))
    if omega < 4:
        pad = np.zeros(b.shape[:-2] + (4 - omega, 4))
        b = np.concatenate([b, pad], axis=-2)
    _, s, vt = np.linalg.svd(b, full_matrices=False)
    wx, wy, wok = _centers_from_vt(vt, s)
    cx[omega - 1:] = wx
    cy[omega - 1:] = wy
    ok[omega - 1:] = wok
    return cx, cy, ok


def scan_detector(cx, cy, ok, omega, tau, c0x, c0y, delta):
    n = len(cx)
    d = np.full(n, np.nan)
    qm = np.full(n, np.nan)
    flag = np.zeros(n, dtype=np.uint8)
    emit = np.zeros(n, dtype=np.uint8)
    ring = [0.0] * tau
    count = head = cooldown = degenerate = 0
    prev = 0.0
    cx = cx.tolist()
    cy = cy.tolist()
    ok = ok.tolist()
    for t in range(omega - 1, n):
        if ok[t]:
            dt = math.hypot(c0x - cx[t], c0y - cy[t])
        else:
            dt = prev
            degenerate += 1
        prev = dt
        d[t] = dt
        ring[head] = dt
        head = (head + 1) % tau
        if count < tau:
            count += 1
        qm[t] = sum(ring[:count]) / count
        if cooldown > 0:
            cooldown -= 1
        if count == tau and dt > delta:
            flag[t] = 1
            if cooldown == 0:
                emit[t] = 1
                cooldown = tau
    return d, qm, flag, emit, degenerate


def class_min_similarity(vec, pen, k, q):
    lam = pen.shape[1]
    ups = np.abs(vec[:k * lam] @ q).reshape(k, lam)
    ups += pen[:k]
    return ups.min(axis=1)
