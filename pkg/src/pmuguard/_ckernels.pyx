# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: sliding-window circle fits and the detector scan."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, NAN, INFINITY

cnp.import_array()

DEF MAX_SWEEPS = 40
DEF EPS = 2.220446049250313e-16


cdef void _householder_r(double* a, Py_ssize_t m, double* r) noexcept nogil:
    """R factor (4 x 4, column-major) of the column-major m x 4 matrix ``a``.

    ``a`` is overwritten.  B = QR shares singular values and right vectors with R.
    """
    cdef Py_ssize_t i, j, k
    cdef double norm, alpha, vk, dot, beta
    for k in range(4):
        norm = 0.0
        for i in range(k, m):
            norm += a[k * m + i] * a[k * m + i]
        norm = sqrt(norm)
        if norm == 0.0:
            continue
        alpha = -norm if a[k * m + k] > 0 else norm
        # v = a[k:, k] - alpha e_k, stored in place
        a[k * m + k] -= alpha
        beta = 0.0
        for i in range(k, m):
            beta += a[k * m + i] * a[k * m + i]
        if beta == 0.0:
            a[k * m + k] = alpha
            continue
        for j in range(k + 1, 4):
            dot = 0.0
            for i in range(k, m):
                dot += a[k * m + i] * a[j * m + i]
            dot = 2.0 * dot / beta
            for i in range(k, m):
                a[j * m + i] -= dot * a[k * m + i]
        a[k * m + k] = alpha
    for j in range(4):
        for i in range(4):
            r[j * 4 + i] = a[j * m + i] if i <= j else 0.0


cdef int _fit(const double* x, const double* y, Py_ssize_t m, double* a,
              double* out) noexcept nogil:
    """One-sided Jacobi SVD of the m x 4 design matrix.

    ``a`` is scratch space of length 4*m. Writes (cx, cy, sigma_min) to out.
    Returns 0 on success, 1 for a degenerate (line-like or rank-deficient) set.
    """
    cdef double rbuf[16]
    cdef double v[16]
    cdef double alpha, beta, gamma, zeta, t, c, s, tmp_p, tmp_q
    cdef double norms[4]
    cdef Py_ssize_t i, p, q, k, sweep, imin, imid
    cdef int rotated
    cdef double ua, ub1, ub2, un, smax

    for i in range(m):
        a[i] = x[i] * x[i] + y[i] * y[i]
        a[m + i] = x[i]
        a[2 * m + i] = y[i]
        a[3 * m + i] = 1.0
    if m > 4:
        _householder_r(a, m, rbuf)
        a = rbuf
        m = 4
    for i in range(16):
        v[i] = 0.0
    v[0] = 1.0
    v[5] = 1.0
    v[10] = 1.0
    v[15] = 1.0

    for sweep in range(MAX_SWEEPS):
        rotated = 0
        for p in range(3):
            for q in range(p + 1, 4):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    alpha += a[p * m + i] * a[p * m + i]
                    beta += a[q * m + i] * a[q * m + i]
                    gamma += a[p * m + i] * a[q * m + i]
                if gamma == 0.0 or fabs(gamma) <= EPS * sqrt(alpha * beta):
                    continue
                rotated = 1
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0:
                    t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    tmp_p = a[p * m + i]
                    tmp_q = a[q * m + i]
                    a[p * m + i] = c * tmp_p - s * tmp_q
                    a[q * m + i] = s * tmp_p + c * tmp_q
                for k in range(4):
                    tmp_p = v[k * 4 + p]
                    tmp_q = v[k * 4 + q]
                    v[k * 4 + p] = c * tmp_p - s * tmp_q
                    v[k * 4 + q] = s * tmp_p + c * tmp_q
        if not rotated:
            break

    for p in range(4):
        norms[p] = 0.0
        for i in range(m):
            norms[p] += a[p * m + i] * a[p * m + i]
        norms[p] = sqrt(norms[p])
    imin = 0
    smax = norms[0]
    for p in range(1, 4):
        if norms[p] < norms[imin]:
            imin = p
        if norms[p] > smax:
            smax = norms[p]
    # second smallest singular value: a near-zero one means a 2-D null space
    imid = -1
    for p in range(4):
        if p != imin and (imid < 0 or norms[p] < norms[imid]):
            imid = p
    out[2] = norms[imin]
    if smax == 0.0 or norms[imid] <= 1e-12 * smax:
        return 1
    ua = v[0 * 4 + imin]
    ub1 = v[1 * 4 + imin]
    ub2 = v[2 * 4 + imin]
    un = sqrt(ua * ua + ub1 * ub1 + ub2 * ub2 + v[3 * 4 + imin] * v[3 * 4 + imin])
    if fabs(ua) < 1e-12 * un:
        return 1
    out[0] = -ub1 / (2.0 * ua)
    out[1] = -ub2 / (2.0 * ua)
    return 0


def fit_window(double[::1] re, double[::1] im):
    """Fit one window; returns (cx, cy, ok)."""
    cdef Py_ssize_t m = re.shape[0]
    cdef double out[3]
    cdef double[::1] scratch = np.empty(4 * m)
    cdef int status
    if im.shape[0] != m:
        raise ValueError("re and im lengths differ")
    status = _fit(&re[0], &im[0], m, &scratch[0], out)
    if status:
        return NAN, NAN, False
    return out[0], out[1], True


def sliding_centers(double[::1] re, double[::1] im, Py_ssize_t omega):
    """Centers of every stride-1 window ending at t (NaN before warm-up)."""
    cdef Py_ssize_t n = re.shape[0]
    cdef Py_ssize_t t
    cdef double out[3]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cx_arr = np.full(n, np.nan)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cy_arr = np.full(n, np.nan)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ok_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] cx = cx_arr
    cdef double[::1] cy = cy_arr
    cdef cnp.uint8_t[::1] ok = ok_arr
    cdef double[::1] scratch = np.empty(4 * omega)
    if im.shape[0] != n:
        raise ValueError("re and im lengths differ")
    if omega < 3:
        raise ValueError("omega must be at least 3")
    with nogil:
        for t in range(omega - 1, n):
            if _fit(&re[t - omega + 1], &im[t - omega + 1], omega,
                    &scratch[0], out) == 0:
                cx[t] = out[0]
                cy[t] = out[1]
                ok[t] = 1
    return cx_arr, cy_arr, ok_arr


def scan_detector(double[::1] cx, double[::1] cy, cnp.uint8_t[::1] ok,
                  Py_ssize_t omega, Py_ssize_t tau, double c0x, double c0y,
                  double delta):
    """Sequential deviation-queue scan over precomputed window centers.

    Returns (d, qmean, flag, emit, n_degenerate). ``d`` and ``qmean`` are NaN
    before the window is warm.
    """
    cdef Py_ssize_t n = cx.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d_arr = np.full(n, np.nan)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q_arr = np.full(n, np.nan)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] f_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] e_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] d = d_arr
    cdef double[::1] qm = q_arr
    cdef cnp.uint8_t[::1] flag = f_arr
    cdef cnp.uint8_t[::1] emit = e_arr
    cdef double[::1] ring = np.zeros(tau)
    cdef Py_ssize_t t, count = 0, head = 0, cooldown = 0, degenerate = 0, k
    cdef double prev = 0.0, dt, dx, dy, total
    with nogil:
        for t in range(omega - 1, n):
            if ok[t]:
                dx = c0x - cx[t]
                dy = c0y - cy[t]
                dt = sqrt(dx * dx + dy * dy)
            else:
                dt = prev
                degenerate += 1
            prev = dt
            d[t] = dt
            ring[head] = dt
            head = (head + 1) % tau
            if count < tau:
                count += 1
            total = 0.0
            for k in range(count):
                total += ring[k]
            qm[t] = total / count
            if cooldown > 0:
                cooldown -= 1
            if count == tau and dt > delta:
                flag[t] = 1
                if cooldown == 0:
                    emit[t] = 1
                    cooldown = tau
    return d_arr, q_arr, f_arr, e_arr, degenerate


def class_min_similarity(double[:, ::1] vec, double[:, ::1] pen, Py_ssize_t k,
                         double[::1] q):
    """Per-class ``min_s |vec[c*lam+s] . q| + pen[c, s]`` over the first ``k`` classes."""
    cdef Py_ssize_t lam = pen.shape[1]
    cdef Py_ssize_t n = q.shape[0]
    cdef Py_ssize_t c, s, i, row
    cdef double best, acc, val
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.empty(k)
    cdef double[::1] out = out_arr
    if vec.shape[1] != n or vec.shape[0] < k * lam or pen.shape[0] < k:
        raise ValueError("inconsistent exemplar storage")
    with nogil:
        for c in range(k):
            best = INFINITY
            for s in range(lam):
                if pen[c, s] != 0.0:
                    val = pen[c, s]
                    if val < best:
                        best = val
                    continue
                row = c * lam + s
                acc = 0.0
                for i in range(n):
                    acc += vec[row, i] * q[i]
                val = fabs(acc)
                if val < best:
                    best = val
            out[c] = best
    return out_arr
