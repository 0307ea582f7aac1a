import numpy as np
import pytest

from pmuguard import kernels
from pmuguard.origin import DegenerateFitError, fit_circle

from conftest import circle_points


def rotating(rng, n, noise=0.0, f=2.5, rate=30.0, center=0.05 - 0.02j):
    t = np.arange(n)
    z = center + np.exp(2j * np.pi * f * t / rate)
    return z + noise * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def test_fit_window_matches_fit_circle(backend, rng):
    for _ in range(200):
        z = circle_points(rng, rng.integers(4, 40), rng.uniform(-3, 3, 2), rng.uniform(0.1, 3))
        z = z + 1e-3 * rng.standard_normal(z.size)
        cx, cy, ok = backend.fit_window(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag))
        ref = fit_circle(z)
        assert ok
        assert abs(complex(cx, cy) - ref.center_complex) <= 1e-9 * (1 + abs(ref.center_complex))


def test_fit_window_flags_collinear(backend):
    x = np.linspace(0, 1, 10)
    cx, cy, ok = backend.fit_window(x.copy(), (2 * x + 1).copy())
    assert not ok and np.isnan(cx) and np.isnan(cy)
    with pytest.raises(DegenerateFitError):
        fit_circle(x + 1j * (2 * x + 1))


@pytest.mark.skipif(kernels.compiled_backend is None, reason="extension not built")
@pytest.mark.parametrize("omega", [3, 4, 5, 10, 30])
def test_sliding_centers_backends_agree(rng, omega):
    z = rotating(rng, 3000, noise=1e-3)
    re, im = np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag)
    a = kernels.compiled_backend.sliding_centers(re, im, omega)
    b = kernels.python_backend.sliding_centers(re, im, omega)
    assert np.array_equal(a[2], b[2])
    np.testing.assert_allclose(a[0], b[0], rtol=0, atol=1e-10)
    np.testing.assert_allclose(a[1], b[1], rtol=0, atol=1e-10)
    assert np.isnan(a[0][:omega - 1]).all()


def test_sliding_centers_stalled_phasor_is_degenerate(backend):
    z = np.full(50, 0.3 + 0.4j)
    cx, cy, ok = backend.sliding_centers(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag), 10)
    assert not ok.any()


def _scan_oracle(cx, cy, ok, omega, tau, c0, delta):
    # direct transcription of the per-sample rule with a Python list queue
    q, prev, cool, out = [], 0.0, 0, []
    for t in range(len(cx)):
        if t < omega - 1:
            out.append((np.nan, np.nan, 0, 0))
            continue
        d = abs(complex(cx[t], cy[t]) - c0) if ok[t] else prev
        prev = d
        q = (q + [d])[-tau:]
        cool = max(cool - 1, 0)
        flag = len(q) == tau and d > delta
        emit = flag and cool == 0
        if emit:
            cool = tau
        out.append((d, sum(q) / len(q), int(flag), int(emit)))
    return out


def test_scan_detector_matches_oracle(backend, rng):
    n, omega, tau = 400, 10, 7
    cx = np.where(np.arange(n) < omega - 1, np.nan, rng.normal(0, 0.01, n))
    cy = np.where(np.arange(n) < omega - 1, np.nan, rng.normal(0, 0.01, n))
    cx[200:260] += np.linspace(0, 0.2, 60)
    ok = (rng.random(n) > 0.05).astype(np.uint8)
    ok[:omega - 1] = 0
    d, qm, flag, emit, ndeg = backend.scan_detector(cx, cy, ok, omega, tau, 0.0, 0.0, 0.03)
    ref = _scan_oracle(cx, cy, ok, omega, tau, 0j, 0.03)
    np.testing.assert_allclose(d, [r[0] for r in ref], atol=1e-15)
    np.testing.assert_allclose(qm, [r[1] for r in ref], atol=1e-15)
    assert flag.tolist() == [r[2] for r in ref]
    assert emit.tolist() == [r[3] for r in ref]
    assert ndeg == int(np.sum(ok[omega - 1:] == 0))
    assert emit.sum() > 1


def test_emissions_are_tau_apart(backend):
    n, omega, tau = 300, 10, 10
    cx = np.where(np.arange(n) < omega - 1, np.nan, 1.0)
    cy = np.where(np.arange(n) < omega - 1, np.nan, 0.0)
    ok = np.ones(n, np.uint8)
    _, _, flag, emit, _ = backend.scan_detector(cx, cy, ok, omega, tau, 0.0, 0.0, 0.5)
    t = np.flatnonzero(emit)
    assert t[0] == omega + tau - 2
    assert (np.diff(t) == tau).all()
    assert flag[t[0]:].all()


@pytest.mark.skipif(kernels.compiled_backend is None, reason="extension not built")
def test_class_min_similarity_backends_agree(rng):
    k, lam, n = 37, 5, 10
    vec = rng.standard_normal((k * lam + 10, n))
    pen = np.where(rng.random((k + 3, lam)) < 0.3, np.inf, 0.0)
    q = rng.standard_normal(n)
    a = kernels.compiled_backend.class_min_similarity(vec, pen, k, q)
    b = kernels.python_backend.class_min_similarity(vec, pen, k, q)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)


def test_backend_selection_reports_name():
    assert kernels.BACKEND_NAME in ("compiled", "python")
    if kernels.compiled_backend is not None:
        assert kernels.backend is kernels.compiled_backend
