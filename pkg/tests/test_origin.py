import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmuguard import origin
from pmuguard.origin import (
    DegenerateFitError,
    DetectorState,
    calibrate,
    detect_channel,
    fit_circle,
)
from pmuguard.phasor import load_preset
from pmuguard.evaluation import simulate

from conftest import circle_points


def test_unit_circle_example():
    f = fit_circle([(1, 0), (0, 1), (-1, 0), (0, -1)])
    assert f.center == pytest.approx((0.0, 0.0), abs=1e-9)
    assert f.radius == pytest.approx(1.0, abs=1e-9)


def test_shifted_circle_example():
    f = fit_circle([(3, 2), (1, 2), (2, 3), (2, 1)])
    assert f.center == pytest.approx((2.0, 2.0), abs=1e-9)
    assert f.radius == pytest.approx(1.0, abs=1e-9)


def test_complex_and_pair_inputs_agree():
    z = np.array([1 + 0j, 1j, -1 + 0j, -0.6 - 0.8j])
    a = fit_circle(z)
    b = fit_circle(np.column_stack([z.real, z.imag]))
    assert a.center == b.center and a.radius == b.radius


def test_coefficients_unit_norm_and_center_recomputable(rng):
    z = circle_points(rng, 12, (0.4, -1.1), 2.5)
    f = fit_circle(z)
    a, b1, b2, c = f.coeffs
    assert math.isclose(math.hypot(a, b1, b2, c), 1.0, rel_tol=1e-12)
    assert f.center == pytest.approx((-b1 / (2 * a), -b2 / (2 * a)), rel=1e-12)
    assert f.radius == pytest.approx(math.sqrt((b1 * b1 + b2 * b2) / (4 * a * a) - c / a))


def gauss_newton_circle(x, y, iters=50):
    cx, cy = x.mean(), y.mean()
    r = np.hypot(x - cx, y - cy).mean()
    for _ in range(iters):
        dx, dy = x - cx, y - cy
        rho = np.hypot(dx, dy)
        res = rho - r
        jac = np.column_stack([-dx / rho, -dy / rho, -np.ones_like(x)])
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        cx, cy, r = cx + step[0], cy + step[1], r + step[2]
        if np.linalg.norm(step) < 1e-15:
            break
    return cx, cy, r


def test_noisy_fit_agrees_with_geometric_oracle(rng):
    for _ in range(20):
        z = circle_points(rng, 30, (0.05, -0.02), 0.98)
        z = z + 1e-4 * (rng.standard_normal(30) + 1j * rng.standard_normal(30))
        f = fit_circle(z)
        gx, gy, _ = gauss_newton_circle(z.real, z.imag)
        assert math.hypot(f.center[0] - gx, f.center[1] - gy) <= 1e-3
        assert math.hypot(f.center[0] - 0.05, f.center[1] + 0.02) <= 1e-3


def test_errors():
    with pytest.raises(ValueError):
        fit_circle([1 + 0j, 1j])
    with pytest.raises(DegenerateFitError):
        fit_circle([0j, 1 + 1j, 2 + 2j, 3 + 3j])
    with pytest.raises(DegenerateFitError):
        fit_circle([1 + 1j] * 5)
    with pytest.raises(ValueError):
        fit_circle([0j, 1 + 0j, complex("nan")])


@settings(max_examples=200, deadline=None)
@given(
    cx=st.floats(-10, 10), cy=st.floats(-10, 10), r=st.floats(0.05, 10),
    s=st.floats(0.01, 100), seed=st.integers(0, 2**32 - 1),
)
def test_scale_equivariance(cx, cy, r, s, seed):
    rng = np.random.default_rng(seed)
    z = circle_points(rng, 8, (cx, cy), r)
    a = fit_circle(z)
    b = fit_circle(s * z)
    scale = s * (1 + abs(a.center_complex))
    assert abs(b.center_complex - s * a.center_complex) <= 1e-9 * scale
    assert abs(b.radius - s * a.radius) <= 1e-9 * s * (1 + a.radius)


@settings(max_examples=200, deadline=None)
@given(e1=st.floats(-5, 5), e2=st.floats(-5, 5), seed=st.integers(0, 2**32 - 1))
def test_translation_moves_center(e1, e2, seed):
    rng = np.random.default_rng(seed)
    z = circle_points(rng, 10, (0.1, -0.3), 1.0, arc=np.pi)
    a = fit_circle(z)
    b = fit_circle(z + complex(e1, e2))
    assert abs(b.center_complex - (a.center_complex + complex(e1, e2))) <= 1e-8


def test_first_order_optimality(rng):
    # no small perturbation of (center, radius) lowers the algebraic residual
    for _ in range(20):
        z = circle_points(rng, 25, rng.uniform(-1, 1, 2), rng.uniform(0.5, 2))
        z = z + 1e-2 * rng.standard_normal(25)
        f = fit_circle(z)
        b = np.column_stack([np.abs(z) ** 2, z.real, z.imag, np.ones(25)])

        def resid(cx, cy, r):
            u = np.array([1.0, -2 * cx, -2 * cy, cx * cx + cy * cy - r * r])
            return np.linalg.norm(b @ (u / np.linalg.norm(u)))

        base = resid(*f.center, f.radius)
        for _ in range(30):
            d = rng.choice([-1e-6, 1e-6], 3)
            assert resid(f.center[0] + d[0], f.center[1] + d[1], f.radius + d[2]) >= base - 1e-15


def clean_column(n=2400, f=2.3, center=0.0, slip=None):
    t = np.arange(n)
    mag = np.ones(n)
    if slip is not None:
        mag[slip:] *= 1.002
    return center + mag * np.exp(2j * np.pi * f * t / 30.0)


def test_calibrate_noiseless_hits_floor():
    st_ = calibrate(clean_column(1200), omega=10, tau=10, margin=3.0)
    assert abs(st_.baseline_center) <= 1e-6
    assert st_.delta == pytest.approx(origin.DELTA_FLOOR) or st_.delta <= 1e-6 * 3


def test_calibrate_noisy_is_self_consistent(rng):
    z = clean_column(1200) + 0.05 * (rng.standard_normal(1200) + 1j * rng.standard_normal(1200))
    st_ = calibrate(z, omega=10, tau=10, margin=1.0)
    assert st_.delta > 1e-6
    tr = detect_channel(st_, z)
    assert not tr.flag.any()


def test_calibrate_errors():
    with pytest.raises(ValueError):
        calibrate(clean_column(15), omega=10, tau=10)
    with pytest.raises(ValueError):
        calibrate(clean_column(100), margin=0.5)
    with pytest.raises(DegenerateFitError):
        calibrate(np.linspace(0, 1, 100) * (1 + 1j))


def test_streaming_and_batch_paths_agree(rng):
    z = clean_column(1500, slip=60) + 1e-4 * rng.standard_normal(1500)
    st_ = calibrate(z[:1200], omega=10, tau=8, margin=3.0, channel_id=4)
    ramp = np.zeros(1500)
    ramp[1300:] = np.cumsum(np.full(200, 5e-3))
    zin = z + ramp * np.exp(0.4j)
    tr = detect_channel(st_, zin)
    live = st_.reset()
    events, flags, d = [], [], []
    for v in zin:
        ev = live.step(v)
        flags.append(live.flag)
        d.append(live.last_d if live.last_d is not None else np.nan)
        if ev is not None:
            events.append(ev)
    assert flags == tr.flag.tolist()
    np.testing.assert_allclose(d, tr.d, atol=1e-10, equal_nan=True)
    batch = tr.detections()
    assert [e.t for e in events] == [e.t for e in batch]
    for a, b in zip(events, batch):
        np.testing.assert_allclose(a.pattern.sequence, b.pattern.sequence, atol=1e-10)
        assert a.channel == 4 and len(a.pattern) == 8


def test_warm_up_guard_blocks_early_detection():
    st_ = DetectorState(5.0 + 0j, delta=0.1, omega=10, tau=10)
    z = clean_column(40)
    fired = [t for t, v in enumerate(z) if st_.step(v) is not None]
    # d > delta from the first warm window, but the queue fills only at t = omega + tau - 2
    assert fired and fired[0] == 18


def test_degenerate_window_carries_previous_deviation():
    st_ = DetectorState(0j, delta=10.0, omega=4, tau=3)
    for v in clean_column(6):
        st_.step(v)
    prev = st_.last_d
    seen = 0
    for _ in range(6):
        st_.step(0.5 + 0.5j)
        if st_.n_degenerate > seen:
            seen = st_.n_degenerate
            assert st_.center is None
            assert st_.last_d == prev
        prev = st_.last_d
    assert seen >= 1


def test_clean_scenario_has_no_detections():
    cfg = load_preset("scenario1", seed=3, attack_classes=())
    sim = simulate(cfg)
    states = origin.calibrate_matrix(sim.attacked.slice_rows(0, cfg.train_length))
    traces = origin.detect_stream(sim.attacked, states)
    assert sim.attacked.n_samples == 18000
    assert not origin.stream_flag(traces).any()
    assert origin.collect_detections(traces) == []


def test_class4_detected_quickly():
    for seed in range(5):
        cfg = load_preset("scenario1", seed=seed)
        from pmuguard.evaluation import detection_latency
        lat = detection_latency(cfg, 4)
        assert lat is not None and lat <= 10 + 10 + 20


def test_state_round_trip(tmp_path):
    st_ = calibrate(clean_column(600), channel_id=2)
    origin.save_states([st_], tmp_path / "s.json")
    back = origin.load_states(tmp_path / "s.json")[0]
    assert back.to_dict() == st_.to_dict()


def test_detection_event_json():
    st_ = DetectorState(5.0 + 0j, delta=0.1, omega=10, tau=4, channel_id=1)
    ev = next(e for e in (st_.step(v) for v in clean_column(40)) if e is not None)
    import json
    rec = json.loads(ev.to_json())
    assert set(rec) == {"t", "channel", "d_t", "delta", "pattern"}
    assert len(rec["pattern"]) == 4 and rec["channel"] == 1
