import numpy as np
import pytest

from pmuguard.attack import (
    AttackPlan,
    build_plan,
    class_rate,
    inject,
    load_labels,
    ramp_magnitude,
    save_labels,
)
from pmuguard.grid import build_grid, estimate_state, generate_clean, random_model, residual_bdd
from pmuguard.phasor import load_preset


def small_setup(seed=0):
    model = random_model(10, 4, seed)
    m = generate_clean(model, 400)
    return model, m


def test_empty_schedule_is_identity():
    model, m = small_setup()
    plan = build_plan(model, 1, [], targets=[1], n_samples=400)
    assert not plan.c_matrix().any()
    out, labels = inject(m, plan, model)
    assert out.equals(m) and not labels.any()


def test_class4_cumulative_magnitude():
    mag = ramp_magnitude([(4, 10, 160)], 200)
    assert mag[159] == pytest.approx(0.75)
    assert mag[9] == 0 and mag[160] == 0


def test_class8_mirrors_class4():
    np.testing.assert_allclose(ramp_magnitude([(8, 0, 150)], 150), -ramp_magnitude([(4, 0, 150)], 150))


def test_rates():
    assert [class_rate(c) for c in range(1, 9)] == [1e-4, 5e-4, 1e-3, 5e-3, -1e-4, -5e-4, -1e-3, -5e-3]
    with pytest.raises(ValueError):
        class_rate(9)


def test_back_to_back_intervals_accumulate():
    mag = ramp_magnitude([(1, 0, 100), (4, 100, 200), (2, 300, 400)], 400)
    assert mag[199] == pytest.approx(100 * 1e-4 + 100 * 5e-3)
    assert mag[250] == 0
    assert mag[399] == pytest.approx(100 * 5e-4)


@pytest.mark.parametrize("seed", range(20))
def test_unobservability_and_state_shift(seed):
    model, m = small_setup(seed)
    rng = np.random.default_rng(seed)
    targets = rng.choice(4, size=rng.integers(1, 4), replace=False)
    plan = build_plan(model, 1, [(int(rng.integers(1, 9)), 50, 350)], targets, seed=seed, n_samples=400)
    bad, _ = inject(m, plan, model)
    c = plan.c_matrix()
    for t in (0, 100, 349):
        r0 = residual_bdd(model, m.samples[t], 1.0).norm
        r1 = residual_bdd(model, bad.samples[t], 1.0).norm
        assert abs(r1 - r0) <= 1e-8 * (1 + r0)
        np.testing.assert_allclose(estimate_state(model, bad.samples[t]),
                                   estimate_state(model, m.samples[t]) + c[t], atol=1e-8)


def test_support_and_labels_agree():
    cfg = load_preset("scenario1", cycles=4)
    model = build_grid(cfg)
    m = generate_clean(model, cfg.n_samples)
    plan = build_plan(model, 1, cfg.schedule(), model.targets, seed=0, n_samples=cfg.n_samples)
    bad, labels = inject(m, plan, model)
    d = bad.samples - m.samples
    np.testing.assert_array_equal(labels != 0, np.abs(d) > 0)
    assert len(plan.support) == cfg.attacked_summary()["total"]


def test_schedule_validation():
    model, _ = small_setup()
    with pytest.raises(ValueError):
        build_plan(model, 1, [(1, 0, 100), (2, 50, 150)], [0], n_samples=400)
    with pytest.raises(ValueError):
        build_plan(model, 5, [], [0])
    with pytest.raises(ValueError):
        build_plan(model, 1, [(1, 0, 500)], [0], n_samples=400)
    with pytest.raises(ValueError):
        build_plan(model, 1, [], [])


def test_plan_and_labels_round_trip(tmp_path):
    model, m = small_setup()
    plan = build_plan(model, 2, [(5, 0, 100)], [0, 2], seed=3, n_samples=400)
    back = AttackPlan.load(plan.save(tmp_path / "p.json"))
    np.testing.assert_array_equal(back.c_matrix(), plan.c_matrix())
    _, labels = inject(m, plan, model)
    np.testing.assert_array_equal(load_labels(save_labels(labels, tmp_path / "l.csv")), labels)
