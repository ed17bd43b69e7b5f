import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msmu_forge.calib import (
    RELATIVE,
    CalibrationMode,
    SegmentConstraint,
    _arrays,
    calibrate,
    load_constraints,
    metric_jacobian,
    numeric_jacobian,
    relative_error,
    residual,
    residual_vector,
    save_constraints,
    synth_constraints,
)
from msmu_forge.errors import CalibrationError, ValidationError
from msmu_forge.ingest import Intrinsics

K = Intrinsics(500.0, 500.0, 320.0, 240.0)
INIT = CalibrationMode(initial=(600.0, 600.0, 300.0, 200.0))


def symbolic_residual(c, k):
    """||d1 K^-1 p1 - d2 K^-1 p2||^2 - L^2, evaluated with an explicit inverse."""
    Kinv = np.linalg.inv(np.array([[k.fx, 0, k.cx], [0, k.fy, k.cy], [0, 0, 1.0]]))
    P1 = c.d1 * Kinv @ np.array([c.p1[0], c.p1[1], 1.0])
    P2 = c.d2 * Kinv @ np.array([c.p2[0], c.p2[1], 1.0])
    return float(np.sum((P1 - P2) ** 2) - c.L**2)


def test_noiseless_n12_recovers_within_1e3():
    cons = synth_constraints(K, 12, rng_seed=0, image_size=(480, 640))
    t = time.perf_counter()
    res = calibrate(cons, INIT)
    assert time.perf_counter() - t < 1.0
    assert res.converged
    assert relative_error(res.intrinsics, K) <= 1e-3


def test_n4_generic_converges():
    res = calibrate(synth_constraints(K, 4, rng_seed=0, image_size=(480, 640)), INIT)
    assert res.converged


def test_n3_is_contract_error():
    with pytest.raises(CalibrationError):
        calibrate(synth_constraints(K, 3, rng_seed=0), INIT)


def test_relative_needs_six():
    with pytest.raises(CalibrationError):
        calibrate(synth_constraints(K, 5, rng_seed=0), CalibrationMode(variant=RELATIVE))


def test_noise_n50_within_2_percent():
    cons = synth_constraints(K, 50, rng_seed=7, depth_noise_sigma=0.01, image_size=(480, 640))
    assert any(abs(residual(c, K)) > 1e-9 for c in cons)
    res = calibrate(cons, INIT)
    assert relative_error(res.intrinsics, K) <= 0.02


def test_residual_zero_on_forward_projection():
    for c in synth_constraints(K, 50, rng_seed=3):
        assert abs(residual(c, K)) <= 1e-12


def test_pure_depth_segment():
    c = SegmentConstraint((K.cx, K.cy), (K.cx, K.cy), 1.0, 2.0, 1.0)
    assert residual(c, K) == 0.0


@settings(max_examples=100, deadline=None)
@given(
    st.floats(200, 1500), st.floats(200, 1500), st.floats(100, 700), st.floats(100, 500),
    st.lists(st.floats(0, 1000), min_size=4, max_size=4), st.floats(0.2, 9), st.floats(0.2, 9), st.floats(0.01, 5),
)
def test_residual_matches_symbolic(fx, fy, cx, cy, uv, d1, d2, L):
    k = Intrinsics(fx, fy, cx, cy)
    c = SegmentConstraint((uv[0], uv[1]), (uv[2], uv[3]), d1, d2, L)
    want = symbolic_residual(c, k)
    assert residual(c, k) == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_true_params_machine_level_cost():
    cons = synth_constraints(K, 30, rng_seed=9)
    r = residual_vector(np.array(K.as_tuple()), _arrays(cons))
    assert float(r @ r) < 1e-18


@pytest.mark.parametrize("kind", ["squared", "length"])
def test_analytic_jacobian_matches_finite_differences(kind):
    data = _arrays(synth_constraints(K, 10, rng_seed=4))
    p = np.array([530.0, 480.0, 300.0, 250.0])
    Ja = metric_jacobian(p, data, kind)
    Jn = numeric_jacobian(lambda q: residual_vector(q, data, kind=kind), p)
    np.testing.assert_allclose(Ja, Jn, rtol=1e-5, atol=1e-9)


def test_cost_non_increasing_across_steps():
    res = calibrate(synth_constraints(K, 20, rng_seed=2, depth_noise_sigma=0.01), INIT)
    h = res.cost_history
    assert len(h) > 2
    assert all(b <= a for a, b in zip(h, h[1:]))


def test_relative_mode_recovers():
    k = Intrinsics(525.0, 525.0, 319.5, 239.5)
    cons = synth_constraints(k, 30, rng_seed=5)
    a, b = 0.8, 0.3  # metric = a * rel + b
    rel = [SegmentConstraint(c.p1, c.p2, (c.d1 - b) / a, (c.d2 - b) / a, c.L) for c in cons]
    res = calibrate(rel, CalibrationMode(variant=RELATIVE, initial=(600, 600, 300, 220, 1.0, 0.0)))
    assert res.relative is not None
    assert relative_error(res.intrinsics, k) <= 1e-3
    assert res.relative == pytest.approx((a, b), rel=1e-3)


def test_length_residual_flag_also_recovers():
    res = calibrate(synth_constraints(K, 12, rng_seed=0), CalibrationMode(initial=(600, 600, 300, 200), residual_kind="length"))
    assert relative_error(res.intrinsics, K) <= 1e-3


def test_default_initial_guess_from_image_size():
    res = calibrate(synth_constraints(K, 12, rng_seed=1, image_size=(480, 640)), CalibrationMode(image_size=(480, 640)))
    assert relative_error(res.intrinsics, K) <= 1e-3


def test_non_convergence_is_reported_not_raised():
    res = calibrate(synth_constraints(K, 12, rng_seed=0), CalibrationMode(initial=(600, 600, 300, 200), max_iterations=1))
    assert not res.converged
    assert res.stop_reason == "max_iterations"


def test_synth_is_seeded():
    a = synth_constraints(K, 8, rng_seed=11, depth_noise_sigma=0.01)
    b = synth_constraints(K, 8, rng_seed=11, depth_noise_sigma=0.01)
    assert a == b
    for c in a:
        assert 0 <= c.p1[0] <= 639 and 0 <= c.p1[1] <= 479


@pytest.mark.parametrize("args", [((0, 0), (1, 1), 1.0, 1.0, 0.0), ((0, 0), (1, 1), -1.0, 1.0, 1.0)])
def test_constraint_invariants(args):
    with pytest.raises(ValidationError):
        SegmentConstraint(*args)


def test_constraint_file_round_trip(tmp_path):
    cons = synth_constraints(K, 5, rng_seed=0)
    save_constraints(cons, tmp_path / "c.json")
    assert load_constraints(tmp_path / "c.json") == cons
