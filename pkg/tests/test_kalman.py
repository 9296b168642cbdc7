import pytest

import numpy as np

from trackkit.models import Box, Frame, Trajectory
from trackkit.kalman import (kf_init, kf_predict, kf_update, gate_distance, drift_check,
                             chi2_gate, project, measurement_to_box, box_to_measurement,
                             KalmanState, DEFAULT_GATE)
from trackkit.errors import DegenerateBox, TooShort

from util import kalman_oracle, gate_oracle


def linear_track(rng, n_frames=20):
    x1, y1 = rng.uniform(0.15, 0.4, 2)
    w, h = rng.uniform(0.1, 0.3, 2)
    dx, dy = rng.uniform(-0.005, 0.005, 2)
    dw = rng.uniform(-0.002, 0.002)
    return [[x1 + t * dx, y1 + t * dy, x1 + t * dx + w + t * dw, y1 + t * dy + h]
            for t in range(n_frames)]


def test_kalman_matches_oracle_on_linear_tracks():
    rng = np.random.default_rng(0)
    for _ in range(50):
        boxes = linear_track(rng)
        means, covs = kalman_oracle(boxes)
        s = kf_init(Box(*boxes[0]))
        assert np.allclose(s.mean, means[0], atol=1e-9, rtol=0)
        assert np.allclose(s.covariance, covs[0], atol=1e-9, rtol=0)
        for box, mean, cov in zip(boxes[1:], means[1:], covs[1:]):
            predicted = kf_predict(s)
            assert gate_distance(predicted, Box(*box)) == pytest.approx(
                gate_oracle(predicted.mean, predicted.covariance, box), rel=1e-9)
            s = kf_update(predicted, Box(*box))
            assert np.allclose(s.mean, mean, atol=1e-9, rtol=0)
            assert np.allclose(s.covariance, cov, atol=1e-9, rtol=0)


def test_kalman_states_are_immutable():
    s = kf_init(Box(.2, .2, .4, .5))
    with pytest.raises(ValueError):
        s.mean[0] = 1.0
    p = kf_predict(s)
    assert p is not s
    assert np.array_equal(s.mean[:4], box_to_measurement(Box(.2, .2, .4, .5)))


def test_kalman_covariance_stays_symmetric_positive_definite():
    rng = np.random.default_rng(1)
    boxes = linear_track(rng, 100)
    s = kf_init(Box(*boxes[0]))
    for box in boxes[1:]:
        s = kf_update(kf_predict(s), Box(*box))
        assert np.array_equal(s.covariance, s.covariance.T)
        assert np.all(np.linalg.eigvalsh(s.covariance) > 0)
        _, S = project(s)
        assert np.all(np.linalg.eigvalsh(S) > 0)


def test_kalman_measurement_round_trip():
    b = Box(.1, .2, .4, .6)
    assert measurement_to_box(box_to_measurement(b)).to_list() == pytest.approx(b.to_list())
    with pytest.raises(DegenerateBox):
        box_to_measurement(Box(.1, .2, .1, .6))


def test_kalman_chi2_gate():
    assert chi2_gate(0.999) == pytest.approx(DEFAULT_GATE, abs=0.01)
    assert chi2_gate(0.95) == pytest.approx(9.4877, abs=1e-3)


def _trajectory(boxes):
    return Trajectory("v", "thing", [Frame(i, Box(*b)) for i, b in enumerate(boxes)])


def test_kalman_drift_check_flags_jump_frame():
    box = [0.05, 0.4, 0.15, 0.5]
    jump = [0.55, 0.4, 0.65, 0.5]
    boxes = [box] * 10
    boxes[6] = jump
    report = drift_check(_trajectory(boxes), 18.47)
    assert report.flagged_frames == [6]
    assert report.drifted
    assert report.max_gate_distance > 18.47


def test_kalman_drift_check_smooth_track():
    rng = np.random.default_rng(2)
    for _ in range(10):
        report = drift_check(_trajectory(linear_track(rng)))
        assert not report.drifted
        assert report.max_gate_distance <= DEFAULT_GATE


def test_kalman_drift_check_frame_gaps():
    box = Box(.3, .3, .5, .6)
    t = Trajectory("v", "thing", [Frame(0, box), Frame(5, box), Frame(20, box)])
    assert not drift_check(t).drifted


def test_kalman_drift_check_too_short():
    with pytest.raises(TooShort):
        drift_check(_trajectory([[.1, .1, .2, .2]]))


def test_kalman_translation_equivariance():
    rng = np.random.default_rng(3)
    dx, dy = 0.05, -0.03
    for _ in range(10):
        boxes = linear_track(rng)
        moved = [[b[0] + dx, b[1] + dy, b[2] + dx, b[3] + dy] for b in boxes]
        s, t = kf_init(Box(*boxes[0])), kf_init(Box(*moved[0]))
        for box, box_moved in zip(boxes[1:], moved[1:]):
            s = kf_update(kf_predict(s), Box(*box))
            t = kf_update(kf_predict(t), Box(*box_moved))
            assert np.allclose(t.position - s.position, [dx, dy, 0, 0], atol=1e-10, rtol=0)
            assert np.allclose(t.velocity, s.velocity, atol=1e-10, rtol=0)


def test_kalman_predict_moves_by_velocity():
    s = kf_init(Box(.2, .2, .4, .5))
    p = kf_predict(s)
    assert np.array_equal(p.position, s.position)
    assert np.trace(p.covariance) >= np.trace(s.covariance)
    moving = KalmanState(s.mean + np.r_[np.zeros(4), .01, 0, 0, 0], s.covariance)
    q = kf_predict(moving)
    assert q.position[0] == pytest.approx(s.position[0] + .01, abs=1e-15)
    assert np.array_equal(q.position[1:], s.position[1:])
    for _ in range(20):
        r = kf_predict(q)
        assert np.trace(r.covariance) >= np.trace(q.covariance)
        q = r


def test_kalman_update_with_zero_innovation():
    s = kf_predict(kf_init(Box(.2, .2, .4, .5)))
    predicted, _ = project(s)
    u = kf_update(s, measurement_to_box(predicted))
    assert np.allclose(u.mean, s.mean, atol=1e-12, rtol=0)


def test_kalman_update_converges_to_fixed_box():
    target = Box(.3, .25, .5, .55)
    s = kf_init(Box(.2, .2, .4, .5))
    for _ in range(100):
        s = kf_update(kf_predict(s), target)
    assert np.allclose(s.position, box_to_measurement(target), atol=1e-5, rtol=0)


def test_kalman_gate_distance_diagonal_and_monotone():
    s = kf_init(Box(.2, .2, .4, .5))
    mean, S = project(s)
    assert np.array_equal(S, np.diag(np.diag(S)))
    b = Box(.25, .22, .43, .5)
    delta = box_to_measurement(b) - mean
    assert gate_distance(s, b) == pytest.approx(np.sum(delta ** 2 / np.diag(S)), rel=1e-9)
    distances = [gate_distance(s, Box(.2 + .01 * t, .2 + .005 * t, .4 + .01 * t, .5 + .005 * t))
                 for t in range(10)]
    assert distances[0] == pytest.approx(0.0, abs=1e-20)
    assert all(b > a for a, b in zip(distances, distances[1:]))
