"""Constant velocity Kalman filter over boxes, used to detect drifting trajectories.

The state is the 8-vector :code:`(cx, cy, a, h, vcx, vcy, va, vh)` where
:code:`a` is the aspect ratio :code:`w / h` and the measurement is
:code:`(cx, cy, a, h)`. Noise is scaled by the box height as in the usual
tracking by detection filters. All functions are pure and return new states.

"""

from typing import Optional
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.stats import chi2

from .models import Box, Trajectory, DriftReport
from .geometry import check_box, is_degenerate
from .errors import DegenerateBox, SingularCovariance, TooShort


NDIM = 4
STD_WEIGHT_POSITION = 1. / 20
STD_WEIGHT_VELOCITY = 1. / 160
DEFAULT_GATE = 18.47

# x_{t+1} = x_t + v_t with dt = 1 frame
_motion_mat = np.eye(2 * NDIM)
_motion_mat[:NDIM, NDIM:] = np.eye(NDIM)
_update_mat = np.eye(NDIM, 2 * NDIM)


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def position(self) -> np.ndarray:
        return self.mean[:NDIM]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[NDIM:]


def chi2_gate(quantile: float, dof: int = NDIM) -> float:
    """Gate threshold on the squared Mahalanobis distance for a :math:`\\chi^2` quantile.

    :code:`chi2_gate(0.999)` is about 18.47.

    """
    return float(chi2.ppf(quantile, df=dof))


def box_to_measurement(b: Box) -> np.ndarray:
    check_box(b)
    if is_degenerate(b):
        raise DegenerateBox(f"Cannot measure degenerate box {b}")
    cx, cy = b.center
    return np.array([cx, cy, b.width / b.height, b.height], dtype=np.float64)


def measurement_to_box(z: np.ndarray) -> Box:
    cx, cy, a, h = (float(v) for v in z[:NDIM])
    w = a * h
    return Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def _frozen(x: np.ndarray) -> np.ndarray:
    x.setflags(write=False)
    return x


def kf_init(b: Box) -> KalmanState:
    """Create a state from an unassociated box with zero velocity"""
    z = box_to_measurement(b)
    mean = np.r_[z, np.zeros(NDIM)]
    h = z[3]
    std = [2 * STD_WEIGHT_POSITION * h,
           2 * STD_WEIGHT_POSITION * h,
           1e-2,
           2 * STD_WEIGHT_POSITION * h,
           10 * STD_WEIGHT_VELOCITY * h,
           10 * STD_WEIGHT_VELOCITY * h,
           1e-5,
           10 * STD_WEIGHT_VELOCITY * h]
    covariance = np.diag(np.square(std))
    return KalmanState(_frozen(mean), _frozen(covariance))


def process_noise(mean: np.ndarray) -> np.ndarray:
    h = mean[3]
    std_pos = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-2, STD_WEIGHT_POSITION * h]
    std_vel = [STD_WEIGHT_VELOCITY * h, STD_WEIGHT_VELOCITY * h, 1e-5, STD_WEIGHT_VELOCITY * h]
    return np.diag(np.square(np.r_[std_pos, std_vel]))


def measurement_noise(mean: np.ndarray) -> np.ndarray:
    h = mean[3]
    std = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h]
    return np.diag(np.square(std))


def _symmetric(x: np.ndarray) -> np.ndarray:
    return (x + x.T) / 2


def kf_predict(s: KalmanState) -> KalmanState:
    """Advance the state by one frame"""
    mean = _motion_mat @ s.mean
    covariance = _motion_mat @ s.covariance @ _motion_mat.T + process_noise(s.mean)
    return KalmanState(_frozen(mean), _frozen(_symmetric(covariance)))


def project(s: KalmanState) -> tuple[np.ndarray, np.ndarray]:
    """Project the state distribution to measurement space.

    Returns:
        The mean and covariance (the innovation covariance :code:`S`) of the
        predicted measurement.

    """
    mean = _update_mat @ s.mean
    covariance = _update_mat @ s.covariance @ _update_mat.T + measurement_noise(s.mean)
    return mean, covariance


def _cho_factor(S: np.ndarray):
    try:
        return scipy.linalg.cho_factor(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise SingularCovariance(f"Innovation covariance is not positive definite: {e}")


def kf_update(s: KalmanState, b: Box) -> KalmanState:
    """Correct the state with the measured box :code:`b`"""
    z = box_to_measurement(b)
    projected_mean, projected_cov = project(s)
    factor = _cho_factor(projected_cov)
    kalman_gain = scipy.linalg.cho_solve(factor, (s.covariance @ _update_mat.T).T,
                                         check_finite=False).T
    innovation = z - projected_mean
    mean = s.mean + kalman_gain @ innovation
    covariance = s.covariance - kalman_gain @ projected_cov @ kalman_gain.T
    return KalmanState(_frozen(mean), _frozen(_symmetric(covariance)))


def gate_distance(s: KalmanState, b: Box) -> float:
    """Squared Mahalanobis distance of the measurement of :code:`b` under the
    predicted measurement distribution of :code:`s`.

    """
    z = box_to_measurement(b)
    projected_mean, projected_cov = project(s)
    cholesky_factor, lower = _cho_factor(projected_cov)
    d = z - projected_mean
    x = scipy.linalg.solve_triangular(cholesky_factor, d, lower=lower, check_finite=False)
    return float(np.sum(x * x))


def drift_check(t: Trajectory, gate_threshold: Optional[float] = None) -> DriftReport:
    """Run the filter along a trajectory and flag frames outside the gate.

    The filter is initialized on the first frame. For every later frame the
    state is predicted once per elapsed frame index, the gate distance of the
    tracked box is computed and, if it is within :code:`gate_threshold`, the
    box is used to update the state. Flagged boxes are not used for updates.

    Args:
        t: The trajectory
        gate_threshold: Threshold on the squared Mahalanobis distance

    """
    if gate_threshold is None:
        gate_threshold = DEFAULT_GATE
    if len(t.frames) < 2:
        raise TooShort(f"Trajectory for {t.video_id}/{t.chunk_text} has {len(t.frames)} frames")
    state = kf_init(t.frames[0].box)
    prev = t.frames[0].frame
    flagged: list[int] = []
    max_distance = 0.0
    for frame in t.frames[1:]:
        for _ in range(max(1, frame.frame - prev)):
            state = kf_predict(state)
        prev = frame.frame
        distance = gate_distance(state, frame.box)
        max_distance = max(max_distance, distance)
        if distance > gate_threshold:
            flagged.append(frame.frame)
        else:
            state = kf_update(state, frame.box)
    return DriftReport(flagged_frames=flagged, max_gate_distance=max_distance)
