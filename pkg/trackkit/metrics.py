"""One-Pass Evaluation of trackers and the evaluation report.

Tracking is evaluated with the success curve (fraction of frames with IoU
above each overlap threshold, AUC is its mean), the precision curve (fraction
of frames with center error within each pixel threshold, P is its value at
20 px) and normalized precision (center error relative to the ground truth box
size within 0.2). Referring expression generation is evaluated with CIDEr and
a simplified METEOR, see :mod:`trackkit.text_metrics`.

There is no re-initialization: a frame without a prediction has IoU 0 and an
infinite center error.

"""

from typing import Optional, Iterable
from dataclasses import asdict
from collections import defaultdict
import math
import logging

import numpy as np

from .models import Box, Trajectory, EvalCurve, RegScore, Config, Pathlike
from .geometry import iou, center_error, norm_center_error, is_degenerate
from .jsonl_backend import JSONLBackend
from .text_metrics import cider_scores, meteor_lite
from .util import make_header, round_floats
from .errors import FrameMismatch, EmptyTrajectory, DegenerateBox, TrackkitError


TASKS = ("sot", "rsot", "reg")
# Whether frame 0 counts, per task. In SOT its box is given.
FIRST_FRAME_POLICY = {"sot": "excluded", "rsot": "included"}


def success_thresholds(step: float = 0.05) -> np.ndarray:
    return np.linspace(0, 1, int(round(1 / step)) + 1)


def precision_thresholds(max_px: int = 50) -> np.ndarray:
    return np.arange(max_px + 1, dtype=np.float64)


def _aligned(gt: Trajectory, pred: Trajectory,
             allow_missing: bool = False) -> list[tuple[Box, Optional[Box]]]:
    if not gt.frames:
        raise EmptyTrajectory(f"Empty ground truth for {gt.video_id}")
    predicted = {f.frame: f.box for f in pred.frames}
    gt_frames = set(gt.frame_indices)
    extra = set(predicted) - gt_frames
    missing = gt_frames - set(predicted)
    if extra or (missing and not allow_missing):
        raise FrameMismatch(f"Frames of {gt.video_id} don't match: "
                            f"{len(missing)} missing, {len(extra)} extra")
    return [(f.box, predicted.get(f.frame)) for f in gt.frames]


def _skip_first(pairs: list, skip_first: bool) -> list:
    pairs = pairs[1:] if skip_first else pairs
    if not pairs:
        raise EmptyTrajectory("No frames left to evaluate")
    return pairs


def curve(values: np.ndarray, thresholds: np.ndarray, above: bool) -> EvalCurve:
    """Curve of the fraction of :code:`values` strictly above (or at most) each threshold"""
    values = np.asarray(values, dtype=np.float64)
    if above:
        fractions = (values[:, None] > thresholds[None, :]).mean(axis=0)
    else:
        fractions = (values[:, None] <= thresholds[None, :]).mean(axis=0)
    return EvalCurve(thresholds=tuple(float(t) for t in thresholds),
                     values=tuple(float(v) for v in fractions),
                     auc=float(np.mean(fractions)))


def frame_ious(gt: Trajectory, pred: Trajectory, skip_first: bool = False,
               allow_missing: bool = False) -> np.ndarray:
    pairs = _skip_first(_aligned(gt, pred, allow_missing), skip_first)
    return np.array([iou(g, p) if p is not None else 0.0 for g, p in pairs])


def frame_center_errors(gt: Trajectory, pred: Trajectory, frame_w: float, frame_h: float,
                        skip_first: bool = False, allow_missing: bool = False) -> np.ndarray:
    pairs = _skip_first(_aligned(gt, pred, allow_missing), skip_first)
    return np.array([center_error(g, p, frame_w, frame_h) if p is not None else math.inf
                     for g, p in pairs])


def frame_norm_errors(gt: Trajectory, pred: Trajectory, skip_first: bool = False,
                      allow_missing: bool = False) -> np.ndarray:
    pairs = _skip_first(_aligned(gt, pred, allow_missing), skip_first)
    for g, _ in pairs:
        if is_degenerate(g):
            raise DegenerateBox(f"Degenerate ground truth box {g} in {gt.video_id}")
    return np.array([norm_center_error(g, p) if p is not None else math.inf
                     for g, p in pairs])


def success_curve(gt: Trajectory, pred: Trajectory, thresholds: Optional[np.ndarray] = None,
                  skip_first: bool = False, allow_missing: bool = False) -> EvalCurve:
    """Success curve over IoU thresholds :code:`0, 0.05, ..., 1` with strict :code:`>`"""
    thresholds = success_thresholds() if thresholds is None else thresholds
    return curve(frame_ious(gt, pred, skip_first, allow_missing), thresholds, above=True)


def precision_curve(gt: Trajectory, pred: Trajectory, frame_w: float, frame_h: float,
                    thresholds: Optional[np.ndarray] = None, skip_first: bool = False,
                    allow_missing: bool = False) -> EvalCurve:
    """Precision curve over pixel thresholds :code:`0, 1, ..., 50`.

    P is :code:`curve.at(20)`.

    """
    thresholds = precision_thresholds() if thresholds is None else thresholds
    errors = frame_center_errors(gt, pred, frame_w, frame_h, skip_first, allow_missing)
    return curve(errors, thresholds, above=False)


def norm_precision(gt: Trajectory, pred: Trajectory, threshold: float = 0.2,
                   skip_first: bool = False, allow_missing: bool = False) -> float:
    errors = frame_norm_errors(gt, pred, skip_first, allow_missing)
    return float(np.mean(errors <= threshold))


class Evaluator:
    """Evaluate a prediction file against a ground truth file.

    Args:
        config: Resolved config, the :code:`metrics` section gives the threshold grids
        strict: Fail on a missing prediction instead of scoring it zero
        logger_name: Logger name for logging.

    """

    def __init__(self, config: Config, strict: bool = False, logger_name: str = "trackkit"):
        self._config = config
        self._strict = strict
        self._logger = logging.getLogger(logger_name)
        self._backend = JSONLBackend(strict=strict, logger_name=logger_name)

    @property
    def logger(self):
        return self._logger

    def _missing(self, video_id: str):
        if self._strict:
            raise TrackkitError(f"No prediction for video {video_id}")
        self.logger.warning(f"No prediction for video {video_id}, scoring it zero")

    def _extra(self, video_ids: Iterable[str]):
        for video_id in sorted(video_ids):
            self.logger.warning(f"Ignoring prediction for unknown video {video_id}")

    def evaluate_tracking(self, gt_file: Pathlike, pred_file: Pathlike, task: str) -> dict:
        cfg = self._config.metrics
        skip_first = FIRST_FRAME_POLICY[task] == "excluded"
        gt = {x["video_id"]: x for x in self._backend.read_tracklets(gt_file)}
        pred = {x["video_id"]: x for x in self._backend.read_tracklets(pred_file)}
        self._extra(set(pred) - set(gt))
        per_video = {}
        for video_id in sorted(gt):
            g = gt[video_id]
            frame_w = g["width"] or cfg.frame_size[0]
            frame_h = g["height"] or cfg.frame_size[1]
            if video_id in pred:
                p = pred[video_id]["trajectory"]
            else:
                self._missing(video_id)
                p = Trajectory(video_id, g["expression"], [])
            success = success_curve(g["trajectory"], p, success_thresholds(cfg.success_step),
                                    skip_first, allow_missing=True)
            precision = precision_curve(g["trajectory"], p, frame_w, frame_h,
                                        precision_thresholds(cfg.precision_max_px),
                                        skip_first, allow_missing=True)
            per_video[video_id] = {
                "auc": success.auc,
                "precision": precision.at(cfg.precision_px),
                "norm_precision": norm_precision(g["trajectory"], p,
                                                 cfg.norm_precision_threshold,
                                                 skip_first, allow_missing=True)}
        return per_video

    def evaluate_reg(self, gt_file: Pathlike, pred_file: Pathlike) -> dict[str, RegScore]:
        references: dict[str, list[str]] = defaultdict(list)
        for video_id, text in self._backend.read_reg_references(gt_file):
            references[video_id].append(text)
        candidates: dict[str, str] = {}
        for video_id, text in self._backend.read_reg_predictions(pred_file):
            candidates.setdefault(video_id, text)
        self._extra(set(candidates) - set(references))
        video_ids = sorted(references)
        for video_id in video_ids:
            if video_id not in candidates:
                self._missing(video_id)
        texts = [candidates.get(v, "") for v in video_ids]
        ciders = cider_scores(texts, [references[v] for v in video_ids]) if video_ids else []
        return {v: RegScore(meteor=meteor_lite(t, references[v]), cider=c)
                for v, t, c in zip(video_ids, texts, ciders)}

    def evaluate_run(self, gt_file: Pathlike, pred_file: Pathlike, task: str) -> dict:
        """Per video and aggregate metrics.

        The aggregate is the unweighted mean over videos.

        """
        if task not in TASKS:
            raise TrackkitError(f"Unknown task {task}")
        if task == "reg":
            per_video = {v: asdict(s) for v, s in self.evaluate_reg(gt_file, pred_file).items()}
        else:
            per_video = self.evaluate_tracking(gt_file, pred_file, task)
        if not per_video:
            raise TrackkitError(f"No ground truth videos in {gt_file}")
        keys = sorted(next(iter(per_video.values())))
        aggregate = {k: float(np.mean([v[k] for v in per_video.values()])) for k in keys}
        extra = {"task": task}
        if task in FIRST_FRAME_POLICY:
            extra["first_frame"] = FIRST_FRAME_POLICY[task]
        report = make_header("evaluate", self._config, extra)
        report["task"] = task
        report["videos"] = len(per_video)
        report["per_video"] = {v: {k: round_floats(x) for k, x in m.items()}
                               for v, m in per_video.items()}
        report["aggregate"] = {k: round_floats(x) for k, x in aggregate.items()}
        return report


def evaluate_run(gt_file: Pathlike, pred_file: Pathlike, task: str, config: Config,
                 strict: bool = False, logger_name: str = "trackkit") -> dict:
    return Evaluator(config, strict, logger_name).evaluate_run(gt_file, pred_file, task)


_column_names = {"auc": "AUC", "precision": "P", "norm_precision": "P_Norm",
                 "meteor": "METEOR", "cider": "CIDEr"}


def format_table(report: dict) -> str:
    """Aligned plain text table of a report with one row per video and a mean row"""
    keys = sorted(report["aggregate"])
    header = ["video"] + [_column_names.get(k, k) for k in keys]
    rows = [[v] + [f"{m[k]:.4f}" for k in keys] for v, m in report["per_video"].items()]
    rows.append(["mean"] + [f"{report['aggregate'][k]:.4f}" for k in keys])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]

    def fmt(row):
        return "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                         for i, (c, w) in enumerate(zip(row, widths)))

    lines = [f"# task: {report['task']}"]
    if "first_frame" in report["__header__"]:
        lines.append(f"# first frame: {report['__header__']['first_frame']}")
    lines += [fmt(header), fmt(["-" * w for w in widths])]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines) + "\n"
