"""Turn dataset records into samples of the three tasks.

- :code:`sot`: the box in the first chosen frame is given, the rest are targets
- :code:`rsot`: only the expression is given, all chosen boxes are targets
- :code:`reg`: a box in one frame is given, the expression is the target

"""

from typing import Optional, Iterable
import logging

import numpy as np

from .models import Trajectory, Config, Pathlike
from .geometry import box_text
from .harness import training_sample, uniform_sample
from .prompts import PromptBank, load_prompts
from .jsonl_backend import JSONLBackend
from .util import make_header, round_floats
from .errors import TooShort, TrackkitError


SAMPLINGS = ("train", "uniform")
TASKS = ("sot", "rsot", "reg")


def _targets(t: Trajectory, positions: list[int]) -> list[dict]:
    return [{"frame": t.frames[i].frame, "box": box_text(t.frames[i].box)} for i in positions]


def sample_positions(n_frames: int, rng: np.random.Generator, sampling: str = "train",
                     config: Optional[Config] = None) -> list[int]:
    if sampling not in SAMPLINGS:
        raise TrackkitError(f"Unknown sampling {sampling}")
    h = config.harness if config is not None else None
    if sampling == "uniform":
        return uniform_sample(n_frames, h.uniform_frames if h else 16)
    if h is None:
        return training_sample(n_frames, rng)
    return training_sample(n_frames, rng, h.min_train_frames, h.max_train_frames,
                           h.max_interval)


def make_sample(t: Trajectory, task: str, rng: np.random.Generator, sampling: str = "train",
                prompts: Optional[PromptBank] = None,
                config: Optional[Config] = None) -> dict:
    """One sample of :code:`task` from trajectory :code:`t`

    Frames are chosen among the annotated frames of :code:`t`.

    """
    if task not in TASKS:
        raise TrackkitError(f"Unknown task {task}")
    prompts = prompts or PromptBank()
    positions = sample_positions(len(t), rng, sampling, config)
    frames = [t.frames[i].frame for i in positions]
    sample = {"video_id": t.video_id, "task": task, "frames": frames}
    if task == "sot":
        if len(positions) < 2:
            raise TooShort(f"SOT sample of {t.video_id} needs 2 frames")
        init = box_text(t.frames[positions[0]].box)
        sample.update({"init": init, "targets": _targets(t, positions[1:]),
                       "prompt": prompts.render("sot", init, len(frames), rng)})
    elif task == "rsot":
        sample.update({"expression": t.chunk_text, "targets": _targets(t, positions),
                       "prompt": prompts.render("rsot", t.chunk_text, len(frames), rng)})
    else:
        position = positions[int(rng.integers(len(positions)))]
        box = box_text(t.frames[position].box)
        sample.update({"frame": t.frames[position].frame, "box": box, "text": t.chunk_text,
                       "prompt": prompts.render("reg", box, len(frames), rng)})
    return sample


def export_samples(trajectories: Iterable[Trajectory], task: str, rng: np.random.Generator,
                   sampling: str = "train", prompts: Optional[PromptBank] = None,
                   config: Optional[Config] = None,
                   logger_name: str = "trackkit") -> list[dict]:
    """Samples of :code:`task`, one per trajectory, in input order.

    Trajectories too short for the task are skipped with a warning.

    """
    logger = logging.getLogger(logger_name)
    samples = []
    for t in trajectories:
        try:
            samples.append(make_sample(t, task, rng, sampling, prompts, config))
        except TooShort as e:
            logger.warning(f"Skipping {t.video_id} {t.chunk_text!r}: {e}")
    return samples


def dataset_stats(trajectories: Iterable[Trajectory], fps: float = 30) -> dict:
    """Size of a dataset.

    Duration is the sum over trajectories of the span from the first to the
    last annotated frame, inclusive.

    """
    if fps <= 0:
        raise TrackkitError(f"fps must be positive, got {fps}")
    count = 0
    frames = 0
    span = 0
    videos = set()
    expressions = set()
    for t in trajectories:
        count += 1
        frames += len(t)
        videos.add(t.video_id)
        expressions.add(t.chunk_text)
        if t.frames:
            span += t.frames[-1].frame - t.frames[0].frame + 1
    return {"trajectories": count,
            "videos": len(videos),
            "expressions": len(expressions),
            "frames": frames,
            "duration_seconds": round_floats(span / fps)}


def _read_trajectories(backend: JSONLBackend, path: Pathlike) -> list[Trajectory]:
    return [x["trajectory"] for x in backend.read_tracklets(path)]


def export_tasks(records_file: Pathlike, task: str, out_file: Pathlike, config: Config,
                 sampling: str = "train", logger_name: str = "trackkit") -> list[dict]:
    backend = JSONLBackend(strict=config.pipeline.strict, logger_name=logger_name)
    trajectories = _read_trajectories(backend, records_file)
    rng = np.random.default_rng(config.seed)
    samples = export_samples(trajectories, task, rng, sampling, load_prompts(config.prompts),
                             config, logger_name)
    header = make_header("export-tasks", config, {"task": task, "sampling": sampling})
    backend.write_jsonl(out_file, samples, header)
    return samples


def stats(records_file: Pathlike, fps: float = 30, logger_name: str = "trackkit") -> dict:
    backend = JSONLBackend(logger_name=logger_name)
    return dataset_stats(_read_trajectories(backend, records_file), fps)
