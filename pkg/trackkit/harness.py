"""Inference orchestration for an external tracking model.

Videos longer than :code:`max_unsplit` frames are split into clips of
:code:`clip_len` frames where consecutive clips share one frame. The first clip
is initialized with the given box (SOT) or only with the expression (RSOT) and
every later clip with the box predicted for the last frame of the previous
clip. On the shared frame the later clip's prediction is kept.

"""

from typing import Optional, Iterable
import random
import asyncio
import logging

import numpy as np
from common_pyutil.monitor import Timer

from .models import (ClipSchedule, VideoMeta, TrackRequest, TrackResponse, Trajectory, Frame,
                     QuantBox, HarnessConfig, Config, Pathlike)
from .geometry import parse_coords, serialize, dequantize
from .client import TrackingClient, ClientFactory, client_factory
from .prompts import PromptBank, load_prompts
from .jsonl_backend import JSONLBackend, trajectory_to_dict
from .util import make_header
from .errors import TooShort, ClientError, TrackkitError


_timer = Timer()
MODES = ("sot", "rsot")
OVERLAP_POLICY = "later_clip_wins"


def schedule_clips(frame_count: int, clip_len: int = 8, max_unsplit: int = 32) -> ClipSchedule:
    """Split :code:`range(frame_count)` into clips overlapping by one frame.

    Each clip starts on the last frame of the previous one, so the stride is
    :code:`clip_len - 1` and the last clip has at least 2 frames.

    Args:
        frame_count: Number of frames in the video
        clip_len: Maximum frames per clip
        max_unsplit: Videos with at most this many frames are a single clip

    """
    if frame_count < 2:
        raise TooShort(f"Need at least 2 frames to schedule, got {frame_count}")
    if clip_len < 2:
        raise TrackkitError(f"Clip length must be at least 2, got {clip_len}")
    if frame_count <= max_unsplit:
        return ClipSchedule(((0, frame_count),))
    clips = []
    start = 0
    while True:
        end = min(start + clip_len, frame_count)
        clips.append((start, end))
        if end == frame_count:
            break
        start = end - 1
    return ClipSchedule(tuple(clips))


def uniform_sample(frame_count: int, n: int = 16) -> list[int]:
    """Indices :code:`floor((i + 0.5) * frame_count / n)` for :code:`i < n`

    Duplicates (when :code:`frame_count < n`) are removed.

    """
    if frame_count < 1:
        raise TooShort("Can't sample from an empty video")
    if n < 1:
        raise TrackkitError(f"Number of samples must be positive, got {n}")
    indices = ((2 * i + 1) * frame_count // (2 * n) for i in range(n))
    return list(dict.fromkeys(indices))


def training_sample(frame_count: int, rng: np.random.Generator, min_frames: int = 2,
                    max_frames: int = 8, max_interval: int = 60) -> list[int]:
    """Evenly spaced frames at a random count, interval and start.

    The count is drawn from :code:`min_frames..max_frames` and the interval from
    :code:`1..max_interval`. When they don't fit in the video the count is capped
    at :code:`frame_count` and the interval reduced to the largest that fits.

    """
    if frame_count < 2:
        raise TooShort(f"Need at least 2 frames to sample, got {frame_count}")
    if min_frames < 2 or max_frames < min_frames:
        raise TrackkitError(f"Bad frame count range {min_frames}..{max_frames}, "
                            "need 2 <= min <= max")
    if max_interval < 1:
        raise TrackkitError(f"Interval must be positive, got {max_interval}")
    count = int(rng.integers(min_frames, max_frames + 1))
    interval = int(rng.integers(1, max_interval + 1))
    count = min(count, frame_count)
    interval = min(interval, (frame_count - 1) // (count - 1))
    start = int(rng.integers(0, frame_count - (count - 1) * interval))
    return list(range(start, start + count * interval, interval))


class TrackingHarness:
    """Track videos clip by clip with a :class:`~trackkit.client.TrackingClient`

    Args:
        config: The :code:`harness` section of the config
        prompts: Question templates for the requests
        seed: Seed for choosing templates
        logger_name: Logger name for logging.

    """

    def __init__(self, config: HarnessConfig, prompts: Optional[PromptBank] = None,
                 seed: int = 0, logger_name: str = "trackkit"):
        self._config = config
        self._prompts = prompts or PromptBank()
        self._seed = seed
        self._logger = logging.getLogger(logger_name)

    @property
    def logger(self):
        return self._logger

    def schedule(self, frame_count: int) -> ClipSchedule:
        return schedule_clips(frame_count, self._config.clip_len, self._config.max_unsplit)

    async def _request(self, client: TrackingClient, req: TrackRequest) -> TrackResponse:
        retries = self._config.retries
        for attempt in range(retries + 1):
            try:
                resp = await client.request(req)
                if len(resp.per_frame) != len(req.frames):
                    raise ClientError(f"Got {len(resp.per_frame)} answers for "
                                      f"{len(req.frames)} frames in {req.id}")
                return resp
            except ClientError as e:
                if attempt == retries:
                    raise
                wait_time = random.uniform(0, self._config.retry_wait)
                self.logger.debug(f"{e}. Retry {attempt + 1} of {retries} in {wait_time:.2f}s")
                await asyncio.sleep(wait_time)
        raise ClientError(f"No response for {req.id}")

    def _parse_clip(self, video_id: str, start: int, per_frame: list[str],
                    previous: Optional[QuantBox]) -> list[QuantBox]:
        boxes: list[Optional[QuantBox]] = []
        for j, text in enumerate(per_frame):
            found = parse_coords(text)
            if found:
                previous = found[0]
            elif self._config.strict:
                raise ClientError(f"No box in answer for frame {start + j} of {video_id}: "
                                  f"{text!r:.80}")
            else:
                self.logger.warning(f"No box in answer for frame {start + j} of {video_id}, "
                                    "repeating the previous box")
            boxes.append(previous)
        known = [b for b in boxes if b is not None]
        if not known:
            raise ClientError(f"No box in any answer of clip at {start} of {video_id}")
        # Leading frames of the first RSOT clip have nothing before them
        first = known[0]
        return [b if b is not None else first for b in boxes]

    def _check_video(self, video: VideoMeta, mode: str) -> Optional[QuantBox]:
        if mode not in MODES:
            raise TrackkitError(f"Unknown tracking mode {mode}")
        if mode == "sot":
            boxes = parse_coords(video.init or "")
            if len(boxes) != 1:
                raise TrackkitError(f"SOT video {video.video_id} needs one init box, "
                                    f"got {video.init!r}")
            return boxes[0]
        if not video.expression:
            raise TrackkitError(f"RSOT video {video.video_id} needs an expression")
        return None

    async def run_tracking(self, video: VideoMeta, client: TrackingClient, mode: str = "sot",
                           schedule: Optional[ClipSchedule] = None,
                           rng: Optional[np.random.Generator] = None) -> Trajectory:
        """Track one video and return the stitched trajectory.

        Clips are sent one after another since each is initialized from the
        previous one.

        Args:
            video: The video with its init box (SOT) or expression (RSOT)
            client: An open client
            mode: One of "sot" or "rsot"
            schedule: Clip schedule, computed from the config if not given
            rng: Generator for choosing question templates

        """
        handoff = self._check_video(video, mode)
        schedule = schedule or self.schedule(len(video.frames))
        stitched: dict[int, QuantBox] = {}
        for n, (start, end) in enumerate(schedule):
            frames = list(video.frames[start:end])
            if handoff is None:
                task, req_mode, init = "rsot", "expr", str(video.expression)
            else:
                task, req_mode, init = "sot", "box", serialize(handoff)
            req = TrackRequest(id=f"{video.video_id}:{n}",
                               video_id=video.video_id,
                               frames=frames,
                               mode=req_mode,
                               init=init,
                               prompt_template=self._prompts.render(task, init, len(frames), rng),
                               expression=video.expression if mode == "rsot" else None)
            resp = await self._request(client, req)
            boxes = self._parse_clip(video.video_id, start, resp.per_frame, handoff)
            for j, q in enumerate(boxes):
                stitched[start + j] = q
            handoff = boxes[-1]
        self.logger.debug(f"Tracked {video.video_id} in {len(schedule)} clips")
        return Trajectory(video.video_id, video.expression or "",
                          [Frame(i, dequantize(stitched[i])) for i in sorted(stitched)])

    async def _connect(self, factory: ClientFactory, video_id: str) -> TrackingClient:
        retries = self._config.retries
        for attempt in range(retries + 1):
            try:
                return await factory()
            except (OSError, ClientError) as e:
                if attempt == retries:
                    raise ClientError(f"Could not open a client for {video_id}: "
                                      f"{type(e).__name__} {e}")
                wait_time = random.uniform(0, self._config.retry_wait)
                self.logger.debug(f"Connect failed: {e}. Retry {attempt + 1} of {retries} "
                                  f"in {wait_time:.2f}s")
                await asyncio.sleep(wait_time)
        raise ClientError(f"Could not open a client for {video_id}")

    async def track_videos(self, videos: Iterable[VideoMeta], factory: ClientFactory,
                           mode: str = "sot") -> list[Trajectory]:
        """Track videos concurrently, each with its own client.

        At most :code:`parallel` clients are open at a time. Opening a client is
        retried like a request.

        """
        semaphore = asyncio.Semaphore(max(1, self._config.parallel))

        async def track_one(i: int, video: VideoMeta) -> Trajectory:
            async with semaphore:
                client = await self._connect(factory, video.video_id)
                try:
                    return await self.run_tracking(video, client, mode,
                                                   rng=np.random.default_rng([self._seed, i]))
                finally:
                    await client.close()

        tasks = [track_one(i, v) for i, v in enumerate(videos)]
        return list(await asyncio.gather(*tasks))


def track(videos_file: Pathlike, endpoint: str, out_file: Pathlike, mode: str,
          config: Config, logger_name: str = "trackkit") -> list[Trajectory]:
    """Track every video of :code:`videos_file` and write the trajectories.

    Each line of :code:`videos_file` holds :code:`video_id`, :code:`frames` (a list
    of frame references) and :code:`init` (SOT) or :code:`expression` (RSOT).

    """
    logger = logging.getLogger(logger_name)
    backend = JSONLBackend(strict=config.harness.strict, logger_name=logger_name)
    videos = list(backend.read_videos(videos_file))
    harness = TrackingHarness(config.harness, load_prompts(config.prompts), config.seed,
                              logger_name)
    factory = client_factory(endpoint, config.harness.client_timeout, logger_name)
    with _timer:
        trajectories = asyncio.run(harness.track_videos(videos, factory, mode))
    logger.info(f"Tracked {len(trajectories)} videos in {_timer.time} seconds")
    header = make_header("track", config, {"mode": mode, "endpoint": endpoint,
                                           "overlap_policy": OVERLAP_POLICY})
    backend.write_jsonl(out_file, (trajectory_to_dict(t) for t in trajectories), header)
    return trajectories
