from typing import Optional, Iterator, Iterable, Any
from pathlib import Path
import json
import logging

from common_pyutil.monitor import Timer

from .models import (Pathlike, Box, Frame, Trajectory, Grounding, ChunkCandidate,
                     TrackletRecord, Rejection, VideoMeta, ANCHORS)
from .geometry import check_box, serialize, parse_box_text, box_text
from .util import dumps_json, is_header
from .errors import MalformedLine


_timer = Timer()


class JSONLBackend:
    """Reader and writer for the JSON Lines files of the toolkit.

    Every file holds one object per line, UTF-8 and :code:`\\n` terminated.
    Output files begin with a header object (see :func:`trackkit.util.make_header`)
    which readers skip.

    Args:
        strict: Raise :class:`MalformedLine` on the first bad line instead of
            logging and skipping it
        logger_name: Logger name for logging.

    """

    def __init__(self, strict: bool = False, logger_name: str = "trackkit"):
        self._strict = strict
        self._logger = logging.getLogger(logger_name)
        self._malformed: list[MalformedLine] = []

    @property
    def logger(self):
        return self._logger

    @property
    def malformed(self) -> list[MalformedLine]:
        """Bad lines seen so far when not :code:`strict`"""
        return self._malformed

    def _bad_line(self, error: MalformedLine):
        if self._strict:
            raise error
        self.logger.warning(f"Skipping malformed line {error}")
        self._malformed.append(error)

    def read_jsonl(self, path: Pathlike) -> Iterator[tuple[int, Any]]:
        """Yield :code:`(line_number, object)` for each line of :code:`path`

        Blank lines and header lines are skipped. Lines which are not UTF-8,
        not JSON or not a JSON object are malformed.

        """
        path = Path(path)
        with open(path, "rb") as f:
            for i, raw in enumerate(f, start=1):
                try:
                    line = raw.decode("utf-8")
                except UnicodeDecodeError as e:
                    self._bad_line(MalformedLine(path, i, f"invalid UTF-8: {e}"))
                    continue
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.decoder.JSONDecodeError as e:
                    self._bad_line(MalformedLine(path, i, f"invalid JSON: {e}"))
                    continue
                if not isinstance(obj, dict):
                    self._bad_line(MalformedLine(path, i, f"expected an object, got "
                                                 f"{type(obj).__name__}"))
                    continue
                if is_header(obj):
                    continue
                yield i, obj

    def _parse_lines(self, path: Pathlike, parser) -> Iterator:
        for i, obj in self.read_jsonl(path):
            try:
                yield parser(obj)
            except (KeyError, TypeError, ValueError, AttributeError) as e:
                self._bad_line(MalformedLine(path, i, f"{type(e).__name__}: {e}"))

    def read_chunks(self, path: Pathlike) -> Iterator[ChunkCandidate]:
        return self._parse_lines(path, chunk_from_dict)

    def read_trajectories(self, path: Pathlike) -> Iterator[Trajectory]:
        return self._parse_lines(path, trajectory_from_dict)

    def read_tracklets(self, path: Pathlike) -> Iterator[dict]:
        """Records written by :meth:`write_records` or by the tracking harness"""
        return self._parse_lines(path, tracklet_from_dict)

    def read_videos(self, path: Pathlike) -> Iterator[VideoMeta]:
        return self._parse_lines(path, video_from_dict)

    def read_reg_references(self, path: Pathlike) -> Iterator[tuple[str, str]]:
        """Expression generation ground truth as :code:`(video_id, text)`"""
        return self._parse_lines(path, reg_reference_from_dict)

    def read_reg_predictions(self, path: Pathlike) -> Iterator[tuple[str, str]]:
        return self._parse_lines(path, reg_prediction_from_dict)

    def write_jsonl(self, path: Pathlike, objects: Iterable[Any],
                    header: Optional[dict] = None) -> int:
        """Write :code:`objects` one per line, preceded by :code:`header` if given.

        Returns:
            The number of objects written (not counting the header)

        """
        count = 0
        with _timer:
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                if header is not None:
                    f.write(dumps_json(header))
                    f.write("\n")
                for obj in objects:
                    f.write(dumps_json(obj))
                    f.write("\n")
                    count += 1
        self.logger.debug(f"Wrote {count} lines to {path} in {_timer.time} seconds")
        return count

    def write_records(self, path: Pathlike, records: Iterable[TrackletRecord],
                      header: Optional[dict] = None) -> int:
        return self.write_jsonl(path, (record_to_dict(r) for r in records), header)

    def write_rejections(self, path: Pathlike, rejections: Iterable[Rejection],
                         header: Optional[dict] = None) -> int:
        return self.write_jsonl(path, (rejection_to_dict(r) for r in rejections), header)


def _box(values) -> Box:
    if len(values) != 4:
        raise ValueError(f"Box must have 4 values, got {values}")
    return check_box(Box.from_list(values))


def _score(value) -> float:
    score = float(value)
    if not 0 <= score <= 1:
        raise ValueError(f"Score {score} not in [0, 1]")
    return score


def chunk_from_dict(obj: dict) -> ChunkCandidate:
    groundings = {}
    for anchor, g in (obj.get("groundings") or {}).items():
        if anchor not in ANCHORS:
            raise ValueError(f"Unknown anchor {anchor}")
        groundings[anchor] = Grounding(frame=int(g["frame"]), box=_box(g["box"]),
                                       score=_score(g["score"]))
    present = [groundings[a].frame for a in ANCHORS if a in groundings]
    if any(b <= a for a, b in zip(present, present[1:])):
        raise ValueError(f"Anchor frames not increasing: {present}")
    return ChunkCandidate(video_id=str(obj["video_id"]),
                          caption=str(obj.get("caption", "")),
                          chunk_text=str(obj["chunk_text"]),
                          head_lemma=str(obj.get("head_lemma", "")),
                          token_tags=[(str(t["text"]), str(t["tag"]))
                                      for t in obj.get("tokens") or []],
                          groundings=groundings)


def frames_from_list(frames: list[dict]) -> list[Frame]:
    result = [Frame(frame=int(f["frame"]), box=_box(f["box"]), score=_score(f.get("score", 1.0)))
              for f in frames]
    indices = [f.frame for f in result]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError("Frame indices not strictly increasing")
    return result


def trajectory_from_dict(obj: dict) -> Trajectory:
    return Trajectory(video_id=str(obj["video_id"]),
                      chunk_text=str(obj["chunk_text"]),
                      frames=frames_from_list(obj["frames"]))


def tracklet_from_dict(obj: dict) -> dict:
    """Decode a tracking file line with text boxes.

    Returns:
        A dict with :code:`video_id`, :code:`expression`, :code:`trajectory`
        (a :class:`Trajectory` of dequantized boxes) and optional :code:`width`
        and :code:`height` of the frames.

    """
    frames = []
    for f in obj["trajectory"]:
        frames.append(Frame(frame=int(f["frame"]), box=parse_box_text(str(f["box"]))))
    indices = [f.frame for f in frames]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError("Frame indices not strictly increasing")
    expression = obj.get("expression") or ""
    return {"video_id": str(obj["video_id"]),
            "expression": expression,
            "trajectory": Trajectory(str(obj["video_id"]), expression, frames),
            "width": obj.get("width"),
            "height": obj.get("height")}


def video_from_dict(obj: dict) -> VideoMeta:
    frames = obj["frames"]
    if not isinstance(frames, list):
        raise TypeError("frames must be a list of frame references")
    init = obj.get("init")
    expression = obj.get("expression")
    return VideoMeta(video_id=str(obj["video_id"]),
                     frames=tuple(str(x) for x in frames),
                     init=None if init is None else str(init),
                     expression=None if expression is None else str(expression))


def reg_reference_from_dict(obj: dict) -> tuple[str, str]:
    frame = int(obj["frame"])
    if frame < 0:
        raise ValueError(f"Bad frame index {frame}")
    parse_box_text(str(obj["box"]))
    return str(obj["video_id"]), str(obj["text"])


def reg_prediction_from_dict(obj: dict) -> tuple[str, str]:
    return str(obj["video_id"]), str(obj["text"])


def record_to_dict(r: TrackletRecord) -> dict:
    return {"video_id": r.video_id,
            "expression": r.expression,
            "trajectory": [{"frame": frame, "box": serialize(q)} for frame, q in r.trajectory],
            "provenance": r.provenance}


def rejection_to_dict(r: Rejection) -> dict:
    return {"video_id": r.video_id, "chunk_text": r.chunk_text,
            "stage": r.stage, "reason": r.reason}


def trajectory_to_dict(t: Trajectory, **extra) -> dict:
    """Tracking file line with quantized text boxes"""
    obj = {"video_id": t.video_id,
           "trajectory": [{"frame": f.frame, "box": box_text(f.box)} for f in t.frames]}
    if t.chunk_text:
        obj["expression"] = t.chunk_text
    obj.update(extra)
    return obj

