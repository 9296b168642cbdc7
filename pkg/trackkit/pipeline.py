"""Construction of noun-chunk-trajectory records.

Noun chunks with their anchor frame groundings and the trajectories tracked from
the first frame grounding are joined on :code:`(video_id, chunk_text)` and passed
through the stages

1. :code:`filter`: abstract, plural and numeral chunks are removed
2. :code:`grounding`: first frame grounding score must be above :code:`tau_g`
3. :code:`tracking`: every tracking score must be above :code:`tau_t`
4. :code:`drift`: no frame may fall outside the Kalman gate
5. :code:`consistency`: IoU of grounding and tracked boxes at the middle and last
   anchor frames must not be lower than :code:`tau_iou`

Each candidate either becomes a :class:`~trackkit.models.TrackletRecord` or
a :class:`~trackkit.models.Rejection` naming the stage. Trajectories without a
chunk are logged as orphans.

"""

from typing import Optional, Iterable, Callable
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
import logging

from common_pyutil.monitor import Timer

from .models import (ChunkCandidate, Trajectory, FilterRules, TrackletRecord, Rejection,
                     Config, Pathlike)
from .filters import (filter_chunk, gate_grounding, gate_tracking, consistency_check,
                      rules_from_config)
from .kalman import drift_check, chi2_gate, DEFAULT_GATE
from .geometry import quantize
from .jsonl_backend import JSONLBackend
from .util import make_header
from .errors import TrackkitError


_timer = Timer()
STAGES = ("filter", "grounding", "join", "tracking", "drift", "consistency")


@dataclass(frozen=True)
class Thresholds:
    tau_g: float = 0.6
    tau_t: float = 0.8
    tau_iou: float = 0.3
    gate_threshold: float = DEFAULT_GATE

    @classmethod
    def from_config(cls, config: Config) -> "Thresholds":
        gate = config.drift.gate_threshold
        if config.drift.gate_quantile is not None:
            gate = chi2_gate(config.drift.gate_quantile)
        return cls(tau_g=config.pipeline.tau_g, tau_t=config.pipeline.tau_t,
                   tau_iou=config.pipeline.tau_iou, gate_threshold=gate)


@dataclass
class BuildResult:
    records: list[TrackletRecord] = field(default_factory=list)
    rejections: list[Rejection] = field(default_factory=list)

    @property
    def orphans(self) -> list[Rejection]:
        return [r for r in self.rejections if r.stage == "orphan"]


class _Rejected(Exception):
    def __init__(self, stage: str, reason: str):
        self.stage = stage
        self.reason = reason


class DatasetBuilder:
    """Filter chunks and trajectories into dataset records.

    Args:
        rules: Chunk filter rules
        thresholds: Gate thresholds
        parallel: Number of videos processed concurrently
        logger_name: Logger name for logging.

    """

    def __init__(self, rules: FilterRules, thresholds: Thresholds = Thresholds(),
                 parallel: int = 1, logger_name: str = "trackkit"):
        self._rules = rules
        self._thresholds = thresholds
        self._parallel = max(1, parallel)
        self._logger = logging.getLogger(logger_name)

    @property
    def logger(self):
        return self._logger

    @property
    def thresholds(self) -> Thresholds:
        return self._thresholds

    @property
    def stages(self) -> dict[str, Callable]:
        """Stages applied to a joined candidate, in order.

        ["filter", "grounding", "tracking", "drift", "consistency"]

        Each takes the candidate and its trajectory and returns provenance
        entries or raises :class:`_Rejected`.

        """
        return {"filter": self._filter,
                "grounding": self._grounding,
                "tracking": self._tracking,
                "drift": self._drift,
                "consistency": self._consistency}

    def _filter(self, c: ChunkCandidate, t: Trajectory) -> dict:
        decision = filter_chunk(c, self._rules)
        if not decision:
            raise _Rejected("filter", decision.reason)
        return {}

    def _grounding(self, c: ChunkCandidate, t: Trajectory) -> dict:
        decision = gate_grounding(c, self._thresholds.tau_g)
        if not decision:
            raise _Rejected("grounding", decision.reason)
        return {"grounding_score": c.groundings["first"].score,
                "grounding_scores": {k: g.score for k, g in sorted(c.groundings.items())}}

    def _tracking(self, c: ChunkCandidate, t: Trajectory) -> dict:
        decision = gate_tracking(t, self._thresholds.tau_t)
        if not decision:
            raise _Rejected("tracking", decision.reason)
        return {"min_track_score": min(t.scores)}

    def _drift(self, c: ChunkCandidate, t: Trajectory) -> dict:
        report = drift_check(t, self._thresholds.gate_threshold)
        if report.drifted:
            raise _Rejected("drift", f"outside gate {self._thresholds.gate_threshold} "
                            f"at frames {report.flagged_frames}")
        return {"drifted": False, "max_gate_distance": report.max_gate_distance}

    def _consistency(self, c: ChunkCandidate, t: Trajectory) -> dict:
        decision, (iou_mid, iou_last) = consistency_check(t, c, self._thresholds.tau_iou)
        if not decision:
            raise _Rejected("consistency", decision.reason)
        return {"iou_mid": iou_mid, "iou_last": iou_last}

    def process_candidate(self, c: ChunkCandidate,
                          t: Optional[Trajectory]) -> TrackletRecord | Rejection:
        """Run all stages on one candidate.

        The chunk level stages run before the join so that a chunk which would be
        filtered anyway isn't reported as missing its trajectory.

        """
        provenance: dict = {}
        stage = ""
        try:
            for stage, func in self.stages.items():
                if stage == "tracking" and t is None:
                    raise _Rejected("join", "no trajectory for chunk")
                provenance.update(func(c, t))
        except _Rejected as r:
            return Rejection(c.video_id, c.chunk_text, r.stage, r.reason)
        except TrackkitError as e:
            return Rejection(c.video_id, c.chunk_text, stage,
                             f"{type(e).__name__}: {e}")
        assert t is not None
        return TrackletRecord(video_id=c.video_id,
                              expression=c.chunk_text,
                              trajectory=[(f.frame, quantize(f.box)) for f in t.frames],
                              provenance=provenance)

    def process_video(self, video_id: str, chunks: list[ChunkCandidate],
                      trajectories: list[Trajectory]) -> list[TrackletRecord | Rejection]:
        """Join and process all candidates of one video, sequentially"""
        results: list[TrackletRecord | Rejection] = []
        by_key: dict[str, Trajectory] = {}
        for t in trajectories:
            if t.chunk_text in by_key:
                results.append(Rejection(video_id, t.chunk_text, "orphan", "duplicate trajectory"))
            else:
                by_key[t.chunk_text] = t
        seen: set[str] = set()
        for c in chunks:
            if c.chunk_text in seen:
                results.append(Rejection(video_id, c.chunk_text, "join", "duplicate chunk"))
                continue
            seen.add(c.chunk_text)
            results.append(self.process_candidate(c, by_key.get(c.chunk_text)))
        for chunk_text in by_key:
            if chunk_text not in seen:
                results.append(Rejection(video_id, chunk_text, "orphan", "no matching chunk"))
        return results

    def build(self, chunks: Iterable[ChunkCandidate],
              trajectories: Iterable[Trajectory]) -> BuildResult:
        """Parallel map over videos followed by an ordered merge.

        Records are sorted by :code:`(video_id, expression)` and rejections by
        :code:`(video_id, chunk_text, stage)` so that the output only depends on the
        inputs.

        """
        video_chunks: dict[str, list[ChunkCandidate]] = defaultdict(list)
        video_tracks: dict[str, list[Trajectory]] = defaultdict(list)
        for c in chunks:
            video_chunks[c.video_id].append(c)
        for t in trajectories:
            video_tracks[t.video_id].append(t)
        video_ids = sorted(set(video_chunks) | set(video_tracks))
        self.logger.debug(f"Processing {len(video_ids)} videos with {self._parallel} workers")

        def work(video_id):
            return self.process_video(video_id, video_chunks.get(video_id, []),
                                      video_tracks.get(video_id, []))

        with _timer:
            if self._parallel > 1:
                with ThreadPoolExecutor(max_workers=self._parallel) as pool:
                    per_video = list(pool.map(work, video_ids))
            else:
                per_video = [work(v) for v in video_ids]
        self.logger.debug(f"Processed {len(video_ids)} videos in {_timer.time} seconds")
        result = BuildResult()
        for items in per_video:
            for item in items:
                if isinstance(item, TrackletRecord):
                    result.records.append(item)
                else:
                    result.rejections.append(item)
        result.records.sort(key=lambda r: (r.video_id, r.expression))
        result.rejections.sort(key=_rejection_key)
        self.logger.info(f"{len(result.records)} records, {len(result.rejections)} rejections")
        return result


def _rejection_key(r: Rejection):
    stage = STAGES.index(r.stage) if r.stage in STAGES else len(STAGES)
    return (r.video_id or "", r.chunk_text or "", stage, r.stage, r.reason)


def build_records(chunks: Iterable[ChunkCandidate], trajectories: Iterable[Trajectory],
                  rules: FilterRules, thresholds: Thresholds = Thresholds(),
                  parallel: int = 1, logger_name: str = "trackkit") -> BuildResult:
    """Functional interface to :meth:`DatasetBuilder.build`"""
    return DatasetBuilder(rules, thresholds, parallel, logger_name).build(chunks, trajectories)


def build_dataset(chunks_file: Pathlike, tracks_file: Pathlike, out_file: Pathlike,
                  reject_log: Pathlike, config: Config,
                  logger_name: str = "trackkit") -> BuildResult:
    """Read the inputs, build the records and write records and rejection log.

    Malformed input lines are logged to the rejection log with stage
    :code:`malformed` unless :code:`config.pipeline.strict` in which case
    :class:`~trackkit.errors.MalformedLine` is raised.

    """
    backend = JSONLBackend(strict=config.pipeline.strict, logger_name=logger_name)
    thresholds = Thresholds.from_config(config)
    builder = DatasetBuilder(rules_from_config(config.pipeline), thresholds,
                             config.pipeline.parallel, logger_name)
    chunks = list(backend.read_chunks(chunks_file))
    trajectories = list(backend.read_trajectories(tracks_file))
    result = builder.build(chunks, trajectories)
    result.rejections.extend(Rejection(None, None, "malformed", str(e))
                             for e in backend.malformed)
    header = make_header("build-dataset", config,
                         {"thresholds": asdict(thresholds),
                          "stage_order": [s for s in STAGES if s != "join"]})
    backend.write_records(out_file, result.records, header)
    backend.write_rejections(reject_log, result.rejections, header)
    return result
