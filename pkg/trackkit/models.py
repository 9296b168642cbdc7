from typing import Optional, Any
from pathlib import Path
import dataclasses
from dataclasses import dataclass, field


Pathlike = str | Path
Anchor = str  # one of "first", "middle", "last"
ANCHORS = ("first", "middle", "last")


@dataclass(frozen=True)
class Box:
    """A box in normalized image coordinates.

    The coordinates are fractions of frame width and height of the
    top-left :code:`(x1, y1)` and bottom-right :code:`(x2, y2)` corners.
    Validity (:code:`0 <= x1 <= x2 <= 1` and the same for :code:`y`) is checked by
    the functions in :mod:`trackkit.geometry`, not on construction.

    """
    x1: float
    y1: float
    x2: float
    y2: float

    @classmethod
    def from_list(cls, values) -> "Box":
        x1, y1, x2, y2 = (float(v) for v in values)
        return cls(x1, y1, x2, y2)

    def to_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2


@dataclass(frozen=True)
class QuantBox:
    """A box quantized to integers in :code:`[0, 100)`.

    This is the form in which boxes are written as text, e.g. :code:`[23,45,46,72]`

    """
    a: int
    b: int
    c: int
    d: int

    def to_list(self) -> list[int]:
        return [self.a, self.b, self.c, self.d]


@dataclass(frozen=True)
class Frame:
    frame: int
    box: Box
    score: float = 1.0


@dataclass
class Trajectory:
    """Ordered per-frame boxes of one object in one video.

    Args:
        video_id: Video identifier
        chunk_text: The noun chunk (or expression) the trajectory belongs to
        frames: :class:`Frame` entries with strictly increasing frame indices

    """
    video_id: str
    chunk_text: str
    frames: list[Frame] = field(default_factory=list)

    def __len__(self):
        return len(self.frames)

    @property
    def frame_indices(self) -> list[int]:
        return [f.frame for f in self.frames]

    @property
    def boxes(self) -> list[Box]:
        return [f.box for f in self.frames]

    @property
    def scores(self) -> list[float]:
        return [f.score for f in self.frames]

    def box_at(self, frame: int) -> Optional[Box]:
        for f in self.frames:
            if f.frame == frame:
                return f.box
        return None


@dataclass(frozen=True)
class Grounding:
    frame: int
    box: Box
    score: float


@dataclass
class ChunkCandidate:
    """A noun chunk parsed from a video caption with its anchor frame groundings.

    :code:`groundings` maps an anchor role (one of :data:`ANCHORS`) to the
    grounding box predicted in that frame.

    """
    video_id: str
    caption: str
    chunk_text: str
    head_lemma: str
    token_tags: list[tuple[str, str]]
    groundings: dict[Anchor, Grounding] = field(default_factory=dict)


@dataclass
class FilterRules:
    """Rules for rejecting noun chunks.

    Args:
        stoplist: Lemmas of abstract ("virtual") nouns
        plural_tags: Part of speech tags that mark plural nouns
        collective: Lemmas of collective nouns which are treated as plural
        reject_numerals: Reject chunks that contain a cardinal numeral greater than one
        numeral_tags: Part of speech tags of cardinal numerals

    """
    stoplist: frozenset[str]
    plural_tags: frozenset[str] = frozenset({"NNS", "NNPS"})
    collective: frozenset[str] = frozenset()
    reject_numerals: bool = True
    numeral_tags: frozenset[str] = frozenset({"CD"})


@dataclass(frozen=True)
class Decision:
    keep: bool
    reason: str = ""

    def __bool__(self):
        return self.keep


@dataclass(frozen=True)
class Rejection:
    """An entry of the rejection log.

    Similar to an error record, a rejection isn't raised but carried as data.

    """
    video_id: Optional[str]
    chunk_text: Optional[str]
    stage: str
    reason: str


@dataclass(frozen=True)
class DriftReport:
    flagged_frames: list[int]
    max_gate_distance: float

    @property
    def drifted(self) -> bool:
        return bool(self.flagged_frames)


@dataclass
class TrackletRecord:
    video_id: str
    expression: str
    trajectory: list[tuple[int, QuantBox]]
    provenance: dict[str, Any]


@dataclass(frozen=True)
class EvalCurve:
    """Threshold swept curve and its area under curve (the mean of values)."""
    thresholds: tuple[float, ...]
    values: tuple[float, ...]
    auc: float

    def at(self, threshold: float) -> float:
        for t, v in zip(self.thresholds, self.values):
            if abs(t - threshold) < 1e-9:
                return v
        raise KeyError(f"Threshold {threshold} not on curve")


@dataclass(frozen=True)
class RegScore:
    meteor: float
    cider: float


@dataclass(frozen=True)
class ClipSchedule:
    """Half open frame ranges :code:`[start, end)` covering a video."""
    clips: tuple[tuple[int, int], ...]

    def __len__(self):
        return len(self.clips)

    def __iter__(self):
        return iter(self.clips)


@dataclass(frozen=True)
class VideoMeta:
    """A video to be tracked.

    Args:
        video_id: Video identifier
        frames: Opaque frame references (paths), one per frame
        init: Initial box text for SOT
        expression: Referring expression for RSOT

    """
    video_id: str
    frames: tuple[str, ...]
    init: Optional[str] = None
    expression: Optional[str] = None


@dataclass
class TrackRequest:
    id: str
    video_id: str
    frames: list[str]
    mode: str
    init: str
    prompt_template: str
    expression: Optional[str] = None


@dataclass
class TrackResponse:
    id: str
    per_frame: list[str]


class _Section:
    """Item access for configuration sections as in :code:`config["harness"]["retries"]`"""

    def __setitem__(self, k, v):
        if k not in {x.name for x in dataclasses.fields(self)}:  # type: ignore
            raise KeyError(f"Unknown option {k}")
        setattr(self, k, v)

    def __getitem__(self, k):
        return getattr(self, k)

    def __iter__(self):
        return iter(x.name for x in dataclasses.fields(self))  # type: ignore


@dataclass
class PipelineConfig(_Section):
    tau_g: float = 0.6
    tau_t: float = 0.8
    tau_iou: float = 0.3
    strict: bool = False
    stoplist: Optional[str] = None
    plural_tags: list[str] = field(default_factory=lambda: ["NNS", "NNPS"])
    collective: list[str] = field(default_factory=list)
    reject_numerals: bool = True
    parallel: int = 4


@dataclass
class DriftConfig(_Section):
    gate_threshold: float = 18.47
    gate_quantile: Optional[float] = None


@dataclass
class MetricsConfig(_Section):
    success_step: float = 0.05
    precision_max_px: int = 50
    precision_px: float = 20.0
    norm_precision_threshold: float = 0.2
    frame_size: list[int] = field(default_factory=lambda: [640, 360])


@dataclass
class HarnessConfig(_Section):
    clip_len: int = 8
    max_unsplit: int = 32
    uniform_frames: int = 16
    min_train_frames: int = 2
    max_train_frames: int = 8
    max_interval: int = 60
    retries: int = 3
    retry_wait: float = 1.0
    client_timeout: int = 30
    parallel: int = 4
    strict: bool = False


@dataclass
class SelectorConfig(_Section):
    hidden_ratio: int = 4
    weighting: str = "score"
    proj_act: str = "gelu"
    check_samples: int = 16


@dataclass
class Config:
    """The configuration dataclass

    Each section corresponds to a part of the toolkit:

    - pipeline: Gates and filter rules of dataset construction
    - drift: Kalman gate used to reject drifting trajectories
    - metrics: Threshold grids of the evaluation metrics
    - harness: Clip scheduling, frame sampling and the tracking client
    - tselector: Shapes and modes of the token selector reference

    A default config is generated with :func:`trackkit.config.default_config` and
    can be updated from a YAML file with :func:`trackkit.config.load_config`.

    Args:
        pipeline: PipelineConfig
        drift: DriftConfig
        metrics: MetricsConfig
        harness: HarnessConfig
        tselector: SelectorConfig
        seed: Seed for everything random
        prompts: Optional path to a YAML prompt bank


    """
    pipeline: PipelineConfig
    drift: DriftConfig
    metrics: MetricsConfig
    harness: HarnessConfig
    tselector: SelectorConfig
    seed: int = 0
    prompts: Optional[str] = None

    _sections = {"pipeline": PipelineConfig,
                 "drift": DriftConfig,
                 "metrics": MetricsConfig,
                 "harness": HarnessConfig,
                 "tselector": SelectorConfig}

    def __setattr__(self, k, v):
        if k in self._sections and isinstance(v, dict):
            super().__setattr__(k, self._sections[k](**v))
        else:
            super().__setattr__(k, v)

    def __iter__(self):
        return iter(x.name for x in dataclasses.fields(self))

    def __contains__(self, k):
        return k in {x.name for x in dataclasses.fields(self)}

    def __setitem__(self, k, v):
        setattr(self, k, v)

    def __getitem__(self, k):
        return getattr(self, k)
