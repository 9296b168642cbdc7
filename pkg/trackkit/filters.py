"""Predicates that decide whether a noun chunk or a trajectory is kept.

Each function returns a :class:`~trackkit.models.Decision`. They are applied
in order by :mod:`trackkit.pipeline` and the results are AND'ed.

"""

from typing import Optional
import re
from pathlib import Path

from .models import (ChunkCandidate, Trajectory, FilterRules, Decision, Pathlike,
                     PipelineConfig)
from .geometry import iou
from .errors import MissingAnnotation, EmptyTrajectory, MissingAnchorFrame


# Seeded from "time, love, wind"
DEFAULT_STOPLIST = frozenset("""
time love wind air weather sky light darkness shadow sound music noise
life death nature beauty freedom happiness joy peace hope fear anger sadness
idea concept thought dream memory moment day night morning evening afternoon
year month week hour minute second season summer winter spring autumn
space distance speed motion movement energy power strength
background view scene atmosphere color colour texture pattern
business success work fun relaxation vacation holiday travel lifestyle
health technology science education history culture future past
""".split())

_numeral_words = {"zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
                  "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
                  "eleven": 11, "twelve": 12, "dozen": 12, "twenty": 20,
                  "hundred": 100, "thousand": 1000}
_number_regexp = re.compile(r"\d+(?:[.,]\d+)?")


def load_stoplist(path: Pathlike) -> frozenset[str]:
    """One lemma per line, :code:`#` starts a comment."""
    lemmas = set()
    with open(Path(path)) as f:
        for line in f:
            line = line.split("#", 1)[0].strip().lower()
            if line:
                lemmas.add(line)
    return frozenset(lemmas)


def rules_from_config(config: PipelineConfig) -> FilterRules:
    stoplist = load_stoplist(config.stoplist) if config.stoplist else DEFAULT_STOPLIST
    return FilterRules(stoplist=stoplist,
                       plural_tags=frozenset(config.plural_tags),
                       collective=frozenset(x.lower() for x in config.collective),
                       reject_numerals=config.reject_numerals)


def numeral_value(text: str) -> Optional[float]:
    text = text.lower().strip()
    if text in _numeral_words:
        return _numeral_words[text]
    if _number_regexp.fullmatch(text):
        return float(text.replace(",", ""))
    return None


def filter_chunk(c: ChunkCandidate, r: FilterRules) -> Decision:
    """Reject chunks with abstract heads, plural nouns or cardinal numerals > 1.

    The reason of a rejection is the first failing rule, one of
    :code:`"virtual"`, :code:`"plural"` or :code:`"numeral"`.

    """
    if not c.token_tags:
        raise MissingAnnotation(f"No token tags for chunk {c.chunk_text!r} in {c.video_id}")
    head = c.head_lemma.lower()
    if head in r.stoplist:
        return Decision(False, "virtual")
    if head in r.collective or any(tag in r.plural_tags for _, tag in c.token_tags):
        return Decision(False, "plural")
    if r.reject_numerals:
        for token, tag in c.token_tags:
            if tag in r.numeral_tags:
                value = numeral_value(token)
                if value is not None and value > 1:
                    return Decision(False, "numeral")
    return Decision(True)


def gate_grounding(c: ChunkCandidate, tau_g: float = 0.6) -> Decision:
    """Keep if the first frame grounding score is strictly greater than :code:`tau_g`"""
    first = c.groundings.get("first")
    if first is None:
        raise MissingAnnotation(f"No first frame grounding for {c.chunk_text!r} in {c.video_id}")
    if first.score > tau_g:
        return Decision(True)
    return Decision(False, f"grounding score {first.score} <= {tau_g}")


def gate_tracking(t: Trajectory, tau_t: float = 0.8) -> Decision:
    """Keep if every frame's tracking score is strictly greater than :code:`tau_t`"""
    if not t.frames:
        raise EmptyTrajectory(f"Empty trajectory for {t.chunk_text!r} in {t.video_id}")
    for f in t.frames:
        if not f.score > tau_t:
            return Decision(False, f"tracking score {f.score} <= {tau_t} at frame {f.frame}")
    return Decision(True)


def anchor_ious(t: Trajectory, c: ChunkCandidate) -> tuple[float, float]:
    """IoU of grounding and tracked boxes at the middle and last anchor frames"""
    ious = []
    for anchor in ("middle", "last"):
        grounding = c.groundings.get(anchor)
        if grounding is None:
            raise MissingAnnotation(f"No {anchor} frame grounding for {c.chunk_text!r} "
                                    f"in {c.video_id}")
        tracked = t.box_at(grounding.frame)
        if tracked is None:
            raise MissingAnchorFrame(f"Trajectory for {c.chunk_text!r} in {c.video_id} "
                                     f"has no box at {anchor} frame {grounding.frame}")
        ious.append(iou(grounding.box, tracked))
    return ious[0], ious[1]


def consistency_check(t: Trajectory, c: ChunkCandidate,
                      tau_iou: float = 0.3) -> tuple[Decision, tuple[float, float]]:
    """Reject if either anchor IoU is lower than :code:`tau_iou`.

    Returns:
        The decision and :code:`(iou_mid, iou_last)`

    """
    iou_mid, iou_last = anchor_ious(t, c)
    return ious_decision(iou_mid, iou_last, tau_iou), (iou_mid, iou_last)


def ious_decision(iou_mid: float, iou_last: float, tau_iou: float) -> Decision:
    low = [name for name, value in (("middle", iou_mid), ("last", iou_last)) if value < tau_iou]
    if low:
        return Decision(False, f"iou at {' and '.join(low)} frame below {tau_iou}")
    return Decision(True)

