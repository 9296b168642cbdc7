"""Box arithmetic and the quantized coordinate text format.

Boxes are normalized :class:`~trackkit.models.Box` corners. For all model input
and output they are quantized to integers in :code:`[0, 100)` and written as
:code:`[a,b,c,d]` with no spaces.

"""

import re
import math

from .models import Box, QuantBox
from .errors import InvalidBox, InvalidFrameDims, DegenerateBox, InvalidQuant


QUANT_BINS = 100
# absorbs representation error such as 0.29 * 100 == 28.999999999999996
_QUANT_EPS = 1e-9
_bracket_regexp = re.compile(r"\[([^\[\]]*)\]")
_int_regexp = re.compile(r"\s*(\d+)\s*")


def check_box(b: Box) -> Box:
    """Raise :class:`InvalidBox` unless :code:`0 <= x1 <= x2 <= 1` and :code:`0 <= y1 <= y2 <= 1`"""
    values = b.to_list()
    if not all(math.isfinite(v) for v in values):
        raise InvalidBox(f"Non finite coordinates in {b}")
    if not (0 <= b.x1 <= b.x2 <= 1 and 0 <= b.y1 <= b.y2 <= 1):
        raise InvalidBox(f"Invalid box {b}")
    return b


def check_quant(q: QuantBox) -> QuantBox:
    for v in q.to_list():
        if not isinstance(v, int) or not 0 <= v < QUANT_BINS:
            raise InvalidQuant(f"Quantized value {v} not in [0, {QUANT_BINS})")
    return q


def is_degenerate(b: Box) -> bool:
    return b.width <= 0 or b.height <= 0


def iou(a: Box, b: Box) -> float:
    """Intersection over Union of two boxes.

    Two boxes with zero union area have IoU 0.

    Args:
        a: A box
        b: Another box

    """
    check_box(a)
    check_box(b)
    iw = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    ih = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def _check_dims(frame_w: float, frame_h: float):
    if not (frame_w > 0 and frame_h > 0):
        raise InvalidFrameDims(f"Frame dimensions must be positive, got {frame_w}x{frame_h}")


def center_error(gt: Box, pred: Box, frame_w: float, frame_h: float) -> float:
    """Euclidean distance in pixels between the centers of :code:`gt` and :code:`pred`

    Args:
        gt: Ground truth box
        pred: Predicted box
        frame_w: Frame width in pixels
        frame_h: Frame height in pixels

    """
    _check_dims(frame_w, frame_h)
    (gx, gy), (px, py) = gt.center, pred.center
    return math.hypot((gx - px) * frame_w, (gy - py) * frame_h)


def norm_center_error(gt: Box, pred: Box) -> float:
    """Center distance with each axis normalized by the size of :code:`gt`"""
    if is_degenerate(gt):
        raise DegenerateBox(f"Ground truth box {gt} has zero width or height")
    (gx, gy), (px, py) = gt.center, pred.center
    return math.hypot((gx - px) / gt.width, (gy - py) / gt.height)


def _quantize_value(v: float) -> int:
    return min(QUANT_BINS - 1, int(math.floor(v * QUANT_BINS + _QUANT_EPS)))


def quantize(b: Box) -> QuantBox:
    """Map each coordinate to :code:`floor(v * 100)`, with :code:`1.0` clamped to 99"""
    check_box(b)
    return QuantBox(*(_quantize_value(v) for v in b.to_list()))


def dequantize(q: QuantBox) -> Box:
    """Map a :class:`QuantBox` to the centers of its bins"""
    check_quant(q)
    return Box(*((v + 0.5) / QUANT_BINS for v in q.to_list()))


def serialize(q: QuantBox) -> str:
    return "[" + ",".join(str(v) for v in q.to_list()) + "]"


def parse_coords(text: str) -> list[QuantBox]:
    """Find all bracketed 4-tuples of integers in :code:`[0, 100)` in :code:`text`

    Whitespace around the numbers is allowed. Tuples of wrong arity or with out
    of range values are skipped.

    Args:
        text: Any text, usually the output of a model

    """
    boxes = []
    for match in _bracket_regexp.finditer(text):
        parts = match.group(1).split(",")
        if len(parts) != 4:
            continue
        values = []
        for part in parts:
            m = _int_regexp.fullmatch(part)
            if not m:
                break
            values.append(int(m.group(1)))
        if len(values) == 4 and all(v < QUANT_BINS for v in values):
            boxes.append(QuantBox(*values))
    return boxes


def box_text(b: Box) -> str:
    """Shorthand for :code:`serialize(quantize(b))`"""
    return serialize(quantize(b))


def parse_box_text(text: str) -> Box:
    """Parse exactly one :code:`[a,b,c,d]` and return it dequantized.

    Raises :class:`InvalidQuant` if the text doesn't hold exactly one box.

    """
    boxes = parse_coords(text)
    if len(boxes) != 1:
        raise InvalidQuant(f"Expected exactly one box in {text!r}, found {len(boxes)}")
    return dequantize(boxes[0])
