"""Reference implementation of the token selector.

Given visual token features :math:`F \\in R^{N \\times C}` of one frame, a gate MLP
scores every token, the scores are normalized with a softmax over the :math:`N`
tokens, the :math:`k` highest scoring tokens are kept in their original order
and a projection MLP maps them to the language model width :math:`D`.

With :code:`weighting == "score"` each kept token is multiplied by its score
before projection, which gives the gate a gradient. With :code:`"none"` the
tokens are only selected and the gate gradient is exactly zero.

Everything is float64 numpy. Gradients are computed for a fixed top-k set.

"""

from typing import Optional, Callable
from dataclasses import dataclass, field
from pathlib import Path
import json
import struct
import math

import numpy as np

from .models import Pathlike
from .errors import ShapeError, NonFiniteInput, InvalidK


WEIGHTINGS = ("score", "none")
ACTIVATIONS = ("gelu", "identity")
PARAM_NAMES = ("gate_w1", "gate_b1", "gate_w2", "gate_b2",
               "proj_w1", "proj_b1", "proj_w2", "proj_b2")
_MAGIC = b"TSEL"
_SQRT_2_PI = math.sqrt(2 / math.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1 + np.tanh(_SQRT_2_PI * (x + 0.044715 * x ** 3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(_SQRT_2_PI * (x + 0.044715 * x ** 3))
    return 0.5 * (1 + t) + 0.5 * x * (1 - t ** 2) * _SQRT_2_PI * (1 + 3 * 0.044715 * x ** 2)


_activations: dict[str, tuple[Callable, Callable]] = {
    "gelu": (gelu, gelu_grad),
    "identity": (lambda x: x, lambda x: np.ones_like(x)),
}


def _readonly(x) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class SelectorParams:
    """Weights of the gate MLP (:code:`C -> H -> 1`) and the projection MLP
    (:code:`C -> D -> D`).

    Instances are immutable snapshots, the arrays are read only.

    """
    gate_w1: np.ndarray
    gate_b1: np.ndarray
    gate_w2: np.ndarray
    gate_b2: np.ndarray
    proj_w1: np.ndarray
    proj_b1: np.ndarray
    proj_w2: np.ndarray
    proj_b2: np.ndarray
    k: int
    weighting: str = "score"
    proj_act: str = "gelu"
    seed: Optional[int] = None

    def __post_init__(self):
        for name in PARAM_NAMES:
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"Unknown weighting {self.weighting}")
        if self.proj_act not in ACTIVATIONS:
            raise ValueError(f"Unknown activation {self.proj_act}")
        c, h = self.gate_w1.shape
        d = self.proj_w1.shape[1]
        expected = {"gate_b1": (h,), "gate_w2": (h, 1), "gate_b2": (1,),
                    "proj_w1": (c, d), "proj_b1": (d,), "proj_w2": (d, d), "proj_b2": (d,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not all(np.isfinite(getattr(self, name)).all() for name in PARAM_NAMES):
            raise NonFiniteInput("Non finite selector weights")

    @property
    def in_dim(self) -> int:
        return self.gate_w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.gate_w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.proj_w2.shape[1]

    @property
    def weighted(self) -> bool:
        return self.weighting == "score"

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def replace(self, **arrays) -> "SelectorParams":
        kwargs = {**self.arrays(), "k": self.k, "weighting": self.weighting,
                  "proj_act": self.proj_act, "seed": self.seed}
        kwargs.update(arrays)
        return SelectorParams(**kwargs)

    @property
    def metadata(self) -> dict:
        return {"dims": {"c": self.in_dim, "hidden": self.hidden_dim, "d": self.out_dim},
                "k": self.k, "seed": self.seed, "weighting": self.weighting,
                "proj_act": self.proj_act,
                "gate": "C -> hidden -> 1, gelu", "proj": f"C -> D -> D, {self.proj_act}"}


@dataclass(frozen=True)
class SelectionResult:
    indices: np.ndarray
    scores: np.ndarray
    output: np.ndarray

    @property
    def k(self) -> int:
        return len(self.indices)


@dataclass
class SelectorGrads:
    tokens: np.ndarray
    params: dict[str, np.ndarray] = field(default_factory=dict)


def init_params(c: int, d: int, k: int, hidden: Optional[int] = None, seed: int = 0,
                weighting: str = "score", proj_act: str = "gelu",
                hidden_ratio: int = 4) -> SelectorParams:
    """Random weights scaled by :code:`1 / sqrt(fan_in)` and small random biases"""
    hidden = hidden or max(1, c // hidden_ratio)
    rng = np.random.default_rng(seed)

    def weight(fan_in, fan_out):
        return rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)

    return SelectorParams(gate_w1=weight(c, hidden),
                          gate_b1=0.1 * rng.standard_normal(hidden),
                          gate_w2=weight(hidden, 1),
                          gate_b2=0.1 * rng.standard_normal(1),
                          proj_w1=weight(c, d),
                          proj_b1=0.1 * rng.standard_normal(d),
                          proj_w2=weight(d, d),
                          proj_b2=0.1 * rng.standard_normal(d),
                          k=k, weighting=weighting, proj_act=proj_act, seed=seed)


def identity_params(c: int, d: int, k: int, hidden: int = 1) -> SelectorParams:
    """Zero gate and an identity projection, truncating or zero padding :code:`C` to :code:`D`"""
    return SelectorParams(gate_w1=np.zeros((c, hidden)), gate_b1=np.zeros(hidden),
                          gate_w2=np.zeros((hidden, 1)), gate_b2=np.zeros(1),
                          proj_w1=np.eye(c, d), proj_b1=np.zeros(d),
                          proj_w2=np.eye(d), proj_b2=np.zeros(d),
                          k=k, weighting="none", proj_act="identity")


def _check_tokens(F: np.ndarray, p: SelectorParams) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] < 1 or F.shape[1] < 1:
        raise ShapeError(f"Token matrix must be N x C with N, C >= 1, got {F.shape}")
    if F.shape[1] != p.in_dim:
        raise ShapeError(f"Token width {F.shape[1]} doesn't match selector input {p.in_dim}")
    if not np.isfinite(F).all():
        raise NonFiniteInput("Token matrix has non finite entries")
    return F


def softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - np.max(x))
    return e / e.sum()


def _gate_forward(F: np.ndarray, p: SelectorParams):
    z1 = F @ p.gate_w1 + p.gate_b1
    a1 = gelu(z1)
    logits = (a1 @ p.gate_w2)[:, 0] + p.gate_b2[0]
    return z1, a1, logits


def gate_scores(F: np.ndarray, p: SelectorParams) -> np.ndarray:
    """Softmax over the :code:`N` tokens of the gate MLP logits"""
    F = _check_tokens(F, p)
    _, _, logits = _gate_forward(F, p)
    return softmax(logits)


def keep_top_k(scores: np.ndarray, k: int, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the :code:`k` largest scores and the corresponding rows of :code:`F`.

    Ties go to the lower index. Indices are returned in increasing order so the
    kept rows keep their original order.

    """
    scores = np.asarray(scores)
    n = len(scores)
    if not 1 <= k <= n:
        raise InvalidK(f"k = {k} not in [1, {n}]")
    order = np.argsort(-scores, kind="stable")
    indices = np.sort(order[:k])
    return indices, np.asarray(F)[indices]


def forward(F: np.ndarray, p: SelectorParams) -> SelectionResult:
    """Select and project tokens, returning a :code:`k x D` output"""
    F = _check_tokens(F, p)
    _, _, logits = _gate_forward(F, p)
    scores = softmax(logits)
    indices, G = keep_top_k(scores, p.k, F)
    if p.weighted:
        G = G * scores[indices, None]
    act, _ = _activations[p.proj_act]
    output = act(G @ p.proj_w1 + p.proj_b1) @ p.proj_w2 + p.proj_b2
    return SelectionResult(indices=indices, scores=scores, output=output)


def backward(F: np.ndarray, p: SelectorParams, upstream_grad: np.ndarray) -> SelectorGrads:
    """Gradients of :func:`forward` for a fixed set of kept tokens.

    Args:
        F: Token matrix
        p: Selector parameters
        upstream_grad: Gradient of the loss w.r.t. the :code:`k x D` output

    """
    F = _check_tokens(F, p)
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    if upstream_grad.shape != (p.k, p.out_dim):
        raise ShapeError(f"Upstream gradient has shape {upstream_grad.shape}, "
                         f"expected {(p.k, p.out_dim)}")
    if not np.isfinite(upstream_grad).all():
        raise NonFiniteInput("Upstream gradient has non finite entries")
    z1, a1, logits = _gate_forward(F, p)
    scores = softmax(logits)
    indices, G = keep_top_k(scores, p.k, F)
    kept = scores[indices]
    Gw = G * kept[:, None] if p.weighted else G
    act, act_grad = _activations[p.proj_act]
    y1 = Gw @ p.proj_w1 + p.proj_b1
    a2 = act(y1)

    grads: dict[str, np.ndarray] = {}
    grads["proj_w2"] = a2.T @ upstream_grad
    grads["proj_b2"] = upstream_grad.sum(axis=0)
    dy1 = (upstream_grad @ p.proj_w2.T) * act_grad(y1)
    grads["proj_w1"] = Gw.T @ dy1
    grads["proj_b1"] = dy1.sum(axis=0)
    dGw = dy1 @ p.proj_w1.T

    dF = np.zeros_like(F)
    dscores = np.zeros_like(scores)
    if p.weighted:
        dF[indices] += dGw * kept[:, None]
        dscores[indices] = np.sum(dGw * G, axis=1)
    else:
        dF[indices] += dGw
    dlogits = scores * (dscores - np.dot(dscores, scores))
    grads["gate_w2"] = a1.T @ dlogits[:, None]
    grads["gate_b2"] = np.array([dlogits.sum()])
    dz1 = (dlogits[:, None] @ p.gate_w2.T) * gelu_grad(z1)
    grads["gate_w1"] = F.T @ dz1
    grads["gate_b1"] = dz1.sum(axis=0)
    dF += dz1 @ p.gate_w1.T
    return SelectorGrads(tokens=dF, params={name: grads[name] for name in PARAM_NAMES})


def min_score_gap(scores: np.ndarray) -> float:
    """Smallest difference between sorted scores, the distance to the nearest tie"""
    s = np.sort(np.asarray(scores))
    return float(np.min(np.diff(s))) if len(s) > 1 else math.inf


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def gradient_check(F: np.ndarray, p: SelectorParams, eps: float = 1e-5,
                   samples: Optional[int] = None,
                   rng: Optional[np.random.Generator] = None) -> dict[str, float]:
    """Compare :func:`backward` with central finite differences of
    :code:`loss = sum(forward(F, p).output)`.

    Args:
        F: Token matrix
        p: Selector parameters
        eps: Finite difference step
        samples: If given, check at most this many randomly chosen entries per tensor
        rng: Generator for choosing the entries

    Returns:
        Relative error :code:`|a - n| / (|a| + |n|)` per tensor, over the checked entries.

    """
    F = _check_tokens(F, p)
    rng = rng or np.random.default_rng(0)
    analytic = backward(F, p, np.ones((p.k, p.out_dim)))
    tensors = {"tokens": (F, analytic.tokens)}
    tensors.update({name: (getattr(p, name), analytic.params[name]) for name in PARAM_NAMES})

    def loss(name, value):
        if name == "tokens":
            return forward(value, p).output.sum()
        return forward(F, p.replace(**{name: value})).output.sum()

    errors = {}
    for name, (value, grad) in tensors.items():
        flat = np.arange(value.size)
        if samples is not None and value.size > samples:
            flat = np.sort(rng.choice(value.size, size=samples, replace=False))
        numeric = np.zeros(len(flat))
        for j, i in enumerate(flat):
            x = np.array(value, dtype=np.float64)
            x.flat[i] += eps
            plus = loss(name, x)
            x.flat[i] -= 2 * eps
            minus = loss(name, x)
            numeric[j] = (plus - minus) / (2 * eps)
        errors[name] = _relative_error(grad.ravel()[flat], numeric)
    return errors


@dataclass(frozen=True)
class FrameBlock:
    frame_index: int
    timestamp_position: int
    token_start: int
    token_end: int


@dataclass(frozen=True)
class TokenLayout:
    """Positions of timestamps and kept tokens in the flat visual sequence.

    Each frame contributes one timestamp slot followed by its kept tokens.

    """
    blocks: tuple[FrameBlock, ...]
    total: int


def timestamp_layout(frame_results: list[SelectionResult],
                     frame_indices: list[int]) -> TokenLayout:
    if not frame_results or len(frame_results) != len(frame_indices):
        raise ShapeError(f"{len(frame_results)} results for {len(frame_indices)} frames")
    blocks = []
    position = 0
    for result, frame_index in zip(frame_results, frame_indices):
        start = position + 1
        blocks.append(FrameBlock(frame_index=int(frame_index), timestamp_position=position,
                                 token_start=start, token_end=start + result.k))
        position = start + result.k
    return TokenLayout(blocks=tuple(blocks), total=position)


def save_params(p: SelectorParams, path: Pathlike):
    """Write a flat float64 little endian container preceded by a JSON header.

    Layout: :code:`b"TSEL"`, header length as little endian uint32, UTF-8 JSON
    header, then the tensors of :data:`PARAM_NAMES` in order.

    """
    header = dict(p.metadata)
    header["tensors"] = [[name, list(getattr(p, name).shape)] for name in PARAM_NAMES]
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(Path(path), "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for name in PARAM_NAMES:
            f.write(np.ascontiguousarray(getattr(p, name), dtype="<f8").tobytes())


def load_params(path: Pathlike) -> SelectorParams:
    with open(Path(path), "rb") as f:
        data = f.read()
    if data[:4] != _MAGIC:
        raise ShapeError(f"{path} is not a selector parameter file")
    (length,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8:8 + length].decode("utf-8"))
    offset = 8 + length
    arrays = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(data, dtype="<f8", count=count,
                                     offset=offset).reshape(shape).copy()
        offset += 8 * count
    if offset != len(data):
        raise ShapeError(f"{path} has {len(data) - offset} trailing bytes")
    return SelectorParams(**arrays, k=header["k"], weighting=header["weighting"],
                          proj_act=header["proj_act"], seed=header["seed"])


GRADIENT_TOLERANCE = 1e-4
TIE_MARGIN = 1e-3


def check_selector(n: int, c: int, d: int, k: int, seed: int = 0, pure_selection: bool = False,
                   hidden_ratio: int = 4, proj_act: str = "gelu",
                   samples: Optional[int] = 16) -> dict:
    """Run the selector on random tokens and check its gradients.

    The gradient check is only meaningful away from ties of the gate scores,
    so the report carries the smallest score gap as well.

    Returns:
        A dict with the output shape, the score gap, the relative error per
        tensor and whether all errors are below :data:`GRADIENT_TOLERANCE`.

    """
    rng = np.random.default_rng(seed)
    p = init_params(c, d, k, seed=seed, weighting="none" if pure_selection else "score",
                    proj_act=proj_act, hidden_ratio=hidden_ratio)
    F = rng.standard_normal((n, c))
    result = forward(F, p)
    gap = min_score_gap(result.scores)
    errors = gradient_check(F, p, samples=samples, rng=rng)
    max_error = max(errors.values())
    return {"n": n, "c": c, "d": d, "k": k, "seed": seed,
            "weighting": p.weighting, "proj_act": p.proj_act,
            "output_shape": list(result.output.shape),
            "min_score_gap": gap,
            "off_tie": gap > TIE_MARGIN,
            "relative_errors": errors,
            "max_relative_error": max_error,
            "passed": max_error < GRADIENT_TOLERANCE}
