"""Model parameters, class labels, the keyed randomness field and vertex rules.

Classes are plain integers.  Two sentinels stand in for the infinite labels:
``NEG_INF`` (the minimal class, used for frozen packed exteriors) and ``HOLE``
(the maximal class, an empty edge).  Every finite class must lie strictly
between them.

Randomness is counter based: the bit at lattice vertex ``(x, t)`` on channel
``c`` is a pure function of ``(seed, x, t, c)``.  Channel 1 decides vertices
where the smaller class arrives from below, channel 2 vertices where it
arrives from the left.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HOLE = 2**62
NEG_INF = -(2**62)

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_ROW_MULT = 0xD1B54A32D192ED03
_CHANNEL_MULT = 0xC2B2AE3D27D4EB4F
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class InvalidParameterError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Vertex probabilities ``b1`` (stay vertical) and ``b2`` (stay horizontal).

    ``q`` and ``kappa`` are always recomputed from ``b1`` and ``b2``.
    """

    b1: float
    b2: float

    def __post_init__(self):
        for name in ("b1", "b2"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise InvalidParameterError(f"{name} must lie in (0, 1), got {v!r}")

    @property
    def q(self) -> float:
        return self.b1 / self.b2

    @property
    def kappa(self) -> float:
        return (1.0 - self.b1) / (1.0 - self.b2)

    @property
    def rarefaction(self) -> bool:
        return self.b1 < self.b2

    def swapped(self) -> "ModelParams":
        return ModelParams(self.b2, self.b1)

    def as_dict(self) -> dict:
        return {"b1": self.b1, "b2": self.b2, "q": self.q, "kappa": self.kappa}


def derive_params(b1: float, b2: float) -> ModelParams:
    return ModelParams(float(b1), float(b2))


def threshold(p: float) -> int:
    """Integer cut such that ``hash < threshold(p)`` has probability ``p``."""
    if not (0.0 <= p <= 1.0):
        raise InvalidParameterError(f"probability must lie in [0, 1], got {p!r}")
    # p = 1 is capped at 2**64 - 1, off by 2**-64
    return min(int(p * 2.0**64), _MASK)


def mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def row_key(seed: int, t: int, channel: int) -> int:
    k = mix64((seed & _MASK) ^ ((channel * _CHANNEL_MULT) & _MASK))
    return mix64(k + (t & _MASK) * _ROW_MULT)


def raw_hash(seed: int, x: int, t: int, channel: int) -> int:
    return mix64(row_key(seed, t, channel) + (x & _MASK) * _GOLDEN)


def derive_seed(master: int, index: int, stream: int = 0) -> int:
    """Per-trial seed; independent of how trials are sharded across workers."""
    return raw_hash(master, index, stream, 97)


def derive_seeds(master: int, n: int, stream: int = 0) -> np.ndarray:
    """``derive_seed(master, i, stream)`` for ``i < n``, computed in compiled code."""
    from ._kernels import derive_seeds as _derive

    return _derive(np.uint64(int(master) & _MASK), int(n), int(stream))


@dataclass(frozen=True)
class RandomField:
    """Immutable Bernoulli field: channel 1 ~ Bernoulli(b1), channel 2 ~ Bernoulli(b2).

    Channels >= 3 are free for auxiliary draws (boundary data) through
    :meth:`bit`, which takes its own probability.
    """

    seed: int
    params: ModelParams

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK)

    @property
    def thresholds(self) -> tuple[int, int]:
        return threshold(self.params.b1), threshold(self.params.b2)

    def bit(self, x: int, t: int, channel: int, p: float) -> int:
        return int(raw_hash(self.seed, x, t, channel) < threshold(p))

    def with_seed(self, seed: int) -> "RandomField":
        return RandomField(seed, self.params)


def bernoulli_draw(field: RandomField, x: int, t: int, channel: int) -> int:
    if channel == 1:
        p = field.params.b1
    elif channel == 2:
        p = field.params.b2
    else:
        raise ValueError("channel must be 1 or 2")
    return field.bit(x, t, channel, p)


def resolve_vertex_single(in_bottom: int, in_left: int, chi1: int, chi2: int) -> tuple[int, int]:
    """Return ``(out_top, out_right)`` occupation bits."""
    if in_bottom == in_left:
        return in_bottom, in_left
    if in_bottom:
        return (1, 0) if chi1 else (0, 1)
    return (0, 1) if chi2 else (1, 0)


def resolve_vertex_multi(in_bottom: int, in_left: int, chi1: int, chi2: int) -> tuple[int, int]:
    """Return ``(out_top, out_right)`` classes.

    The smaller class keeps its direction when the bit of its channel is 1,
    otherwise the two arrows swap directions.
    """
    if in_bottom == in_left:
        return in_bottom, in_left
    keep = chi1 if in_bottom < in_left else chi2
    if keep:
        return in_bottom, in_left
    return in_left, in_bottom


def vertex_outcomes(in_bottom: int, in_left: int, params: ModelParams):
    """Exact outcome law ``[((top, right), prob), ...]`` of one multi-class vertex."""
    if in_bottom == in_left:
        return [((in_bottom, in_left), 1.0)]
    p = params.b1 if in_bottom < in_left else params.b2
    return [((in_bottom, in_left), p), ((in_left, in_bottom), 1.0 - p)]


def format_class(c: int) -> str:
    if c >= HOLE:
        return "inf"
    if c <= NEG_INF:
        return "-inf"
    return str(int(c))


def parse_class(s: str) -> int:
    s = s.strip()
    if s in ("inf", "+inf"):
        return HOLE
    if s == "-inf":
        return NEG_INF
    return int(s)
