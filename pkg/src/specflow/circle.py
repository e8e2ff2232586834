"""Fixed-point points of the circle and vectorised rotation orbits.

A point of the circle is stored as an integer ``v`` with ``0 <= v < 2**120``
representing ``v / 2**120``.  Rotation orbits ``x + j*alpha`` are produced in
numpy as four 30-bit limbs so that every orbit point is exact; floats only
appear when a roof function is evaluated, and then both ``frac`` and
``1 - frac`` are rounded separately so distances to the singularity keep full
relative precision on either side.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

FRAC_BITS = 120
ONE = 1 << FRAC_BITS
MASK = ONE - 1
HALF = ONE >> 1

LIMB_BITS = 30
LIMB_MASK = (1 << LIMB_BITS) - 1
N_LIMBS = FRAC_BITS // LIMB_BITS

# orbit points closer than this to 0 are treated as singular
CLIP_BITS = 100
CLIP = 1 << (FRAC_BITS - CLIP_BITS)

_LIMB_SCALE = 2.0 ** -LIMB_BITS


@dataclass(frozen=True, order=True)
class CirclePoint:
    """A point of the circle ``[0, 1)`` with resolution ``2**-120``."""

    value: int

    def __post_init__(self):
        if not 0 <= self.value < ONE:
            object.__setattr__(self, "value", self.value & MASK)

    @classmethod
    def from_fraction(cls, q: Fraction | int) -> CirclePoint:
        q = Fraction(q)
        return cls(round(q * ONE) & MASK)

    @classmethod
    def from_float(cls, x: float) -> CirclePoint:
        return cls.from_fraction(Fraction(x))

    @classmethod
    def from_decimal(cls, text: str) -> CirclePoint:
        with localcontext() as ctx:
            ctx.prec = 80
            return cls.from_fraction(Fraction(Decimal(text)))

    def __float__(self) -> float:
        return self.value / ONE

    def __add__(self, other: CirclePoint) -> CirclePoint:
        return CirclePoint((self.value + other.value) & MASK)

    def __sub__(self, other: CirclePoint) -> CirclePoint:
        return CirclePoint((self.value - other.value) & MASK)

    def __neg__(self) -> CirclePoint:
        return CirclePoint(-self.value & MASK)

    def rotate(self, alpha: CirclePoint, n: int = 1) -> CirclePoint:
        return CirclePoint((self.value + n * alpha.value) & MASK)

    def as_fraction(self) -> Fraction:
        return Fraction(self.value, ONE)

    def norm(self) -> float:
        """Distance to 0 on the circle."""
        return norm_int(self.value)

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(16, "little")

    @classmethod
    def from_bytes(cls, raw: bytes) -> CirclePoint:
        return cls(int.from_bytes(raw, "little"))


def norm_int(v: int) -> float:
    v &= MASK
    return min(v, ONE - v) / ONE


def circle_distance(x: CirclePoint, y: CirclePoint) -> float:
    """``min({x-y}, 1-{x-y})``; the result lies in ``[0, 1/2]``."""
    return norm_int(x.value - y.value)


def to_limbs(v: int) -> tuple[int, ...]:
    v &= MASK
    return tuple((v >> (LIMB_BITS * k)) & LIMB_MASK for k in range(N_LIMBS))


def from_limbs(limbs) -> int:
    return sum(int(l) << (LIMB_BITS * k) for k, l in enumerate(limbs))


class OrbitBlock:
    """Exact orbit points ``base + j*alpha`` for ``j = 0 .. count-1``.

    The limbs are little-endian int64 arrays; ``limbs[3]`` holds the top bits.
    """

    __slots__ = ("limbs", "base", "alpha", "count", "_u", "_v", "_comp")

    def __init__(self, base: int, alpha: int, count: int, *, indices=None):
        self.base = base & MASK
        self.alpha = alpha & MASK
        if indices is None:
            j = np.arange(count, dtype=np.int64)
        else:
            j = np.asarray(indices, dtype=np.int64)
            if j.size and j.min() < 0:
                raise ValueError("orbit indices must be non-negative")
        self.count = int(j.size)
        xb = to_limbs(self.base)
        ab = to_limbs(self.alpha)
        limbs = []
        carry = np.zeros(self.count, dtype=np.int64)
        for k in range(N_LIMBS):
            t = j * ab[k] + xb[k] + carry
            carry = t >> LIMB_BITS
            limbs.append(t & LIMB_MASK)
        self.limbs = limbs
        self._u = None
        self._v = None
        self._comp = None

    @classmethod
    def from_points(cls, values) -> OrbitBlock:
        """Block holding arbitrary fixed-point values (no rotation structure)."""
        blk = cls.__new__(cls)
        vals = [int(v) & MASK for v in values]
        blk.base = 0
        blk.alpha = 0
        blk.count = len(vals)
        blk.limbs = [
            np.array([(v >> (LIMB_BITS * k)) & LIMB_MASK for v in vals], dtype=np.int64)
            for k in range(N_LIMBS)
        ]
        blk._u = None
        blk._v = None
        blk._comp = None
        return blk

    @classmethod
    def from_limb_arrays(cls, limbs) -> OrbitBlock:
        blk = cls.__new__(cls)
        blk.base = 0
        blk.alpha = 0
        blk.limbs = [np.asarray(l, dtype=np.int64) for l in limbs]
        blk.count = int(blk.limbs[0].size)
        blk._u = None
        blk._v = None
        blk._comp = None
        return blk

    def _to_float(self, limbs) -> np.ndarray:
        acc = limbs[0].astype(np.float64)
        for k in range(1, N_LIMBS):
            acc = acc * _LIMB_SCALE + limbs[k]
        return acc * _LIMB_SCALE

    def complement_limbs(self):
        """Limbs of ``2**120 - v`` (``0`` where ``v == 0``)."""
        if self._comp is not None:
            return self._comp
        out = []
        borrow = np.zeros(self.count, dtype=np.int64)
        for k in range(N_LIMBS):
            t = -self.limbs[k] - borrow
            borrow = (t < 0).astype(np.int64)
            out.append(t & LIMB_MASK)
        self._comp = out
        return out

    @property
    def u(self) -> np.ndarray:
        """Float value of each point (distance to 0 from the right)."""
        if self._u is None:
            self._u = self._to_float(self.limbs)
        return self._u

    @property
    def v(self) -> np.ndarray:
        """Float value of ``1 - point`` (distance to 0 from the left)."""
        if self._v is None:
            v = self._to_float(self.complement_limbs())
            # v == 0 encodes the point 0 itself, where 1 - 0 = 1
            v[v == 0.0] = 1.0
            self._v = v
        return self._v

    def norms(self) -> np.ndarray:
        return np.minimum(self.u, self.v)

    def near_zero(self, clip: int = CLIP) -> np.ndarray:
        """Boolean mask of points within ``clip / 2**120`` of 0 (exact)."""
        hi_zero = (self.limbs[3] == 0) & (self.limbs[2] == 0) & (self.limbs[1] == 0)
        right = hi_zero & (self.limbs[0] < clip)
        comp = self.complement_limbs()
        lo_zero = (comp[3] == 0) & (comp[2] == 0) & (comp[1] == 0)
        left = lo_zero & (comp[0] < clip)
        return right | left

    def scaled_floor(self, m: int) -> np.ndarray:
        """Exact ``floor(point * m)`` for a positive integer ``m < 2**30``."""
        carry = np.zeros(self.count, dtype=np.int64)
        for k in range(N_LIMBS):
            t = self.limbs[k] * m + carry
            carry = t >> LIMB_BITS
        return carry

    def value_at(self, i: int) -> int:
        return from_limbs(l[i] for l in self.limbs)


def point_uv(value: int) -> tuple[float, float]:
    """``(frac, 1 - frac)`` as floats, rounded exactly as :class:`OrbitBlock` does."""
    blk = OrbitBlock.from_points([value])
    return float(blk.u[0]), float(blk.v[0])


def orbit(x: CirclePoint | int, alpha: CirclePoint | int, start: int, count: int) -> OrbitBlock:
    """Orbit points ``x + j*alpha`` for ``j = start .. start+count-1``."""
    xv = x.value if isinstance(x, CirclePoint) else int(x)
    av = alpha.value if isinstance(alpha, CirclePoint) else int(alpha)
    return OrbitBlock((xv + start * av) & MASK, av, count)
