"""Continued fractions, Ostrowski numeration and Diophantine class tests.

Convergent indexing: ``alpha = [0; a_1, a_2, ...]`` with ``q_0 = 1``,
``q_1 = a_1`` and ``q_{k+1} = a_{k+1} q_k + q_{k-1}`` (``q_{-1} = 0``);
``p_0 = 0``, ``p_1 = 1``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import isqrt

import numpy as np

from .circle import FRAC_BITS, MASK, ONE, CirclePoint, OrbitBlock, norm_int
from .errors import AlphaRational, DepthUnreachable, ROutOfRange

log = logging.getLogger(__name__)

DEFAULT_DEPTH = 48
MAX_DEPTH = 64

GOLDEN = CirclePoint((isqrt(5 << (2 * FRAC_BITS)) - ONE) >> 1)
SILVER = CirclePoint(isqrt(2 << (2 * FRAC_BITS)) - ONE)
NAMED = {"golden": GOLDEN, "silver": SILVER}
LIOUVILLE_DEPTH = 8


@dataclass(frozen=True)
class RotationNumber:
    alpha: CirclePoint
    partial_quotients: tuple[int, ...]  # a_1 .. a_D
    convergents: tuple[tuple[int, int], ...]  # (p_k, q_k) for k = 0 .. D

    @property
    def depth(self) -> int:
        return len(self.partial_quotients)

    @property
    def q(self) -> tuple[int, ...]:
        return tuple(c[1] for c in self.convergents)

    @property
    def p(self) -> tuple[int, ...]:
        return tuple(c[0] for c in self.convergents)

    def __float__(self) -> float:
        return float(self.alpha)

    def denominator_index(self, m: int) -> int:
        """Largest ``s`` with ``q_s <= m`` (``m >= 1``)."""
        qs = self.q
        s = 0
        for k, qk in enumerate(qs):
            if qk <= m:
                s = k
        return s

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(self.alpha.to_bytes()).hexdigest()[:32]


def _convergents(quotients) -> list[tuple[int, int]]:
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    out = [(p, q)]
    for a in quotients:
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
        out.append((p, q))
    return out


def expand_continued_fraction(
    alpha: CirclePoint, depth: int = DEFAULT_DEPTH, *, strict: bool = True
) -> RotationNumber:
    """Continued fraction of ``alpha`` to ``depth`` partial quotients.

    Quotients are only kept while they are certified by the 120-bit value,
    i.e. while ``q_k * q_{k+1} < 2**119``.  With ``strict`` a shortfall raises
    :class:`DepthUnreachable`; otherwise the truncated expansion is returned.
    """
    if not 1 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must lie in [1, {MAX_DEPTH}]")
    num, den = alpha.value, ONE
    quotients: list[int] = []
    terminated = False
    q_prev, q = 0, 1
    while len(quotients) < depth:
        if num == 0:
            terminated = True
            break
        a, rem = divmod(den, num)
        q_next = a * q + q_prev
        if q * q_next >= ONE >> 1:
            break
        quotients.append(a)
        q_prev, q = q, q_next
        den, num = num, rem
    if terminated and len(quotients) < 3:
        raise AlphaRational(f"expansion of {alpha.as_fraction()} terminates at depth {len(quotients)}")
    if terminated and len(quotients) < depth:
        # exact small-ish rational: the tail below resolution is meaningless
        if strict:
            raise DepthUnreachable(depth, len(quotients))
    elif len(quotients) < depth and strict:
        raise DepthUnreachable(depth, len(quotients))
    if len(quotients) < 1:
        raise AlphaRational("alpha has no partial quotients")
    return RotationNumber(alpha, tuple(quotients), tuple(_convergents(quotients)))


def from_partial_quotients(quotients, *, tail: str = "golden") -> RotationNumber:
    """Rotation number ``[0; a_1, ..., a_D, tail]`` with the given quotients.

    The irrational tail (all ones by default) fixes a concrete ``alpha`` whose
    first ``D`` quotients are exactly those supplied.
    """
    quotients = [int(a) for a in quotients]
    if any(a < 1 for a in quotients):
        raise ValueError("partial quotients must be positive integers")
    tail_value = Fraction(GOLDEN.value, ONE) + 1  # [1; 1, 1, ...]
    if tail == "silver":
        tail_value = Fraction(SILVER.value, ONE) + 2
    x = tail_value
    for a in reversed(quotients):
        x = a + 1 / x
    alpha = CirclePoint.from_fraction(1 / x)
    rot = expand_continued_fraction(alpha, len(quotients))
    if list(rot.partial_quotients) != quotients:
        raise DepthUnreachable(len(quotients), _common_prefix(rot.partial_quotients, quotients))
    return rot


def _common_prefix(a, b) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def parse_alpha(spec: str, depth: int = DEFAULT_DEPTH) -> RotationNumber:
    """Parse ``golden``, ``silver``, ``liouville``, a decimal string or ``[a1, a2, ...]``.

    ``liouville`` is the number with partial quotients ``a_k = k!`` for
    ``k <= 8`` followed by an all-ones tail.
    """
    text = spec.strip()
    if text.lower() in NAMED:
        return _truncating(NAMED[text.lower()], depth)
    if text.lower() == "liouville":
        return from_partial_quotients([math.factorial(k) for k in range(1, LIOUVILLE_DEPTH + 1)])
    if text.startswith("[") or "," in text:
        items = [s for s in text.strip("[]").replace(";", ",").split(",") if s.strip()]
        return from_partial_quotients(int(s) for s in items)
    alpha = CirclePoint.from_decimal(text)
    return _truncating(alpha, depth)


def _truncating(alpha: CirclePoint, depth: int) -> RotationNumber:
    """Expansion cut at the resolution limit; the achieved depth is logged."""
    rot = expand_continued_fraction(alpha, depth, strict=False)
    if rot.depth < depth:
        log.info("continued fraction truncated at depth %d (requested %d)", rot.depth, depth)
    return rot


@dataclass
class DiophantineReport:
    in_D: bool
    C: float
    k_alpha: list[int]
    e_partial_sum: float
    liouville_flag: bool
    depth: int
    tested_range: tuple[int, int] = (0, 0)
    c_const: float = 1.0
    e_partial_sums: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "in_D": self.in_D,
            "C": self.C,
            "k_alpha": list(self.k_alpha),
            "e_partial_sum": self.e_partial_sum,
            "liouville_flag": self.liouville_flag,
            "depth": self.depth,
        }


def classify_diophantine(rot: RotationNumber, c_const: float = 1.0) -> DiophantineReport:
    """Finite-range verdicts for the classes D, E and the set K_alpha.

    Logarithms are natural.  ``C`` is the smallest constant for which the D
    inequality holds at every tested ``n >= 3``.  Terms of the E series with
    ``q_i = 1`` (where ``log q_i = 0``) are skipped.
    """
    if rot.depth < 5:
        raise ValueError("classification needs depth >= 5")
    q = rot.q
    D = rot.depth
    witness = 0.0
    for n in range(3, D):
        bound = q[n] * math.log(q[n]) * math.log(n) ** 2
        witness = max(witness, q[n + 1] / bound)
    k_alpha = [n for n in range(1, D) if q[n] > 1 and q[n + 1] <= q[n] * math.log(q[n]) ** 0.875]
    kset = set(k_alpha)
    partial = 0.0
    sums = []
    for i in range(1, D):
        if i not in kset and q[i] > 1:
            partial += math.log(q[i]) ** -0.875
        sums.append(partial)
    liouville = any(q[n + 1] >= math.exp(min(q[n], 700)) for n in range(D))
    return DiophantineReport(
        in_D=witness <= c_const,
        C=witness,
        k_alpha=k_alpha,
        e_partial_sum=partial,
        liouville_flag=liouville,
        depth=D,
        tested_range=(3, D - 1),
        c_const=c_const,
        e_partial_sums=sums,
    )


def closest_visit_scan(x: CirclePoint, rot: RotationNumber, m_steps: int) -> tuple[int, float]:
    """Exhaustive search of ``argmin_{0<=j<M} ||x + j alpha||``."""
    best_j, best = 0, None
    a = rot.alpha.value
    v = x.value
    for j in range(m_steps):
        d = min(v, ONE - v) if v else 0
        if best is None or d < best:
            best_j, best = j, d
        v = (v + a) & MASK
    return best_j, best / ONE


def _block_closest(target: int, p: int, q: int, alpha: int, offset: int, m_in_block: int):
    """Closest point to ``target`` among ``j*alpha``, ``j < q``.

    For ``j < q_i`` the points sit within ``1/q_{i+1}`` of the lattice
    ``j p_i / q_i``; the nearest one is among lattice indices within 2 of
    ``target * q_i``.
    """
    if q == 1:
        cands = [0]
    else:
        inv = pow(p, -1, q)
        ell = (target * q + HALF_ONE) >> FRAC_BITS
        cands = sorted({((l % q) * inv) % q for l in range(ell - 2, ell + 3)})
    best = None
    for j in cands:
        if j >= m_in_block:
            continue
        d = norm_int(j * alpha - target)
        key = (d, offset + j)
        if best is None or key < best:
            best = key
    return best


HALF_ONE = ONE >> 1


def closest_visit(x: CirclePoint, rot: RotationNumber, m_steps: int, *, method: str = "auto"):
    """``(j, ||x + j alpha||)`` minimising the distance to 0 over ``0 <= j < m_steps``.

    The fast path splits ``[0, m_steps)`` along the Ostrowski expansion of
    ``m_steps`` into blocks of ``q_i`` consecutive indices; inside a block the
    orbit is a perturbed lattice of spacing ``1/q_i`` so only five candidates
    need an exact check.  Ties go to the smallest ``j``.
    """
    if m_steps < 1:
        raise ValueError("m_steps must be >= 1")
    if method == "scan" or (method == "auto" and m_steps <= 64):
        return closest_visit_scan(x, rot, m_steps)
    q_max = rot.q[-1]
    if m_steps > q_max:
        # beyond the stored convergents: cover the range with blocks of q_max
        n_full, rest = divmod(m_steps, q_max)
        digits = {len(rot.q) - 1: n_full}
        if rest:
            for i, b in enumerate(ostrowski_decompose(rest, rot)):
                if b:
                    digits[i] = digits.get(i, 0) + b
    else:
        digits = {i: b for i, b in enumerate(ostrowski_decompose(m_steps, rot)) if b}
    alpha = rot.alpha.value
    offset = 0
    best = None
    for i in sorted(digits, reverse=True):
        p_i, q_i = rot.convergents[i]
        for _ in range(digits[i]):
            # points x + (offset + j) alpha; we want j alpha close to -(x + offset alpha)
            target = (-(x.value + offset * alpha)) & MASK
            cand = _block_closest(target, p_i, q_i, alpha, offset, q_i)
            if best is None or cand < best:
                best = cand
            offset += q_i
    d, j = best
    return j, d


def ostrowski_decompose(r: int, rot: RotationNumber) -> list[int]:
    """Greedy digits ``b_i`` with ``r = sum b_i q_i`` (list indexed by ``i``)."""
    q = rot.q
    if r < 0 or r > q[-1]:
        raise ROutOfRange(f"r={r} outside [0, q_D={q[-1]}]")
    digits = [0] * len(q)
    rem = r
    for i in range(len(q) - 1, -1, -1):
        if rem == 0:
            break
        if q[i] <= rem:
            digits[i], rem = divmod(rem, q[i])
    return digits


def ostrowski_reconstruct(digits, rot: RotationNumber) -> int:
    return sum(b * qi for b, qi in zip(digits, rot.q))


def is_admissible(digits, rot: RotationNumber) -> bool:
    """Ostrowski digit conditions for ``q_0 = 1, q_1 = a_1`` indexing."""
    a = rot.partial_quotients
    for i, b in enumerate(digits):
        if b < 0:
            return False
        cap = a[i] if i < len(a) else None  # b_i <= a_{i+1}
        if i == 0:
            if b > a[0] - 1:
                return False
            continue
        if cap is not None and b > cap:
            return False
        if cap is not None and b == cap and digits[i - 1] != 0:
            return False
    return True


def omega(n) -> np.ndarray | float:
    """Slow sequence ``log log n``."""
    return np.log(np.log(n)) if isinstance(n, np.ndarray) else math.log(math.log(n))


def kappa(n) -> np.ndarray | float:
    return np.log(n) if isinstance(n, np.ndarray) else math.log(n)


def orbit_block(x: CirclePoint, rot: RotationNumber, start: int, count: int) -> OrbitBlock:
    return OrbitBlock((x.value + start * rot.alpha.value) & MASK, rot.alpha.value, count)
