"""Singular roof functions, their Birkhoff sums and Denjoy-Koksma checks.

The concrete roof is ``f_raw(x) = c + a*h(x) + b*h(1-x)`` with ``h = -log``
(asymmetric logarithmic singularity) or ``h(x) = x**-gamma`` (power
singularity).  The flow uses the normalised roof ``g = f_raw / Z`` where
``Z = integral of f_raw``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .circle import CLIP, MASK, ONE, CirclePoint, OrbitBlock, point_uv
from .errors import AtSingularity, HypothesisViolated, OrbitHitsSingularity
from .rotation import RotationNumber, closest_visit, kappa, omega
from .summation import compensated_cumsum, exact_sum

# orbits are evaluated in chunks so memory stays bounded for |n| ~ 10**7
CHUNK = 1 << 18


class RoofKind(str, Enum):
    LOG_ASYM = "log"
    POWER = "power"

    @classmethod
    def parse(cls, text: str) -> RoofKind:
        t = text.strip().lower().replace("_", "-")
        if t in ("log", "logasym", "log-asym", "arnold"):
            return cls.LOG_ASYM
        if t in ("power", "kochergin"):
            return cls.POWER
        raise ValueError(f"unknown roof kind {text!r}")


@dataclass(frozen=True)
class RoofSpec:
    kind: RoofKind
    a_const: float = 1.0
    b_const: float = 2.0
    gamma: float = 0.5
    background: float = 1.0
    normalizer: float = field(init=False)

    def __post_init__(self):
        if self.a_const <= 0 or self.b_const <= 0:
            raise ValueError("singular coefficients must be positive")
        if self.background <= 0:
            raise ValueError("background must be positive")
        if self.kind is RoofKind.POWER and not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.kind is RoofKind.LOG_ASYM:
            z = self.background + self.a_const + self.b_const
        else:
            z = self.background + (self.a_const + self.b_const) / (1.0 - self.gamma)
        object.__setattr__(self, "normalizer", z)

    @classmethod
    def log_asym(cls, a: float = 1.0, b: float = 2.0, background: float = 1.0) -> RoofSpec:
        return cls(RoofKind.LOG_ASYM, a, b, 0.0, background)

    @classmethod
    def power(cls, gamma: float, a: float = 1.0, b: float = 1.0, background: float = 1.0) -> RoofSpec:
        return cls(RoofKind.POWER, a, b, gamma, background)

    @property
    def asymmetric(self) -> bool:
        return self.a_const != self.b_const

    def to_config(self) -> dict:
        out = {"kind": self.kind.value, "a": self.a_const, "b": self.b_const,
               "background": self.background}
        if self.kind is RoofKind.POWER:
            out["gamma"] = self.gamma
        return out

    @classmethod
    def from_config(cls, cfg: dict) -> RoofSpec:
        kind = RoofKind.parse(str(cfg.get("kind", "power")))
        return cls(
            kind,
            float(cfg.get("a", 1.0)),
            float(cfg.get("b", 2.0 if kind is RoofKind.LOG_ASYM else 1.0)),
            float(cfg.get("gamma", 0.5)) if kind is RoofKind.POWER else 0.0,
            float(cfg.get("background", 1.0)),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_config(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:32]

    # -- closed forms -------------------------------------------------------

    def argmin(self) -> float:
        """Minimiser of ``f_raw`` on (0, 1); ``f_raw`` is convex there."""
        a, b = self.a_const, self.b_const
        if self.kind is RoofKind.LOG_ASYM:
            return a / (a + b)
        return 1.0 / (1.0 + (b / a) ** (1.0 / (1.0 + self.gamma)))

    def raw_values(self, u, v, order: int = 0):
        """``f_raw`` (or a derivative) at points with ``frac = u`` and ``1 - frac = v``."""
        a, b, c = self.a_const, self.b_const, self.background
        if self.kind is RoofKind.LOG_ASYM:
            if order == 0:
                return c - a * np.log(u) - b * np.log(v)
            if order == 1:
                return -a / u + b / v
            return a / (u * u) + b / (v * v)
        g = self.gamma
        if order == 0:
            return c + a * u ** -g + b * v ** -g
        if order == 1:
            return g * (-a * u ** (-g - 1.0) + b * v ** (-g - 1.0))
        return g * (g + 1.0) * (a * u ** (-g - 2.0) + b * v ** (-g - 2.0))

    def values(self, u, v, order: int = 0):
        return self.raw_values(u, v, order) / self.normalizer

    def raw_at(self, x: float, order: int = 0) -> float:
        return float(self.raw_values(np.float64(x), np.float64(1.0 - x), order))

    @property
    def raw_inf(self) -> float:
        x = self.argmin()
        return self.raw_at(x)

    @property
    def inf(self) -> float:
        """Infimum of the normalised roof over the circle."""
        return self.raw_inf / self.normalizer

    def antiderivative(self, x: float) -> float:
        """``integral_0^x f_raw``."""
        a, b, c = self.a_const, self.b_const, self.background
        if self.kind is RoofKind.LOG_ASYM:
            def H(t):
                return t - t * math.log(t) if t > 0 else 0.0
        else:
            g = self.gamma

            def H(t):
                return t ** (1.0 - g) / (1.0 - g) if t > 0 else 0.0
        return c * x + a * H(x) + b * (H(1.0) - H(1.0 - x))


def eval_roof(spec: RoofSpec, x: CirclePoint, derivative_order: int = 0, *, normalized: bool = True) -> float:
    """Roof value (or derivative) at ``x``.  Raises :class:`AtSingularity` inside the clip window."""
    if derivative_order not in (0, 1, 2):
        raise ValueError("derivative_order must be 0, 1 or 2")
    v = x.value
    if v < CLIP or ONE - v < CLIP:
        raise AtSingularity(f"x={float(x)!r} within 2**-100 of the singularity")
    u, w = point_uv(v)
    u, w = np.float64(u), np.float64(w)
    val = spec.raw_values(u, w, derivative_order)
    if normalized:
        val = val / spec.normalizer
    return float(val)


@dataclass
class BirkhoffResult:
    value: float
    n_terms: int
    min_visit_distance: float
    singular_clip_count: int = 0


def _blocks(x: CirclePoint, rot: RotationNumber, start: int, count: int):
    alpha = rot.alpha.value
    done = 0
    while done < count:
        size = min(CHUNK, count - done)
        base = (x.value + (start + done) * alpha) & MASK
        yield done, OrbitBlock(base, alpha, size)
        done += size


def orbit_terms(spec: RoofSpec, rot: RotationNumber, x: CirclePoint, start: int, count: int,
                order: int = 0, *, normalized: bool = True, check: bool = True):
    """Roof terms ``g(x + j alpha)`` for ``j = start .. start+count-1`` as one array.

    Returns ``(terms, min_distance)``.
    """
    parts = []
    dmin = math.inf
    for done, blk in _blocks(x, rot, start, count):
        if check:
            bad = blk.near_zero()
            if bad.any():
                j = int(np.flatnonzero(bad)[0])
                raise OrbitHitsSingularity(start + done + j, float(blk.norms()[j]))
        vals = spec.raw_values(blk.u, blk.v, order)
        if normalized:
            vals = vals / spec.normalizer
        parts.append(vals)
        if blk.count:
            dmin = min(dmin, float(blk.norms().min()))
    if not parts:
        return np.zeros(0), math.inf
    return (parts[0] if len(parts) == 1 else np.concatenate(parts)), dmin


def birkhoff_sum(spec: RoofSpec, rot: RotationNumber, x: CirclePoint, n: int, order: int = 0,
                 *, normalized: bool = True) -> BirkhoffResult:
    """Cocycle sum ``f^{(n)}(x)`` of the roof (or a derivative).

    ``n > 0``: ``sum_{j=0}^{n-1} g(x + j alpha)``; ``n < 0``:
    ``-sum_{j=n}^{-1} g(x + j alpha)``.  Terms are summed with an exactly
    rounded sum, so the cocycle identity holds up to evaluation rounding.
    """
    if n == 0:
        return BirkhoffResult(0.0, 0, math.inf)
    start, count, sign = (0, n, 1.0) if n > 0 else (n, -n, -1.0)
    total = []
    dmin = math.inf
    for done, blk in _blocks(x, rot, start, count):
        bad = blk.near_zero()
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise OrbitHitsSingularity(start + done + j, float(blk.norms()[j]))
        vals = spec.raw_values(blk.u, blk.v, order)
        if normalized:
            vals = vals / spec.normalizer
        total.append(exact_sum(vals))
        dmin = min(dmin, float(blk.norms().min()))
    return BirkhoffResult(sign * math.fsum(total), n, dmin)


def birkhoff_cumulative(spec: RoofSpec, rot: RotationNumber, x: CirclePoint, n: int, order: int = 0,
                        *, normalized: bool = True) -> np.ndarray:
    """All partial sums ``f^{(k)}(x)`` for ``k = 0 .. n`` (``n >= 0``), compensated."""
    terms, _ = orbit_terms(spec, rot, x, 0, n, order, normalized=normalized)
    return compensated_cumsum(terms)


# -- Denjoy-Koksma checks ----------------------------------------------------


@dataclass
class InequalityCheck:
    name: str
    lhs: float
    rhs: float
    passed: bool
    ratio: float


@dataclass
class DKReport:
    x: float
    m_steps: int
    s: int
    q_s: int
    q_s1: int
    x_min: float
    below_asymptotic_range: bool
    checks: list[InequalityCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def check_dk_bounds(spec: RoofSpec, rot: RotationNumber, x: CirclePoint, m_steps: int,
                    slack: float = 8.0) -> DKReport:
    """Evaluate the three Denjoy-Koksma inequality families for a power roof.

    Everything is measured on the normalised roof ``g``; ``slack`` multiplies
    every error term to absorb the rescaling by ``Z``.
    """
    if spec.kind is not RoofKind.POWER:
        raise ValueError("Denjoy-Koksma bounds are stated for power roofs")
    M = m_steps
    s = rot.denominator_index(M)
    if s + 1 >= len(rot.q):
        raise ValueError("m_steps beyond stored convergents")
    q_s, q_s1 = rot.q[s], rot.q[s + 1]
    gam = spec.gamma
    _, x_min = closest_visit(x, rot, M)
    # the closest visit distance evaluated on the side it was realised
    g0 = spec.values(np.float64(x_min), np.float64(1.0 - x_min), 0)
    g1 = abs(float(spec.values(np.float64(x_min), np.float64(1.0 - x_min), 1)))
    g2 = float(spec.values(np.float64(x_min), np.float64(1.0 - x_min), 2))
    checks = []

    fq = birkhoff_sum(spec, rot, x, q_s).value
    lower = q_s - slack * 4.0 * q_s ** (1.0 - gam)
    checks.append(InequalityCheck("koks3_lower", lower, fq, lower <= fq, fq / lower if lower > 0 else math.inf))

    fM = birkhoff_sum(spec, rot, x, M).value
    logM = math.log(M) if M > 1 else 0.0
    bound = slack * (M ** (1.0 - gam) * logM ** 4 + logM ** 3 * float(g0))
    dev = abs(fM - M)
    checks.append(InequalityCheck("koks3_upper", dev, bound, dev <= bound, dev / bound if bound > 0 else math.inf))

    d1 = abs(birkhoff_sum(spec, rot, x, M, 1).value)
    err1 = slack * 8.0 * q_s1 ** (1.0 + gam)
    checks.append(InequalityCheck("koks4_lower", g1 - err1, d1, g1 - err1 <= d1, 0.0))
    checks.append(InequalityCheck("koks4_upper", d1, g1 + err1, d1 <= g1 + err1, d1 / (g1 + err1)))

    d2 = birkhoff_sum(spec, rot, x, M, 2).value
    err2 = slack * 8.0 * q_s1 ** (2.0 + gam)
    # the closest-visit term is one of the (positive) summands
    checks.append(InequalityCheck("koks5_lower", g2, d2, g2 <= d2 * (1 + 1e-12), g2 / d2))
    checks.append(InequalityCheck("koks5_upper", d2, g2 + err2, d2 <= g2 + err2, d2 / (g2 + err2)))

    return DKReport(float(x), M, s, q_s, q_s1, x_min, q_s < rot.q[min(3, len(rot.q) - 1)], checks)


@dataclass
class GrowthRow:
    q: int
    n_index: int
    median: float
    q1: float
    q3: float
    n_samples: int
    excluded: int


def derivative_growth(spec: RoofSpec, rot: RotationNumber, xs, indices, *, scale=None,
                      normalized: bool = True, exclusion: float = 0.0) -> list[GrowthRow]:
    """Median and quartiles of ``|f'^{(q_n)}(x)| / scale(q_n)`` over the sample ``xs``.

    Points closer than ``exclusion`` to the singularity are skipped.
    """
    rows = []
    for n in indices:
        qn = rot.q[n]
        vals = []
        excluded = 0
        for x in xs:
            if exclusion and x.norm() < exclusion:
                excluded += 1
                continue
            try:
                v = abs(birkhoff_sum(spec, rot, x, qn, 1, normalized=normalized).value)
            except OrbitHitsSingularity:
                excluded += 1
                continue
            vals.append(v / (scale(qn) if scale else 1.0))
        arr = np.asarray(vals)
        q1, med, q3 = np.percentile(arr, [25, 50, 75])
        rows.append(GrowthRow(qn, n, float(med), float(q1), float(q3), len(vals), excluded))
    return rows


def check_log_derivative_growth(spec: RoofSpec, rot: RotationNumber, xs, indices) -> list[GrowthRow]:
    """Ratios ``|f'^{(q_n)}(x)| / (q_n log q_n)`` for the unit-coefficient log roof.

    The ratio uses the raw roof so that the singular coefficients are exactly
    ``a`` and ``b``; the normalisation constant would only rescale it.  Base
    points within ``omega(q_n)/q_n`` of 0 are excluded.
    """
    if spec.kind is not RoofKind.LOG_ASYM:
        raise ValueError("log-derivative growth applies to logarithmic roofs")
    rows = []
    for n in indices:
        qn = rot.q[n]
        excl = omega(max(qn, 3)) / qn if qn >= 3 else 0.0
        rows.extend(derivative_growth(spec, rot, xs, [n], scale=lambda q: q * math.log(q) if q > 1 else 1.0,
                                      normalized=False, exclusion=excl))
    return rows


# -- continuity of Birkhoff sums ----------------------------------------------


def segment_window_hit(rot: RotationNumber, x: CirclePoint, y: CirclePoint, r: int, radius: float) -> int | None:
    """First ``i`` in ``[0, r]`` (or ``[r, 0]``) with ``T^i[x, y]`` meeting ``[-radius, radius]``.

    ``[x, y]`` is the shorter arc between the two points.
    """
    diff = (y.value - x.value) & MASK
    if diff > ONE >> 1:
        x, y = y, x
        diff = ONE - diff
    rad = int(radius * ONE)
    steps = abs(r) + 1
    start = 0 if r >= 0 else r
    for off in range(0, steps, CHUNK):
        size = min(CHUNK, steps - off)
        blk = OrbitBlock((x.value + (start + off) * rot.alpha.value) & MASK, rot.alpha.value, size)
        # the arc [p, p + diff] meets [-rad, rad] iff p >= 1 - rad - diff or p <= rad
        u = blk.u
        hit = (u <= rad / ONE) | (u >= 1.0 - (rad + diff) / ONE)
        if hit.any():
            idx = np.flatnonzero(hit)
            j = int(idx[0]) if r >= 0 else int(idx[-1])
            return start + off + j
    return None


@dataclass
class GoodconReport:
    r: int
    n_scale: int
    q_n: int
    difference: float
    ratio: float
    regime: str
    in_band: bool
    window_radius: float


def check_goodcon_ratio(spec: RoofSpec, rot: RotationNumber, x: CirclePoint, y: CirclePoint, r: int,
                        n_scale: int) -> GoodconReport:
    """Continuity ratio of Birkhoff sums for a pair whose orbit segment avoids the singular window.

    The window is ``kappa(n)/(q_n log q_n)`` with ``kappa = log``.  For
    ``|r| >= q_n/1000`` the ratio ``|f^(r)(x) - f^(r)(y)| / (|r| log|r| ||x-y||)``
    should lie in ``[9/10, 11/10]``; below that the difference is compared with
    ``q_n log q_n ||x-y|| / 500``.  Uses the raw unit-coefficient roof.
    """
    qn = rot.q[n_scale]
    radius = kappa(n_scale) / (qn * math.log(qn))
    hit = segment_window_hit(rot, x, y, r, radius)
    if hit is not None:
        raise HypothesisViolated(hit)
    dist = abs(((x.value - y.value + (ONE >> 1)) & MASK) - (ONE >> 1)) / ONE
    if dist == 0 or r == 0:
        return GoodconReport(r, n_scale, qn, 0.0, 0.0, "trivial", True, radius)
    fx = birkhoff_sum(spec, rot, x, r, normalized=False).value
    fy = birkhoff_sum(spec, rot, y, r, normalized=False).value
    diff = abs(fx - fy)
    ar = abs(r)
    if ar >= qn / 1000 and ar > 1:
        ratio = diff / (ar * math.log(ar) * dist)
        return GoodconReport(r, n_scale, qn, diff, ratio, "large", 0.9 <= ratio <= 1.1, radius)
    ratio = diff / (qn * math.log(qn) * dist)
    return GoodconReport(r, n_scale, qn, diff, ratio, "small", ratio <= 1 / 500, radius)


def corollary_bound(spec: RoofSpec, rot: RotationNumber, x: CirclePoint, y: CirclePoint, R: int,
                    slack: float = 4.0) -> tuple[float, float] | None:
    """``(|f^(R)(x) - f^(R)(y)|, slack * |R| log|R| omega(|R|)**4 ||x-y||)`` or ``None``.

    ``None`` means the pair violates the window hypothesis of radius
    ``1/(2|R| omega(|R|))``.
    """
    aR = abs(R)
    radius = 1.0 / (2 * aR * omega(aR))
    if segment_window_hit(rot, x, y, R, radius) is not None:
        return None
    dist = abs(((x.value - y.value + (ONE >> 1)) & MASK) - (ONE >> 1)) / ONE
    fx = birkhoff_sum(spec, rot, x, R, normalized=False).value
    fy = birkhoff_sum(spec, rot, y, R, normalized=False).value
    return abs(fx - fy), slack * aR * math.log(aR) * omega(aR) ** 4 * dist
