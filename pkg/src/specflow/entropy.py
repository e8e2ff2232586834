"""Sampling the flow measure, empirical covering numbers and exponent fits."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .circle import CLIP, ONE, CirclePoint, OrbitBlock
from .errors import DegenerateGrid, Infeasible
from .flow import FlowPoint, OrbitCode, SpecialFlow
from .parallel import pmap
from .rng import random_limbs, stream

TAIL_MASS = 1e-4
# rejection is used while the acceptance rate 1/cap stays above this
MIN_ACCEPTANCE = 1e-6


class ScaleSpec(str, Enum):
    LOG = "log"
    POWER = "power"

    def a(self, n, t):
        """Scale sequence ``n (log n)**t`` or ``n**t``."""
        n = np.asarray(n, dtype=float)
        if self is ScaleSpec.LOG:
            return n * np.log(n) ** t
        return n ** t


# -- sampling ------------------------------------------------------------------


def _tail_mass(fl: SpecialFlow, cap: float) -> float:
    """``integral (g - cap)_+`` for the normalised roof."""
    roof = fl.roof
    z = roof.normalizer
    xs = roof.argmin()
    if cap <= roof.inf:
        return 1.0 - cap
    gl = lambda u: roof.raw_values(np.float64(u), np.float64(1.0 - u)) / z - cap
    gr = lambda v: roof.raw_values(np.float64(1.0 - v), np.float64(v)) / z - cap
    tiny = 1e-300
    total = 0.0
    if gl(tiny) > 0:
        xl = brentq(gl, tiny, xs, xtol=1e-300, rtol=1e-15)
        total += roof.antiderivative(xl) / z - cap * xl
    if gr(tiny) > 0:
        vr = brentq(gr, tiny, 1.0 - xs, xtol=1e-300, rtol=1e-15)
        total += (roof.normalizer - roof.antiderivative(1.0 - vr)) / z - cap * vr
    return max(total, 0.0)


def rejection_cap(fl: SpecialFlow, tail: float = TAIL_MASS) -> tuple[float, float]:
    """Smallest cap (to 1e-9 relative) whose truncated mass is below ``tail``."""
    lo = math.log(max(fl.roof.inf, 1e-12))
    hi = lo + 1.0
    while _tail_mass(fl, math.exp(hi)) >= tail:
        hi += 2.0
        if hi > 700:
            return math.inf, 0.0
    f = lambda lc: _tail_mass(fl, math.exp(lc)) - 0.999 * tail
    lc = brentq(f, lo, hi, xtol=1e-12)
    cap = math.exp(lc)
    while _tail_mass(fl, cap) >= tail:
        cap *= 1.0 + 1e-9
    return cap, _tail_mass(fl, cap)


def _side_cdf(roof, w: float, right: bool) -> float:
    """Normalised mass of ``(0, w)`` (right of 0) or ``(1-w, 1)`` (left of 0)."""
    a, b, c = roof.a_const, roof.b_const, roof.background
    if roof.kind.value == "log":
        H = lambda t: t - t * math.log(t) if t > 0 else 0.0
    else:
        g = roof.gamma
        H = lambda t: t ** (1.0 - g) / (1.0 - g) if t > 0 else 0.0
    near, far = (a, b) if right else (b, a)
    return (c * w + near * H(w) + far * (H(1.0) - H(1.0 - w))) / roof.normalizer


_RTOL = 4 * np.finfo(float).eps  # tightest rtol brentq accepts


def _draw_inverse(fl: SpecialFlow, gen: np.random.Generator) -> FlowPoint:
    roof = fl.roof
    while True:
        u = gen.random()
        if u < 0.5:
            w = brentq(lambda t: _side_cdf(roof, t, True) - u, 0.0, 1.0, xtol=1e-300, rtol=_RTOL)
            val = CirclePoint.from_float(w).value
        else:
            target = 1.0 - u
            w = brentq(lambda t: _side_cdf(roof, t, False) - target, 0.0, 1.0, xtol=1e-300, rtol=_RTOL)
            val = (ONE - CirclePoint.from_float(w).value) % ONE
        if val < CLIP or ONE - val < CLIP:
            continue
        x = CirclePoint(val)
        gx = fl.g(x)
        return FlowPoint(x, float(gen.random() * gx))


def _draw_rejection(fl: SpecialFlow, gen: np.random.Generator, cap: float) -> tuple[FlowPoint, int]:
    batch = int(min(max(2 * cap, 16), 1 << 16))
    tried = 0
    roof = fl.roof
    while True:
        blk = OrbitBlock.from_limb_arrays(random_limbs(gen, batch))
        hts = gen.random(batch) * cap
        ok = ~blk.near_zero()
        gx = np.full(batch, -1.0)
        gx[ok] = roof.values(blk.u[ok], blk.v[ok])
        hit = np.flatnonzero(hts < gx)
        if hit.size:
            k = int(hit[0])
            return FlowPoint(CirclePoint(blk.value_at(k)), float(hts[k])), tried + k + 1
        tried += batch


@dataclass
class SampleInfo:
    method: str
    cap: float
    tail_mass: float
    acceptance: float


def sample_flow_measure(fl: SpecialFlow, n_samples: int, seed: int, *, method: str = "auto",
                        workers: int = 1, stream_offset: int = 0):
    """I.i.d. draws from the normalised measure under the roof graph.

    Sample ``i`` uses its own counter-based substream, so the output does not
    depend on ``workers``.  ``method`` is ``"rejection"``, ``"inverse"``
    (exact inverse of the base marginal, then a uniform height) or ``"auto"``.
    Returns ``(points, SampleInfo)``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    cap, tail = rejection_cap(fl)
    if method == "auto":
        method = "rejection" if 1.0 / cap >= MIN_ACCEPTANCE else "inverse"
    if method == "rejection":
        if not math.isfinite(cap):
            raise ValueError("no finite rejection cap for this roof")
        res = pmap(lambda i: _draw_rejection(fl, stream(seed, stream_offset + i), cap), range(n_samples), workers)
        pts = [p for p, _ in res]
        tried = sum(t for _, t in res)
        return pts, SampleInfo("rejection", cap, tail, n_samples / tried)
    if method == "inverse":
        pts = pmap(lambda i: _draw_inverse(fl, stream(seed, stream_offset + i)), range(n_samples), workers)
        return pts, SampleInfo("inverse", cap, 0.0, 1.0)
    raise ValueError(f"unknown sampling method {method!r}")


# -- covering numbers ------------------------------------------------------------


@dataclass
class CoverEstimate:
    r: float
    epsilon: float
    beta: float
    m: int
    sample_size: int
    ball_count: int
    covered_mass: float
    center_indices: list = field(default_factory=list)
    note: str = "greedy cover of the empirical measure; upper estimate of the sample covering number"


def mismatch_counts(symbols: np.ndarray) -> np.ndarray:
    """Pairwise mismatch counts of the rows of an ``(N, L)`` symbol matrix."""
    n = symbols.shape[0]
    out = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        out[i, i + 1:] = np.count_nonzero(symbols[i + 1:] != symbols[i], axis=1)
    return out + out.T


def hamming_matrix(codes: list[OrbitCode]) -> np.ndarray:
    ref = codes[0]
    for c in codes:
        if (c.r, c.delta, c.m) != (ref.r, ref.delta, ref.m):
            from .errors import CodeMismatch

            raise CodeMismatch("codes differ in (r, delta, m)")
    sym = np.vstack([c.symbols for c in codes])
    return mismatch_counts(sym) / sym.shape[1]


def cover_target(n: int, epsilon: float, beta: float) -> int:
    if beta - epsilon > 1:
        raise Infeasible("beta - epsilon exceeds the total mass")
    return max(0, math.ceil((beta - epsilon) * n - 1e-9))


def greedy_cover(dist: np.ndarray, epsilon: float, beta: float) -> tuple[list[int], int]:
    """Greedy centres until at least ``(beta - epsilon) N`` sample points are covered.

    A point ``j`` lies in the ball of centre ``i`` when ``dist[i, j] < epsilon``.
    Ties go to the lowest index.  Returns ``(centres, covered)``.
    """
    n = dist.shape[0]
    target = cover_target(n, epsilon, beta)
    balls = dist < epsilon
    covered = np.zeros(n, dtype=bool)
    gains = balls.sum(axis=1)
    n_cov = 0
    centres = []
    while n_cov < target:
        i = int(np.argmax(gains))  # first maximum, so ties go to the lowest index
        if gains[i] == 0:
            break
        centres.append(i)
        new = balls[i] & ~covered
        covered |= new
        n_cov += int(new.sum())
        gains -= balls[:, new].sum(axis=1)
    return centres, n_cov


def exact_cover_size(dist: np.ndarray, epsilon: float, beta: float) -> int:
    """Minimal number of centres reaching the same target (exhaustive, small N only)."""
    n = dist.shape[0]
    if n > 16:
        raise ValueError("exhaustive cover is limited to 16 points")
    target = cover_target(n, epsilon, beta)
    if target == 0:
        return 0
    masks = [sum(1 << j for j in range(n) if dist[i, j] < epsilon) for i in range(n)]
    for k in range(1, n + 1):
        for combo in itertools.combinations(masks, k):
            acc = 0
            for m in combo:
                acc |= m
            if bin(acc).count("1") >= target:
                return k
    return n


def estimate_cover(codes: list[OrbitCode], epsilon: float, beta: float, *, dist=None) -> CoverEstimate:
    if not 0 < epsilon < beta <= 1:
        if beta - epsilon > 1:
            raise Infeasible("beta - epsilon exceeds the total mass")
        raise ValueError("need 0 < epsilon < beta <= 1")
    if dist is None:
        dist = hamming_matrix(codes)
    centres, covered = greedy_cover(dist, epsilon, beta)
    n = len(codes)
    c = codes[0]
    return CoverEstimate(c.r, epsilon, beta, c.m, n, len(centres), covered / n, centres)


# -- exponent fits ---------------------------------------------------------------


@dataclass
class ExponentFit:
    t_hat: float
    residual: float
    r_grid: list
    s_values: list
    scale: str
    intercept: float = 0.0


def fit_exponent(points, scale: ScaleSpec | str) -> ExponentFit:
    """Least-squares scale exponent for covering counts ``S(r)``.

    Log scale: ``log S - log r = t log log r + c``; power scale:
    ``log S = t log r + c``.  The residual is the RMS of the log deviations.
    """
    scale = ScaleSpec(scale)
    pts = sorted((float(r), float(s)) for r, s in points)
    if len(pts) < 3:
        raise ValueError("need at least three points")
    r = np.array([p[0] for p in pts])
    s = np.array([p[1] for p in pts])
    if np.any(s < 1) or np.any(r < 3):
        raise ValueError("need S >= 1 and r >= 3")
    if np.all(r == r[0]):
        raise DegenerateGrid("all durations are equal")
    if scale is ScaleSpec.LOG:
        xv = np.log(np.log(r))
        yv = np.log(s) - np.log(r)
    else:
        xv = np.log(r)
        yv = np.log(s)
    A = np.column_stack([xv, np.ones_like(xv)])
    (t, c), *_ = np.linalg.lstsq(A, yv, rcond=None)
    res = yv - (t * xv + c)
    return ExponentFit(float(t), float(np.sqrt(np.mean(res ** 2))), r.tolist(), s.tolist(), scale.value, float(c))
