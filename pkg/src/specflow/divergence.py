"""Divergence of nearby orbits: closeness intervals, Birkhoff-difference intervals,
matching profiles and derivative-occupancy measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circle import MASK, ONE, CirclePoint, OrbitBlock, norm_int
from .errors import NotClose
from .flow import FlowPoint, PairSegments, SpecialFlow, pair_segments
from .parallel import pmap
from .rng import random_limbs, stream
from .rotation import omega
from .summation import compensated_cumsum

CLOSE = 1e-2
J_CLOSE = 1 / 50
J_SEP = 1 / 400
K_RATIO = 300
BISECT_TOL = 1e-6
GRID_CHUNK = 1 << 16
I_START = 1e3


# -- the closeness interval I ------------------------------------------------------


@dataclass
class IInterval:
    t_minus: float
    t_plus: float
    censored_minus: bool
    censored_plus: bool

    @property
    def censored(self) -> bool:
        return self.censored_minus or self.censored_plus

    @property
    def length(self) -> float:
        return self.t_plus - self.t_minus


def _bisect(seg: PairSegments, a: float, b: float, thr: float, tol: float) -> float:
    """Boundary between a close time ``a`` and a separated time ``b``."""
    while abs(b - a) > tol:
        mid = 0.5 * (a + b)
        if seg.value_at(mid) >= thr:
            b = mid
        else:
            a = mid
    return b


def interval_from_segments(seg: PairSegments, threshold: float = CLOSE, *, method: str = "exact",
                           step: float = 1e-2, tol: float = BISECT_TOL) -> IInterval:
    i0 = int(np.searchsorted(seg.starts, 0.0, side="right") - 1)
    if method == "exact":
        far = np.flatnonzero(seg.d >= threshold)
        after = far[far > i0]
        before = far[far < i0]
        if after.size:
            tp, cp = float(seg.starts[after[0]]), False
        else:
            tp, cp = seg.t_hi, True
        if before.size:
            tm, cm = float(seg.ends[before[-1]]), False
        else:
            tm, cm = seg.t_lo, True
        return IInterval(tm, tp, cm, cp)
    if method != "grid":
        raise ValueError(f"unknown scan method {method!r}")
    out = []
    for sign, bound in ((1.0, seg.t_hi), (-1.0, seg.t_lo)):
        last = int(abs(bound) / step)
        found = None
        # scan in chunks so a long horizon never materialises the whole grid
        for k0 in range(1, last + 1, GRID_CHUNK):
            ts = sign * np.arange(k0, min(k0 + GRID_CHUNK, last + 1)) * step
            hit = np.flatnonzero(seg.value_at(ts) >= threshold)
            if hit.size:
                j = int(hit[0])
                prev = 0.0 if k0 + j == 1 else sign * (k0 + j - 1) * step
                found = _bisect(seg, prev, float(ts[j]), threshold, tol)
                break
        out.append((bound, True) if found is None else (found, False))
    (tp, cp), (tm, cm) = out
    return IInterval(tm, tp, cm, cp)


def divergence_interval_I(fl: SpecialFlow, p: FlowPoint, q: FlowPoint, horizon: float, *,
                          threshold: float = CLOSE, method: str = "exact", step: float = 1e-2):
    """Maximal time interval around 0 on which ``d^f(T_t p, T_t q) < threshold``.

    ``method="exact"`` uses the piecewise-constant structure of ``d^f``;
    ``method="grid"`` scans at ``step`` and bisects to ``1e-6``.  Endpoints
    at ``+-horizon`` are censored.  Returns ``(IInterval, PairSegments)``.
    """
    if fl.d_pseudo_metric(p, q) >= threshold:
        raise NotClose("pair is not within the closeness threshold")
    # grow the window until both ends are found; most pairs separate long
    # before the horizon, and the full window can need gigabytes
    h = min(float(horizon), I_START)
    while True:
        seg = pair_segments(fl, p, q, -h, h)
        iv = interval_from_segments(seg, threshold, method=method, step=step)
        if h >= horizon or not iv.censored:
            return iv, seg
        h = min(4.0 * h, float(horizon))


def separated_fraction(seg: PairSegments, iv: IInterval, c0: float, *, method: str = "exact",
                       step: float = 1e-2) -> float:
    """Fraction of ``I`` during which ``d^f > c0``."""
    if iv.length <= 0:
        return 0.0
    if method == "grid":
        ts = np.arange(math.ceil(iv.t_minus / step), math.floor(iv.t_plus / step) + 1) * step
        ts = ts[(ts >= iv.t_minus) & (ts < iv.t_plus)]
        if ts.size == 0:
            return 0.0
        return float(np.mean(seg.value_at(ts) > c0))
    lo = np.maximum(seg.starts, iv.t_minus)
    hi = np.minimum(seg.ends, iv.t_plus)
    w = np.clip(hi - lo, 0.0, None)
    return math.fsum(w[seg.d > c0]) / iv.length


# -- the Birkhoff-difference interval J ------------------------------------------------


@dataclass
class JInterval:
    c: int
    d: int
    censored_minus: bool
    censored_plus: bool
    k: tuple | None
    cocy_pass: bool

    @property
    def censored(self) -> bool:
        return self.censored_minus or self.censored_plus

    @property
    def length(self) -> int:
        return self.d - self.c + 1

    @property
    def k_length(self) -> int:
        return 0 if self.k is None else self.k[1] - self.k[0] + 1


def _diff_sums(fl: SpecialFlow, x: CirclePoint, y: CirclePoint, start: int, count: int) -> np.ndarray:
    """Partial sums of ``g(x_j) - g(y_j)`` over ``j = start .. start+count-1`` (length count+1)."""
    tx = fl._terms(x, start, count)
    ty = fl._terms(y, start, count)
    return compensated_cumsum(tx - ty)


def _first_exceed(fl, x, y, horizon: int, threshold: float, forward: bool):
    """``(n, diffs)`` with ``n`` the first step where ``|f^(n)(x) - f^(n)(y)| >= threshold``.

    ``diffs[k]`` is the difference at ``n = k`` (forward) or ``n = -k``.  ``n`` is
    ``None`` when the horizon is reached first.
    """
    size = min(4096, horizon)
    while True:
        if forward:
            diffs = _diff_sums(fl, x, y, 0, size)
        else:
            tx = fl._terms(x, -size, size)[::-1]
            ty = fl._terms(y, -size, size)[::-1]
            diffs = -compensated_cumsum(tx - ty)
        hit = np.flatnonzero(np.abs(diffs) >= threshold)
        if hit.size:
            return int(hit[0]), diffs
        if size >= horizon:
            return None, diffs
        size = min(2 * size, horizon)


def divergence_interval_J(fl: SpecialFlow, x: CirclePoint, y: CirclePoint, horizon: int, *,
                          threshold: float = J_CLOSE, separation: float = J_SEP,
                          ratio: float = K_RATIO) -> JInterval:
    """Maximal integer interval ``J = [C, D]`` around 0 with small Birkhoff difference.

    ``K`` is the longest run inside ``J`` where the difference exceeds
    ``separation``; ``cocy_pass`` is ``|K| >= |J| / ratio``.  An endpoint at the
    horizon is censored.
    """
    if norm_int(x.value - y.value) >= CLOSE:
        raise NotClose("base points are not within 1e-2")
    nf, df = _first_exceed(fl, x, y, horizon, threshold, True)
    nb, db = _first_exceed(fl, x, y, horizon, threshold, False)
    d_end = (nf - 1) if nf is not None else horizon
    c_end = -(nb - 1) if nb is not None else -horizon
    # differences over J in increasing n
    vals = np.concatenate([db[1:-c_end + 1][::-1], df[:d_end + 1]])
    big = np.abs(vals) > separation
    k = None
    if big.any():
        edges = np.diff(np.concatenate([[0], big.astype(np.int8), [0]]))
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1) - 1
        lens = ends - starts + 1
        i = int(np.argmax(lens))
        k = (int(starts[i]) + c_end, int(ends[i]) + c_end)
    jlen = d_end - c_end + 1
    klen = 0 if k is None else k[1] - k[0] + 1
    censored = nf is None or nb is None
    return JInterval(c_end, d_end, nb is None, nf is None, k, (not censored) and klen >= jlen / ratio)


# -- pair generation -------------------------------------------------------------------


# the literal windows of radius 1/(r omega_r) cover the whole circle at any
# feasible r; radii are shrunk by this factor (see README)
WINDOW_SCALE = 0.1


def in_singular_window(fl: SpecialFlow, x: CirclePoint, r: int, scale: float = WINDOW_SCALE) -> bool:
    """Whether ``x`` lies in one of the ``2r/inf g + 1`` windows
    ``[-w - i alpha, w - i alpha]`` with ``w = scale / (r omega_r)``."""
    count = int(2 * r / fl.inf_g) + 1
    w = scale / (r * omega(r))
    blk = OrbitBlock(x.value, fl.alpha, count)
    return bool(np.any(blk.norms() <= w))


@dataclass
class PairSample:
    p: FlowPoint
    q: FlowPoint
    distance: float
    draws: int


def transverse_pair(fl: SpecialFlow, gen: np.random.Generator, d_range=(1e-8, 1e-3), *,
                    window_r: int | None = 1000, window_scale: float = WINDOW_SCALE,
                    max_draws: int = 100000) -> PairSample:
    """Pair ``(x, s), (x + d, s)`` with ``d`` log-uniform and ``s`` below both roofs."""
    lo, hi = math.log(d_range[0]), math.log(d_range[1])
    for draw in range(1, max_draws + 1):
        limbs = random_limbs(gen, 1)
        xv = sum(int(limbs[k, 0]) << (30 * k) for k in range(4))
        d = math.exp(gen.uniform(lo, hi))
        u = gen.random()
        x = CirclePoint(xv)
        y = CirclePoint((xv + int(d * ONE)) & MASK)
        if window_r is not None and (in_singular_window(fl, x, window_r, window_scale)
                                     or in_singular_window(fl, y, window_r, window_scale)):
            continue
        s = u * min(fl.g(x), fl.g(y))
        return PairSample(FlowPoint(x, s), FlowPoint(y, s), norm_int(y.value - x.value), draw)
    raise RuntimeError("no admissible pair found")


def sample_pairs(fl: SpecialFlow, n: int, seed: int, d_range=(1e-8, 1e-3), *, window_r=1000,
                 window_scale: float = WINDOW_SCALE, workers: int = 1,
                 stream_offset: int = 1 << 32) -> list[PairSample]:
    return pmap(lambda i: transverse_pair(fl, stream(seed, stream_offset + i), d_range, window_r=window_r,
                                          window_scale=window_scale),
                range(n), workers)


# -- PD statistics -----------------------------------------------------------------------


@dataclass
class PDReport:
    pair_id: int
    distance: float
    i_interval: tuple
    i_censored: bool
    j_interval: tuple
    j_censored: bool
    k_interval: tuple | None
    separated_fraction: float
    separated_pass: bool
    cocy_pass: bool

    def row(self) -> dict:
        return {
            "pair": self.pair_id, "distance": self.distance,
            "t_minus": self.i_interval[0], "t_plus": self.i_interval[1], "i_censored": int(self.i_censored),
            "j_c": self.j_interval[0], "j_d": self.j_interval[1], "j_censored": int(self.j_censored),
            "k_c": "" if self.k_interval is None else self.k_interval[0],
            "k_d": "" if self.k_interval is None else self.k_interval[1],
            "separated_fraction": self.separated_fraction,
            "separated_pass": int(self.separated_pass), "cocy_pass": int(self.cocy_pass),
        }


def default_c0(fl: SpecialFlow) -> float:
    return 1e-4 * min(fl.inf_g, float(fl.rot.alpha))


def pd_statistics(fl: SpecialFlow, pairs: list[PairSample], c0: float | None = None, c1: float = 1e-4, *,
                  horizon: float = 1e6, j_horizon: int = 10 ** 6, method: str = "exact", step: float = 1e-2,
                  workers: int = 1) -> list[PDReport]:
    if c0 is None:
        c0 = default_c0(fl)

    def one(i):
        pr = pairs[i]
        iv, seg = divergence_interval_I(fl, pr.p, pr.q, horizon, method=method, step=step)
        frac = separated_fraction(seg, iv, c0, method=method, step=step)
        jv = divergence_interval_J(fl, pr.p.x, pr.q.x, j_horizon)
        return PDReport(i, pr.distance, (iv.t_minus, iv.t_plus), iv.censored, (jv.c, jv.d), jv.censored,
                        jv.k, frac, frac > c1, jv.cocy_pass)

    return pmap(one, range(len(pairs)), workers)


# -- the J-length band check -----------------------------------------------------------


def band_bounds(k: int) -> tuple[float, float]:
    lo = omega(k + 1) ** 2 / ((k + 1) * math.log(k + 1))
    hi = omega(k) ** 2 / (k * math.log(k))
    return lo, hi


@dataclass
class BandResult:
    k: int
    distance: float
    j_length: int
    bound: float
    censored: bool
    holds: bool


def band_check(fl: SpecialFlow, k: int, n_pairs: int, seed: int, *, workers: int = 1,
               stream_offset: int = 1 << 40) -> list[BandResult]:
    """``|J| < k omega_k**3`` for pairs at distance in the band below ``omega_k**2/(k log k)``.

    The horizon sits just past the bound, so a censored pair counts as a violation.
    """
    lo, hi = band_bounds(k)
    bound = k * omega(k) ** 3
    horizon = math.ceil(bound) + 1

    def one(i):
        gen = stream(seed, stream_offset + k * 1000 + i)
        while True:
            limbs = random_limbs(gen, 1)
            xv = sum(int(limbs[j, 0]) << (30 * j) for j in range(4))
            d = math.exp(gen.uniform(math.log(lo), math.log(hi)))
            dv = max(int(d * ONE), 1)
            if not (lo <= dv / ONE < hi):
                continue
            x, y = CirclePoint(xv), CirclePoint((xv + dv) & MASK)
            try:
                jv = divergence_interval_J(fl, x, y, horizon)
            except Exception as exc:  # orbit met the clip window; redraw
                from .errors import OrbitHitsSingularity

                if isinstance(exc, OrbitHitsSingularity):
                    continue
                raise
            length = jv.length
            return BandResult(k, dv / ONE, length, bound, jv.censored, (not jv.censored) and length < bound)

    return pmap(one, range(n_pairs), workers)


# -- matching profiles ---------------------------------------------------------------------


@dataclass
class MatchProfile:
    j_index: int | None
    measure: float


@dataclass
class MatchReport:
    profiles: list
    close_time: float
    horizon: float
    shape_ok: bool
    label: str = "unrestricted window (no good-set restriction)"


def dyadic_index(d1: float) -> int | None:
    """``j`` with ``2**-(j+1) < d1 <= 2**-j``; ``None`` for ``d1 = 0``."""
    if d1 <= 0:
        return None
    mant, e = math.frexp(d1)
    return 1 - e if mant == 0.5 else -e


def match_profile(fl: SpecialFlow, p: FlowPoint, q: FlowPoint, R: float, m: int, *,
                  method: str = "exact", step: float | None = None) -> MatchReport:
    """Time spent in ``[0, R]`` with ``d^f < 2/m`` split by the dyadic scale of ``d_1``."""
    seg = pair_segments(fl, p, q, 0.0, R)
    if method == "grid":
        step = step or fl.inf_g / 10
        ts = np.arange(0, math.ceil(R / step)) * step
        idx = np.clip(np.searchsorted(seg.starts, ts, side="right") - 1, 0, seg.d.size - 1)
        weights = np.minimum(step, R - ts)  # last cell stops at R
        d, d1 = seg.d[idx], seg.d1[idx]
    else:
        weights, d, d1 = seg.lengths, seg.d, seg.d1
    close = d < 2.0 / m
    buckets: dict = {}
    for w, v in zip(weights[close], d1[close]):
        j = dyadic_index(float(v))
        buckets[j] = buckets.get(j, 0.0) + float(w)
    keys = sorted((k for k in buckets if k is not None))
    profiles = [MatchProfile(j, buckets[j]) for j in keys]
    if None in buckets:
        profiles.append(MatchProfile(None, buckets[None]))
    total = float(np.sum(weights[close]))
    shape = all(pr.measure <= R / pr.j_index ** 2 for pr in profiles if pr.j_index)
    return MatchReport(profiles, total, R, shape)


# -- derivative occupancy ---------------------------------------------------------------


@dataclass
class OccupancyReport:
    T: float
    occupied_fraction: float
    zero_fraction: float
    grid_points: int
    p_gamma: float
    bound_fraction: float = 0.0
    v_complement: dict = field(default_factory=dict)


def _log_threshold(n: np.ndarray, expo: float, p_gamma: float) -> np.ndarray:
    """``log(|n|**expo / log(|n|)**p_gamma)``; ``+inf`` where ``log |n| <= 1`` makes it blow up."""
    an = np.abs(n).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = np.log(np.log(an))
        out = expo * np.log(an) - p_gamma * ll
    out[an < 2] = np.inf
    return out


def default_p_gamma(gamma: float) -> float:
    return 100.0 / gamma + 1.0


def occupancy_W(fl: SpecialFlow, p: FlowPoint, T: float, p_gamma: float | None = None, *,
                step: float = 0.1) -> OccupancyReport:
    """Fraction of grid times in ``[-T, T]`` at which the derivative sum along the
    flow is at least ``|N|**(1+gamma) / log(|N|)**p_gamma``.

    Times with ``N = 0`` are excluded and reported as ``zero_fraction``.
    """
    gam = fl.roof.gamma
    if p_gamma is None:
        p_gamma = default_p_gamma(gam)
    ts = np.arange(-math.floor(T / step), math.floor(T / step) + 1) * step
    h = p.s + ts
    back = fl.steps_for(-float(h[0]))
    fwd = fl.forward_steps(p.x, float(h[-1]))
    w = fl.window_steps(p.x, back, fwd)
    n = w.index_at(h)
    d_f = compensated_cumsum(fl._terms(p.x, 0, fwd, order=1))
    d_b = -compensated_cumsum(fl._terms(p.x, -back, back, order=1)[::-1])
    dsum = np.concatenate([d_b[:0:-1], d_f])
    deriv = dsum[n + back]
    nz = n != 0
    with np.errstate(divide="ignore"):
        logd = np.log(np.abs(deriv))
    ok = logd >= _log_threshold(n, 1.0 + gam, p_gamma)
    total = int(nz.sum())
    occ = float(np.sum(ok & nz) / total) if total else 1.0
    bound = 1.0 - math.log(T) ** -3 if T > math.e else 0.0
    return OccupancyReport(T, occ, float(1 - nz.mean()), int(ts.size), p_gamma, bound)


@dataclass
class VComplement:
    n: int
    fraction: float
    sigma: float
    samples: int
    exponent: str


def v_complement_measure(fl: SpecialFlow, n: int, points: list[FlowPoint], p_gamma: float | None = None, *,
                         exponent: str = "1+gamma", absolute: bool = True) -> VComplement:
    """Fraction of sampled points whose base derivative sum misses the ``V_n`` threshold.

    ``exponent`` selects ``n**(1+gamma)`` (default) or ``n**(2-gamma)``; the
    derivative enters in absolute value unless ``absolute`` is false.
    """
    if n < 10:
        raise ValueError("n must be at least 10")
    gam = fl.roof.gamma
    if p_gamma is None:
        p_gamma = default_p_gamma(gam)
    expo = 1.0 + gam if exponent == "1+gamma" else 2.0 - gam
    thr = expo * math.log(n) - p_gamma * math.log(math.log(n))
    miss = 0
    for pt in points:
        terms = fl._terms(pt.x, 0, n, order=1)
        val = math.fsum(terms.tolist())
        if absolute:
            val = abs(val)
        if val <= 0 or math.log(val) < thr:
            miss += 1
    frac = miss / len(points)
    sigma = math.sqrt(max(frac * (1 - frac), 0.25 / len(points)) / len(points))
    return VComplement(n, frac, sigma, len(points), exponent)
