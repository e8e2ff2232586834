"""Special flow over a rotation under the normalised roof.

A point ``(x, s)`` rises at unit speed and jumps ``(x, g(x)) -> (x + alpha, 0)``.
Positions are found from the partial sums ``S_N(x)`` of the roof along the
orbit: the flow at time ``t`` sits above ``x + N alpha`` where
``S_N <= s + t < S_{N+1}``.  Partial sums always start at the base point, so a
sampled orbit code is bit-identical to flowing from scratch to every sample
time.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .circle import MASK, ONE, CirclePoint, OrbitBlock, norm_int
from .errors import CodeMismatch, OrbitHitsSingularity
from .roof import RoofSpec, eval_roof
from .rotation import RotationNumber
from .summation import compensated_cumsum

CEILING = 0xFFFFFFFF


@dataclass(frozen=True)
class FlowPoint:
    x: CirclePoint
    s: float


@dataclass(frozen=True)
class PartitionSpec:
    m: int

    def __post_init__(self):
        if self.m < 2 or self.m >= 1 << 16:
            raise ValueError("partition index m must lie in [2, 65535]")

    @property
    def side(self) -> float:
        return 1.0 / self.m

    @property
    def threshold(self) -> float:
        return math.log(self.m)

    @property
    def rows(self) -> int:
        return math.ceil(self.m * math.log(self.m))


def atom_id(i: int, j: int) -> int:
    return (i << 16) | j


def decode_atom(a: int):
    """``None`` for the ceiling atom, else ``(i, j)``."""
    if a == CEILING:
        return None
    return a >> 16, a & 0xFFFF


@dataclass(frozen=True, eq=True)
class OrbitCode:
    symbols: np.ndarray  # uint32 atom ids
    r: float
    delta: float
    m: int
    origin: FlowPoint

    def __eq__(self, other):
        if not isinstance(other, OrbitCode):
            return NotImplemented
        return (self.r == other.r and self.delta == other.delta and self.m == other.m
                and self.origin == other.origin and np.array_equal(self.symbols, other.symbols))

    def __hash__(self):
        return hash((self.r, self.delta, self.m, self.origin, self.symbols.tobytes()))

    def __len__(self):
        return int(self.symbols.size)

    def prefix(self, r: float) -> OrbitCode:
        """Code of the same orbit over the shorter duration ``r``."""
        n = code_length(r, self.delta)
        if n > len(self):
            raise ValueError("prefix longer than the code")
        return OrbitCode(self.symbols[:n], r, self.delta, self.m, self.origin)


def code_length(r: float, delta: float) -> int:
    n = math.ceil(r / delta)
    return max(n, 1)


def hamming(c1: OrbitCode, c2: OrbitCode) -> float:
    if c1.r != c2.r or c1.delta != c2.delta or c1.m != c2.m:
        raise CodeMismatch("codes differ in (r, delta, m)")
    return float(np.count_nonzero(c1.symbols != c2.symbols)) / len(c1)


def rho_metric(p: FlowPoint, q: FlowPoint) -> float:
    return norm_int(p.x.value - q.x.value) + abs(p.s - q.s)


@dataclass
class OrbitWindow:
    """Partial sums ``S_N`` for ``N = lo .. hi+1`` and roof terms for ``N = lo .. hi``."""

    x: CirclePoint
    lo: int
    sums: np.ndarray
    terms: np.ndarray

    @property
    def hi(self) -> int:
        return self.lo + self.terms.size - 1

    def index_at(self, h):
        """``N`` with ``S_N <= h < S_{N+1}`` (vectorised)."""
        return np.searchsorted(self.sums, h, side="right") - 1 + self.lo


class SpecialFlow:
    """Suspension of the rotation ``rot`` under the normalised roof of ``roof``."""

    def __init__(self, rot: RotationNumber, roof: RoofSpec):
        self.rot = rot
        self.roof = roof
        self.alpha = rot.alpha.value
        self.inf_g = roof.inf

    def g(self, x: CirclePoint) -> float:
        return eval_roof(self.roof, x)

    # -- orbit data ----------------------------------------------------------

    def _terms(self, x: CirclePoint, start: int, count: int, order: int = 0) -> np.ndarray:
        blk = OrbitBlock((x.value + start * self.alpha) & MASK, self.alpha, count)
        bad = blk.near_zero()
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise OrbitHitsSingularity(start + j, float(blk.norms()[j]))
        return self.roof.values(blk.u, blk.v, order)

    def steps_for(self, height: float) -> int:
        """Number of roof terms whose partial sum surely exceeds ``height``."""
        return int(max(height, 0.0) / self.inf_g) + 2

    def forward_steps(self, x: CirclePoint, height: float) -> int:
        """Like :meth:`steps_for` for the orbit of ``x``, using ``S_N >= g(x) + (N-1) inf g``.

        Matters for points deep in a cusp, where ``g(x)`` alone is huge.
        """
        return self.steps_for(height - self.g(x)) + 1

    def window(self, x: CirclePoint, h_lo: float, h_hi: float) -> OrbitWindow:
        """Partial sums covering every height in ``[h_lo, h_hi]``."""
        fwd = self.forward_steps(x, h_hi)
        back = self.steps_for(-h_lo) if h_lo < 0 else 0
        return self.window_steps(x, back, fwd)

    def window_steps(self, x: CirclePoint, back: int, fwd: int) -> OrbitWindow:
        ft = self._terms(x, 0, fwd) if fwd > 0 else np.zeros(0)
        fs = compensated_cumsum(ft)
        if back > 0:
            bt = self._terms(x, -back, back)  # g(x_{-back}) .. g(x_{-1})
            bs = -compensated_cumsum(bt[::-1])  # S_0, S_{-1}, ..., S_{-back}
            sums = np.concatenate([bs[:0:-1], fs])
            terms = np.concatenate([bt, ft])
        else:
            sums, terms = fs, ft
        return OrbitWindow(x, -back, sums, terms)

    # -- the flow ------------------------------------------------------------

    def flow(self, p: FlowPoint, t: float) -> tuple[FlowPoint, int]:
        h = p.s + t
        if 0.0 <= h:
            gx = self.g(p.x)
            if h < gx:
                return FlowPoint(p.x, h), 0
        w = self.window(p.x, min(h, 0.0), max(h, 0.0))
        n = int(w.index_at(h))
        k = n - w.lo
        s = h - w.sums[k]
        gx = w.terms[k]
        if s >= gx:
            s = math.nextafter(gx, 0.0)
        if s < 0.0:
            s = 0.0
        return FlowPoint(p.x.rotate(self.rot.alpha, n), float(s)), n

    def d_pseudo_metric(self, p: FlowPoint, q: FlowPoint) -> float:
        return self.d_branches(p, q)[0]

    def d_branches(self, p: FlowPoint, q: FlowPoint) -> tuple[float, float]:
        """``(d^f, d_1)`` where ``d_1`` is the circle part of the minimising branch."""
        diff = p.x.value - q.x.value
        b = [
            (norm_int(diff), abs(p.s - q.s)),
            (norm_int(diff + self.alpha), abs(self.g(p.x) - p.s + q.s)),
            (norm_int(diff - self.alpha), abs(self.g(q.x) - q.s + p.s)),
        ]
        best = min(b, key=lambda t: t[0] + t[1])
        return best[0] + best[1], best[0]

    # -- partition and coding ------------------------------------------------

    def atom_of(self, spec: PartitionSpec, p: FlowPoint) -> int:
        if self.g(p.x) >= spec.threshold:
            return CEILING
        i = (p.x.value * spec.m) >> 120
        j = math.floor(p.s * spec.m)
        return atom_id(i, j)

    def encode_orbit(self, p: FlowPoint, r: float, spec: PartitionSpec, delta: float) -> OrbitCode:
        if delta <= 0:
            raise ValueError("delta must be positive")
        n = code_length(r, delta)
        k = np.arange(n, dtype=np.float64)
        h = p.s + k * delta
        w = self.window(p.x, 0.0, float(h[-1]))
        idx = w.index_at(h)
        heights = h - w.sums[idx]
        gvals = w.terms[idx]
        heights = np.minimum(heights, np.nextafter(gvals, 0.0))
        heights = np.maximum(heights, 0.0)
        blk = OrbitBlock(p.x.value, self.alpha, 0, indices=idx)
        cols = blk.scaled_floor(spec.m)
        rows = np.floor(heights * spec.m).astype(np.int64)
        sym = ((cols << 16) | rows).astype(np.uint32)
        sym[gvals >= spec.threshold] = CEILING
        return OrbitCode(sym, float(r), float(delta), spec.m, p)

    def encode_naive(self, p: FlowPoint, r: float, spec: PartitionSpec, delta: float) -> OrbitCode:
        """Reference coding: one from-scratch flow per sample time."""
        n = code_length(r, delta)
        sym = np.empty(n, dtype=np.uint32)
        for k in range(n):
            q, _ = self.flow(p, float(np.float64(k) * delta))
            sym[k] = self.atom_of(spec, q)
        return OrbitCode(sym, float(r), float(delta), spec.m, p)


# -- pairs of orbits -----------------------------------------------------------


@dataclass
class PairSegments:
    """``d^f`` and ``d_1`` between two flowing points, constant on each segment."""

    starts: np.ndarray
    ends: np.ndarray
    d: np.ndarray
    d1: np.ndarray
    t_lo: float
    t_hi: float

    def value_at(self, t):
        i = np.searchsorted(self.starts, t, side="right") - 1
        return self.d[np.clip(i, 0, self.d.size - 1)]

    @property
    def lengths(self):
        return self.ends - self.starts


def pair_segments(fl: SpecialFlow, p: FlowPoint, q: FlowPoint, t_lo: float, t_hi: float) -> PairSegments:
    """Piecewise-constant ``d^f(T_t p, T_t q)`` for ``t`` in ``[t_lo, t_hi]``.

    Both heights grow at unit speed, so the height difference and every
    branch of ``d^f`` only change when one of the points crosses the roof.
    """
    steps_f = max(fl.forward_steps(p.x, p.s + t_hi), fl.forward_steps(q.x, q.s + t_hi))
    steps_b = max(fl.steps_for(-(p.s + t_lo)), fl.steps_for(-(q.s + t_lo))) if t_lo < 0 else 0
    wp = fl.window_steps(p.x, steps_b, steps_f)
    wq = fl.window_steps(q.x, steps_b, steps_f)
    # partial sums of the termwise difference keep Birkhoff differences accurate
    diff_f = compensated_cumsum(wp.terms[steps_b:] - wq.terms[steps_b:])
    if steps_b:
        diff_b = -compensated_cumsum((wp.terms[:steps_b] - wq.terms[:steps_b])[::-1])
        dsum = np.concatenate([diff_b[:0:-1], diff_f])
    else:
        dsum = diff_f
    lo = wp.lo
    # crossing times of each point form a sorted run; a stable merge of the two
    # runs gives the segment starts and the running index of each point
    tp = wp.sums - p.s
    tq = wq.sums - q.s
    tp = tp[(tp > t_lo) & (tp < t_hi)]
    tq = tq[(tq > t_lo) & (tq < t_hi)]
    times = np.concatenate([tp, tq])
    order = np.argsort(times, kind="stable")
    from_p = order < tp.size
    starts = np.concatenate([[t_lo], times[order]])
    ends = np.append(starts[1:], t_hi)
    n0 = int(wp.index_at(p.s + t_lo))
    m0 = int(wq.index_at(q.s + t_lo))
    n = n0 + np.concatenate([[0], np.cumsum(from_p)])
    mm = m0 + np.concatenate([[0], np.cumsum(~from_p)])
    # S^p_N - S^q_M through the difference sums at the smaller index
    small = np.minimum(n, mm)
    gap = dsum[small - lo] + (wp.sums[n - lo] - wp.sums[small - lo]) - (wq.sums[mm - lo] - wq.sums[small - lo])
    ds = (p.s - q.s) - gap
    k = n - mm
    base = p.x.value - q.x.value
    alpha = fl.alpha

    uk, inv = np.unique(k, return_inverse=True)

    def circ(shift):
        table = np.array([norm_int(base + (int(kk) + shift) * alpha) for kk in uk])
        return table[inv]

    c0, c1, c2 = circ(0), circ(1), circ(-1)
    b0 = c0 + np.abs(ds)
    b1 = c1 + np.abs(wp.terms[n - lo] - ds)
    b2 = c2 + np.abs(wq.terms[mm - lo] + ds)
    stack = np.vstack([b0, b1, b2])
    arg = np.argmin(stack, axis=0)
    d = stack[arg, np.arange(arg.size)]
    d1 = np.choose(arg, [c0, c1, c2])
    return PairSegments(starts, ends, d, d1, t_lo, t_hi)


# -- binary cache records ----------------------------------------------------

MAGIC = b"SFOC"
VERSION = 1
_HEADER = struct.Struct("<4sH16s16sIdd16sdQ32s")


def encode_record(code: OrbitCode, alpha_digest: str, roof_digest: str) -> bytes:
    import hashlib

    payload = code.symbols.astype("<u4").tobytes()
    head = _HEADER.pack(
        MAGIC, VERSION, bytes.fromhex(alpha_digest[:32]), bytes.fromhex(roof_digest[:32]),
        code.m, code.delta, code.r, code.origin.x.to_bytes(), code.origin.s,
        len(code), hashlib.sha256(payload).digest(),
    )
    return head + payload


def decode_record(raw: bytes, alpha_digest: str | None = None, roof_digest: str | None = None) -> OrbitCode:
    import hashlib

    if len(raw) < _HEADER.size:
        raise CodeMismatch("truncated record")
    magic, ver, ad, rd, m, delta, r, ox, os_, n, digest = _HEADER.unpack_from(raw)
    if magic != MAGIC or ver != VERSION:
        raise CodeMismatch("bad record header")
    if alpha_digest is not None and ad != bytes.fromhex(alpha_digest[:32]):
        raise CodeMismatch("alpha digest differs")
    if roof_digest is not None and rd != bytes.fromhex(roof_digest[:32]):
        raise CodeMismatch("roof digest differs")
    payload = raw[_HEADER.size:]
    if len(payload) != 4 * n or hashlib.sha256(payload).digest() != digest:
        raise CodeMismatch("payload digest mismatch")
    sym = np.frombuffer(payload, dtype="<u4").astype(np.uint32)
    return OrbitCode(sym, r, delta, m, FlowPoint(CirclePoint.from_bytes(ox), os_))
