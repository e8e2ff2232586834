"""The six experiment kinds behind ``specflow run``.

Each experiment returns an :class:`ExperimentResult`; writing files is left
to :func:`write_outputs` so results can be compared in memory as well.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cache import CodeCache
from .circle import CirclePoint, from_limbs, to_limbs
from .config import ExperimentConfig
from .divergence import (band_check, default_c0, match_profile, occupancy_W, pd_statistics, sample_pairs,
                         v_complement_measure)
from .entropy import (SampleInfo, estimate_cover, fit_exponent, mismatch_counts, rejection_cap,
                      sample_flow_measure)
from .flow import FlowPoint, PartitionSpec, SpecialFlow
from .parallel import pmap
from .rng import random_limbs, stream
from .roof import RoofKind, RoofSpec, check_log_derivative_growth, derivative_growth
from .rotation import RotationNumber, classify_diophantine, parse_alpha


@dataclass
class Check:
    name: str
    passed: bool
    asserted: bool
    detail: str = ""


@dataclass
class ExperimentResult:
    kind: str
    header: list
    rows: list
    summary: dict
    checks: list = field(default_factory=list)
    extra_tables: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def failed_assertions(self) -> list:
        return [c for c in self.checks if c.asserted and not c.passed]


class Stage:
    def __init__(self, timings: dict, name: str):
        self.timings, self.name = timings, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.timings[self.name] = round(time.perf_counter() - self.t0, 6)


def _alpha(cfg) -> RotationNumber:
    return parse_alpha(cfg.get("alpha", "value"), cfg.getint("alpha", "depth"))


def _roof(cfg) -> RoofSpec:
    return RoofSpec.from_config(cfg.values["roof"])


def uniform_points(seed: int, n: int, offset: int = 1 << 48) -> list[CirclePoint]:
    out = []
    for i in range(n):
        limbs = random_limbs(stream(seed, offset + i), 1)
        out.append(CirclePoint(sum(int(limbs[k, 0]) << (30 * k) for k in range(4))))
    return out


# -- cf-classify -------------------------------------------------------------------


def run_cf_classify(cfg: ExperimentConfig, cache: CodeCache, timings: dict) -> ExperimentResult:
    with Stage(timings, "expand"):
        rot = _alpha(cfg)
        rep = classify_diophantine(rot, cfg.getfloat("classify", "c_const"))
    ks = set(rep.k_alpha)
    rows = [[k, rot.partial_quotients[k - 1] if k else "", rot.p[k], rot.q[k], int(k in ks)]
            for k in range(rot.depth + 1)]
    return ExperimentResult("cf-classify", ["k", "a_k", "p_k", "q_k", "in_K_alpha"], rows,
                            {"report": rep.to_json(), "tested_range": [3, rot.depth - 1]})


# -- birkhoff-growth ---------------------------------------------------------------


def run_birkhoff_growth(cfg, cache, timings) -> ExperimentResult:
    rot, roof = _alpha(cfg), _roof(cfg)
    seed, workers = cfg.getint("experiment", "seed"), cfg.getint("experiment", "workers")
    xs = uniform_points(seed, cfg.getint("birkhoff", "samples"))
    qmin, qmax = cfg.getfloat("birkhoff", "q_min"), cfg.getfloat("birkhoff", "q_max")
    idx = [n for n, q in enumerate(rot.q) if qmin <= q <= qmax and (n == 0 or rot.q[n - 1] != q)]
    if len(idx) < 2:
        raise ValueError("fewer than two denominators in [q_min, q_max]")
    with Stage(timings, "sums"):
        if roof.kind is RoofKind.LOG_ASYM:
            rows_ = pmap(lambda n: check_log_derivative_growth(roof, rot, xs, [n])[0], idx, workers)
            statistic = "|f'^(q)| / (q log q), raw roof"
        else:
            rows_ = pmap(lambda n: derivative_growth(roof, rot, xs, [n])[0], idx, workers)
            statistic = "|f'^(q)|, normalised roof"
    q = np.array([r.q for r in rows_], dtype=float)
    med = np.array([r.median for r in rows_])
    slope, intercept = np.polyfit(np.log(q), np.log(med), 1)
    checks = []
    summary = {"statistic": statistic, "q": q.tolist(), "median": med.tolist(), "slope": float(slope),
               "intercept": float(intercept), "plot": "growth"}
    if roof.kind is RoofKind.POWER:
        expected = 1.0 + roof.gamma
        summary["expected_slope"] = expected
        checks.append(Check("slope within 0.10 of 1+gamma", abs(slope - expected) <= 0.10, True,
                            f"slope={slope:.4f} expected={expected:.4f}"))
    elif roof.asymmetric:
        ok = bool(np.all((med >= 0.3) & (med <= 3.0)))
        checks.append(Check("median ratio in [0.3, 3.0]", ok, True, f"range=[{med.min():.4f}, {med.max():.4f}]"))
    else:
        decay = float(med[0] / med[-1])
        summary["decay"] = decay
        checks.append(Check("symmetric control decays by 5x", decay >= 5.0, True, f"decay={decay:.3f}"))
    rows = [[r.n_index, r.q, r.median, r.q1, r.q3, r.n_samples, r.excluded] for r in rows_]
    return ExperimentResult("birkhoff-growth", ["n", "q_n", "median", "q1", "q3", "samples", "excluded"], rows,
                            summary, checks)


# -- entropy-scan --------------------------------------------------------------------


_METHODS = ("rejection", "inverse")


def cached_sample(fl: SpecialFlow, n: int, seed: int, method: str, workers: int, cache: CodeCache):
    """:func:`sample_flow_measure` through the matrix cache.

    Rows hold the four 30-bit limbs of ``x`` and the bits of ``s``; a final
    row carries the method and the acceptance rate.
    """
    key = hashlib.sha256(f"sample|{fl.rot.digest()}|{fl.roof.digest()}|{n}|{seed}|{method}".encode()).hexdigest()
    info_box = {}

    def compute():
        pts, info = sample_flow_measure(fl, n, seed, method=method, workers=workers)
        info_box["info"] = info
        rows = np.zeros((n + 1, 5), dtype=np.int64)
        for i, p in enumerate(pts):
            rows[i, :4] = to_limbs(p.x.value)
            rows[i, 4] = np.float64(p.s).view(np.int64)
        rows[n, 0] = _METHODS.index(info.method)
        rows[n, 1] = np.float64(info.acceptance).view(np.int64)
        return rows

    rows = cache.get_matrix(key, compute)
    pts = [FlowPoint(CirclePoint(from_limbs(r[:4].tolist())), float(r[4:5].view(np.float64)[0])) for r in rows[:n]]
    if "info" in info_box:
        return pts, info_box["info"]
    used = _METHODS[int(rows[n, 0])]
    cap, tail = rejection_cap(fl)
    acc = float(rows[n, 1:2].view(np.float64)[0])
    return pts, SampleInfo(used, cap, tail if used == "rejection" else 0.0, acc)


def entropy_curve(rot, roof, *, m: int, epsilon: float, beta: float, r_grid, delta: float | None,
                  samples: int, seed: int, workers: int = 1, sampler: str = "auto", cache: CodeCache | None = None,
                  timings: dict | None = None):
    """Greedy covering counts ``S(r)`` on one sample of orbits.  Returns ``(estimates, info, delta)``."""
    timings = {} if timings is None else timings
    cache = cache or CodeCache(None)
    fl = SpecialFlow(rot, roof)
    if delta is None:
        delta = fl.inf_g / 10
    spec = PartitionSpec(m)
    r_grid = sorted(float(r) for r in r_grid)
    if not r_grid:
        raise ValueError("empty r-grid")
    rmax = r_grid[-1]
    ad, rd = rot.digest(), roof.digest()
    with Stage(timings, "sample"):
        pts, info = cached_sample(fl, samples, seed, sampler, workers, cache)
    with Stage(timings, "encode"):
        codes = pmap(lambda p: cache.get_code(ad, rd, m, delta, rmax, p,
                                              lambda: fl.encode_orbit(p, rmax, spec, delta)), pts, workers)
    origin_hash = hashlib.sha256(b"".join(p.x.to_bytes() + np.float64(p.s).tobytes() for p in pts)).hexdigest()
    ests = []
    with Stage(timings, "cover"):
        for r in r_grid:
            cs = [c.prefix(r) for c in codes]
            key = hashlib.sha256(f"{ad}|{rd}|{m}|{delta!r}|{r!r}|{origin_hash}".encode()).hexdigest()
            counts = cache.get_matrix(key, lambda: mismatch_counts(np.vstack([c.symbols for c in cs])))
            dist = counts / len(cs[0])
            ests.append(estimate_cover(cs, epsilon, beta, dist=dist))
    return ests, info, delta


def run_entropy_scan(cfg, cache, timings) -> ExperimentResult:
    rot, roof = _alpha(cfg), _roof(cfg)
    eps, beta = cfg.getfloat("entropy", "epsilon"), cfg.getfloat("entropy", "beta")
    m, n = cfg.getint("entropy", "m"), cfg.getint("entropy", "samples")
    r_grid = cfg.getlist("entropy", "r_grid")
    if len(r_grid) < 3:
        raise ValueError("entropy-scan needs at least three r values")
    ests, info, delta = entropy_curve(
        rot, roof, m=m, epsilon=eps, beta=beta, r_grid=r_grid, delta=cfg.optional_float("entropy", "delta"),
        samples=n, seed=cfg.getint("experiment", "seed"), workers=cfg.getint("experiment", "workers"),
        sampler=cfg.get("entropy", "sampler"), cache=cache, timings=timings)
    pts = [(e.r, e.ball_count) for e in ests]
    scale = cfg.get("entropy", "scale")
    fit = fit_exponent(pts, scale)
    s = np.array([e.ball_count for e in ests], dtype=float)
    r = np.array([e.r for e in ests])
    mono = bool(np.all(np.diff(s) >= 0))
    sup = bool(np.all(np.diff(s / r) > 0))
    doubling = [s[i + 1] / s[i] for i in range(len(s) - 1) if r[i + 1] == 2 * r[i]]
    mean_doubling = float(np.mean(doubling)) if doubling else float("nan")
    checks = [
        Check("S(r) monotone", mono, True),
        Check("S(r)/r increasing", sup, True),
        Check("t_hat in [1.1, 1.9]", 1.1 <= fit.t_hat <= 1.9, False, f"t_hat={fit.t_hat:.4f}"),
        Check("mean S(2r)/S(r) >= 1.6", mean_doubling >= 1.6, False, f"mean={mean_doubling:.4f}"),
    ]
    summary = {
        "t_hat": fit.t_hat, "residual": fit.residual, "scale": fit.scale, "intercept": fit.intercept,
        "r_grid": fit.r_grid, "s_values": fit.s_values, "delta": delta, "m": m, "epsilon": eps, "beta": beta,
        "samples": n, "sampler": info.method, "cap": info.cap, "tail_mass": info.tail_mass,
        "label": _label(cfg), "plot": "entropy",
        "bias": "greedy count >= optimal sample cover; sample cover may understate the space cover for small N",
        "mean_doubling_ratio": mean_doubling,
    }
    rows = [[e.r, e.ball_count, e.epsilon, e.beta, e.m, e.sample_size] for e in ests]
    return ExperimentResult("entropy-scan", ["r", "S", "epsilon", "beta", "m", "N"], rows, summary, checks)


def _label(cfg) -> str:
    roof = cfg.values["roof"]
    if roof["kind"].lower() in ("power", "kochergin"):
        return f"alpha={cfg.get('alpha', 'value')} gamma={roof['gamma']}"
    return f"alpha={cfg.get('alpha', 'value')} log a={roof['a']} b={roof['b']}"


# -- pd-scan -----------------------------------------------------------------------------


def run_pd_scan(cfg, cache, timings) -> ExperimentResult:
    rot, roof = _alpha(cfg), _roof(cfg)
    fl = SpecialFlow(rot, roof)
    seed, workers = cfg.getint("experiment", "seed"), cfg.getint("experiment", "workers")
    c0 = cfg.optional_float("pd", "c0")
    c0 = default_c0(fl) if c0 is None else c0
    c1 = cfg.getfloat("pd", "c1")
    wr = cfg.get("pd", "window_r").strip().lower()
    with Stage(timings, "pairs"):
        pairs = sample_pairs(fl, cfg.getint("pd", "pairs"), seed, (cfg.getfloat("pd", "d_min"), cfg.getfloat("pd", "d_max")),
                             window_r=None if wr in ("none", "", "0") else int(float(wr)),
                             window_scale=cfg.getfloat("pd", "window_scale"), workers=workers)
    with Stage(timings, "scan"):
        reps = pd_statistics(fl, pairs, c0, c1, horizon=cfg.getfloat("pd", "horizon"),
                             j_horizon=cfg.getint("pd", "j_horizon"), method=cfg.get("pd", "method"),
                             step=cfg.getfloat("pd", "step"), workers=workers)
    j_ok = [r for r in reps if not r.j_censored]
    i_ok = [r for r in reps if not r.i_censored]
    cocy = sum(r.cocy_pass for r in j_ok) / len(j_ok) if j_ok else float("nan")
    sep = sum(r.separated_pass for r in i_ok) / len(i_ok) if i_ok else float("nan")
    checks = [Check("cocy_pass rate >= 0.8", cocy >= 0.8, True, f"rate={cocy:.4f} of {len(j_ok)}"),
              Check("separated rate >= 0.8", sep >= 0.8, True, f"rate={sep:.4f} of {len(i_ok)}")]
    summary = {"pairs": len(reps), "j_non_censored": len(j_ok), "i_non_censored": len(i_ok),
               "cocy_pass_rate": cocy, "separated_pass_rate": sep, "c0": c0, "c1": c1,
               "mean_draws_per_pair": float(np.mean([p.draws for p in pairs]))}
    extra = {}
    band_k = cfg.getlist("pd", "band_k", lambda v: int(float(v)))
    if band_k:
        band_rows = []
        with Stage(timings, "band"):
            for k in band_k:
                res = band_check(fl, k, cfg.getint("pd", "band_pairs"), seed, workers=workers)
                band_rows.extend([b.k, i, b.distance, b.j_length, b.bound, int(b.censored), int(b.holds)]
                                 for i, b in enumerate(res))
                ok = all(b.holds for b in res)
                checks.append(Check(f"|J| < k omega_k^3 for k={k}", ok, True))
        extra["band"] = (["k", "pair", "distance", "j_length", "bound", "censored", "holds"], band_rows)
    rows = [list(r.row().values()) for r in reps]
    header = list(reps[0].row().keys()) if reps else []
    return ExperimentResult("pd-scan", header, rows, summary, checks, extra)


# -- match-scan ------------------------------------------------------------------------------


def run_match_scan(cfg, cache, timings) -> ExperimentResult:
    rot, roof = _alpha(cfg), _roof(cfg)
    fl = SpecialFlow(rot, roof)
    seed, workers = cfg.getint("experiment", "seed"), cfg.getint("experiment", "workers")
    R, m = cfg.getfloat("match", "r"), cfg.getint("match", "m")
    pairs = sample_pairs(fl, cfg.getint("match", "pairs"), seed,
                         (cfg.getfloat("match", "d_min"), cfg.getfloat("match", "d_max")), window_r=None,
                         workers=workers, stream_offset=1 << 36)
    with Stage(timings, "profiles"):
        reps = pmap(lambda pr: match_profile(fl, pr.p, pr.q, R, m, method=cfg.get("match", "method")), pairs, workers)
    rows = []
    for i, rep in enumerate(reps):
        for prof in rep.profiles:
            rows.append([i, "inf" if prof.j_index is None else prof.j_index, prof.measure, rep.close_time])
    sums_ok = all(sum(p.measure for p in rep.profiles) <= R * (1 + 1e-12) for rep in reps)
    summary = {"pairs": len(reps), "R": R, "m": m, "label": reps[0].label if reps else "",
               "shape_fraction": float(np.mean([r.shape_ok for r in reps])) if reps else float("nan")}
    checks = [Check("bucket measures sum to at most R", sums_ok, True)]
    return ExperimentResult("match-scan", ["pair", "j", "measure", "close_time"], rows, summary, checks)


# -- occupancy-scan ----------------------------------------------------------------------------


def run_occupancy_scan(cfg, cache, timings) -> ExperimentResult:
    rot, roof = _alpha(cfg), _roof(cfg)
    if roof.kind is not RoofKind.POWER:
        raise ValueError("occupancy-scan needs a power roof")
    fl = SpecialFlow(rot, roof)
    seed, workers = cfg.getint("experiment", "seed"), cfg.getint("experiment", "workers")
    pg = cfg.optional_float("occupancy", "p_gamma")
    T, step = cfg.getfloat("occupancy", "t"), cfg.getfloat("occupancy", "step")
    with Stage(timings, "occupancy"):
        pts, _ = sample_flow_measure(fl, cfg.getint("occupancy", "samples"), seed, workers=workers)
        reps = pmap(lambda p: occupancy_W(fl, p, T, pg, step=step), pts, workers)
    with Stage(timings, "v_complement"):
        vpts, _ = sample_flow_measure(fl, cfg.getint("occupancy", "v_samples"), seed, workers=workers,
                                      stream_offset=1 << 44)
        ns = cfg.getlist("occupancy", "v_n", lambda v: int(float(v)))
        vres = pmap(lambda n: v_complement_measure(fl, n, vpts, pg, exponent=cfg.get("occupancy", "v_exponent")),
                    ns, workers)
    good = float(np.mean([r.occupied_fraction >= 0.9 for r in reps]))
    mono = all(vres[i + 1].fraction <= vres[i].fraction + 2 * math.hypot(vres[i].sigma, vres[i + 1].sigma)
               for i in range(len(vres) - 1))
    checks = [Check("occupied fraction >= 0.9 for 80% of samples", good >= 0.8, True, f"share={good:.3f}"),
              Check("V_n complement non-increasing within 2 sigma", mono, True)]
    summary = {"T": T, "p_gamma": reps[0].p_gamma if reps else pg, "share_ge_0.9": good,
               "bound_fraction": reps[0].bound_fraction if reps else None,
               "v_complement": {str(v.n): {"fraction": v.fraction, "sigma": v.sigma} for v in vres},
               "v_exponent": cfg.get("occupancy", "v_exponent")}
    rows = [[i, float(p.x), p.s, r.occupied_fraction, r.zero_fraction] for i, (p, r) in enumerate(zip(pts, reps))]
    extra = {"v_complement": (["n", "fraction", "sigma", "samples", "exponent"],
                              [[v.n, v.fraction, v.sigma, v.samples, v.exponent] for v in vres])}
    return ExperimentResult("occupancy-scan", ["sample", "x", "s", "occupied_fraction", "zero_fraction"], rows,
                            summary, checks, extra)


RUNNERS = {
    "cf-classify": run_cf_classify,
    "birkhoff-growth": run_birkhoff_growth,
    "entropy-scan": run_entropy_scan,
    "pd-scan": run_pd_scan,
    "match-scan": run_match_scan,
    "occupancy-scan": run_occupancy_scan,
}


def run_experiment(cfg: ExperimentConfig, cache: CodeCache | None = None) -> ExperimentResult:
    cache = cache or CodeCache(None)
    timings: dict = {}
    res = RUNNERS[cfg.get("experiment", "kind")](cfg, cache, timings)
    res.timings = timings
    return res


# -- output ---------------------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def summary_document(cfg: ExperimentConfig, res: ExperimentResult) -> dict:
    return _clean({
        "kind": res.kind,
        "config_digest": cfg.digest(),
        "seed": cfg.getint("experiment", "seed"),
        "config": cfg.semantic(),
        "results": res.summary,
        "checks": [{"name": c.name, "passed": bool(c.passed), "asserted": c.asserted, "detail": c.detail}
                   for c in res.checks],
    })


def write_outputs(cfg: ExperimentConfig, res: ExperimentResult, out_dir: str, cache: CodeCache) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    digest = cfg.digest()
    seed = cfg.getint("experiment", "seed")
    tables = {res.kind: (res.header, res.rows), **res.extra_tables}
    for name, (header, rows) in tables.items():
        path = os.path.join(out_dir, f"{name}.csv")
        text = csv_text(list(header) + ["config_digest", "seed"], [list(r) + [digest, seed] for r in rows])
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths[name] = path
    spath = os.path.join(out_dir, "summary.json")
    with open(spath, "w", encoding="utf-8") as fh:
        json.dump(summary_document(cfg, res), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["summary"] = spath
    manifest = {
        "config_digest": digest,
        "tool_version": __version__,
        "kind": res.kind,
        "wall_clock_seconds": res.timings,
        "cache": {"hits": cache.hits, "misses": cache.misses, "corrupt": cache.corrupt, "dir": cache.root},
        "files": sorted(os.path.basename(p) for p in paths.values()),
    }
    mpath = os.path.join(out_dir, "manifest.json")
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(_clean(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["manifest"] = mpath
    return paths
