"""Acceptance criteria 1-11.

Each test prints one ``CRITERION n PASS|FAIL`` line (visible under ``pytest -v``)
and then asserts the same verdict.  Runtime limits are part of the verdict.
Run directly with ``python3 tests/test_acceptance.py`` for the lines alone.
"""

import math
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from specflow.cache import CodeCache  # noqa: E402
from specflow.circle import CirclePoint, ONE  # noqa: E402
from specflow.config import ExperimentConfig  # noqa: E402
from specflow.divergence import band_check  # noqa: E402
from specflow.entropy import exact_cover_size, fit_exponent, greedy_cover, hamming_matrix  # noqa: E402
from specflow.errors import OrbitHitsSingularity  # noqa: E402
from specflow.experiments import entropy_curve, run_experiment, write_outputs  # noqa: E402
from specflow.flow import FlowPoint, OrbitCode, SpecialFlow  # noqa: E402
from specflow.roof import RoofSpec, birkhoff_sum, check_dk_bounds  # noqa: E402
from specflow.rotation import parse_alpha  # noqa: E402

GOLDEN = parse_alpha("golden")
SEED = 20240601


def report(n: int, passed: bool, detail: str, elapsed: float, limit: float | None, capsys=None) -> bool:
    ok = passed and (limit is None or elapsed < limit)
    budget = f" limit={limit:.0f}s" if limit else ""
    line = f"CRITERION {n:2d} {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s{budget}]"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


def _rng(k):
    return np.random.default_rng(SEED + k)


def _point(rng) -> CirclePoint:
    return CirclePoint((int(rng.integers(0, 1 << 60)) << 60 | int(rng.integers(0, 1 << 60))) % ONE)


def _cfg(text: str, **overrides) -> ExperimentConfig:
    cfg = ExperimentConfig.from_text(text)
    for k, v in overrides.items():
        cfg.override(f"{k}={v}")
    return cfg


# -- 1 ----------------------------------------------------------------------------------


def criterion_1(capsys=None):
    t0 = time.perf_counter()
    rng = _rng(1)
    roofs = [RoofSpec.log_asym(1, 2), RoofSpec.power(0.5)]
    worst, done, skipped = 0.0, 0, 0
    while done < 1000:
        spec = roofs[done % 2]
        x = _point(rng)
        m, n = (int(v) for v in rng.integers(-200, 201, 2))
        try:
            res = [birkhoff_sum(spec, GOLDEN, x, m + n), birkhoff_sum(spec, GOLDEN, x, m),
                   birkhoff_sum(spec, GOLDEN, x.rotate(GOLDEN.alpha, m), n)]
        except OrbitHitsSingularity:
            skipped += 1
            continue
        if min(r.min_visit_distance for r in res) < 1e-12:
            skipped += 1
            continue
        full, a, b = (r.value for r in res)
        worst = max(worst, abs(full - a - b) / (1 + abs(full)))
        done += 1
    el = time.perf_counter() - t0
    return report(1, worst <= 1e-9, f"cocycle max rel err {worst:.2e} over {done} cases (skipped {skipped})", el, 1.0,
                  capsys)


# -- 2 ----------------------------------------------------------------------------------


def criterion_2(capsys=None):
    t0 = time.perf_counter()
    rng = _rng(2)
    roofs = [RoofSpec.log_asym(1, 2), RoofSpec.power(0.5)]
    h = 1e-7
    worst, done = 0.0, 0
    while done < 100:
        spec = roofs[done % 2]
        n = int(rng.integers(1, 51))
        x = _point(rng)
        if any(x.rotate(GOLDEN.alpha, j).norm() < 1e-3 for j in range(n)):
            continue
        xp = CirclePoint((x.value + int(h * ONE)) % ONE)
        xm = CirclePoint((x.value - int(h * ONE)) % ONE)
        fd = (birkhoff_sum(spec, GOLDEN, xp, n).value - birkhoff_sum(spec, GOLDEN, xm, n).value) / (2 * h)
        d1 = birkhoff_sum(spec, GOLDEN, x, n, 1).value
        worst = max(worst, abs(fd - d1) / max(abs(d1), 1.0))
        done += 1
    el = time.perf_counter() - t0
    return report(2, worst <= 1e-3, f"finite-difference max rel err {worst:.2e} over {done} cases", el, 1.0, capsys)


# -- 3 ----------------------------------------------------------------------------------


def criterion_3(capsys=None):
    t0 = time.perf_counter()
    rng = _rng(3)
    spec = RoofSpec.power(0.5)
    failures, total = [], 0
    s_range = range(3, 17)  # q_3 = 3 is where the asymptotic range starts
    for _ in range(100):
        x = _point(rng)
        for s in s_range:
            rep = check_dk_bounds(spec, GOLDEN, x, GOLDEN.q[s], slack=8.0)
            total += 1
            failures.extend((s, c.name) for c in rep.checks if not c.passed)
    el = time.perf_counter() - t0
    return report(3, not failures, f"Denjoy-Koksma families on {total} (x, s) cases, failures={len(failures)}", el, 30.0,
                  capsys)


# -- 4, 5 -------------------------------------------------------------------------------

GROWTH = """\
[experiment]
kind = birkhoff-growth
seed = 20240601
[birkhoff]
samples = 100
q_min = 100
q_max = 100000
"""


def criterion_4(capsys=None):
    t0 = time.perf_counter()
    parts, ok = [], True
    for gam in (0.25, 0.5, 0.75):
        res = run_experiment(_cfg(GROWTH, **{"roof.kind": "power", "roof.gamma": gam}))
        slope = res.summary["slope"]
        good = abs(slope - (1 + gam)) <= 0.10
        ok &= good
        parts.append(f"gamma={gam}: slope={slope:.3f}")
    el = time.perf_counter() - t0
    return report(4, ok, "; ".join(parts), el, 300.0, capsys)


def criterion_5(capsys=None):
    t0 = time.perf_counter()
    asym = run_experiment(_cfg(GROWTH, **{"roof.kind": "log", "roof.a": 1, "roof.b": 2}))
    med = np.array(asym.summary["median"])
    band = bool(np.all((med >= 0.3) & (med <= 3.0)))
    sym = run_experiment(_cfg(GROWTH, **{"roof.kind": "log", "roof.a": 1, "roof.b": 1}))
    decay = sym.summary["decay"]
    el = time.perf_counter() - t0
    detail = (f"asymmetric medians in [{med.min():.3f}, {med.max():.3f}] band_ok={band}; "
              f"symmetric decay {decay:.2f}x (need >= 5)")
    return report(5, band and decay >= 5.0, detail, el, 300.0, capsys)


# -- 6 ----------------------------------------------------------------------------------


def _entropy(alpha):
    return entropy_curve(alpha, RoofSpec.power(0.5), m=4, epsilon=0.1, beta=1.0, r_grid=[50, 100, 200, 400, 800],
                         delta=None, samples=400, seed=SEED)


def criterion_6(capsys=None):
    t0 = time.perf_counter()
    ests, _, delta = _entropy(GOLDEN)
    s = np.array([e.ball_count for e in ests], dtype=float)
    r = np.array([e.r for e in ests])
    fit = fit_exponent(list(zip(r, s)), "power")
    mono = bool(np.all(np.diff(s) >= 0))
    superlinear = bool(np.all(np.diff(s / r) > 0))
    doubling = float(np.mean(s[1:] / s[:-1]))
    in_band = 1.1 <= fit.t_hat <= 1.9
    el = time.perf_counter() - t0
    warn = "" if in_band and doubling >= 1.6 else " (band/doubling outside target: warning)"
    detail = (f"S={s.astype(int).tolist()} t_hat={fit.t_hat:.3f} monotone={mono} S/r increasing={superlinear} "
              f"mean doubling={doubling:.3f}{warn}")
    return report(6, mono and superlinear, detail, el, 1200.0, capsys)


# -- 7, 8 -------------------------------------------------------------------------------

PD = """\
[experiment]
kind = pd-scan
seed = 20240601
[roof]
kind = log
a = 1
b = 2
[pd]
pairs = 200
d_min = 1e-8
d_max = 1e-3
"""


def criterion_7(capsys=None):
    t0 = time.perf_counter()
    res = run_experiment(_cfg(PD))
    sm = res.summary
    ok = sm["cocy_pass_rate"] >= 0.8 and sm["separated_pass_rate"] >= 0.8
    el = time.perf_counter() - t0
    detail = (f"cocy_pass {sm['cocy_pass_rate']:.3f} of {sm['j_non_censored']}, "
              f"separated {sm['separated_pass_rate']:.3f} of {sm['i_non_censored']} (c0={sm['c0']:.2e})")
    return report(7, ok, detail, el, 600.0, capsys)


def criterion_8(capsys=None):
    t0 = time.perf_counter()
    fl = SpecialFlow(GOLDEN, RoofSpec.log_asym(1, 2))
    parts, ok = [], True
    for k in (10 ** 3, 10 ** 4, 10 ** 5):
        res = band_check(fl, k, 100, SEED)
        held = all(b.holds for b in res)
        ok &= held
        parts.append(f"k={k}: max|J|={max(b.j_length for b in res)} bound={res[0].bound:.0f}")
    el = time.perf_counter() - t0
    return report(8, ok, "; ".join(parts), el, 300.0, capsys)


# -- 9 ----------------------------------------------------------------------------------

OCC = """\
[experiment]
kind = occupancy-scan
seed = 20240601
[roof]
kind = power
gamma = 0.5
[occupancy]
samples = 50
t = 10000
v_n = 100,1000,10000
v_samples = 1000
"""


def criterion_9(capsys=None):
    t0 = time.perf_counter()
    res = run_experiment(_cfg(OCC))
    ok = all(c.passed for c in res.checks)
    vc = res.summary["v_complement"]
    el = time.perf_counter() - t0
    detail = (f"share with occupied >= 0.9: {res.summary['share_ge_0.9']:.2f}; V_n^c fractions "
              + ", ".join(f"n={n}: {v['fraction']:.3f}" for n, v in vc.items()))
    return report(9, ok, detail, el, 600.0, capsys)


# -- 10 ---------------------------------------------------------------------------------


def criterion_10(capsys=None, golden_t=None):
    t0 = time.perf_counter()
    rng = _rng(10)
    bound = 1 + math.log(12)
    origin = FlowPoint(CirclePoint(1), 0.0)
    greedy_ok = True
    for _ in range(1000):
        n = int(rng.integers(2, 13))
        rows = rng.integers(0, 3, size=(n, 6))
        codes = [OrbitCode(r.astype(np.uint32), 1.0, 0.2, 4, origin) for r in rows]
        dist = hamming_matrix(codes)
        eps = float(rng.choice([0.2, 0.4, 0.6]))
        beta = float(rng.uniform(eps + 0.05, 1.0))
        g = len(greedy_cover(dist, eps, beta)[0])
        e = exact_cover_size(dist, eps, beta)
        greedy_ok &= e <= g <= bound * max(e, 1)
    fit_err = 0.0
    r = np.array([50.0, 100, 200, 400, 800])
    for t in (0.5, 1.0, 1.5, 2.5):
        fit_err = max(fit_err, abs(fit_exponent(list(zip(r, r ** t)), "power").t_hat - t),
                      abs(fit_exponent(list(zip(r, r * np.log(r) ** t)), "log").t_hat - t))
    # Liouville contrast is informational only
    if golden_t is None:
        ests, _, _ = _entropy(GOLDEN)
        golden_t = fit_exponent([(e.r, e.ball_count) for e in ests], "power").t_hat
    ests, _, _ = _entropy(parse_alpha("liouville"))
    liou_t = fit_exponent([(e.r, e.ball_count) for e in ests], "power").t_hat
    contrast = liou_t <= golden_t - 0.2
    el = time.perf_counter() - t0
    detail = (f"greedy within (1+ln 12)x on 1000 instances={greedy_ok}; fit error {fit_err:.1e}; "
              f"Liouville t_hat={liou_t:.3f} vs golden {golden_t:.3f} contrast={'yes' if contrast else 'no (warning)'}")
    return report(10, greedy_ok and fit_err <= 1e-6, detail, el, 300.0, capsys)


# -- 11 ---------------------------------------------------------------------------------

SMALL = {
    "cf-classify": {},
    "birkhoff-growth": {"birkhoff.samples": 10, "birkhoff.q_max": 5000},
    "entropy-scan": {"entropy.samples": 60, "entropy.r_grid": "25,50,100"},
    "pd-scan": {"roof.kind": "log", "roof.a": 1, "roof.b": 2, "pd.pairs": 12, "pd.band_k": 1000,
                "pd.band_pairs": 8},
    "match-scan": {"roof.kind": "log", "roof.a": 1, "roof.b": 2, "match.pairs": 6, "match.r": 300},
    "occupancy-scan": {"occupancy.samples": 8, "occupancy.t": 1000, "occupancy.v_n": "100,1000",
                       "occupancy.v_samples": 100},
}


def _run_bytes(kind, workers, out_dir):
    cfg = _cfg(f"[experiment]\nkind = {kind}\nseed = {SEED}\n", **SMALL[kind])
    cfg.override(f"experiment.workers={workers}")
    res = run_experiment(cfg, CodeCache(None))
    write_outputs(cfg, res, out_dir, CodeCache(None))
    return {n: open(os.path.join(out_dir, n), "rb").read() for n in sorted(os.listdir(out_dir)) if n != "manifest.json"}


def criterion_11(tmp_dir, capsys=None):
    t0 = time.perf_counter()
    mismatched = []
    for kind in SMALL:
        outs = [_run_bytes(kind, w, os.path.join(tmp_dir, f"{kind}-{w}")) for w in (1, 4, 8)]
        if not outs[0] == outs[1] == outs[2]:
            mismatched.append(kind)
    el = time.perf_counter() - t0
    detail = f"six experiment kinds x workers 1/4/8 byte-identical; mismatched={mismatched or 'none'}"
    return report(11, not mismatched, detail, el, None, capsys)


# -- pytest entry points ------------------------------------------------------------------


def test_criterion_01_cocycle(capsys):
    assert criterion_1(capsys)


def test_criterion_02_finite_difference(capsys):
    assert criterion_2(capsys)


def test_criterion_03_denjoy_koksma(capsys):
    assert criterion_3(capsys)


def test_criterion_04_power_growth(capsys):
    assert criterion_4(capsys)


def test_criterion_05_log_growth(capsys):
    assert criterion_5(capsys)


def test_criterion_06_covering_scaling(capsys):
    assert criterion_6(capsys)


def test_criterion_07_pd_statistics(capsys):
    assert criterion_7(capsys)


def test_criterion_08_j_band(capsys):
    assert criterion_8(capsys)


def test_criterion_09_occupancy(capsys):
    assert criterion_9(capsys)


def test_criterion_10_estimator_oracles(capsys):
    assert criterion_10(capsys)


def test_criterion_11_determinism(tmp_path, capsys):
    assert criterion_11(str(tmp_path), capsys)


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        verdicts = [criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(), criterion_6(),
                    criterion_7(), criterion_8(), criterion_9(), criterion_10(), criterion_11(d)]
    sys.exit(0 if all(verdicts) else 1)
