"""Log-log SVG plots from run summaries (matplotlib, SVG backend only)."""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import SpecflowError  # noqa: E402


class PlotError(SpecflowError):
    pass


def _load(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise PlotError(f"missing summary file: {path}") from None
    except json.JSONDecodeError as exc:
        raise PlotError(f"not a JSON summary: {path} ({exc.msg})") from None


def _series(doc: dict, path: str):
    res = doc.get("results", {})
    kind = res.get("plot")
    if kind == "entropy":
        r = res.get("r_grid") or []
        s = res.get("s_values") or []
        if not r:
            raise PlotError(f"empty r-grid in {path}")
        return kind, np.asarray(r, float), np.asarray(s, float), res
    if kind == "growth":
        q = res.get("q") or []
        if not q:
            raise PlotError(f"no denominators in {path}")
        return kind, np.asarray(q, float), np.asarray(res["median"], float), res
    raise PlotError(f"summary {path} has nothing to plot")


def plot_summaries(paths: list[str], out: str | None = None) -> str:
    """Write one SVG for the given summaries (overlaid when several); returns its path."""
    if not paths:
        raise PlotError("no summary files given")
    docs = [(p, _load(p)) for p in paths]
    series = [(p,) + _series(d, p) for p, d in docs]
    kinds = {s[1] for s in series}
    if len(kinds) > 1:
        raise PlotError("cannot overlay entropy and growth summaries")
    kind = kinds.pop()
    plt.rcParams["svg.hashsalt"] = "specflow"
    plt.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for path, _, xs, ys, res in series:
        label = res.get("label") or os.path.basename(os.path.dirname(os.path.abspath(path))) or path
        if kind == "entropy":
            ax.loglog(xs, ys, "o", label=label)
            grid = np.geomspace(xs.min(), xs.max(), 50)
            t, c = res["t_hat"], res.get("intercept", 0.0)
            if res.get("scale") == "log":
                fit = grid * np.log(grid) ** t * np.exp(c)
            else:
                fit = grid ** t * np.exp(c)
            ax.loglog(grid, fit, "-", label=f"{label}: t = {t:.3f} ({res.get('scale')})")
        else:
            ax.loglog(xs, ys, "o", label=label)
            grid = np.geomspace(xs.min(), xs.max(), 50)
            ax.loglog(grid, np.exp(res["intercept"]) * grid ** res["slope"], "-",
                      label=f"slope {res['slope']:.3f}")
    if kind == "entropy":
        ax.set_xlabel("r")
        ax.set_ylabel("S(r)")
    else:
        ax.set_xlabel("q_n")
        ax.set_ylabel("median statistic")
    ax.legend(fontsize=8)
    fig.tight_layout()
    if out is None:
        out = os.path.splitext(paths[0])[0] + ".svg"
    fig.savefig(out, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return out
