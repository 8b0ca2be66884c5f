"""Deterministic SVG figures of run diagnostics."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

HASH_SALT = "hermflow"

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "svg.fonttype": "path",
    "svg.hashsalt": HASH_SALT,
    "figure.figsize": (5.0, 3.4),
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def decay_plot(t, q_norm, lambda1: float | None, path) -> Path:
    """log |Q|^2 against t with reference slopes -lambda1 and -2 lambda1.

    Both guide lines start at the first sample.
    """
    t = np.asarray(t, dtype=float)
    q2 = np.asarray(q_norm, dtype=float) ** 2
    if t.size == 0:
        raise ValueError("empty series")
    pos = q2 > 0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if np.any(pos):
            ax.plot(t[pos], np.log(q2[pos]), color="k", gid="log_q2", label=r"$\log\|Q(u_t)\|^2_{L^2}$")
            if lambda1 is not None and np.isfinite(lambda1):
                t0, y0 = t[pos][0], np.log(q2[pos][0])
                ax.plot(t, y0 - lambda1 * (t - t0), "--", color="tab:blue", gid="guide_lambda1",
                        label=rf"slope $-\lambda_1$ = {-lambda1:.4g}")
                ax.plot(t, y0 - 2 * lambda1 * (t - t0), ":", color="tab:red", gid="guide_2lambda1",
                        label=rf"slope $-2\lambda_1$ = {-2 * lambda1:.4g}")
                lo = np.log(q2[pos]).min()
                ax.set_ylim(lo - 2.0, y0 + 2.0)
        else:
            ax.text(0.5, 0.5, r"$Q \equiv 0$", transform=ax.transAxes, ha="center")
        ax.set_xlabel("t")
        ax.set_ylabel(r"$\log\|Q\|^2$")
        ax.legend(loc="upper right", frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def series_plot(t, columns: dict, path, logy: bool = False, ylabel: str = "") -> Path:
    t = np.asarray(t, dtype=float)
    if t.size == 0:
        raise ValueError("empty series")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, y in columns.items():
            ax.plot(t, y, label=name)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def render_run(series: dict, lambda1: float | None, out_dir) -> list[Path]:
    """The standard figure set for a run directory."""
    out_dir = Path(out_dir)
    t = series["t"]
    paths = [decay_plot(t, series["norm_Q_L2"], lambda1, out_dir / "decay.svg")]
    if "dt" in series:
        dt = series["dt"]
        paths.append(series_plot(t[dt > 0], {"dt": dt[dt > 0]}, out_dir / "timestep.svg",
                                 logy=True, ylabel="accepted step"))
    if "min_eig_psi" in series:
        paths.append(series_plot(t, {r"min eig $\psi$": series["min_eig_psi"]},
                                 out_dir / "positivity.svg", ylabel="min eigenvalue"))
    return paths
