"""Figures rendered to PNG with the Agg backend and fixed metadata."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "savefig.bbox": "tight",
}
# no software/date stamps so reruns are byte-identical
PNG_METADATA = {"Software": None}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=PNG_METADATA)
    plt.close(fig)
    return path


def plot_rate(h, errors, slope: float, intercept: float, expected: float, path) -> Path:
    """Log-log error against amplitude with the fitted and the expected slope."""
    h = np.asarray(h, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(h, errors, "o", label="error")
        ax.loglog(h, np.exp(intercept) * h ** slope, "-", label=f"fit, slope {slope:.3f}")
        ref = errors[0] * (h / h[0]) ** expected
        ax.loglog(h, ref, "--", color="0.5", label=f"slope {expected:.3f}")
        ax.set_xlabel("amplitude h")
        ax.set_ylabel(r"$H^{-s}$ error")
        ax.legend()
        return _save(fig, path)


def plot_snapshots(x, times, slices, path, count: int = 5, ylabel: str = "u") -> Path:
    """A few time slices of a 1-D series."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        picks = np.unique(np.linspace(0, len(times) - 1, count).round().astype(int))
        for k in picks:
            ax.plot(x, slices[k], label=f"t={times[k]:.3g}")
        ax.set_xlabel("x")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=7)
        return _save(fig, path)


def plot_lambda(x, lam_hat, truth, valid, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if truth is not None:
            ax.plot(x, truth, "-", color="0.4", label="truth")
        ax.plot(x[valid], lam_hat[valid], ".", ms=3, label="recovered")
        ax.set_xlabel("x")
        ax.set_ylabel(r"$\lambda$")
        ax.legend()
        return _save(fig, path)


def plot_reduction(x, reduced, direct, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(x, direct, "-", label="linear DN map")
        ax.plot(x, reduced, "o", ms=3, mfc="none", label="reduced nonlinear data")
        ax.set_xlabel("x in W2")
        ax.legend()
        return _save(fig, path)
