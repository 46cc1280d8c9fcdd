"""Figures written next to the CSV/JSON artifacts.

SVG output is made reproducible by fixing the hash salt used for element ids
and dropping the date metadata.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "slowecho",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    meta = {"Date": None} if path.suffix == ".svg" else {}
    fig.savefig(path, metadata=meta)
    plt.close(fig)
    return path


def plot_trace(record, seq, path, windows=()):
    """Input and transmitted intensity with the echo search windows shaded."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        ax.plot(record.t_grid, record.intensity_in, color="tab:red", lw=0.9, label="input")
        ax.plot(record.t_grid, record.intensity_out, color="tab:blue", lw=0.9, label="output")
        for _, (lo, hi) in windows:
            ax.axvspan(lo, hi, color="0.85", lw=0)
        ax.set_xlabel("time (us)")
        ax.set_ylabel("|Omega|^2 ((rad/us)^2)")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_pair(plain, holed, seq, path):
    """Transmitted intensity without and with the burn, on a log scale."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        floor = 1e-8 * float(np.max(plain.intensity_in))
        ax.semilogy(plain.t_grid, plain.intensity_in + floor, color="tab:red", lw=0.8,
                    label="input")
        ax.semilogy(plain.t_grid, plain.intensity_out + floor, color="tab:blue", lw=0.9,
                    label="no H")
        ax.semilogy(holed.t_grid, holed.intensity_out + floor, color="tab:green", lw=0.9,
                    label="with H")
        echo = seq.expected_echo_time()
        if echo is not None:
            ax.axvline(echo, color="0.6", ls=":", lw=0.8)
        ax.set_xlabel("time (us)")
        ax.set_ylabel("intensity")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_sweep(result, path):
    """Echo efficiency against group delay with the exponential fit."""
    tau = np.array([r.tau_g_us for r in result.rows])
    eff = np.array([r.echo_efficiency for r in result.rows])
    ok = (tau > 0) & (eff > 0)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.semilogy(tau[ok], eff[ok], "o", color="tab:blue", ms=4, label="simulation")
        if result.fit is not None and ok.any():
            x = np.linspace(tau[ok].min(), tau[ok].max(), 200)
            f = result.fit
            ax.semilogy(x, f(x), "-", color="tab:red", lw=1,
                        label=f"A exp[B(tau-C)], B={f.b:.3g}, R2={f.r_squared:.3f}")
        ax.set_xlabel("group delay (us)")
        ax.set_ylabel("echo efficiency")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_population(pop, path):
    """Hole-centre ground population along the crystal."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.plot(pop.z_mm, pop.hole_center(), color="tab:blue")
        ax.set_xlabel("z (mm)")
        ax.set_ylabel("n_g at hole centre")
        ax.set_ylim(0, 1.05)
        return _save(fig, path)
