"""Figures rendered next to the CSV output (file output only, Agg backend)."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def plot_defects(reports, path, nrt=None):
    """Frenkel-pair count against time, with the NRT estimate as a reference line."""
    t = np.array([r.t for r in reports])
    fp = np.array([r.frenkel_pairs for r in reports])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t, fp, color="C0", lw=1.2, label="Frenkel pairs")
        if nrt is not None:
            ax.axhline(nrt, color="C3", ls="--", lw=1.0, label=f"NRT ({nrt:g})")
        ax.set_xlabel("time (ps)")
        ax.set_ylabel("Frenkel pairs")
        ax.set_ylim(bottom=0)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_thermo(rows, path):
    """Temperature and total energy per atom over time."""
    rows = np.asarray(rows, dtype=float)
    t, total, temp = rows[:, 1], rows[:, 5], rows[:, 6]
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(5.0, 4.6))
        ax1.plot(t, temp, color="C1", lw=1.0)
        ax1.set_ylabel("T (K)")
        ax2.plot(t, total - total[0], color="C2", lw=1.0)
        ax2.set_ylabel(r"$E - E_0$ (eV)")
        ax2.set_xlabel("time (ps)")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)
