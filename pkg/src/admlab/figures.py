"""Report figures rendered to files, no display required."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_trace_figure(tr, path, title: str | None = None) -> str:
    has_ba = np.ptp(tr.Ba_trace) > 0
    rows = 3 if has_ba else 2
    fig, axes = plt.subplots(rows, 1, sharex=True, figsize=(8, 2.6 * rows))
    ax_f, ax_x = axes[0], axes[1]

    ax_f.plot(tr.t, tr.F_raw, color="0.75", lw=0.7, label="raw force")
    ax_f.plot(tr.t, tr.F_meas, color="C3", lw=1.0, label="measured force")
    if tr.contact_flags.any():
        k0 = int(np.argmax(tr.contact_flags))
        ax_f.axvline(tr.t[k0], color="0.4", ls=":", lw=0.8)
    ax_f.set_ylabel("force [N]")
    ax_f.legend(loc="best", fontsize=8)

    ax_x.plot(tr.t, tr.x_cmd, "C0", lw=1.0, label="command")
    ax_x.plot(tr.t, tr.x_robot, "C2", lw=1.0, label="robot")
    ax_x.plot(tr.t, tr.x_payload, "C1", lw=0.9, ls="--", label="payload")
    ax_x.set_ylabel("position [m]")
    ax_x.legend(loc="best", fontsize=8)

    if has_ba:
        axes[2].plot(tr.t, tr.Ba_trace, "C4", lw=1.0)
        axes[2].set_ylabel("damping [N s/m]")
    axes[-1].set_xlabel("time [s]")
    if title:
        ax_f.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_bode_figure(curves, path, which: str = "closed") -> str:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, curve in curves:
        ax.loglog(curve.omegas / (2 * np.pi), curve.magnitudes, lw=1.1,
                  label=name)
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("|%s| magnitude" % which)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_frontier_figure(fr, path) -> str:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    x = np.asarray(fr.values, dtype=float)
    handles = []
    if fr.min_stable_Ba is not None:
        handles += ax.plot(x, fr.min_stable_Ba, "o-", color="C0",
                           label="min stable Ba")
        ax.set_ylabel("min stable damping [N s/m]", color="C0")
    if fr.max_stable_Kl is not None:
        ax2 = ax.twinx()
        handles += ax2.plot(x, fr.max_stable_Kl, "s--", color="C3",
                            label="max stable Kl")
        ax2.set_ylabel("max stable lead gain [s]", color="C3")
    ax.set_xlabel(fr.sweep_variable)
    ax.grid(True, alpha=0.3)
    ax.legend(handles=handles, fontsize=8, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_compare_figure(labels, peaks, path) -> str:
    fig, ax = plt.subplots(figsize=(7, 0.8 + 0.55 * len(labels)))
    y = np.arange(len(labels))
    ax.barh(y, peaks, color="C0", height=0.6)
    ax.set_yticks(y, labels=labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("peak |force| [N]")
    for yi, pk in zip(y, peaks):
        ax.annotate(" %.1f" % pk, (pk, yi), va="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
