"""
Figures rendered from the CSV reports (matplotlib, file output only).
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_metrics", "plot_constellation", "plot_tx_spectrum", "plot_design"]

_COLORS = {"00": "tab:blue", "01": "tab:orange", "10": "tab:green", "11": "tab:red"}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_metrics(rows, path):
    """EVM and BER against span count; ``rows`` are dicts from the metrics CSV."""
    n = np.array([r["spans"] for r in rows])
    e = np.array([r["evm"] for r in rows])
    b = np.array([r["ber"] for r in rows])
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.6))
    a1.plot(n, e, "o-")
    a1.set_xlabel("spans")
    a1.set_ylabel("EVM (spectral)")
    a1.grid(alpha=0.3)
    # zero BER cannot go on a log axis
    pos = b > 0
    a2.semilogy(n[pos], b[pos], "s-")
    a2.set_xlabel("spans")
    a2.set_ylabel("BER")
    a2.grid(alpha=0.3, which="both")
    return _save(fig, path)


def plot_constellation(rows, design, path, title=None):
    """Received spectral points coloured by transmitted label, design points as crosses."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for lab, col in _COLORS.items():
        pts = [(r["re"], r["im"]) for r in rows if r["tx_label"] == lab]
        if pts:
            p = np.array(pts)
            ax.plot(p[:, 0], p[:, 1], ".", ms=2, color=col, alpha=0.5, label=lab)
    for lab, pts in design.items():
        p = np.asarray(pts)
        ax.plot(p.real, p.imag, "x", color=_COLORS.get(lab, "k"), ms=8, mew=2)
    ax.set_xlabel("Re $\\lambda$")
    ax.set_ylabel("Im $\\lambda$")
    if title:
        ax.set_title(title)
    ax.legend(markerscale=4, fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_tx_spectrum(freq, psd_db, path):
    fig, ax = plt.subplots(figsize=(6, 3.4))
    ax.plot(np.asarray(freq) / 1e9, psd_db, lw=0.8)
    ax.set_xlabel("frequency (GHz)")
    ax.set_ylabel("power (dB, normalized)")
    ax.set_xlim(-8, 8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_design(bodies, design, path):
    """One period of each symbol's amplitude and the four spectra."""
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for lab, x in bodies.items():
        t = np.arange(len(x)) / len(x)
        a1.plot(t, np.abs(x), ".-", color=_COLORS.get(lab), label=lab)
    a1.set_xlabel("t / body period")
    a1.set_ylabel("|psi|")
    a1.legend(fontsize=8)
    for lab, pts in design.items():
        p = np.asarray(pts)
        a2.plot(p.real, p.imag, "o", color=_COLORS.get(lab), label=lab)
    a2.set_xlabel("Re $\\lambda$")
    a2.set_ylabel("Im $\\lambda$")
    for a in (a1, a2):
        a.grid(alpha=0.3)
    return _save(fig, path)
