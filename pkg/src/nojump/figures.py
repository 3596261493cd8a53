"""Report figures rendered next to each CSV table.

Rendering is file-only (Agg backend); outputs are byte-stable for identical
inputs so reports can be diffed.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150
PNG_METADATA = {"Software": "nojump"}


def _save(fig, path) -> None:
    fig.savefig(path, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)


def render_spectrum(payload: dict, path) -> None:
    j = np.asarray(payload["J"])
    evals = np.asarray(payload["eigenvalues"])   # (n, 2) complex
    j_ep = payload["j_ep"]
    fig, (ax_re, ax_im) = plt.subplots(1, 2, figsize=(9, 3.6), constrained_layout=True)
    for k, marker in ((0, "o"), (1, "s")):
        ax_re.plot(j, evals[:, k].real, marker, ms=3, label=rf"$\mathrm{{Re}}\,\lambda_{k+1}$")
        ax_im.plot(j, evals[:, k].imag, marker, ms=3, label=rf"$\mathrm{{Im}}\,\lambda_{k+1}$")
    for ax in (ax_re, ax_im):
        ax.axvline(j_ep, color="gray", ls=":", lw=1)
        ax.set_xlabel(r"$J$ (rad/$\mu$s)")
        ax.legend(frameon=False)
    ax_re.set_ylabel(r"Re $\lambda$ (rad/$\mu$s)")
    ax_im.set_ylabel(r"Im $\lambda$ (rad/$\mu$s)")
    fig.suptitle("Effective-Hamiltonian spectrum across the exceptional point")
    _save(fig, path)


def render_sweep(payload: dict, path) -> None:
    j = np.asarray(payload["J"])
    times = np.asarray(payload["times"])
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), constrained_layout=True)
    for ax, key, title in (
        (axes[0], "p_plus_z", r"$P(+z)$ (no postselection)"),
        (axes[1], "pn_plus_z", r"$P^{(n)}(+z)$ (postselected)"),
    ):
        grid = np.asarray(payload[key])          # (n_j, n_t)
        mesh = ax.pcolormesh(times, j, grid, vmin=0.0, vmax=1.0, shading="nearest")
        ax.set_xlabel(r"$t$ ($\mu$s)")
        ax.set_ylabel(r"$J$ (rad/$\mu$s)")
        ax.set_title(title)
        fig.colorbar(mesh, ax=ax)
    _save(fig, path)


def render_fpt(payload: dict, path) -> None:
    j = np.asarray(payload["J"])
    fpt = np.asarray(payload["fpt"], dtype=float)    # NaN where absent
    ref = np.asarray(payload["hermitian_ref"])
    fig, ax = plt.subplots(figsize=(5.4, 3.8), constrained_layout=True)
    ax.plot(j, fpt, "s", ms=4, label="first passage time")
    ax.plot(j, ref, "--", color="gray", label=r"$\pi/(2J)$")
    ax.axvline(payload["j_ep"], color="gray", ls=":", lw=1)
    ax.set_xlabel(r"$J$ (rad/$\mu$s)")
    ax.set_ylabel(r"FPT ($\mu$s)")
    finite = fpt[np.isfinite(fpt)]
    if finite.size:
        ax.set_ylim(0, 1.2 * finite.max())
    ax.legend(frameon=False)
    _save(fig, path)


def render_linearity(payload: dict, path) -> None:
    times = np.asarray(payload["times"])
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6), constrained_layout=True)
    for ax, initial in ((axes[0], "+x"), (axes[1], "+y")):
        for j, ofs in payload["ofs"][initial]:
            ax.plot(times, ofs, lw=1.2, label=rf"$J={j:g}$")
        ax.set_xlabel(r"$t$ ($\mu$s)")
        ax.set_ylabel("overlap fidelity")
        ax.set_title(rf"initial $|{initial}\rangle$")
        ax.set_ylim(0, 1.05)
        ax.legend(frameon=False, fontsize=7)
    for j, ratio in payload["ratio"]:
        axes[2].plot(times, ratio, lw=1.2, label=rf"$J={j:g}$")
    axes[2].axhline(1.0, color="gray", ls=":", lw=1)
    axes[2].set_xlabel(r"$t$ ($\mu$s)")
    axes[2].set_ylabel(r"$r_f/r_e$")
    axes[2].set_title("postselection-weight ratio")
    axes[2].legend(frameon=False, fontsize=7)
    _save(fig, path)


def render_mixture(payload: dict, path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), constrained_layout=True)
    for ax, key, title in (
        (axes[0], "two_level_postselected", "postselected two-level"),
        (axes[1], "three_level_full", "full three-level"),
    ):
        res = payload[key]
        ax.plot(res.times, res.p_mixture, lw=1.4, label="mixture, evolved")
        ax.plot(res.times, res.p_superposed, "--", lw=1.4, label="parts, averaged")
        ax.plot(res.times, res.deviation, color="crimson", lw=1.0, label="|deviation|")
        ax.set_xlabel(r"$t$ ($\mu$s)")
        ax.set_ylabel(r"$P(e)$")
        ax.set_title(title)
        ax.legend(frameon=False, fontsize=8)
    _save(fig, path)


def render_trajectories(payload: dict, path) -> None:
    times = np.asarray(payload["times"])
    bloch = np.asarray(payload["bloch_mean"])
    sem = np.asarray(payload["bloch_sem"])
    pred = np.asarray(payload["bloch_pred"])
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4), constrained_layout=True)
    for k, (ax, label) in enumerate(zip(axes, ("x", "y", "z"))):
        ax.fill_between(times, bloch[:, k] - 3 * sem[:, k], bloch[:, k] + 3 * sem[:, k],
                        alpha=0.3, label=r"Monte Carlo $\pm 3\sigma$")
        ax.plot(times, pred[:, k], "k--", lw=1.2, label="no-jump prediction")
        ax.set_xlabel(r"$t$ ($\mu$s)")
        ax.set_ylabel(rf"$\langle\sigma_{label}\rangle$")
        ax.set_ylim(-1.1, 1.1)
    axes[0].legend(frameon=False, fontsize=8)
    fig.suptitle(f"conditioned ensemble, success rate {payload['success_rate']:.3f}")
    _save(fig, path)


def render_ingest(payload: dict, path) -> None:
    group = np.asarray(payload["group"])
    bloch = np.asarray(payload["bloch"])
    fig, ax = plt.subplots(figsize=(5.4, 3.8), constrained_layout=True)
    for k, label in enumerate(("x", "y", "z")):
        ax.plot(group, bloch[:, k], "-o", ms=3, label=rf"$\langle\sigma_{label}\rangle$")
    ax.set_xlabel("group index")
    ax.set_ylabel("Bloch component")
    ax.set_ylim(-1.1, 1.1)
    ax.legend(frameon=False)
    _save(fig, path)
