"""Figures written next to the CLI's delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .outputs import save_figure  # noqa: E402


def plot_table(table, path, title: str = ""):
    """f_hom against |G| and |B|, colored by the other norm."""
    G, B, v = table.G, table.B, table.values
    nG = np.linalg.norm(G.reshape(len(v), -1), axis=1)
    nB = np.linalg.norm(B, axis=1)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8), constrained_layout=True)
    for ax, x, c, xl, cl in ((axes[0], nG, nB, "|G|", "|B|"), (axes[1], nB, nG, "|B|", "|G|")):
        sc = ax.scatter(x, v, c=c, s=8, cmap="viridis")
        ax.set_xlabel(xl)
        ax.set_ylabel("f_hom")
        fig.colorbar(sc, ax=ax, label=cl)
    if title:
        fig.suptitle(title)
    save_figure(fig, path)
    plt.close(fig)


def plot_gamma(report, path):
    eps = np.asarray(report.epsilons)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8), constrained_layout=True)
    ax = axes[0]
    ax.plot(eps, report.energies, "o-", label="min E_eps")
    ax.axhline(report.target, color="k", ls="--", label="f_hom target")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("energy")
    ax.legend()
    ax = axes[1]
    gaps = np.abs(report.gaps)
    ax.plot(eps, np.where(gaps > 0, gaps, np.nan), "s-")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("|gap|")
    save_figure(fig, path)
    plt.close(fig)


def plot_field_slice(values, path, title: str = ""):
    """Middle slice (x3 = 1/2) of each component of a (n, n, n, 3) field."""
    values = np.asarray(values)
    n = values.shape[0]
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.4), constrained_layout=True)
    for i, ax in enumerate(axes):
        im = ax.imshow(values[:, :, n // 2, i].T, origin="lower", extent=(0, 1, 0, 1), cmap="RdBu_r")
        ax.set_title(f"component {i + 1}")
        fig.colorbar(im, ax=ax, shrink=0.8)
    if title:
        fig.suptitle(title)
    save_figure(fig, path)
    plt.close(fig)


def plot_conjugate(radii, values, path, label: str = "conjugate"):
    fig, ax = plt.subplots(figsize=(5, 3.8), constrained_layout=True)
    ax.plot(radii, values, "o-", ms=3)
    ax.set_xlabel("|B|")
    ax.set_ylabel(label)
    save_figure(fig, path)
    plt.close(fig)


def plot_audit(ratios: dict, path):
    names = list(ratios)
    fig, ax = plt.subplots(figsize=(7, 3.8), constrained_layout=True)
    ax.bar(range(len(names)), [ratios[k] for k in names],
           color=["tab:red" if ratios[k] > 1 else "tab:blue" for k in names])
    ax.axhline(1.0, color="k", ls="--")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_ylabel("needed / declared")
    save_figure(fig, path)
    plt.close(fig)
