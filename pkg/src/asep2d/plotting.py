"""Figures written next to the CSV output of the command line tools."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _finish(fig, ax, path, title=None):
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_diffusivity(path, t, d_mom, e_mom, d_gk, e_gk):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(t, d_mom, yerr=e_mom, fmt="o", ms=3, label="moments")
    ax.errorbar(t, d_gk, yerr=e_gk, fmt="s", ms=3, label="Green-Kubo")
    ax.axhline(0.5, color="k", lw=0.8, ls=":")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$D_{11}(t)$")
    ax.legend()
    return _finish(fig, ax, path)


def plot_scaling(path, lambdas, values, fit=None, ylabel="value", label=None):
    """values against |log lambda| on log-log axes, with the fitted power."""
    L = np.abs(np.log(np.asarray(lambdas)))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(L, values, "o", label=label)
    if fit is not None:
        xs = np.linspace(L.min(), L.max(), 100)
        ax.loglog(xs, np.exp(fit.intercept) * xs**fit.kappa, "-",
                  label=rf"fit $\hat\kappa$ = {fit.kappa:.3f}")
    ax.set_xlabel(r"$|\log\lambda|$")
    ax.set_ylabel(ylabel)
    ax.legend()
    return _finish(fig, ax, path)


def plot_series(path, x, ys, labels, xlabel, ylabel, logx=False, logy=False):
    fig, ax = plt.subplots(figsize=(6, 4))
    for y, lab in zip(ys, labels):
        ax.plot(x, y, "o-", ms=3, label=lab)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if any(labels):
        ax.legend()
    return _finish(fig, ax, path)
