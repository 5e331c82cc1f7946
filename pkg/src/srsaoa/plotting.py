"""Figures for the curve tables written by ``simulate``."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "savefig.dpi": 150,
}


def _finite(x, y):
    keep = np.isfinite(x) & np.isfinite(y)
    return x[keep], y[keep]


def plot_rmse(table, path, title=None):
    """RMSE versus SNR on a log axis, one line per (case, estimator), CRB dashed."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for case in table.cases:
            for est in table.estimators:
                x, y = _finite(*table.curve(case, est, "rmse_deg"))
                if x.size:
                    label = est if len(table.cases) == 1 else f"{case} {est}"
                    ax.semilogy(x, np.maximum(y, 1e-6), marker="o", ms=3, label=label)
            x, y = _finite(*table.curve(case, "crb", "crb_deg"))
            if x.size:
                ax.semilogy(x, y, "k--", label="CRB")
        ax.set_xlabel("SNR [dB]")
        ax.set_ylabel("RMSE [deg]")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_hit_rate(table, path, title=None):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for case in table.cases:
            for crit in table.estimators:
                x, y = _finite(*table.curve(case, crit, "hit_rate"))
                if x.size:
                    ax.plot(x, y, marker="o", ms=3, label=f"{case} {crit.upper()}")
        ax.axhline(0.9, color="0.5", lw=0.8, ls=":")
        ax.set_xlabel("SNR [dB]")
        ax.set_ylabel("hit rate")
        ax.set_ylim(-0.02, 1.02)
        if title:
            ax.set_title(title)
        ax.legend(ncol=2)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_table(table, path, study, title=None):
    if study == "order":
        plot_hit_rate(table, path, title)
    else:
        plot_rmse(table, path, title)


def plot_cdf(errors_by_name, path, title=None):
    """Empirical CDFs of absolute errors, one line per entry."""
    from .experiments import compute_cdf

    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for name, errs in errors_by_name.items():
            x, p = compute_cdf(errs)
            ax.step(x, p, where="post", label=name)
        ax.set_xlabel("|error| [deg]")
        ax.set_ylabel("CDF")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
