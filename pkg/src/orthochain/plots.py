"""Figure rendering for the CLI report path.

Each function takes the records produced by a runner and writes a PNG next to
the delimited output. The CSV stays the data contract; figures are a
convenience view of the same rows.
"""

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = [
    "plot_battery",
    "plot_cosine_contrast",
    "plot_depth_sweep",
    "plot_init_demo",
    "plot_loglog_sweep",
]


def _rows(records, metric):
    return [r for r in records if r.metric == metric]


def _percentile_band(values_by_layer, lo=2.5, hi=97.5):
    layers = sorted(values_by_layer)
    med = [np.median(values_by_layer[l]) for l in layers]
    low = [np.percentile(values_by_layer[l], lo) for l in layers]
    high = [np.percentile(values_by_layer[l], hi) for l in layers]
    return layers, med, low, high


def _group_by_layer(rows):
    out = {}
    for r in rows:
        out.setdefault(r.layer, []).append(r.value)
    return out


def plot_cosine_contrast(records, path):
    """Median |cosine| per layer with 95% bands, one curve per chain kind."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for metric, color, label in (("abs_cosine_bn", "tab:blue", "normalized chain"),
                                 ("abs_cosine_vanilla", "tab:red", "vanilla chain")):
        grouped = _group_by_layer(_rows(records, metric))
        if not grouped:
            continue
        layers, med, low, high = _percentile_band(grouped)
        ax.plot(layers, med, color=color, label=label)
        ax.fill_between(layers, low, high, color=color, alpha=0.2)
    ax.set_xlabel("layer")
    ax.set_ylabel("|cosine similarity|")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_depth_sweep(records, path):
    """log V across layers: per-seed traces (faint) and the mean curve."""
    grouped = _group_by_layer([r for r in _rows(records, "v") if r.layer > 0])
    layers = sorted(grouped)
    fig, ax = plt.subplots(figsize=(6, 4))
    mean_v = [np.mean(grouped[l]) for l in layers]
    n_seeds = max(len(v) for v in grouped.values())
    rows = _rows(records, "v")
    by_seed = {}
    for r in rows:
        by_seed.setdefault(r.seed, {})[r.layer] = r.value
    for seed, vals in list(by_seed.items())[:20]:
        ls = sorted(vals)
        ax.plot(ls, [vals[l] for l in ls], color="gray", alpha=0.15, lw=0.7)
    ax.plot(layers, mean_v, color="tab:blue", lw=2,
            label=f"mean over {n_seeds} seeds")
    ax.set_yscale("log")
    ax.set_xlabel("layer")
    ax.set_ylabel("orthogonality gap V")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_loglog_sweep(records, path, metric="mean_v", ylabel="mean V over layers"):
    """Width sweep on log-log axes with the fitted power law."""
    rows = _rows(records, metric)
    by_d = {}
    for r in rows:
        by_d.setdefault(r.d, []).append(r.value)
    ds = sorted(by_d)
    means = [np.mean(by_d[d]) for d in ds]
    fit = {r.metric: r.value for r in records if r.metric in ("slope", "intercept")}
    fig, ax = plt.subplots(figsize=(6, 4))
    for d in ds:
        ax.plot([d] * len(by_d[d]), by_d[d], ".", color="gray", alpha=0.3, ms=4)
    ax.plot(ds, means, "o-", color="tab:blue", label="seed mean")
    if "slope" in fit:
        xs = np.array(ds, dtype=float)
        ax.plot(xs, np.exp(fit["intercept"]) * xs ** fit["slope"], "--",
                color="tab:orange", label=f"fit slope {fit['slope']:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("width d")
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_init_demo(records, path):
    """Gap before/after the per-layer initialization across depth."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for metric, color in (("v_before", "tab:red"), ("v_after", "tab:blue")):
        grouped = _group_by_layer(_rows(records, metric))
        if not grouped:
            continue
        layers = sorted(grouped)
        ax.plot(layers, [np.mean(grouped[l]) for l in layers], "o-",
                color=color, label=metric.replace("_", " "))
    ax.set_yscale("log")
    ax.set_xlabel("layer")
    ax.set_ylabel("orthogonality gap")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_battery(records, path):
    """Horizontal bar chart of check margins (negative bars are failures)."""
    names = [f"{r.metric}[n={r.n},d={r.d}]" for r in records]
    margins = [r.value for r in records]
    colors = ["tab:green" if m >= 0 else "tab:red" for m in margins]
    fig, ax = plt.subplots(figsize=(7, 0.28 * len(names) + 1.5))
    ax.barh(range(len(names)), margins, color=colors)
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=6)
    ax.axvline(0.0, color="black", lw=0.8)
    ax.set_xlabel("margin (>= 0 passes)")
    ax.set_xscale("symlog", linthresh=1e-8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
