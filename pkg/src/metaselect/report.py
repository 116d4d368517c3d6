"""Report emission: JSON + aligned-text classification reports, plot CSV, figures."""

import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .artifacts import atomic_write_text

# Interpretation notes carried in every report header.
HEADER_NOTES = [
    "ndcg: binary relevance, idcg truncated at min(k, |relevant|)",
    "normalization and smote fit inside each cv training fold (no leakage)",
    "accuracy pooled over out-of-fold predictions; per-fold accuracies also listed",
]


def report_to_dict(report):
    out = {
        "learner": report.learner,
        "class_names": report.class_names,
        "options": report.options,
        "accuracy": report.accuracy,
        "majority_accuracy": report.majority_accuracy,
        "fold_accuracies": report.fold_accuracies,
        "confusion": report.confusion.tolist(),
        "per_class": report.per_class,
        "macro_avg": report.macro_avg,
        "weighted_avg": report.weighted_avg,
        "base_level": report.base_level,
        "notes": HEADER_NOTES + list(report.notes),
    }
    return out


def write_report_json(path, report, extra=None):
    data = report_to_dict(report)
    if extra:
        data.update(extra)
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def format_report_text(report):
    """Human-readable layout: per-class rows then macro/weighted averages."""
    lines = []
    lines.append(f"meta learner: {report.learner}")
    for note in HEADER_NOTES:
        lines.append(f"# {note}")
    lines.append("")
    width = max(len(c) for c in report.class_names) + 2
    lines.append(f"{'':{width}}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}")
    for name in report.class_names:
        m = report.per_class[name]
        lines.append(
            f"{name:{width}}{m['precision']:>10.4f}{m['recall']:>10.4f}"
            f"{m['f1']:>10.4f}{m['support']:>10d}"
        )
    lines.append("")
    for label, avg in (("macro avg", report.macro_avg), ("weighted avg", report.weighted_avg)):
        lines.append(
            f"{label:{width}}{avg['precision']:>10.4f}{avg['recall']:>10.4f}{avg['f1']:>10.4f}"
        )
    lines.append("")
    lines.append(f"accuracy:          {report.accuracy:.4f}")
    lines.append(f"majority baseline: {report.majority_accuracy:.4f}")
    lines.append("fold accuracies:   " + " ".join(f"{a:.4f}" for a in report.fold_accuracies))
    lines.append("")
    lines.append("confusion matrix (rows = true, cols = predicted):")
    header = "".join(f"{c:>14}" for c in report.class_names)
    lines.append(" " * width + header)
    for name, row in zip(report.class_names, report.confusion):
        lines.append(f"{name:{width}}" + "".join(f"{int(v):>14d}" for v in row))
    if report.base_level:
        bl = report.base_level
        lines.append("")
        lines.append("base-level ndcg impact:")
        lines.append(f"  perfect (oracle)          {bl['oracle']:.4f}")
        lines.append(f"  meta-model predictions    {bl['impact']:.4f}")
        for name, value in bl["constant"].items():
            lines.append(f"  choosing only {name:<12}{value:.4f}")
    return "\n".join(lines) + "\n"


def write_report_text(path, report):
    atomic_write_text(path, format_report_text(report))


def write_plot_data(path, rows):
    """rows: (model, dataset, accuracy, base_level_ndcg)."""
    lines = ["model,dataset,accuracy,base_level_ndcg"]
    for model, dataset, acc, ndcg in rows:
        lines.append(f"{model},{dataset},{acc!r},{ndcg!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _grouped_bars(ax, rows, value_idx, ylabel):
    datasets = sorted({r[1] for r in rows})
    models = sorted({r[0] for r in rows})
    width = 0.8 / max(1, len(datasets))
    for d_i, ds in enumerate(datasets):
        xs, ys = [], []
        for m_i, model in enumerate(models):
            for r in rows:
                if r[0] == model and r[1] == ds:
                    xs.append(m_i + d_i * width)
                    ys.append(r[value_idx])
        ax.bar(xs, ys, width=width, label=ds)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(models))])
    ax.set_xticklabels(models, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)


def render_figures(report_dir, rows, baselines=None):
    """Accuracy and base-level comparison charts next to the plot-data CSV."""
    if not rows:
        return []
    out = []
    fig, ax = plt.subplots(figsize=(7, 4), dpi=110)
    _grouped_bars(ax, rows, 2, "meta-level accuracy (out-of-fold)")
    if baselines and "majority_accuracy" in baselines:
        ax.axhline(baselines["majority_accuracy"], color="k", ls="--", lw=1,
                   label="majority baseline")
        ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(report_dir, "accuracy.png")
    fig.savefig(path)
    plt.close(fig)
    out.append(path)

    fig, ax = plt.subplots(figsize=(7, 4), dpi=110)
    _grouped_bars(ax, rows, 3, "base-level NDCG impact")
    if baselines:
        for name, style in (("oracle", ":"), ("best_constant", "--")):
            if name in baselines:
                ax.axhline(baselines[name], color="k", ls=style, lw=1, label=name)
        ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(report_dir, "base_level.png")
    fig.savefig(path)
    plt.close(fig)
    out.append(path)
    return out
