"""Delimited outputs and figures for training runs and evaluations.

Loss CSV: optional leading "# seed=N" metadata comment, then a header row
``stage,step,loss,lr``. Metrics CSV: header ``name,psnr_db,ssim`` with a final
``mean`` row; infinite PSNR (identical images) is written as ``inf``.
"""

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import InputError

LOSS_CSV_HEADER = ("stage", "step", "loss", "lr")
METRICS_CSV_HEADER = ("name", "psnr_db", "ssim")


def _fmt(x: float) -> str:
    return f"{x:.8g}"


def write_loss_csv(path, records, seed=None):
    with open(str(path), "w", newline="", encoding="utf-8") as fh:
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        writer = csv.writer(fh)
        writer.writerow(LOSS_CSV_HEADER)
        for r in records:
            writer.writerow([r.stage, r.step, _fmt(r.loss), _fmt(r.lr)])


def read_loss_csv(path):
    """Returns (seed or None, list of {stage, step, loss, lr} dicts)."""
    seed = None
    rows = []
    try:
        with open(str(path), "r", encoding="utf-8") as fh:
            first = fh.readline()
            if first.startswith("# seed="):
                seed = int(first.strip().split("=", 1)[1])
            else:
                fh.seek(0)
            reader = csv.DictReader(fh)
            for rec in reader:
                rows.append({"stage": rec["stage"], "step": int(rec["step"]),
                             "loss": float(rec["loss"]), "lr": float(rec["lr"])})
    except OSError as exc:
        raise InputError(f"cannot read loss csv {path}: {exc}") from exc
    return seed, rows


def plot_loss_curves(path, curves: dict):
    """One figure, one line per labelled record list; log-scale when possible."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    positive = True
    for label, records in curves.items():
        steps = [r.step for r in records]
        losses = [r.loss for r in records]
        positive = positive and all(v > 0 for v in losses)
        ax.plot(steps, losses, label=label, linewidth=1.2)
    if positive:
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("training loss")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(str(path), dpi=120)
    plt.close(fig)


def write_metrics_csv(path, rows):
    """rows: (name, psnr_db, ssim) triples; appends a mean row."""
    with open(str(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_CSV_HEADER)
        for name, p, s in rows:
            writer.writerow([name, _fmt(p), _fmt(s)])
        if rows:
            mean_p = sum(r[1] for r in rows) / len(rows)
            mean_s = sum(r[2] for r in rows) / len(rows)
            writer.writerow(["mean", _fmt(mean_p), _fmt(mean_s)])


def plot_metrics(path, rows):
    """Per-image PSNR and SSIM bars side by side."""
    names = [r[0] for r in rows]
    cap = 80.0
    psnrs = [min(r[1], cap) for r in rows]
    ssims = [r[2] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    x = range(len(names))
    ax1.bar(x, psnrs, color="#4878a8")
    ax1.set_ylabel("PSNR (dB)")
    ax2.bar(x, ssims, color="#a85448")
    ax2.set_ylabel("SSIM")
    ax2.set_ylim(0, 1.05)
    for ax in (ax1, ax2):
        ax.set_xticks(list(x))
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(str(path), dpi=120)
    plt.close(fig)
