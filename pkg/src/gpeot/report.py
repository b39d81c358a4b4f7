"""Report rendering: delimited metric files plus matplotlib figures.

Everything here consumes :class:`~gpeot.runner.EvaluationReport` lists and
writes into an output directory; nothing is shown interactively.
"""

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def write_metrics_csv(report, path):
    """Per-frame metrics of one run."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["frame_id", "t", "iou", "vel_err", "orient_err", "rate_err"])
        for k in range(report.t.shape[0]):
            wr.writerow([k, repr(float(report.t[k])), repr(float(report.iou[k])),
                         repr(float(report.vel_err[k])), repr(float(report.orient_err[k])),
                         repr(float(report.rate_err[k]))])


def write_frame_summary_csv(reports, path):
    """Monte-Carlo mean and std of the IOU per frame."""
    iou = np.stack([r.iou for r in reports])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["frame", "iou_mean", "iou_std"])
        for k in range(iou.shape[1]):
            col = iou[:, k]
            col = col[~np.isnan(col)]
            if col.size == 0:
                wr.writerow([k, "nan", "nan"])
            else:
                wr.writerow([k, repr(float(col.mean())), repr(float(col.std()))])


def write_run_summary_csv(reports, path):
    """One row per Monte-Carlo run."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["run", "iou_mean", "velocity_rmse", "rate_rmse"])
        for r in reports:
            wr.writerow([r.run, repr(r.iou_mean), repr(r.velocity_rmse), repr(r.rate_rmse)])


def write_summary_json(reports, path, steady_frames=10):
    agg = {
        "mc_runs": len(reports),
        "iou_mean": float(np.mean([r.iou_mean for r in reports])),
        "iou_steady_mean": float(np.mean([r.steady_iou(steady_frames) for r in reports])),
        "velocity_rmse_mean": float(np.mean([r.velocity_rmse for r in reports])),
        "rate_rmse_mean": float(np.mean([r.rate_rmse for r in reports])),
    }
    Path(path).write_text(json.dumps(agg, indent=2, sort_keys=True) + "\n")
    return agg


def _mc_mean(arrays):
    return np.nanmean(np.stack(arrays), axis=0)


def fig_iou(reports, path):
    t = reports[0].t
    iou = np.stack([r.iou for r in reports])
    ok = (~np.isnan(iou)).any(axis=0)
    mean = np.full(iou.shape[1], np.nan)
    std = np.full(iou.shape[1], np.nan)
    mean[ok] = np.nanmean(iou[:, ok], axis=0)
    std[ok] = np.nanstd(iou[:, ok], axis=0)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(t[ok], mean[ok], color="tab:blue", label="mean")
    ax.fill_between(t[ok], (mean - std)[ok], (mean + std)[ok],
                    alpha=0.25, color="tab:blue", label="±1 std")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("IOU")
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_velocity_error(reports, path):
    t = reports[0].t
    mean = _mc_mean([r.vel_err for r in reports])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(t, mean, color="tab:orange")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("|velocity error| [m/s]")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_quaternions(results, truth, path):
    t = truth.t
    est = _mc_mean([r.q for r in results])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    colors = ["tab:blue", "tab:green", "tab:olive", "tab:red"]
    for i, name in enumerate(["q1", "q2", "q3", "q4"]):
        ax.plot(t, truth.q[:, i], color=colors[i], lw=1.0, label=f"{name} true")
        ax.plot(t, est[:, i], color=colors[i], lw=1.0, ls="--", label=f"{name} est")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("quaternion components")
    ax.legend(ncol=4, fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_angular_rates(results, truth, path):
    t = truth.t
    est = _mc_mean([r.w for r in results])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    colors = ["tab:blue", "tab:green", "tab:olive"]
    for i, name in enumerate(["wx", "wy", "wz"]):
        ax.plot(t, truth.w[:, i], color=colors[i], lw=1.0, label=f"{name} true")
        ax.plot(t, est[:, i], color=colors[i], lw=1.0, ls="--", label=f"{name} est")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("angular rate [rad/s]")
    ax.legend(ncol=3, fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(reports, results, truth, out_dir, steady_frames=10):
    """Write all delimited outputs and figures for one evaluation."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in reports:
        write_metrics_csv(r, out / f"metrics_run{r.run:03d}.csv")
    write_frame_summary_csv(reports, out / "frame_summary.csv")
    write_run_summary_csv(reports, out / "run_summary.csv")
    agg = write_summary_json(reports, out / "summary.json", steady_frames)
    figures = out / "figures"
    figures.mkdir(exist_ok=True)
    fig_iou(reports, figures / "iou_vs_time.png")
    fig_velocity_error(reports, figures / "velocity_error.png")
    fig_quaternions(results, truth, figures / "quaternion_tracking.png")
    fig_angular_rates(results, truth, figures / "angular_rates.png")
    return agg
