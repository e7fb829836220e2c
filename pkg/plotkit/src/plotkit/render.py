"""Render figures from run artifacts.

All rendering goes through one fixed style profile so identical inputs
produce identical pixels.  Outputs are written atomically (temp file then
rename): a failed job leaves no partial image.  Run directories are never
written to; render_all places images in a separate output directory.
"""

from __future__ import annotations

import os
from importlib import resources
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .jobs import (
    FigureJob,
    PlotkitError,
    parse_keyvalue,
    read_csv_columns,
    read_matrix,
    read_summary,
)

_STYLE = resources.files("plotkit") / "style.mplstyle"


def render(job: FigureJob) -> Path:
    """Produce job.output (PNG) from job.inputs; returns the output path."""
    with plt.style.context(str(_STYLE)):
        fig = plt.figure()
        try:
            _DISPATCH[job.kind](fig, job)
            return _save(fig, job.output)
        finally:
            plt.close(fig)


def _labels(job, default_from_paths=True):
    if job.labels:
        if len(job.labels) != len(job.inputs):
            raise PlotkitError(
                f"{len(job.labels)} labels for {len(job.inputs)} inputs"
            )
        return list(job.labels)
    if default_from_paths:
        return [p.stem for p in job.inputs]
    return [str(i) for i in range(len(job.inputs))]


def _loss_curves(fig, job):
    ax = fig.add_subplot(111)
    for path, label in zip(job.inputs, _labels(job)):
        cols = read_csv_columns(path, ("step", "loss"))
        ax.plot(cols["step"], cols["loss"], label=label)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()


def _kernel_heatmap(fig, job):
    mats = [read_matrix(p) for p in job.inputs]
    vmin = min(m.min() for m in mats)
    vmax = max(m.max() for m in mats)
    fig.set_size_inches(3.4 * len(mats) + 1.0, 3.4)
    axes = fig.subplots(1, len(mats), squeeze=False)[0]
    for ax, mat, label in zip(axes, mats, _labels(job)):
        image = ax.imshow(mat, vmin=vmin, vmax=vmax, interpolation="nearest")
        ax.set_title(label)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(image, ax=list(axes), fraction=0.046)


def _trajectory_2d(fig, job):
    (path,) = job.inputs if len(job.inputs) == 1 else (job.inputs[0],)
    cols = read_csv_columns(path, ("step",))
    fnames = sorted((c for c in cols if c.startswith("f_")), key=lambda c: int(c[2:]))
    if len(fnames) < 2:
        raise PlotkitError(f"{path}: trajectory_2d needs at least columns f_0,f_1")
    fvals = np.column_stack([cols[c] for c in fnames])
    centered = fvals - fvals.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    proj = centered @ vt[:2].T
    ax = fig.add_subplot(111)
    points = ax.scatter(proj[:, 0], proj[:, 1], c=cols["step"], s=14)
    ax.plot(proj[:, 0], proj[:, 1], alpha=0.5, linewidth=0.8)
    ax.scatter(*proj[0], marker="o", facecolors="none", edgecolors="black", s=90, label="start")
    ax.scatter(*proj[-1], marker="*", color="black", s=90, label="end")
    ax.set_xlabel("principal component 1")
    ax.set_ylabel("principal component 2")
    ax.legend()
    fig.colorbar(points, ax=ax, label="step")


def _sweep_summary(fig, job):
    (path,) = job.inputs if len(job.inputs) == 1 else (job.inputs[0],)
    cols = read_summary(path)
    ax = fig.add_subplot(111)
    ax.errorbar(
        cols["kernel_scale"],
        cols["loss_at_checkpoint"],
        yerr=3 * cols["se_at_checkpoint"],
        fmt="o",
        capsize=3,
    )
    for label, x, y in zip(cols["cell"], cols["kernel_scale"], cols["loss_at_checkpoint"]):
        ax.annotate(label, (x, y), textcoords="offset points", xytext=(5, 4), fontsize=7)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("kernel scale")
    ax.set_ylabel("loss at checkpoint")


_DISPATCH = {
    "loss_curves": _loss_curves,
    "kernel_heatmap": _kernel_heatmap,
    "trajectory_2d": _trajectory_2d,
    "sweep_summary": _sweep_summary,
}


def _save(fig, output: Path) -> Path:
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    tmp = output.with_name(output.name + ".tmp")
    fig.savefig(tmp, format="png")
    os.replace(tmp, output)
    return output


# ---------------------------------------------------------------------------
# default figure sets per run kind


def render_all(manifest_path, out_dir=None) -> list:
    """Render the default figures for a completed run.

    Reads only the manifest and the artifacts it lists; images go to
    out_dir (default: the current directory), never into the run."""
    manifest_path = Path(manifest_path)
    data = parse_keyvalue(manifest_path)
    if "command" not in data:
        raise PlotkitError(f"{manifest_path}: not a run manifest (no command key)")
    run_dir = manifest_path.parent
    out_dir = Path(out_dir) if out_dir is not None else Path.cwd()
    artifacts = [
        data[key] for key in sorted((k for k in data if k.startswith("artifact.")), key=lambda k: int(k.split(".")[1]))
    ]
    missing = [a for a in artifacts if not (run_dir / a).is_file()]
    if missing:
        raise PlotkitError("manifest lists missing artifacts: " + ", ".join(missing))

    def present(name):
        return name in artifacts

    command = data["command"]
    jobs = []
    if command == "train":
        curves = [run_dir / a for a in artifacts if a.startswith("trajectory")]
        if not curves:
            raise PlotkitError("train manifest lists no trajectory CSVs")
        jobs.append(FigureJob("loss_curves", tuple(curves), out_dir / "loss_curves.png"))
    elif command == "kernel":
        pair = [run_dir / "kernel_ntk.csv", run_dir / "kernel_mc.csv"]
        jobs.append(
            FigureJob("kernel_heatmap", tuple(pair), out_dir / "kernel_heatmaps.png",
                      labels=("exact tangent kernel", "two-point Monte Carlo"))
        )
    elif command == "dynamics":
        jobs.append(
            FigureJob("trajectory_2d", (run_dir / "empirical_fvals.csv",), out_dir / "trajectory_2d.png")
        )
        if present("empirical_se.csv"):
            pass  # the 2-D projection already reflects the seed mean
    elif command == "sweep":
        cells = [run_dir / a for a in artifacts if a.startswith("cell_")]
        jobs.append(FigureJob("loss_curves", tuple(cells), out_dir / "sweep_curves.png"))
        jobs.append(FigureJob("sweep_summary", (run_dir / "summary.csv",), out_dir / "sweep_summary.png"))
    elif command == "check":
        raise PlotkitError("check runs have no default figures")
    else:
        raise PlotkitError(f"no default figure set for command {command!r}")
    return [render(job) for job in jobs]
