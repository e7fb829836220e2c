"""Figure jobs and the artifact-file formats they consume.

plotkit talks to runs only through their documented file formats: the
flat `key = value` manifest, trajectory/fvals/summary CSVs with headers,
and bare kernel matrices.  Inputs are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("loss_curves", "kernel_heatmap", "trajectory_2d", "sweep_summary")


class PlotkitError(Exception):
    pass


@dataclass(frozen=True)
class FigureJob:
    kind: str
    inputs: tuple
    output: Path
    labels: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotkitError(f"unknown figure kind {self.kind!r}")
        object.__setattr__(self, "inputs", tuple(Path(p) for p in self.inputs))
        object.__setattr__(self, "output", Path(self.output))
        missing = [str(p) for p in self.inputs if not p.is_file()]
        if not self.inputs:
            raise PlotkitError("a figure job needs at least one input")
        if missing:
            raise PlotkitError("missing inputs: " + ", ".join(missing))


def parse_keyvalue(path) -> dict:
    """The runner's flat config/manifest grammar: `key = value` lines,
    `#` comments, blank lines ignored."""
    data = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise PlotkitError(f"cannot read {path}: {err}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise PlotkitError(f"{path}:{lineno}: expected `key = value`")
        key, _, value = line.partition("=")
        data[key.strip()] = value.strip()
    return data


def job_from_spec(path) -> FigureJob:
    spec = parse_keyvalue(path)
    for key in ("kind", "inputs", "out"):
        if key not in spec:
            raise PlotkitError(f"job spec {path} is missing {key!r}")
    labels = tuple(s.strip() for s in spec.get("labels", "").split(",") if s.strip())
    inputs = tuple(s.strip() for s in spec["inputs"].split(",") if s.strip())
    return FigureJob(kind=spec["kind"], inputs=inputs, output=spec["out"], labels=labels)


def read_csv_columns(path, required: tuple) -> dict:
    """A headered CSV as {column: float array}; names the offending column
    on schema mismatch and rejects empty files."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise PlotkitError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    for col in required:
        if col not in header:
            raise PlotkitError(f"{path}: required column {col!r} not in header {header}")
    if len(lines) < 2:
        raise PlotkitError(f"{path}: no data rows")
    try:
        rows = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:]])
    except ValueError as err:
        raise PlotkitError(f"{path}: non-numeric cell ({err})") from None
    if rows.shape[1] != len(header):
        raise PlotkitError(f"{path}: ragged rows")
    return {name: rows[:, i] for i, name in enumerate(header)}


def read_matrix(path) -> np.ndarray:
    """A bare (headerless) kernel matrix CSV."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise PlotkitError(f"{path}: empty file")
    try:
        mat = np.array([[float(c) for c in ln.split(",")] for ln in lines])
    except ValueError:
        raise PlotkitError(f"{path}: not a numeric matrix (kernel CSVs have no header)") from None
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise PlotkitError(f"{path}: expected a square matrix, got {mat.shape}")
    return mat


def read_summary(path) -> dict:
    cols = read_csv_columns_with_text(path, ("cell", "kernel_scale", "loss_at_checkpoint", "se_at_checkpoint"))
    return cols


def read_csv_columns_with_text(path, required: tuple) -> dict:
    """Like read_csv_columns but the first column may be text labels."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise PlotkitError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    for col in required:
        if col not in header:
            raise PlotkitError(f"{path}: required column {col!r} not in header {header}")
    if len(lines) < 2:
        raise PlotkitError(f"{path}: no data rows")
    cells = [ln.split(",") for ln in lines[1:]]
    out = {}
    for i, name in enumerate(header):
        column = [row[i] for row in cells]
        if i == 0:
            out[name] = column
        else:
            try:
                out[name] = np.array([float(v) for v in column])
            except ValueError as err:
                raise PlotkitError(f"{path}: non-numeric cell in {name!r} ({err})") from None
    return out
