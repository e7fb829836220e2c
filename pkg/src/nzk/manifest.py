"""Run manifests: one `manifest` key-value file per command invocation.

The manifest is written after every artifact, so its presence marks a
completed run.  It lists the command, the fully resolved configuration,
every artifact path, and one verdict per check with the measured value
and the tolerance it was held to.
"""

from __future__ import annotations

from dataclasses import dataclass, field

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass
class Verdict:
    name: str
    status: str
    measured: str
    tolerance: str
    detail: str = ""

    @classmethod
    def check(cls, name, ok: bool, measured, tolerance, detail: str = "") -> "Verdict":
        return cls(name, PASS if ok else FAIL, _fmt(measured), _fmt(tolerance), detail)

    @classmethod
    def inconclusive(cls, name, measured, tolerance, detail: str = "") -> "Verdict":
        return cls(name, INCONCLUSIVE, _fmt(measured), _fmt(tolerance), detail)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None = None
    artifacts: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    wall_clock_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(v.status != FAIL for v in self.verdicts)

    def exit_code(self) -> int:
        return 0 if self.passed else 1


def write_manifest(path, manifest: RunManifest):
    lines = [f"command = {manifest.command}"]
    if manifest.seed is not None:
        lines.append(f"seed = {manifest.seed}")
    lines.append(f"wall_clock_s = {manifest.wall_clock_s:.3f}")
    for key in sorted(manifest.config):
        lines.append(f"config.{key} = {manifest.config[key]}")
    for i, artifact in enumerate(manifest.artifacts):
        lines.append(f"artifact.{i} = {artifact}")
    for v in manifest.verdicts:
        lines.append(f"verdict.{v.name} = {v.status}")
        lines.append(f"measured.{v.name} = {v.measured}")
        lines.append(f"tolerance.{v.name} = {v.tolerance}")
        if v.detail:
            lines.append(f"detail.{v.name} = {v.detail}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    from .config import Config

    return Config.from_path(path).data


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)
