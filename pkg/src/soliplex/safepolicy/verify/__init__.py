"""Executable property checks and experiment reproductions.

Every check returns a :class:`CheckReport` and writes a CSV data file; the
report itself is serialized as JSON next to it.
"""

import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import model_validator

from soliplex.safepolicy import SafePolicyError

logger = logging.getLogger(__name__)


class VerifyError(SafePolicyError):
    pass


class CheckReport(BaseModel):
    name: str
    passed: bool
    # False for negative controls; their pass means the expected difference was seen
    applicable: bool = True
    metrics: list[tuple[str, float]] = Field(default_factory=list)
    artifact_path: str
    extra_artifacts: list[str] = Field(default_factory=list)

    def metric(self, label: str) -> float:
        for key, value in self.metrics:
            if key == label:
                return value
        raise KeyError(label)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if not self.applicable:
            status += " (control)"
        shown = ", ".join(f"{k}={v:.6g}" for k, v in self.metrics)
        return f"{status} {self.name}: {shown}"


def write_report(report: CheckReport, out_dir: str | Path) -> Path:
    """Serialize *report* as ``<out_dir>/<name>.json``."""
    path = Path(out_dir) / f"{report.name}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


class GridSpec(BaseModel):
    """A 2-D action slice at a fixed state."""

    model_config = ConfigDict(frozen=True)

    a1_range: tuple[float, float] = (-1.0, 1.0)
    a2_range: tuple[float, float] = (-1.0, 1.0)
    resolution: int = Field(101, ge=3)
    state: tuple[float, ...] = ()

    @model_validator(mode="after")
    def check_ranges(self):
        for lo, hi in (self.a1_range, self.a2_range):
            if not -1.0 <= lo < hi <= 1.0:
                raise ValueError(f"axis range ({lo}, {hi}) must be increasing and inside [-1, 1]")
        return self

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.linspace(*self.a1_range, self.resolution),
            np.linspace(*self.a2_range, self.resolution),
        )

    def points(self) -> np.ndarray:
        """Grid points as ``(resolution**2, 2)`` rows, ``a1`` varying slowest."""
        x, y = self.axes()
        gx, gy = np.meshgrid(x, y, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)
