"""Experiment results: rows, verdicts and their on-disk form."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .._io import atomic_write_json, atomic_write_text, csv_text


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ExperimentReport:
    """Outcome of one harness run.

    ``rows`` are flat dicts sharing one key order; they become ``<tag>.csv``.
    Configuration, verdicts, notes and timing go to ``<tag>.json``.
    """

    tag: str
    config: dict
    rows: list[dict] = field(default_factory=list)
    verdicts: list[Verdict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.verdicts.append(Verdict(name, bool(passed), detail))

    def columns(self) -> list[str]:
        cols: list[str] = []
        for row in self.rows:
            for key in row:
                if key not in cols:
                    cols.append(key)
        return cols

    def csv(self) -> str:
        cols = self.columns()
        return csv_text(cols, ([row.get(c) for c in cols] for row in self.rows))

    def to_dict(self) -> dict[str, Any]:
        return {
            "tag": self.tag,
            "config": self.config,
            "verdicts": [{"name": v.name, "passed": v.passed, "detail": v.detail} for v in self.verdicts],
            "passed": self.passed,
            "notes": self.notes,
            "wall_clock_seconds": self.wall_clock,
        }

    def write(self, outdir: str | Path) -> tuple[Path, Path]:
        outdir = Path(outdir)
        csv_path = outdir / f"{self.tag}.csv"
        json_path = outdir / f"{self.tag}.json"
        atomic_write_text(csv_path, self.csv())
        atomic_write_json(json_path, self.to_dict())
        return csv_path, json_path


def joint_se(*ses: float) -> float:
    return math.sqrt(sum(s * s for s in ses))
