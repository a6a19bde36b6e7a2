"""Per-update metrics rows and their CSV form."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__

COLUMNS = ("update", "env_steps", "mean_ext_return", "mean_int_reward", "memory_action_frac",
           "cliff_falls_cum", "coverage", "pred_loss", "refl_loss", "ae_loss", "policy_loss",
           "v_ext_loss", "v_int_loss", "entropy")
EPISODE_COLUMNS = ("index", "update", "env", "length", "total_return", "kind", "memory_steps")


def fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


def header_line(config_hash: str, seed: int) -> str:
    return f"# config_hash={config_hash} seed={seed} version={__version__}\n"


@dataclass
class MetricsLog:
    config_hash: str
    seed: int
    rows: list = field(default_factory=list)
    episodes: list = field(default_factory=list)

    def append(self, row: dict):
        if self.rows and row["update"] <= self.rows[-1]["update"]:
            raise ValueError("metric rows must have strictly increasing update index")
        self.rows.append(row)

    def to_csv(self) -> str:
        lines = [header_line(self.config_hash, self.seed), ",".join(COLUMNS) + "\n"]
        lines += [",".join(fmt(r[c]) for c in COLUMNS) + "\n" for r in self.rows]
        return "".join(lines)

    def episodes_csv(self) -> str:
        lines = [",".join(EPISODE_COLUMNS) + "\n"]
        for e in self.episodes:
            lines.append(",".join(fmt(getattr(e, c)) if c != "kind" else e.kind for c in EPISODE_COLUMNS) + "\n")
        return "".join(lines)


class CsvAppender:
    """Writes the header immediately and flushes after every row, so a killed
    run leaves a parseable prefix."""

    def __init__(self, path, config_hash: str, seed: int):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="") as fh:
            fh.write(header_line(config_hash, seed))
            fh.write(",".join(COLUMNS) + "\n")

    def __call__(self, row: dict):
        with open(self.path, "a", newline="") as fh:
            fh.write(",".join(fmt(row[c]) for c in COLUMNS) + "\n")
            fh.flush()


def read_metrics(path):
    """Rows of a metrics CSV as dicts of floats (header comment skipped)."""
    import csv

    with open(path, newline="") as fh:
        lines = [l for l in fh if not l.startswith("#")]
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(lines)]
