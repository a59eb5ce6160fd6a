"""CSV, density and manifest files.

Numbers are written with ``'.12g'`` formatting. The output does not
depend on the locale and round-trips to 12 significant digits.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..analytics.densities import LossDensity

FLOAT_FORMAT = ".12g"


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, FLOAT_FORMAT)
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Mapping | Sequence]) -> Path:
    """Write rows (mappings keyed by column, or sequences) with a header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            values = [row.get(c) for c in columns] if isinstance(row, Mapping) else list(row)
            w.writerow([format_value(v) for v in values])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV, header expected")
    return rows[0], rows[1:]


DENSITY_COLUMNS = ("loss", "density", "atom_mass")


def emit_density_csv(d: LossDensity, path) -> Path:
    """Write a loss density; the first data row holds the zero-loss atom."""
    rows = [(0.0, None, d.atom)]
    rows += [(x, y, None) for x, y in zip(d.grid, d.density)]
    return write_csv(path, DENSITY_COLUMNS, rows)


def read_density_csv(path) -> LossDensity:
    header, rows = read_csv(path)
    if tuple(header) != DENSITY_COLUMNS:
        raise ValueError(f"{path}: expected columns {DENSITY_COLUMNS}, got {header}")
    if not rows:
        raise ValueError(f"{path}: missing atom row")
    atom = float(rows[0][2])
    grid = np.array([float(r[0]) for r in rows[1:]])
    dens = np.array([float(r[1]) for r in rows[1:]])
    return LossDensity(grid, dens, atom)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to re-run a preset and check its outputs."""

    preset: str
    config: dict
    seed: int
    version: str
    wall_time: float = 0.0
    outputs: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        missing = {"preset", "config", "seed", "version"} - set(data)
        if missing:
            raise ValueError(f"{path}: manifest lacks {sorted(missing)}")
        return cls(**data)
