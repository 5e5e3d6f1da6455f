"""File formats: density files, CSV tables and JSON reports.

Density files are plain text::

    # onsager-density 1
    # space <descriptor hash>
    # n <number of points>
    # descriptor <space descriptor as JSON>
    # meta <free JSON>
    <one value per line, printed with 17 significant digits>

Seventeen significant digits make the text round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .space import Density, DiscreteSpace

DENSITY_MAGIC = "# onsager-density 1"

TRACE_COLUMNS = ("b", "iteration", "energy", "residual", "two_over_b_energy")
STATE_COLUMNS = ("b", "iterations", "energy", "residual", "two_over_b_energy", "converged", "min_density")
BRANCH_COLUMNS = ("b", "root", "h_residual", "branch_energy", "gamma", "stable_hint")
CONCENTRATION_COLUMNS = ("b", "candidate", "eps", "mass", "two_over_b_energy", "bl_distance")


def format_float(x) -> str:
    """Shortest repr that round-trips; ints and bools pass through unchanged."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_float(v) for v in row])
    return path


def read_csv(path) -> tuple[list, list]:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_density(path, density: Density, meta: dict | None = None) -> Path:
    """Write ``density`` with a header naming its space."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    space = density.space
    lines = [
        DENSITY_MAGIC,
        f"# space {space.descriptor_hash()}",
        f"# n {space.n}",
        "# descriptor " + json.dumps(space.descriptor(), sort_keys=True),
        "# meta " + json.dumps(_clean(meta or {}), sort_keys=True),
    ]
    body = "\n".join(f"{v:.17g}" for v in density.values)
    path.write_text("\n".join(lines) + "\n" + body + "\n")
    return path


def read_density(path, space: DiscreteSpace | None = None):
    """Read a density file.

    Returns ``(values, header)`` where ``header`` holds ``space``, ``n``,
    ``descriptor`` and ``meta``. With ``space`` given, the stored hash must
    match and a :class:`Density` is returned in place of the raw values.
    """
    text = Path(path).read_text().splitlines()
    if not text or text[0] != DENSITY_MAGIC:
        raise ValueError(f"{path}: not a density file")
    header = {}
    i = 1
    while i < len(text) and text[i].startswith("# "):
        key, _, rest = text[i][2:].partition(" ")
        header[key] = json.loads(rest) if key in ("descriptor", "meta") else rest
        i += 1
    values = np.array([float(t) for t in text[i:] if t.strip()])
    n = int(header.get("n", values.size))
    if values.size != n:
        raise ValueError(f"{path}: header says {n} values, found {values.size}")
    if space is not None:
        if header.get("space") != space.descriptor_hash():
            raise ValueError(f"{path}: density belongs to space {header.get('space')}, not {space.descriptor_hash()}")
        return Density(values, space), header
    return values, header
