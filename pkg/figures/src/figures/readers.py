"""CSV readers for the solver's documented output schemas.

The files are the whole contract: snapshots carry x[,y], u_1..u_N and the
adjacent coincidence indicators chi_i_j; timeseries carry t plus named
diagnostic columns; scaling tables are a scale column followed by measured
quantities.  Anything malformed (missing mandatory columns, ragged rows,
non-numeric cells) raises SchemaError.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

__all__ = ["SchemaError", "Table", "read_table", "snapshot_layout",
           "timeseries_layout"]

_CHI = re.compile(r"^chi_(\d+)_(\d+)$")
_U = re.compile(r"^u_(\d+)$")


class SchemaError(ValueError):
    """Input file does not match the documented CSV contract."""


@dataclass
class Table:
    path: str
    columns: list[str]
    rows: list[list[float]]

    def column(self, name: str) -> list[float]:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]


def read_table(path) -> Table:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}")
    lines = text.splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    reader = csv.reader(lines)
    header = next(reader)
    columns = [c.strip() for c in header]
    if len(columns) < 2 or any(not c for c in columns):
        raise SchemaError(f"{path}: malformed header {header!r}")
    rows = []
    for lineno, record in enumerate(reader, start=2):
        if not record:
            continue
        if len(record) != len(columns):
            raise SchemaError(
                f"{path}: line {lineno} has {len(record)} fields, "
                f"expected {len(columns)} (truncated file?)")
        try:
            rows.append([float(v) for v in record])
        except ValueError:
            raise SchemaError(f"{path}: non-numeric value on line {lineno}")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return Table(str(path), columns, rows)


def snapshot_layout(table: Table) -> tuple[list[str], list[str], list[str]]:
    """Split snapshot columns into coordinates, components, masks."""
    coords = [c for c in table.columns if c in ("x", "y")]
    comps = sorted((c for c in table.columns if _U.match(c)),
                   key=lambda c: int(_U.match(c).group(1)))
    masks = sorted((c for c in table.columns if _CHI.match(c)),
                   key=lambda c: tuple(map(int, _CHI.match(c).groups())))
    if "x" not in coords or not comps:
        raise SchemaError(
            f"{table.path}: snapshot needs at least columns 'x' and 'u_1', "
            f"got {table.columns}")
    leftovers = set(table.columns) - set(coords) - set(comps) - set(masks)
    if leftovers:
        raise SchemaError(
            f"{table.path}: unexpected snapshot columns {sorted(leftovers)}")
    return coords, comps, masks


def timeseries_layout(table: Table) -> dict[str, list[str]]:
    """Group timeseries columns by purpose; requires the 't' column."""
    if table.columns[0] != "t":
        raise SchemaError(
            f"{table.path}: timeseries must start with a 't' column")
    groups = {"norms": [], "diagnostics": [], "areas": [], "distances": []}
    for name in table.columns[1:]:
        if name.startswith(("l2_", "gradp_")):
            groups["norms"].append(name)
        elif name in ("ordering_defect", "ls_violation"):
            groups["diagnostics"].append(name)
        elif name.startswith("area_"):
            groups["areas"].append(name)
        elif name == "distance_to_stationary" or name.startswith("dist_"):
            groups["distances"].append(name)
        else:
            raise SchemaError(
                f"{table.path}: unknown timeseries column '{name}'")
    if not any(groups.values()):
        raise SchemaError(f"{table.path}: timeseries carries no data columns")
    return groups
