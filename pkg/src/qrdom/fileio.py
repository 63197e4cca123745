"""CSV and text artifacts.

Floats are written with Python's shortest round-trip representation, so a
field read back from CSV is bitwise identical to the one written.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mesh import StructuredMesh, build_mesh

TRACE_COLUMNS = ("l", "m_prev", "m_curr", "M", "F_psi0", "rel_change")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([fmt(v) for v in row] for row in rows)


def write_field_csv(path, mesh: StructuredMesh, values: np.ndarray) -> None:
    values = mesh.check(values)
    write_csv(path, ("x1", "x2", "value"), zip(mesh.x1, mesh.x2, values))


def read_field_csv(path) -> tuple[StructuredMesh, np.ndarray]:
    """Read a nodal field and rebuild its mesh from the node coordinates."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"field file {path} not found")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x1, x2, values = (np.ascontiguousarray(data[:, k]) for k in range(3))
    nx = np.unique(x1).size - 1
    ny = np.unique(x2).size - 1
    mesh = build_mesh(x1.min(), x1.max(), x2.min(), x2.max(), nx, ny)
    if values.size != mesh.n_nodes or not (
        np.allclose(mesh.x1, x1, rtol=0, atol=1e-12) and np.allclose(mesh.x2, x2, rtol=0, atol=1e-12)
    ):
        raise ValueError(f"{path} is not a row-major nodal field on a uniform mesh")
    return mesh, values


def write_trace_csv(path, trace) -> None:
    write_csv(path, TRACE_COLUMNS, ((t.l, t.m_prev, t.m_curr, t.M, t.F_value, t.rel_change) for t in trace))


def read_csv_rows(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def aligned_table(header: Sequence[str], rows: Sequence[Sequence], floatfmt: str = "{:.6g}") -> str:
    def cell(v):
        if isinstance(v, str):
            return v
        if isinstance(v, (int, np.integer)):
            return str(v)
        return floatfmt.format(v)

    cells = [list(header)] + [[cell(v) for v in row] for row in rows]
    widths = [max(len(r[k]) for r in cells) for k in range(len(header))]
    out = []
    for n, r in enumerate(cells):
        out.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
        if n == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def write_report(path, items: Sequence[tuple[str, object]]) -> None:
    with open(path, "w") as fh:
        for key, value in items:
            fh.write(f"{key} = {fmt(value) if not isinstance(value, str) else value}\n")


def read_report(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if " = " in line:
            key, value = line.split(" = ", 1)
            out[key.strip()] = value.strip()
    return out
