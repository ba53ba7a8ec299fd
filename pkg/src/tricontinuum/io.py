"""File exports: legacy ASCII VTK and CSV."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .physics import CONTINUA


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_vtk(path, mesh, point_data=None, block_of_triangle=None):
    """Triangles plus fracture line cells; cell data ``block_id`` and ``fracture_id``."""
    path = Path(path)
    point_data = point_data or {}
    segs, frac_ids = mesh.fracture_segments
    nt, ns = mesh.n_triangles, len(segs)
    blocks = np.full(nt, -1) if block_of_triangle is None else np.asarray(block_of_triangle)
    lines = ["# vtk DataFile Version 3.0", "tricontinuum", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_nodes} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.nodes]
    lines.append(f"CELLS {nt + ns} {4 * nt + 3 * ns}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines += [f"2 {a} {b}" for a, b in segs]
    lines.append(f"CELL_TYPES {nt + ns}")
    lines += ["5"] * nt + ["3"] * ns
    lines.append(f"CELL_DATA {nt + ns}")
    lines += ["SCALARS block_id int 1", "LOOKUP_TABLE default"]
    lines += [str(int(b)) for b in blocks] + ["-1"] * ns
    lines += ["SCALARS fracture_id int 1", "LOOKUP_TABLE default"]
    lines += ["-1"] * nt + [str(int(s)) for s in frac_ids]
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in np.asarray(values)]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_state_vtk(path, mesh, u, block_of_triangle=None):
    n = mesh.n_nodes
    data = {f"u_{c}": u[i * n:(i + 1) * n] for i, c in enumerate(CONTINUA)}
    return write_vtk(path, mesh, data, block_of_triangle)


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        return list(csv.reader(fh))


def timeseries_rows(result, n):
    rows = []
    for k, s in enumerate(result.states):
        row = [s.t]
        for i in range(len(CONTINUA)):
            ui = s.u[i * n:(i + 1) * n]
            row += [ui.min(), ui.mean(), ui.max()]
        row += [result.mass[k], int(s.iterations)]
        rows.append(row)
    return rows


TIMESERIES_HEADER = ["t"] + [f"{c}_{q}" for c in CONTINUA for q in ("min", "mean", "max")] + ["mass", "iterations"]


def write_eigenvalues(path, modes, count=None):
    rows = []
    for i, m in enumerate(modes):
        vals = m.eigenvalues if count is None else m.eigenvalues[:count]
        rows += [[i, k + 1, float(v)] for k, v in enumerate(vals)]
    return write_csv(path, ["neighborhood", "k", "eigenvalue"], rows)
