"""Field samples, error norms, convergence orders and file dumps."""

import csv
import math
from pathlib import Path

import numpy as np

from .basis import tensor_values
from .divfree import DivFreeField
from .errors import ConfigError
from .mesh import half_interval_nodes
from .physics import BX, BY, BZ, EN, MX, MY, MZ, RHO
from .solver import cell_center_primitives

DUMP_COLUMNS = ("x", "y", "rho", "u1", "u2", "u3", "B1", "B2", "B3", "p", "p_mag", "mach", "log10_rho", "div_b")


def error_norms(numeric, exact):
    """(l1, l2, linf) of the pointwise difference: mean |e|, root mean square, max |e|."""
    numeric = np.asarray(numeric, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if numeric.shape != exact.shape:
        raise ConfigError(f"error norms need equal shapes, got {numeric.shape} and {exact.shape}")
    if numeric.size == 0:
        raise ConfigError("error norms of an empty field")
    err = np.abs(numeric - exact)
    return float(err.mean()), float(np.sqrt(np.mean(err * err))), float(err.max())


def convergence_order(errors, ratio=2.0):
    """log_ratio(e_coarse / e_fine) for successive levels; ``nan`` where an error is zero."""
    errors = [float(e) for e in errors]
    if len(errors) < 2:
        raise ConfigError("convergence orders need at least two levels")
    orders = []
    for coarse, fine in zip(errors[:-1], errors[1:]):
        if coarse > 0 and fine > 0:
            orders.append(math.log(coarse / fine) / math.log(ratio))
        else:
            orders.append(float("nan"))
    return orders


def cell_divergence(disc, state):
    """Largest |div B| over the tensor Gauss nodes of each primal cell."""
    k = disc.k
    p = state.primal
    field = DivFreeField(p.field.b1[1:-1, 1:-1], p.field.b2[1:-1, 1:-1])
    div = disc.df_ops.divergence_coefficients(field)
    q, _ = half_interval_nodes(k + 1)
    sample = tensor_values(k, k, np.repeat(q, len(q)), np.tile(q, len(q)))
    return np.max(np.abs(div @ sample), axis=-1)


def field_samples(disc, state):
    """Dump columns at the primal cell centres, each of shape (nx, ny)."""
    prim = cell_center_primitives(disc, state)
    xc, yc = disc.mesh.primal_centers()
    x, y = np.meshgrid(xc[1:-1], yc[1:-1], indexing="ij")
    rho, p = prim[RHO], prim[EN]
    speed = np.sqrt(prim[MX] ** 2 + prim[MY] ** 2 + prim[MZ] ** 2)
    sound = np.sqrt(disc.gamma * p / rho)
    return {
        "x": x, "y": y, "rho": rho, "u1": prim[MX], "u2": prim[MY], "u3": prim[MZ],
        "B1": prim[BX], "B2": prim[BY], "B3": prim[BZ], "p": p,
        "p_mag": 0.5 * (prim[BX] ** 2 + prim[BY] ** 2 + prim[BZ] ** 2),
        "mach": speed / sound, "log10_rho": np.log10(rho), "div_b": cell_divergence(disc, state),
    }


def _rows(samples):
    """Row-major order: y outer, x inner."""
    cols = [np.asarray(samples[name]).T.ravel() for name in DUMP_COLUMNS]
    return np.column_stack(cols)


def write_csv(samples, path):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(DUMP_COLUMNS)
            for row in _rows(samples):
                writer.writerow([f"{v:.17g}" for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_csv(path):
    """Read a dump back as a dict of 1-D arrays in file row order."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    return {name: data[:, i] for i, name in enumerate(header)}


def write_vtk(samples, path, spacing, title="posdiv field dump"):
    """Legacy ASCII STRUCTURED_POINTS with every dump column as point data."""
    path = Path(path)
    nx, ny = np.asarray(samples["rho"]).shape
    origin = (float(samples["x"][0, 0]), float(samples["y"][0, 0]))
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_POINTS",
             f"DIMENSIONS {nx} {ny} 1", f"ORIGIN {origin[0]:.17g} {origin[1]:.17g} 0",
             f"SPACING {spacing[0]:.17g} {spacing[1]:.17g} 1", f"POINT_DATA {nx * ny}"]
    for name in DUMP_COLUMNS[2:]:
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{v:.17g}" for v in np.asarray(samples[name]).T.ravel())
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_dump(disc, state, directory, stem, formats=("csv",)):
    """Write one snapshot in every requested format; returns the paths written."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {directory}: {exc.strerror or exc}") from exc
    samples = field_samples(disc, state)
    paths = []
    for fmt in formats:
        if fmt == "csv":
            paths.append(write_csv(samples, directory / f"{stem}.csv"))
        elif fmt == "vtk":
            paths.append(write_vtk(samples, directory / f"{stem}.vtk", (disc.mesh.dx, disc.mesh.dy)))
        else:
            raise ConfigError(f"unknown output format {fmt!r}")
    return paths


def format_convergence_table(grids, norms):
    """Text table: grid, l1, order, l2, order, linf, order."""
    norms = np.asarray(norms, dtype=float)
    orders = [convergence_order(norms[:, j]) if len(grids) > 1 else [] for j in range(3)]
    head = f"{'grid':>10} {'l1':>12} {'order':>7} {'l2':>12} {'order':>7} {'linf':>12} {'order':>7}"
    lines = [head]
    for i, grid in enumerate(grids):
        cells = [f"{grid:>10}"]
        for j in range(3):
            order = "" if i == 0 else f"{orders[j][i - 1]:.3f}"
            cells.append(f"{norms[i, j]:12.4e} {order:>7}")
        lines.append(" ".join(cells))
    return "\n".join(lines)
