"""File exports: field/mask CSV, PGM masks, kernel profiles, manifests, reports, SVG plots."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Grid, MaskedField

REPORT_COLUMNS = ("sweep_value", "test_function", "sample_time", "weak_error",
                  "l2_distance", "bound_margin", "wall_ms")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def grid_header(grid: Grid) -> str:
    """'# grid n_1 .. n_dim h_1 .. h_dim' (for 2D: '# grid nx ny hx hy')."""
    parts = [str(n) for n in grid.n_per_dim] + [repr(h) for h in grid.h]
    return "# grid " + " ".join(parts)


def write_field_csv(path, field: MaskedField) -> Path:
    """Grid header, then the values row-major (one line per first-axis index)."""
    path = Path(path)
    vals = np.atleast_2d(field.values)
    with path.open("w", newline="") as fh:
        fh.write(grid_header(field.grid) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in vals:
            w.writerow([repr(float(v)) for v in row])
    return path


def write_mask_csv(path, field: MaskedField) -> Path:
    path = Path(path)
    vals = np.atleast_2d(field.mask.astype(int))
    with path.open("w", newline="") as fh:
        fh.write(grid_header(field.grid) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in vals:
            w.writerow(row.tolist())
    return path


def read_field_csv(path) -> tuple:
    """Inverse of write_field_csv: returns (shape, spacing, values)."""
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[:2] != ["#", "grid"]:
        raise ValueError(f"{path}: missing grid header")
    nums = head[2:]
    dim = len(nums) // 2
    shape = tuple(int(v) for v in nums[:dim])
    spacing = tuple(float(v) for v in nums[dim:])
    vals = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    return shape, spacing, vals.reshape(shape)


def write_pgm(path, chi_eps: MaskedField, omega: Optional[MaskedField] = None) -> Path:
    """Plain (ASCII) PGM: 255 on the perforated domain, 0 on holes, 128 outside Omega.

    Rows run along the second axis, top row = largest coordinate.
    """
    path = Path(path)
    img = np.where(chi_eps.mask, 255, 0)
    if omega is not None:
        img = np.where(omega.mask, img, 128)
    img = np.atleast_2d(img)
    if chi_eps.grid.dim == 2:
        img = img.T[::-1]
    h, w = img.shape
    with path.open("w") as fh:
        fh.write(f"P2\n{w} {h}\n255\n")
        for row in img:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")
    return path


def write_kernel_csv(path, stencil) -> Path:
    path = Path(path)
    names = ["offset_x", "offset_y"][: stencil.grid.dim] + ["weight"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in stencil.profile_rows():
            w.writerow([repr(float(v)) for v in row])
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_manifest(path, traj, config_hash: str, files: list, extra: Optional[dict] = None) -> Path:
    obj = {"config_hash": config_hash, "times": list(traj.times),
           "norms": [s.l2_norm() for s in traj.states], "files": files,
           "grid": traj.grid.describe()}
    if extra:
        obj.update(extra)
    return write_json(path, obj)


# --------------------------------------------------------------------------
# reports


def write_report_csv(path, report, timing: bool = False) -> Path:
    """One row per (sweep value, test function, sample time).

    wall_ms is left empty unless ``timing`` so identical configs give
    byte-identical files.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in report.records:
            row = [_fmt(r[c]) for c in REPORT_COLUMNS]
            if not timing:
                row[-1] = ""
            w.writerow(row)
    return path


def write_report_json(path, report) -> Path:
    return write_json(path, report.to_dict())


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "nlhom"
    return plt


def plot_sweep_svg(path, report) -> Path:
    """Max weak error and L2 distance at T versus the swept parameter, log axes."""
    plt = _pyplot()
    path = Path(path)
    x = np.array(report.values, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    werr = np.array(report.max_weak_errors(), dtype=float)
    l2 = np.array(report.l2_at_T(), dtype=float)
    ax.loglog(x, np.maximum(werr, 1e-300), "o-", label="max weak error")
    ax.loglog(x, np.maximum(l2, 1e-300), "s--", label="L2 distance at T")
    sym = "eps" if report.sweep_kind == "eps" else "delta"
    ax.set_xlabel(sym)
    ax.set_ylabel("error")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_field_svg(path, field: MaskedField, title: str = "") -> Path:
    plt = _pyplot()
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 4))
    g = field.grid
    if g.dim == 1:
        ax.plot(g.axes()[0], field.values)
    else:
        (lo0, hi0), (lo1, hi1) = g.box
        im = ax.imshow(field.values.T, origin="lower", extent=(lo0, hi0, lo1, hi1))
        fig.colorbar(im, ax=ax)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def report_from_json(path):
    """Rebuild a SweepReport from its JSON dump."""
    from .harness import SweepReport

    d = json.loads(Path(path).read_text())
    return SweepReport(d["config_hash"], d["sweep_kind"], d["values"], d["sample_times"],
                       d["test_functions"], d["records"], d["summary"], d["reference"],
                       d.get("metadata", {}))
