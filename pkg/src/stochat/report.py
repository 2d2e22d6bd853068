"""CSV persistence and figure rendering for experiment runs.

The CSV column set is the wire contract; figures are rendered next to the
delimited output as PNG for quick inspection and carry no extra data.
"""

from __future__ import annotations

import csv
import io

import numpy as np

CSV_COLUMNS = [
    "lattice_kind",
    "seed",
    "nu_x",
    "nu_y",
    "t",
    "ell",
    "density",
    "raw_energy",
    "candidate_kind",
    "flips_accepted",
    "wall_ms",
]


def rows_to_csv(rows: list[dict]) -> str:
    """Render sweep rows with the mandatory header, UTF-8, '.' decimals."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        out = dict(row)
        for key in ("nu_x", "nu_y", "t", "ell", "density", "raw_energy", "wall_ms"):
            out[key] = f"{float(row[key]):.17g}"
        writer.writerow(out)
    return buf.getvalue()


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


def _agg_by_direction(rows: list[dict]) -> tuple[np.ndarray, np.ndarray]:
    keys = sorted({(r["nu_x"], r["nu_y"]) for r in rows})
    angles = np.asarray([np.arctan2(ny, nx) for nx, ny in keys])
    means = np.asarray([
        np.mean([r["density"] for r in rows if (r["nu_x"], r["nu_y"]) == key]) for key in keys
    ])
    return angles, means


def save_anisotropy_figure(rows: list[dict], path, title: str = "") -> None:
    """Polar plot of direction-averaged surface densities."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    angles, means = _agg_by_direction(rows)
    # A planar interface with normal nu is the same as with -nu.
    ang_full = np.concatenate([angles, angles + np.pi, angles[:1]])
    val_full = np.concatenate([means, means, means[:1]])
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(projection="polar")
    ax.plot(ang_full, val_full, "o-", ms=3)
    ax.set_rmin(0.0)
    ax.set_title(title or "surface density by interface normal")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_ell_figure(per_ell: list[dict], path, title: str = "") -> None:
    """Estimate vs mesh ratio with the two-sided bracket band."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ell = np.asarray([d["ell"] for d in per_ell])
    dens = np.asarray([d["density"] for d in per_ell])
    lo = np.asarray([d["bracket_lo"] for d in per_ell])
    hi = np.asarray([d["bracket_hi"] for d in per_ell])
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.fill_between(ell, lo, hi, alpha=0.25, label="bracket")
    ax.plot(ell, dens, "o-", label="estimate")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log", base=2)
    ax.set_xlabel("mesh-to-eps ratio")
    ax.set_ylabel("surface density")
    ax.legend()
    ax.set_title(title or "coarse-mesh surface density")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_segment_figure(u_img, v_img, g_img, path) -> None:
    """Input / reconstruction / edge-set panels for a segmentation run."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 3, figsize=(10, 3.6))
    for ax, img, name in zip(axes, (g_img, u_img, v_img), ("input", "u", "v")):
        ax.imshow(img.pixels, cmap="gray", vmin=0.0, vmax=1.0, interpolation="nearest")
        ax.set_title(name)
        ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
