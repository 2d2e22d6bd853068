"""Grayscale PGM I/O and transfer between pixel grids and lattices.

Images are stored as floats in [0, 1]. The lattice domain maps affinely onto
the pixel-center grid: domain corners go to the centers of the corner pixels,
so every lattice point lands inside the bilinear interpolation stencil and a
point mapped onto a pixel center reproduces that pixel exactly. Rasterization
is the piecewise-constant Voronoi interpolation (nearest lattice point).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .lattice import PointSet

__all__ = [
    "GrayImage",
    "ImageError",
    "read_pgm",
    "write_pgm",
    "sample_image_to_lattice",
    "rasterize_field",
]

ASPECT_TOL = 1e-6


class ImageError(ValueError):
    """Malformed PGM data or invalid image geometry."""


@dataclass(frozen=True)
class GrayImage:
    """Row-major grayscale image with values in [0, 1]; row 0 is the top."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width) float64 in [0, 1]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (self.height, self.width) or self.width < 1 or self.height < 1:
            raise ImageError("pixel array must be (height, width) and nonempty")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ImageError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)


def _tokenize_header(data: bytes):
    """Yield whitespace-separated header tokens, skipping # comments."""
    pos = 0
    while True:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise ImageError("unterminated comment in PGM header")
            pos = nl + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageError("truncated PGM header")
        yield data[start:pos], pos


def read_pgm(path) -> GrayImage:
    """Read a P2 (ascii) or P5 (binary) PGM; values normalized by maxval."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = _tokenize_header(data)
    magic, _ = next(tokens)
    if magic not in (b"P2", b"P5"):
        raise ImageError(f"unsupported magic {magic!r}: only P2/P5 PGM")
    fields = []
    end = 0
    for _ in range(3):
        tok, end = next(tokens)
        if not re.fullmatch(rb"\d+", tok):
            raise ImageError(f"malformed header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ImageError("image dimensions must be positive")
    if not (0 < maxval <= 65535):
        raise ImageError("maxval must be in (0, 65535]")

    count = width * height
    if magic == b"P5":
        payload = data[end + 1 :]  # exactly one whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(payload) < need:
            raise ImageError("truncated P5 payload")
        raw = np.frombuffer(payload[:need], dtype=dtype).astype(np.float64)
    else:
        text = data[end:]
        vals = text.split()
        if len(vals) < count:
            raise ImageError("truncated P2 payload")
        try:
            raw = np.asarray([int(v) for v in vals[:count]], dtype=np.float64)
        except ValueError as exc:
            raise ImageError(f"non-integer P2 sample: {exc}") from exc
    if raw.max(initial=0.0) > maxval:
        raise ImageError("sample exceeds maxval")
    return GrayImage(width, height, (raw / maxval).reshape(height, width))


def write_pgm(img: GrayImage, path, binary: bool = True) -> None:
    """Write maxval-255 PGM, P5 if binary else P2, round-half-up quantization."""
    q = np.floor(img.pixels * 255.0 + 0.5).astype(np.int64)
    q = np.clip(q, 0, 255)
    header = f"P5 {img.width} {img.height} 255\n" if binary else f"P2\n{img.width} {img.height}\n255\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(q.astype("u1").tobytes())
        else:
            lines = [" ".join(str(int(v)) for v in row) for row in q]
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


def _pixel_coords(ps: PointSet, width: int, height: int, stretch: bool) -> np.ndarray:
    """Map lattice points to (row, col) pixel-center coordinates."""
    if ps.dim != 2:
        raise ImageError("image transfer requires a 2D lattice")
    lo = np.asarray(ps.domain.lo)
    hi = np.asarray(ps.domain.hi)
    sides = hi - lo
    img_aspect = width / height
    dom_aspect = sides[0] / sides[1]
    if not stretch and abs(img_aspect - dom_aspect) > ASPECT_TOL * max(img_aspect, dom_aspect):
        raise ImageError(
            f"aspect ratio mismatch: image {img_aspect:g} vs domain {dom_aspect:g} (use stretch)"
        )
    u = (ps.points[:, 0] - lo[0]) / sides[0] * (width - 1) if width > 1 else np.zeros(len(ps))
    v = (hi[1] - ps.points[:, 1]) / sides[1] * (height - 1) if height > 1 else np.zeros(len(ps))
    return np.stack([v, u], axis=1)  # (row, col)


def sample_image_to_lattice(img: GrayImage, ps: PointSet, stretch: bool = False) -> np.ndarray:
    """Bilinear interpolation of the image at each lattice point."""
    rc = _pixel_coords(ps, img.width, img.height, stretch)
    r = np.clip(rc[:, 0], 0.0, img.height - 1.0)
    c = np.clip(rc[:, 1], 0.0, img.width - 1.0)
    r0 = np.minimum(np.floor(r).astype(int), img.height - 2) if img.height > 1 else np.zeros(len(r), int)
    c0 = np.minimum(np.floor(c).astype(int), img.width - 2) if img.width > 1 else np.zeros(len(c), int)
    fr = r - r0
    fc = c - c0
    r1 = np.minimum(r0 + 1, img.height - 1)
    c1 = np.minimum(c0 + 1, img.width - 1)
    px = img.pixels
    return (
        px[r0, c0] * (1 - fr) * (1 - fc)
        + px[r0, c1] * (1 - fr) * fc
        + px[r1, c0] * fr * (1 - fc)
        + px[r1, c1] * fr * fc
    )


def rasterize_field(f, ps: PointSet, width: int, height: int, stretch: bool = False) -> GrayImage:
    """Voronoi (nearest lattice point) rasterization, clamped to [0, 1]."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (len(ps),):
        raise ImageError("field must have one value per lattice point")
    if ps.dim != 2:
        raise ImageError("rasterization requires a 2D lattice")
    lo = np.asarray(ps.domain.lo)
    hi = np.asarray(ps.domain.hi)
    sides = hi - lo
    img_aspect = width / height
    dom_aspect = sides[0] / sides[1]
    if not stretch and abs(img_aspect - dom_aspect) > ASPECT_TOL * max(img_aspect, dom_aspect):
        raise ImageError(
            f"aspect ratio mismatch: image {img_aspect:g} vs domain {dom_aspect:g} (use stretch)"
        )
    cols = np.arange(width)
    rows = np.arange(height)
    x = lo[0] + (cols / (width - 1) * sides[0] if width > 1 else np.zeros(width))
    y = hi[1] - (rows / (height - 1) * sides[1] if height > 1 else np.zeros(height))
    gx, gy = np.meshgrid(x, y)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    _, nearest = cKDTree(ps.points).query(pts)
    vals = np.clip(f[nearest], 0.0, 1.0).reshape(height, width)
    return GrayImage(width, height, vals)
