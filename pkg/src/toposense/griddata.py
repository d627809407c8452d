"""GRID2D v1 gridded-field text format and bilinear sampling.

Carries wind-stress components and bottom topography given on a rectangular
(longitude/latitude or x/y) grid.  Axis values must be strictly increasing;
values are stored row-major, one row per y (or latitude) entry.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

GRID_FORMAT_HEADER = "GRID2D v1"


class GridDataError(ValueError):
    """Raised for malformed grid files or out-of-hull sampling."""


@dataclass(frozen=True, eq=False)
class GriddedField:
    """Values on a tensor grid with bilinear interpolation."""

    x: np.ndarray       # (nx,) strictly increasing
    y: np.ndarray       # (ny,) strictly increasing
    values: np.ndarray  # (ny, nx)

    def __post_init__(self):
        if np.any(np.diff(self.x) <= 0) or np.any(np.diff(self.y) <= 0):
            raise GridDataError("grid axes must be strictly increasing")
        if self.values.shape != (self.y.size, self.x.size):
            raise GridDataError(
                f"values shape {self.values.shape} does not match axes "
                f"({self.y.size}, {self.x.size})"
            )

    def sample(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        """Bilinear interpolation at point arrays; points must lie in the hull."""
        px = np.asarray(px, dtype=np.float64)
        py = np.asarray(py, dtype=np.float64)
        eps_x = 1e-9 * (self.x[-1] - self.x[0])
        eps_y = 1e-9 * (self.y[-1] - self.y[0])
        if (px.min() < self.x[0] - eps_x or px.max() > self.x[-1] + eps_x
                or py.min() < self.y[0] - eps_y or py.max() > self.y[-1] + eps_y):
            raise GridDataError(
                "sample point outside grid hull: "
                f"x in [{px.min():g}, {px.max():g}] vs [{self.x[0]:g}, {self.x[-1]:g}], "
                f"y in [{py.min():g}, {py.max():g}] vs [{self.y[0]:g}, {self.y[-1]:g}]"
            )
        ix = np.clip(np.searchsorted(self.x, px) - 1, 0, self.x.size - 2)
        iy = np.clip(np.searchsorted(self.y, py) - 1, 0, self.y.size - 2)
        x0 = self.x[ix]
        y0 = self.y[iy]
        tx = (px - x0) / (self.x[ix + 1] - x0)
        ty = (py - y0) / (self.y[iy + 1] - y0)
        v00 = self.values[iy, ix]
        v01 = self.values[iy, ix + 1]
        v10 = self.values[iy + 1, ix]
        v11 = self.values[iy + 1, ix + 1]
        return (v00 * (1 - tx) * (1 - ty) + v01 * tx * (1 - ty)
                + v10 * (1 - tx) * ty + v11 * tx * ty)


def save_grid(field: GriddedField, path: str | os.PathLike) -> None:
    lines = [
        GRID_FORMAT_HEADER,
        f"NX {field.x.size}",
        f"NY {field.y.size}",
        "X",
        " ".join(repr(float(v)) for v in field.x),
        "Y",
        " ".join(repr(float(v)) for v in field.y),
        "VALUES",
    ]
    for row in field.values:
        lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_grid(path: str | os.PathLike) -> GriddedField:
    """Read a GRID2D v1 file; '#' starts a comment."""
    tokens: list[str] = []
    with open(path) as fh:
        first = None
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            if first is None:
                first = text
                if text != GRID_FORMAT_HEADER:
                    raise GridDataError(
                        f"{path}:{lineno}: expected header '{GRID_FORMAT_HEADER}', got '{text}'"
                    )
                continue
            tokens.extend(text.split())

    pos = 0

    def take(n_or_tag):
        nonlocal pos
        if isinstance(n_or_tag, str):
            if pos >= len(tokens) or tokens[pos] != n_or_tag:
                got = tokens[pos] if pos < len(tokens) else "<eof>"
                raise GridDataError(f"{path}: expected '{n_or_tag}', got '{got}'")
            pos += 1
            return None
        if pos + n_or_tag > len(tokens):
            raise GridDataError(f"{path}: unexpected end of file")
        out = tokens[pos:pos + n_or_tag]
        pos += n_or_tag
        return out

    take("NX")
    nx = int(take(1)[0])
    take("NY")
    ny = int(take(1)[0])
    if nx < 2 or ny < 2:
        raise GridDataError(f"{path}: grid must be at least 2x2, got {nx}x{ny}")
    take("X")
    x = np.array([float(v) for v in take(nx)])
    take("Y")
    y = np.array([float(v) for v in take(ny)])
    take("VALUES")
    vals = np.array([float(v) for v in take(nx * ny)]).reshape(ny, nx)
    if pos != len(tokens):
        raise GridDataError(f"{path}: {len(tokens) - pos} trailing tokens")
    return GriddedField(x=x, y=y, values=vals)
