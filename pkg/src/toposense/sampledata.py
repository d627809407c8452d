"""Synthetic sample data for the realistic-basin pipeline.

The published Atlantic triangulation and the gridded wind/topography
datasets are not distributed, so this module fabricates deterministic
stand-ins: a coastline-shaped warp of the graded square mesh, a zonal
two-gyre wind stress on a lon/lat grid, and a smooth abyssal topography
that stays at least 1 km deep (the basin boundary plays the role of the
1 km isobath).
"""

from __future__ import annotations

import os

import numpy as np

from .dynamics import BasinMap
from .griddata import GriddedField, save_grid
from .mesh import Mesh, generate_graded_square_mesh, save_mesh


def make_basin_mesh(side_length: float = 4000.0e3, n_coarse: int = 6,
                    grading_ratio: float = 8.0) -> Mesh:
    """Warp the graded square into a curvy west-bulged basin shape.

    The warp moves only the x coordinate and keeps dx'/dx positive, so
    orientation, conformity and boundary loops of the source mesh are all
    preserved.
    """
    square = generate_graded_square_mesh(side_length, n_coarse, grading_ratio)
    u = square.vertices[:, 0] / side_length
    v = square.vertices[:, 1] / side_length
    west = 0.16 * np.sin(np.pi * v) * (1.0 - 0.45 * v)
    east = 1.0 - 0.12 * np.sin(np.pi * v) ** 2 - 0.05 * v
    x = (west + (east - west) * u) * side_length
    y = v * side_length
    vertices = np.column_stack([x, y])
    return Mesh(vertices=vertices, triangles=square.triangles,
                boundary_edges=square.boundary_edges)


def _grid_axes(basin_map: BasinMap, mesh: Mesh, nx: int, ny: int):
    """Lon/lat axes covering the mapped mesh hull with a 5 percent margin."""
    lon, lat = basin_map.to_lonlat(mesh.vertices[:, 0], mesh.vertices[:, 1])
    pad_lon = 0.05 * (lon.max() - lon.min())
    pad_lat = 0.05 * (lat.max() - lat.min())
    gx = np.linspace(lon.min() - pad_lon, lon.max() + pad_lon, nx)
    gy = np.linspace(lat.min() - pad_lat, lat.max() + pad_lat, ny)
    return gx, gy


def make_sample_wind(basin_map: BasinMap, mesh: Mesh, tau0: float = 0.11,
                     nx: int = 61, ny: int = 61):
    """Zonal stress with a double-gyre curl; returns (tau_x, tau_y) fields.

    ``tau0`` is in N/m^2 (0.11 N/m^2 = 1.1 dyne/cm^2).
    """
    gx, gy = _grid_axes(basin_map, mesh, nx, ny)
    lat0, lat1 = gy[0], gy[-1]
    phase = 2.0 * np.pi * (gy - lat0) / (lat1 - lat0)
    taux = -tau0 * np.cos(phase)[:, None] * np.ones((1, gx.size))
    tau_x = GriddedField(x=gx, y=gy, values=taux)
    tau_y = GriddedField(x=gx, y=gy, values=np.zeros((gy.size, gx.size)))
    return tau_x, tau_y


def make_sample_topography(basin_map: BasinMap, mesh: Mesh,
                           nx: int = 81, ny: int = 81) -> GriddedField:
    """Abyssal plain with a mid-basin ridge, clipped to stay >= 1100 m."""
    gx, gy = _grid_axes(basin_map, mesh, nx, ny)
    lon, lat = np.meshgrid(gx, gy)
    lon_mid = 0.5 * (gx[0] + gx[-1])
    lon_span = gx[-1] - gx[0]
    lat_span = gy[-1] - gy[0]
    ridge = 1600.0 * np.exp(-((lon - lon_mid) / (0.12 * lon_span)) ** 2)
    shelf = 900.0 * np.exp(-((lat - gy[-1]) / (0.18 * lat_span)) ** 2)
    depth = 4500.0 - ridge - shelf
    depth = np.maximum(depth, 1100.0)
    return GriddedField(x=gx, y=gy, values=depth)


def write_sample_dataset(directory, side_length: float = 4000.0e3,
                         n_coarse: int = 6, grading_ratio: float = 8.0) -> dict:
    """Write basin.mesh2d, taux/tauy/topo .grid2d files; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    mesh = make_basin_mesh(side_length, n_coarse, grading_ratio)
    basin_map = BasinMap(side_length=side_length)
    tau_x, tau_y = make_sample_wind(basin_map, mesh)
    topo = make_sample_topography(basin_map, mesh)
    paths = {
        "mesh": os.path.join(directory, "basin.mesh2d"),
        "taux": os.path.join(directory, "taux.grid2d"),
        "tauy": os.path.join(directory, "tauy.grid2d"),
        "topo": os.path.join(directory, "topo.grid2d"),
    }
    save_mesh(mesh, paths["mesh"])
    save_grid(tau_x, paths["taux"])
    save_grid(tau_y, paths["tauy"])
    save_grid(topo, paths["topo"])
    return paths
