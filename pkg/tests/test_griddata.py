"""Tensor-grid fields: validation, bilinear sampling, GRID2D file IO."""

import numpy as np
import pytest

from toposense.griddata import GriddedField, GridDataError, load_grid, save_grid


def make_field():
    x = np.array([0.0, 1.0, 2.5, 4.0])
    y = np.array([-1.0, 0.0, 2.0])
    xx, yy = np.meshgrid(x, y)
    return GriddedField(x=x, y=y, values=3.0 + 2.0 * xx - yy + 0.5 * xx * yy)


def test_axes_must_increase():
    with pytest.raises(GridDataError, match="strictly increasing"):
        GriddedField(x=np.array([0.0, 0.0, 1.0]), y=np.array([0.0, 1.0]),
                     values=np.zeros((2, 3)))
    with pytest.raises(GridDataError, match="strictly increasing"):
        GriddedField(x=np.array([0.0, 1.0]), y=np.array([1.0, 0.0]),
                     values=np.zeros((2, 2)))


def test_shape_must_match_axes():
    with pytest.raises(GridDataError, match="does not match axes"):
        GriddedField(x=np.array([0.0, 1.0]), y=np.array([0.0, 1.0, 2.0]),
                     values=np.zeros((2, 3)))


def test_bilinear_reproduces_bilinear_functions():
    field = make_field()
    rng = np.random.default_rng(7)
    px = rng.uniform(0.0, 4.0, 40)
    py = rng.uniform(-1.0, 2.0, 40)
    exact = 3.0 + 2.0 * px - py + 0.5 * px * py
    np.testing.assert_allclose(field.sample(px, py), exact, rtol=1e-13)


def test_sampling_at_nodes_is_exact():
    field = make_field()
    xx, yy = np.meshgrid(field.x, field.y)
    np.testing.assert_array_equal(field.sample(xx.ravel(), yy.ravel()),
                                  field.values.ravel())


def test_sampling_outside_hull_raises():
    field = make_field()
    with pytest.raises(GridDataError, match="outside grid hull"):
        field.sample(np.array([4.5]), np.array([0.0]))
    with pytest.raises(GridDataError, match="outside grid hull"):
        field.sample(np.array([1.0]), np.array([-1.1]))


def test_hull_edge_tolerance():
    field = make_field()
    val = field.sample(np.array([4.0 + 1e-10]), np.array([2.0]))
    assert np.isfinite(val).all()


def test_grid_roundtrip_is_exact(tmp_path):
    field = make_field()
    path = tmp_path / "field.grid2d"
    save_grid(field, path)
    back = load_grid(path)
    np.testing.assert_array_equal(back.x, field.x)
    np.testing.assert_array_equal(back.y, field.y)
    np.testing.assert_array_equal(back.values, field.values)


def test_load_grid_accepts_comments_and_folding(tmp_path):
    path = tmp_path / "folded.grid2d"
    path.write_text(
        "GRID2D v1  # wind stress\n"
        "NX 2 NY 2\n"
        "X 0.0 1.0  # degrees\n"
        "Y\n0.0\n1.0\n"
        "VALUES 1.0 2.0\n3.0 4.0\n"
    )
    field = load_grid(path)
    np.testing.assert_array_equal(field.values, [[1.0, 2.0], [3.0, 4.0]])


def test_load_grid_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.grid2d"
    path.write_text("GRIDLY v3\nNX 2\n")
    with pytest.raises(GridDataError, match="expected header"):
        load_grid(path)


def test_load_grid_rejects_small_grid(tmp_path):
    path = tmp_path / "tiny.grid2d"
    path.write_text("GRID2D v1\nNX 1\nNY 2\nX 0.0\nY 0.0 1.0\nVALUES 1.0 2.0\n")
    with pytest.raises(GridDataError, match="at least 2x2"):
        load_grid(path)


def test_load_grid_rejects_trailing_tokens(tmp_path):
    path = tmp_path / "extra.grid2d"
    path.write_text(
        "GRID2D v1\nNX 2\nNY 2\nX 0.0 1.0\nY 0.0 1.0\n"
        "VALUES 1.0 2.0 3.0 4.0 5.0\n"
    )
    with pytest.raises(GridDataError, match="trailing tokens"):
        load_grid(path)


def test_load_grid_rejects_truncation(tmp_path):
    path = tmp_path / "cut.grid2d"
    path.write_text("GRID2D v1\nNX 2\nNY 2\nX 0.0 1.0\nY 0.0 1.0\nVALUES 1.0 2.0\n")
    with pytest.raises(GridDataError, match="unexpected end of file"):
        load_grid(path)
