"""
PPM and SVG rendering tests.
"""

import hashlib

import numpy as np
import pandas as pd
import pytest

from src.core.gridmap import build_map, write_map
from src.utils.errors import UsageError
from src.utils.render import (BACKGROUND, MASK_RGB, map_image, render_artifact, trajectory_svg, write_ppm)


def _grid(points, classes, preds, dims=(4, 3)):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return build_map(points, np.ones(len(points)), classes, preds, (0.0, 0.0), 1.0, dims)


def _ppm_pixels(path):
    magic, size, _, body = path.read_bytes().split(b"\n", 3)
    assert magic == b"P6"
    width, height = (int(v) for v in size.split())
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)


@pytest.mark.parametrize("style", ['class', 'value'])
def test_all_unknown_map_is_uniform_background(style):
    img = map_image(_grid(np.zeros((0, 3)), [], []), style)
    assert img.shape == (3, 4, 3)
    assert np.all(img == BACKGROUND)


def test_one_blocked_cell_is_one_black_block(tmp_path):
    grid = _grid([[2.5, 0.5, 0.0], [0.5, 2.5, 0.0]], [False, True], [0.0, 0.4])
    path = tmp_path / "value.ppm"
    write_ppm(path, map_image(grid, 'value'), scale=2)
    pixels = _ppm_pixels(path)
    assert pixels.shape == (6, 8, 3)
    black = np.all(pixels == MASK_RGB, axis=-1)
    # north up: cell (row 0, col 2) lands in the bottom pixel rows
    assert black.sum() == 4
    assert black[4:6, 4:6].all()


def test_renders_are_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    points = np.column_stack([rng.uniform(0, 4, 40), rng.uniform(0, 3, 40), np.zeros(40)])
    grid = _grid(points, rng.uniform(size=40) > 0.3, rng.uniform(size=40))
    map_path = tmp_path / "m.gm"
    write_map(map_path, grid)
    digests = []
    for name in ("a.ppm", "b.ppm"):
        render_artifact([map_path], 'class', tmp_path / name)
        digests.append(hashlib.sha256((tmp_path / name).read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_trajectory_overlay(tmp_path):
    csv_path = tmp_path / "runs.csv"
    pd.DataFrame({'label': ['full'] * 3 + ['ablation'] * 2, 'x': [0.0, 1.0, 2.0, 0.0, 2.0],
                  'y': [0.0, 1.0, 0.0, 0.0, 0.0]}).to_csv(csv_path, index=False)
    out = tmp_path / "paths.svg"
    render_artifact([csv_path], 'trajectory-overlay', out)
    svg = out.read_text()
    assert svg.count('<polyline') == 2
    assert '<title>full</title>' in svg and '<title>ablation</title>' in svg


def test_blocked_cells_in_overlay():
    grid = _grid([[1.5, 1.5, 0.0]], [False], [0.0])
    svg = trajectory_svg({'run': np.array([[0.0, 0.0], [3.0, 2.0]])}, grid.extent, blocked=grid)
    assert svg.count('fill="black"') == 1


def test_unknown_style(tmp_path):
    with pytest.raises(UsageError):
        render_artifact([tmp_path / "x.gm"], 'heatmap', tmp_path / "out.ppm")
    with pytest.raises(UsageError):
        map_image(_grid(np.zeros((0, 3)), [], []), 'trajectory-overlay')


def test_map_style_needs_a_map(tmp_path):
    path = tmp_path / "runs.csv"
    path.write_text("label,x,y\nfull,0,0\n")
    with pytest.raises(UsageError):
        render_artifact([path], 'value', tmp_path / "out.ppm")
