# src/utils/render.py
"""Deterministic figure output: binary PPM rasters for maps, SVG for trajectories."""
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.core.gridmap import MAP_MAGIC, NON_TRAVERSABLE, TRAVERSABLE, GridMap2p5, read_map
from src.utils.errors import UsageError
from src.utils.logger import logger
from src.utils.textio import ensure_parent, require_file

STYLES = ('class', 'value', 'trajectory-overlay')

BACKGROUND = (200, 200, 200)
TRAVERSABLE_RGB = (46, 139, 87)
NON_TRAVERSABLE_RGB = (178, 34, 34)
MASK_RGB = (0, 0, 0)
VALUE_LOW = np.array([255, 247, 188])
VALUE_HIGH = np.array([217, 95, 14])
TRACE_COLORS = ('#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b')


def map_image(grid: GridMap2p5, style: str) -> np.ndarray:
    """(H, W, 3) uint8 image with north (max y) on the first row."""
    img = np.empty((grid.height, grid.width, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    known = grid.known
    if style == 'class':
        img[known & (grid.trav_class == TRAVERSABLE)] = TRAVERSABLE_RGB
        img[known & (grid.trav_class == NON_TRAVERSABLE)] = NON_TRAVERSABLE_RGB
    elif style == 'value':
        valued = known & (grid.trav_class == TRAVERSABLE)
        t = np.clip(np.nan_to_num(grid.trav_value, nan=1.0), 0.0, 1.0)[..., None]
        ramp = np.rint(VALUE_LOW + t * (VALUE_HIGH - VALUE_LOW)).astype(np.uint8)
        img[valued] = ramp[valued]
        img[known & (grid.trav_class == NON_TRAVERSABLE)] = MASK_RGB
    else:
        raise UsageError(f"style {style!r} does not apply to a grid map; use 'class' or 'value'")
    return img[::-1]


def write_ppm(path: Union[str, Path], image: np.ndarray, scale: int = 4) -> None:
    image = np.repeat(np.repeat(image, scale, axis=0), scale, axis=1)
    h, w = image.shape[:2]
    with open(ensure_parent(path), 'wb') as f:
        f.write(f"P6\n{w} {h}\n255\n".encode('ascii'))
        f.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def render_map(grid: GridMap2p5, style: str, path: Union[str, Path], scale: int = 4) -> None:
    write_ppm(path, map_image(grid, style), scale)


def trajectory_svg(traces: Dict[str, np.ndarray], extent: Optional[Sequence[float]] = None,
                   px_per_m: float = 20.0, blocked: Optional[GridMap2p5] = None) -> str:
    """SVG with one polyline per labeled (n, 2) trace, in insertion order."""
    pts = [t for t in traces.values() if len(t)]
    if extent is None:
        allp = np.concatenate(pts) if pts else np.zeros((1, 2))
        x0, y0 = allp.min(axis=0) - 1.0
        x1, y1 = allp.max(axis=0) + 1.0
    else:
        x0, y0, x1, y1 = extent
    width, height = (x1 - x0) * px_per_m, (y1 - y0) * px_per_m

    def to_px(p):
        return (p[0] - x0) * px_per_m, (y1 - p[1]) * px_per_m

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1f}" height="{height:.1f}" '
             f'viewBox="0 0 {width:.1f} {height:.1f}">',
             f'<rect x="0" y="0" width="{width:.1f}" height="{height:.1f}" fill="rgb{BACKGROUND}"/>']
    if blocked is not None:
        rows, cols = np.nonzero(blocked.known & (blocked.trav_class == NON_TRAVERSABLE))
        res = blocked.resolution
        for r, c in zip(rows, cols):
            cx = blocked.origin[0] + c * res
            cy = blocked.origin[1] + (r + 1) * res
            px, py = to_px((cx, cy))
            lines.append(f'<rect x="{px:.2f}" y="{py:.2f}" width="{res * px_per_m:.2f}" '
                         f'height="{res * px_per_m:.2f}" fill="black"/>')
    for i, (label, trace) in enumerate(traces.items()):
        color = TRACE_COLORS[i % len(TRACE_COLORS)]
        coords = " ".join("{:.2f},{:.2f}".format(*to_px(p)) for p in trace)
        lines.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2">'
                     f'<title>{label}</title></polyline>')
    lines.append('</svg>')
    return "\n".join(lines) + "\n"


def read_traces(paths: Sequence[Union[str, Path]]) -> Dict[str, np.ndarray]:
    """Group trajectory CSV rows by their ``label`` column."""
    traces: Dict[str, np.ndarray] = {}
    for path in paths:
        frame = pd.read_csv(require_file(path), keep_default_na=False)
        for label, group in frame.groupby('label', sort=False):
            traces[str(label)] = group[['x', 'y']].to_numpy(dtype=np.float64)
    return traces


def render_artifact(artifacts: Sequence[Union[str, Path]], style: str, out: Union[str, Path],
                    background: Optional[Union[str, Path]] = None) -> None:
    """Render a map file (class/value) or trajectory CSVs (trajectory-overlay)."""
    if style not in STYLES:
        raise UsageError(f"unknown render style {style!r}; choose from {list(STYLES)}")
    if style == 'trajectory-overlay':
        grid = read_map(background) if background else None
        extent = grid.extent if grid is not None else None
        svg = trajectory_svg(read_traces(artifacts), extent, blocked=grid)
        with open(ensure_parent(out), 'w', newline='\n') as f:
            f.write(svg)
    else:
        path = require_file(artifacts[0])
        with open(path, 'rb') as f:
            if f.readline().decode('ascii', errors='replace').strip() != MAP_MAGIC:
                raise UsageError(f"{path} is not a grid map; style {style!r} needs a map artifact")
        render_map(read_map(path), style, out)
    logger.info(f"Rendered {style} to {out}")
