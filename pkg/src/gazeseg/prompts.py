"""Prompt-point generation: uniform grid intersected with the salient set."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidParameterError, PixelPoint


@dataclass(frozen=True)
class PromptSet:
    """Unique prompt points in ROI coordinates, sorted row-major."""

    points: tuple[PixelPoint, ...]
    grid_N: int
    source_dims: tuple[int, int]

    def __len__(self) -> int:
        return len(self.points)


def _half_down(v: float) -> int:
    # Round, with exact .5 ties going down: keeps grid coordinates inside
    # the raster and cell centers distinct when the grid is pixel-dense.
    return int(math.ceil(v - 0.5))


def make_grid(dims: tuple[int, int], n: int) -> list[PixelPoint]:
    """N x N cell-center coordinates over a (width, height) raster.

    Coordinates are round((i + 0.5) * side / N) with ties rounding down;
    duplicates collapse when the grid is finer than the pixel raster.
    """
    if n < 2:
        raise InvalidParameterError("grid N must be >= 2")
    width, height = dims
    if width < 1 or height < 1:
        raise InvalidParameterError("grid dims must be positive")
    xs = sorted({min(_half_down((i + 0.5) * width / n), width - 1) for i in range(n)})
    ys = sorted({min(_half_down((j + 0.5) * height / n), height - 1) for j in range(n)})
    return [PixelPoint(x, y) for y in ys for x in xs]


def intersect(grid: list[PixelPoint], salient, grid_N: int, dims: tuple[int, int]) -> PromptSet:
    """Exact set intersection of the grid with the salient point set,
    returned row-major. An empty result is valid."""
    sal = set(salient)
    pts = [p for p in grid if p in sal]
    pts.sort(key=lambda p: (p.y, p.x))
    return PromptSet(points=tuple(pts), grid_N=grid_N, source_dims=dims)


def grid_prompts(dims: tuple[int, int], n: int) -> PromptSet:
    """Full grid as a PromptSet (dense sampling, no saliency gating)."""
    pts = make_grid(dims, n)
    pts.sort(key=lambda p: (p.y, p.x))
    return PromptSet(points=tuple(pts), grid_N=n, source_dims=dims)


def salient_prompts(
    dims: tuple[int, int], n: int, salient: list[PixelPoint]
) -> PromptSet:
    """Grid-cap sampling of the salient set: grid(N) intersected with it."""
    return intersect(make_grid(dims, n), salient, n, dims)
