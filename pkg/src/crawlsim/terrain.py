"""Rock/boulder heightmap courses and terrain queries.

A course is a regular grid of elevations over a desk-scale test area
(default 3.1 x 1.3 m at 2 cm resolution).  Courses are generated by
scattering half-ellipsoid rocks (optionally stacked, plus rectangular
blocks at the hardest setting) and composing them by pointwise maximum
with the ground plane.  Generation is a pure function of the CourseSpec,
so any spec replays to a bit-identical map.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ParameterError, QueryError
from .pgm import read_pgm16, write_pgm16
from .rng import SplitMix64, derive_seed

STAGING_LEN = 0.4  # flat strip at each end of the course, meters


class Difficulty(enum.Enum):
    FLAT = "Flat"
    EASY = "Easy"
    MEDIUM = "Medium"
    DIFFICULT = "Difficult"


# max elevation per difficulty; density (not rock size) drives difficulty
ELEVATION_CAP = {
    Difficulty.FLAT: 0.0,
    Difficulty.EASY: 0.20,
    Difficulty.MEDIUM: 0.35,
    Difficulty.DIFFICULT: 0.50,
}
ROCK_COUNT = {
    Difficulty.FLAT: 0,
    Difficulty.EASY: 25,
    Difficulty.MEDIUM: 45,
    Difficulty.DIFFICULT: 70,
}
BLOCK_COUNT = {
    Difficulty.FLAT: 0,
    Difficulty.EASY: 0,
    Difficulty.MEDIUM: 0,
    Difficulty.DIFFICULT: 5,
}

ROCK_RADIUS_RANGE = (0.10, 0.22)  # mean diameter ~= 0.3 m
MIN_ROCK_HEIGHT = 0.05
STACK_PROBABILITY = 0.35  # Medium/Difficult rocks placed on top of others


@dataclass(frozen=True)
class Rock:
    """Half-ellipsoid protruding upward from base_z."""

    center: tuple[float, float]
    radii: tuple[float, float, float]  # (rx, ry, rz)
    yaw: float
    base_z: float = 0.0

    def __post_init__(self):
        if min(self.radii) <= 0:
            raise ParameterError(f"rock radii must be positive, got {self.radii}")


@dataclass(frozen=True)
class CourseSpec:
    difficulty: Difficulty
    seed: int
    dims: tuple[float, float] = (3.1, 1.3)  # (length_m along x, width_m along y)
    resolution: float = 0.02

    def __post_init__(self):
        length, width = self.dims
        if length <= 0 or width <= 0:
            raise ParameterError(f"course dims must be positive, got {self.dims}")
        if not (0.0 < self.resolution <= 0.1):
            raise ParameterError(
                f"resolution must be in (0, 0.1], got {self.resolution}"
            )
        if not (0 <= self.seed <= 0xFFFFFFFFFFFFFFFF):
            raise ParameterError("seed must fit in 64 bits")


@dataclass
class HeightMap:
    """Immutable grid of terrain elevations.

    heights is a (width_cells, length_cells) float64 array, row-major:
    row iy spans the lateral (y) axis, column ix the course length (x).
    Cell (iy, ix) is centered at origin + (ix, iy) * resolution.
    """

    length_cells: int
    width_cells: int
    resolution: float
    origin: tuple[float, float]
    heights: np.ndarray

    def __post_init__(self):
        if self.length_cells < 2 or self.width_cells < 2:
            raise ParameterError("heightmap needs at least 2x2 cells")
        if self.resolution <= 0:
            raise ParameterError("resolution must be positive")
        self.heights = np.ascontiguousarray(self.heights, dtype=np.float64)
        if self.heights.shape != (self.width_cells, self.length_cells):
            raise ParameterError(
                f"heights shape {self.heights.shape} does not match "
                f"({self.width_cells}, {self.length_cells})"
            )
        if not np.all(np.isfinite(self.heights)) or np.any(self.heights < 0):
            raise ParameterError("heights must be finite and non-negative")
        self.heights.setflags(write=False)

    @property
    def x_max(self) -> float:
        return self.origin[0] + (self.length_cells - 1) * self.resolution

    @property
    def y_max(self) -> float:
        return self.origin[1] + (self.width_cells - 1) * self.resolution

    def contains(self, x: float, y: float) -> bool:
        return (
            self.origin[0] <= x <= self.x_max and self.origin[1] <= y <= self.y_max
        )

    @cached_property
    def gradient_bound(self) -> np.ndarray:
        """Per-cell bound on |grad h| inside each bilinear patch, padded by a
        3x3 neighborhood max.  Sound pruning bound for the depth ray-marcher:
        a march segment shorter than one cell only touches cells within one
        index of its endpoint's cell."""
        h = self.heights
        dx = np.abs(np.diff(h, axis=1)) / self.resolution  # (ny, nx-1)
        dy = np.abs(np.diff(h, axis=0)) / self.resolution  # (ny-1, nx)
        gx = np.maximum(dx[:-1, :], dx[1:, :])  # per cell, (ny-1, nx-1)
        gy = np.maximum(dy[:, :-1], dy[:, 1:])
        g = np.hypot(gx, gy)
        padded = g.copy()
        for sy in (-1, 0, 1):
            for sx in (-1, 0, 1):
                shifted = np.roll(np.roll(g, sy, axis=0), sx, axis=1)
                # roll wraps; overwrite wrapped edges with the unshifted values
                if sy == 1:
                    shifted[0, :] = g[0, :]
                elif sy == -1:
                    shifted[-1, :] = g[-1, :]
                if sx == 1:
                    shifted[:, 0] = g[:, 0]
                elif sx == -1:
                    shifted[:, -1] = g[:, -1]
                np.maximum(padded, shifted, out=padded)
        padded = np.ascontiguousarray(padded)
        padded.setflags(write=False)
        return padded


def _grid_shape(dims: tuple[float, float], resolution: float) -> tuple[int, int]:
    length, width = dims
    length_cells = int(round(length / resolution)) + 1
    width_cells = int(round(width / resolution)) + 1
    return length_cells, width_cells


def _stamp_rock(heights: np.ndarray, m: HeightMap, rock: Rock) -> None:
    rx, ry, rz = rock.radii
    cx, cy = rock.center
    res = m.resolution
    ox, oy = m.origin
    r_out = max(rx, ry)
    ix0 = max(0, int(math.floor((cx - r_out - ox) / res)))
    ix1 = min(m.length_cells - 1, int(math.ceil((cx + r_out - ox) / res)))
    iy0 = max(0, int(math.floor((cy - r_out - oy) / res)))
    iy1 = min(m.width_cells - 1, int(math.ceil((cy + r_out - oy) / res)))
    if ix1 < ix0 or iy1 < iy0:
        return
    xs = ox + np.arange(ix0, ix1 + 1) * res - cx
    ys = oy + np.arange(iy0, iy1 + 1) * res - cy
    dx, dy = np.meshgrid(xs, ys)
    c, s = math.cos(rock.yaw), math.sin(rock.yaw)
    u = (c * dx + s * dy) / rx
    v = (-s * dx + c * dy) / ry
    d2 = u * u + v * v
    inside = d2 < 1.0
    z = np.zeros_like(d2)
    z[inside] = rock.base_z + rz * np.sqrt(1.0 - d2[inside])
    patch = heights[iy0 : iy1 + 1, ix0 : ix1 + 1]
    np.maximum(patch, z, out=patch)


def _stamp_block(
    heights: np.ndarray, m: HeightMap, cx: float, cy: float, hx: float, hy: float, top: float
) -> None:
    res = m.resolution
    ox, oy = m.origin
    ix0 = max(0, int(math.ceil((cx - hx - ox) / res)))
    ix1 = min(m.length_cells - 1, int(math.floor((cx + hx - ox) / res)))
    iy0 = max(0, int(math.ceil((cy - hy - oy) / res)))
    iy1 = min(m.width_cells - 1, int(math.floor((cy + hy - oy) / res)))
    if ix1 < ix0 or iy1 < iy0:
        return
    patch = heights[iy0 : iy1 + 1, ix0 : ix1 + 1]
    np.maximum(patch, top, out=patch)


def generate_course(spec: CourseSpec) -> HeightMap:
    """Generate a course heightmap; bit-identical for identical specs.

    Rocks are half-ellipsoids with radii drawn from ROCK_RADIUS_RANGE; at
    Medium/Difficult some rocks stack on already-placed terrain.  Difficult
    adds axis-aligned rectangular blocks as a generalization probe.  The
    first and last STAGING_LEN meters of the course stay flat, and the
    maximum elevation never exceeds ELEVATION_CAP[difficulty].
    """
    length, width = spec.dims
    length_cells, width_cells = _grid_shape(spec.dims, spec.resolution)
    heights = np.zeros((width_cells, length_cells), dtype=np.float64)
    m = HeightMap(length_cells, width_cells, spec.resolution, (0.0, 0.0), heights)
    # HeightMap froze its copy; keep stamping into our own buffer
    heights = np.array(m.heights)

    cap = ELEVATION_CAP[spec.difficulty]
    gen = SplitMix64(derive_seed(spec.seed, list(Difficulty).index(spec.difficulty)))

    for _ in range(ROCK_COUNT[spec.difficulty]):
        rx = gen.uniform(*ROCK_RADIUS_RANGE)
        ry = gen.uniform(*ROCK_RADIUS_RANGE)
        rz = gen.uniform(ROCK_RADIUS_RANGE[0], min(ROCK_RADIUS_RANGE[1], cap))
        yaw = gen.uniform(0.0, math.pi)
        r_out = max(rx, ry)
        lo = STAGING_LEN + r_out
        hi = length - STAGING_LEN - r_out
        if hi <= lo:
            continue
        cx = gen.uniform(lo, hi)
        cy = gen.uniform(0.0, width)
        stack = (
            spec.difficulty in (Difficulty.MEDIUM, Difficulty.DIFFICULT)
            and gen.uniform() < STACK_PROBABILITY
        )
        base = 0.0
        if stack:
            iy = int(round((cy - m.origin[1]) / spec.resolution))
            ix = int(round((cx - m.origin[0]) / spec.resolution))
            iy = min(max(iy, 0), width_cells - 1)
            ix = min(max(ix, 0), length_cells - 1)
            base = float(heights[iy, ix])
        if base + rz > cap:
            rz = cap - base
        if rz < MIN_ROCK_HEIGHT:
            base = 0.0
            rz = min(gen.uniform(*ROCK_RADIUS_RANGE), cap)
        if rz <= 0.0:
            continue
        _stamp_rock(heights, m, Rock((cx, cy), (rx, ry, rz), yaw, base))

    for _ in range(BLOCK_COUNT[spec.difficulty]):
        hx = gen.uniform(0.08, 0.20)
        hy = gen.uniform(0.08, 0.20)
        top = gen.uniform(0.10, 0.25)
        lo = STAGING_LEN + hx
        hi = length - STAGING_LEN - hx
        if hi <= lo:
            continue
        cx = gen.uniform(lo, hi)
        cy = gen.uniform(0.0, width)
        _stamp_block(heights, m, cx, cy, hx, hy, min(top, cap))

    return HeightMap(length_cells, width_cells, spec.resolution, (0.0, 0.0), heights)


def heights_at(m: HeightMap, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized bilinear interpolation at world coordinates (bounds-checked)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    gx = (xs - m.origin[0]) / m.resolution
    gy = (ys - m.origin[1]) / m.resolution
    nx, ny = m.length_cells, m.width_cells
    if np.any(gx < 0) or np.any(gx > nx - 1) or np.any(gy < 0) or np.any(gy > ny - 1):
        raise QueryError("terrain query outside map bounds")
    ix = np.minimum(gx.astype(np.int64), nx - 2)
    iy = np.minimum(gy.astype(np.int64), ny - 2)
    fx = gx - ix
    fy = gy - iy
    h = m.heights
    h00 = h[iy, ix]
    h10 = h[iy, ix + 1]
    h01 = h[iy + 1, ix]
    h11 = h[iy + 1, ix + 1]
    return (h00 * (1.0 - fx) + h10 * fx) * (1.0 - fy) + (
        h01 * (1.0 - fx) + h11 * fx
    ) * fy


def height_at(m: HeightMap, x: float, y: float) -> float:
    """Bilinear terrain height at a world point inside the map."""
    return float(heights_at(m, np.float64(x), np.float64(y)))


def slope_at(m: HeightMap, x: float, y: float) -> tuple[float, float]:
    """Central-difference gradient (dz/dx, dz/dy) with step = resolution.

    Requires (x, y) at least one cell away from the map boundary.
    """
    res = m.resolution
    if not (
        m.origin[0] + res <= x <= m.x_max - res
        and m.origin[1] + res <= y <= m.y_max - res
    ):
        raise QueryError("slope query must be at least one cell from the boundary")
    dzdx = (height_at(m, x + res, y) - height_at(m, x - res, y)) / (2.0 * res)
    dzdy = (height_at(m, x, y + res) - height_at(m, x, y - res)) / (2.0 * res)
    return dzdx, dzdy


def save_heightmap(m: HeightMap, path) -> None:
    """Write 16-bit big-endian PGM in millimeters plus key=value sidecar."""
    path = Path(path)
    mm = np.rint(m.heights * 1000.0)
    if np.any(mm > 65535):
        raise ParameterError("heights exceed 65.535 m, not representable in PGM16")
    write_pgm16(path, mm.astype(np.uint16))
    sidecar = path.with_name(path.name + ".txt")
    with open(sidecar, "w", encoding="ascii") as f:
        f.write(f"resolution={m.resolution!r}\n")
        f.write(f"origin_x={m.origin[0]!r}\n")
        f.write(f"origin_y={m.origin[1]!r}\n")


def load_heightmap(path) -> HeightMap:
    path = Path(path)
    mm = read_pgm16(path)
    sidecar = path.with_name(path.name + ".txt")
    meta: dict[str, float] = {}
    with open(sidecar, "r", encoding="ascii") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            meta[key] = float(value)
    heights = mm.astype(np.float64) / 1000.0
    ny, nx = heights.shape
    return HeightMap(
        nx, ny, meta["resolution"], (meta["origin_x"], meta["origin_y"]), heights
    )
