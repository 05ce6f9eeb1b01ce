"""Heightmap terrain: the test ground the robot drives over.

A regular grid of height samples with bilinear interpolation between
nodes. Answers the geometric queries the chassis conformation and the
ultrasonic sensor need: height, local slope, and ray intersection.
Grids are immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class TerrainBoundsError(Exception):
    """Query point or footprint lies outside the grid."""


class TerrainFormatError(Exception):
    """Terrain file is malformed."""


@dataclass(frozen=True)
class TerrainGrid:
    """Regular-grid heightmap.

    heights[row, col] holds the height at
    (x, y) = (origin_x + col * cell_size, origin_y + row * cell_size).
    """

    cell_size: float
    origin: tuple[float, float]
    heights: np.ndarray = field(repr=False)

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        if h.ndim != 2 or h.shape[0] < 2 or h.shape[1] < 2:
            raise ValueError(f"heights must be a matrix of at least 2x2, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("heights must all be finite")
        if not (self.cell_size > 0):
            raise ValueError(f"cell_size must be > 0, got {self.cell_size}")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)

    @property
    def rows(self) -> int:
        return self.heights.shape[0]

    @property
    def cols(self) -> int:
        return self.heights.shape[1]

    @property
    def x_max(self) -> float:
        return self.origin[0] + (self.cols - 1) * self.cell_size

    @property
    def y_max(self) -> float:
        return self.origin[1] + (self.rows - 1) * self.cell_size

    def in_bounds(self, x: float, y: float) -> bool:
        return self.origin[0] <= x <= self.x_max and self.origin[1] <= y <= self.y_max

    def to_text(self) -> str:
        """Serialize to the `terrain v1` text format."""
        lines = [
            f"terrain v1 {self.rows} {self.cols} {float(self.cell_size)!r} "
            f"{float(self.origin[0])!r} {float(self.origin[1])!r}"
        ]
        for r in range(self.rows):
            lines.append(" ".join(repr(float(v)) for v in self.heights[r]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TerrainGrid":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise TerrainFormatError("empty terrain file")
        head = lines[0].split()
        if len(head) != 7 or head[0] != "terrain" or head[1] != "v1":
            raise TerrainFormatError(f"bad terrain header: {lines[0]!r}")
        try:
            rows, cols = int(head[2]), int(head[3])
            cell = float(head[4])
            ox, oy = float(head[5]), float(head[6])
        except ValueError as e:
            raise TerrainFormatError(f"bad terrain header values: {lines[0]!r}") from e
        if len(lines) - 1 != rows:
            raise TerrainFormatError(f"expected {rows} height rows, got {len(lines) - 1}")
        try:
            h = np.array([[float(v) for v in ln.split()] for ln in lines[1:]], dtype=float)
        except ValueError as e:
            raise TerrainFormatError("non-numeric height value") from e
        if h.shape != (rows, cols):
            raise TerrainFormatError(f"height matrix shape {h.shape} != header ({rows}, {cols})")
        return cls(cell_size=cell, origin=(ox, oy), heights=h)


def _cell_fractions(grid: TerrainGrid, x: np.ndarray, y: np.ndarray):
    """Cell indices and in-cell fractions for in-bounds query arrays."""
    cx = (x - grid.origin[0]) / grid.cell_size
    cy = (y - grid.origin[1]) / grid.cell_size
    c0 = np.minimum(np.floor(cx).astype(int), grid.cols - 2)
    r0 = np.minimum(np.floor(cy).astype(int), grid.rows - 2)
    c0 = np.maximum(c0, 0)
    r0 = np.maximum(r0, 0)
    return r0, c0, cx - c0, cy - r0


def heights_at(grid: TerrainGrid, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized bilinear interpolation. All points must be in bounds."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size and (x.min() < grid.origin[0] or x.max() > grid.x_max or
                   y.min() < grid.origin[1] or y.max() > grid.y_max):
        raise TerrainBoundsError("height query outside terrain bounds")
    r0, c0, fx, fy = _cell_fractions(grid, x, y)
    h = grid.heights
    h00 = h[r0, c0]
    h01 = h[r0, c0 + 1]
    h10 = h[r0 + 1, c0]
    h11 = h[r0 + 1, c0 + 1]
    return (h00 * (1 - fx) + h01 * fx) * (1 - fy) + (h10 * (1 - fx) + h11 * fx) * fy


def height_at(grid: TerrainGrid, x: float, y: float) -> float:
    """Bilinearly interpolated height at (x, y). Raises TerrainBoundsError outside.

    Scalar twin of heights_at: same arithmetic in the same order, kept
    free of array boxing because the conform loop leans on it hard.
    """
    x = float(x)
    y = float(y)
    if x < grid.origin[0] or x > grid.x_max or y < grid.origin[1] or y > grid.y_max:
        raise TerrainBoundsError("height query outside terrain bounds")
    c0 = max(min(int(math.floor((x - grid.origin[0]) / grid.cell_size)),
                 grid.cols - 2), 0)
    r0 = max(min(int(math.floor((y - grid.origin[1]) / grid.cell_size)),
                 grid.rows - 2), 0)
    fx = (x - grid.origin[0]) / grid.cell_size - c0
    fy = (y - grid.origin[1]) / grid.cell_size - r0
    h = grid.heights
    h00 = h[r0, c0]
    h01 = h[r0, c0 + 1]
    h10 = h[r0 + 1, c0]
    h11 = h[r0 + 1, c0 + 1]
    return float((h00 * (1 - fx) + h01 * fx) * (1 - fy)
                 + (h10 * (1 - fx) + h11 * fx) * fy)


def slope_at(grid: TerrainGrid, x: float, y: float) -> float:
    """Surface slope in degrees: angle between the surface normal and vertical.

    Gradient by central differences with step = cell_size; sample points
    are clamped into bounds, so near edges this degrades to a one-sided
    difference.
    """
    if not grid.in_bounds(x, y):
        raise TerrainBoundsError(f"slope query outside terrain bounds: ({x}, {y})")
    h = grid.cell_size
    xm = max(x - h, grid.origin[0])
    xp = min(x + h, grid.x_max)
    ym = max(y - h, grid.origin[1])
    yp = min(y + h, grid.y_max)
    vals = heights_at(grid, np.array([xm, xp, x, x]), np.array([y, y, ym, yp]))
    gx = (vals[1] - vals[0]) / (xp - xm)
    gy = (vals[3] - vals[2]) / (yp - ym)
    return math.degrees(math.atan(math.hypot(gx, gy)))


def raycast(grid: TerrainGrid, origin, direction, max_range: float) -> float | None:
    """Distance along the ray to the first terrain intersection, or None.

    Fixed-step marching (step <= cell_size / 4) followed by bisection;
    the returned distance is accurate to well under 1 mm. A ray that
    leaves the grid bounds before hitting anything yields None.
    """
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    if o.shape != (3,) or d.shape != (3,):
        raise ValueError("origin and direction must be 3-vectors")
    n = np.linalg.norm(d)
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"direction must be a unit vector, norm was {n}")
    if not (max_range > 0):
        raise ValueError("max_range must be > 0")
    if not grid.in_bounds(o[0], o[1]):
        return None

    # Range along the ray at which it exits the grid horizontally.
    t_exit = max_range
    for axis, (lo, hi) in ((0, (grid.origin[0], grid.x_max)),
                           (1, (grid.origin[1], grid.y_max))):
        if d[axis] > 0:
            t_exit = min(t_exit, (hi - o[axis]) / d[axis])
        elif d[axis] < 0:
            t_exit = min(t_exit, (lo - o[axis]) / d[axis])
    if t_exit <= 0:
        t_exit = 0.0

    step = grid.cell_size / 4.0
    ts = np.arange(0.0, t_exit + step, step)
    ts = ts[ts <= t_exit]
    if ts.size == 0 or ts[-1] < t_exit:
        ts = np.append(ts, t_exit)
    # Clip away the single-ULP overshoot the exit-range arithmetic can leave.
    px = np.clip(o[0] + ts * d[0], grid.origin[0], grid.x_max)
    py = np.clip(o[1] + ts * d[1], grid.origin[1], grid.y_max)
    pz = o[2] + ts * d[2]
    phi = pz - heights_at(grid, px, py)

    below = np.nonzero(phi <= 0.0)[0]
    if below.size == 0:
        return None
    i = int(below[0])
    if i == 0:
        return 0.0  # origin already at or under the surface

    lo_t, hi_t = float(ts[i - 1]), float(ts[i])

    def f(t: float) -> float:
        qx = min(max(o[0] + t * d[0], grid.origin[0]), grid.x_max)
        qy = min(max(o[1] + t * d[1], grid.origin[1]), grid.y_max)
        return (o[2] + t * d[2]) - height_at(grid, qx, qy)

    for _ in range(60):
        if hi_t - lo_t < 1e-9:
            break
        mid = 0.5 * (lo_t + hi_t)
        if f(mid) <= 0.0:
            hi_t = mid
        else:
            lo_t = mid
    t_hit = 0.5 * (lo_t + hi_t)
    if t_hit > max_range:
        return None
    return t_hit


# --- scenario test grounds -------------------------------------------------

# Shared layout constants so the mission logic knows where a built
# feature (ramp or stair) starts without re-deriving grid geometry.
APPROACH_LEN = 2.0
LANDING_LEN = 2.0
DEFAULT_CELL = 0.05
DEFAULT_WIDTH = 4.0


@dataclass(frozen=True)
class FeatureExtent:
    """Longitudinal span and effective slope of a built climb feature."""

    x_start: float
    x_end: float
    slope_deg: float


def _grid_from_profile(profile, length: float, width: float, cell: float) -> TerrainGrid:
    cols = int(round(length / cell)) + 1
    rows = int(round(width / cell)) + 1
    xs = np.arange(cols) * cell
    row = np.array([profile(x) for x in xs], dtype=float)
    return TerrainGrid(cell_size=cell, origin=(0.0, 0.0), heights=np.tile(row, (rows, 1)))


def build_scenario_terrain(kind: str, *params: float, cell_size: float = DEFAULT_CELL,
                           width: float = DEFAULT_WIDTH) -> TerrainGrid:
    """Deterministic test grounds: flat, slope(angle), stair(rise, run, count),
    walled_room(width, depth, wall_height).

    Slopes and stairs run along +x after a flat approach of APPROACH_LEN,
    with a flat landing of LANDING_LEN on top.
    """
    if kind == "flat":
        length = params[0] if len(params) > 0 else 10.0
        depth = params[1] if len(params) > 1 else width
        if length <= 0 or depth <= 0:
            raise ValueError("flat terrain needs positive extents")
        return _grid_from_profile(lambda x: 0.0, length, depth, cell_size)

    if kind == "slope":
        if len(params) < 1:
            raise ValueError("slope terrain needs an angle")
        angle = params[0]
        if not (0.0 < angle < 90.0):
            raise ValueError(f"slope angle must be in (0, 90) degrees, got {angle}")
        run = params[1] if len(params) > 1 else 4.0
        if run <= 0:
            raise ValueError("slope run must be > 0")
        g = math.tan(math.radians(angle))
        x1 = APPROACH_LEN + run

        def profile(x: float) -> float:
            if x <= APPROACH_LEN:
                return 0.0
            if x >= x1:
                return g * run
            return g * (x - APPROACH_LEN)

        return _grid_from_profile(profile, x1 + LANDING_LEN, width, cell_size)

    if kind == "stair":
        if len(params) < 3:
            raise ValueError("stair terrain needs rise, run, count")
        rise, run, count = params[0], params[1], int(params[2])
        if rise <= 0 or run <= 0 or count < 1:
            raise ValueError(f"invalid stair parameters rise={rise} run={run} count={count}")

        def profile(x: float) -> float:
            if x < APPROACH_LEN:
                return 0.0
            k = min(int((x - APPROACH_LEN) / run) + 1, count)
            return k * rise

        length = APPROACH_LEN + count * run + LANDING_LEN
        return _grid_from_profile(profile, length, width, cell_size)

    if kind == "walled_room":
        w = params[0] if len(params) > 0 else 6.0
        d = params[1] if len(params) > 1 else 6.0
        wall_h = params[2] if len(params) > 2 else 2.0
        wall_t = params[3] if len(params) > 3 else 0.2
        if w <= 2 * wall_t or d <= 2 * wall_t or wall_h <= 0:
            raise ValueError("walled_room needs extents larger than two wall thicknesses")
        cols = int(round(w / cell_size)) + 1
        rows = int(round(d / cell_size)) + 1
        h = np.zeros((rows, cols))
        band = max(1, int(round(wall_t / cell_size)))
        h[:band, :] = wall_h
        h[-band:, :] = wall_h
        h[:, :band] = wall_h
        h[:, -band:] = wall_h
        return TerrainGrid(cell_size=cell_size, origin=(0.0, 0.0), heights=h)

    raise ValueError(f"unknown terrain kind: {kind!r}")


def feature_extent(kind: str, *params: float) -> FeatureExtent | None:
    """Climb-feature span for a built scenario terrain; None when there is none."""
    if kind == "slope":
        angle = params[0]
        run = params[1] if len(params) > 1 else 4.0
        return FeatureExtent(APPROACH_LEN, APPROACH_LEN + run, float(angle))
    if kind == "stair":
        rise, run, count = params[0], params[1], int(params[2])
        slope = math.degrees(math.atan2(count * rise, count * run))
        return FeatureExtent(APPROACH_LEN, APPROACH_LEN + count * run, slope)
    return None
