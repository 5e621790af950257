"""Per-tick grid index over vehicle positions.

The world is divided into square cells of a configured size; each vehicle
is filed under the cell containing its front-bumper position.  A nearby
query only inspects the ego cell and its eight neighbors, which is exact
as long as the query radius does not exceed the cell size.  Cells are kept
in a sparse mapping, so every integer cell coordinate is addressable and
the required two-cell margin ring beyond the occupied bounding box (and
anything further out, including negative coordinates) resolves to an empty
cell instead of an out-of-range failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import ConfigError, NotFoundError, ValidationError
from .trace import VehicleState

MARGIN_CELLS = 2


# packed-key stride: cell (cx, cy) -> cx * _STRIDE + cy; int keys hash much
# faster than tuples in the query hot path
_STRIDE = 1 << 33


@dataclass(slots=True)
class GridIndex:
    """Immutable-after-build spatial index for one tick."""

    cell_size: float
    origin: tuple[float, float]
    cells: dict[tuple[int, int], list[str]]
    states: dict[str, VehicleState]
    lo_cell: tuple[int, int] | None
    hi_cell: tuple[int, int] | None
    _packed: dict[int, list[str]]

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ox, oy = self.origin
        inv = 1.0 / self.cell_size
        return (math.floor((x - ox) * inv), math.floor((y - oy) * inv))


def rebuild(states: Iterable[VehicleState], cell_size: float,
            origin: tuple[float, float] = (0.0, 0.0)) -> GridIndex:
    """Build the index in a single pass over the states."""
    if cell_size <= 0:
        raise ConfigError("cell_size must be positive")
    ox, oy = origin
    inv = 1.0 / cell_size
    cells: dict[tuple[int, int], list[str]] = {}
    packed: dict[int, list[str]] = {}
    state_map: dict[str, VehicleState] = {}
    floor = math.floor
    n = 0
    lo_x = lo_y = hi_x = hi_y = 0
    for s in states:
        kx = floor((s.x - ox) * inv)
        ky = floor((s.y - oy) * inv)
        bucket = packed.get(kx * _STRIDE + ky)
        if bucket is None:
            bucket = [s.id]
            packed[kx * _STRIDE + ky] = bucket
            cells[(kx, ky)] = bucket
        else:
            bucket.append(s.id)
        state_map[s.id] = s
        if n == 0:
            lo_x = hi_x = kx
            lo_y = hi_y = ky
        else:
            if kx < lo_x:
                lo_x = kx
            elif kx > hi_x:
                hi_x = kx
            if ky < lo_y:
                lo_y = ky
            elif ky > hi_y:
                hi_y = ky
        n += 1
    if len(state_map) != n:
        raise ValidationError("duplicate vehicle id in grid rebuild")
    if n == 0:
        return GridIndex(cell_size, (ox, oy), cells, state_map, None, None,
                         packed)
    return GridIndex(cell_size, (ox, oy), cells, state_map,
                     (lo_x, lo_y), (hi_x, hi_y), packed)


def _query_cells(index: GridIndex, x: float, y: float) -> list[tuple[int, int]]:
    """The at-most-nine cells a radius query inspects."""
    cx, cy = index.cell_of(x, y)
    return [(cx + dx, cy + dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]


def query_radius(index: GridIndex, pos: tuple[float, float],
                 radius: float) -> list[VehicleState]:
    """All vehicles within `radius` (inclusive) of a point, unordered.

    Requires radius <= cell_size so the 3x3 cell neighborhood is exhaustive.
    """
    if radius > index.cell_size:
        raise ConfigError(
            f"query radius {radius} exceeds cell size {index.cell_size}")
    x, y = pos
    r2 = radius * radius
    states = index.states
    ox, oy = index.origin
    inv = 1.0 / index.cell_size
    cx = math.floor((x - ox) * inv)
    cy = math.floor((y - oy) * inv)
    out = []
    get = index._packed.get
    for kx in (cx - 1, cx, cx + 1):
        base = kx * _STRIDE + cy
        for key in (base - 1, base, base + 1):
            bucket = get(key)
            if not bucket:
                continue
            for vid in bucket:
                s = states[vid]
                dx = s.x - x
                dy = s.y - y
                if dx * dx + dy * dy <= r2:
                    out.append(s)
    return out


def get_nearby_vehicles(index: GridIndex, ego: str,
                        radius: float) -> list[VehicleState]:
    """Vehicles within `radius` of the ego position, ego excluded.

    Distance is measured between front-bumper positions and the boundary is
    inclusive.  Results are sorted by vehicle id.
    """
    ego_state = index.states.get(ego)
    if ego_state is None:
        raise NotFoundError(f"unknown ego vehicle {ego!r}")
    if radius > index.cell_size:
        raise ConfigError(
            f"query radius {radius} exceeds cell size {index.cell_size}")
    x = ego_state.x
    y = ego_state.y
    r2 = radius * radius
    states = index.states
    ox, oy = index.origin
    inv = 1.0 / index.cell_size
    cx = math.floor((x - ox) * inv)
    cy = math.floor((y - oy) * inv)
    out = []
    get = index._packed.get
    for kx in (cx - 1, cx, cx + 1):
        base = kx * _STRIDE + cy
        for key in (base - 1, base, base + 1):
            bucket = get(key)
            if not bucket:
                continue
            for vid in bucket:
                if vid == ego:
                    continue
                s = states[vid]
                dx = s.x - x
                dy = s.y - y
                if dx * dx + dy * dy <= r2:
                    out.append(s)
    out.sort(key=_state_id)
    return out


def _state_id(s: VehicleState) -> str:
    return s.id
