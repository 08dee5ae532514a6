"""Kernel estimate of the Brownian local time field L_t^x."""

import logging
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path as FilePath

import numpy as np
from scipy.integrate import trapezoid

from varlab.errors import ConfigurationError, CoverageError, DomainError
from varlab.paths import Path, TimeGrid, heat_kernel

logger = logging.getLogger(__name__)

TRUNCATION = 6.0  # kernel support, in standard deviations
COVERAGE = 4.0

_MAGIC = b"SLTF"
_VERSION = 1
_HEADER = struct.Struct("<4sIqqddddd")


def default_bandwidth(dt: float) -> float:
    # kernel variance eps_L, well below dt^(1/2) so that E L_1^0 and E ∫(L_1^z)^2 dz stay within 1%
    return dt ** 1.25


@dataclass(frozen=True)
class SpaceGrid:
    x_min: float
    x_max: float
    m_cells: int

    def __post_init__(self):
        if int(self.m_cells) != self.m_cells or self.m_cells <= 0:
            raise ConfigurationError(f"m_cells must be a positive integer, got {self.m_cells}")
        if not self.x_min < self.x_max:
            raise ConfigurationError(f"x_min ({self.x_min}) must be smaller than x_max ({self.x_max})")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.m_cells

    @property
    def points(self) -> np.ndarray:
        return self.x_min + np.arange(self.m_cells + 1) * self.dx

    @classmethod
    def covering(cls, path: Path, eps_L: float, reach: float = 0.0) -> "SpaceGrid":
        """Symmetric grid with 0 as a node and dx = sqrt(eps_L)/2.

        ``reach`` widens the grid beyond the path range, for lookups at
        B_r + θ sqrt(t - r).
        """
        width = math.sqrt(eps_L)
        dx = 0.5 * width
        half = np.max(np.abs(path.values)) + TRUNCATION * width + reach
        cells = math.ceil(half / dx)
        return cls(-cells * dx, cells * dx, 2 * cells)


@dataclass(frozen=True, eq=False)
class LocalTimeField:
    time_grid: TimeGrid
    space_grid: SpaceGrid
    eps_L: float
    values: np.ndarray

    def __post_init__(self):
        expected = (self.time_grid.n_steps + 1, self.space_grid.m_cells + 1)
        if self.values.shape != expected:
            raise ConfigurationError(f"field shape {self.values.shape} does not match grids {expected}")
        self.values.setflags(write=False)

    def interpolate(self, rows, x) -> np.ndarray:
        """Linear interpolation in space of the rows ``rows`` at positions ``x``.

        ``rows`` and ``x`` broadcast against each other.
        """
        grid = self.space_grid
        x = np.asarray(x, dtype=float)
        position = (x - grid.x_min) / grid.dx
        if np.any(position < 0) or np.any(position > grid.m_cells):
            low, high = float(np.min(x)), float(np.max(x))
            if low < grid.x_min:
                raise CoverageError("field lookup outside space grid", "lower", low, grid.x_min)
            raise CoverageError("field lookup outside space grid", "upper", high, grid.x_max)
        cell = np.minimum(position.astype(int), grid.m_cells - 1)
        frac = position - cell
        rows = np.asarray(rows)
        return (1.0 - frac) * self.values[rows, cell] + frac * self.values[rows, cell + 1]

    def reflected(self) -> "LocalTimeField":
        """The field of the reflected path -B."""
        grid = SpaceGrid(-self.space_grid.x_max, -self.space_grid.x_min, self.space_grid.m_cells)
        return replace(self, space_grid=grid, values=self.values[:, ::-1].copy())

    def scaled(self, factor: float) -> "LocalTimeField":
        return replace(self, values=factor * self.values)

    def occupation_mass(self, t_index: int) -> float:
        """∫ L_t^z dz, which equals t for an occupation density."""
        self._check_row(t_index)
        return float(trapezoid(self.values[t_index], dx=self.space_grid.dx))

    def _check_row(self, t_index: int):
        if not 0 <= t_index <= self.time_grid.n_steps:
            raise DomainError(f"time index {t_index} outside 0..{self.time_grid.n_steps}")


def build_local_time_field(path: Path, space_grid: SpaceGrid, eps_L: float) -> LocalTimeField:
    if not eps_L > 0:
        raise DomainError(f"local time bandwidth must be positive, got {eps_L}")
    width = math.sqrt(eps_L)
    low = float(np.min(path.values)) - COVERAGE * width
    high = float(np.max(path.values)) + COVERAGE * width
    if space_grid.x_min > low:
        raise CoverageError("space grid too narrow", "lower", low, space_grid.x_min)
    if space_grid.x_max < high:
        raise CoverageError("space grid too narrow", "upper", high, space_grid.x_max)

    grid = path.grid
    dx = space_grid.dx
    window = int(math.ceil(2 * TRUNCATION * width / dx)) + 2
    left = path.values[:-1] - TRUNCATION * width
    first = np.clip(np.ceil((left - space_grid.x_min) / dx).astype(int), 0, space_grid.m_cells)
    columns = first[:, None] + np.arange(window)[None, :]
    inside = columns <= space_grid.m_cells
    columns = np.minimum(columns, space_grid.m_cells)
    offsets = path.values[:-1, None] - (space_grid.x_min + columns * dx)
    weights = np.where(inside & (np.abs(offsets) <= TRUNCATION * width), heat_kernel(offsets, eps_L), 0.0)

    # row i+1 first holds the increment of step i, then the running sum
    values = np.zeros((grid.n_steps + 1, space_grid.m_cells + 1))
    rows = np.broadcast_to(np.arange(1, grid.n_steps + 1)[:, None], columns.shape)
    np.add.at(values, (rows[inside], columns[inside]), weights[inside] * grid.dt)
    np.cumsum(values, axis=0, out=values)
    return LocalTimeField(grid, space_grid, eps_L, values)


def _check_same_grid(field: LocalTimeField, path: Path):
    if field.time_grid != path.grid:
        raise ConfigurationError(f"field grid {field.time_grid} does not match path grid {path.grid}")


def running_local_time(field: LocalTimeField, path: Path) -> np.ndarray:
    """L_{t_i}^{B_{t_i}} along the path."""
    _check_same_grid(field, path)
    rows = np.arange(path.grid.n_steps + 1)
    return field.interpolate(rows, path.values)


def squared_field_integral(field: LocalTimeField, t_index: int) -> float:
    field._check_row(t_index)
    return float(trapezoid(field.values[t_index] ** 2, dx=field.space_grid.dx))


def power_local_time_integral(field: LocalTimeField, path: Path, exponent: float) -> float:
    """∫_0^T (L_r^{B_r})^exponent dr by the trapezoid rule."""
    if exponent < 0:
        raise DomainError(f"exponent must be non-negative, got {exponent}")
    running = running_local_time(field, path)
    return float(trapezoid(np.power(running, exponent), dx=path.grid.dt))


def dump_field(field: LocalTimeField, target) -> None:
    """Write the field as header + row-major little-endian float64 payload."""
    time_grid, space_grid = field.time_grid, field.space_grid
    header = _HEADER.pack(
        _MAGIC, _VERSION, time_grid.n_steps, space_grid.m_cells,
        time_grid.t_start, time_grid.t_end, space_grid.x_min, space_grid.x_max, field.eps_L,
    )
    with open(FilePath(target), "wb") as handle:
        handle.write(header)
        handle.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    logger.debug("Dumped local time field %sx%s to %s", *field.values.shape, target)


def load_field(source) -> LocalTimeField:
    raw = FilePath(source).read_bytes()
    magic, version, n_steps, m_cells, t_start, t_end, x_min, x_max, eps_L = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise ConfigurationError(f"{source} is not a version {_VERSION} local time dump")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n_steps + 1, m_cells + 1)
    return LocalTimeField(TimeGrid(t_start, t_end, n_steps), SpaceGrid(x_min, x_max, m_cells), eps_L, values.copy())
