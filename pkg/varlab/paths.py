"""Seedable Brownian paths on uniform grids and the Gaussian heat kernel."""

import math
from dataclasses import dataclass, field

import numpy as np

from varlab.errors import ConfigurationError, DomainError

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_UINT64 = 2**64


@dataclass(frozen=True)
class Seed:
    """Addresses every random draw by (root, stream, substream).

    Streams index replicates. Substreams separate the independent inputs of a
    single replicate: 0 is the driver B, 1 and 2 are the branches of W.
    """

    root: int
    stream: int = 0

    def __post_init__(self):
        for name in ("root", "stream"):
            value = getattr(self, name)
            if not 0 <= value < _UINT64:
                raise ConfigurationError(f"seed {name} must be a 64-bit unsigned integer, got {value}")

    def generator(self, substream: int = 0) -> np.random.Generator:
        sequence = np.random.SeedSequence(entropy=self.root, spawn_key=(self.stream, substream))
        return np.random.Generator(np.random.Philox(sequence))

    def spawn(self, stream: int) -> "Seed":
        return Seed(self.root, stream)

    def for_study(self, study: int) -> "Seed":
        """Independent root for one of several studies sharing a run seed."""
        state = np.random.SeedSequence(entropy=self.root, spawn_key=(study,)).generate_state(1, np.uint64)
        return Seed(int(state[0]))


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps <= 0:
            raise ConfigurationError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not self.t_start < self.t_end:
            raise ConfigurationError(f"t_start ({self.t_start}) must be smaller than t_end ({self.t_end})")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def points(self) -> np.ndarray:
        # t_i = t_start + i*dt, never a running sum
        return self.t_start + np.arange(self.n_steps + 1) * self.dt

    def point(self, i: int) -> float:
        return self.t_start + i * self.dt

    def index_of(self, t: float) -> int:
        """Grid index of ``t``; raises when ``t`` is not a grid point."""
        position = (t - self.t_start) / self.dt
        index = int(round(position))
        if abs(position - index) > 1e-9 * max(1.0, abs(position)) or not 0 <= index <= self.n_steps:
            raise ConfigurationError(f"time {t} is not a point of {self}")
        return index

    def stride_of(self, partition: "TimeGrid") -> tuple[int, int]:
        """(offset, stride) such that partition point p is grid point offset + p*stride."""
        ratio = partition.dt / self.dt
        stride = int(round(ratio))
        if stride < 1 or abs(ratio - stride) > 1e-9 * ratio:
            raise ConfigurationError(f"partition step {partition.dt} is not a multiple of path step {self.dt}")
        offset = self.index_of(partition.t_start)
        if offset + partition.n_steps * stride > self.n_steps:
            raise ConfigurationError(f"partition end {partition.t_end} lies beyond path end {self.t_end}")
        return offset, stride


@dataclass(frozen=True, eq=False)
class Path:
    grid: TimeGrid
    values: np.ndarray
    seed: Seed | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_steps + 1,):
            raise ConfigurationError(
                f"path has {values.shape} values, grid needs {self.grid.n_steps + 1}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def at(self, t):
        return np.interp(t, self.grid.points, self.values)

    def negated(self) -> "Path":
        return Path(self.grid, -self.values, self.seed)

    def sample(self, partition: TimeGrid) -> np.ndarray:
        offset, stride = self.grid.stride_of(partition)
        return self.values[offset : offset + partition.n_steps * stride + 1 : stride]


@dataclass(frozen=True, eq=False)
class TwoSidedPath:
    """W indexed by the real line; ``negative`` stores y -> W_{-y}."""

    positive: Path
    negative: Path
    seed: Seed | None = field(default=None)

    @property
    def extent(self) -> float:
        return min(self.positive.grid.t_end, self.negative.grid.t_end)


def simulate_brownian(grid: TimeGrid, seed: Seed, substream: int = 0) -> Path:
    rng = seed.generator(substream)
    increments = rng.standard_normal(grid.n_steps) * math.sqrt(grid.dt)
    values = np.empty(grid.n_steps + 1)
    values[0] = 0.0
    np.cumsum(increments, out=values[1:])
    return Path(grid, values, seed)


def simulate_two_sided(extent: float, dy: float, seed: Seed) -> TwoSidedPath:
    if extent <= 0 or dy <= 0:
        raise ConfigurationError(f"extent and dy must be positive, got extent={extent}, dy={dy}")
    n_steps = max(1, math.ceil(extent / dy - 1e-9))
    grid = TimeGrid(0.0, n_steps * dy, n_steps)
    return TwoSidedPath(
        positive=simulate_brownian(grid, seed, substream=1),
        negative=simulate_brownian(grid, seed, substream=2),
        seed=seed,
    )


def _check_bandwidth(eps: float):
    if not eps > 0:
        raise DomainError(f"kernel bandwidth must be positive, got {eps}")


def heat_kernel(x, eps: float):
    _check_bandwidth(eps)
    x = np.asarray(x, dtype=float)
    result = np.exp(-x * x / (2.0 * eps)) / (_SQRT_2PI * math.sqrt(eps))
    return float(result) if result.ndim == 0 else result


def heat_kernel_deriv(x, eps: float):
    _check_bandwidth(eps)
    x = np.asarray(x, dtype=float)
    result = -(x / eps) * np.exp(-x * x / (2.0 * eps)) / (_SQRT_2PI * math.sqrt(eps))
    return float(result) if result.ndim == 0 else result
