"""Quadrature rules shared by the estimators.

``GaussHermiteRule`` integrates against the standard normal density and stands
in for every auxiliary N(0, 1) variable (θ, η, ξ). ``XGrid`` and ``ZGrid`` are
the graded and log-spaced grids of the quadratic form behind the constant K.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from varlab.errors import ConfigurationError, CoverageError
from varlab.paths import Path


@dataclass(frozen=True, eq=False)
class GaussHermiteRule:
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def probabilists(cls, n: int) -> "GaussHermiteRule":
        """n-point rule for E f(θ), θ ~ N(0, 1)."""
        if n < 1:
            raise ConfigurationError(f"Gauss-Hermite rule needs at least one node, got {n}")
        knots, weights = np.polynomial.hermite.hermgauss(n)
        knots = knots * np.sqrt(2.0)
        weights = weights / np.sqrt(np.pi)
        # hermgauss is symmetric only up to rounding
        knots = 0.5 * (knots - knots[::-1])
        weights = 0.5 * (weights + weights[::-1])
        return cls(knots, weights)

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def theta_max(self) -> float:
        return float(np.max(np.abs(self.nodes)))

    def expect(self, values: np.ndarray) -> np.ndarray:
        """Contract the trailing node axis of ``values`` with the weights."""
        return np.asarray(values) @ self.weights


@dataclass(frozen=True, eq=False)
class XGrid:
    """Cells [edges[k], edges[k+1]] on [0, x_max], geometric toward 0.

    Cells grow by ``growth`` from ``h_min`` until they reach ``max_width``,
    then stay uniform up to the truncation point.
    """

    edges: np.ndarray

    @classmethod
    def graded(cls, x_max: float, h_min: float = 1e-6, growth: float = 1.2,
               max_width: float = 1.0 / 16) -> "XGrid":
        if not 0 < h_min < max_width <= x_max or growth <= 1:
            raise ConfigurationError(
                f"graded grid needs 0 < h_min < max_width <= x_max and growth > 1, "
                f"got h_min={h_min}, max_width={max_width}, x_max={x_max}, growth={growth}"
            )
        edges = [0.0, h_min]
        while edges[-1] < x_max:
            width = min((growth - 1.0) * edges[-1], max_width)
            edges.append(min(edges[-1] + width, x_max))
        return cls(np.asarray(edges))

    @property
    def x_max(self) -> float:
        return float(self.edges[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def n_cells(self) -> int:
        return len(self.edges) - 1

    @cached_property
    def kernel_matrix(self) -> np.ndarray:
        """Exact cell-pair integrals of (x+y)^(-3/2)."""
        a = self.edges[:-1]
        b = self.edges[1:]
        root = lambda u, v: np.sqrt(u[:, None] + v[None, :])
        return 4.0 * (root(b, a) - root(a, a) - root(b, b) + root(a, b))

    def cell_averages(self, path: Path) -> np.ndarray:
        """Cell averages of x -> B_{1+x} - B_x for the linear interpolant of ``path``."""
        grid = path.grid
        if grid.t_start > 0 or grid.t_end < self.x_max + 1.0 - 1e-12:
            raise CoverageError("increment path too short", "upper", self.x_max + 1.0, grid.t_end)
        a = self.edges[:-1]
        b = self.edges[1:]
        integral = _linear_antiderivative(path)
        spread = integral(1.0 + b) - integral(1.0 + a) - integral(b) + integral(a)
        averages = spread / (b - a)
        narrow = (b - a) <= grid.dt
        middle = 0.5 * (a + b)
        averages[narrow] = path.at(1.0 + middle[narrow]) - path.at(middle[narrow])
        return averages


def _linear_antiderivative(path: Path):
    """t -> ∫_{t_start}^t B, exact for the piecewise linear interpolant."""
    grid = path.grid
    values = path.values
    dt = grid.dt
    nodes = np.concatenate(([0.0], np.cumsum(0.5 * dt * (values[:-1] + values[1:]))))
    slopes = np.diff(values) / dt

    def integral(t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.floor((t - grid.t_start) / dt).astype(int), 0, grid.n_steps - 1)
        s = t - grid.point(0) - k * dt
        return nodes[k] + s * values[k] + 0.5 * s * s * slopes[k]

    return integral


@dataclass(frozen=True, eq=False)
class ZGrid:
    """Log-spaced nodes with trapezoid weights in log z (dz = z d log z)."""

    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def log_spaced(cls, z_min: float = 1e-4, z_max: float = 1e4, n_nodes: int = 300) -> "ZGrid":
        if not 0 < z_min < z_max or n_nodes < 2:
            raise ConfigurationError(
                f"log grid needs 0 < z_min < z_max and two nodes, got {z_min}, {z_max}, {n_nodes}"
            )
        nodes = np.geomspace(z_min, z_max, n_nodes)
        step = math.log(z_max / z_min) / (n_nodes - 1)
        weights = np.full(n_nodes, step)
        weights[[0, -1]] *= 0.5
        return cls(nodes, weights * nodes)

    @property
    def z_min(self) -> float:
        return float(self.nodes[0])

    @property
    def z_max(self) -> float:
        return float(self.nodes[-1])
