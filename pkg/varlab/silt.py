"""Mollified self-intersection local time and two estimators of its derivative γ."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from varlab.config import settings
from varlab.errors import ConfigurationError, DomainError
from varlab.local_time import LocalTimeField, running_local_time
from varlab.models import GammaRoute
from varlab.paths import Path, TimeGrid, heat_kernel, heat_kernel_deriv
from varlab.quadrature import GaussHermiteRule

logger = logging.getLogger(__name__)

# E[D_r γ_t | F_r] = 2 ∫ p_{t-r}(y) (L_r^{y+B_r} - L_r^{B_r}) dy, from ∂_v p_v = p_v''/2
CLARK_OCONE_FACTOR = 2.0


@dataclass(frozen=True, eq=False)
class GammaPath:
    grid: TimeGrid
    values: np.ndarray
    route: GammaRoute
    eps: float | None = None
    theta_nodes: int | None = None


def default_mollifier(dt: float) -> float:
    return dt ** 0.75


def _lower_triangle_row_sums(values: np.ndarray, kernel, count: int) -> np.ndarray:
    """r_u = Σ_{s<u} kernel(B_u - B_s) for u < count, in fixed row-block order."""
    sums = np.zeros(count)
    block = max(1, settings.CHUNK_ROWS)
    for start in range(0, count, block):
        stop = min(start + block, count)
        rows = np.arange(start, stop)
        differences = values[start:stop, None] - values[None, :stop]
        below = np.arange(stop)[None, :] < rows[:, None]
        sums[start:stop] = np.sum(np.where(below, kernel(differences), 0.0), axis=1)
    return sums


def _check_partition(path: Path, partition: TimeGrid) -> int:
    offset, stride = path.grid.stride_of(partition)
    if offset != 0:
        raise ConfigurationError(
            f"partition must start at the path origin {path.grid.t_start}, starts at {partition.t_start}"
        )
    return stride


def silt_alpha(path: Path, y: float, eps: float) -> float:
    """Σ_{s<u} p_eps(B_u - B_s - y) dt² over left endpoints s < u < n."""
    if not eps > 0:
        raise DomainError(f"mollifier bandwidth must be positive, got {eps}")
    dt = path.grid.dt
    sums = _lower_triangle_row_sums(path.values, lambda d: heat_kernel(d - y, eps), path.grid.n_steps)
    return float(np.sum(sums) * dt * dt)


def gamma_direct(path: Path, eps: float, partition: TimeGrid) -> GammaPath:
    """γ_{t_i} = Σ_{s<u<i} p'_eps(B_u - B_s) dt², accumulated one row at a time."""
    if not eps > 0:
        raise DomainError(f"mollifier bandwidth must be positive, got {eps}")
    stride = _check_partition(path, partition)
    last = partition.n_steps * stride
    dt = path.grid.dt
    sums = _lower_triangle_row_sums(path.values, lambda d: heat_kernel_deriv(d, eps), last)
    running = np.concatenate(([0.0], np.cumsum(sums))) * (dt * dt)
    return GammaPath(partition, running[::stride], GammaRoute.DIRECT, eps=eps)


def gamma_direct_single(path: Path, eps: float, t_index: int) -> float:
    """γ at one grid index, summed from scratch."""
    if not 0 <= t_index <= path.grid.n_steps:
        raise DomainError(f"time index {t_index} outside 0..{path.grid.n_steps}")
    head = path.values[:t_index]
    differences = head[:, None] - head[None, :]
    kernel = np.tril(heat_kernel_deriv(differences, eps), k=-1)
    return float(np.sum(kernel) * path.grid.dt ** 2)


def gamma_clark_ocone(path: Path, field: LocalTimeField, rule: GaussHermiteRule,
                      partition: TimeGrid) -> GammaPath:
    """Left-point Itô sum of E^θ[L_r^{B_r + θ sqrt(t-r)} - L_r^{B_r}] against dB_r.

    The r = t term is left out; its integrand vanishes like (t - r)^(1/4).
    """
    stride = _check_partition(path, partition)
    running = running_local_time(field, path)
    dt = path.grid.dt
    increments = path.increments
    theta = rule.nodes[None, :]

    values = np.zeros(partition.n_steps + 1)
    for p in range(1, partition.n_steps + 1):
        end = p * stride
        rows = np.arange(end)
        lag = np.sqrt((end - rows) * dt)[:, None]
        shifted = field.interpolate(rows[:, None], path.values[:end, None] + theta * lag)
        integrand = rule.expect(shifted - running[:end, None])
        values[p] = CLARK_OCONE_FACTOR * float(integrand @ increments[:end])
    return GammaPath(partition, values, GammaRoute.CLARK_OCONE, theta_nodes=rule.size)


def variance_scaling_exponent(at_t: np.ndarray, at_2t: np.ndarray) -> float:
    """log2 of Var(γ_{2t}) / Var(γ_t); the exact value for γ is 2."""
    return math.log2(float(np.var(at_2t, ddof=1)) / float(np.var(at_t, ddof=1)))
