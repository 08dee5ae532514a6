"""The fractional-type process X_t = ∫_0^t E^θ W_{θ sqrt(t-r)} dB_r and its closed-form moments.

X behaves like a fractional Brownian motion with Hurst index 3/4: the noise
average E^θ W_{θ sqrt(s)} = ∫ W_y p_s(y) dy grows like s^(1/4). The average is
taken exactly over the piecewise-linear W, so it is smooth in s. Y, the version
driven from -∞, has stationary increments and is only used through its variance.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal, special, stats

from varlab.errors import ConfigurationError, CoverageError, DomainError
from varlab.paths import Path, Seed, TimeGrid, TwoSidedPath, heat_kernel, simulate_brownian, simulate_two_sided
from varlab.schemas import SelfSimilarityReport, SelfSimilarityRow
from varlab.worker import run_replicates

logger = logging.getLogger(__name__)

HURST = 0.75
# E^W (E^θ W_{θ sqrt(s)})^2 = NOISE_VARIANCE * sqrt(s)
NOISE_VARIANCE = (math.sqrt(2.0) - 1.0) / math.sqrt(math.pi)
KERNEL_REACH = 7.0  # standard deviations of p_s kept in the heat average
LAG_BLOCK = 256


@dataclass(frozen=True, eq=False)
class SmoothedNoiseProcess:
    driver: Path
    noise: TwoSidedPath
    values: np.ndarray

    @property
    def grid(self) -> TimeGrid:
        return self.driver.grid

    def as_path(self) -> Path:
        return Path(self.driver.grid, self.values, self.driver.seed)


def default_noise_step(dt: float, refinement: int = 4) -> float:
    """Noise cells per sqrt(dt), the spread of p_s at the smallest lag."""
    return math.sqrt(dt) / refinement


def noise_reach(grid: TimeGrid) -> float:
    return KERNEL_REACH * math.sqrt(grid.t_end - grid.t_start)


def heat_average_weights(sigma, dy: float, n_cells: int) -> np.ndarray:
    """c[k, j] with E^θ W_{θ σ_k} = Σ_j c[k, j] (ΔW_j(+) + ΔW_j(-)).

    ΔW_j(±) is the increment of a branch over [j dy, (j+1) dy]. For W linear on
    each cell and flat past the last one, c[k, j] is the cell mean of Φ(-y/σ_k),
    taken through the antiderivative y Φ(-y/σ) - σ φ(y/σ).
    """
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))[:, None]
    if np.any(sigma <= 0):
        raise DomainError("heat average needs positive spreads")
    u = (np.arange(n_cells + 1) * dy)[None, :] / sigma
    antiderivative = sigma * (u * special.ndtr(-u) - heat_kernel(u, 1.0))
    return np.diff(antiderivative, axis=1) / dy


def lag_kernel(noise: TwoSidedPath, grid: TimeGrid) -> np.ndarray:
    """G[m] = ∫ W_y p_s(y) dy at the cell midpoint lag s = (m - 1/2) dt; G[0] = 0.

    Cells beyond KERNEL_REACH standard deviations are dropped, lag block by
    lag block.
    """
    if noise.positive.grid != noise.negative.grid:
        raise ConfigurationError("the two branches of the noise must share a grid")
    dy = noise.positive.grid.dt
    increments = noise.positive.increments + noise.negative.increments
    n = grid.n_steps
    sigma = np.sqrt((np.arange(1, n + 1) - 0.5) * grid.dt)
    kernel = np.zeros(n + 1)
    for start in range(0, n, LAG_BLOCK):
        stop = min(start + LAG_BLOCK, n)
        width = min(len(increments), math.ceil(KERNEL_REACH * sigma[stop - 1] / dy))
        weights = heat_average_weights(sigma[start:stop], dy, width)
        kernel[start + 1: stop + 1] = weights @ increments[:width]
    return kernel


def simulate_x(driver: Path, noise: TwoSidedPath) -> SmoothedNoiseProcess:
    """X_{t_i} = Σ_{j<i} G[i-j] ΔB_j.

    G does not depend on B, so the cell of ΔB_j may be read at its midpoint lag.
    The integrand depends on r only through the lag t_i - r, so the sum is a
    discrete convolution of the lag kernel with the increments.
    """
    grid = driver.grid
    reach = noise_reach(grid)
    if noise.extent < reach * (1.0 - 1e-9):
        raise CoverageError("noise path too short for the heat average", "upper", reach, noise.extent)
    kernel = lag_kernel(noise, grid)
    values = signal.fftconvolve(kernel, driver.increments)[: grid.n_steps + 1]
    values[0] = 0.0
    return SmoothedNoiseProcess(driver, noise, values)


def simulate_x_replicate(grid: TimeGrid, seed: Seed, noise_refinement: int = 4) -> SmoothedNoiseProcess:
    """One replicate: B on sub-stream 0, the two branches of W on sub-streams 1 and 2."""
    driver = simulate_brownian(grid, seed)
    noise = simulate_two_sided(noise_reach(grid), default_noise_step(grid.dt, noise_refinement), seed)
    return simulate_x(driver, noise)


def _check_time(t: float):
    if t < 0:
        raise DomainError(f"time must be non-negative, got {t}")


def variance_x(t: float) -> float:
    _check_time(t)
    return NOISE_VARIANCE * (2.0 / 3.0) * t ** 1.5


def variance_y(t: float) -> float:
    """E Y_t², with the improper integral evaluated through its antiderivative."""
    _check_time(t)
    antiderivative_at_zero = (2.0 * t) ** 1.5 / 6.0 - (2.0 / 3.0) * t ** 1.5
    tail = -antiderivative_at_zero  # F(∞) = 0
    head = (math.sqrt(2.0) - 1.0) * (2.0 / 3.0) * t ** 1.5
    return (tail + head) / math.sqrt(math.pi)


def variance_y_by_quadrature(t: float) -> float:
    """The same variance with both integrals done by adaptive quadrature."""
    _check_time(t)
    if t == 0:
        return 0.0
    tail, _ = integrate.quad(lambda r: math.sqrt(2 * t + 4 * r) - math.sqrt(t + r) - math.sqrt(r), 0, np.inf,
                             limit=200, epsabs=1e-12, epsrel=1e-11)
    head, _ = integrate.quad(lambda r: math.sqrt(2 * (t - r)) - math.sqrt(t - r), 0, t,
                           epsabs=1e-12, epsrel=1e-11)
    return (tail + head) / math.sqrt(math.pi)


def x_marginal_job(seed: Seed, times: list[float], n_steps: int = 4096, noise_refinement: int = 4):
    """Replicate job returning X at each of ``times``, simulated on one grid over [0, max(times)]."""
    grid = TimeGrid(0.0, max(times), n_steps)
    indices = [grid.index_of(t) for t in times]

    def job(replicate: int) -> np.ndarray:
        process = simulate_x_replicate(grid, seed.spawn(replicate), noise_refinement)
        return process.values[indices]

    return job


def sample_x_marginals(n_rep: int, times: list[float], n_steps: int = 4096, seed: Seed = Seed(0),
                       noise_refinement: int = 4, threads: int | None = None) -> np.ndarray:
    """(n_rep, len(times)) matrix of X samples."""
    job = x_marginal_job(seed, times, n_steps, noise_refinement)
    return np.vstack(run_replicates(job, n_rep, threads))


def compare_marginals(columns: dict[float, np.ndarray], t_pairs: list[tuple[float, float]],
                      ratio_tolerance: float = 0.05, ks_tolerance: float = 0.03) -> list[SelfSimilarityRow]:
    """Var(X_2t)/Var(X_t) against 2^(3/2) and the KS distance of X_2t/2^(3/4) against X_t."""
    expected = 2.0 ** (2 * HURST)
    rows = []
    for t, t2 in t_pairs:
        ratio = float(np.var(columns[t2], ddof=1) / np.var(columns[t], ddof=1))
        ks = float(stats.ks_2samp(columns[t2] / 2.0**HURST, columns[t]).statistic)
        rows.append(SelfSimilarityRow(
            t=t, ratio=ratio, expected_ratio=expected, ks_distance=ks,
            ratio_ok=abs(ratio / expected - 1.0) <= ratio_tolerance, ks_ok=ks <= ks_tolerance,
        ))
        logger.info("Self-similarity at t=%g: variance ratio %.4f (target %.4f), KS %.4f", t, ratio, expected, ks)
    return rows


def check_t_pairs(t_pairs: list[tuple[float, float]]):
    for t, t2 in t_pairs:
        if not 0 < t or not math.isclose(t2, 2 * t):
            raise ConfigurationError(f"pairs must be (t, 2t) with t > 0, got ({t}, {t2})")


def check_self_similarity(n_rep: int, t_pairs: list[tuple[float, float]], n_steps: int = 4096,
                          seed: Seed = Seed(0), noise_refinement: int = 4,
                          threads: int | None = None, ratio_tolerance: float = 0.05,
                          ks_tolerance: float = 0.03) -> SelfSimilarityReport:
    if n_rep < 1000:
        raise ConfigurationError(f"self-similarity check needs n_rep >= 1000, got {n_rep}")
    if not t_pairs:
        return SelfSimilarityReport(n_rep=n_rep)
    check_t_pairs(t_pairs)
    times = sorted({t for pair in t_pairs for t in pair})
    samples = sample_x_marginals(n_rep, times, n_steps, seed, noise_refinement, threads)
    columns = {t: samples[:, k] for k, t in enumerate(times)}
    rows = compare_marginals(columns, t_pairs, ratio_tolerance, ks_tolerance)
    return SelfSimilarityReport(n_rep=n_rep, rows=rows)
