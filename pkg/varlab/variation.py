"""Discrete β-variation sums S_{β,n} and dyadic convergence studies."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from varlab.errors import ConfigurationError, DomainError
from varlab.models import ConvergenceMode, ReplicateStatus
from varlab.paths import Seed
from varlab.worker import run_replicates

logger = logging.getLogger(__name__)

DIVERGENCE_SLOPE = 0.15


@dataclass(frozen=True)
class VariationSum:
    beta: float
    interval: tuple[float, float]
    n: int
    value: float


@dataclass(frozen=True)
class ConvergenceStudy:
    beta: float
    n_sequence: list[int]
    means: list[float]
    stderrs: list[float]
    mode: ConvergenceMode = ConvergenceMode.L1
    target: Optional[float] = None
    relative_errors: Optional[list[float]] = None
    trend: Optional[str] = None
    slope: Optional[float] = None
    divergent: bool = False
    replicate_sums: list[list[float]] = field(default_factory=list, repr=False)
    failures: list[tuple[int, str]] = field(default_factory=list)


def variation_sum(samples, beta: float, interval: tuple[float, float] = (0.0, 1.0)) -> VariationSum:
    """Σ_i |x_{i+1} - x_i|^β."""
    if beta < 1:
        raise DomainError(f"beta must be at least 1, got {beta}")
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or len(samples) < 2:
        raise ConfigurationError(f"need at least two samples, got shape {samples.shape}")
    value = float(np.sum(np.abs(np.diff(samples)) ** beta))
    return VariationSum(beta, interval, len(samples) - 1, value)


def additivity_check(samples, beta: float, midpoint_index: int,
                     interval: tuple[float, float] = (0.0, 1.0)):
    """(left, right, whole) sums over [a, c], [c, b] and [a, b]."""
    samples = np.asarray(samples, dtype=float)
    n = len(samples) - 1
    if n < 2 or n % 2 or midpoint_index != n // 2:
        raise ConfigurationError(
            f"midpoint {midpoint_index} does not split {n} increments into equal halves"
        )
    a, b = interval
    c = a + 0.5 * (b - a)
    left = variation_sum(samples[: midpoint_index + 1], beta, (a, c))
    right = variation_sum(samples[midpoint_index:], beta, (c, b))
    whole = variation_sum(samples, beta, interval)
    return left, right, whole


def log_slope(n_sequence, means) -> float:
    """Least-squares slope of log(mean) against log(n)."""
    return float(np.polyfit(np.log(n_sequence), np.log(means), 1)[0])


def run_convergence_study(process_generator: Callable[[Seed, int], np.ndarray], beta: float,
                          n_sequence: list[int], n_rep: int, target: Optional[float] = None,
                          seed: Seed = Seed(0), interval: tuple[float, float] = (0.0, 1.0),
                          mode: ConvergenceMode = ConvergenceMode.L1,
                          threads: Optional[int] = None, strict: bool = True) -> ConvergenceStudy:
    """Mean and standard error of S_{β,n} for each n, on common dyadic refinements.

    ``process_generator(seed, n_max)`` returns n_max + 1 samples on the finest
    partition of ``interval``; every coarser partition is a strided subsample
    of the same path. With ``strict`` a failed replicate raises
    :class:`ReplicateError`; otherwise it is left out and listed in ``failures``.
    """
    if n_rep < 100:
        raise ConfigurationError(f"convergence study needs n_rep >= 100, got {n_rep}")
    if not n_sequence or any(n <= 0 or n & (n - 1) for n in n_sequence):
        raise ConfigurationError(f"n_sequence must hold powers of two, got {n_sequence}")
    if any(b <= a for a, b in zip(n_sequence, n_sequence[1:])):
        raise ConfigurationError(f"n_sequence must be strictly increasing, got {n_sequence}")
    n_max = n_sequence[-1]

    def job(replicate: int) -> list[float]:
        samples = np.asarray(process_generator(seed.spawn(replicate), n_max), dtype=float)
        if samples.shape != (n_max + 1,):
            raise ConfigurationError(f"generator returned {samples.shape}, expected ({n_max + 1},)")
        return [variation_sum(samples[:: n_max // n], beta, interval).value for n in n_sequence]

    failures = []
    if strict:
        sums = np.asarray(run_replicates(job, n_rep, threads))
    else:
        outcomes = run_replicates(job, n_rep, threads, strict=False)
        failures = [(o.index, o.error) for o in outcomes if o.status is ReplicateStatus.FAILED]
        kept = [o.result for o in outcomes if o.status is ReplicateStatus.COMPLETED]
        if len(kept) < 2:
            raise ConfigurationError(f"only {len(kept)} of {n_rep} replicates completed")
        sums = np.asarray(kept)
    n_done = len(sums)
    means = sums.mean(axis=0)
    stderrs = sums.std(axis=0, ddof=1) / math.sqrt(n_done)

    relative_errors = trend = None
    if target is not None:
        if mode is ConvergenceMode.L2:
            errors = np.sqrt(np.mean((sums - target) ** 2, axis=0))
        else:
            errors = np.abs(means - target)
        relative_errors = [float(e) / abs(target) for e in errors]
        decreasing = all(b < a for a, b in zip(relative_errors, relative_errors[1:]))
        trend = "converging" if decreasing else "not-converging"

    slope = log_slope(n_sequence, means) if len(n_sequence) > 1 and np.all(means > 0) else None
    divergent = slope is not None and slope > DIVERGENCE_SLOPE
    logger.info("β=%g variation study over n=%s: means %s, slope %s", beta, n_sequence,
                np.round(means, 5).tolist(), slope)
    return ConvergenceStudy(
        beta=beta, n_sequence=list(n_sequence), means=means.tolist(), stderrs=stderrs.tolist(),
        mode=mode, target=target, relative_errors=relative_errors, trend=trend, slope=slope,
        divergent=divergent, replicate_sums=sums.tolist(), failures=failures,
    )
