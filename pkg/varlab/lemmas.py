"""Executable checks of the Gaussian moment lemmas used in the variation proofs."""

import logging
import math

import numpy as np
from scipy import integrate, special

from varlab.errors import DomainError
from varlab.paths import Seed, heat_kernel
from varlab.schemas import Lemma1Report, LemmaA1Report, LemmaA2Check
from varlab.variation import log_slope

logger = logging.getLogger(__name__)

# both constants are fixed by the Gaussian integrals, see lemma_a2_quadrature and lemma_a1_exact_chain
KERNEL_MOMENT_CONSTANT = 1.0 / (2.0 * math.pi)
INDICATOR_BOUND_CONSTANT = 1.0 / (2.0 * math.pi)


def _require_positive(**values):
    for name, value in values.items():
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")


def lemma_a2_kernel_moment(alpha: float, beta: float, sigma1_sq: float, sigma2_sq: float) -> float:
    """E[p_α(X) p_β(X+Y)] for independent X ~ N(0, σ₁²), Y ~ N(0, σ₂²)."""
    _require_positive(alpha=alpha, beta=beta, sigma1_sq=sigma1_sq, sigma2_sq=sigma2_sq)
    determinant = (alpha + sigma1_sq) * (beta + sigma2_sq) + alpha * sigma1_sq
    return KERNEL_MOMENT_CONSTANT / math.sqrt(determinant)


def lemma_a2_quadrature(alpha: float, beta: float, sigma1_sq: float, sigma2_sq: float) -> float:
    """Brute-force 2-D quadrature of the same expectation."""
    _require_positive(alpha=alpha, beta=beta, sigma1_sq=sigma1_sq, sigma2_sq=sigma2_sq)
    reach_x = 10.0 * math.sqrt(min(alpha, sigma1_sq))
    reach_y = 10.0 * math.sqrt(beta + sigma2_sq) + reach_x

    def integrand(y, x):
        return (heat_kernel(x, alpha) * heat_kernel(x + y, beta)
                * heat_kernel(x, sigma1_sq) * heat_kernel(y, sigma2_sq))

    value, _ = integrate.dblquad(integrand, -reach_x, reach_x, -reach_y, reach_y, epsabs=1e-13, epsrel=1e-10)
    return float(value)


def lemma_a2_monte_carlo(alpha: float, beta: float, sigma1_sq: float, sigma2_sq: float,
                         n_samples: int = 1_000_000, seed: Seed = Seed(0)) -> tuple[float, float]:
    _require_positive(alpha=alpha, beta=beta, sigma1_sq=sigma1_sq, sigma2_sq=sigma2_sq)
    rng = seed.generator()
    x = rng.standard_normal(n_samples) * math.sqrt(sigma1_sq)
    y = rng.standard_normal(n_samples) * math.sqrt(sigma2_sq)
    values = heat_kernel(x, alpha) * heat_kernel(x + y, beta)
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(n_samples))


def lemma_a2_check(alpha: float, beta: float, sigma1_sq: float, sigma2_sq: float,
                   n_samples: int = 1_000_000, seed: Seed = Seed(0), n_stderr: float = 3.0) -> LemmaA2Check:
    formula = lemma_a2_kernel_moment(alpha, beta, sigma1_sq, sigma2_sq)
    quadrature = lemma_a2_quadrature(alpha, beta, sigma1_sq, sigma2_sq)
    mean, stderr = lemma_a2_monte_carlo(alpha, beta, sigma1_sq, sigma2_sq, n_samples, seed)
    agrees = abs(quadrature / formula - 1.0) < 1e-6 and abs(mean - formula) <= n_stderr * stderr
    return LemmaA2Check(
        alpha=alpha, beta=beta, sigma1_sq=sigma1_sq, sigma2_sq=sigma2_sq, formula=formula,
        quadrature=quadrature, monte_carlo=mean, mc_stderr=stderr, agrees=agrees,
    )


def indicator_projection(x: float, y: float, z: float, theta):
    """g(θ) = P(Y < X < Y+Z | X) - P(Y+Z < X < Y | X) at X = sqrt(x) θ.

    Y ~ N(0, y) and Z ~ N(0, z) are independent of X. Equivalently
    (1/(2 sqrt(2π))) ∫_0^z sqrt(x) θ (y+ξ)^(-3/2) exp(-x θ² / (2(y+ξ))) dξ.
    """
    theta = np.asarray(theta, dtype=float)
    return special.ndtr(math.sqrt(x / y) * theta) - special.ndtr(math.sqrt(x / (y + z)) * theta)


def lemma_a1_quadrature(x: float, y: float, z: float) -> float:
    """∫ g(θ)² φ(θ) dθ."""
    value, _ = integrate.quad(
        lambda t: indicator_projection(x, y, z, t) ** 2 * math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi),
        -12.0, 12.0, points=[0.0], limit=400, epsabs=1e-14,
    )
    return float(value)


def lemma_a1_exact_chain(x: float, y: float, z: float) -> float:
    """(x / 8π) ∫∫_{[0,z]²} [x(2y+ξ₁+ξ₂) + (y+ξ₁)(y+ξ₂)]^(-3/2) dξ₁ dξ₂, equal to the quadrature."""
    value, _ = integrate.dblquad(
        lambda b, a: (x * (2.0 * y + a + b) + (y + a) * (y + b)) ** -1.5, 0.0, z, 0.0, z,
        epsabs=1e-14, epsrel=1e-10,
    )
    return x * float(value) / (8.0 * math.pi)


def lemma_a1_bound(x: float, y: float, z: float) -> float:
    """C x^(-1/2) (2 sqrt(2y+z) - sqrt(2y) - sqrt(2y+2z)), from dropping (y+ξ₁)(y+ξ₂) in the chain."""
    gap = 2.0 * math.sqrt(2.0 * y + z) - math.sqrt(2.0 * y) - math.sqrt(2.0 * y + 2.0 * z)
    return INDICATOR_BOUND_CONSTANT * gap / math.sqrt(x)


def lemma_a1_monte_carlo(x: float, y: float, z: float, n_samples: int = 1_000_000,
                         seed: Seed = Seed(0)) -> tuple[float, float]:
    """E[D D'] where D, D' share X and draw Y, Z independently; equals E g(θ)²."""
    rng = seed.generator()
    level = rng.standard_normal(n_samples) * math.sqrt(x)

    def signed_indicator():
        low = rng.standard_normal(n_samples) * math.sqrt(y)
        high = low + rng.standard_normal(n_samples) * math.sqrt(z)
        return ((low < level) & (level < high)).astype(float) - ((high < level) & (level < low)).astype(float)

    products = signed_indicator() * signed_indicator()
    return float(np.mean(products)), float(np.std(products, ddof=1) / math.sqrt(n_samples))


def lemma_a1_check(x: float, y: float, z: float, n_mc: int = 1_000_000, seed: Seed = Seed(0),
                   n_stderr: float = 3.0) -> LemmaA1Report:
    _require_positive(x=x, y=y, z=z)
    quadrature = lemma_a1_quadrature(x, y, z)
    exact_chain = lemma_a1_exact_chain(x, y, z)
    bound = lemma_a1_bound(x, y, z)
    mean, stderr = lemma_a1_monte_carlo(x, y, z, n_mc, seed)
    routes_agree = abs(mean - quadrature) <= max(n_stderr * stderr, 1e-12)
    report = LemmaA1Report(
        x=x, y=y, z=z, quadrature=quadrature, monte_carlo=mean, mc_stderr=stderr, exact_chain=exact_chain,
        bound=bound, constant=INDICATOR_BOUND_CONSTANT, bound_holds=quadrature <= bound * (1.0 + 1e-9),
        routes_agree=routes_agree,
    )
    logger.debug("Indicator lemma at (%g, %g, %g): %s", x, y, z, report)
    return report


def increment_profile(j_max: int, beta: float) -> np.ndarray:
    """F(j) = ∫_0^j (sqrt(v+1) - sqrt(v))^β dv for j = 0..j_max."""
    pieces = [
        integrate.quad(lambda v: (math.sqrt(v + 1.0) - math.sqrt(v)) ** beta, m, m + 1.0)[0]
        for m in range(j_max)
    ]
    return np.concatenate(([0.0], np.cumsum(pieces)))


def lemma1_numeric_check(a: float, b: float, beta: float, n_sequence: list[int]) -> Lemma1Report:
    """Σ_j |∫_a^{r_j} (sqrt(r_{j+1} - r) - sqrt(r_j - r))^β dr|^{2/3} on uniform partitions of [a, b].

    The inner integral over [a, r_j] equals h^{1+β/2} F(j) with h = (b-a)/n,
    so every n reuses one table of F.
    """
    if beta <= 1.5:
        raise DomainError(f"beta must exceed 3/2, got {beta}")
    if b < a:
        raise DomainError(f"need a <= b, got [{a}, {b}]")
    if not n_sequence or any(n < 1 for n in n_sequence):
        raise DomainError(f"partition sizes must be positive, got {n_sequence}")
    profile = increment_profile(max(n_sequence) - 1, beta) ** (2.0 / 3.0)
    sums = []
    for n in n_sequence:
        h = (b - a) / n
        sums.append(float(h ** ((2.0 / 3.0) * (1.0 + beta / 2.0)) * np.sum(profile[1:n])))

    strictly_decreasing = all(s2 < s1 for s1, s2 in zip(sums, sums[1:]))
    decreasing_to_zero = sums[-1] < sums[0] / 4.0 and sums[-1] < 0.01 * (b - a)
    fitted = log_slope(n_sequence, sums) if len(sums) > 1 and all(s > 0 for s in sums) else None
    return Lemma1Report(
        a=a, b=b, beta=beta, n_sequence=list(n_sequence), sums=sums, strictly_decreasing=strictly_decreasing,
        decreasing_to_zero=decreasing_to_zero, fitted_rate=fitted, theoretical_rate=1.0 - 2.0 * beta / 3.0,
    )
