"""
Block-maxima and peaks-over-threshold pipelines with GEV / GPD fitting by
maximum likelihood and by NSE.
"""
import math
from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy import special

from nse.distributions import GUMBEL_SWITCH, XI_BOX, DistributionSpec, Family, as_sample, default_bounds
from nse.errors import DataError, LengthError, NonConvergenceError, ParameterDomainError, RangeError, ThresholdError
from nse.estimator import EstimateResult, EstimationProblem, OptimizerConfig, fit, minimize_multistart
from nse.ranked_quotients import IndexSet
from nse.rng import RngSeed

MIN_FIT_SIZE = 30
MIN_EXCEEDANCES = 30

REGULAR = "regular"
NONSTANDARD = "nonstandard"
UNRELIABLE = "unreliable"


def classify_regime(xi: float) -> str:
    """regular for xi > -0.5, nonstandard for -1 < xi <= -0.5, unreliable for xi <= -1."""
    if xi > -0.5:
        return REGULAR
    if xi > -1.0:
        return NONSTANDARD
    return UNRELIABLE


@dataclass(frozen=True)
class BlockSpec:
    block_size: int
    block_count: int

    def __post_init__(self):
        # block_size 1 is accepted as the degenerate identity design
        if self.block_size < 1 or self.block_count < 1:
            raise ParameterDomainError(f"block design needs m >= 1 and k >= 1, got m={self.block_size}, "
                                       f"k={self.block_count}")

    @property
    def length(self) -> int:
        return self.block_size * self.block_count


@dataclass(frozen=True)
class ThresholdSpec:
    """Either a fixed threshold or a quantile rule; exactly one must be given."""
    threshold: float | None = None
    quantile: float | None = None
    min_exceedances: int = MIN_EXCEEDANCES

    def __post_init__(self):
        if (self.threshold is None) == (self.quantile is None):
            raise ParameterDomainError("ThresholdSpec needs exactly one of threshold or quantile")
        if self.quantile is not None and not 0 < self.quantile < 1:
            raise ParameterDomainError(f"threshold quantile must lie in (0,1), got {self.quantile}")

    def resolve(self, series: np.ndarray) -> float:
        if self.threshold is not None:
            return float(self.threshold)
        return float(np.quantile(series, self.quantile))


def block_maxima(series, spec: BlockSpec) -> np.ndarray:
    x = as_sample(series)
    if x.size < spec.length:
        raise LengthError(f"series of length {x.size} is shorter than m*k = {spec.length}")
    leftover = x.size - spec.length
    if leftover:
        logger.warning(f"block_maxima: discarded {leftover} trailing observation(s)")
    return x[: spec.length].reshape(spec.block_count, spec.block_size).max(axis=1)


def excesses(series, spec: ThresholdSpec) -> np.ndarray:
    x = as_sample(series)
    u = spec.resolve(x)
    above = x[x > u] - u
    if above.size < spec.min_exceedances:
        raise ThresholdError(f"threshold {u:.6g} leaves {above.size} exceedance(s), need {spec.min_exceedances}",
                             count=int(above.size))
    return above


# --- likelihoods ---

def gev_negloglik(theta, y: np.ndarray) -> float:
    mu, sigma, xi = theta
    if sigma <= 0:
        return math.inf
    z = (y - mu) / sigma
    if abs(xi) < GUMBEL_SWITCH:
        return float(y.size * math.log(sigma) + np.sum(z) + np.sum(np.exp(-z)))
    t = 1 + xi * z
    if np.any(t <= 0):
        return math.inf
    log_t = np.log(t)
    return float(y.size * math.log(sigma) + (1 + 1 / xi) * np.sum(log_t) + np.sum(np.exp(-log_t / xi)))


def gpd_negloglik(theta, y: np.ndarray) -> float:
    sigma, xi = theta
    if sigma <= 0:
        return math.inf
    if abs(xi) < GUMBEL_SWITCH:
        return float(y.size * math.log(sigma) + np.sum(y) / sigma)
    t = 1 + xi * y / sigma
    if np.any(t <= 0):
        return math.inf
    return float(y.size * math.log(sigma) + (1 + 1 / xi) * np.sum(np.log(t)))


# --- starting values ---

def gev_pwm_start(y: np.ndarray) -> tuple[float, float, float]:
    """Hosking's probability-weighted-moment estimate of (mu, sigma, xi)."""
    x = np.sort(y)
    n = x.size
    i = np.arange(1, n + 1)
    b0 = x.mean()
    b1 = np.sum((i - 1) / (n - 1) * x) / n
    b2 = np.sum((i - 1) * (i - 2) / ((n - 1) * (n - 2)) * x) / n
    denom = 3 * b2 - b0
    if denom == 0 or (2 * b1 - b0) <= 0:
        sigma = max(float(np.std(x, ddof=1)) * math.sqrt(6) / math.pi, 1e-6)
        return b0 - 0.5772156649 * sigma, sigma, 0.0
    c = (2 * b1 - b0) / denom - math.log(2) / math.log(3)
    k = float(np.clip(7.8590 * c + 2.9554 * c * c, -0.95, 4.5))
    if abs(k) < 1e-6:
        sigma = (2 * b1 - b0) / math.log(2)
        return b0 - 0.5772156649 * sigma, sigma, 0.0
    g = special.gamma(1 + k)
    sigma = (2 * b1 - b0) * k / (g * (1 - 2.0 ** (-k)))
    mu = b0 + sigma * (g - 1) / k
    return float(mu), float(max(sigma, 1e-6)), float(-k)


def gpd_moment_start(y: np.ndarray) -> tuple[float, float]:
    mean, var = float(np.mean(y)), float(np.var(y, ddof=1))
    ratio = mean * mean / var if var > 0 else 1.0
    xi = float(np.clip(0.5 * (1 - ratio), XI_BOX[0], 0.45))
    sigma = 0.5 * mean * (ratio + 1)
    return max(sigma, 1e-6), xi


def _mle(objective, starts, names, config: OptimizerConfig, what: str) -> EstimateResult:
    point, value, iterations, converged = minimize_multistart(objective, [np.asarray(s, float) for s in starts], config)
    if point is None or not math.isfinite(value):
        raise NonConvergenceError(f"{what} MLE: every start violates the support constraint")
    regime = classify_regime(point[-1])
    if regime != REGULAR:
        logger.debug(f"{what} MLE: xi_hat={point[-1]:.3f} is in the {regime} regime")
    return EstimateResult(point, value, 0, iterations, converged, names, "mle", regime)


def _check_size(y: np.ndarray, what: str) -> None:
    if y.size < MIN_FIT_SIZE:
        raise RangeError(f"{what} needs at least {MIN_FIT_SIZE} observations, got {y.size}")


def gev_mle(sample_values, config: OptimizerConfig | None = None) -> EstimateResult:
    """
    Maximum-likelihood GEV fit; loss_value holds the minimised negative
    log-likelihood and regime the classification of xi_hat.
    """
    y = as_sample(sample_values)
    _check_size(y, "gev_mle")
    config = config or OptimizerConfig()
    mu0, sigma0, xi0 = gev_pwm_start(y)
    # the PWM start can violate the support; shifted starts with xi pulled toward zero cover that case
    starts = [(mu0, sigma0, xi0), (mu0, sigma0, 0.1), (mu0, sigma0 * 1.5, -0.1), (mu0, sigma0, 0.0)]

    def objective(theta):
        if not XI_BOX[0] <= theta[2] <= XI_BOX[1]:
            return math.inf
        return gev_negloglik(theta, y)

    return _mle(objective, starts, ("mu", "sigma", "xi"), config, "GEV")


def gpd_mle(excess_values, config: OptimizerConfig | None = None) -> EstimateResult:
    y = as_sample(excess_values)
    _check_size(y, "gpd_mle")
    if np.any(y <= 0):
        raise DataError(f"excesses must be > 0; index {int(np.flatnonzero(y <= 0)[0])} is not",
                        index=int(np.flatnonzero(y <= 0)[0]))
    config = config or OptimizerConfig()
    sigma0, xi0 = gpd_moment_start(y)
    starts = [(sigma0, xi0), (float(np.mean(y)), 0.0), (float(np.max(y)), -0.5)]

    def objective(theta):
        if not XI_BOX[0] <= theta[1] <= XI_BOX[1]:
            return math.inf
        return gpd_negloglik(theta, y)

    return _mle(objective, starts, ("sigma_tilde", "xi"), config, "GPD")


def _nse_result(problem: EstimationProblem, seed: RngSeed) -> EstimateResult:
    result = fit(problem, seed)
    return EstimateResult(result.theta_hat, result.loss_value, result.reference_index, result.iterations,
                          result.converged, result.param_names, "nse", classify_regime(result.theta_hat[-1]))


def gev_nse(sample_values, seed: RngSeed, lam: IndexSet = IndexSet(), n_reference: int = 10,
            config: OptimizerConfig | None = None) -> EstimateResult:
    y = as_sample(sample_values)
    _check_size(y, "gev_nse")
    start = DistributionSpec(Family.GEV, gev_pwm_start(y))
    problem = EstimationProblem(start, y, lam, config or OptimizerConfig(), n_reference,
                                default_bounds(Family.GEV, y))
    return _nse_result(problem, seed)


def gpd_nse(excess_values, seed: RngSeed, lam: IndexSet = IndexSet(), n_reference: int = 10,
            config: OptimizerConfig | None = None) -> EstimateResult:
    y = as_sample(excess_values)
    _check_size(y, "gpd_nse")
    if np.any(y <= 0):
        raise DataError("excesses must be > 0", index=int(np.flatnonzero(y <= 0)[0]))
    start = DistributionSpec(Family.GPD, gpd_moment_start(y))
    problem = EstimationProblem(start, y, lam, config or OptimizerConfig(), n_reference,
                                default_bounds(Family.GPD, y))
    return _nse_result(problem, seed)


# reference parents of the block-maxima and threshold experiments, with their limiting xi
PARENTS: dict[str, tuple[DistributionSpec, float]] = {
    "normal": (DistributionSpec.of("normal", mean=0, sd=1), 0.0),
    "exponential": (DistributionSpec.of("exponential", rate=1), 0.0),
    "frechet": (DistributionSpec.template("unit_frechet"), 1.0),
    "uniform": (DistributionSpec.of("uniform", low=0, high=1), -1.0),
}
