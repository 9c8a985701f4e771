"""
NSE point estimation: minimise g(q1, q2) between the exponential-scale
transform of the ordered data and simulated ordered unit-exponential reference
sequences. Also provides the KS-distance baseline and Monte Carlo confidence
sets built from independent replicate fits.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt
from scipy import optimize

from nse.config import get_settings
from nse.distributions import (DistributionSpec, Family, as_sample, cdf, default_bounds, initial_guess, sample,
                               to_unit_exponential)
from nse.errors import NonConvergenceError, NSEError, ParameterDomainError, QualityError
from nse.ranked_quotients import IndexSet, OrderedSample, mrq
from nse.rng import RngSeed

MAX_DROPPED_FRACTION = 0.10


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    restarts: PositiveInt = 5
    max_iterations: PositiveInt = 2000
    simplex_tolerance: PositiveFloat = 1e-8
    initial_scale: PositiveFloat = 0.1


@dataclass(frozen=True, eq=False)
class EstimationProblem:
    """
    What to fit: a family template (its params double as the first starting
    point), the data, the index set and the optimizer settings.

    `fixed` pins parameters by name; only the remaining ones are optimised.
    """
    family: DistributionSpec
    data: np.ndarray
    lam: IndexSet = IndexSet()
    optimizer: OptimizerConfig = OptimizerConfig()
    n_reference: int = 10
    theta_bounds: tuple[tuple[float, float], ...] | None = None
    fixed: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        data = as_sample(self.data, minimum=2)
        object.__setattr__(self, "data", data)
        if self.n_reference < 1:
            raise ParameterDomainError(f"n_reference must be >= 1, got {self.n_reference}")
        names = self.family.param_names
        unknown = set(self.fixed) - set(names)
        if unknown:
            raise ParameterDomainError(f"cannot fix unknown parameter(s) {sorted(unknown)} of {self.family.family.value}")
        bounds = self.theta_bounds or default_bounds(self.family.family, data)
        if len(bounds) != len(names) or any(not lo < hi for lo, hi in bounds):
            raise ParameterDomainError(f"theta_bounds {bounds} inconsistent with parameters {names}")
        object.__setattr__(self, "theta_bounds", tuple((float(lo), float(hi)) for lo, hi in bounds))

    @classmethod
    def for_family(cls, family: str | DistributionSpec, data, **kwargs) -> "EstimationProblem":
        """Problem whose starting point is the moment-style guess for `family`."""
        spec = family if isinstance(family, DistributionSpec) else DistributionSpec.template(family)
        data = as_sample(data, minimum=2)
        if spec.params:
            guess = initial_guess(spec.family, data)
            try:
                spec = spec.with_params(guess)
            except ParameterDomainError:
                logger.debug(f"initial guess {guess} invalid for {spec.family.value}; keeping template")
        return cls(spec, data, **kwargs)

    @property
    def free_names(self) -> tuple[str, ...]:
        return tuple(name for name in self.family.param_names if name not in self.fixed)

    def embed(self, free: Sequence[float]) -> tuple[float, ...]:
        values = iter(free)
        return tuple(self.fixed[name] if name in self.fixed else float(next(values))
                     for name in self.family.param_names)

    def free_start(self) -> np.ndarray:
        start = self.family.as_dict()
        lows, highs = self.free_bounds()
        point = np.array([start[name] for name in self.free_names], dtype=float)
        return np.clip(point, lows, highs)

    def free_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        pairs = [b for name, b in zip(self.family.param_names, self.theta_bounds) if name not in self.fixed]
        return np.array([lo for lo, _ in pairs]), np.array([hi for _, hi in pairs])


@dataclass(frozen=True, eq=False)
class EstimateResult:
    theta_hat: np.ndarray
    loss_value: float
    reference_index: int
    iterations: int
    converged: bool
    param_names: tuple[str, ...] = ()
    method: str = "nse"
    regime: str | None = None

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.param_names, self.theta_hat)}

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "theta_hat": self.as_dict(),
            "loss": self.loss_value,
            "reference_index": self.reference_index,
            "iterations": self.iterations,
            "converged": self.converged,
            "regime": self.regime,
        }


@dataclass(frozen=True, eq=False)
class ConfidenceSet:
    intervals: np.ndarray
    m: int
    alpha: float
    replicate_estimates: np.ndarray
    param_names: tuple[str, ...] = ()
    ranks: tuple[int, int] = (0, 0)
    dropped: int = 0

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "m": self.m,
            "ranks": list(self.ranks),
            "dropped": self.dropped,
            "intervals": {name: [float(lo), float(hi)] for name, (lo, hi) in zip(self.param_names, self.intervals)},
        }


def nse_loss(theta: Sequence[float], data_ordered, x_ref, lam: IndexSet, family: DistributionSpec) -> float:
    """
    g(max X_(k)/G^-1 F(Y_(k)), max G^-1 F(Y_(k))/X_(k)) over k in lam.

    `family` supplies the family tag; `theta` its parameters.
    """
    spec = family.with_params(theta)
    data = np.asarray(data_ordered.values if isinstance(data_ordered, OrderedSample) else data_ordered, dtype=float)
    transformed = OrderedSample(np.maximum.accumulate(np.atleast_1d(to_unit_exponential(spec, data))))
    return mrq(x_ref, transformed, lam).loss


class _Objective:
    """nse_loss restricted to the ranks in lam, with out-of-domain points mapped to +inf."""

    def __init__(self, problem: EstimationProblem, x_ref: np.ndarray):
        idx = problem.lam.resolve(problem.data.size)
        self.problem = problem
        self.data = np.sort(problem.data, kind="stable")[idx]
        self.x_ref = x_ref[idx]
        self.lows, self.highs = problem.free_bounds()

    def __call__(self, free: np.ndarray) -> float:
        if np.any(free < self.lows) or np.any(free > self.highs):
            return math.inf
        try:
            spec = self.problem.family.with_params(self.problem.embed(free))
            z = to_unit_exponential(spec, self.data)
        except NSEError:
            return math.inf
        ratio = self.x_ref / z
        return max(float(np.max(ratio)), float(1.0 / np.min(ratio)))


def reference_sequence(n: int, seed: RngSeed) -> np.ndarray:
    """An ordered unit-exponential sample of size n."""
    return np.sort(sample(DistributionSpec.template(Family.UNIT_EXPONENTIAL), n, seed), kind="stable")


def _starting_points(problem: EstimationProblem, config: OptimizerConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """The template point, then uniform draws from the box."""
    lows, highs = problem.free_bounds()
    points = [problem.free_start()]
    for _ in range(config.restarts - 1):
        points.append(lows + (highs - lows) * rng.random(lows.size))
    return points


def _initial_simplex(start: np.ndarray, config: OptimizerConfig) -> np.ndarray:
    steps = config.initial_scale * np.where(np.abs(start) > 1e-8, np.abs(start), 1.0)
    return np.vstack([start] + [start + np.eye(start.size)[i] * steps[i] for i in range(start.size)])


def minimize_multistart(objective: Callable[[np.ndarray], float], starts: Sequence[np.ndarray],
                        config: OptimizerConfig) -> tuple[np.ndarray, float, int, bool]:
    """Nelder-Mead from each start; returns (best point, best value, iterations, converged)."""
    best_x, best_f, best_it, best_ok = None, math.inf, 0, False
    for start in starts:
        if not math.isfinite(objective(start)):
            continue
        res = optimize.minimize(objective, start, method="Nelder-Mead",
                                options={"maxiter": config.max_iterations,
                                         "xatol": config.simplex_tolerance,
                                         "fatol": config.simplex_tolerance,
                                         "initial_simplex": _initial_simplex(start, config)})
        if res.fun < best_f:
            best_x, best_f, best_it, best_ok = np.asarray(res.x, dtype=float), float(res.fun), int(res.nit), bool(res.success)
    return best_x, best_f, best_it, best_ok


def fit(problem: EstimationProblem, seed: RngSeed) -> EstimateResult:
    """
    Minimum-loss estimate across `n_reference` simulated sequences and the
    multi-start search on each. Reference r uses stream seed.offset(r).
    """
    n = problem.data.size
    names = problem.family.param_names
    best: EstimateResult | None = None
    for r in range(problem.n_reference):
        stream = seed.offset(r)
        rng = stream.generator()
        x_ref = np.sort(rng.standard_exponential(n), kind="stable")
        objective = _Objective(problem, x_ref)
        if not problem.free_names:
            value = objective(np.empty(0))
            point, iterations, converged = np.empty(0), 0, math.isfinite(value)
        else:
            point, value, iterations, converged = minimize_multistart(
                objective, _starting_points(problem, problem.optimizer, rng), problem.optimizer)
        if point is None or not math.isfinite(value):
            logger.debug(f"fit: reference {r} produced no finite loss")
            continue
        if best is None or value < best.loss_value:
            best = EstimateResult(np.array(problem.embed(point)), value, r, iterations, converged, names, "nse")
    if best is None:
        raise NonConvergenceError(f"no finite NSE loss for {problem.family.family.value} over "
                                  f"{problem.n_reference} reference(s)", best=None)
    return best


def ks_objective(problem: EstimationProblem, theta: Sequence[float]) -> float:
    """max_i |i/n - F(x_(i), theta)| over the ordered data."""
    spec = problem.family.with_params(theta)
    ordered = np.sort(problem.data, kind="stable")
    ecdf = np.searchsorted(ordered, ordered, side="right") / ordered.size
    return float(np.max(np.abs(ecdf - np.asarray(cdf(spec, ordered)))))


def ks_fit(problem: EstimationProblem) -> EstimateResult:
    lows, highs = problem.free_bounds()

    def objective(free: np.ndarray) -> float:
        if np.any(free < lows) or np.any(free > highs):
            return math.inf
        try:
            return ks_objective(problem, problem.embed(free))
        except NSEError:
            return math.inf

    names = problem.family.param_names
    if not problem.free_names:
        return EstimateResult(np.array(problem.embed([])), objective(np.empty(0)), 0, 0, True, names, "ks")
    # restarts for the KS baseline are drawn from a fixed stream
    rng = RngSeed(0).generator()
    point, value, iterations, converged = minimize_multistart(
        objective, _starting_points(problem, problem.optimizer, rng), problem.optimizer)
    if point is None:
        raise NonConvergenceError(f"KS fit found no feasible start for {problem.family.family.value}")
    return EstimateResult(np.array(problem.embed(point)), value, 0, iterations, converged, names, "ks")


def percentile_ranks(m: int, alpha: float) -> tuple[int, int]:
    """1-based ranks ceil(alpha m / 2) and floor((1 - alpha/2) m), kept inside [1, m]."""
    lo = max(1, math.ceil(alpha * m / 2 - 1e-12))
    hi = min(m, math.floor((1 - alpha / 2) * m + 1e-12))
    return lo, max(lo, hi)


def confidence_set(problem: EstimationProblem, m: int, alpha: float, seed: RngSeed,
                   workers: int | None = None) -> ConfidenceSet:
    """
    m replicate fits, replicate j against its own reference sequence on
    stream seed.derive(j); percentile intervals per component.

    Replicates that fail to converge are dropped, and the percentile ranks
    are then taken over len(kept), not over the requested m. The number
    dropped is reported on the result; more than MAX_DROPPED_FRACTION of m
    raises QualityError.
    """
    if m < 20:
        raise ParameterDomainError(f"confidence_set needs m >= 20, got {m}")
    if not 0 < alpha < 1:
        raise ParameterDomainError(f"alpha must lie in (0,1), got {alpha}")
    single = replace(problem, n_reference=1)

    def replicate(j: int) -> np.ndarray | None:
        try:
            return fit(single, seed.derive(j)).theta_hat
        except NonConvergenceError:
            return None

    with ThreadPoolExecutor(max_workers=workers or get_settings().workers) as executor:
        results = list(executor.map(replicate, range(m)))
    kept = [theta for theta in results if theta is not None]
    dropped = m - len(kept)
    if dropped:
        logger.warning(f"confidence_set: dropped {dropped} of {m} replicate fits")
    if dropped > MAX_DROPPED_FRACTION * m:
        raise QualityError(f"{dropped} of {m} replicate fits failed (limit {MAX_DROPPED_FRACTION:.0%})", dropped, m)
    estimates = np.vstack(kept)
    lo_rank, hi_rank = percentile_ranks(len(kept), alpha)
    ordered = np.sort(estimates, axis=0)
    intervals = np.column_stack([ordered[lo_rank - 1], ordered[hi_rank - 1]])
    return ConfidenceSet(intervals, m, alpha, estimates, problem.family.param_names, (lo_rank, hi_rank), dropped)
