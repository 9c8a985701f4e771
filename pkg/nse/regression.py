"""
Linear regression y = mu + X beta + sigma eps fitted by ordinary least squares
and by NSE, where the residuals are taken to exponential scale under an error
family and matched against simulated unit-exponential order statistics.
"""
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger
from scipy import linalg

from nse.distributions import LOCATION_PARAM, DistributionSpec, Family, initial_guess, sample, to_unit_exponential
from nse.errors import DataError, NonConvergenceError, NSEError, ParameterDomainError, SingularDesignError
from nse.estimator import OptimizerConfig, minimize_multistart
from nse.rng import RngSeed

RANK_TOLERANCE = 1e-10
SIGMA_FLOOR = 1e-6
DEGENERATE_NOISE = 1e-10

POSITIVE_SUPPORT = (Family.UNIT_EXPONENTIAL, Family.EXPONENTIAL, Family.UNIT_FRECHET, Family.GPD)

SCALE_PARAM: dict[Family, str] = {
    Family.NORMAL: "sd",
    Family.STUDENT_T: "scale",
    Family.GEV: "sigma",
    Family.GPD: "sigma_tilde",
    Family.POSITIVE_STABLE: "scale",
    Family.EXPONENTIAL: "rate",
}


class RegressionMethod(str, Enum):
    OLS = "ols"
    NSE = "nse"


@dataclass(frozen=True, eq=False)
class RegressionData:
    design: np.ndarray
    response: np.ndarray
    intercept: bool = True
    names: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.design, dtype=float)
        x = x.reshape(-1, 1) if x.ndim == 1 else x
        y = np.asarray(self.response, dtype=float).ravel()
        if x.shape[0] != y.size:
            raise DataError(f"design has {x.shape[0]} rows but response has {y.size} values")
        n, p = x.shape
        if n <= p + 2:
            raise DataError(f"regression needs n > p + 2, got n={n}, p={p}")
        bad_rows = np.flatnonzero(~np.isfinite(x).all(axis=1) | ~np.isfinite(y))
        if bad_rows.size:
            raise DataError(f"non-finite value in row {bad_rows[0]}", index=int(bad_rows[0]))
        object.__setattr__(self, "design", x)
        object.__setattr__(self, "response", y)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{j + 1}" for j in range(p)))
        singular = linalg.svdvals(self.design_matrix())
        if singular[-1] <= RANK_TOLERANCE * singular[0]:
            raise SingularDesignError(f"design is rank deficient (smallest/largest singular value "
                                      f"{singular[-1] / singular[0]:.3g})")

    @property
    def n(self) -> int:
        return self.response.size

    @property
    def p(self) -> int:
        return self.design.shape[1]

    def design_matrix(self) -> np.ndarray:
        if self.intercept:
            return np.column_stack([np.ones(self.n), self.design])
        return self.design

    def residuals(self, mu: float, beta: np.ndarray) -> np.ndarray:
        return self.response - mu - self.design @ beta


@dataclass(frozen=True, eq=False)
class RegressionFit:
    mu_hat: float
    beta_hat: np.ndarray
    sigma_hat: float
    residuals: np.ndarray
    method: RegressionMethod
    loss_value: float | None = None
    error_family: DistributionSpec | None = None
    degenerate: bool = False
    run_losses: tuple[float, ...] = ()
    init_losses: tuple[float, ...] = ()

    def to_json(self) -> dict:
        return {
            "method": self.method.value,
            "mu_hat": self.mu_hat,
            "beta_hat": [float(b) for b in self.beta_hat],
            "sigma_hat": self.sigma_hat,
            "loss": self.loss_value,
            "error_family": str(self.error_family) if self.error_family else None,
            "degenerate": self.degenerate,
        }


def ols_fit(data: RegressionData) -> RegressionFit:
    """Least squares through an economic QR factorisation."""
    a = data.design_matrix()
    q, r = linalg.qr(a, mode="economic")
    coef = linalg.solve_triangular(r, q.T @ data.response)
    mu, beta = (float(coef[0]), coef[1:]) if data.intercept else (0.0, coef)
    residuals = data.residuals(mu, beta)
    dof = data.n - a.shape[1]
    sigma = math.sqrt(float(residuals @ residuals) / dof)
    return RegressionFit(mu, beta, sigma, residuals, RegressionMethod.OLS)


class _RegressionObjective:
    """NSE loss of the residuals for one reference sequence; +inf outside the box or the support."""

    def __init__(self, data: RegressionData, template: DistributionSpec, fixed: dict[str, float],
                 x_ref: np.ndarray, lows: np.ndarray, highs: np.ndarray):
        self.data = data
        self.template = template
        self.fixed = fixed
        self.x_ref = x_ref
        self.lows, self.highs = lows, highs
        self.n_coef = data.p + int(data.intercept)

    def split(self, theta: np.ndarray):
        coef, rest = theta[: self.n_coef], iter(theta[self.n_coef:])
        mu, beta = (coef[0], coef[1:]) if self.data.intercept else (0.0, coef)
        params = tuple(self.fixed[name] if name in self.fixed else float(next(rest))
                       for name in self.template.param_names)
        return mu, beta, params

    def __call__(self, theta: np.ndarray) -> float:
        if np.any(theta < self.lows) or np.any(theta > self.highs):
            return math.inf
        mu, beta, params = self.split(theta)
        try:
            spec = self.template.with_params(params)
            z = to_unit_exponential(spec, np.sort(self.data.residuals(mu, beta), kind="stable"))
        except NSEError:
            return math.inf
        ratio = self.x_ref / z
        return max(float(np.max(ratio)), float(1.0 / np.min(ratio)))


def _error_setup(data: RegressionData, ols: RegressionFit, template: DistributionSpec, fix_sigma: bool):
    """Fixed error parameters, free-parameter start and box for the error family."""
    family = template.family
    names = template.param_names
    fixed: dict[str, float] = {}
    if family in LOCATION_PARAM:
        fixed[LOCATION_PARAM[family]] = 0.0
    scale_name = SCALE_PARAM.get(family)
    sd_y = float(np.std(data.response, ddof=1))
    floor = SIGMA_FLOOR * sd_y
    if fix_sigma:
        if scale_name is None:
            raise ParameterDomainError(f"fix_sigma is not available for {family.value} errors")
        fixed[scale_name] = 1.0 / ols.sigma_hat if scale_name == "rate" else ols.sigma_hat
    guess = dict(zip(names, initial_guess(family, ols.residuals))) if names else {}
    if scale_name and scale_name not in fixed:
        guess[scale_name] = 1.0 / ols.sigma_hat if scale_name == "rate" else ols.sigma_hat
    spread = max(float(np.ptp(ols.residuals)), sd_y)
    box = {
        "sd": (floor, 10 * spread), "scale": (floor, 10 * spread), "sigma": (floor, 10 * spread),
        "sigma_tilde": (floor, 10 * spread), "rate": (1.0 / (10 * spread), 1.0 / floor),
        "df": (0.5, 200.0), "xi": (-5.0, 5.0), "alpha": (0.01, 0.99),
        "mu": (-10 * spread, 10 * spread), "location": (-10 * spread, 10 * spread),
        "low": (-10 * spread, 0.0), "high": (0.0, 10 * spread),
    }
    free = [name for name in names if name not in fixed]
    start = np.array([guess.get(name, 0.0) for name in free], dtype=float)
    lows = np.array([box[name][0] for name in free])
    highs = np.array([box[name][1] for name in free])
    return fixed, np.clip(start, lows, highs), lows, highs


def _sigma_of(template: DistributionSpec, params: tuple[float, ...], fallback: float) -> float:
    name = SCALE_PARAM.get(template.family)
    if name is None:
        return fallback
    value = dict(zip(template.param_names, params))[name]
    return 1.0 / value if name == "rate" else value


def nse_regression_fit(data: RegressionData, error_family: DistributionSpec, config: OptimizerConfig,
                       seed: RngSeed, n_reference: int = 10, repeats: int = 10,
                       fix_sigma: bool = False) -> RegressionFit:
    """
    Joint NSE fit of (mu, beta, error parameters), averaged over `repeats`
    independent runs. Run r uses reference streams seed.offset(r * n_reference + i).
    """
    if n_reference < 1 or repeats < 1:
        raise ParameterDomainError(f"n_reference and repeats must be >= 1, got {n_reference}, {repeats}")
    ols = ols_fit(data)
    sd_y = float(np.std(data.response, ddof=1))
    if sd_y == 0 or ols.sigma_hat <= DEGENERATE_NOISE * sd_y:
        logger.warning("nse_regression_fit: residuals are degenerate (zero noise); returning the OLS solution")
        return RegressionFit(ols.mu_hat, ols.beta_hat, ols.sigma_hat, ols.residuals, RegressionMethod.NSE,
                             float("nan"), error_family, degenerate=True)

    fixed, err_start, err_lows, err_highs = _error_setup(data, ols, error_family, fix_sigma)
    coef = np.concatenate([[ols.mu_hat], ols.beta_hat]) if data.intercept else ols.beta_hat.copy()
    if data.intercept and error_family.family in POSITIVE_SUPPORT:
        # residuals at the start must lie inside [0, inf)
        coef[0] += float(np.min(ols.residuals)) - 0.01 * ols.sigma_hat
    col_sd = np.std(data.design_matrix(), axis=0)
    col_scale = np.where(col_sd > 0, sd_y / np.where(col_sd > 0, col_sd, 1.0), sd_y)
    half_width = 10 * (np.abs(coef) + col_scale)
    start = np.concatenate([coef, err_start])
    lows = np.concatenate([coef - half_width, err_lows])
    highs = np.concatenate([coef + half_width, err_highs])
    perturb_scale = config.initial_scale * np.concatenate([np.abs(coef) + col_scale * 0.1, np.abs(err_start) + 1e-3])

    run_thetas, run_losses, init_losses = [], [], []
    template = error_family
    for r in range(repeats):
        best_theta, best_loss, best_init = None, math.inf, math.inf
        for i in range(n_reference):
            rng = seed.offset(r * n_reference + i).generator()
            x_ref = np.sort(rng.standard_exponential(data.n), kind="stable")
            objective = _RegressionObjective(data, template, fixed, x_ref, lows, highs)
            best_init = min(best_init, objective(start))
            starts = [start] + [np.clip(start + perturb_scale * rng.standard_normal(start.size), lows, highs)
                                for _ in range(config.restarts - 1)]
            point, value, _, _ = minimize_multistart(objective, starts, config)
            if point is not None and value < best_loss:
                best_theta, best_loss = point, value
        if best_theta is None:
            raise NonConvergenceError(f"NSE regression run {r} found no finite loss", best=ols)
        run_thetas.append(best_theta)
        run_losses.append(best_loss)
        init_losses.append(best_init)

    theta = np.mean(run_thetas, axis=0)
    unpack = _RegressionObjective(data, template, fixed, np.empty(0), lows, highs)
    mu, beta, params = unpack.split(theta)
    fitted_family = template.with_params(params)
    return RegressionFit(float(mu), np.asarray(beta, dtype=float), _sigma_of(template, params, ols.sigma_hat),
                         data.residuals(mu, beta), RegressionMethod.NSE, float(np.mean(run_losses)),
                         fitted_family, False, tuple(run_losses), tuple(init_losses))


# --- simulation designs ---

class ScenarioKind(str, Enum):
    STANDARD_LINEAR = "standard_linear"
    QUADRATIC = "quadratic"
    MISSING_COVARIATE = "missing_covariate"


ERROR_DISTRIBUTIONS: dict[str, DistributionSpec] = {
    "normal": DistributionSpec.of("normal", mean=0, sd=1),
    "exp1": DistributionSpec.of("exponential", rate=1),
    "t2": DistributionSpec.of("student_t", df=2, location=0, scale=1),
    "t4": DistributionSpec.of("student_t", df=4, location=0, scale=1),
    "t8": DistributionSpec.of("student_t", df=8, location=0, scale=1),
}

STANDARD_BETA = np.array([1.0, 3.0, 5.0, 3.0, 1.0])
STANDARD_SIGMA = 0.5
MISSPECIFIED_BETA = np.array([0.3, 0.5, 0.5, 0.3, 0.3])
MISSPECIFIED_BETA2 = 0.1
MISSPECIFIED_SIGMA = 0.3


def _correlated_pair(rng: np.random.Generator, n: int, rho: float) -> tuple[np.ndarray, np.ndarray]:
    x = rng.standard_normal(n)
    z = rho * x + math.sqrt(1 - rho**2) * rng.standard_normal(n)
    return x, z


def make_scenario(kind: str | ScenarioKind, n: int, seed: RngSeed, error: str = "normal"):
    """Simulated RegressionData plus a dict of the true parameters."""
    kind = ScenarioKind(kind)
    if n < 50:
        raise ParameterDomainError(f"scenarios need n >= 50, got {n}")
    rng = seed.generator()
    mu = 0.0
    if kind is ScenarioKind.STANDARD_LINEAR:
        if error not in ERROR_DISTRIBUTIONS:
            raise ParameterDomainError(f"unknown error distribution '{error}'; valid: {sorted(ERROR_DISTRIBUTIONS)}")
        x = rng.standard_normal((n, STANDARD_BETA.size))
        eps = sample(ERROR_DISTRIBUTIONS[error], n, seed.offset(1))
        y = mu + x @ STANDARD_BETA + STANDARD_SIGMA * eps
        truth = {"mu": mu, "beta": STANDARD_BETA.tolist(), "sigma": STANDARD_SIGMA, "error": error}
    elif kind is ScenarioKind.QUADRATIC:
        x1, z1 = _correlated_pair(rng, n, 0.6)
        x2, z2 = _correlated_pair(rng, n, 0.8)
        x = np.column_stack([x1, x2, rng.standard_exponential((n, 3))])
        eps = MISSPECIFIED_SIGMA * rng.standard_normal(n)
        y = x @ MISSPECIFIED_BETA + mu + MISSPECIFIED_BETA2 * (z1 + z2) ** 2 + eps
        truth = {"mu": mu, "beta": MISSPECIFIED_BETA.tolist(), "beta2": MISSPECIFIED_BETA2,
                 "sigma": MISSPECIFIED_SIGMA}
    else:
        x1, z1 = _correlated_pair(rng, n, 0.6)
        x = np.column_stack([x1, rng.standard_exponential((n, 4))])
        eps = MISSPECIFIED_SIGMA * rng.standard_normal(n)
        y = x @ MISSPECIFIED_BETA + mu - z1 * MISSPECIFIED_BETA2 + eps
        truth = {"mu": mu, "beta": MISSPECIFIED_BETA.tolist(), "beta2": MISSPECIFIED_BETA2,
                 "sigma": MISSPECIFIED_SIGMA}
    return RegressionData(x, y), truth


def load_regression_csv(path: str | Path, response: str, intercept: bool = True) -> RegressionData:
    """Header row required; `response` names the response column, other numeric columns are covariates."""
    frame = pd.read_csv(path)
    if response not in frame.columns:
        raise DataError(f"response column '{response}' not found in {path}; columns: {list(frame.columns)}")
    missing = frame.isna().any(axis=1).to_numpy().nonzero()[0]
    if missing.size:
        raise DataError(f"missing value in row {missing[0]} of {path}", index=int(missing[0]))
    covariates = frame.drop(columns=[response]).select_dtypes(include="number")
    return RegressionData(covariates.to_numpy(dtype=float), frame[response].to_numpy(dtype=float),
                          intercept, tuple(covariates.columns))
