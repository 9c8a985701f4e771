"""
Parametric families used throughout the toolkit: CDFs, survival functions,
quantiles, seeded samplers and the exponential-scale transform
y -> -log(1 - F(y, theta)) that every NSE loss is built on.

A family is described by a `DistributionSpec`, an immutable (family, params)
pair with a text form such as ``gev(mu=0,sigma=1,xi=-0.5)``.
"""
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
import numpy.typing as npt
from loguru import logger
from scipy import integrate, optimize, special, stats

from nse.errors import DataError, NumericFailureError, ParameterDomainError, SupportError
from nse.rng import RngSeed

Sample = npt.NDArray[np.float64]

CDF_CLIP = 1e-12
GUMBEL_SWITCH = 1e-9
STABLE_CDF_TOL = 1e-8
XI_BOX = (-5.0, 5.0)


class Family(str, Enum):
    UNIT_EXPONENTIAL = "unit_exponential"
    EXPONENTIAL = "exponential"
    UNIT_FRECHET = "unit_frechet"
    NORMAL = "normal"
    STUDENT_T = "student_t"
    GEV = "gev"
    GPD = "gpd"
    POSITIVE_STABLE = "positive_stable"
    UNIFORM = "uniform"


PARAM_NAMES: dict[Family, tuple[str, ...]] = {
    Family.UNIT_EXPONENTIAL: (),
    Family.EXPONENTIAL: ("rate",),
    Family.UNIT_FRECHET: (),
    Family.NORMAL: ("mean", "sd"),
    Family.STUDENT_T: ("df", "location", "scale"),
    Family.GEV: ("mu", "sigma", "xi"),
    Family.GPD: ("sigma_tilde", "xi"),
    Family.POSITIVE_STABLE: ("alpha", "location", "scale"),
    Family.UNIFORM: ("low", "high"),
}

DEFAULT_PARAMS: dict[Family, tuple[float, ...]] = {
    Family.UNIT_EXPONENTIAL: (),
    Family.EXPONENTIAL: (1.0,),
    Family.UNIT_FRECHET: (),
    Family.NORMAL: (0.0, 1.0),
    Family.STUDENT_T: (5.0, 0.0, 1.0),
    Family.GEV: (0.0, 1.0, 0.0),
    Family.GPD: (1.0, 0.0),
    Family.POSITIVE_STABLE: (0.5, 0.0, 1.0),
    Family.UNIFORM: (0.0, 1.0),
}

# location parameter absorbed by a regression intercept
LOCATION_PARAM: dict[Family, str] = {
    Family.NORMAL: "mean",
    Family.STUDENT_T: "location",
}

_ALIASES = {
    "exp": Family.EXPONENTIAL,
    "exp1": Family.UNIT_EXPONENTIAL,
    "frechet": Family.UNIT_FRECHET,
    "t": Family.STUDENT_T,
    "stable": Family.POSITIVE_STABLE,
}

_SPEC_PATTERN = re.compile(r"^\s*([a-z_0-9]+)\s*(?:\((.*)\))?\s*$")


def _resolve_family(name: str | Family) -> Family:
    if isinstance(name, Family):
        return name
    key = name.strip().lower()
    if key in _ALIASES:
        return _ALIASES[key]
    try:
        return Family(key)
    except ValueError:
        valid = ", ".join(f.value for f in Family)
        raise ParameterDomainError(f"Unknown family '{name}'. Valid families: {valid}") from None


@dataclass(frozen=True)
class DistributionSpec:
    family: Family
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "family", _resolve_family(self.family))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        _validate(self.family, self.params)

    # --- construction ---

    @classmethod
    def template(cls, family: str | Family) -> "DistributionSpec":
        fam = _resolve_family(family)
        return cls(fam, DEFAULT_PARAMS[fam])

    @classmethod
    def of(cls, family: str | Family, **params: float) -> "DistributionSpec":
        fam = _resolve_family(family)
        names = PARAM_NAMES[fam]
        unknown = set(params) - set(names)
        if unknown:
            raise ParameterDomainError(f"{fam.value} has no parameter(s) {sorted(unknown)}; expected {names}")
        defaults = dict(zip(names, DEFAULT_PARAMS[fam]))
        defaults.update(params)
        return cls(fam, tuple(defaults[name] for name in names))

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        """Parses ``family(p1=...,p2=...)``; omitted parameters take family defaults."""
        match = _SPEC_PATTERN.match(text or "")
        if not match:
            raise ParameterDomainError(f"Cannot parse distribution spec '{text}'")
        name, body = match.group(1), match.group(2)
        params: dict[str, float] = {}
        if body and body.strip():
            for item in body.split(","):
                if "=" not in item:
                    raise ParameterDomainError(f"Expected key=value in '{text}', got '{item.strip()}'")
                key, value = (part.strip() for part in item.split("=", 1))
                try:
                    params[key] = float(value)
                except ValueError:
                    raise ParameterDomainError(f"Parameter {key} in '{text}' is not a number: '{value}'") from None
        return cls.of(name, **params)

    def with_params(self, theta: Sequence[float]) -> "DistributionSpec":
        return DistributionSpec(self.family, tuple(theta))

    # --- views ---

    @property
    def param_names(self) -> tuple[str, ...]:
        return PARAM_NAMES[self.family]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.param_names, self.params))

    def param(self, name: str) -> float:
        return self.as_dict()[name]

    def __str__(self) -> str:
        if not self.params:
            return self.family.value
        body = ",".join(f"{k}={format(v, '.12g')}" for k, v in self.as_dict().items())
        return f"{self.family.value}({body})"


def _validate(family: Family, params: tuple[float, ...]) -> None:
    names = PARAM_NAMES[family]
    if len(params) != len(names):
        raise ParameterDomainError(f"{family.value} expects {len(names)} parameter(s) {names}, got {len(params)}")
    if not all(math.isfinite(p) for p in params):
        raise ParameterDomainError(f"{family.value} parameters must be finite, got {params}")
    values = dict(zip(names, params))
    for positive in ("rate", "sd", "df", "scale", "sigma", "sigma_tilde"):
        if positive in values and values[positive] <= 0:
            raise ParameterDomainError(f"{family.value}: {positive} must be > 0, got {values[positive]}")
    if family is Family.POSITIVE_STABLE and not 0 < values["alpha"] < 1:
        raise ParameterDomainError(f"positive_stable: alpha must lie in (0,1), got {values['alpha']}")
    if family is Family.UNIFORM and not values["low"] < values["high"]:
        raise ParameterDomainError(f"uniform: low must be < high, got {values['low']}, {values['high']}")


def as_sample(values, minimum: int = 1) -> Sample:
    """Validated float vector of length >= `minimum` with finite entries."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size < minimum:
        raise DataError(f"Sample needs at least {minimum} value(s), got {arr.size}")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise DataError(f"Non-finite value at index {bad[0]}: {arr[bad[0]]}", index=int(bad[0]))
    return arr


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


# --- positive stable ---

def _kanter_log_kernel(alpha: float, phi):
    """log A(phi) for the Kanter kernel A(phi) = [sin(a phi)^a sin((1-a) phi) ^ (1-a) / sin phi]^(1/(1-a))."""
    return (alpha * np.log(np.sin(alpha * phi)) + (1 - alpha) * np.log(np.sin((1 - alpha) * phi))
            - np.log(np.sin(phi))) / (1 - alpha)


def positive_stable_cdf(alpha: float, z, method: str = "kanter", tol: float = STABLE_CDF_TOL):
    """
    CDF of the standard positive alpha-stable law, E exp(-lam Z) = exp(-lam^alpha).

    `kanter` integrates the rotated inversion integral
    F(z) = (1/pi) int_0^pi exp(-A(phi) z^(-alpha/(1-alpha))) dphi over a whole vector at once.
    `gil_pelaez` integrates the oscillatory inversion of the characteristic
    function exp(-(-it)^alpha) point by point.
    """
    if not 0 < alpha < 1:
        raise ParameterDomainError(f"alpha must lie in (0,1), got {alpha}")
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.zeros_like(z_arr)
    positive = z_arr > 0
    if positive.any():
        if method == "kanter":
            out[positive] = _stable_cdf_kanter(alpha, z_arr[positive], tol)
        elif method == "gil_pelaez":
            out[positive] = [_stable_cdf_gil_pelaez(alpha, float(v), tol) for v in z_arr[positive]]
        else:
            raise ParameterDomainError(f"Unknown positive-stable CDF method '{method}'")
    out = np.clip(out, 0.0, 1.0)
    return _scalar_or_array(z, out if np.ndim(z) else out[0])


def _stable_cdf_kanter(alpha: float, z: np.ndarray, tol: float) -> np.ndarray:
    log_w = -alpha / (1 - alpha) * np.log(z)

    def integrand(phi):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            val = np.exp(-np.exp(_kanter_log_kernel(alpha, phi) + log_w))
        return np.nan_to_num(val, nan=0.0)

    res, err, info = integrate.quad_vec(integrand, 0.0, math.pi, epsabs=tol * math.pi / 10, epsrel=0.0,
                                        norm="max", full_output=True)
    achieved = float(err) / math.pi
    if not info.success or achieved > tol:
        raise NumericFailureError(f"positive-stable CDF quadrature reached {achieved:.3g} > {tol:g}", achieved=achieved)
    return res / math.pi


def _stable_cdf_gil_pelaez(alpha: float, x: float, tol: float) -> float:
    c, s = math.cos(math.pi * alpha / 2), math.sin(math.pi * alpha / 2)
    v_max = 40.0 / c

    def integrand(v):
        if v == 0.0:
            return -s if alpha < 1 else 0.0
        return math.exp(-c * v) * math.sin(x * v ** (1 / alpha) - s * v) / v

    # split where the phase x v^(1/alpha) advances by 16 pi
    span = x * v_max ** (1 / alpha)
    pieces = max(1, int(math.ceil(span / (16 * math.pi))))
    if pieces > 20000:
        raise NumericFailureError(f"Gil-Pelaez inversion at x={x} needs {pieces} panels", achieved=float("inf"))
    breaks = (np.linspace(0.0, span, pieces + 1) / x) ** alpha
    total, err_total = 0.0, 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        val, err = integrate.quad(integrand, lo, hi, epsabs=tol / (10 * pieces), epsrel=0.0, limit=200)
        total += val
        err_total += err
    achieved = err_total / (alpha * math.pi)
    if achieved > tol:
        raise NumericFailureError(f"Gil-Pelaez inversion at x={x} reached {achieved:.3g}", achieved=achieved)
    return 0.5 + total / (alpha * math.pi)


def _stable_quantile(alpha: float, p: float) -> float:
    def f(z):
        return positive_stable_cdf(alpha, z) - p

    lo, hi = 1.0, 1.0
    while f(lo) > 0:
        lo /= 2
        if lo < 1e-300:
            raise NumericFailureError(f"Cannot bracket positive-stable quantile at p={p}", achieved=lo)
    while f(hi) < 0:
        hi *= 2
        if hi > 1e300:
            raise NumericFailureError(f"Cannot bracket positive-stable quantile at p={p}", achieved=hi)
    return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-11, maxiter=500)


def _kanter_draws(alpha: float, n: int, rng: np.random.Generator) -> np.ndarray:
    u = math.pi * rng.random(n)
    e = rng.standard_exponential(n)
    with np.errstate(divide="ignore", over="ignore"):
        log_a = _kanter_log_kernel(alpha, u)
        return np.exp((1 - alpha) / alpha * (log_a - np.log(e)))


# --- family dispatch ---

def _gev_core(spec: DistributionSpec, x: np.ndarray):
    """Returns (cdf, sf) for the GEV family."""
    mu, sigma, xi = spec.params
    z = (x - mu) / sigma
    if abs(xi) < GUMBEL_SWITCH:
        tail = np.exp(-z)
    else:
        t = 1 + xi * z
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            tail = np.where(t > 0, np.power(np.where(t > 0, t, 1.0), -1 / xi), np.inf if xi > 0 else 0.0)
    return np.exp(-tail), -np.expm1(-tail)


def _gpd_core(spec: DistributionSpec, x: np.ndarray):
    sigma, xi = spec.params
    y = np.maximum(x, 0.0) / sigma
    if abs(xi) < GUMBEL_SWITCH:
        log_sf = -y
    else:
        t = 1 + xi * y
        with np.errstate(divide="ignore", invalid="ignore"):
            log_sf = np.where(t > 0, -np.log1p(xi * y) / xi, -np.inf)
    log_sf = np.where(x < 0, 0.0, log_sf)
    return -np.expm1(log_sf), np.exp(log_sf)


def _cdf_sf(spec: DistributionSpec, x: np.ndarray):
    fam, p = spec.family, spec.params
    if fam in (Family.UNIT_EXPONENTIAL, Family.EXPONENTIAL):
        rate = p[0] if p else 1.0
        log_sf = -rate * np.maximum(x, 0.0)
        return -np.expm1(log_sf), np.exp(log_sf)
    if fam is Family.UNIT_FRECHET:
        with np.errstate(divide="ignore"):
            tail = np.where(x > 0, 1.0 / np.where(x > 0, x, 1.0), np.inf)
        return np.exp(-tail), -np.expm1(-tail)
    if fam is Family.NORMAL:
        z = (x - p[0]) / p[1]
        return special.ndtr(z), special.ndtr(-z)
    if fam is Family.STUDENT_T:
        z = (x - p[1]) / p[2]
        return stats.t.cdf(z, p[0]), stats.t.sf(z, p[0])
    if fam is Family.GEV:
        return _gev_core(spec, x)
    if fam is Family.GPD:
        return _gpd_core(spec, x)
    if fam is Family.UNIFORM:
        u = np.clip((x - p[0]) / (p[1] - p[0]), 0.0, 1.0)
        return u, 1.0 - u
    alpha, loc, scale = p
    f = np.atleast_1d(positive_stable_cdf(alpha, (x - loc) / scale))
    return f, 1.0 - f


def cdf(spec: DistributionSpec, x):
    arr = np.asarray(x, dtype=float)
    f, _ = _cdf_sf(spec, np.atleast_1d(arr))
    return _scalar_or_array(x, f if arr.ndim else f[0])


def survival(spec: DistributionSpec, x):
    arr = np.asarray(x, dtype=float)
    _, s = _cdf_sf(spec, np.atleast_1d(arr))
    return _scalar_or_array(x, s if arr.ndim else s[0])


def quantile(spec: DistributionSpec, p):
    p_arr = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(~((p_arr > 0) & (p_arr < 1))):
        raise ParameterDomainError(f"quantile needs p in (0,1), got {p}")
    fam, th = spec.family, spec.params
    if fam is Family.UNIT_EXPONENTIAL:
        q = -np.log1p(-p_arr)
    elif fam is Family.EXPONENTIAL:
        q = -np.log1p(-p_arr) / th[0]
    elif fam is Family.UNIT_FRECHET:
        q = -1.0 / np.log(p_arr)
    elif fam is Family.NORMAL:
        q = th[0] + th[1] * special.ndtri(p_arr)
    elif fam is Family.STUDENT_T:
        q = th[1] + th[2] * stats.t.ppf(p_arr, th[0])
    elif fam is Family.GEV:
        mu, sigma, xi = th
        log_w = np.log(-np.log(p_arr))
        q = mu - sigma * log_w if abs(xi) < GUMBEL_SWITCH else mu + sigma * np.expm1(-xi * log_w) / xi
    elif fam is Family.GPD:
        sigma, xi = th
        e = -np.log1p(-p_arr)
        q = sigma * e if abs(xi) < GUMBEL_SWITCH else sigma * np.expm1(xi * e) / xi
    elif fam is Family.UNIFORM:
        q = th[0] + p_arr * (th[1] - th[0])
    else:
        alpha, loc, scale = th
        q = loc + scale * np.array([_stable_quantile(alpha, float(v)) for v in p_arr])
    return _scalar_or_array(p, q if np.ndim(p) else q[0])


def sample(spec: DistributionSpec, n: int, seed: RngSeed) -> Sample:
    if n < 1:
        raise ParameterDomainError(f"sample size must be >= 1, got {n}")
    rng = seed.generator()
    fam, th = spec.family, spec.params
    if fam is Family.UNIT_EXPONENTIAL:
        return rng.standard_exponential(n)
    if fam is Family.EXPONENTIAL:
        return rng.standard_exponential(n) / th[0]
    if fam is Family.UNIT_FRECHET:
        return 1.0 / rng.standard_exponential(n)
    if fam is Family.NORMAL:
        return th[0] + th[1] * rng.standard_normal(n)
    if fam is Family.STUDENT_T:
        return th[1] + th[2] * rng.standard_t(th[0], n)
    if fam is Family.GEV:
        mu, sigma, xi = th
        log_e = np.log(rng.standard_exponential(n))
        return mu - sigma * log_e if abs(xi) < GUMBEL_SWITCH else mu + sigma * np.expm1(-xi * log_e) / xi
    if fam is Family.GPD:
        sigma, xi = th
        e = rng.standard_exponential(n)
        return sigma * e if abs(xi) < GUMBEL_SWITCH else sigma * np.expm1(xi * e) / xi
    if fam is Family.UNIFORM:
        return th[0] + (th[1] - th[0]) * rng.random(n)
    alpha, loc, scale = th
    return loc + scale * _kanter_draws(alpha, n, rng)


def support_violations(spec: DistributionSpec, y: np.ndarray) -> np.ndarray:
    """Boolean mask of points lying strictly outside the support of `spec`."""
    fam, th = spec.family, spec.params
    if fam in (Family.UNIT_EXPONENTIAL, Family.EXPONENTIAL, Family.UNIT_FRECHET):
        return y < 0
    if fam is Family.GEV:
        mu, sigma, xi = th
        if abs(xi) < GUMBEL_SWITCH:
            return np.zeros(y.shape, dtype=bool)
        return 1 + xi * (y - mu) / sigma <= 0
    if fam is Family.GPD:
        sigma, xi = th
        outside = y < 0
        if xi < 0:
            outside |= 1 + xi * y / sigma < 0
        return outside
    if fam is Family.POSITIVE_STABLE:
        return y < th[1]
    if fam is Family.UNIFORM:
        return (y < th[0]) | (y > th[1])
    return np.zeros(y.shape, dtype=bool)


def to_unit_exponential(spec: DistributionSpec, y):
    """
    G^{-1}(F(y, theta)) = -log(1 - F), with F clipped to [1e-12, 1 - 1e-12].

    Raises SupportError naming the first point outside the support.
    """
    arr = np.atleast_1d(np.asarray(y, dtype=float))
    bad = np.flatnonzero(support_violations(spec, arr))
    if bad.size:
        i = int(bad[0])
        raise SupportError(f"y[{i}]={arr[i]} lies outside the support of {spec}", index=i, value=float(arr[i]))
    _, s = _cdf_sf(spec, arr)
    z = -np.log(np.clip(s, CDF_CLIP, 1.0 - CDF_CLIP))
    return _scalar_or_array(y, z if np.ndim(y) else z[0])


def stable_laplace_residual(alpha: float, lam: float, n: int, seed: RngSeed) -> float:
    """Sample mean of exp(-lam Z) minus exp(-lam^alpha) for Z drawn by the Kanter sampler."""
    if lam <= 0:
        raise ParameterDomainError(f"lambda must be > 0, got {lam}")
    z = sample(DistributionSpec(Family.POSITIVE_STABLE, (alpha, 0.0, 1.0)), n, seed)
    residual = float(np.mean(np.exp(-lam * z)) - math.exp(-lam**alpha))
    logger.debug(f"stable_laplace_residual alpha={alpha} lambda={lam} n={n}: {residual:.3g}")
    return residual


# --- optimizer support ---

def initial_guess(family: str | Family, data) -> tuple[float, ...]:
    """Moment-style starting point for fitting `family` to `data`."""
    fam = _resolve_family(family)
    y = np.asarray(data, dtype=float)
    mean, sd = float(np.mean(y)), float(np.std(y, ddof=1)) if y.size > 1 else 1.0
    sd = sd if sd > 0 else 1.0
    lo, hi = float(np.min(y)), float(np.max(y))
    spread = max(hi - lo, sd)
    if fam is Family.EXPONENTIAL:
        return (1.0 / mean if mean > 0 else 1.0,)
    if fam is Family.NORMAL:
        return (mean, sd)
    if fam is Family.STUDENT_T:
        q1, q3 = np.quantile(y, [0.25, 0.75])
        return (5.0, float(np.median(y)), max(float(q3 - q1) / 1.5, 1e-6 * spread))
    if fam is Family.GEV:
        sigma = sd * math.sqrt(6) / math.pi
        return (mean - 0.5772156649 * sigma, sigma, 0.1)
    if fam is Family.GPD:
        ratio = mean**2 / sd**2 if sd > 0 else 1.0
        xi = float(np.clip(0.5 * (1 - ratio), -0.9, 0.45))
        return (max(mean * (1 - xi), 1e-6), xi)
    if fam is Family.POSITIVE_STABLE:
        loc = lo - 0.1 * spread
        # median of the standard alpha=1/2 law is about 1.099
        return (0.5, loc, max(float(np.median(y)) - loc, 1e-6) / 1.099)
    if fam is Family.UNIFORM:
        pad = spread / max(y.size, 1)
        return (lo - pad, hi + pad)
    return ()


def default_bounds(family: str | Family, data) -> tuple[tuple[float, float], ...]:
    """Box constraints for the optimizer, consistent with the family's parameter domain."""
    fam = _resolve_family(family)
    y = np.asarray(data, dtype=float)
    sd = float(np.std(y, ddof=1)) if y.size > 1 else 1.0
    lo, hi = float(np.min(y)), float(np.max(y))
    spread = max(hi - lo, sd, 1e-12)
    tiny = 1e-6 * max(sd, 1e-12)
    if fam is Family.EXPONENTIAL:
        mean = max(float(np.mean(y)), 1e-12)
        return ((1e-6 / mean, 1e3 / mean),)
    if fam is Family.NORMAL:
        return ((lo - spread, hi + spread), (tiny, 10 * spread))
    if fam is Family.STUDENT_T:
        return ((0.5, 200.0), (lo - spread, hi + spread), (tiny, 10 * spread))
    if fam is Family.GEV:
        return ((lo - 5 * spread, hi + 5 * spread), (tiny, 20 * spread), XI_BOX)
    if fam is Family.GPD:
        return ((tiny, 100 * max(hi, spread)), XI_BOX)
    if fam is Family.POSITIVE_STABLE:
        return ((0.01, 0.99), (lo - 10 * spread, lo), (tiny, 100 * spread))
    if fam is Family.UNIFORM:
        return ((lo - spread, lo), (hi, hi + spread))
    return ()
