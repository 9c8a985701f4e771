"""Order statistics, index sets and maximum ranked quotients (MRQ)."""
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from loguru import logger

from nse.distributions import DistributionSpec, Family, as_sample, sample
from nse.errors import DataError, EmptyIndexSetError, ParameterDomainError
from nse.rng import RngSeed

MIN_POSITIVE = 1e-300


@dataclass(frozen=True, eq=False)
class OrderedSample:
    """Ascending, strictly positive values. The array is stored read-only."""
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float).ravel()
        if arr.size == 0:
            raise DataError("OrderedSample cannot be empty")
        bad = np.flatnonzero(~np.isfinite(arr) | (arr < MIN_POSITIVE))
        if bad.size:
            i = int(bad[0])
            raise DataError(f"OrderedSample entry {i} = {arr[i]} is not a finite value >= {MIN_POSITIVE}", index=i)
        if np.any(np.diff(arr) < 0):
            raise DataError("OrderedSample values must be sorted ascending")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    def __mul__(self, c: float) -> "OrderedSample":
        if c <= 0:
            raise ParameterDomainError(f"scale factor must be > 0, got {c}")
        return OrderedSample(self.values * c)

    __rmul__ = __mul__


def order_stats(s) -> OrderedSample:
    arr = as_sample(s)
    bad = np.flatnonzero(arr <= 0)
    if bad.size:
        i = int(bad[0])
        raise DataError(f"Order statistics need positive entries; entry {i} is {arr[i]}", index=i)
    return OrderedSample(np.sort(arr, kind="stable"))


class IndexKind(str, Enum):
    FULL = "full"
    LEFT = "left"
    RIGHT = "right"
    MIDDLE = "mid"
    ADAPTIVE_MIDDLE = "mid:auto"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class IndexSet:
    """
    A rule selecting ranks (1-based) from {1..n}. Resolution to 0-based array
    positions happens once, in `resolve`.
    """
    kind: IndexKind = IndexKind.FULL
    count: int = 0
    alpha: float = 0.0
    beta: float = 0.0
    indices: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind in (IndexKind.LEFT, IndexKind.RIGHT) and self.count < 1:
            raise ParameterDomainError(f"{self.kind.value} index set needs a count >= 1, got {self.count}")
        if self.kind is IndexKind.MIDDLE and not 0 < self.alpha < self.beta < 1:
            raise ParameterDomainError(f"middle index set needs 0 < alpha < beta < 1, got ({self.alpha}, {self.beta})")
        if self.kind is IndexKind.EXPLICIT:
            if not self.indices or min(self.indices) < 1:
                raise ParameterDomainError(f"explicit index set needs 1-based ranks, got {self.indices}")
            object.__setattr__(self, "indices", tuple(sorted(set(int(i) for i in self.indices))))

    @classmethod
    def full(cls) -> "IndexSet":
        return cls(IndexKind.FULL)

    @classmethod
    def left(cls, ell: int) -> "IndexSet":
        return cls(IndexKind.LEFT, count=ell)

    @classmethod
    def right(cls, k: int) -> "IndexSet":
        return cls(IndexKind.RIGHT, count=k)

    @classmethod
    def middle(cls, alpha: float, beta: float) -> "IndexSet":
        return cls(IndexKind.MIDDLE, alpha=alpha, beta=beta)

    @classmethod
    def adaptive_middle(cls) -> "IndexSet":
        return cls(IndexKind.ADAPTIVE_MIDDLE)

    @classmethod
    def explicit(cls, ranks) -> "IndexSet":
        return cls(IndexKind.EXPLICIT, indices=tuple(ranks))

    @classmethod
    def parse(cls, text: str) -> "IndexSet":
        """`full`, `left:5`, `right:5`, `mid:0.1:0.9`, `mid:auto` or `explicit:1,2,7`."""
        parts = [p.strip() for p in (text or "").strip().lower().split(":")]
        try:
            head = parts[0]
            if head == "full" and len(parts) == 1:
                return cls.full()
            if head == "left" and len(parts) == 2:
                return cls.left(int(parts[1]))
            if head == "right" and len(parts) == 2:
                return cls.right(int(parts[1]))
            if head == "mid" and parts[1:] == ["auto"]:
                return cls.adaptive_middle()
            if head == "mid" and len(parts) == 3:
                return cls.middle(float(parts[1]), float(parts[2]))
            if head == "explicit" and len(parts) == 2:
                return cls.explicit(int(v) for v in parts[1].split(","))
        except (ValueError, IndexError):
            pass
        raise ParameterDomainError(
            f"Cannot parse index set '{text}'. Use full, left:L, right:K, mid:A:B, mid:auto or explicit:i,j,...")

    def __str__(self) -> str:
        if self.kind in (IndexKind.FULL, IndexKind.ADAPTIVE_MIDDLE):
            return self.kind.value
        if self.kind in (IndexKind.LEFT, IndexKind.RIGHT):
            return f"{self.kind.value}:{self.count}"
        if self.kind is IndexKind.MIDDLE:
            return f"mid:{self.alpha:g}:{self.beta:g}"
        return "explicit:" + ",".join(str(i) for i in self.indices)

    def resolve(self, n: int) -> np.ndarray:
        """0-based positions of the selected ranks within a length-n sample."""
        ranks = np.arange(1, n + 1)
        if self.kind is IndexKind.FULL:
            chosen = ranks
        elif self.kind in (IndexKind.LEFT, IndexKind.RIGHT):
            if self.count > n:
                raise EmptyIndexSetError(f"{self} needs at least {self.count} ranks, sample has {n}")
            chosen = ranks[: self.count] if self.kind is IndexKind.LEFT else ranks[n - self.count:]
        elif self.kind is IndexKind.EXPLICIT:
            if self.indices[-1] > n:
                raise EmptyIndexSetError(f"rank {self.indices[-1]} exceeds sample size {n}")
            chosen = np.asarray(self.indices)
        else:
            alpha, beta = (self.alpha, self.beta) if self.kind is IndexKind.MIDDLE else adaptive_band(n)
            chosen = ranks[(alpha * n < ranks) & (ranks < beta * n)]
        if chosen.size == 0:
            raise EmptyIndexSetError(f"index set {self} is empty for n={n}")
        return chosen - 1


def adaptive_band(n: int) -> tuple[float, float]:
    """(alpha_n, 1 - alpha_n) with alpha_n = sqrt(log n log log n / n)."""
    if n < 3:
        raise EmptyIndexSetError(f"adaptive middle band is undefined for n={n}")
    a = math.sqrt(math.log(n) * math.log(math.log(n)) / n)
    if a >= 0.5:
        raise EmptyIndexSetError(f"adaptive middle band is empty for n={n} (alpha_n={a:.3f})")
    return a, 1.0 - a


@dataclass(frozen=True)
class QuotientPair:
    q1: float
    q2: float

    @property
    def loss(self) -> float:
        return g_loss(self.q1, self.q2)


def _values(s) -> np.ndarray:
    return s.values if isinstance(s, OrderedSample) else OrderedSample(s).values


def mrq(x, y, lam: IndexSet = IndexSet()) -> QuotientPair:
    xv, yv = _values(x), _values(y)
    if xv.size != yv.size:
        raise ParameterDomainError(f"mrq needs equal lengths, got {xv.size} and {yv.size}")
    idx = lam.resolve(xv.size)
    xs, ys = xv[idx], yv[idx]
    return QuotientPair(float(np.max(xs / ys)), float(np.max(ys / xs)))


def thresholded_mrq(x, y, u: float, v: float) -> QuotientPair:
    """MRQ of clamp(x) against clamp(y) with clamp(z) = max(min(v, z), u)."""
    if not 0 < u < v:
        raise ParameterDomainError(f"thresholds need 0 < u < v, got u={u}, v={v}")
    xv, yv = _values(x), _values(y)
    if xv.size != yv.size:
        raise ParameterDomainError(f"thresholded_mrq needs equal lengths, got {xv.size} and {yv.size}")
    xs, ys = np.clip(xv, u, v), np.clip(yv, u, v)
    return QuotientPair(float(np.max(xs / ys)), float(np.max(ys / xs)))


def g_loss(a: float, b: float) -> float:
    if not (a > 0 and b > 0):
        raise ParameterDomainError(f"g_loss needs positive arguments, got ({a}, {b})")
    return max(a, b, 1.0 / a, 1.0 / b)


def max_relative_error(x, y, lam: IndexSet = IndexSet()) -> float:
    return mrq(x, y, lam).q1 - 1.0


# --- Monte Carlo laws of the MRQ ---

_EXPONENTIAL_FAMILIES = (Family.UNIT_EXPONENTIAL, Family.EXPONENTIAL)
_CHUNK_CELLS = 2_000_000


def _rate(spec: DistributionSpec) -> float:
    return spec.params[0] if spec.family is Family.EXPONENTIAL else 1.0


def _renyi_left(spec: DistributionSpec, n: int, ell: int, rows: int, seed: RngSeed) -> np.ndarray:
    """First `ell` order statistics of `rows` exponential samples of size n via normalized spacings."""
    spacings = seed.generator().standard_exponential((rows, ell))
    weights = 1.0 / (n - np.arange(ell))
    return np.cumsum(spacings * weights, axis=1) / _rate(spec)


def simulate_quotients(n: int, lam: IndexSet, reps: int, seed: RngSeed,
                       x_spec: DistributionSpec | None = None,
                       y_spec: DistributionSpec | None = None) -> tuple[np.ndarray, np.ndarray]:
    """
    Draws `reps` independent pairs of samples of size n and returns arrays of
    (q1, q2). Work is chunked; chunk c uses streams derive(c, 0) and derive(c, 1).
    """
    x_spec = x_spec or DistributionSpec.template(Family.UNIT_EXPONENTIAL)
    y_spec = y_spec or DistributionSpec.template(Family.UNIT_EXPONENTIAL)
    idx = lam.resolve(n)
    renyi = (lam.kind is IndexKind.LEFT
             and x_spec.family in _EXPONENTIAL_FAMILIES and y_spec.family in _EXPONENTIAL_FAMILIES)
    width = lam.count if renyi else n
    rows_per_chunk = max(1, _CHUNK_CELLS // width)
    q1, q2 = np.empty(reps), np.empty(reps)
    for c, start in enumerate(range(0, reps, rows_per_chunk)):
        rows = min(rows_per_chunk, reps - start)
        if renyi:
            xs = _renyi_left(x_spec, n, lam.count, rows, seed.derive(c, 0))
            ys = _renyi_left(y_spec, n, lam.count, rows, seed.derive(c, 1))
        else:
            xs = np.sort(sample(x_spec, rows * n, seed.derive(c, 0)).reshape(rows, n), axis=1)[:, idx]
            ys = np.sort(sample(y_spec, rows * n, seed.derive(c, 1)).reshape(rows, n), axis=1)[:, idx]
        q1[start:start + rows] = np.max(xs / ys, axis=1)
        q2[start:start + rows] = np.max(ys / xs, axis=1)
    logger.debug(f"simulate_quotients n={n} lam={lam} reps={reps}: {c + 1} chunk(s)")
    return q1, q2
