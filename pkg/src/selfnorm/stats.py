"""Self-normalized statistics and the winsorized/trimmed/Huber family.

Every statistic has a row kernel (``*_rows``) that works along the last axis
of an array and returns NaN where the normalizer vanishes, which is what the
Monte Carlo engine consumes, and a scalar wrapper that validates its input
and raises a typed error instead.

Sums go through ``np.sum``, which uses pairwise summation on contiguous data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllTrimmed, DegenerateDenominator, InvalidSpec, InvalidThreshold

HUBER_TOL = 1e-10
HUBER_MAX_ITER = 200


def as_sample(values, min_len: int = 1) -> np.ndarray:
    """Validate a one-dimensional finite sample and return it as float64."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidSpec(f"sample must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_len:
        raise InvalidSpec(f"sample needs at least {min_len} value(s), got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidSpec("sample contains NaN or infinite values")
    return arr


@dataclass(frozen=True)
class PairedSample:
    """Numerator terms ``xs`` and normalizer terms ``ys`` of a general self-normalized sum."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = as_sample(self.xs)
        ys = as_sample(self.ys)
        if xs.shape != ys.shape:
            raise InvalidSpec(f"xs and ys differ in length ({xs.size} vs {ys.size})")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return int(self.xs.size)


@dataclass(frozen=True)
class RobustConfig:
    tau: float
    mu_ref: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidSpec(f"tau must be positive, got {self.tau}")


def _ratio(num, den_sq):
    num = np.asarray(num, dtype=np.float64)
    den_sq = np.asarray(den_sq, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / np.sqrt(den_sq)
    return np.where(den_sq > 0, out, np.nan)


def _scalar(value, what: str) -> float:
    value = float(value)
    if math.isnan(value):
        raise DegenerateDenominator(f"{what}: normalizing sum of squares is zero")
    return value


# ---------------------------------------------------------------------------
# row kernels

def sn_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return _ratio(np.sum(x, axis=-1), np.sum(x * x, axis=-1))


def gsn_rows(xs: np.ndarray, ys: np.ndarray, c: float = 0.0) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    return _ratio(np.sum(xs, axis=-1) - c, np.sum(ys * ys, axis=-1))


def student_t_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    centered = x - np.mean(x, axis=-1, keepdims=True)
    var = np.sum(centered * centered, axis=-1) / (n - 1)
    return _ratio(np.sum(x, axis=-1), n * var)


def sn_winsorized_rows(y: np.ndarray, tau: float, mu: float = 0.0) -> np.ndarray:
    d = winsorize(y, tau) - mu
    return _ratio(np.sum(d, axis=-1), np.sum(d * d, axis=-1))


def studentized_winsorized_rows(y: np.ndarray, tau: float, mu: float = 0.0) -> np.ndarray:
    f = winsorize(y, tau)
    centered = f - np.mean(f, axis=-1, keepdims=True)
    return _ratio(np.sum(f - mu, axis=-1), np.sum(centered * centered, axis=-1))


def sn_trimmed_rows(y: np.ndarray, tau: float, mu: float = 0.0) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    d = np.where(np.abs(y) <= tau, y - mu, 0.0)
    return _ratio(np.sum(d, axis=-1), np.sum(d * d, axis=-1))


def huber_rows(y: np.ndarray, tau: float) -> np.ndarray:
    """Huber location estimate of every row of ``y`` (bisection plus an exact polish)."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if math.isinf(tau):
        return np.mean(y, axis=-1)
    lo = y.min(axis=-1) - tau
    hi = y.max(axis=-1) + tau
    for _ in range(HUBER_MAX_ITER):
        if np.all(hi - lo <= HUBER_TOL):
            break
        mid = 0.5 * (lo + hi)
        pos = huber_score_rows(y, mid, tau) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    mid = 0.5 * (lo + hi)
    # The score is piecewise linear; solving the active piece at mid is exact
    # whenever the root lies on the same piece.
    r = y - mid[:, None]
    inside = np.abs(r) < tau
    k = inside.sum(axis=-1)
    clipped = tau * ((r >= tau).sum(axis=-1) - (r <= -tau).sum(axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        polished = (np.sum(np.where(inside, y, 0.0), axis=-1) + clipped) / k
    better = (k > 0) & (
        np.abs(huber_score_rows(y, polished, tau)) <= np.abs(huber_score_rows(y, mid, tau))
    )
    return np.where(better, polished, mid)


def huber_score_rows(y: np.ndarray, mu, tau: float) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    return np.sum(np.clip(y - mu[..., None], -tau, tau), axis=-1)


# ---------------------------------------------------------------------------
# scalar API

def self_normalized(s) -> float:
    """Return ``S_n / V_n``, the sum divided by the root of the sum of squares."""
    return _scalar(sn_rows(as_sample(s)), "self_normalized")


def general_self_normalized(p: PairedSample, c: float = 0.0) -> float:
    """Return ``(sum(xs) - c) / sqrt(sum(ys**2))``."""
    return _scalar(gsn_rows(p.xs, p.ys, c), "general_self_normalized")


def student_t(s) -> float:
    """Student's t statistic ``S_n / (sqrt(n) * sd)`` with the n-1 variance."""
    return _scalar(student_t_rows(as_sample(s, 2)), "student_t")


def t_to_selfnorm_threshold(x: float, n: int) -> float:
    """Map a Student-t threshold to the equivalent threshold for ``S_n / V_n``.

    ``t_n >= x`` holds exactly when ``S_n/V_n >= x * sqrt(n / (n + x**2 - 1))``.
    """
    if n < 1:
        raise InvalidThreshold(f"n must be >= 1, got {n}")
    d = n + x * x - 1
    if d <= 0:
        raise InvalidThreshold(f"n + x^2 - 1 = {d} is not positive")
    return x * math.sqrt(n / d)


def winsorize(y, tau: float):
    """Clamp to ``[-tau, tau]``; values with ``|y| == tau`` are unchanged."""
    if not tau > 0:
        raise InvalidSpec(f"tau must be positive, got {tau}")
    out = np.clip(y, -tau, tau)
    return float(out) if np.ndim(out) == 0 else out


def winsorized_mean(s, tau: float) -> float:
    return float(np.mean(winsorize(as_sample(s), tau)))


def trimmed_mean(s, tau: float) -> float:
    y = as_sample(s)
    keep = np.abs(y) <= tau
    count = int(keep.sum())
    if count == 0:
        raise AllTrimmed(f"no observation satisfies |y| <= {tau}")
    return float(np.sum(y[keep]) / count)


def huber_score(s, mu: float, tau: float) -> float:
    """Sum of clipped residuals; nonincreasing in ``mu``."""
    return float(huber_score_rows(as_sample(s)[None, :], np.array([mu]), tau)[0])


def huber_estimate(s, tau: float) -> float:
    """Minimizer of the Huber loss, found as the root of the clipped score."""
    if not tau > 0:
        raise InvalidSpec(f"tau must be positive, got {tau}")
    return float(huber_rows(as_sample(s)[None, :], tau)[0])


def studentized_winsorized(s, cfg: RobustConfig) -> float:
    return _scalar(
        studentized_winsorized_rows(as_sample(s), cfg.tau, cfg.mu_ref), "studentized_winsorized"
    )


def self_normalized_winsorized(s, cfg: RobustConfig) -> float:
    return _scalar(sn_winsorized_rows(as_sample(s), cfg.tau, cfg.mu_ref), "self_normalized_winsorized")


def self_normalized_trimmed(s, cfg: RobustConfig) -> float:
    return _scalar(sn_trimmed_rows(as_sample(s), cfg.tau, cfg.mu_ref), "self_normalized_trimmed")


def studentized_threshold_map(x: float, n_eff: int) -> float:
    """Return ``x / sqrt(1 + x**2 / n_eff)``.

    A studentized winsorized mean exceeds ``x`` exactly when its
    self-normalized counterpart exceeds this value.
    """
    if n_eff < 1:
        raise InvalidThreshold(f"n_eff must be >= 1, got {n_eff}")
    return x / math.sqrt(1.0 + x * x / n_eff)
