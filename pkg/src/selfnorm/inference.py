"""Simultaneous confidence intervals and tests built on winsorized means."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import stats
from .approx import normal_quantile, normal_sf
from .errors import DegenerateCoordinate, InvalidSpec, QuantileTooLarge

MAD_SCALE = 1.4826
TAU_EXPONENT = 0.4


@dataclass(frozen=True)
class CiSpec:
    alpha: float
    p: int
    n: int
    tau: Optional[float] = None  # None selects default_tau per coordinate

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InvalidSpec(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.p < 1 or self.n < 2:
            raise InvalidSpec(f"need p >= 1 and n >= 2, got p={self.p}, n={self.n}")
        if self.tau is not None and not self.tau > 0:
            raise InvalidSpec(f"tau must be positive, got {self.tau}")

    @property
    def design_guard(self) -> bool:
        """Whether ``log(p / alpha) < n^(1/3)``, the regime the calibration is built for."""
        return math.log(self.p / self.alpha) < self.n ** (1.0 / 3.0)


@dataclass(frozen=True)
class CiResult:
    t0: float
    lower: np.ndarray
    upper: np.ndarray
    tau: np.ndarray

    @property
    def intervals(self):
        return list(zip(self.lower.tolist(), self.upper.tolist()))


def solve_t0(alpha: float, p: int, n, closed_form: bool = False) -> float:
    """Critical value ``t0`` for ``p`` simultaneous two-sided intervals at level ``alpha``.

    With ``z = Phi^{-1}(1 - alpha/(2p))`` the default solves
    ``t / sqrt(1 + t^2/n) = z``, which is ``z / sqrt(1 - z^2/n)``; ``n`` may be
    ``inf``. ``closed_form`` instead takes the smaller root of
    ``t / (1 + t^2/n) = z``, which needs ``4 z^2 <= n``.
    """
    if not 0 < alpha < 1 or p < 1:
        raise InvalidSpec(f"need 0 < alpha < 1 and p >= 1, got alpha={alpha}, p={p}")
    z = normal_quantile(1.0 - alpha / (2.0 * p))
    if math.isinf(n):
        return z
    if closed_form:
        disc = 1.0 - 4.0 * z * z / n
        if disc < 0:
            raise QuantileTooLarge(f"4 z^2 = {4 * z * z:.6g} exceeds n = {n}")
        # 2z / (1 + sqrt(disc)) is the small root without cancellation
        return 2.0 * z / (1.0 + math.sqrt(disc))
    if z * z >= n:
        raise QuantileTooLarge(f"z^2 = {z * z:.6g} is not below n = {n}")
    return z / math.sqrt(1.0 - z * z / n)


def default_tau(data: np.ndarray) -> np.ndarray:
    """Per-row threshold ``n^0.4 * 1.4826 * MAD`` along the last axis."""
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[-1]
    med = np.median(data, axis=-1, keepdims=True)
    mad = np.median(np.abs(data - med), axis=-1)
    return n**TAU_EXPONENT * MAD_SCALE * mad


def ci_bounds(data: np.ndarray, t0: float, tau):
    """Interval endpoints for every row of ``data`` (last axis is the sample).

    ``mean(f) -+ (t0/n) sqrt(sum (f - mean f)^2)`` with ``f`` the winsorized
    row. Rows with a nonpositive ``tau`` or constant ``f`` give ``lower == upper``.
    """
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[-1]
    tau = np.asarray(tau, dtype=np.float64)
    safe = np.where(tau > 0, tau, 0.0)[..., None]
    f = np.clip(data, -safe, safe)
    mean = np.mean(f, axis=-1)
    centered = f - mean[..., None]
    half = t0 / n * np.sqrt(np.sum(centered * centered, axis=-1))
    return mean - half, mean + half


def simultaneous_ci(data, spec: CiSpec) -> CiResult:
    """Intervals for the ``p`` row means of a ``p x n`` matrix, jointly at level ``1 - alpha``."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape != (spec.p, spec.n):
        raise InvalidSpec(f"data shape {data.shape} does not match p={spec.p}, n={spec.n}")
    if not np.all(np.isfinite(data)):
        raise InvalidSpec("data contains NaN or infinite values")
    t0 = solve_t0(spec.alpha, spec.p, spec.n)
    tau = default_tau(data) if spec.tau is None else np.full(spec.p, float(spec.tau))
    lower, upper = ci_bounds(data, t0, tau)
    bad = np.flatnonzero(~(upper > lower))
    if bad.size:
        raise DegenerateCoordinate(bad.tolist())
    return CiResult(t0, lower, upper, tau)


def winsorized_pvalue(s, mu0: float, tau: float) -> float:
    """Two-sided p-value for ``H0: mean = mu0`` from the studentized winsorized mean."""
    y = stats.as_sample(s, 2)
    t = stats.studentized_winsorized(y, stats.RobustConfig(tau, mu0))
    z = stats.studentized_threshold_map(abs(t), y.size)
    return min(1.0, 2.0 * float(normal_sf(z)))
