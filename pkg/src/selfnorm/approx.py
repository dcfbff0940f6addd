"""Skewness-corrected normal tail approximations for general self-normalized sums.

For standardized independent pairs (X_i, Y_i) the tail ``P(S_n >= x V_n + c)``
is approximated by ``(1 - Phi(x + c)) * Psi`` where

    Psi = exp{x^3 (4/3 g^3 sum E X_i^3 - 2 g^2 sum E[X_i Y_i^2])},  g = (1 + c/x) / 2.

The error of that approximation is controlled by ``L3n`` and ``R_x``; those
are computed here as diagnostics only, since the constants multiplying them
are not known.  Products of tiny tails are kept in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .errors import DomainError, InvalidSpec, QuadratureFailure, StandardizationError
from .stats import PairedSample

STANDARDIZATION_TOL = 1e-9
QUAD_RTOL = 1e-8


def normal_sf(x):
    """Upper standard normal tail ``1 - Phi(x)``, computed through erfc."""
    out = special.ndtr(-np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def log_normal_sf(x):
    out = special.log_ndtr(-np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"normal_quantile needs 0 < p < 1, got {p}")
    if p > 0.5:
        # 1 - p is exact here, and ndtri is accurate in the lower tail.
        return -float(special.ndtri(1.0 - p))
    return float(special.ndtri(p))


@dataclass(frozen=True)
class MomentProfile:
    """Aggregated moments of standardized summands.

    ``l3n`` is ``sum_i (E|X_i|^3 + E|Y_i|^3)`` and ``max_abs3`` its largest
    single term. ``rho`` carries the lag-one correlation for one-dependent
    processes and is ``None`` otherwise.
    """

    sum_ex2: float
    sum_ey2: float
    sum_ex3: float
    sum_exy2: float
    l3n: float
    max_abs3: float
    fourth_x: float = math.nan
    fourth_y: float = math.nan
    source: str = "analytic"
    rho: Optional[float] = None

    def __post_init__(self):
        if self.source not in ("analytic", "plugin"):
            raise InvalidSpec(f"unknown moment source {self.source!r}")
        if not (self.sum_ex2 > 0 and self.sum_ey2 > 0):
            raise InvalidSpec("second-moment sums must be positive")
        if not (self.l3n >= self.max_abs3 >= 0):
            raise InvalidSpec("need l3n >= max_abs3 >= 0")

    def check_standardized(self) -> None:
        if self.source != "analytic":
            return
        if abs(self.sum_ex2 - 1) > STANDARDIZATION_TOL or abs(self.sum_ey2 - 1) > STANDARDIZATION_TOL:
            raise StandardizationError(
                f"analytic profile not standardized: sum E X^2 = {self.sum_ex2}, "
                f"sum E Y^2 = {self.sum_ey2}"
            )


@dataclass(frozen=True)
class TailPoint:
    x: float
    c: float = 0.0

    def __post_init__(self):
        if not self.x > 0:
            raise DomainError(f"tail point needs x > 0, got {self.x}")

    @property
    def gamma(self) -> float:
        return 0.5 * (1.0 + self.c / self.x)

    @property
    def in_cone(self) -> bool:
        return abs(self.c) <= self.x / 5


@dataclass(frozen=True)
class ValidityConfig:
    c1: float = 0.25
    c0: float = 0.0
    report_only: bool = True

    def __post_init__(self):
        if not 0 < self.c1 <= 0.25:
            raise InvalidSpec(f"c1 must lie in (0, 1/4], got {self.c1}")
        if self.c0 < 0:
            raise InvalidSpec(f"c0 must be nonnegative, got {self.c0}")


@dataclass(frozen=True)
class ErrorFunctionals:
    x: float
    l3n: float
    delta_x: float
    r_x: float
    max_abs3: float
    max_r: float
    # standard errors, filled for plug-in estimates only
    se_delta_x: float = 0.0
    se_r_x: float = 0.0

    @property
    def big_r(self) -> float:
        return self.delta_x + self.r_x


@dataclass(frozen=True)
class ValidityReport:
    g1_margin: float
    rx_margin: float
    g2_margin: float
    rmax_margin: float
    in_cone: bool

    @property
    def in_range(self) -> bool:
        margins = (self.g1_margin, self.rx_margin, self.g2_margin, self.rmax_margin)
        return self.in_cone and all(m > 0 for m in margins)


@dataclass(frozen=True)
class TailApprox:
    x: float
    c: float
    log_base: float
    log_psi: float
    validity: ValidityReport
    r_x_estimate: float = math.nan

    @property
    def base(self) -> float:
        return math.exp(self.log_base)

    @property
    def psi(self) -> float:
        return math.exp(self.log_psi)

    @property
    def value(self) -> float:
        return math.exp(self.log_base + self.log_psi)

    @property
    def g1_margin(self) -> float:
        return self.validity.g1_margin

    @property
    def g2_margin(self) -> float:
        return self.validity.g2_margin

    @property
    def in_range(self) -> bool:
        return self.validity.in_range


# ---------------------------------------------------------------------------
# correction factors

def log_psi_star(m: MomentProfile, tp: TailPoint) -> float:
    m.check_standardized()
    g = tp.gamma
    return tp.x**3 * (4.0 / 3.0 * g**3 * m.sum_ex3 - 2.0 * g**2 * m.sum_exy2)


def psi_star(m: MomentProfile, tp: TailPoint) -> float:
    return math.exp(log_psi_star(m, tp))


def psi_iid_standardized(ex3: float, sigma: float, n: int, x: float) -> float:
    """Correction for the standardized sum ``S_n / (sigma sqrt(n))`` of i.i.d. terms."""
    if not sigma > 0 or n < 1:
        raise DomainError("need sigma > 0 and n >= 1")
    return math.exp(x**3 * ex3 / (6.0 * sigma**3 * math.sqrt(n)))


def psi_selfnorm_iid(ey3: float, sigma: float, n: int, x: float) -> float:
    """Correction for the i.i.d. self-normalized mean, ``exp(-x^3 E(Y-mu)^3 / (3 sigma^3 sqrt n))``."""
    if not sigma > 0 or n < 1:
        raise DomainError("need sigma > 0 and n >= 1")
    return math.exp(-(x**3) * ey3 / (3.0 * sigma**3 * math.sqrt(n)))


# ---------------------------------------------------------------------------
# error functionals

@dataclass(frozen=True)
class SummandLaw:
    """Law of ``n`` i.i.d. summands ``X_i = Y_i = scale * Z``.

    Z is either continuous (``pdf`` on ``support``) or discrete (``atoms``
    with ``probs``). ``breaks`` lists interior points where the density is
    not smooth.
    """

    n: int
    scale: float
    pdf: Optional[Callable[[float], float]] = None
    support: tuple = (-math.inf, math.inf)
    atoms: Optional[Sequence[float]] = None
    probs: Optional[Sequence[float]] = None
    breaks: tuple = ()

    def __post_init__(self):
        if (self.pdf is None) == (self.atoms is None):
            raise InvalidSpec("SummandLaw needs exactly one of pdf or atoms")
        if self.atoms is not None and (self.probs is None or len(self.probs) != len(self.atoms)):
            raise InvalidSpec("atoms need matching probs")

    def expect(self, g: Callable[[np.ndarray], np.ndarray], cuts: Sequence[float] = ()) -> float:
        """``E g(X)`` for one summand; ``cuts`` are X-scale breakpoints of ``g``."""
        if self.atoms is not None:
            xs = self.scale * np.asarray(self.atoms, dtype=np.float64)
            return float(np.sum(np.asarray(self.probs) * g(xs)))
        lo, hi = self.support
        pts = sorted({c / self.scale for c in cuts} | set(self.breaks))
        edges = [lo] + [p for p in pts if lo < p < hi] + [hi]
        total = 0.0
        err = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            val, abserr = integrate.quad(
                lambda z: float(g(np.float64(self.scale * z))) * self.pdf(z),
                a, b, epsabs=0.0, epsrel=1e-11, limit=400,
            )
            total += val
            err += abserr
        if not err <= QUAD_RTOL * abs(total) + 1e-14:
            raise QuadratureFailure(f"quadrature error {err:.3g} exceeds tolerance for value {total:.6g}")
        return total


def _delta_integrand(x: float):
    b = 1.0 / (1.0 + x)

    def g(v):
        a = np.abs(v)
        return np.where(a > b, (1 + x) ** 3 * a**3, (1 + x) ** 4 * a**4)

    return g


def _r_integrand(x: float, c0: float, ey2):
    b = 1.0 / (1.0 + x)

    def g(u, w):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(u == 0, 0.0, u * u / (w * w + c0 * ey2))
        return np.where(np.abs(u) > b, np.exp(np.minimum(ratio, 2 * x * u)), 0.0)

    return g


def error_functionals(source, x: float, v: ValidityConfig = ValidityConfig(),
                      n_summands: Optional[int] = None) -> ErrorFunctionals:
    """L3n, delta_x, r_x and R_x for a summand law or from plug-in draws.

    ``source`` is a :class:`SummandLaw` (expectations by quadrature or atom
    sums) or a :class:`PairedSample` of draws of one standardized pair
    (X, Y); plug-in aggregates are ``n_summands`` times the empirical mean
    (``n_summands`` defaults to the number of draws).
    """
    if not x > 0:
        raise DomainError(f"error functionals need x > 0, got {x}")
    b = 1.0 / (1.0 + x)
    if isinstance(source, SummandLaw):
        n = source.n
        e_abs3 = source.expect(lambda u: np.abs(u) ** 3)
        e_delta = source.expect(_delta_integrand(x), cuts=(-b, b))
        ey2 = source.expect(lambda u: u * u)
        rg = _r_integrand(x, v.c0, ey2)
        e_r = source.expect(lambda u: rg(u, u), cuts=(-b, b))
        # X = Y, so each delta term counts the X and Y parts once each
        return ErrorFunctionals(
            x=x, l3n=n * 2 * e_abs3, delta_x=n * 2 * e_delta, r_x=n * e_r,
            max_abs3=2 * e_abs3, max_r=e_r,
        )
    if isinstance(source, PairedSample):
        xs, ys = source.xs, source.ys
        n = source.n if n_summands is None else int(n_summands)
        k = source.n
        dg = _delta_integrand(x)
        d_terms = dg(xs) + dg(ys)
        r_terms = _r_integrand(x, v.c0, np.mean(ys * ys))(xs, ys)
        abs3 = np.abs(xs) ** 3 + np.abs(ys) ** 3
        return ErrorFunctionals(
            x=x, l3n=n * float(np.mean(abs3)), delta_x=n * float(np.mean(d_terms)),
            r_x=n * float(np.mean(r_terms)), max_abs3=float(np.mean(abs3)),
            max_r=float(np.mean(r_terms)),
            se_delta_x=n * float(np.std(d_terms, ddof=1)) / math.sqrt(k) if k > 1 else math.nan,
            se_r_x=n * float(np.std(r_terms, ddof=1)) / math.sqrt(k) if k > 1 else math.nan,
        )
    raise InvalidSpec(f"cannot compute error functionals from {type(source).__name__}")


def plugin_profile(p: PairedSample, n_summands: Optional[int] = None) -> MomentProfile:
    """Moment profile estimated from draws of one standardized pair (X, Y)."""
    n = p.n if n_summands is None else int(n_summands)
    xs, ys = p.xs, p.ys
    abs3 = np.abs(xs) ** 3 + np.abs(ys) ** 3
    return MomentProfile(
        sum_ex2=n * float(np.mean(xs * xs)), sum_ey2=n * float(np.mean(ys * ys)),
        sum_ex3=n * float(np.mean(xs**3)), sum_exy2=n * float(np.mean(xs * ys * ys)),
        l3n=n * float(np.mean(abs3)), max_abs3=float(np.mean(abs3)),
        fourth_x=n * float(np.mean(xs**4)), fourth_y=n * float(np.mean(ys**4)),
        source="plugin",
    )


def validity_check(m: MomentProfile, tp: TailPoint, r: Optional[ErrorFunctionals],
                   v: ValidityConfig = ValidityConfig()) -> ValidityReport:
    """Signed slack in each range condition; ``in_range`` requires every slack > 0.

    Without error functionals the R_x and max r conditions are unknown and
    reported as NaN.
    """
    x = tp.x
    g1 = v.c1 - (1 + x) * m.l3n
    num = 0.25 if v.c0 == 0 else min(0.25, 1.0 / (2.0 * math.sqrt(v.c0)))
    cap = math.inf if m.max_abs3 == 0 else num / m.max_abs3 ** (1.0 / 3.0)
    if r is None:
        rx = rmax = math.nan
    else:
        rx = v.c1 - r.big_r / x**2
        rmax = v.c1 - r.max_r
    return ValidityReport(g1_margin=g1, rx_margin=rx, g2_margin=cap - x,
                          rmax_margin=rmax, in_cone=tp.in_cone)


def tail_approx(m: MomentProfile, tp: TailPoint, v: ValidityConfig = ValidityConfig(),
                functionals: Optional[ErrorFunctionals] = None) -> TailApprox:
    """``(1 - Phi(x + c)) * Psi`` with validity margins; out-of-range points are flagged, not rejected."""
    return TailApprox(
        x=tp.x, c=tp.c,
        log_base=log_normal_sf(tp.x + tp.c),
        log_psi=log_psi_star(m, tp),
        validity=validity_check(m, tp, functionals, v),
        r_x_estimate=math.nan if functionals is None else functionals.r_x,
    )
