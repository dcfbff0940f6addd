"""Seedable generators for i.i.d., one-dependent and AR(1) test processes.

Every family has a closed-form (or quadrature) moment profile so that Monte
Carlo results can be checked against exact numbers. Randomness comes from a
keyed Philox counter generator: ``(seed, stream_id)`` fully determines a
stream, which keeps replications reproducible under any parallel schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, special, stats
from scipy.signal import lfilter

from .approx import MomentProfile, SummandLaw
from .errors import InvalidSpec, MomentNotFinite, UnsupportedProcess

IID_FAMILIES = (
    "iid_normal",
    "iid_centered_exp",
    "iid_rademacher",
    "iid_student_t",
    "iid_centered_pareto",
    "iid_discrete",
)
DEPENDENT_FAMILIES = ("ma1", "m_dependent", "ar1")

_U64 = 1 << 64


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < _U64 and 0 <= self.stream_id < _U64):
            raise InvalidSpec("seed and stream_id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed | (self.stream_id << 64)))


@dataclass(frozen=True)
class ProcessSpec:
    """A process family and its parameters.

    Dependent families take an i.i.d. ``innovation`` spec (default standard
    normal). ``ma1`` is ``e[i] + theta * e[i+1]``; ``m_dependent`` is the
    moving sum of ``m + 1`` consecutive innovations; ``ar1`` is
    ``x[i] = a * x[i-1] + e[i]``, started from its stationary law when the
    innovation is normal and after ``burn_in`` steps otherwise.
    """

    family: str
    nu: Optional[float] = None
    beta: Optional[float] = None
    theta: Optional[float] = None
    a: Optional[float] = None
    m: Optional[int] = None
    innovation: Optional["ProcessSpec"] = None
    burn_in: Optional[int] = None
    atoms: Optional[tuple] = None
    probs: Optional[tuple] = None

    def __post_init__(self):
        f = self.family
        if f not in IID_FAMILIES + DEPENDENT_FAMILIES:
            raise InvalidSpec(f"unknown process family {f!r}")
        if f == "iid_student_t" and not (self.nu is not None and self.nu > 2):
            raise InvalidSpec("iid_student_t needs nu > 2")
        if f == "iid_centered_pareto" and not (self.beta is not None and self.beta > 2):
            raise InvalidSpec("iid_centered_pareto needs beta > 2")
        if f == "iid_discrete":
            if not self.atoms or self.probs is None or len(self.atoms) != len(self.probs):
                raise InvalidSpec("iid_discrete needs atoms and matching probs")
            if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1) > 1e-12:
                raise InvalidSpec("iid_discrete probs must be nonnegative and sum to 1")
            object.__setattr__(self, "atoms", tuple(float(v) for v in self.atoms))
            object.__setattr__(self, "probs", tuple(float(v) for v in self.probs))
        if f in DEPENDENT_FAMILIES:
            inn = self.innovation or ProcessSpec("iid_normal")
            if inn.family not in IID_FAMILIES:
                raise InvalidSpec("innovations must come from an i.i.d. family")
            object.__setattr__(self, "innovation", inn)
        if f == "ma1" and self.theta is None:
            raise InvalidSpec("ma1 needs theta")
        if f == "m_dependent" and not (self.m is not None and int(self.m) >= 1):
            raise InvalidSpec("m_dependent needs m >= 1")
        if f == "ar1":
            if self.a is None or not abs(self.a) < 1:
                raise InvalidSpec("ar1 needs |a| < 1")
            floor = 0 if self.a == 0 else math.ceil(math.log(1e-12) / math.log(abs(self.a)))
            if self.burn_in is None:
                default = 0 if self.a == 0 else math.ceil(128 / abs(math.log(abs(self.a))))
                object.__setattr__(self, "burn_in", max(default, floor))
            elif self.burn_in < floor:
                raise InvalidSpec(f"ar1 burn_in must be >= {floor}")

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessSpec":
        d = dict(d)
        if "innovation" in d and d["innovation"] is not None:
            d["innovation"] = cls.from_dict(d["innovation"])
        for key in ("atoms", "probs"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None

    def to_dict(self) -> dict:
        out = {"family": self.family}
        for name in ("nu", "beta", "theta", "a", "m", "burn_in", "atoms", "probs"):
            val = getattr(self, name)
            if val is not None:
                out[name] = list(val) if isinstance(val, tuple) else val
        if self.innovation is not None:
            out["innovation"] = self.innovation.to_dict()
        return out

    @property
    def is_iid(self) -> bool:
        return self.family in IID_FAMILIES


# ---------------------------------------------------------------------------
# generation

def _draw_iid(spec: ProcessSpec, shape, rng: np.random.Generator) -> np.ndarray:
    f = spec.family
    if f == "iid_normal":
        return rng.standard_normal(shape)
    if f == "iid_centered_exp":
        out = rng.standard_exponential(shape)
        out -= 1.0
        return out
    if f == "iid_rademacher":
        return 2.0 * rng.integers(0, 2, size=shape).astype(np.float64) - 1.0
    if f == "iid_student_t":
        return rng.standard_t(spec.nu, size=shape)
    if f == "iid_centered_pareto":
        # numpy's pareto is the Lomax law, i.e. classical Pareto(beta, 1) minus one
        out = rng.pareto(spec.beta, size=shape)
        out -= 1.0 / (spec.beta - 1.0)
        return out
    if f == "iid_discrete":
        idx = rng.choice(len(spec.atoms), size=shape, p=spec.probs)
        return np.asarray(spec.atoms)[idx]
    raise InvalidSpec(f"{f} is not an i.i.d. family")


def gen_batch(spec: ProcessSpec, n: int, reps: int, stream: RngStream) -> np.ndarray:
    """``reps`` independent length-``n`` paths as a ``(reps, n)`` array."""
    if n < 1 or reps < 1:
        raise InvalidSpec("need n >= 1 and reps >= 1")
    rng = stream.generator()
    f = spec.family
    if spec.is_iid:
        return _draw_iid(spec, (reps, n), rng)
    inn = spec.innovation
    if f == "ma1":
        e = _draw_iid(inn, (reps, n + 1), rng)
        out = e[:, 1:] * spec.theta
        out += e[:, :n]
        return out
    if f == "m_dependent":
        m = int(spec.m)
        e = _draw_iid(inn, (reps, n + m), rng)
        c = np.cumsum(e, axis=1)
        out = c[:, m:].copy()
        out[:, 1:] -= c[:, : n - 1]
        return out
    # ar1; each row's start and innovations are drawn together so a row
    # does not depend on how many rows are requested
    a = spec.a
    if inn.family == "iid_normal":
        e = _draw_iid(inn, (reps, n + 1), rng)
        x0 = e[:, 0] / math.sqrt(1.0 - a * a)
        out, _ = lfilter([1.0], [1.0, -a], e[:, 1:], axis=1, zi=(a * x0)[:, None])
        return out
    burn = int(spec.burn_in)
    e = _draw_iid(inn, (reps, burn + n), rng)
    return lfilter([1.0], [1.0, -a], e, axis=1)[:, burn:]


def _ar1_start(spec: ProcessSpec, reps: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) states: exact for normal innovations, burned in otherwise."""
    a = spec.a
    if spec.innovation.family == "iid_normal":
        return rng.standard_normal(reps) / math.sqrt(1.0 - a * a)
    e = _draw_iid(spec.innovation, (reps, int(spec.burn_in)), rng)
    if e.shape[1] == 0:
        return np.zeros(reps)
    return lfilter([1.0], [1.0, -a], e, axis=1)[:, -1]


def gen(spec: ProcessSpec, n: int, stream: RngStream) -> np.ndarray:
    """One length-``n`` path; identical to the first row of :func:`gen_batch`."""
    return gen_batch(spec, n, 1, stream)[0]


def aggregate_m_dependent(s, m: int) -> np.ndarray:
    """Sums of consecutive non-overlapping length-``m`` blocks; the remainder is dropped.

    Block sums of an m-dependent sequence are one-dependent.
    """
    s = np.asarray(s, dtype=np.float64)
    if m < 1 or m > s.shape[-1]:
        raise InvalidSpec(f"need 1 <= m <= n, got m={m}")
    b = s.shape[-1] // m
    return s[..., : b * m].reshape(*s.shape[:-1], b, m).sum(axis=-1)


# ---------------------------------------------------------------------------
# moments

@dataclass(frozen=True)
class _Moments:
    mean: float
    var: float
    e3: float
    eabs3: float
    e4: float


def _pareto_abs3(beta: float, mean: float) -> float:
    g = lambda p: abs(p - mean) ** 3 * beta * p ** (-beta - 1.0)
    left, _ = integrate.quad(g, 1.0, mean, epsrel=1e-12)
    right, _ = integrate.quad(g, mean, math.inf, epsrel=1e-12, limit=400)
    return left + right


def iid_moments(spec: ProcessSpec) -> _Moments:
    """Central moments of one draw; infinite ones come back as ``inf``."""
    f = spec.family
    if f == "iid_normal":
        return _Moments(0.0, 1.0, 0.0, 2.0 * math.sqrt(2.0 / math.pi), 3.0)
    if f == "iid_centered_exp":
        return _Moments(0.0, 1.0, 2.0, 12.0 / math.e - 2.0, 9.0)
    if f == "iid_rademacher":
        return _Moments(0.0, 1.0, 0.0, 1.0, 1.0)
    if f == "iid_student_t":
        nu = spec.nu
        var = nu / (nu - 2.0)
        if nu > 3:
            eabs3 = nu**1.5 * math.exp(
                special.gammaln((nu - 3.0) / 2.0) - special.gammaln(nu / 2.0)
            ) / math.sqrt(math.pi)
            e3 = 0.0
        else:
            eabs3 = e3 = math.inf
        e4 = 3.0 * nu * nu / ((nu - 2.0) * (nu - 4.0)) if nu > 4 else math.inf
        return _Moments(0.0, var, e3, eabs3, e4)
    if f == "iid_centered_pareto":
        b = spec.beta
        m = b / (b - 1.0)
        raw = lambda k: b / (b - k) if b > k else math.inf
        var = raw(2) - m * m
        if b > 3:
            e3 = raw(3) - 3 * m * raw(2) + 2 * m**3
            eabs3 = _pareto_abs3(b, m)
        else:
            e3 = eabs3 = math.inf
        e4 = raw(4) - 4 * m * raw(3) + 6 * m * m * raw(2) - 3 * m**4 if b > 4 else math.inf
        return _Moments(0.0, var, e3, eabs3, e4)
    if f == "iid_discrete":
        v = np.asarray(spec.atoms)
        p = np.asarray(spec.probs)
        mean = float(np.sum(p * v))
        d = v - mean
        return _Moments(mean, float(np.sum(p * d**2)), float(np.sum(p * d**3)),
                        float(np.sum(p * np.abs(d) ** 3)), float(np.sum(p * d**4)))
    raise InvalidSpec(f"{f} is not an i.i.d. family")


def autocovariance(spec: ProcessSpec, lag: int) -> float:
    """Stationary autocovariance at ``lag`` (interior of the path)."""
    lag = abs(int(lag))
    if spec.is_iid:
        return iid_moments(spec).var if lag == 0 else 0.0
    v = iid_moments(spec.innovation).var
    if spec.family == "ma1":
        t = spec.theta
        return {0: v * (1 + t * t), 1: v * t}.get(lag, 0.0)
    if spec.family == "m_dependent":
        return v * max(0, spec.m + 1 - lag)
    a = spec.a
    return v * a**lag / (1.0 - a * a)


def analytic_rho(spec: ProcessSpec, n: Optional[int] = None) -> float:
    """Lag-one covariance over variance; with ``n`` it carries the finite-path factor (n-1)/n."""
    rho = autocovariance(spec, 1) / autocovariance(spec, 0)
    return rho if n is None else rho * (n - 1) / n


def aggregated_rho(spec: ProcessSpec, m: int) -> float:
    """Lag-one correlation of the non-overlapping length-``m`` block sums."""
    var = sum((m - abs(h)) * autocovariance(spec, h) for h in range(-m + 1, m))
    cov = sum(min(h, 2 * m - h) * autocovariance(spec, h) for h in range(1, 2 * m))
    return cov / var


def analytic_moments(spec: ProcessSpec, n: int) -> MomentProfile:
    """Moment profile of ``n`` standardized summands ``X_i = Y_i = xi_i / (sigma sqrt n)``.

    For dependent families the profile describes the marginal law (closed
    form only for normal innovations) and ``rho`` carries the lag-one
    correlation.
    """
    if n < 1:
        raise InvalidSpec("n must be >= 1")
    if spec.is_iid:
        mo = iid_moments(spec)
        if abs(mo.mean) > 1e-12:
            raise InvalidSpec(f"moment profile needs a mean-zero law, mean is {mo.mean}")
        rho = None
    else:
        if spec.innovation.family != "iid_normal":
            raise UnsupportedProcess("closed-form marginal moments need normal innovations")
        var = autocovariance(spec, 0)
        sd = math.sqrt(var)
        mo = _Moments(0.0, var, 0.0, 2.0 * math.sqrt(2.0 / math.pi) * sd**3, 3.0 * var * var)
        rho = analytic_rho(spec)
    if not (math.isfinite(mo.e3) and math.isfinite(mo.eabs3)):
        raise MomentNotFinite(f"{spec.family} has no finite third moment")
    sig3 = mo.var**1.5
    root_n = math.sqrt(n)
    ex3 = mo.e3 / (sig3 * root_n)
    l3n = 2.0 * mo.eabs3 / (sig3 * root_n)
    fourth = mo.e4 / (mo.var**2 * n) if math.isfinite(mo.e4) else math.nan
    return MomentProfile(
        sum_ex2=1.0, sum_ey2=1.0, sum_ex3=ex3, sum_exy2=ex3, l3n=l3n, max_abs3=l3n / n,
        fourth_x=fourth, fourth_y=fourth, source="analytic", rho=rho,
    )


def summand_law(spec: ProcessSpec, n: int) -> SummandLaw:
    """Law of one standardized summand of an i.i.d. family, for quadrature."""
    if not spec.is_iid:
        raise UnsupportedProcess("summand laws exist for i.i.d. families only")
    mo = iid_moments(spec)
    scale = 1.0 / math.sqrt(mo.var * n)
    f = spec.family
    if f == "iid_normal":
        return SummandLaw(n=n, scale=scale, pdf=stats.norm.pdf)
    if f == "iid_centered_exp":
        return SummandLaw(n=n, scale=scale, pdf=lambda z: math.exp(-(z + 1.0)), support=(-1.0, math.inf))
    if f == "iid_student_t":
        return SummandLaw(n=n, scale=scale, pdf=stats.t(spec.nu).pdf)
    if f == "iid_centered_pareto":
        b = spec.beta
        m = b / (b - 1.0)
        return SummandLaw(n=n, scale=scale, pdf=lambda z: b * (z + m) ** (-b - 1.0), support=(1.0 - m, math.inf))
    if f == "iid_rademacher":
        return SummandLaw(n=n, scale=scale, atoms=(-1.0, 1.0), probs=(0.5, 0.5))
    return SummandLaw(n=n, scale=scale, atoms=tuple(a - mo.mean for a in spec.atoms), probs=spec.probs)


# ---------------------------------------------------------------------------
# coupling

def coupled_endpoints(spec: ProcessSpec, n_lag: int, reps: int, stream: RngStream):
    """Draw ``(X_i, X_i*)`` pairs sharing innovations after lag ``n_lag``.

    ``X_i*`` is the same causal function of the innovations except that
    every innovation at or before ``i - n_lag`` is replaced by an
    independent copy.
    """
    if n_lag < 0 or reps < 1:
        raise InvalidSpec("need n_lag >= 0 and reps >= 1")
    rng = stream.generator()
    f = spec.family
    if spec.is_iid or f in ("ma1", "m_dependent"):
        # causal moving average: X_i = sum_k psi_k e_{i-k}
        if spec.is_iid:
            psi, inn = np.array([1.0]), spec
        elif f == "ma1":
            psi, inn = np.array([spec.theta, 1.0]), spec.innovation
        else:
            psi, inn = np.ones(spec.m + 1), spec.innovation
        q = psi.size
        e = _draw_iid(inn, (reps, q), rng)
        e_star = _draw_iid(inn, (reps, q), rng)
        lag_of = np.arange(q)
        e_star = np.where(lag_of[None, :] >= n_lag, e_star, e)
        return e @ psi, e_star @ psi
    if f == "ar1":
        a = spec.a
        x = _ar1_start(spec, reps, rng)
        x_star = _ar1_start(spec, reps, rng)
        e = _draw_iid(spec.innovation, (reps, n_lag), rng)
        for t in range(n_lag):
            x = a * x + e[:, t]
            x_star = a * x_star + e[:, t]
        return x, x_star
    raise UnsupportedProcess(f"no coupled simulation for {f}")
