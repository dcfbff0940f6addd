"""Replication engine for tail probabilities, ratio curves and coverage.

Replications run in fixed-size batches; batch ``b`` draws from stream
``(seed, b)`` and the per-batch hit counts are integers summed at the end,
so results do not depend on the number of worker threads.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import blocks, inference, stats
from .approx import normal_quantile
from .errors import GridMismatch, InvalidSpec, TooLarge
from .processes import ProcessSpec, RngStream, aggregate_m_dependent, gen_batch, iid_moments

MAX_ENUMERATION = 10**7
BATCH_ELEMENTS = 1 << 21


# ---------------------------------------------------------------------------
# statistics

@dataclass(frozen=True)
class Statistic:
    """A named row statistic: maps a ``(reps, n)`` array of paths to ``reps`` values (NaN if degenerate)."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    params: tuple = ()

    def __call__(self, paths: np.ndarray) -> np.ndarray:
        return self.fn(np.atleast_2d(paths))


def _with_aggregation(fn, m):
    if not m or m == 1:
        return fn
    return lambda p: fn(aggregate_m_dependent(p, m))


def make_statistic(name: str, n: Optional[int] = None, **params) -> Statistic:
    """Build a statistic by name.

    Names: ``self_normalized``, ``student_t``, ``standardized_sum`` (needs
    ``sigma``), ``raw`` (first coordinate), ``sn_winsorized``,
    ``studentized_winsorized``, ``sn_trimmed`` (need ``tau``, optional
    ``mu``), ``onedep_block`` and ``block_T`` (need ``n``; optional
    ``alpha``, ``scheme`` and ``aggregate_m``).
    """
    p = dict(params)
    tau = p.get("tau")
    mu = p.get("mu", 0.0)
    if name == "self_normalized":
        fn = stats.sn_rows
    elif name == "student_t":
        fn = stats.student_t_rows
    elif name == "standardized_sum":
        sigma = p["sigma"]
        fn = lambda x: np.sum(x, axis=-1) / (sigma * math.sqrt(x.shape[-1]))
    elif name == "raw":
        fn = lambda x: x[:, 0].copy()
    elif name in ("sn_winsorized", "studentized_winsorized", "sn_trimmed"):
        if tau is None:
            raise InvalidSpec(f"{name} needs tau")
        kernel = {
            "sn_winsorized": stats.sn_winsorized_rows,
            "studentized_winsorized": stats.studentized_winsorized_rows,
            "sn_trimmed": stats.sn_trimmed_rows,
        }[name]
        fn = lambda x: kernel(x, tau, mu)
    elif name in ("onedep_block", "block_T"):
        if n is None:
            raise InvalidSpec(f"{name} needs the path length n")
        m = int(p.get("aggregate_m") or 1)
        n_eff = n // m
        alpha = p.get("alpha", 0.5)
        if name == "onedep_block":
            scheme = blocks.one_dep_scheme(n_eff, alpha)
            fn = _with_aggregation(lambda x: blocks.onedep_stat_rows(x, scheme), m)
        else:
            build = blocks.mixing_scheme if p.get("scheme", "gmc") == "mixing" else blocks.gmc_scheme
            scheme = build(n_eff, alpha)
            fn = _with_aggregation(lambda x: blocks.block_T_rows(x, scheme), m)
        p["block_scheme"] = scheme
    else:
        raise InvalidSpec(f"unknown statistic {name!r}")
    return Statistic(name, fn, tuple(sorted((k, v) for k, v in p.items() if k != "block_scheme")))


def scheme_of(stat: Statistic, n: int) -> Optional[blocks.BlockScheme]:
    """Rebuild the block scheme a block statistic uses, for reporting."""
    p = dict(stat.params)
    if stat.name not in ("onedep_block", "block_T"):
        return None
    n_eff = n // int(p.get("aggregate_m") or 1)
    alpha = p.get("alpha", 0.5)
    if stat.name == "onedep_block":
        return blocks.one_dep_scheme(n_eff, alpha)
    build = blocks.mixing_scheme if p.get("scheme", "gmc") == "mixing" else blocks.gmc_scheme
    return build(n_eff, alpha)


# ---------------------------------------------------------------------------
# intervals and estimates

def wilson_interval(hits: int, reps: int, conf: float = 0.99):
    """Wilson score interval for a binomial proportion."""
    if reps < 1 or not 0 <= hits <= reps:
        raise InvalidSpec(f"need 0 <= hits <= reps and reps >= 1, got {hits}/{reps}")
    if not 0 < conf < 1:
        raise InvalidSpec(f"conf must lie in (0, 1), got {conf}")
    z = normal_quantile((1 + conf) / 2)
    p = hits / reps
    z2n = z * z / reps
    centre = (p + z2n / 2) / (1 + z2n)
    half = z / (1 + z2n) * math.sqrt(p * (1 - p) / reps + z2n / (4 * reps))
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == reps else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class TailEstimate:
    x: float
    hits: int
    reps: int
    p_hat: float
    wilson_lo: float
    wilson_hi: float
    degenerate: int = 0


def default_batch_size(n: int) -> int:
    return max(1, min(8192, BATCH_ELEMENTS // max(1, n)))


def _batches(reps: int, batch_size: int):
    return [(b, min(batch_size, reps - b * batch_size)) for b in range(-(-reps // batch_size))]


def _run_batches(task, reps, batch_size, workers, progress):
    plan = _batches(reps, batch_size)
    done = 0
    total = None
    if workers <= 1:
        results = map(task, plan)
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(task, plan)
    try:
        for res in results:
            total = res if total is None else [a + b for a, b in zip(total, res)]
            done += 1
            if progress is not None:
                progress(done, len(plan))
    finally:
        if workers > 1:
            pool.shutdown()
    return total


def tail_hits(values: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Count values strictly above each threshold; NaNs never count."""
    v = np.sort(values[~np.isnan(values)])
    return v.size - np.searchsorted(v, xs, side="right")


def estimate_tail(spec: ProcessSpec, stat: Statistic, xs: Sequence[float], reps: int, seed: int,
                  n: int, workers: int = 1, conf: float = 0.99,
                  batch_size: Optional[int] = None, progress=None) -> list:
    """Estimate ``P(stat > x)`` on a grid of thresholds from one set of replications.

    Each replication produces one statistic value that is compared against
    the whole grid. Replications with an undefined statistic never count as
    hits and are tallied in ``degenerate``; ``p_hat`` is over all ``reps``,
    matching :func:`enumerate_exact`.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 1 or xs.size == 0 or np.any(np.diff(xs) <= 0):
        raise InvalidSpec("x grid must be strictly increasing")
    if reps < 1:
        raise InvalidSpec("reps must be positive")
    batch_size = batch_size or default_batch_size(n)

    def task(item):
        b, size = item
        values = stat(gen_batch(spec, n, size, RngStream(seed, b)))
        return [tail_hits(values, xs), int(np.isnan(values).sum())]

    hits, degenerate = _run_batches(task, reps, batch_size, workers, progress)
    out = []
    for x, h in zip(xs, hits):
        h = int(h)
        lo, hi = wilson_interval(h, reps, conf)
        out.append(TailEstimate(float(x), h, reps, h / reps, lo, hi, int(degenerate)))
    return out


@dataclass(frozen=True)
class RatioPoint:
    x: float
    p_hat: float
    approx_value: float
    ratio: float
    ratio_lo: float
    ratio_hi: float
    in_range: Optional[bool] = None


def ratio_curve(est: Sequence[TailEstimate], approx) -> list:
    """Pointwise ratios ``p_hat / approx`` with Wilson-based bounds.

    ``approx`` holds one value per grid point: floats or objects with
    ``value`` (and optionally ``in_range``).
    """
    if len(est) != len(approx):
        raise GridMismatch(f"{len(est)} estimates vs {len(approx)} approximations")
    out = []
    for e, a in zip(est, approx):
        value = float(getattr(a, "value", a))
        ax = getattr(a, "x", e.x)
        if not math.isclose(ax, e.x, rel_tol=1e-12, abs_tol=1e-12):
            raise GridMismatch(f"grid point {e.x} paired with approximation at {ax}")
        if not value > 0:
            raise InvalidSpec(f"approximation must be positive, got {value} at x={e.x}")
        out.append(RatioPoint(e.x, e.p_hat, value, e.p_hat / value, e.wilson_lo / value,
                              e.wilson_hi / value, getattr(a, "in_range", None)))
    return out


# ---------------------------------------------------------------------------
# exact enumeration

def enumerate_exact(atoms: Sequence[float], probs: Sequence[float], n: int, stat: Statistic, x,
                    chunk: int = 1 << 16):
    """Exact ``P(stat > x)`` for ``n`` i.i.d. draws from a finite law, by full enumeration."""
    atoms = np.asarray(atoms, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    k = atoms.size
    if k == 0 or probs.shape != atoms.shape:
        raise InvalidSpec("atoms and probs must be non-empty and of equal length")
    total = k**n
    if total > MAX_ENUMERATION:
        raise TooLarge(f"{k}^{n} = {total} outcomes exceeds {MAX_ENUMERATION}")
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    acc = np.zeros(xs.size)
    radix = k ** np.arange(n - 1, -1, -1)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        digits = (idx[:, None] // radix[None, :]) % k
        weights = np.prod(probs[digits], axis=1)
        values = stat(atoms[digits])
        above = values[:, None] > xs[None, :]  # NaN compares False
        acc += weights @ above
    return float(acc[0]) if np.ndim(x) == 0 else acc


# ---------------------------------------------------------------------------
# coverage

@dataclass(frozen=True)
class CoverageResult:
    coverage_rate: float
    wilson_lo: float
    wilson_hi: float
    t0: float
    reps: int
    degenerate: int
    misses: tuple
    prefix_coverage: tuple


def coverage_experiment(p: int, n: int, spec, tau, alpha: float, reps: int, seed: int,
                        workers: int = 1, mu=0.0, conf: float = 0.99,
                        batch_size: Optional[int] = None, progress=None) -> CoverageResult:
    """Simultaneous coverage of the winsorized confidence intervals.

    ``spec`` is one ProcessSpec for every coordinate or a list of ``p``;
    ``mu`` shifts coordinate means. ``tau`` is a threshold, or ``None`` for
    the data-driven default. ``prefix_coverage[q-1]`` is the rate at which
    the first ``q`` intervals all cover.
    """
    specs = list(spec) if isinstance(spec, (list, tuple)) else [spec] * p
    if len(specs) != p:
        raise InvalidSpec(f"got {len(specs)} specs for p={p}")
    mus = np.broadcast_to(np.asarray(mu, dtype=np.float64), (p,))
    truth = np.array([m + (iid_moments(s).mean if s.is_iid else 0.0) for s, m in zip(specs, mus)])
    t0 = inference.solve_t0(alpha, p, n)
    batch_size = batch_size or max(1, BATCH_ELEMENTS // (p * n))

    def task(item):
        b, size = item
        data = np.stack(
            [gen_batch(s, n, size, RngStream(seed, b * p + j)) for j, s in enumerate(specs)], axis=1
        )
        data += mus[None, :, None]
        taus = inference.default_tau(data) if tau is None else np.full((size, p), float(tau))
        lower, upper = inference.ci_bounds(data, t0, taus)
        bad = ~(upper > lower)
        covered = (lower < truth) & (truth < upper)
        ok = ~bad.any(axis=1)
        prefix = np.cumprod(covered[ok], axis=1).sum(axis=0)
        miss = (~covered[ok]).sum(axis=0)
        return [prefix, miss, int((~ok).sum())]

    prefix, misses, degenerate = _run_batches(task, reps, batch_size, workers, progress)
    valid = reps - degenerate
    hits = int(prefix[-1])
    lo, hi = wilson_interval(hits, valid, conf)
    return CoverageResult(
        coverage_rate=hits / valid, wilson_lo=lo, wilson_hi=hi, t0=t0, reps=valid,
        degenerate=degenerate, misses=tuple(int(m) for m in misses),
        prefix_coverage=tuple(float(c) / valid for c in prefix),
    )
