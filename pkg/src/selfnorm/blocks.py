"""Block constructions for weakly dependent sequences.

Three index partitions are provided:

* ``one_dep_scheme`` - big blocks of length ``l = [n^alpha]`` separated by a
  single index, for one-dependent data. Big-block sums are then
  independent and feed a general self-normalized sum.
* ``mixing_scheme`` - contiguous blocks of length ``[n^alpha] + 1`` for
  geometrically beta-mixing data.
* ``gmc_scheme`` - contiguous blocks of length ``[n^alpha]`` for causal
  processes with geometric moment contraction.

Blocks are stored as 0-based half-open ``(start, stop)`` ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import stats
from .approx import normal_sf
from .errors import DegenerateDenominator, DegenerateScheme, DomainError, InvalidSpec
from .processes import ProcessSpec, RngStream, coupled_endpoints


@dataclass(frozen=True)
class BlockScheme:
    kind: str
    n: int
    alpha: float
    big_len: int
    small_len: int
    k: int
    blocks: tuple

    @property
    def small_indices(self) -> tuple:
        """0-based indices left between consecutive big blocks."""
        return tuple(i for (_, a), (b, _) in zip(self.blocks, self.blocks[1:]) for i in range(a, b))

    @property
    def dropped_indices(self) -> tuple:
        return tuple(range(self.blocks[-1][1], self.n))

    def _reduce_index(self):
        idx = []
        for start, stop in self.blocks:
            idx.extend((start, stop))
        if idx[-1] == self.n:
            idx.pop()
        return np.asarray(idx, dtype=np.intp)

    def block_sums(self, values: np.ndarray) -> np.ndarray:
        """Sum ``values`` over each block along the last axis."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != self.n:
            raise InvalidSpec(f"scheme built for n={self.n}, got length {values.shape[-1]}")
        return np.add.reduceat(values, self._reduce_index(), axis=-1)[..., ::2]


def _floor_pow(n: int, alpha: float) -> int:
    # guard against n**alpha landing just below an integer, e.g. 1000**(1/3)
    return int(math.floor(n**alpha * (1 + 1e-12)))


def _check(n: int, alpha: float) -> None:
    if n < 4:
        raise InvalidSpec(f"block schemes need n >= 4, got {n}")
    if not 0 < alpha < 1:
        raise InvalidSpec(f"alpha must lie in (0, 1), got {alpha}")


def one_dep_scheme(n: int, alpha: float = 0.5) -> BlockScheme:
    """Big blocks of length ``[n^alpha]`` with one index between neighbours.

    ``k = [n / (l + 1)]``; the final gap and any remainder are absorbed by the
    last big block, so every index is used.
    """
    _check(n, alpha)
    l = _floor_pow(n, alpha)
    k = n // (l + 1)
    if k < 2:
        raise DegenerateScheme(f"n={n}, alpha={alpha} gives k={k} blocks")
    blocks = [((j - 1) * (l + 1), j * (l + 1) - 1) for j in range(1, k + 1)]
    blocks[-1] = (blocks[-1][0], n)
    return BlockScheme("one_dep", n, alpha, l, 1, k, tuple(blocks))


def _contiguous(kind: str, n: int, alpha: float, l: int) -> BlockScheme:
    k = n // l
    if k < 2:
        raise DegenerateScheme(f"n={n}, alpha={alpha} gives k={k} blocks")
    return BlockScheme(kind, n, alpha, l, 0, k, tuple((l * j, l * (j + 1)) for j in range(k)))


def mixing_scheme(n: int, alpha: float) -> BlockScheme:
    """Contiguous blocks of length ``[n^alpha] + 1``; indices past ``k l`` are dropped."""
    _check(n, alpha)
    return _contiguous("mixing", n, alpha, _floor_pow(n, alpha) + 1)


def gmc_scheme(n: int, alpha: float = 0.5) -> BlockScheme:
    """Contiguous blocks of length ``[n^alpha]``; indices past ``k m`` are dropped."""
    _check(n, alpha)
    return _contiguous("gmc", n, alpha, _floor_pow(n, alpha))


def alpha_selector(tau_mix: float) -> float:
    """Block exponent for a geometric mixing rate ``exp(-a m^tau)``."""
    if not tau_mix > 0:
        raise InvalidSpec(f"tau_mix must be positive, got {tau_mix}")
    return 0.2 if tau_mix >= 2 else 1.0 / (1.0 + 2.0 * tau_mix)


def one_dep_pair_rows(paths: np.ndarray, scheme: BlockScheme):
    """Big-block sums and root sums of squares, each with the block count as last axis."""
    paths = np.asarray(paths, dtype=np.float64)
    return scheme.block_sums(paths), np.sqrt(scheme.block_sums(paths * paths))


def one_dep_block_stat(s, scheme: BlockScheme) -> stats.PairedSample:
    """The ``k`` pairs ``(X_j, Y_j)`` with ``X_j = sum xi_i`` and ``Y_j^2 = sum xi_i^2`` over big block ``j``."""
    xs, ys = one_dep_pair_rows(stats.as_sample(s), scheme)
    return stats.PairedSample(xs, ys)


def onedep_stat_rows(paths: np.ndarray, scheme: BlockScheme) -> np.ndarray:
    xs, ys = one_dep_pair_rows(paths, scheme)
    return stats.gsn_rows(xs, ys)


def block_T_rows(paths: np.ndarray, scheme: BlockScheme) -> np.ndarray:
    return stats.sn_rows(scheme.block_sums(paths))


def block_normalized_T(s, scheme: BlockScheme) -> float:
    """Self-normalized sum of the block sums, ``sum Y_j / sqrt(sum Y_j^2)``."""
    return stats.self_normalized(scheme.block_sums(stats.as_sample(s)))


def rho_hat(s, center_first: bool = True) -> float:
    """Plug-in lag-one ratio ``sum xi_i xi_{i+1} / sum xi_i^2``."""
    x = stats.as_sample(s, 2)
    if center_first:
        x = x - np.mean(x)
    den = float(np.sum(x * x))
    if den == 0:
        raise DegenerateDenominator("rho_hat: sample has zero sum of squares")
    return float(np.sum(x[:-1] * x[1:])) / den


def corrected_tail_onedep(x, rho: float):
    """Normal tail with the one-dependent variance inflation, ``1 - Phi(x / sqrt(1 + 2 rho))``."""
    if not 1 + 2 * rho > 0:
        raise DomainError(f"need rho > -1/2, got {rho}")
    return normal_sf(np.asarray(x, dtype=np.float64) / math.sqrt(1 + 2 * rho))


def gmc_coupling_delta(proc: ProcessSpec, n_lag: int, r: float, reps: int,
                       stream: RngStream, with_se: bool = False):
    """Monte Carlo estimate of the coupling distance ``||X_i - X_i*||_r`` at lag ``n_lag``.

    With ``with_se`` the delta-method standard error is returned alongside.
    """
    if r < 2:
        raise InvalidSpec(f"r must be >= 2, got {r}")
    x, x_star = coupled_endpoints(proc, n_lag, reps, stream)
    d = np.abs(x - x_star) ** r
    mean = float(np.mean(d))
    delta = mean ** (1.0 / r)
    if not with_se:
        return delta
    if mean == 0:
        return delta, 0.0
    se_mean = float(np.std(d, ddof=1)) / math.sqrt(reps)
    return delta, delta / (r * mean) * se_mean
