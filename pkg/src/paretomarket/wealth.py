"""Wealth distributions: Pareto samples, mean-adjusted variants, staircase
approximations, inequality metrics, and exponent fits from share tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, FitDomainError, ParameterError, RegimeError

__all__ = [
    "WealthVector",
    "StaircaseSpec",
    "ShareTable",
    "pareto_inverse_cdf",
    "sample_pareto",
    "adjust_to_expected_mean",
    "build_staircase",
    "gini",
    "fit_pareto_exponent",
]


@dataclass(frozen=True)
class WealthVector:
    """Per-agent wealth in money units, bounded below by ``c_min``."""

    values: np.ndarray
    c_min: float
    beta: float | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or vals.size < 1:
            raise ParameterError("wealth vector must be a non-empty 1-d array")
        if not self.c_min > 0:
            raise ParameterError("c_min must be positive")
        if not np.all(vals >= self.c_min):
            raise ParameterError("every wealth value must be >= c_min")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def total(self) -> float:
        return math.fsum(self.values.tolist())

    @property
    def mean(self) -> float:
        return self.total / self.n


@dataclass(frozen=True)
class StaircaseSpec:
    """Discrete wealth ladder: ``counts[g]`` agents at level ``levels[g]``."""

    levels: np.ndarray
    counts: np.ndarray
    base: float
    n_levels: int

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "counts", counts)
        if levels.size != self.n_levels or counts.size != self.n_levels:
            raise ParameterError("levels/counts length must equal n_levels")
        if np.any(np.diff(levels) <= 0):
            raise ParameterError("levels must be strictly increasing")
        if np.any(counts < 0):
            raise ParameterError("counts must be non-negative")

    @property
    def n_agents(self) -> int:
        return int(self.counts.sum())

    def expand(self) -> WealthVector:
        """Materialize one agent per count, ordered by level."""
        values = np.repeat(self.levels, self.counts)
        return WealthVector(values=values, c_min=float(self.levels[0]))

    @property
    def mean(self) -> float:
        return float(np.dot(self.levels, self.counts)) / self.n_agents


@dataclass(frozen=True)
class ShareTable:
    """Rows of (top population fraction, wealth share held by that top)."""

    p_top: np.ndarray
    w_share: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_top, dtype=np.float64)
        w = np.asarray(self.w_share, dtype=np.float64)
        object.__setattr__(self, "p_top", p)
        object.__setattr__(self, "w_share", w)
        if p.size != w.size or p.size < 1:
            raise ParameterError("share table rows must be non-empty and aligned")
        if np.any(p <= 0) or np.any(p > 1) or np.any(w <= 0) or np.any(w > 1):
            raise ParameterError("shares must lie in (0, 1]")
        if np.any(np.diff(p) >= 0):
            raise ParameterError("p_top must be strictly decreasing")

    @classmethod
    def from_csv(cls, path) -> "ShareTable":
        """Read a table from CSV with header ``p_top,w_share``."""
        p, w = [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != [
                "p_top",
                "w_share",
            ]:
                raise ParameterError(
                    f"expected CSV header 'p_top,w_share', got {reader.fieldnames!r}"
                )
            for row in reader:
                p.append(float(row["p_top"]))
                w.append(float(row["w_share"]))
        return cls(p_top=np.array(p), w_share=np.array(w))


def pareto_inverse_cdf(u, beta: float, c_min: float):
    """Map uniform u in (0,1] to Pareto wealth c_min * u**(-1/beta)."""
    if not beta > 0 or not c_min > 0:
        raise ParameterError("beta and c_min must be positive")
    u = np.asarray(u, dtype=np.float64)
    if np.any(u <= 0) or np.any(u > 1):
        raise ParameterError("u must lie in (0, 1]")
    return c_min * u ** (-1.0 / beta)


def sample_pareto(beta: float, c_min: float, n: int, seed: int) -> WealthVector:
    """Draw n i.i.d. Pareto(beta) wealth values via the inverse CDF.

    Deterministic given ``seed``; u is uniform on (0,1] so the lower bound
    c_min is attainable and the draw never diverges.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    if not beta > 0 or not c_min > 0:
        raise ParameterError("beta and c_min must be positive")
    rng = np.random.default_rng(seed)
    u = 1.0 - rng.random(n)
    return WealthVector(values=pareto_inverse_cdf(u, beta, c_min), c_min=c_min, beta=beta)


def adjust_to_expected_mean(w: WealthVector, seed: int | None = None) -> WealthVector:
    """Retouch a Pareto sample so its mean hits c_min * beta/(beta-1) exactly.

    If the sample mean falls short, a single seed-chosen agent absorbs the
    whole deficit. If it overshoots, wealth is stripped from the richest
    agent down to c_min, then from the next richest, until the target is
    reached (the last touched agent is only partially reduced).
    """
    if w.beta is None or w.beta <= 1:
        raise RegimeError("adjustment needs beta > 1 so the expected mean is finite")
    n = w.n
    target_mean = w.c_min * w.beta / (w.beta - 1.0)
    target_total = n * target_mean
    values = w.values.copy()
    total = math.fsum(values.tolist())
    deficit = target_total - total
    if deficit == 0.0:
        return WealthVector(values=values, c_min=w.c_min, beta=w.beta)
    if deficit > 0:
        if seed is None:
            raise ParameterError("seed is required when an agent must be raised")
        rng = np.random.default_rng(seed)
        lucky = int(rng.integers(0, n))
        values[lucky] += deficit
    else:
        excess = -deficit
        order = np.argsort(values)[::-1]
        last = None
        for idx in order:
            if excess <= 0:
                break
            room = values[idx] - w.c_min
            take = min(room, excess)
            values[idx] -= take
            excess -= take
            last = idx
        if excess > 1e-9 * target_total:
            raise RegimeError("cannot reach target mean without violating c_min")
        # absorb float residue so the mean is exact to machine precision
        residue = math.fsum(values.tolist()) - target_total
        if last is not None and values[last] - residue >= w.c_min:
            values[last] -= residue
    return WealthVector(values=values, c_min=w.c_min, beta=w.beta)


def build_staircase(
    beta: float, c_min: float, b: float, n_levels: int, n_total: int
) -> StaircaseSpec:
    """Approximate a Pareto(beta) law by a geometric ladder of wealth levels.

    Level g holds the Pareto tail mass of [c_g, c_{g+1}); the top level keeps
    everything beyond it. Counts are floored and the remainder goes to the
    lowest levels, one agent each, so they sum to n_total exactly.
    """
    if not b > 1:
        raise ParameterError("base must exceed 1")
    if n_levels < 1 or n_total < 1:
        raise ParameterError("n_levels and n_total must be >= 1")
    if not beta > 0 or not c_min > 0:
        raise ParameterError("beta and c_min must be positive")
    g = np.arange(n_levels)
    levels = c_min * b**g
    masses = b ** (-beta * g) - b ** (-beta * (g + 1))
    masses[-1] = b ** (-beta * (n_levels - 1))
    counts = np.floor(n_total * masses).astype(np.int64)
    left = n_total - int(counts.sum())
    counts[:left] += 1
    return StaircaseSpec(levels=levels, counts=counts, base=b, n_levels=n_levels)


def gini(values) -> float:
    """Population Gini coefficient sum |x_i - x_j| / (2 n^2 mean)."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ParameterError("values must be a non-empty 1-d array")
    if np.any(x < 0):
        raise ParameterError("values must be non-negative")
    total = float(x.sum())
    if total == 0.0:
        raise DegenerateInputError("Gini is undefined for all-zero values")
    n = x.size
    xs = np.sort(x)
    ranks = np.arange(1, n + 1, dtype=np.float64)
    g = 2.0 * float(np.dot(ranks, xs)) / (n * total) - (n + 1.0) / n
    return min(1.0, max(0.0, g))


def fit_pareto_exponent(shares: ShareTable) -> tuple[float, float]:
    """Fit a Pareto exponent from top-share data.

    A Pareto tail makes wealth share scale with population share as
    w ~ p^(1 - 1/beta), so the OLS slope s of log w against log p gives
    beta = 1/(1-s).

    Returns
    -------
    (beta, error)
        ``error`` is three standard deviations of the slope-derived beta,
        propagated from the OLS slope uncertainty (0 for a perfect fit).
    """
    if shares.p_top.size < 2:
        raise ParameterError("need at least two rows to fit a slope")
    x = np.log(shares.p_top)
    y = np.log(shares.w_share)
    n = x.size
    xbar = x.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    if sxx == 0.0:
        raise DegenerateInputError("zero-variance abscissa; cannot fit a slope")
    s = float(np.sum((x - xbar) * (y - y.mean())) / sxx)
    if s >= 1.0:
        raise FitDomainError(f"slope {s:.6g} >= 1 implies no valid exponent")
    beta = 1.0 / (1.0 - s)
    if n > 2:
        resid = y - (y.mean() + s * (x - xbar))
        var_s = float(np.sum(resid**2)) / (n - 2) / sxx
        sigma_beta = math.sqrt(var_s) / (1.0 - s) ** 2
    else:
        sigma_beta = 0.0
    return beta, 3.0 * sigma_beta
