"""Mean-field stationary solutions.

Per-agent holdings follow truncated Poisson laws whose parameters are tied
together by a scalar (or per-class) self-consistency condition on the trade
success rate. This module provides the stable primitives (normalizers,
saturation probabilities), the closed-form large-N thresholds, and two
independent fixed-point solvers that are cross-checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaincc, gammaln, logsumexp

from .errors import (
    DegenerateInputError,
    EnumerationCapError,
    ParameterError,
    RegimeError,
    SolverError,
)
from .market import GoodsSpec, quantize_wealth
from .wealth import StaircaseSpec, WealthVector

__all__ = [
    "ClassThresholds",
    "SelfConsistentSolution",
    "truncated_poisson_marginal",
    "truncated_poisson_mean",
    "mode_z",
    "closed_form_c1_ps",
    "recurrence_ck",
    "solve_single_class",
    "solve_multi_class_fixed_point",
    "threshold_probability",
]

_SERIES_RTOL = 1e-18


def _series_log_norm(lam: float, m: np.ndarray) -> np.ndarray:
    """log sum_{j<=m} lam^j/j! via the descending factorial series.

    Writes the sum as (lam^m/m!) * T with T = sum_i m!/((m-i)! lam^i);
    only used deep in the saturated regime (m well below lam), where T
    converges geometrically. Exact finite sum if the cutoff never fires.
    """
    mf = m.astype(np.float64)
    total = np.ones_like(mf)
    term = np.ones_like(mf)
    i = 1.0
    while True:
        term = term * np.maximum(mf - (i - 1.0), 0.0) / lam
        total += term
        if not np.any(term > _SERIES_RTOL * total):
            break
        i += 1.0
    return mf * np.log(lam) - gammaln(mf + 1.0) + np.log(total)


def _log_trunc_norm(lam: float, m) -> np.ndarray:
    """log of the truncated Poisson normalizer S_m = sum_{j<=m} lam^j/j!.

    Uses the regularized upper incomplete gamma where it has support and
    falls back to the saturated-regime series where it underflows.
    """
    if lam <= 0:
        raise ParameterError("lambda must be positive")
    m = np.atleast_1d(np.asarray(m, dtype=np.int64))
    if np.any(m < 0):
        raise ParameterError("budget caps must be non-negative")
    q = gammaincc(m + 1.0, lam)
    out = np.empty(m.shape, dtype=np.float64)
    ok = q > 0
    with np.errstate(divide="ignore"):
        out[ok] = lam + np.log(q[ok])
    if not ok.all():
        out[~ok] = _series_log_norm(lam, m[~ok])
    return out


def _saturation_probability(lam: float, m) -> np.ndarray:
    """P(z = m) under the truncated Poisson on {0..m}."""
    m = np.atleast_1d(np.asarray(m, dtype=np.int64))
    log_pmf_top = m * np.log(lam) - gammaln(m + 1.0)
    return np.exp(log_pmf_top - _log_trunc_norm(lam, m))


def truncated_poisson_marginal(lam: float, m: int) -> np.ndarray:
    """Normalized law P(z) ~ lam^z/z! on {0, ..., m}.

    Computed by a log-space softmax, stable for lam up to 1e6 and beyond.
    Materializes the full m+1 vector, so keep m moderate.
    """
    if lam <= 0:
        raise ParameterError("lambda must be positive")
    m = int(m)
    if m < 0:
        raise ParameterError("m must be non-negative")
    z = np.arange(m + 1, dtype=np.float64)
    logits = z * np.log(lam) - gammaln(z + 1.0)
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


def truncated_poisson_mean(lam: float, m) -> np.ndarray:
    """E[z] = lam * S_{m-1}/S_m for the truncated Poisson on {0..m}.

    The normalizer-ratio form is free of the 1 - P(z=m) cancellation, so
    saturated agents stay exact: a zero cap gives a mean of exactly zero
    even when lam is huge.
    """
    if lam <= 0:
        raise ParameterError("lambda must be positive")
    m = np.atleast_1d(np.asarray(m, dtype=np.int64))
    if np.any(m < 0):
        raise ParameterError("budget caps must be non-negative")
    out = np.zeros(m.shape, dtype=np.float64)
    pos = m > 0
    if np.any(pos):
        out[pos] = lam * np.exp(
            _log_trunc_norm(lam, m[pos] - 1) - _log_trunc_norm(lam, m[pos])
        )
    return out


def mode_z(lam: float, m: int) -> int:
    """Most likely holding: m when cash-limited, else floor(lam)."""
    if lam <= 0:
        raise ParameterError("lambda must be positive")
    if m < 0:
        raise ParameterError("m must be non-negative")
    return int(min(int(m), int(np.floor(lam))))


@dataclass(frozen=True)
class ClassThresholds:
    """Closed-form wealth thresholds c^(k) with the per-class success rates.

    Agents below thresholds[k] are typically cash-limited in class k; the
    rates follow from the budget identity p_k = x * <c> / c^(k).
    """

    thresholds: np.ndarray
    mean_wealth: float
    p_suc: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=np.float64)
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "p_suc", np.asarray(self.p_suc, dtype=np.float64))
        if np.any(t <= 0):
            raise ParameterError("thresholds must be positive")


def closed_form_c1_ps(beta: float, pi_over_c: float) -> tuple[float, float]:
    """Large-N single-class threshold and success rate for Pareto wealth.

    c1 = [beta (1 - Pi/C)]^(1/(1-beta)) in units of the minimum wealth,
    p_suc = (Pi/C) <c> / c1 with <c> = beta/(beta-1). Valid for beta > 1
    and 0 < Pi/C < 1.
    """
    if beta <= 1:
        raise RegimeError("closed forms require beta > 1 (finite mean wealth)")
    if not 0 < pi_over_c < 1:
        raise ParameterError("Pi/C must lie in (0, 1)")
    bracket = beta * (1.0 - pi_over_c)
    c1 = bracket ** (1.0 / (1.0 - beta))
    mean_c = beta / (beta - 1.0)
    return c1, pi_over_c * mean_c / c1


def recurrence_ck(beta: float, pi_over_kc: float, k_classes: int) -> ClassThresholds:
    """Per-class thresholds c^(k), k = 1..K, by closed form and recurrence.

    The closed form c^(k) = [beta^k - ((beta - beta^(k+1))/(1-beta)) x]^(1/(1-beta))
    (x = Pi/(KC)) and the one-step recurrence
    c^(k) = [beta (c^(k-1))^(1-beta) - beta x]^(1/(1-beta)) are both evaluated
    and must agree to 1e-12 relative. Each class gets
    p_suc_k = x <c> / c^(k).
    """
    if beta <= 1:
        raise RegimeError("closed forms require beta > 1 (finite mean wealth)")
    if pi_over_kc <= 0:
        raise ParameterError("Pi/(KC) must be positive")
    if k_classes < 1:
        raise ParameterError("need at least one class")
    x = pi_over_kc
    expo = 1.0 / (1.0 - beta)
    ks = np.arange(1, k_classes + 1, dtype=np.float64)
    brackets = beta**ks - (beta - beta ** (ks + 1)) / (1.0 - beta) * x
    if np.any(brackets <= 0):
        bad = int(ks[brackets <= 0][0])
        raise RegimeError(
            f"threshold formula leaves its validity domain at class {bad} "
            f"(bracket <= 0); Pi/(KC)={x} is too large for beta={beta}"
        )
    closed = brackets**expo

    stepped = np.empty(k_classes)
    prev = 1.0  # c^(0): the minimum wealth
    for i in range(k_classes):
        b = beta * prev ** (1.0 - beta) - beta * x
        if b <= 0:
            raise RegimeError(f"recurrence leaves its validity domain at class {i + 1}")
        prev = b**expo
        stepped[i] = prev
    rel = np.max(np.abs(stepped - closed) / closed)
    if rel > 1e-12:
        raise SolverError(f"closed form and recurrence disagree (rel {rel:.3e})")

    mean_c = beta / (beta - 1.0)
    return ClassThresholds(thresholds=closed, mean_wealth=mean_c, p_suc=x * mean_c / closed)


@dataclass(frozen=True)
class SelfConsistentSolution:
    """Converged (or best-effort) mean-field fixed point.

    lam[k] = M_k / (N p_suc_k). ``log_normalizers`` holds log Z(c_g) per
    distinct wealth level (the constrained product-Poisson partition
    function of that level). ``residual`` is max_k |goal_k(p) - p_k| from a
    final independent re-evaluation. ``frozen`` marks the no-liquidity
    branch where the only fixed point is p = 0 (then p_suc is all zeros and
    lam is infinite).
    """

    k_classes: int
    lam: np.ndarray
    p_suc: np.ndarray
    log_normalizers: np.ndarray
    level_caps: np.ndarray
    level_counts: np.ndarray
    residual: float
    iterations: int
    converged: bool
    frozen: bool
    method: str
    prices: np.ndarray
    n_agents: int
    m_objects: np.ndarray
    quantum: float | None = None
    prices_quanta: np.ndarray | None = None

    def __post_init__(self):
        if not self.frozen:
            if np.any(self.p_suc <= 0) or np.any(self.p_suc > 1):
                raise SolverError("success rates must lie in (0, 1]")
            if np.any(self.lam <= 0):
                raise SolverError("lambda must be positive")

    @property
    def threshold_wealth(self) -> np.ndarray:
        """c^(k) = lam_k * pi_k, money units."""
        return self.lam * self.prices

    def to_json_dict(self) -> dict:
        return {
            "k_classes": self.k_classes,
            "lambda": self.lam.tolist(),
            "p_suc": self.p_suc.tolist(),
            "threshold_wealth": [None if not np.isfinite(v) else v for v in self.threshold_wealth],
            "log_normalizers": self.log_normalizers.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "frozen": self.frozen,
            "method": self.method,
            "prices": self.prices.tolist(),
            "n_agents": self.n_agents,
            "m_objects": self.m_objects.tolist(),
        }


def _wealth_levels(wealth) -> tuple[np.ndarray, np.ndarray]:
    """Collapse a wealth input to (distinct values, counts)."""
    if isinstance(wealth, StaircaseSpec):
        return np.asarray(wealth.levels, dtype=np.float64), np.asarray(wealth.counts)
    if isinstance(wealth, WealthVector):
        values = wealth.values
    else:
        values = np.asarray(wealth, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ParameterError("wealth must be a non-empty 1-d array")
    levels, counts = np.unique(values, return_counts=True)
    return levels, counts


def solve_single_class(
    wealth,
    m_objects: int,
    n_agents: int | None = None,
    price: float = 1.0,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> SelfConsistentSolution:
    """Scalar fixed point p = 1 - <P(z_i = m_i)> for a one-class market.

    ``wealth`` may be a WealthVector, a StaircaseSpec, or a plain array of
    wealths (money); thresholds are m_i = floor(c_i / price). Tries damped
    fixed-point iteration first and falls back to bracketed root finding,
    which is guaranteed once a sign change is located. The no-liquidity
    branch (no root with p > 0, e.g. all m_i = 0) is reported via
    ``frozen`` rather than raised.
    """
    if price <= 0:
        raise ParameterError("price must be positive")
    if m_objects < 1:
        raise ParameterError("need at least one object")
    levels, counts = _wealth_levels(wealth)
    n = int(counts.sum())
    if n_agents is not None and n_agents != n:
        raise ParameterError(f"n_agents={n_agents} does not match wealth size {n}")
    m_levels = np.floor(levels / price + 1e-9).astype(np.int64)
    if np.any(m_levels < 0):
        raise ParameterError("negative budget caps")
    weights = counts / n
    m_eff = float(m_objects)

    def goal(p: float) -> float:
        lam = m_eff / (n * p)
        return 1.0 - float(weights @ _saturation_probability(lam, m_levels))

    evals = 0

    def residual_at(p: float) -> float:
        return abs(goal(p) - p)

    prices_arr = np.array([price], dtype=np.float64)

    def frozen_solution(iterations: int) -> SelfConsistentSolution:
        return SelfConsistentSolution(
            k_classes=1,
            lam=np.array([np.inf]),
            p_suc=np.array([0.0]),
            log_normalizers=np.zeros(len(m_levels)),
            level_caps=m_levels,
            level_counts=counts,
            residual=0.0,
            iterations=iterations,
            converged=True,
            frozen=True,
            method="frozen",
            prices=prices_arr,
            n_agents=n,
            m_objects=np.array([m_objects], dtype=np.int64),
        )

    if int(m_levels.max()) == 0:
        return frozen_solution(0)

    # damped fixed-point iteration
    p = 0.5
    method = "damped"
    it = 0
    for it in range(1, max_iter + 1):
        p_new = 0.5 * p + 0.5 * goal(p)
        moved = abs(p_new - p)
        p = min(max(p_new, 1e-300), 1.0)
        if moved < 0.1 * tol or p <= 1e-300:
            break

    if residual_at(p) >= tol:
        # bracketed fallback: H(1) < 0 always; search a positive H downward
        def h(q: float) -> float:
            nonlocal evals
            evals += 1
            return goal(q) - q

        p_lo = 1e-3
        while p_lo > 1e-280 and h(p_lo) <= 0:
            p_lo *= 1e-2
        if h(p_lo) <= 0:
            return frozen_solution(it + evals)
        p = brentq(h, p_lo, 1.0, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=300)
        method = "bisection"
        it += evals

    lam = m_eff / (n * p)
    resid = residual_at(p)
    return SelfConsistentSolution(
        k_classes=1,
        lam=np.array([lam]),
        p_suc=np.array([p]),
        log_normalizers=_log_trunc_norm(lam, m_levels),
        level_caps=m_levels,
        level_counts=counts,
        residual=resid,
        iterations=it,
        converged=resid < tol,
        frozen=False,
        method=method,
        prices=prices_arr,
        n_agents=n,
        m_objects=np.array([m_objects], dtype=np.int64),
    )


def _lattice_stats(lams, prices_q, budgets_q, node_cap):
    """Constrained product-Poisson sums per budget.

    For each budget W (in quanta) computes log S = log sum over z-vectors
    with dot(z, prices_q) <= W of prod_k lam_k^{z_k}/z_k!, and
    log B[:, j] restricted to vectors whose remaining cash is below
    prices_q[j] (the class-j saturation boundary). The cheapest class is
    collapsed through a precomputed normalizer table; remaining classes are
    enumerated depth-first, most expensive first, with the second dimension
    vectorized.
    """
    lams = np.asarray(lams, dtype=np.float64)
    k = len(lams)
    p0 = int(prices_q[0])
    budgets_q = np.asarray(budgets_q, dtype=np.int64)
    max_m0 = int(budgets_q.max()) // p0
    table = _log_trunc_norm(lams[0], np.arange(max_m0 + 1))
    log_lam = np.log(lams)

    n_b = len(budgets_q)
    log_s = np.empty(n_b)
    log_b = np.empty((n_b, k))
    nodes = 0

    for gi in range(n_b):
        w = int(budgets_q[gi])
        parts_s: list[np.ndarray] = []
        parts_b: list[list[np.ndarray]] = [[] for _ in range(k)]

        def leaf(r_vec: np.ndarray, logw_vec: np.ndarray) -> None:
            m0 = r_vec // p0
            base = table[m0]
            parts_s.append(logw_vec + base)
            for j in range(k):
                pj = int(prices_q[j])
                t = np.where(r_vec >= pj, (r_vec - pj) // p0 + 1, 0)
                prev = np.where(t > 0, table[np.maximum(t - 1, 0)], -np.inf)
                with np.errstate(divide="ignore", invalid="ignore"):
                    tail = base + np.log1p(-np.exp(prev - base))
                tail = np.where(t > 0, np.nan_to_num(tail, nan=-np.inf, neginf=-np.inf), base)
                parts_b[j].append(logw_vec + tail)

        if k == 1:
            leaf(np.array([w], dtype=np.int64), np.zeros(1))
        else:

            def descend(ci: int, r: int, logw: float) -> None:
                nonlocal nodes
                pc = int(prices_q[ci])
                z = np.arange(r // pc + 1, dtype=np.int64)
                nodes += len(z)
                if nodes > node_cap:
                    raise EnumerationCapError(
                        f"constrained lattice exceeds {node_cap} nodes; "
                        "reduce budgets or classes"
                    )
                lw = logw + z * log_lam[ci] - gammaln(z + 1.0)
                if ci == 1:
                    leaf(r - z * pc, lw)
                else:
                    for zi in range(len(z)):
                        descend(ci - 1, r - zi * pc, float(lw[zi]))

            descend(k - 1, w, 0.0)

        log_s[gi] = logsumexp(np.concatenate(parts_s))
        for j in range(k):
            log_b[gi, j] = logsumexp(np.concatenate(parts_b[j]))
    return log_s, log_b


def solve_multi_class_fixed_point(
    staircase: StaircaseSpec,
    goods: GoodsSpec,
    tol: float = 1e-10,
    max_iter: int = 500,
    node_cap: int = 20_000_000,
) -> SelfConsistentSolution:
    """Per-class success rates by adaptive step-halving.

    Walks each p_k with step dp_k (init 0.5 and 0.1): recompute the exact
    per-level normalizers, form the target rates from the saturation sums,
    flip and halve any step moving away from its target, clamp p to (0, 1],
    and stop when every |dp_k| is below tolerance (normalizers are exact
    each sweep, so there is no drift to monitor). Hitting the iteration cap
    returns the best-residual iterate with ``converged=False``.
    """
    if tol <= 0:
        raise ParameterError("tolerance must be positive")
    k = goods.k_classes
    levels = np.asarray(staircase.levels, dtype=np.float64)
    counts = np.asarray(staircase.counts, dtype=np.int64)
    n = int(counts.sum())
    budgets = quantize_wealth(levels, goods.quantum)
    weights = counts / n
    m_counts = goods.counts.astype(np.float64)
    prices_money = goods.prices_money

    if int(budgets.max()) < int(goods.prices[0]):
        return SelfConsistentSolution(
            k_classes=k,
            lam=np.full(k, np.inf),
            p_suc=np.zeros(k),
            log_normalizers=np.zeros(len(budgets)),
            level_caps=budgets,
            level_counts=counts,
            residual=0.0,
            iterations=0,
            converged=True,
            frozen=True,
            method="frozen",
            prices=prices_money,
            n_agents=n,
            m_objects=goods.counts.copy(),
            quantum=goods.quantum,
            prices_quanta=goods.prices.copy(),
        )

    def evaluate(p: np.ndarray):
        lam = m_counts / (n * p)
        log_s, log_b = _lattice_stats(lam, goods.prices, budgets, node_cap)
        sat = np.exp(log_b - log_s[:, None])
        return 1.0 - weights @ sat, lam, log_s

    p = np.full(k, 0.5)
    dp = np.full(k, 0.1)
    best_p = p.copy()
    best_resid = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        goal, lam, log_s = evaluate(p)
        resid = float(np.max(np.abs(goal - p)))
        if resid < best_resid:
            best_resid = resid
            best_p = p.copy()
        if np.all(np.abs(dp) < tol):
            break
        flip = (goal - p) * dp < 0
        dp[flip] *= -0.5
        p = p + dp
        low = p <= 0
        p[low] = np.abs(dp[low])
        dp[low] *= 0.5
        np.minimum(p, 1.0, out=p)

    goal, lam, log_s = evaluate(best_p)
    resid = float(np.max(np.abs(goal - best_p)))
    return SelfConsistentSolution(
        k_classes=k,
        lam=lam,
        p_suc=best_p,
        log_normalizers=log_s,
        level_caps=budgets,
        level_counts=counts,
        residual=resid,
        iterations=it,
        converged=bool(np.all(np.abs(dp) < tol) and resid < np.sqrt(tol)),
        frozen=False,
        method="step-halving",
        prices=prices_money,
        n_agents=n,
        m_objects=goods.counts.copy(),
        quantum=goods.quantum,
        prices_quanta=goods.prices.copy(),
    )


def threshold_probability(caps, solution: SelfConsistentSolution) -> np.ndarray:
    """Per-agent probability of sitting on a saturation boundary.

    Single-class solutions take integer holding caps m_i and return
    P(z_i = m_i). Multi-class solutions take wealth budgets in money and
    return an (n, K) array of P(cash_i < pi_k) under the constrained
    product-Poisson law of the converged solution.
    """
    if solution.frozen:
        caps = np.atleast_1d(np.asarray(caps))
        shape = (len(caps),) if solution.k_classes == 1 else (len(caps), solution.k_classes)
        return np.ones(shape)
    if solution.k_classes == 1:
        m = np.atleast_1d(np.asarray(caps, dtype=np.int64))
        return _saturation_probability(float(solution.lam[0]), m)
    if solution.quantum is None or solution.prices_quanta is None:
        raise SolverError("multi-class solution lacks its price lattice")
    money = np.atleast_1d(np.asarray(caps, dtype=np.float64))
    budgets = quantize_wealth(money, solution.quantum)
    uniq, inverse = np.unique(budgets, return_inverse=True)
    log_s, log_b = _lattice_stats(
        solution.lam, solution.prices_quanta, uniq, node_cap=20_000_000
    )
    sat = np.exp(log_b - log_s[:, None])
    return sat[inverse]
