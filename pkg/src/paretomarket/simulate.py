"""Monte Carlo driver: equilibration, stationarity detection, observable
accumulation, and beta sweeps over economy realizations."""

from __future__ import annotations

import concurrent.futures
import traceback
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import ConfigurationError, EnumerationCapError, ParameterError
from .market import (
    GoodsSpec,
    MarketState,
    build_goods,
    economy_digest,
    initial_allocation,
    quantize_wealth,
    trade_step,
)
from .oracle import enumerate_feasible_allocations
from .wealth import (
    StaircaseSpec,
    WealthVector,
    adjust_to_expected_mean,
    build_staircase,
    gini,
    sample_pareto,
)

__all__ = [
    "SimConfig",
    "RealizationResult",
    "Observables",
    "EconomyTemplate",
    "SweepRow",
    "SweepResult",
    "run_simulation",
    "detect_stationarity",
    "aggregate_liquidity",
    "measure_visitation",
    "sweep_beta",
]

_CHUNK_CAP = 1 << 22


@dataclass(frozen=True)
class SimConfig:
    """Run lengths, seeding, and measurement knobs for one economy.

    ``None`` budgets fall back to the defaults 100*M equilibration and
    400*M measurement attempts. ``measurement_interval`` is the window size
    (in attempts) for stationarity traces. ``rule`` is the meeting size n;
    None means rule #N, the only rule with a compiled fast path.
    """

    total_steps: int | None = None
    equilibration_steps: int | None = None
    auto_equilibrate: bool = False
    measurement_interval: int | None = None
    realizations: int = 1
    seed: int = 0
    rule: int | None = None
    jobs: int = 1
    histogram_agents: tuple = ()
    histogram_bins: int = 256

    def resolve(self, m_total: int) -> tuple[int, int]:
        """Return (equilibration, measurement) step counts."""
        equil = 100 * m_total if self.equilibration_steps is None else self.equilibration_steps
        total = equil + 400 * m_total if self.total_steps is None else self.total_steps
        if not total > equil >= 0:
            raise ConfigurationError("need total_steps > equilibration_steps >= 0")
        return equil, total - equil


@dataclass
class RealizationResult:
    """Observables from a single dynamics realization."""

    realization: int
    attempts: np.ndarray
    successes: np.ndarray
    p_suc: np.ndarray
    mean_holdings: np.ndarray
    mean_cash: np.ndarray
    gini_cash: float
    stationary: bool | None
    burn_in_steps: int
    equil_trace: tuple[np.ndarray, np.ndarray]
    histograms: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class Observables:
    """Aggregated output of :func:`run_simulation`."""

    k_classes: int
    attempts: np.ndarray
    successes: np.ndarray
    p_suc: np.ndarray
    p_suc_mean: np.ndarray
    p_suc_min: np.ndarray
    p_suc_max: np.ndarray
    p_suc_std: np.ndarray
    p_bar: float
    mean_holdings: np.ndarray
    mean_cash: np.ndarray
    gini_wealth: float
    gini_cash: float
    stationary: bool | None
    equilibration_steps: int
    measurement_steps: int
    economy: str
    seed: int
    backend: str
    realizations: list[RealizationResult] = field(default_factory=list)
    histograms: dict[int, np.ndarray] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "k_classes": self.k_classes,
            "attempts": self.attempts.tolist(),
            "successes": self.successes.tolist(),
            "p_suc": self.p_suc.tolist(),
            "p_suc_mean": self.p_suc_mean.tolist(),
            "p_suc_min": self.p_suc_min.tolist(),
            "p_suc_max": self.p_suc_max.tolist(),
            "p_suc_std": self.p_suc_std.tolist(),
            "p_bar": self.p_bar,
            "gini_wealth": self.gini_wealth,
            "gini_cash": self.gini_cash,
            "stationary": self.stationary,
            "equilibration_steps": self.equilibration_steps,
            "measurement_steps": self.measurement_steps,
            "n_realizations": len(self.realizations),
            "economy": self.economy,
            "seed": self.seed,
            "backend": self.backend,
        }


def detect_stationarity(window_successes, window_attempts, n_sigma: float = 3.0):
    """Decide whether a windowed p_suc trace has flattened out.

    Consecutive windows whose per-class rates differ by less than ``n_sigma``
    combined standard errors count as stable. Returns ``(stationary,
    burn_in_window)``: the earliest window from which every later consecutive
    pair is stable (needs at least two stable trailing pairs).
    """
    s = np.atleast_2d(np.asarray(window_successes, dtype=np.float64))
    a = np.atleast_2d(np.asarray(window_attempts, dtype=np.float64))
    if s.shape != a.shape:
        raise ParameterError("successes and attempts must have the same shape")
    w = s.shape[0]
    if w < 4:
        raise ParameterError("need at least 4 windows")
    smooth = (s + 0.5) / (a + 1.0)
    rate = np.divide(s, a, out=np.zeros_like(s), where=a > 0)
    se = np.sqrt(smooth * (1.0 - smooth) / np.maximum(a, 1.0))
    diff = np.abs(np.diff(rate, axis=0))
    tol = n_sigma * np.sqrt(se[:-1] ** 2 + se[1:] ** 2)
    ok = (diff <= tol) | (a[:-1] == 0) | (a[1:] == 0)
    pair_ok = ok.all(axis=1)
    burn_in = w
    for i in range(w - 1, -1, -1):
        if i < w - 1 and not pair_ok[i]:
            break
        burn_in = i
    stationary = burn_in <= w - 3
    return stationary, burn_in


def aggregate_liquidity(p_suc, goods: GoodsSpec) -> float:
    """Value-weighted success rate: (1/Pi) sum_k M_k pi_k p_suc_k."""
    p = np.asarray(p_suc, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise ParameterError("per-class rates must lie in [0, 1]")
    weights = goods.counts * goods.prices
    return float(np.dot(weights, p) / goods.total_value)


def _python_chunk(state: MarketState, rng, n_steps, attempts, successes, acc_hold, acc_cash, rule):
    """Uncompiled reference path for rules other than #N (tiny runs only)."""
    for _ in range(n_steps):
        out = trade_step(state, rule, rng)
        if out.class_index is not None:
            attempts[out.class_index] += 1
            if out.success:
                successes[out.class_index] += 1
        acc_hold += state.holdings
        acc_cash += state.cash


def _run_realization(
    wealth: WealthVector,
    goods: GoodsSpec,
    config: SimConfig,
    equil: int,
    meas: int,
    r_index: int,
) -> RealizationResult:
    rng = np.random.default_rng([config.seed, r_index])
    state = initial_allocation(wealth, goods, rng)
    n = state.n_agents
    k = goods.k_classes
    m = goods.m_total
    use_kernel = config.rule is None or config.rule == n
    window = config.measurement_interval or max(1, equil // 16 if equil else meas // 16)

    hist_slot = np.full(n, -1, dtype=np.int32)
    for i, agent in enumerate(config.histogram_agents):
        hist_slot[agent] = i
    hist = np.zeros((len(config.histogram_agents), config.histogram_bins))
    hist_unit = int(goods.prices[0])

    attempts = np.zeros(k, dtype=np.int64)
    successes = np.zeros(k, dtype=np.int64)
    acc_hold = np.zeros((n, k))
    last_hold = np.zeros((n, k), dtype=np.int64)
    acc_cash = np.zeros(n)
    last_cash = np.zeros(n, dtype=np.int64)

    def kernel_steps(n_steps: int, t0: int) -> int:
        done = 0
        while done < n_steps:
            size = min(_CHUNK_CAP, n_steps - done)
            od = rng.integers(0, m, size=size, dtype=np.uint32)
            bd = rng.integers(0, n - 1, size=size, dtype=np.uint32)
            _kernels.trade_chunk(
                state.obj_class, goods.prices, state.owner, state.cash, state.holdings,
                od, bd, attempts, successes,
                acc_hold, last_hold, acc_cash, last_cash,
                hist_slot, hist, hist_unit, t0 + done,
            )
            done += size
        state.step += n_steps
        return t0 + n_steps

    def python_steps(n_steps: int, t0: int) -> int:
        _python_chunk(state, rng, n_steps, attempts, successes, acc_hold, acc_cash, config.rule)
        return t0 + n_steps

    advance = kernel_steps if use_kernel else python_steps

    # equilibration with a windowed success trace
    trace_s, trace_a = [], []
    t = 0
    stationary: bool | None = None
    burn_in_steps = equil
    prev_s = successes.copy()
    prev_a = attempts.copy()
    while t < equil:
        step_n = min(window, equil - t)
        t = advance(step_n, t)
        trace_s.append(successes - prev_s)
        trace_a.append(attempts - prev_a)
        prev_s = successes.copy()
        prev_a = attempts.copy()
        if config.auto_equilibrate and len(trace_s) >= 4:
            flat, burn_w = detect_stationarity(np.array(trace_s), np.array(trace_a))
            if flat:
                stationary = True
                burn_in_steps = t
                break
    if stationary is None and len(trace_s) >= 4:
        stationary, burn_w = detect_stationarity(np.array(trace_s), np.array(trace_a))
        burn_in_steps = min(equil, burn_w * window)
    equil_trace = (np.array(trace_s, dtype=np.int64), np.array(trace_a, dtype=np.int64))

    # measurement from a clean slate
    attempts[:] = 0
    successes[:] = 0
    acc_hold[:] = 0.0
    acc_cash[:] = 0.0
    t0 = t
    last_hold[:] = t0
    last_cash[:] = t0
    hist[:] = 0.0
    t_end = advance(meas, t0)

    if use_kernel:
        dt_c = (t_end - last_cash).astype(np.float64)
        acc_cash += dt_c * state.cash.astype(np.float64)
        acc_hold += (t_end - last_hold).astype(np.float64) * state.holdings.astype(np.float64)
        for i, agent in enumerate(config.histogram_agents):
            b = min(int(state.cash[agent]) // hist_unit, config.histogram_bins - 1)
            hist[i, b] += t_end - last_cash[agent]
    mean_holdings = acc_hold / meas
    mean_cash = acc_cash / meas * goods.quantum  # back to money units
    histograms = {
        int(agent): hist[i] / meas for i, agent in enumerate(config.histogram_agents)
    }

    p_suc = np.divide(
        successes, attempts, out=np.zeros(k, dtype=np.float64), where=attempts > 0
    )
    return RealizationResult(
        realization=r_index,
        attempts=attempts.copy(),
        successes=successes.copy(),
        p_suc=p_suc,
        mean_holdings=mean_holdings,
        mean_cash=mean_cash,
        gini_cash=gini(mean_cash) if mean_cash.sum() > 0 else 0.0,
        stationary=stationary,
        burn_in_steps=burn_in_steps,
        equil_trace=equil_trace,
        histograms=histograms,
    )


def run_simulation(wealth: WealthVector, goods: GoodsSpec, config: SimConfig) -> Observables:
    """Equilibrate, then measure time-averaged observables.

    Runs ``config.realizations`` independent dynamics histories of the same
    economy (distinct allocations and trade sequences, seeds derived from
    ``(seed, realization)``) and aggregates them; the spread across
    realizations feeds the min/max envelopes and standard errors.
    """
    equil, meas = config.resolve(goods.m_total)
    if config.realizations < 1:
        raise ConfigurationError("realizations must be >= 1")
    indices = range(config.realizations)
    if config.jobs > 1 and config.realizations > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.jobs) as pool:
            futures = [
                pool.submit(_run_realization, wealth, goods, config, equil, meas, r)
                for r in indices
            ]
            results = [f.result() for f in futures]
    else:
        results = [_run_realization(wealth, goods, config, equil, meas, r) for r in indices]

    k = goods.k_classes
    attempts = np.sum([r.attempts for r in results], axis=0)
    successes = np.sum([r.successes for r in results], axis=0)
    p_pool = np.divide(
        successes, attempts, out=np.zeros(k, dtype=np.float64), where=attempts > 0
    )
    per_real = np.array([r.p_suc for r in results])
    mean_holdings = np.mean([r.mean_holdings for r in results], axis=0)
    mean_cash = np.mean([r.mean_cash for r in results], axis=0)
    wq = wealth.values
    flags = [r.stationary for r in results]
    if any(f is None for f in flags):
        stationary: bool | None = None
    else:
        stationary = all(flags)
    hist_pool: dict[int, np.ndarray] = {}
    for agent in config.histogram_agents:
        stack = [r.histograms[agent] for r in results]
        hist_pool[int(agent)] = np.mean(stack, axis=0)

    digest = economy_digest(quantize_wealth(wealth.values, goods.quantum), goods)
    return Observables(
        k_classes=k,
        attempts=attempts,
        successes=successes,
        p_suc=p_pool,
        p_suc_mean=per_real.mean(axis=0),
        p_suc_min=per_real.min(axis=0),
        p_suc_max=per_real.max(axis=0),
        p_suc_std=per_real.std(axis=0, ddof=1) if len(results) > 1 else np.zeros(k),
        p_bar=aggregate_liquidity(p_pool, goods),
        mean_holdings=mean_holdings,
        mean_cash=mean_cash,
        gini_wealth=gini(wq),
        gini_cash=gini(mean_cash) if mean_cash.sum() > 0 else 0.0,
        stationary=stationary,
        equilibration_steps=equil,
        measurement_steps=meas,
        economy=digest,
        seed=config.seed,
        backend=_kernels.BACKEND,
        realizations=results,
        histograms=hist_pool,
    )


def measure_visitation(
    wealth: WealthVector,
    goods: GoodsSpec,
    steps: int,
    seed: int,
    equilibration: int = 0,
    key_cap: int = 1 << 24,
):
    """Count how often the dynamics visits each feasible allocation.

    Only for enumerable economies: allocations are keyed by
    sum(owner[j] * N**j), which must stay below ``key_cap``. Returns
    ``(states, visits, attempts, successes)`` with states in enumeration
    order; under the uniform stationary law visits/steps approaches 1/S.
    """
    n = wealth.n
    m = goods.m_total
    if n**m > key_cap:
        raise EnumerationCapError(f"key space {n}^{m} exceeds cap {key_cap}")
    states = enumerate_feasible_allocations(wealth, goods)
    powers = np.array([n**j for j in range(m)], dtype=np.int64)
    state_index = np.full(n**m, -1, dtype=np.int32)
    keys = states.astype(np.int64) @ powers
    state_index[keys] = np.arange(states.shape[0], dtype=np.int32)

    rng = np.random.default_rng(seed)
    state = initial_allocation(wealth, goods, rng)
    k = goods.k_classes
    attempts = np.zeros(k, dtype=np.int64)
    successes = np.zeros(k, dtype=np.int64)
    visits = np.zeros(states.shape[0], dtype=np.int64)
    key = int(np.dot(state.owner.astype(np.int64), powers))

    done = -equilibration  # negative: still burning in
    while done < steps:
        if done < 0:
            size = min(_CHUNK_CAP, -done)
        else:
            size = min(_CHUNK_CAP, steps - done)
        od = rng.integers(0, m, size=size, dtype=np.uint32)
        bd = rng.integers(0, n - 1, size=size, dtype=np.uint32)
        if done < 0:
            scratch_v = np.zeros_like(visits)
            scratch_a = np.zeros_like(attempts)
            scratch_s = np.zeros_like(successes)
            key, misses = _kernels.trade_chunk_tracked(
                state.obj_class, goods.prices, state.owner, state.cash, state.holdings,
                od, bd, scratch_a, scratch_s, powers, state_index, scratch_v, key,
            )
        else:
            key, misses = _kernels.trade_chunk_tracked(
                state.obj_class, goods.prices, state.owner, state.cash, state.holdings,
                od, bd, attempts, successes, powers, state_index, visits, key,
            )
        if misses:
            raise EnumerationCapError("dynamics reached a state missing from the enumeration")
        done += size
    state.step += equilibration + steps
    return states, visits, attempts, successes


@dataclass(frozen=True)
class EconomyTemplate:
    """Recipe for building (wealth, goods) pairs across a sweep.

    ``wealth_kind`` is one of pareto, adjusted, staircase. The goods budget
    is pinned by ``pi_over_c`` (the Pi/C target), held fixed across
    realizations and beta values.
    """

    n_agents: int
    k_classes: int = 1
    c_min: float = 1.0
    wealth_kind: str = "adjusted"
    pi_1: float = 0.005
    price_ratio: str = "3/2"
    pi_over_c: float = 1 / 1.2
    staircase_base: float = 1.1
    staircase_levels: int = 64
    beta: float | None = None

    def build(self, beta: float, seed) -> tuple[WealthVector, GoodsSpec]:
        if self.wealth_kind == "pareto":
            w = sample_pareto(beta, self.c_min, self.n_agents, seed)
        elif self.wealth_kind == "adjusted":
            w = sample_pareto(beta, self.c_min, self.n_agents, seed)
            w = adjust_to_expected_mean(w, seed=[seed, 1])
        elif self.wealth_kind == "staircase":
            stair = build_staircase(
                beta, self.c_min, self.staircase_base, self.staircase_levels, self.n_agents
            )
            w = WealthVector(values=stair.expand().values, c_min=self.c_min, beta=beta)
        else:
            raise ConfigurationError(f"unknown wealth kind {self.wealth_kind!r}")
        goods = build_goods(w, self.pi_over_c, self.k_classes, self.pi_1, self.price_ratio)
        return w, goods


@dataclass
class SweepRow:
    beta: float
    realization: int
    status: str
    p_suc: np.ndarray | None = None
    p_bar: float | None = None
    gini_wealth: float | None = None
    gini_cash: float | None = None
    attempts: np.ndarray | None = None
    successes: np.ndarray | None = None
    stationary: bool | None = None
    error: str = ""


@dataclass
class SweepResult:
    rows: list[SweepRow]
    k_classes: int

    def by_beta(self) -> dict[float, dict]:
        """Per-beta aggregates with min/max envelopes across realizations."""
        out: dict[float, dict] = {}
        betas = sorted({r.beta for r in self.rows})
        for b in betas:
            ok = [r for r in self.rows if r.beta == b and r.status == "ok"]
            entry: dict = {"n_ok": len(ok), "n_failed": sum(
                1 for r in self.rows if r.beta == b and r.status != "ok"
            )}
            if ok:
                p = np.array([r.p_suc for r in ok])
                pb = np.array([r.p_bar for r in ok])
                gl = np.array([r.gini_cash for r in ok])
                gc = np.array([r.gini_wealth for r in ok])
                entry.update(
                    p_suc_mean=p.mean(axis=0),
                    p_suc_min=p.min(axis=0),
                    p_suc_max=p.max(axis=0),
                    p_suc_std=p.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros(p.shape[1]),
                    p_bar_mean=float(pb.mean()),
                    p_bar_min=float(pb.min()),
                    p_bar_max=float(pb.max()),
                    gini_cash_mean=float(gl.mean()),
                    gini_cash_min=float(gl.min()),
                    gini_cash_max=float(gl.max()),
                    gini_wealth_mean=float(gc.mean()),
                )
            out[b] = entry
        return out


def _sweep_point(template, beta, r_index, point_index, config) -> SweepRow:
    try:
        wseed = np.random.SeedSequence((config.seed, point_index, r_index, 7)).generate_state(1)[0]
        sseed = np.random.SeedSequence((config.seed, point_index, r_index, 11)).generate_state(1)[0]
        wealth, goods = template.build(beta, int(wseed))
        cfg = replace(config, realizations=1, seed=int(sseed), jobs=1)
        obs = run_simulation(wealth, goods, cfg)
        return SweepRow(
            beta=beta,
            realization=r_index,
            status="ok",
            p_suc=obs.p_suc,
            p_bar=obs.p_bar,
            gini_wealth=obs.gini_wealth,
            gini_cash=obs.gini_cash,
            attempts=obs.attempts,
            successes=obs.successes,
            stationary=obs.stationary,
        )
    except Exception as exc:  # per-point failures recorded, sweep continues
        return SweepRow(
            beta=beta,
            realization=r_index,
            status="error",
            error=f"{type(exc).__name__}: {exc}",
        )


def sweep_beta(beta_grid, template: EconomyTemplate, config: SimConfig) -> SweepResult:
    """Run (beta, realization) grid points concurrently, collecting rows.

    Each point draws fresh wealth (seeded by (master seed, point,
    realization)) and runs one dynamics history; failures are recorded in
    their row and do not abort the sweep.
    """
    grid = list(beta_grid)
    if not grid:
        raise ParameterError("beta grid must be non-empty")
    tasks = [
        (beta, r, i)
        for i, beta in enumerate(grid)
        for r in range(max(1, config.realizations))
    ]
    if config.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.jobs) as pool:
            futures = [
                pool.submit(_sweep_point, template, beta, r, i, config) for beta, r, i in tasks
            ]
            rows = [f.result() for f in futures]
    else:
        rows = [_sweep_point(template, beta, r, i, config) for beta, r, i in tasks]
    return SweepResult(rows=rows, k_classes=template.k_classes)
