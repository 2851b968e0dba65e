"""Exact oracles for tiny economies: exhaustive allocation enumeration, the
full transition kernel of the trade chain, and stationary success rates."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import EnumerationCapError, ParameterError, SolverError
from .market import GoodsSpec, quantize_wealth
from .wealth import WealthVector

__all__ = [
    "ExactOracleResult",
    "enumerate_feasible_allocations",
    "transition_kernel",
    "rate_symmetry_violation",
    "exact_stationary_success_rates",
]

DEFAULT_ENUMERATION_CAP = 1_000_000


def enumerate_feasible_allocations(
    wealth: WealthVector, goods: GoodsSpec, cap: int = DEFAULT_ENUMERATION_CAP
) -> np.ndarray:
    """All owner vectors (one entry per object) leaving every agent ℓ_i >= 0.

    Objects are distinguishable, matching the dynamics' per-object picking:
    the uniform stationary law lives on these vectors. Returns an (S, M)
    int16 array; M = 0 yields the single empty allocation.
    """
    n = wealth.n
    m = goods.m_total
    if n**m > cap:
        raise EnumerationCapError(f"{n}^{m} allocation vectors exceed the cap {cap}")
    wealth_q = quantize_wealth(wealth.values, goods.quantum)
    obj_class = goods.object_classes()
    prices = goods.prices
    if m == 0:
        return np.zeros((1, 0), dtype=np.int16)
    out = []
    owner = np.zeros(m, dtype=np.int16)
    cash = wealth_q.copy()

    def assign(j: int):
        if j == m:
            out.append(owner.copy())
            return
        price = prices[obj_class[j]]
        for a in range(n):
            if cash[a] >= price:
                owner[j] = a
                cash[a] -= price
                assign(j + 1)
                cash[a] += price

    assign(0)
    return np.array(out, dtype=np.int16) if out else np.zeros((0, m), dtype=np.int16)


def _state_cash(states: np.ndarray, wealth_q, prices, obj_class) -> np.ndarray:
    s, m = states.shape
    cash = np.tile(wealth_q, (s, 1))
    for j in range(m):
        np.subtract.at(cash, (np.arange(s), states[:, j]), prices[obj_class[j]])
    return cash


def transition_kernel(
    wealth: WealthVector,
    goods: GoodsSpec,
    rule: int | None = None,
    proposal_fn=None,
    cap: int = DEFAULT_ENUMERATION_CAP,
):
    """Exact one-step kernel of the trade chain over feasible allocations.

    Returns ``(states, P, attempts, successes)``: P is a dense row-stochastic
    (S, S) matrix, and attempts/successes are (S, K) per-state probabilities
    of attempting resp. completing a class-k trade in that state.

    ``rule`` is the meeting size n (default N). ``proposal_fn`` overrides the
    rule with a custom proposal probability, called as
    ``proposal_fn(owner_vec, cash, counts, j, seller, buyer)``; this is the
    hook for deliberately asymmetric control rules in tests.
    """
    states = enumerate_feasible_allocations(wealth, goods, cap=cap)
    s_count, m = states.shape
    n = wealth.n
    k_classes = goods.k_classes
    wealth_q = quantize_wealth(wealth.values, goods.quantum)
    obj_class = goods.object_classes()
    prices = goods.prices
    if rule is None:
        rule = n
    if proposal_fn is None and not 2 <= rule <= max(n, 2):
        raise ParameterError(f"rule must lie in [2, {n}]")

    index: dict[int, int] = {}
    powers = np.array([n**j for j in range(m)], dtype=np.int64) if m else np.zeros(0, np.int64)
    for i in range(s_count):
        index[int(np.dot(states[i], powers))] = i

    cash_all = _state_cash(states, wealth_q, prices, obj_class)
    P = np.zeros((s_count, s_count))
    attempts = np.zeros((s_count, k_classes))
    successes = np.zeros((s_count, k_classes))

    groups = None
    if proposal_fn is None and rule < n:
        groups = list(combinations(range(n), rule))
        group_w = 1.0 / comb(n, rule)

    for i in range(s_count):
        owner = states[i]
        cash = cash_all[i]
        counts = np.bincount(owner, minlength=n)
        row_moves: dict[tuple[int, int], float] = {}

        def propose(j: int, seller: int, buyer: int, w: float):
            k = obj_class[j]
            attempts[i, k] += w
            if cash[buyer] >= prices[k]:
                successes[i, k] += w
                row_moves[(j, buyer)] = row_moves.get((j, buyer), 0.0) + w
            else:
                P[i, i] += w

        if proposal_fn is not None:
            for j in range(m):
                seller = int(owner[j])
                for buyer in range(n):
                    if buyer == seller:
                        continue
                    w = proposal_fn(owner, cash, counts, j, seller, buyer)
                    if w > 0:
                        propose(j, seller, buyer, w)
        elif rule == n:
            w = 1.0 / (m * (n - 1))
            for j in range(m):
                seller = int(owner[j])
                for buyer in range(n):
                    if buyer != seller:
                        propose(j, seller, buyer, w)
        else:
            for grp in groups:
                total = int(sum(counts[a] for a in grp))
                if total == 0:
                    P[i, i] += group_w  # no object to trade: no-op attempt
                    continue
                for j in range(m):
                    seller = int(owner[j])
                    if seller not in grp:
                        continue
                    w = group_w / (total * (rule - 1))
                    for buyer in grp:
                        if buyer != seller:
                            propose(j, seller, buyer, w)

        for (j, buyer), w in row_moves.items():
            key = int(np.dot(states[i], powers)) + (buyer - int(owner[j])) * int(powers[j])
            P[i, index[key]] += w

        leftover = 1.0 - P[i].sum()
        P[i, i] += leftover  # mass of proposals never raised (e.g. no-ops)

    return states, P, attempts, successes


def rate_symmetry_violation(
    wealth: WealthVector,
    goods: GoodsSpec,
    rule: int | None = None,
    proposal_fn=None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Max |W(A -> A') - W(A' -> A)| over ordered pairs of feasible neighbors.

    Both states being feasible, the proposal goes through, so the transition
    probability equals the proposal probability; symmetric rules return 0 up
    to float rounding.
    """
    _, P, _, _ = transition_kernel(wealth, goods, rule=rule, proposal_fn=proposal_fn, cap=cap)
    off = P - P.T
    np.fill_diagonal(off, 0.0)
    return float(np.abs(off).max()) if off.size else 0.0


@dataclass(frozen=True)
class ExactOracleResult:
    """Exact stationary answers for an enumerable economy."""

    p_suc: np.ndarray
    n_states: int
    uniform_residual: float
    ergodic: bool
    states: np.ndarray
    attempts: np.ndarray
    successes: np.ndarray
    kernel: np.ndarray


def exact_stationary_success_rates(
    wealth: WealthVector,
    goods: GoodsSpec,
    rule: int | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> ExactOracleResult:
    """Per-class success rates under the uniform stationary law.

    Builds the exact kernel, verifies the uniform vector is stationary
    (detailed balance makes it so for every symmetric rule), and averages
    per-state attempt/success probabilities uniformly. A reducible chain
    (frozen economy) is reported through ``ergodic=False``, with rates still
    well defined.
    """
    states, P, attempts, successes = transition_kernel(wealth, goods, rule=rule, cap=cap)
    s_count = states.shape[0]
    if s_count == 0:
        raise ParameterError("economy has no feasible allocation")
    col = P.sum(axis=0)
    residual = float(np.abs(col - 1.0).max()) / s_count
    if residual > 1e-9:
        raise SolverError(f"uniform law is not stationary (residual {residual:.3e})")
    att = attempts.sum(axis=0)
    suc = successes.sum(axis=0)
    p_suc = np.divide(suc, att, out=np.zeros_like(suc), where=att > 0)
    moves = P.copy()
    np.fill_diagonal(moves, 0.0)
    graph = sp.csr_matrix(moves > 0)
    n_comp, _ = connected_components(graph, directed=False)
    return ExactOracleResult(
        p_suc=p_suc,
        n_states=s_count,
        uniform_residual=residual,
        ergodic=(n_comp == 1),
        states=states,
        attempts=attempts,
        successes=successes,
        kernel=P,
    )
