"""Hot inner loops, compiled with numba when available.

Setting the environment variable ``PARETOMARKET_NO_NUMBA=1`` (or installing
without numba) selects a pure NumPy/Python fallback: the same functions run
uncompiled. Every kernel consumes pre-drawn random numbers supplied by the
caller, so a given seed produces bit-identical results on either backend.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("PARETOMARKET_NO_NUMBA", "").strip().lower()
_DISABLED = _env in ("1", "true", "yes", "on")

HAS_NUMBA = False
if not _DISABLED:
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False

if HAS_NUMBA:
    BACKEND = "numba"

    def _jit(fn):
        return njit(cache=True, nogil=True)(fn)

else:
    BACKEND = "python"

    def _jit(fn):
        return fn


@_jit
def place_greedy(obj_class, prices, cash, owner, start, draws, max_rejects):
    """Greedy placement of objects onto agents with enough residual cash.

    Objects ``start..`` are assigned in order; candidate owners come from
    ``draws`` (uniform agent indices). After ``max_rejects`` failed draws for
    one object the kernel falls back to a linear scan from a draw-derived
    offset, so progress is guaranteed whenever anyone can still afford the
    object.

    Returns ``(next_obj, draws_used, status)`` with status 1 = all placed,
    0 = draw buffer exhausted (call again with fresh draws), -1 = no agent
    can afford the current object.
    """
    n_obj = obj_class.shape[0]
    n_agents = cash.shape[0]
    n_draws = draws.shape[0]
    pos = 0
    i = start
    rejects = 0
    while i < n_obj:
        price = prices[obj_class[i]]
        if pos >= n_draws:
            return i, pos, 0
        a = int(draws[pos])
        pos += 1
        if cash[a] >= price:
            owner[i] = a
            cash[a] -= price
            i += 1
            rejects = 0
        else:
            rejects += 1
            if rejects >= max_rejects:
                off = a
                found = -1
                for step in range(n_agents):
                    cand = off + step
                    if cand >= n_agents:
                        cand -= n_agents
                    if cash[cand] >= price:
                        found = cand
                        break
                if found < 0:
                    return i, pos, -1
                owner[i] = found
                cash[found] -= price
                i += 1
                rejects = 0
    return i, pos, 1


@_jit
def trade_chunk(
    obj_class,
    prices,
    owner,
    cash,
    holdings,
    obj_draws,
    buyer_draws,
    attempts,
    successes,
    acc_hold,
    last_hold,
    acc_cash,
    last_cash,
    hist_slot,
    hist,
    hist_unit,
    t0,
):
    """Run one chunk of random-exchange attempts, mutating state in place.

    One attempt per draw pair: object ``obj_draws[i]`` is offered by its
    owner to a uniformly chosen other agent (``buyer_draws[i]`` is uniform on
    ``[0, n_agents - 1)`` and shifted past the seller). The trade happens iff
    the buyer's cash covers the price. Time averages of cash and holdings are
    integrated event-style: accumulators only advance when a value changes,
    with the flush left to the caller.

    ``hist_slot[agent] >= 0`` routes that agent's cash dwell times into
    ``hist[slot, cash // hist_unit]`` (top bin absorbs the overflow).

    Returns the time after the last attempt.
    """
    n = obj_draws.shape[0]
    n_bins = hist.shape[1]
    for i in range(n):
        j = int(obj_draws[i])
        k = int(obj_class[j])
        s = int(owner[j])
        r = int(buyer_draws[i])
        b = r + 1 if r >= s else r
        attempts[k] += 1
        price = prices[k]
        if cash[b] >= price:
            t = t0 + i
            successes[k] += 1
            dt_s = t - last_cash[s]
            dt_b = t - last_cash[b]
            acc_cash[s] += float(dt_s) * float(cash[s])
            acc_cash[b] += float(dt_b) * float(cash[b])
            slot = hist_slot[s]
            if slot >= 0:
                c = int(cash[s] // hist_unit)
                if c >= n_bins:
                    c = n_bins - 1
                hist[slot, c] += dt_s
            slot = hist_slot[b]
            if slot >= 0:
                c = int(cash[b] // hist_unit)
                if c >= n_bins:
                    c = n_bins - 1
                hist[slot, c] += dt_b
            last_cash[s] = t
            last_cash[b] = t
            acc_hold[s, k] += float(t - last_hold[s, k]) * float(holdings[s, k])
            acc_hold[b, k] += float(t - last_hold[b, k]) * float(holdings[b, k])
            last_hold[s, k] = t
            last_hold[b, k] = t
            cash[s] += price
            cash[b] -= price
            holdings[s, k] -= 1
            holdings[b, k] += 1
            owner[j] = b
    return t0 + n


@_jit
def trade_chunk_tracked(
    obj_class,
    prices,
    owner,
    cash,
    holdings,
    obj_draws,
    buyer_draws,
    attempts,
    successes,
    powers,
    state_index,
    visits,
    key0,
):
    """Trade chunk that also counts visits per enumerated allocation.

    The allocation is encoded as ``key = sum(owner[j] * n_agents**j)`` and
    updated incrementally; ``state_index`` maps keys to enumeration slots.
    The state occupied after each attempt is counted once. Returns
    ``(key, misses)`` where ``misses`` counts keys absent from the index
    (always 0 when the enumeration matches the dynamics).
    """
    n = obj_draws.shape[0]
    key = key0
    misses = 0
    for i in range(n):
        j = int(obj_draws[i])
        k = int(obj_class[j])
        s = int(owner[j])
        r = int(buyer_draws[i])
        b = r + 1 if r >= s else r
        attempts[k] += 1
        price = prices[k]
        if cash[b] >= price:
            successes[k] += 1
            cash[s] += price
            cash[b] -= price
            holdings[s, k] -= 1
            holdings[b, k] += 1
            owner[j] = b
            key += (b - s) * powers[j]
        idx = state_index[key]
        if idx >= 0:
            visits[idx] += 1
        else:
            misses += 1
    return key, misses
