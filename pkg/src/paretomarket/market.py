"""Economy representation: priced goods classes, integer-quanta market state,
feasibility checks, and the detailed-balance trade rules."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._kernels import place_greedy
from .errors import ConfigurationError, PackingError, ParameterError
from .wealth import WealthVector

__all__ = [
    "GoodsSpec",
    "MarketState",
    "TradeOutcome",
    "parse_price_ratio",
    "build_goods",
    "quantize_wealth",
    "initial_allocation",
    "trade_step",
    "is_feasible",
    "economy_digest",
    "state_to_snapshot",
    "state_from_snapshot",
]

_MAX_INT64 = np.iinfo(np.int64).max


def parse_price_ratio(g) -> Fraction:
    """Coerce the geometric price ratio g to an exact Fraction > 1.

    Accepts a Fraction, a string like ``"3/2"``, an int, or a float that is
    exactly a small rational (1.5 works, 1.1 resolves to 11/10). Exactness
    matters because prices must be representable as integer quanta.
    """
    if isinstance(g, Fraction):
        frac = g
    elif isinstance(g, str):
        frac = Fraction(g)
    elif isinstance(g, int):
        frac = Fraction(g)
    elif isinstance(g, float):
        frac = Fraction(g).limit_denominator(10_000)
        if float(frac) != g:
            raise ParameterError(
                f"price ratio {g!r} is not a small exact rational; "
                "pass it as a string like '3/2'"
            )
    else:
        raise ParameterError(f"cannot interpret price ratio {g!r}")
    if frac <= 1:
        raise ParameterError("price ratio g must exceed 1")
    return frac


@dataclass(frozen=True)
class GoodsSpec:
    """K classes of goods with geometric prices, in integer money quanta.

    ``quantum`` is the money value of one integer unit; it is chosen so that
    every price pi_1 * g**(k-1) is an exact integer (q = pi_1 / den(g)**(K-1)).
    """

    k_classes: int
    prices: np.ndarray
    counts: np.ndarray
    quantum: float

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=np.int64)
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "counts", counts)
        if prices.size != self.k_classes or counts.size != self.k_classes:
            raise ParameterError("prices/counts length must equal k_classes")
        if np.any(prices <= 0) or np.any(np.diff(prices) <= 0):
            raise ParameterError("prices must be positive and strictly increasing")
        if np.any(counts <= 0):
            raise ConfigurationError("every class must contain at least one good")
        if not self.quantum > 0:
            raise ParameterError("quantum must be positive")

    @property
    def m_total(self) -> int:
        return int(self.counts.sum())

    @property
    def total_value(self) -> int:
        """Pi = sum_k M_k pi_(k), in quanta."""
        return int(np.dot(self.counts, self.prices))

    @property
    def prices_money(self) -> np.ndarray:
        return self.prices * self.quantum

    def object_classes(self) -> np.ndarray:
        """Class index of each object, grouped by class ascending."""
        return np.repeat(np.arange(self.k_classes, dtype=np.int16), self.counts)


def quantize_wealth(values, quantum: float) -> np.ndarray:
    """Floor wealth (money units) to integer quanta.

    A relative epsilon guards against 2.9999999999-style float artifacts in
    the division; true fractional remainders are still floored away.
    """
    if not quantum > 0:
        raise ParameterError("quantum must be positive")
    v = np.asarray(values, dtype=np.float64) / quantum
    q = np.floor(v * (1.0 + 1e-12) + 1e-9).astype(np.int64)
    if np.any(v >= _MAX_INT64 * 0.99):
        raise ConfigurationError("wealth in quanta overflows int64; use a coarser quantum")
    return q


def build_goods(wealth: WealthVector, ratio: float, k_classes: int, pi_1: float, g="3/2") -> GoodsSpec:
    """Size the goods classes against total wealth.

    ``ratio`` is the target Pi/C; each class gets the same nominal value, so
    M_k = round(ratio * C / (K * pi_k)). The realized Pi is recomputed from
    the integer counts and must stay below C.
    """
    if not 0 < ratio < 1:
        raise ParameterError("ratio Pi/C must lie in (0, 1)")
    if k_classes < 1:
        raise ParameterError("k_classes must be >= 1")
    if not pi_1 > 0:
        raise ParameterError("pi_1 must be positive")
    frac = parse_price_ratio(g) if k_classes > 1 else Fraction(3, 2)
    den = frac.denominator
    num = frac.numerator
    quantum = pi_1 / den ** (k_classes - 1)
    prices = np.array(
        [num**k * den ** (k_classes - 1 - k) for k in range(k_classes)], dtype=object
    )
    if any(p > _MAX_INT64 / 16 for p in prices):
        raise ConfigurationError("prices overflow int64 quanta; use a smaller K or simpler g")
    prices = prices.astype(np.int64)
    wealth_q = quantize_wealth(wealth.values, quantum)
    total_c = int(wealth_q.sum())
    per_class_value = ratio * total_c / k_classes
    counts = np.rint(per_class_value / prices).astype(np.int64)
    if np.any(counts < 1):
        raise ConfigurationError(
            "a goods class rounded to zero objects; raise ratio or lower prices"
        )
    spec = GoodsSpec(k_classes=k_classes, prices=prices, counts=counts, quantum=quantum)
    if spec.total_value >= total_c:
        raise ConfigurationError(
            f"goods value {spec.total_value} must stay below total wealth {total_c}"
        )
    return spec


@dataclass
class MarketState:
    """Mutable market microstate in integer quanta.

    ``owner[j]`` is the ground truth for object-level dynamics; ``holdings``
    is the per-agent per-class count matrix kept in lockstep. Wealth never
    changes; cash is wealth minus the value of held goods.
    """

    holdings: np.ndarray
    cash: np.ndarray
    wealth: np.ndarray
    owner: np.ndarray
    obj_class: np.ndarray
    goods: GoodsSpec
    step: int = 0

    @property
    def n_agents(self) -> int:
        return self.wealth.size

    def copy(self) -> "MarketState":
        return MarketState(
            holdings=self.holdings.copy(),
            cash=self.cash.copy(),
            wealth=self.wealth.copy(),
            owner=self.owner.copy(),
            obj_class=self.obj_class.copy(),
            goods=self.goods,
            step=self.step,
        )


@dataclass(frozen=True)
class TradeOutcome:
    """Result of one attempted exchange."""

    class_index: int | None
    seller: int | None
    buyer: int | None
    success: bool

    def __post_init__(self):
        if self.seller is not None and self.seller == self.buyer:
            raise ParameterError("seller and buyer must differ")


def initial_allocation(wealth: WealthVector, goods: GoodsSpec, seed) -> MarketState:
    """Place every object on an agent who can afford it, seed-deterministically.

    Randomized greedy: classes are filled from most expensive down (objects
    within a class are interchangeable), owners drawn uniformly with
    rejection on insufficient cash, falling back to a scan when rejections
    pile up. Retries the whole construction a bounded number of times.
    """
    rng = np.random.default_rng(seed)
    n = wealth.n
    if n < 1:
        raise ParameterError("need at least one agent")
    wealth_q = quantize_wealth(wealth.values, goods.quantum)
    if goods.total_value > int(wealth_q.sum()):
        raise ConfigurationError("total goods value exceeds total wealth; infeasible")
    m = goods.m_total
    obj_class = goods.object_classes()
    # placement order: descending price, i.e. classes reversed
    desc = obj_class[::-1].copy()
    for _ in range(8):
        cash = wealth_q.copy()
        owner_desc = np.full(m, -1, dtype=np.int32)
        start = 0
        failed = False
        while start < m:
            batch = max(4096, min(4 * (m - start), 1 << 22))
            draws = rng.integers(0, n, size=batch, dtype=np.int64)
            start, _, status = place_greedy(desc, goods.prices, cash, owner_desc, start, draws, 64)
            if status == -1:
                failed = True
                break
        if failed:
            continue
        owner = owner_desc[::-1].copy()
        holdings = np.zeros((n, goods.k_classes), dtype=np.int64)
        np.add.at(holdings, (owner, obj_class), 1)
        state = MarketState(
            holdings=holdings,
            cash=cash,
            wealth=wealth_q,
            owner=owner,
            obj_class=obj_class,
            goods=goods,
        )
        if not is_feasible(state):
            raise PackingError("internal error: greedy produced an infeasible state")
        return state
    raise PackingError("no feasible allocation found within the retry budget")


def trade_step(state: MarketState, rule: int | None, rng) -> TradeOutcome:
    """One attempted exchange under rule #n (n agents meet; default n = N).

    Rule #N: one of the M objects is picked uniformly, its owner offers it
    to a uniformly chosen other agent. Rule #n for n < N: n distinct agents
    meet, one object among their combined holdings is picked, and its owner
    sells it to one of the other n-1. The trade happens iff the buyer's
    cash covers the price; otherwise the state is untouched.
    """
    n = state.n_agents
    if n < 2:
        raise ParameterError("trading needs at least two agents")
    if rule is None:
        rule = n
    if not 2 <= rule <= n:
        raise ParameterError(f"rule must be an agent count in [2, {n}]")
    if rule == n:
        j = int(rng.integers(0, state.owner.size))
        seller = int(state.owner[j])
        r = int(rng.integers(0, n - 1))
        buyer = r + 1 if r >= seller else r
        k = int(state.obj_class[j])
    else:
        group = rng.choice(n, size=rule, replace=False)
        mask = np.isin(state.owner, group)
        pool = np.flatnonzero(mask)
        if pool.size == 0:
            state.step += 1
            return TradeOutcome(class_index=None, seller=None, buyer=None, success=False)
        j = int(pool[int(rng.integers(0, pool.size))])
        seller = int(state.owner[j])
        others = [int(a) for a in group if int(a) != seller]
        buyer = others[int(rng.integers(0, len(others)))]
        k = int(state.obj_class[j])
    price = int(state.goods.prices[k])
    state.step += 1
    if state.cash[buyer] < price:
        return TradeOutcome(class_index=k, seller=seller, buyer=buyer, success=False)
    state.cash[buyer] -= price
    state.cash[seller] += price
    state.holdings[seller, k] -= 1
    state.holdings[buyer, k] += 1
    state.owner[j] = buyer
    return TradeOutcome(class_index=k, seller=seller, buyer=buyer, success=True)


def is_feasible(state: MarketState) -> bool:
    """Exact integer check of every market invariant."""
    z = state.holdings
    if np.any(z < 0) or np.any(state.cash < 0):
        return False
    if not np.array_equal(z.sum(axis=0), state.goods.counts):
        return False
    invested = z @ state.goods.prices
    if not np.array_equal(invested + state.cash, state.wealth):
        return False
    counted = np.zeros_like(z)
    np.add.at(counted, (state.owner, state.obj_class), 1)
    return np.array_equal(counted, z)


def economy_digest(wealth_q: np.ndarray, goods: GoodsSpec) -> str:
    """Stable identifier of (quantized wealth, goods) for cross-file checks."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(wealth_q, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(goods.prices, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(goods.counts, dtype=np.int64).tobytes())
    h.update(repr(goods.quantum).encode())
    return h.hexdigest()[:16]


def state_to_snapshot(state: MarketState, seed=None) -> dict:
    """Serialize a state to a JSON-ready dict.

    Schema (version 1): goods {k_classes, prices_quanta, counts, quantum},
    wealth_quanta, cash_quanta, holdings (N x K), step, seed. Object
    identities within a class are interchangeable, so owners are not stored;
    resume reconstructs a canonical owner vector consistent with holdings.
    """
    return {
        "version": 1,
        "goods": {
            "k_classes": state.goods.k_classes,
            "prices_quanta": state.goods.prices.tolist(),
            "counts": state.goods.counts.tolist(),
            "quantum": state.goods.quantum,
        },
        "wealth_quanta": state.wealth.tolist(),
        "cash_quanta": state.cash.tolist(),
        "holdings": state.holdings.tolist(),
        "step": state.step,
        "seed": seed,
    }


def state_from_snapshot(snap: dict) -> MarketState:
    """Rebuild a MarketState from :func:`state_to_snapshot` output."""
    if snap.get("version") != 1:
        raise ParameterError(f"unsupported snapshot version {snap.get('version')!r}")
    g = snap["goods"]
    goods = GoodsSpec(
        k_classes=int(g["k_classes"]),
        prices=np.array(g["prices_quanta"], dtype=np.int64),
        counts=np.array(g["counts"], dtype=np.int64),
        quantum=float(g["quantum"]),
    )
    holdings = np.array(snap["holdings"], dtype=np.int64)
    n = holdings.shape[0]
    owner = np.empty(goods.m_total, dtype=np.int32)
    obj_class = goods.object_classes()
    pos = 0
    for k in range(goods.k_classes):
        reps = holdings[:, k]
        owner[pos : pos + int(reps.sum())] = np.repeat(np.arange(n, dtype=np.int32), reps)
        pos += int(reps.sum())
    state = MarketState(
        holdings=holdings,
        cash=np.array(snap["cash_quanta"], dtype=np.int64),
        wealth=np.array(snap["wealth_quanta"], dtype=np.int64),
        owner=owner,
        obj_class=obj_class,
        goods=goods,
        step=int(snap["step"]),
    )
    if not is_feasible(state):
        raise ParameterError("snapshot violates market invariants")
    return state


def snapshot_to_json(state: MarketState, path, seed=None) -> None:
    with open(path, "w") as fh:
        json.dump(state_to_snapshot(state, seed=seed), fh)


def snapshot_from_json(path) -> MarketState:
    with open(path) as fh:
        return state_from_snapshot(json.load(fh))
