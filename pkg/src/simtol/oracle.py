"""Independent ground truth for delivery probabilities.

Exact probabilistic reachability over schedulers (value iteration on the
horizon-unrolled decision process) and a seeded Monte-Carlo simulator.
Both resolve nondeterminism only over moves the network itself controls:
reception from a non-transmitting external (the observing tester) is not a
scheduler option.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .calculus import Bcast, Fix, Network, Process, Sleep, Tau as TauP, Value, Choice
from .semantics import (
    BudgetExceeded, Lts, Rcv, Setting, Sigma, setting_for, unfolded,
)

ZERO = Fraction(0)
ONE = Fraction(1)


def is_committed_sender(proc: Process, value: str) -> bool:
    """Does this process transmit ``value`` with probability one, up to
    sleeping and trivial internal steps?"""
    proc = unfolded(proc)
    if isinstance(proc, Bcast):
        return isinstance(proc.value, Value) and proc.value.sym == value
    if isinstance(proc, (TauP, Sleep)):
        branches = proc.cont.branches
        return len(branches) == 1 and is_committed_sender(branches[0][1], value)
    return False


@dataclass(frozen=True)
class DeliveryQuery:
    """Reachability question: does the network reach a state satisfying the
    predicate within the round horizon?

    The default predicate marks delivery at the destination: its process has
    become a (possibly sleep-delayed) certain sender of the payload, which
    is how a forwarder looks right after a successful reception.
    """

    network: Network
    destination: str = "d"
    value: str = "v"
    horizon: int = 3
    predicate: Optional[Callable[[Network], bool]] = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least one round")

    def holds(self, m: Network) -> bool:
        if self.predicate is not None:
            return self.predicate(m)
        return is_committed_sender(m.node(self.destination).proc, self.value)


@dataclass(frozen=True)
class ProbabilityBracket:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        if not ZERO <= self.lo <= self.hi <= ONE:
            raise ValueError(f"not a probability bracket: [{self.lo}, {self.hi}]")

    def __contains__(self, x) -> bool:
        return self.lo <= Fraction(x) <= self.hi

    def __str__(self):
        return f"[{self.lo}, {self.hi}]"


def _scheduler_moves(lts: Lts, sid: int):
    silent = lts.setting.externals - lts.setting.transmitting
    return [(lbl, did) for lbl, did in lts.strong(sid)
            if not (isinstance(lbl, Rcv) and lbl.sender in silent)]


def exact_reachability(query: DeliveryQuery, lts: Optional[Lts] = None,
                       state_budget: int = 10_000) -> ProbabilityBracket:
    """Min and max delivery probability over all schedulers, exact rationals.

    Value iteration on (state, rounds-left); time steps consume a round,
    instantaneous steps do not.  Predicate states are absorbing successes.
    """
    if lts is None:
        lts = Lts(setting_for(query.network), state_budget=state_budget)
    root = lts.state_id(query.network)

    memo: dict[tuple[int, int], tuple[Fraction, Fraction]] = {}
    on_stack: set[tuple[int, int]] = set()

    def value(sid: int, rounds: int) -> tuple[Fraction, Fraction]:
        key = (sid, rounds)
        if key in memo:
            return memo[key]
        if query.holds(lts.state(sid)):
            memo[key] = (ONE, ONE)
            return memo[key]
        if rounds == 0:
            memo[key] = (ZERO, ZERO)
            return memo[key]
        if key in on_stack:
            raise BudgetExceeded("instantaneous cycle in delivery exploration")
        on_stack.add(key)
        lo: Optional[Fraction] = None
        hi: Optional[Fraction] = None
        for lbl, did in _scheduler_moves(lts, sid):
            nxt = rounds - 1 if isinstance(lbl, Sigma) else rounds
            alo = ahi = ZERO
            for tgt, w in lts.dist(did):
                vlo, vhi = value(tgt, nxt)
                alo += w * vlo
                ahi += w * vhi
            lo = alo if lo is None else min(lo, alo)
            hi = ahi if hi is None else max(hi, ahi)
        on_stack.discard(key)
        if lo is None:  # no moves at all (stuck)
            lo = hi = ZERO
        memo[key] = (lo, hi)
        return memo[key]

    lo, hi = value(root, query.horizon)
    return ProbabilityBracket(lo, hi)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class McEstimate:
    successes: int
    trials: int
    estimate: float
    ci_lo: float
    ci_hi: float
    seed: int

    def __str__(self):
        return (f"{self.estimate:.6f} in [{self.ci_lo:.6f}, {self.ci_hi:.6f}] "
                f"({self.successes}/{self.trials}, seed {self.seed})")


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054):
    """95% Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    z2 = z * z
    denom = 1 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = (z / denom) * ((phat * (1 - phat) / trials + z2 / (4 * trials * trials)) ** 0.5)
    return max(0.0, center - half), min(1.0, center + half)


def monte_carlo(query: DeliveryQuery, trials: int, seed: int = 0,
                lts: Optional[Lts] = None, state_budget: int = 20_000) -> McEstimate:
    """Seeded simulation with a uniform-random scheduler.

    Each trial draws from its own stream derived from (seed, trial index),
    so results are reproducible regardless of execution order.
    """
    if trials < 1:
        raise ValueError("at least one trial required")
    if lts is None:
        lts = Lts(setting_for(query.network), state_budget=state_budget)
    root = lts.state_id(query.network)

    from bisect import bisect

    # per-state sampling tables: (is-time-step, targets, cumulative weights)
    moves_cache: dict[int, list[tuple[bool, list[int], list[float]]]] = {}

    def moves(sid: int):
        got = moves_cache.get(sid)
        if got is None:
            got = []
            for lbl, did in _scheduler_moves(lts, sid):
                entries = lts.dist(did)
                targets = [t for t, _ in entries]
                cum: list[float] = []
                acc = 0.0
                for _, w in entries:
                    acc += float(w)
                    cum.append(acc)
                got.append((isinstance(lbl, Sigma), targets, cum))
            moves_cache[sid] = got
        return got

    holds_cache: dict[int, bool] = {}

    def holds(sid: int) -> bool:
        got = holds_cache.get(sid)
        if got is None:
            got = query.holds(lts.state(sid))
            holds_cache[sid] = got
        return got

    successes = 0
    for trial in range(trials):
        rng = random.Random((seed << 32) ^ (trial * 0x9E3779B9 + 1))
        rnd = rng.random
        sid = root
        rounds = query.horizon
        while rounds > 0 and not holds(sid):
            opts = moves(sid)
            if not opts:
                break
            if len(opts) == 1:
                is_tick, targets, cum = opts[0]
            else:
                is_tick, targets, cum = opts[int(rnd() * len(opts))]
            if len(targets) == 1:
                sid = targets[0]
            else:
                sid = targets[bisect(cum, rnd() * cum[-1])]
            if is_tick:
                rounds -= 1
        if holds(sid):
            successes += 1
    lo, hi = wilson_interval(successes, trials)
    return McEstimate(successes, trials, successes / trials, lo, hi, seed)
