"""Kantorovich lifting and the weak simulation distance fixed point.

The lifting is solved exactly as a transportation problem over the two
finite supports (successive shortest paths on rationals).  The distance
table is the least fixed point of the one-step simulation game, iterated
synchronously from the all-zero table; because weak answers come from
deterministic per-state schedulers the converged table is an upper bound
of the minimal quasimetric, which is sound for every check of the form
"distance at most tolerance".
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional

from .calculus import Network, canonical_form
from .semantics import Label, Lts, Setting, SubDist, game_moves, setting_for

BOT = -1  # right-side id of the stuck network inside the engine

ONE = Fraction(1)
ZERO = Fraction(0)


class MarginalMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# exact transportation


def transport(costs: list[list[Fraction]], supply: list[Fraction],
              demand: list[Fraction]) -> tuple[Fraction, list[list[Fraction]]]:
    """Minimum-cost transportation plan, exact over rationals.

    Successive shortest paths with Bellman-Ford; deterministic tie-breaking
    by node index.  Returns (optimal cost, flow matrix).
    """
    m, n = len(supply), len(demand)
    if sum(supply) != sum(demand):
        raise MarginalMismatch(f"total supply {sum(supply)} != total demand {sum(demand)}")
    rem_s = list(supply)
    rem_d = list(demand)
    flow = [[ZERO] * n for _ in range(m)]
    total = sum(supply)
    shipped = ZERO
    # node ids: 0..m-1 supply, m..m+n-1 demand
    while shipped < total:
        dist: list[Optional[Fraction]] = [None] * (m + n)
        parent: list[Optional[int]] = [None] * (m + n)
        for i in range(m):
            if rem_s[i] > 0:
                dist[i] = ZERO
        for _ in range(m + n):
            changed = False
            for i in range(m):
                if dist[i] is None:
                    continue
                for j in range(n):
                    nd = dist[i] + costs[i][j]
                    if dist[m + j] is None or nd < dist[m + j]:
                        dist[m + j] = nd
                        parent[m + j] = i
                        changed = True
            for j in range(n):
                if dist[m + j] is None:
                    continue
                for i in range(m):
                    if flow[i][j] > 0:
                        nd = dist[m + j] - costs[i][j]
                        if dist[i] is None or nd < dist[i]:
                            dist[i] = nd
                            parent[i] = m + j
                            changed = True
            if not changed:
                break
        best = None
        for j in range(n):
            if rem_d[j] > 0 and dist[m + j] is not None:
                if best is None or dist[m + j] < dist[m + best]:
                    best = j
        if best is None:
            raise MarginalMismatch("transportation problem is infeasible")
        # trace back, find bottleneck
        path = []
        cur = m + best
        while parent[cur] is not None:
            path.append((parent[cur], cur))
            cur = parent[cur]
        bottleneck = min(rem_d[best], rem_s[cur])
        for a, b in path:
            if a < m:  # forward arc a -> b
                pass
            else:  # residual arc: reduces flow[b][a-m]
                bottleneck = min(bottleneck, flow[b][a - m])
        for a, b in path:
            if a < m:
                flow[a][b - m] += bottleneck
            else:
                flow[b][a - m] -= bottleneck
        rem_s[cur] -= bottleneck
        rem_d[best] -= bottleneck
        shipped += bottleneck
    cost = sum((flow[i][j] * costs[i][j] for i in range(m) for j in range(n)), ZERO)
    return cost, flow


def kantorovich(cost: Callable[[Network, Network], Fraction], delta: SubDist,
                theta: SubDist) -> tuple[Fraction, dict[tuple[Network, Network], Fraction]]:
    """Kantorovich lifting of a ground distance to two distributions.

    Both arguments must carry mass one (the caller pads deficits with the
    stuck network beforehand); returns the optimal value and one optimal
    matching.
    """
    if delta.mass() != 1 or theta.mass() != 1:
        raise MarginalMismatch(
            f"lifting needs full distributions, got masses {delta.mass()}, {theta.mass()}")
    left = list(delta.support)
    right = list(theta.support)
    costs = [[Fraction(cost(a, b)) for b, _ in right] for a, _ in left]
    value, flow = transport(costs, [w for _, w in left], [w for _, w in right])
    matching = {}
    for i, (a, _) in enumerate(left):
        for j, (b, _) in enumerate(right):
            if flow[i][j] > 0:
                matching[(a, b)] = flow[i][j]
    return value, matching


# ---------------------------------------------------------------------------
# distance tables


@dataclass
class DistanceTable:
    """Converged (or budget-cut) weak simulation distance estimates."""

    lts: Lts
    values: dict[tuple[int, int], Fraction]
    iterations: int
    converged: bool

    def entry(self, m: Network, n: Network) -> Fraction:
        key = (self.lts.state_id(m), self.lts.state_id(n))
        if key not in self.values:
            raise KeyError(f"pair not in table: ({m}, {n})")
        return self.values[key]

    def pairs(self) -> Iterable[tuple[Network, Network, Fraction]]:
        for (ms, ns), v in sorted(self.values.items()):
            yield self.lts.state(ms), self.lts.state(ns), v

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ToleranceVerdict:
    holds: bool
    computed_bound: Fraction
    requested: Fraction
    iterations: int
    converged: bool

    def __str__(self):
        word = "holds" if self.holds else "does-not-hold"
        conv = "converged" if self.converged else "NOT-converged"
        return (f"{word}: bound {self.computed_bound} vs requested {self.requested}"
                f" ({self.iterations} iterations, {conv})")


class DistanceEngine:
    """Fixed-point computation of the simulation distance on demand.

    ``value(m, n)`` estimates how far the left network is from being weakly
    simulated by the right one: zero means full simulation, one means some
    left move has no weak answer at all.
    """

    def __init__(self, lts: Lts, max_sweeps: int = 64, pair_budget: int = 200_000):
        self.lts = lts
        self.max_sweeps = max_sweeps
        self.pair_budget = pair_budget

    # -- game graph discovery ------------------------------------------------

    def _discover(self, seeds: list[tuple[int, int]]):
        lts = self.lts
        moves: dict[tuple[int, int], tuple] = {}
        pinned: set[tuple[int, int]] = set()
        deps: dict[tuple[int, int], set[tuple[int, int]]] = {}
        todo = list(dict.fromkeys(seeds))
        seen = set(todo)
        while todo:
            pair = todo.pop()
            ms, ns = pair
            pair_moves = []
            dead = False
            pair_deps: set[tuple[int, int]] = set()
            for label, ddid in game_moves(lts, ms):
                answers = lts.weak_answers(ns, label)
                if not answers:
                    dead = True
                    break
                pair_moves.append((ddid, answers))
                dsupp = [s for s, _ in lts.dist(ddid)]
                for theta in answers:
                    for t, _ in lts.dist(theta):
                        for s in dsupp:
                            pair_deps.add((s, t))
            if dead:
                pinned.add(pair)
                deps[pair] = set()
                continue
            moves[pair] = tuple(pair_moves)
            deps[pair] = pair_deps
            for child in pair_deps:
                if child not in seen:
                    if len(seen) >= self.pair_budget:
                        raise RuntimeError(f"pair budget {self.pair_budget} exhausted")
                    seen.add(child)
                    todo.append(child)
        return moves, pinned, deps

    # -- lifting against the current table -----------------------------------

    def _k_value(self, values, ddid: int, theta: int,
                 cutoff: Optional[Fraction]) -> Optional[Fraction]:
        """Lifted cost of one answer, or None once it provably exceeds
        ``cutoff`` (the best answer seen so far)."""
        lts = self.lts
        left = lts.dist(ddid)
        right = list(lts.dist(theta))
        pad = ONE - lts.dist_mass(theta)
        if pad > 0:
            right.append((BOT, pad))

        def c(ms: int, ns: int) -> Fraction:
            return ONE if ns == BOT else values.get((ms, ns), ZERO)

        if len(left) == 1:
            s = left[0][0]
            return sum((wt * c(s, t) for t, wt in right), ZERO)
        if len(right) == 1:
            t = right[0][0]
            return sum((w * c(s, t) for s, w in left), ZERO)
        # lower bound: every left state pays at least its cheapest partner
        lb = sum((w * min(c(s, t) for t, _ in right) for s, w in left), ZERO)
        if cutoff is not None and lb >= cutoff:
            return None
        costs = [[c(s, t) for t, _ in right] for s, _ in left]
        value, _ = transport(costs, [w for _, w in left], [w for _, w in right])
        return value

    def _pair_value(self, values, pair_moves) -> Fraction:
        worst = ZERO
        for ddid, answers in pair_moves:
            best: Optional[Fraction] = None
            for theta in answers:
                v = self._k_value(values, ddid, theta, best)
                if v is not None and (best is None or v < best):
                    best = v
                    if best == 0:
                        break
            worst = max(worst, best)
            if worst == 1:
                break
        return worst

    # -- fixed point ----------------------------------------------------------

    def table(self, seeds: list[tuple[Network, Network]]) -> DistanceTable:
        lts = self.lts
        seed_ids = [(lts.state_id(a), lts.state_id(b)) for a, b in seeds]
        moves, pinned, deps = self._discover(seed_ids)
        rdeps: dict[tuple[int, int], set] = {}
        for pair, children in deps.items():
            for child in children:
                rdeps.setdefault(child, set()).add(pair)

        values: dict[tuple[int, int], Fraction] = {p: ZERO for p in moves}
        for p in pinned:
            values[p] = ONE

        dirty = set(moves)
        sweeps = 0
        converged = False
        while sweeps < self.max_sweeps:
            sweeps += 1
            updates = {}
            for pair in sorted(dirty):
                if pair in pinned:
                    continue
                v = self._pair_value(values, moves[pair])
                if v != values[pair]:
                    updates[pair] = v
            if not updates:
                converged = True
                break
            values.update(updates)
            dirty = set()
            for pair in updates:
                dirty |= rdeps.get(pair, set())
                dirty.add(pair)
        return DistanceTable(lts, values, sweeps, converged)


def min_quasimetric(pairs: list[tuple[Network, Network]], lts: Optional[Lts] = None,
                    setting: Optional[Setting] = None, max_sweeps: int = 64,
                    state_budget: int = 10_000) -> DistanceTable:
    """Distance table covering the given seed pairs and everything their
    simulation game can reach."""
    nets = [m for pair in pairs for m in pair]
    if lts is None:
        setting = setting or setting_for(*nets)
        lts = Lts(setting, state_budget=state_budget)
    return DistanceEngine(lts, max_sweeps=max_sweeps).table(pairs)


def check_tolerance(m: Network, n: Network, p, lts: Optional[Lts] = None,
                    setting: Optional[Setting] = None, max_sweeps: int = 64,
                    state_budget: int = 10_000) -> ToleranceVerdict:
    """Does the right network simulate the left one within tolerance ``p``?"""
    p = Fraction(p)
    if not 0 <= p <= 1:
        raise ValueError(f"tolerance {p} outside [0,1]")
    table = min_quasimetric([(m, n)], lts=lts, setting=setting,
                            max_sweeps=max_sweeps, state_budget=state_budget)
    bound = table.entry(m, n)
    return ToleranceVerdict(bound <= p, bound, p, table.iterations, table.converged)


# ---------------------------------------------------------------------------
# kernel check: zero-distance pairs replay the simulation game


@dataclass(frozen=True)
class KernelCounterexample:
    left: Network
    right: Network
    label: Label
    reason: str

    def __str__(self):
        return f"({self.left}) vs ({self.right}) on {self.label}: {self.reason}"


def kernel_is_simulation(table: DistanceTable) -> list[KernelCounterexample]:
    """Replay one round of the weak simulation game on every zero-distance
    pair: each left move needs a full-mass weak answer matched inside the
    zero-distance kernel."""
    lts = table.lts
    zero_pairs = [(ms, ns) for (ms, ns), v in table.values.items() if v == 0]
    kernel = set(zero_pairs)
    out = []
    for ms, ns in zero_pairs:
        for label, ddid in game_moves(lts, ms):
            witness = None
            for theta in lts.weak_answers(ns, label):
                if lts.dist_mass(theta) != 1:
                    continue
                left = lts.dist(ddid)
                right = lts.dist(theta)
                costs = [[ZERO if (s, t) in kernel else ONE for t, _ in right]
                         for s, _ in left]
                value, _ = transport(costs, [w for _, w in left], [w for _, w in right])
                if value == 0:
                    witness = theta
                    break
            if witness is None:
                out.append(KernelCounterexample(
                    lts.state(ms), lts.state(ns), label,
                    "no full-mass weak answer matched within the kernel"))
    return out
