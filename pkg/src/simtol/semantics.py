"""Probabilistic labelled transition system for broadcast networks.

States are canonical networks.  Strong steps fold per-node behaviour into
whole-network transitions: broadcasts synchronize every listening in-range
neighbour and are then rewritten to an internal step when nobody outside the
network can hear them, or to an observable send otherwise.  Time passes only
under maximal progress.  Reception from the environment is input-enabled for
every declared external sender name and every value of the alphabet.

Weak transitions lift the strong relation to sub-distributions.  Each support
network independently either fires or stays (internal steps) or fires or is
dropped (visible steps); convex combinations of schedules are deliberately
not enumerated, so every quantity derived from weak transitions here is an
upper bound of the scheduler-complete one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Union

from .calculus import (
    Bcast, Choice, Fix, Network, Nil, Node, PVar, Process, Recv, Sleep, Tau as TauP,
    Value, canonical_form, network_key, subst_proc, subst_value, unfold_fix,
)

# ---------------------------------------------------------------------------
# labels


@dataclass(frozen=True)
class Tau:
    def __str__(self):
        return "tau"


@dataclass(frozen=True)
class Sigma:
    def __str__(self):
        return "sigma"


@dataclass(frozen=True)
class Rcv:
    sender: str
    value: str

    def __str__(self):
        return f"{self.sender}?{self.value}"


@dataclass(frozen=True)
class Obs:
    value: str
    targets: frozenset[str]

    def __str__(self):
        return f"!{self.value}>{{{','.join(sorted(self.targets))}}}"


Label = Union[Tau, Sigma, Rcv, Obs]
TAU = Tau()
SIGMA = Sigma()


def label_key(label: Label):
    if isinstance(label, Tau):
        return (0,)
    if isinstance(label, Sigma):
        return (1,)
    if isinstance(label, Rcv):
        return (2, label.sender, label.value)
    return (3, label.value, tuple(sorted(label.targets)))


# ---------------------------------------------------------------------------
# sub-distributions (public value type)


@dataclass(frozen=True)
class SubDist:
    """Finite-support map from canonical networks to positive weights."""

    support: tuple[tuple[Network, Fraction], ...]

    @staticmethod
    def of(entries: dict[Network, Fraction]) -> "SubDist":
        items = [(m, w) for m, w in entries.items() if w != 0]
        items.sort(key=lambda e: network_key(e[0]))
        return SubDist(tuple(items))

    @staticmethod
    def dirac(m: Network) -> "SubDist":
        return SubDist(((m, Fraction(1)),))

    def mass(self) -> Fraction:
        return sum((w for _, w in self.support), Fraction(0))

    def __getitem__(self, m: Network) -> Fraction:
        for n, w in self.support:
            if n == m:
                return w
        return Fraction(0)

    def states(self) -> tuple[Network, ...]:
        return tuple(m for m, _ in self.support)

    def scaled(self, c: Fraction) -> "SubDist":
        return SubDist(tuple((m, w * c) for m, w in self.support))

    def __str__(self):
        return " + ".join(f"{w}*({m})" for m, w in self.support)


class BudgetExceeded(RuntimeError):
    """Raised when exploration or closure budgets are exhausted."""


@dataclass(frozen=True)
class Setting:
    """Shared label alphabet: external sender names and value symbols.

    ``transmitting`` lists the externals that may actually send.  Reception
    is input-enabled for every external regardless, but simulation games and
    delivery experiments only quantify over senders that can transmit; an
    observer such as a tester can hear and never speak.
    """

    externals: frozenset[str]
    values: frozenset[str]
    transmitting: frozenset[str] = frozenset()


# ---------------------------------------------------------------------------
# process head analysis


_UNFOLD_LIMIT = 64


def unfolded(proc: Process) -> Process:
    """Expose the head constructor, unfolding fix lazily."""
    seen = 0
    while isinstance(proc, Fix):
        proc = subst_proc(proc.body, proc.name, proc)
        seen += 1
        if seen > _UNFOLD_LIMIT:
            raise BudgetExceeded("recursion unfolding limit hit; recursion not time-guarded?")
    return proc


def instantaneous_depth(proc: Process) -> int:
    """Syntactic bound on the instantaneous actions a process can emit
    before the round must end (used by the finite-variability check)."""

    def go(p: Process, fixed: frozenset[str]) -> int:
        if isinstance(p, (Nil, PVar)):
            return 0
        if isinstance(p, (Bcast, TauP)):
            return 1 + max(go(q, fixed) for _, q in p.cont.branches)
        if isinstance(p, Recv):
            # reception is not counted (the bound tracks tau/send streaks),
            # but the receive branch may act within the same round
            return max(go(q, fixed) for _, q in p.then.branches)
        if isinstance(p, Sleep):
            return 0
        if isinstance(p, Fix):
            if p.name in fixed:
                return 0
            return go(p.body, fixed | {p.name})
        raise TypeError(p)

    return go(proc, frozenset())


def network_depth_bound(m: Network) -> int:
    return sum(instantaneous_depth(n.proc) for n in m.nodes)


# ---------------------------------------------------------------------------
# the LTS engine


class Lts:
    """Memoizing transition engine over interned canonical states."""

    def __init__(self, setting: Setting, state_budget: int = 10_000,
                 closure_budget: int = 20_000):
        self.setting = setting
        self.state_budget = state_budget
        self.closure_budget = closure_budget
        self._states: list[Network] = []
        self._ids: dict[Network, int] = {}
        self._dists: list[tuple[tuple[int, Fraction], ...]] = []
        self._dist_ids: dict[tuple, int] = {}
        self._strong: dict[int, tuple[tuple[Label, int], ...]] = {}
        self._tau_closure: dict[int, tuple[int, ...]] = {}
        self._weak: dict[tuple[int, Label], tuple[int, ...]] = {}

    # -- interning ---------------------------------------------------------

    def state_id(self, m: Network) -> int:
        m = canonical_form(m)
        sid = self._ids.get(m)
        if sid is None:
            if len(self._states) >= self.state_budget:
                raise BudgetExceeded(f"state budget {self.state_budget} exhausted")
            sid = len(self._states)
            self._states.append(m)
            self._ids[m] = sid
        return sid

    def state(self, sid: int) -> Network:
        return self._states[sid]

    def dist_id(self, entries: dict[int, Fraction]) -> int:
        key = tuple(sorted((s, w.numerator, w.denominator) for s, w in entries.items() if w))
        did = self._dist_ids.get(key)
        if did is None:
            did = len(self._dists)
            self._dists.append(tuple((s, Fraction(n, d)) for s, n, d in key))
            self._dist_ids[key] = did
        return did

    def dist(self, did: int) -> tuple[tuple[int, Fraction], ...]:
        return self._dists[did]

    def dist_mass(self, did: int) -> Fraction:
        return sum((w for _, w in self.dist(did)), Fraction(0))

    def dirac_id(self, sid: int) -> int:
        return self.dist_id({sid: Fraction(1)})

    def subdist(self, did: int) -> SubDist:
        return SubDist(tuple((self.state(s), w) for s, w in self.dist(did)))

    # -- strong steps ------------------------------------------------------

    def strong(self, sid: int) -> tuple[tuple[Label, int], ...]:
        cached = self._strong.get(sid)
        if cached is not None:
            return cached
        net = self.state(sid)
        out = self._derive(net)
        self._strong[sid] = out
        return out

    def strong_steps(self, m: Network) -> list[tuple[Label, SubDist]]:
        sid = self.state_id(m)
        return [(lbl, self.subdist(did)) for lbl, did in self.strong(sid)]

    def _sem(self, net: Network, name: str, cont: Choice) -> list[tuple[Fraction, Node]]:
        node = net.node(name)
        out = []
        for w, q in cont.branches:
            if not isinstance(w, Fraction):
                raise TypeError(f"symbolic weight {w} in operational semantics; "
                                "instantiate the network first")
            out.append((w, node.with_proc(q)))
        return out

    def _product(self, net: Network, factors: dict[str, list[tuple[Fraction, Node]]]) -> dict[int, Fraction]:
        """Distribution product over per-node successor factors."""
        names = [n.name for n in net.nodes if n.name in factors]
        acc: list[tuple[Fraction, dict[str, Node]]] = [(Fraction(1), {})]
        for name in names:
            nxt = []
            for w0, chosen in acc:
                for w, nd in factors[name]:
                    nxt.append((w0 * w, {**chosen, name: nd}))
            acc = nxt
        out: dict[int, Fraction] = {}
        for w, chosen in acc:
            succ = Network(tuple(chosen.get(n.name, n) for n in net.nodes))
            sid = self.state_id(succ)
            out[sid] = out.get(sid, Fraction(0)) + w
        return out

    def _derive(self, net: Network) -> tuple[tuple[Label, int], ...]:
        if net.stuck:
            return ()
        heads = {n.name: unfolded(n.proc) for n in net.nodes}
        names = net.names()
        moves: list[tuple[Label, int]] = []

        def listening(n: Node, sender: str) -> Optional[Recv]:
            h = heads[n.name]
            if isinstance(h, Recv) and sender in n.nbrs:
                return h
            return None

        # internal tau prefixes
        for n in net.nodes:
            h = heads[n.name]
            if isinstance(h, TauP):
                dist = self._product(net, {n.name: self._sem(net, n.name, h.cont)})
                moves.append((TAU, self.dist_id(dist)))

        # broadcasts: sender resolves, every listening in-range node receives,
        # everyone else is unaffected; the label is rewritten by reach
        for n in net.nodes:
            h = heads[n.name]
            if not isinstance(h, Bcast):
                continue
            if not isinstance(h.value, Value):
                raise ValueError(f"open broadcast payload at node {n.name}")
            factors = {n.name: self._sem(net, n.name, h.cont)}
            for other in net.nodes:
                if other.name == n.name:
                    continue
                rcv = listening(other, n.name)
                if rcv is not None:
                    cont = Choice(tuple(
                        (w, subst_value(q, rcv.var, h.value)) for w, q in rcv.then.branches))
                    factors[other.name] = self._sem(net, other.name, cont)
            dist = self._product(net, factors)
            reach = frozenset(n.nbrs - names)
            label: Label = TAU if not reach else Obs(h.value.sym, reach)
            moves.append((label, self.dist_id(dist)))

        # time passes only when no node holds an instantaneous head
        blocked = any(isinstance(heads[n.name], (TauP, Bcast)) for n in net.nodes)
        if not blocked:
            factors = {}
            for n in net.nodes:
                h = heads[n.name]
                if isinstance(h, Sleep):
                    factors[n.name] = self._sem(net, n.name, h.cont)
                elif isinstance(h, Recv):
                    factors[n.name] = self._sem(net, n.name, h.timeout)
                elif not isinstance(h, Nil):
                    raise ValueError(f"unexpected process head at {n.name}: {h}")
            moves.append((SIGMA, self.dist_id(self._product(net, factors))))

        # input-enabled reception from declared external senders
        for sender in sorted(self.setting.externals):
            for val in sorted(self.setting.values):
                factors = {}
                for n in net.nodes:
                    rcv = listening(n, sender)
                    if rcv is not None:
                        cont = Choice(tuple(
                            (w, subst_value(q, rcv.var, Value(val))) for w, q in rcv.then.branches))
                        factors[n.name] = self._sem(net, n.name, cont)
                moves.append((Rcv(sender, val), self.dist_id(self._product(net, factors))))

        dedup = sorted(set(moves), key=lambda m: (label_key(m[0]), m[1]))
        return tuple(dedup)

    def sigma_step(self, m: Network) -> Optional[SubDist]:
        for lbl, did in self.strong(self.state_id(m)):
            if isinstance(lbl, Sigma):
                return self.subdist(did)
        return None

    # -- reachability ------------------------------------------------------

    def reachable(self, m: Network, budget: Optional[int] = None):
        """BFS over strong steps; returns (state ids, edges, closed)."""
        budget = budget if budget is not None else self.state_budget
        root = self.state_id(m)
        seen = [root]
        seen_set = {root}
        edges: list[tuple[int, Label, int]] = []
        i = 0
        closed = True
        while i < len(seen):
            sid = seen[i]
            i += 1
            for lbl, did in self.strong(sid):
                edges.append((sid, lbl, did))
                for tgt, _ in self.dist(did):
                    if tgt not in seen_set:
                        if len(seen) >= budget:
                            closed = False
                            continue
                        seen_set.add(tgt)
                        seen.append(tgt)
        if not closed:
            raise BudgetExceeded(
                f"reachable-state budget {budget} exhausted from {m}")
        return seen, edges

    def dump(self, m: Network, budget: Optional[int] = None) -> str:
        """Deterministic line-oriented pLTS dump for golden tests."""
        seen, edges = self.reachable(m, budget)
        order = {sid: i for i, sid in enumerate(seen)}
        lines = [f"state {order[sid]} {self.state(sid)}" for sid in seen]
        for sid, lbl, did in edges:
            targets = " ".join(
                f"{w}:{order[t]}" for t, w in sorted(self.dist(did), key=lambda e: order[e[0]]))
            lines.append(f"trans {order[sid]} {lbl} -> {targets}")
        return "\n".join(lines) + "\n"

    # -- weak transitions ----------------------------------------------------

    def _tau_options(self, sid: int) -> tuple[Optional[int], ...]:
        opts: list[Optional[int]] = [None]
        for lbl, did in self.strong(sid):
            if isinstance(lbl, Tau):
                opts.append(did)
        return tuple(opts)

    def _alpha_options(self, sid: int, label: Label) -> tuple[int, ...]:
        return tuple(did for lbl, did in self.strong(sid) if lbl == label)

    def _combine(self, base: tuple[tuple[int, Fraction], ...],
                 chosen: dict[int, Optional[int]]) -> int:
        out: dict[int, Fraction] = {}
        for s, w in base:
            pick = chosen.get(s, None)
            if pick is None:
                out[s] = out.get(s, Fraction(0)) + w
            else:
                for t, wt in self.dist(pick):
                    out[t] = out.get(t, Fraction(0)) + w * wt
        return self.dist_id(out)

    def tau_closure(self, did: int) -> tuple[int, ...]:
        """All sub-distributions reachable by chains of per-state
        stay-or-internal-step moves (the reflexive-transitive weak closure)."""
        cached = self._tau_closure.get(did)
        if cached is not None:
            return cached
        seen = {did}
        frontier = [did]
        while frontier:
            cur = frontier.pop()
            base = self.dist(cur)
            per_state = [(s, self._tau_options(s)) for s, _ in base]
            if all(len(opts) == 1 for _, opts in per_state):
                continue
            for combo in itertools.product(*(opts for _, opts in per_state)):
                if all(c is None for c in combo):
                    continue
                nxt = self._combine(base, {s: c for (s, _), c in zip(per_state, combo)})
                if nxt not in seen:
                    if len(seen) >= self.closure_budget:
                        raise BudgetExceeded(
                            f"internal-step closure budget {self.closure_budget} exhausted")
                    seen.add(nxt)
                    frontier.append(nxt)
        out = tuple(sorted(seen))
        self._tau_closure[did] = out
        return out

    def _alpha_step_dists(self, did: int, label: Label) -> list[int]:
        """One visible step from a sub-distribution: every support state able
        to fire does (choosing one derivative each), the rest lose their mass."""
        base = self.dist(did)
        firing = [(s, self._alpha_options(s, label)) for s, _ in base]
        firing = [(s, opts) for s, opts in firing if opts]
        if not firing:
            return []
        fire_set = {s for s, _ in firing}
        kept = tuple((s, w) for s, w in base if s in fire_set)
        out = []
        for combo in itertools.product(*(opts for _, opts in firing)):
            out.append(self._combine(kept, {s: c for (s, _), c in zip(firing, combo)}))
        return sorted(set(out))

    def _useful_alpha_base(self, did: int, label: Label) -> bool:
        # A support state that can still step internally but cannot fire the
        # label would just forfeit its mass; letting it run on is never worse
        # (forfeited mass pays the maximal stuck-network cost), so such
        # distributions are redundant firing points.
        for s, _ in self.dist(did):
            opts = self._tau_options(s)
            if len(opts) > 1 and not self._alpha_options(s, label):
                return False
        return True

    def weak_answers(self, sid: int, label: Label) -> tuple[int, ...]:
        """Enumerated weak transitions from a state, one per deterministic
        per-state scheduler, pruned of pointwise-dominated results."""
        key = (sid, label)
        cached = self._weak.get(key)
        if cached is not None:
            return cached
        start = self.dirac_id(sid)
        if isinstance(label, Tau):
            result = set(self.tau_closure(start))
        else:
            result = set()
            for pre in self.tau_closure(start):
                if not self._useful_alpha_base(pre, label):
                    continue
                for mid in self._alpha_step_dists(pre, label):
                    result.update(self.tau_closure(mid))
        out = self._prune_dominated(sorted(result))
        self._weak[key] = out
        return out

    def _prune_dominated(self, dids: list[int]) -> tuple[int, ...]:
        # Replacing padded-out mass with real mass can only lower transport
        # cost (the stuck network is at maximal distance from everything),
        # so any answer pointwise below another is redundant.
        if len(dids) <= 1 or len(dids) > 600:
            return tuple(dids)
        maps = {d: dict(self.dist(d)) for d in dids}
        masses = {d: self.dist_mass(d) for d in dids}
        keep = []
        for d in dids:
            dominated = any(
                e != d and masses[e] >= masses[d]
                and all(w <= maps[e].get(s, Fraction(0)) for s, w in maps[d].items())
                for e in dids)
            if not dominated:
                keep.append(d)
        return tuple(keep)

    def weak_step(self, delta: SubDist, label: Label) -> list[SubDist]:
        """Public wrapper over the weak relation, on sub-distribution values."""
        did = self.dist_id({self.state_id(m): w for m, w in delta.support})
        if isinstance(label, Tau):
            outs = self.tau_closure(did)
        else:
            outs = set()
            for pre in self.tau_closure(did):
                for mid in self._alpha_step_dists(pre, label):
                    outs.update(self.tau_closure(mid))
            outs = sorted(outs)
        return [self.subdist(d) for d in outs]

    def max_tau_mass(self, start: Network, target: Network) -> Fraction:
        """Largest probability of settling exactly on ``target`` along weak
        internal steps; the premise engine for goes-to style laws."""
        tid = self.state_id(target)
        best = Fraction(0)
        for did in self.tau_closure(self.dirac_id(self.state_id(start))):
            for s, w in self.dist(did):
                if s == tid and w > best:
                    best = w
        return best


def setting_for(*nets: Network, externals: Iterable[str] = ("tester",),
                extra_values: Iterable[str] = (),
                transmitting: Iterable[str] = ()) -> Setting:
    from .calculus import syntactic_values

    vals = set(extra_values)
    for n in nets:
        vals |= syntactic_values(n)
    return Setting(frozenset(externals), frozenset(vals), frozenset(transmitting))


def game_moves(lts: Lts, sid: int) -> tuple[tuple[Label, int], ...]:
    """Strong moves that count in simulation games: reception from an
    external that cannot transmit is not a move the environment can force."""
    silent = lts.setting.externals - lts.setting.transmitting
    return tuple((lbl, did) for lbl, did in lts.strong(sid)
                 if not (isinstance(lbl, Rcv) and lbl.sender in silent))
