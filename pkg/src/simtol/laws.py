"""Algebraic laws as checkable rewrite steps with tolerance certificates.

A ``Derivation`` is the judgment "system simulates target within tol",
i.e. the simulation distance from target to system is at most tol.  Laws
rewrite a network towards its idealized form and emit one derivation step
each; chains compose them by transitivity.  Side conditions are machine
checked: structural ones syntactically, semantic ones (weak-reach masses,
time-blockedness) by running the transition engine, at the concrete gossip
probability or, for symbolic networks, at a fixed set of sample
probabilities exceeding the polynomial degrees involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

from .calculus import (
    Bcast, Choice, Fix, Network, Nil, Node, PVar, Process, Recv, Sleep,
    Tau as TauP, Value, ValueExpr, ValueVar, canonical_form, canonical_process,
    choice, instantiate, one,
)
from .gossip import (
    mk_fwd, mk_fwdc, mk_fwdu, mk_resnd, mk_resndc, mk_resndu, mk_snd, mk_sndu,
)
from .poly import Poly, Weight, weight_eval
from .semantics import Lts, Obs, Rcv, Setting, Sigma, Tau, setting_for, unfolded

SAMPLE_PS = tuple(Fraction(a, b) for a, b in
                  ((1, 7), (1, 5), (1, 3), (2, 5), (1, 2), (3, 5), (7, 9), (9, 10)))


class LawError(ValueError):
    """A law's shape or side condition failed; the message names it."""


# ---------------------------------------------------------------------------
# one-round syntactic reachability


def _head_reachable(proc: Process, kind, fixes: frozenset[str] = frozenset()) -> bool:
    if isinstance(proc, kind):
        return True
    if isinstance(proc, TauP):
        return any(_head_reachable(q, kind, fixes) for _, q in proc.cont.branches)
    if isinstance(proc, Fix):
        if proc.name in fixes:
            return False
        return _head_reachable(proc.body, kind, fixes | {proc.name})
    return False


def can_transmit_now(proc: Process) -> bool:
    """Can a broadcast fire before the round ends, resolving only internal
    coins?  Receivers block: they need someone else to send first."""
    return _head_reachable(proc, Bcast)


def can_receive_now(proc: Process) -> bool:
    return _head_reachable(proc, Recv)


def is_receiver_now(proc: Process) -> bool:
    return isinstance(unfolded(proc), Recv)


def can_transmit_now_semantic(lts: Lts, node: Node) -> bool:
    """Transition-system fallback for the syntactic check: explore the
    single node's internal moves within the current round."""
    net = Network((node,))
    seen = {lts.state_id(net)}
    todo = list(seen)
    while todo:
        sid = todo.pop()
        if isinstance(unfolded(lts.state(sid).nodes[0].proc), Bcast):
            return True
        for lbl, did in lts.strong(sid):
            if isinstance(lbl, (Tau, Obs)):
                if isinstance(lbl, Obs):
                    return True
                for tgt, _ in lts.dist(did):
                    if tgt not in seen:
                        seen.add(tgt)
                        todo.append(tgt)
    return False


# ---------------------------------------------------------------------------
# process shape matchers (verified by rebuild-and-compare)


def _canon_eq(a: Process, b: Process) -> bool:
    return canonical_process(a) == canonical_process(b)


def match_snd(proc: Process) -> Optional[tuple[ValueExpr, Weight]]:
    if not isinstance(proc, TauP):
        return None
    val: Optional[ValueExpr] = None
    p: Optional[Weight] = None
    for w, q in proc.cont.branches:
        if isinstance(q, Bcast):
            val, p = q.value, w
    if val is None:
        return None
    if not _canon_eq(proc, mk_snd(val, p)):
        return None
    return val, p


def match_resnd(proc: Process) -> Optional[tuple[ValueExpr, Weight]]:
    if isinstance(proc, Sleep) and len(proc.cont.branches) == 1:
        inner = match_snd(proc.cont.branches[0][1])
        if inner and _canon_eq(proc, mk_resnd(*inner)):
            return inner
    return None


def match_fwd(proc: Process) -> Optional[Weight]:
    if not isinstance(proc, Fix):
        return None
    body = proc.body
    if not isinstance(body, Recv) or len(body.then.branches) != 1:
        return None
    inner = match_resnd(body.then.branches[0][1])
    if inner and _canon_eq(proc, mk_fwd(inner[1])):
        return inner[1]
    return None


def match_resndc(proc: Process) -> Optional[tuple[ValueExpr, Weight]]:
    if isinstance(proc, Recv) and len(proc.timeout.branches) == 1:
        inner = match_snd(proc.timeout.branches[0][1])
        if inner and _canon_eq(proc, mk_resndc(*inner)):
            return inner
    return None


def match_fwdc(proc: Process) -> Optional[Weight]:
    if not isinstance(proc, Fix):
        return None
    body = proc.body
    if not isinstance(body, Recv) or len(body.then.branches) != 1:
        return None
    inner = match_resndc(body.then.branches[0][1])
    if inner and _canon_eq(proc, mk_fwdc(inner[1])):
        return inner[1]
    return None


def match_sndu(proc: Process) -> Optional[tuple[ValueExpr, Weight, int]]:
    if not isinstance(proc, TauP):
        return None
    for w, q in proc.cont.branches:
        if not isinstance(q, TauP):
            continue
        k = len(q.cont.branches)
        for _, delayed in q.cont.branches:
            d = 0
            inner = delayed
            while isinstance(inner, Sleep) and len(inner.cont.branches) == 1:
                inner = inner.cont.branches[0][1]
                d += 1
            got = match_snd(inner)
            if got and _canon_eq(proc, mk_sndu(got[0], w, k)):
                return got[0], w, k
    return None


def match_resndu(proc: Process) -> Optional[tuple[ValueExpr, Weight, int]]:
    if isinstance(proc, Recv) and len(proc.timeout.branches) == 1:
        inner = match_sndu(proc.timeout.branches[0][1])
        if inner and _canon_eq(proc, mk_resndu(*inner)):
            return inner
    return None


def match_fwdu(proc: Process) -> Optional[tuple[Weight, int]]:
    if not isinstance(proc, Fix):
        return None
    body = proc.body
    if not isinstance(body, Recv) or len(body.then.branches) != 1:
        return None
    inner = match_resndu(body.then.branches[0][1])
    if inner and _canon_eq(proc, mk_fwdu(inner[1], inner[2])):
        return inner[1], inner[2]
    return None


# ---------------------------------------------------------------------------
# derivations


@dataclass(frozen=True)
class Derivation:
    """``system`` weakly simulates ``target`` within ``tol``."""

    target: Network
    system: Network
    tol: Weight
    rule: str
    evidence: tuple[str, ...] = ()
    children: tuple["Derivation", ...] = ()

    def tol_at(self, p: Fraction) -> Fraction:
        return min(Fraction(1), weight_eval(self.tol, p))

    def pretty(self, p: Optional[Fraction] = None, indent: int = 0) -> str:
        pad = "  " * indent
        val = f" = {self.tol_at(p)}" if p is not None else ""
        lines = [f"{pad}[{self.rule}] tolerance {self.tol}{val}"]
        for e in self.evidence:
            lines.append(f"{pad}  - {e}")
        for c in self.children:
            lines.append(c.pretty(p, indent + 1))
        return "\n".join(lines)


def _is_symbolic(net: Network) -> bool:
    from .gossip import _weights_of

    return any(isinstance(w, Poly) and not w.is_constant() for w in _weights_of(net))


class LawEngine:
    """Applies laws with machine-checked side conditions.

    Externals are assumed silent (they can hear, never speak), matching the
    role of the observing tester in every catalog case.
    """

    def __init__(self, externals: Iterable[str] = ("tester",),
                 sample_ps: Sequence[Fraction] = SAMPLE_PS):
        self.externals = frozenset(externals)
        self.sample_ps = tuple(sample_ps)
        self._lts: dict[tuple, Lts] = {}

    # -- semantic probes ----------------------------------------------------

    def _samples(self, *nets: Network) -> tuple[Fraction, ...]:
        if any(_is_symbolic(n) for n in nets):
            return self.sample_ps
        return (Fraction(0),)

    def _lts_at(self, p: Fraction, *nets: Network) -> tuple[Lts, list[Network]]:
        inst = [instantiate(n, p) for n in nets]
        setting = setting_for(*inst, externals=self.externals)
        key = (p, setting.values)
        lts = self._lts.get(key)
        if lts is None:
            lts = Lts(setting)
            self._lts[key] = lts
        return lts, inst

    def _check_reach(self, system: Network, target: Network, q: Weight, rule: str):
        """system must weakly reach target internally with mass >= 1-q."""
        for p in self._samples(system, target):
            lts, (s, t) = self._lts_at(p, system, target)
            need = 1 - weight_eval(q, p)
            got = lts.max_tau_mass(s, t)
            if got < need:
                raise LawError(
                    f"{rule}: internal reach mass {got} < required {need} at p={p}")

    def _check_time_blocked(self, net: Network, rule: str):
        for p in self._samples(net):
            lts, (m,) = self._lts_at(p, net)
            if lts.sigma_step(m) is not None:
                raise LawError(f"{rule}: network can let time pass at p={p}")

    def _check_only_tick(self, net: Network, rule: str) -> None:
        """No internal move; a unique point time step; receptions idle."""
        for p in self._samples(net):
            lts, (m,) = self._lts_at(p, net)
            sid = lts.state_id(m)
            tick = None
            for lbl, did in lts.strong(sid):
                if isinstance(lbl, Tau) or isinstance(lbl, Obs):
                    raise LawError(f"{rule}: {m} has an internal/observable move")
                if isinstance(lbl, Sigma):
                    tick = did
                if isinstance(lbl, Rcv) and lbl.sender not in lts.setting.transmitting:
                    if lts.dist(did) != ((sid, Fraction(1)),):
                        raise LawError(f"{rule}: reception disturbs {m}")
            if tick is None or len(lts.dist(tick)) != 1:
                raise LawError(f"{rule}: {m} lacks a unique point time step")

    def _check_no_tau(self, net: Network, rule: str):
        for p in self._samples(net):
            lts, (m,) = self._lts_at(p, net)
            sid = lts.state_id(m)
            for lbl, _ in lts.strong(sid):
                if isinstance(lbl, (Tau, Obs)):
                    raise LawError(f"{rule}: {m} is not internally quiescent")

    # -- receive-silence of a sender's cell ---------------------------------

    def _silent_cell(self, net: Network, sender: str, receivers: frozenset[str],
                     rule: str) -> list[str]:
        notes = []
        snode = net.node(sender)
        for name in sorted(snode.nbrs):
            if name in receivers:
                continue
            if name in self.externals:
                notes.append(f"external {name} only listens")
                continue
            if name not in net.names():
                raise LawError(f"{rule}: neighbour {name} of {sender} unknown")
            if can_receive_now(net.node(name).proc):
                raise LawError(
                    f"{rule}: node {name} in the cell of {sender} can still "
                    "receive this round")
            notes.append(f"{name} cannot receive this round")
        return notes


def _tick_syntactic(net: Network) -> Network:
    """Deterministic time step computed node-wise (used under congruence)."""
    out = []
    for n in net.nodes:
        h = unfolded(n.proc)
        if isinstance(h, Nil):
            out.append(n)
        elif isinstance(h, Sleep) and len(h.cont.branches) == 1:
            out.append(n.with_proc(h.cont.branches[0][1]))
        elif isinstance(h, Recv) and len(h.timeout.branches) == 1:
            out.append(n.with_proc(h.timeout.branches[0][1]))
        else:
            raise LawError(f"node {n.name} has no deterministic time step")
    return Network(tuple(out))


# ---------------------------------------------------------------------------
# chains


class Chain:
    """Rewrites a network stepwise towards an idealized form, accumulating
    the simulation tolerance by transitivity.  The start network is the
    simulating side; each step's result is simulated by its predecessor."""

    def __init__(self, engine: LawEngine, start: Network):
        self.engine = engine
        self.start = canonical_form(start)
        self.current = self.start
        self.steps: list[Derivation] = []

    def _push(self, nxt: Network, tol: Weight, rule: str,
              evidence: Iterable[str], children: tuple[Derivation, ...] = ()):
        nxt = canonical_form(nxt)
        self.steps.append(Derivation(nxt, self.current, tol, rule,
                                     tuple(evidence), children))
        self.current = nxt
        return self

    def total(self) -> Weight:
        tol: Weight = Fraction(0)
        for s in self.steps:
            tol = tol + s.tol
        return tol

    def judgment(self, rule: str = "transitivity") -> Derivation:
        if len(self.steps) == 1:
            return self.steps[0]
        return Derivation(self.current, self.start, self.total(), rule,
                          (f"chain of {len(self.steps)} steps",), tuple(self.steps))

    # -- message propagation --------------------------------------------------

    def propagation(self, senders: Sequence[str], forwarders: Sequence[str]):
        """Senders gossip once; every forwarder in all their cells ends up
        loaded for retransmission.  Tolerance: all senders stay silent."""
        net = self.current
        ev: list[str] = []
        val: Optional[ValueExpr] = None
        ps: list[Weight] = []
        for m in senders:
            got = match_snd(net.node(m).proc)
            if got is None:
                raise LawError(f"message-propagation: {m} is not a one-shot gossip sender")
            v, p = got
            if val is not None and v != val:
                raise LawError("message-propagation: senders carry different values")
            val, _ = got
            ps.append(p)
        if not isinstance(val, Value):
            raise LawError("message-propagation: open payload")
        qs = {}
        for n in forwarders:
            q = match_fwd(net.node(n).proc)
            if q is None:
                raise LawError(f"message-propagation: {n} is not a forwarder")
            qs[n] = q
        self._propagation_conditions(net, senders, forwarders, ev, "message-propagation")
        nxt = net
        for m in senders:
            nxt = nxt.with_proc(m, Nil())
        for n in forwarders:
            nxt = nxt.with_proc(n, mk_resnd(val, qs[n]))
        tol: Weight = Fraction(1)
        for p in ps:
            tol = tol * (1 - p)
        ev.append(f"tolerance = product of silence probabilities over {len(ps)} sender(s)")
        return self._push(nxt, tol, "message-propagation", ev)

    def propagation_collisions(self, senders: Sequence[str], forwarders: Sequence[str]):
        """Collision-sensitive forwarding succeeds only when exactly one
        sender transmits."""
        net = self.current
        ev: list[str] = []
        val: Optional[ValueExpr] = None
        ps: list[Weight] = []
        for m in senders:
            got = match_snd(net.node(m).proc)
            if got is None:
                raise LawError(f"collision-propagation: {m} is not a one-shot gossip sender")
            v, p = got
            if val is not None and v != val:
                raise LawError("collision-propagation: senders carry different values")
            val = v
            ps.append(p)
        if not isinstance(val, Value):
            raise LawError("collision-propagation: open payload")
        qs = {}
        for n in forwarders:
            q = match_fwdc(net.node(n).proc)
            if q is None:
                raise LawError(f"collision-propagation: {n} is not a collision-aware forwarder")
            qs[n] = q
        self._propagation_conditions(net, senders, forwarders, ev, "collision-propagation")
        nxt = net
        for m in senders:
            nxt = nxt.with_proc(m, Nil())
        for n in forwarders:
            nxt = nxt.with_proc(n, mk_resndc(val, qs[n]))
        exactly_one: Weight = Fraction(0)
        for i, p in enumerate(ps):
            term: Weight = p
            for j, pj in enumerate(ps):
                if j != i:
                    term = term * (1 - pj)
            exactly_one = exactly_one + term
        ev.append("tolerance = 1 - probability that exactly one sender transmits")
        return self._push(nxt, 1 - exactly_one, "collision-propagation", ev)

    def propagation_random(self, sender: str, forwarders: Sequence[str]):
        """A committed sender always loads every randomized-delay forwarder
        in its cell: tolerance zero."""
        net = self.current
        ev: list[str] = []
        got = match_snd(net.node(sender).proc)
        if got is None or got[1] != 1:
            raise LawError(f"random-delay-propagation: {sender} must send with probability 1")
        val = got[0]
        if not isinstance(val, Value):
            raise LawError("random-delay-propagation: open payload")
        qs = {}
        for n in forwarders:
            q = match_fwdu(net.node(n).proc)
            if q is None:
                raise LawError(f"random-delay-propagation: {n} is not a randomized forwarder")
            qs[n] = q
        self._propagation_conditions(net, [sender], forwarders, ev,
                                     "random-delay-propagation")
        nxt = net.with_proc(sender, Nil())
        for n in forwarders:
            nxt = nxt.with_proc(n, mk_resndu(val, qs[n][0], qs[n][1]))
        return self._push(nxt, Fraction(0), "random-delay-propagation", ev)

    def _propagation_conditions(self, net: Network, senders, forwarders, ev, rule):
        fwd_set = frozenset(forwarders)
        names = net.names()
        for m in senders:
            nbrs = net.node(m).nbrs
            if not fwd_set <= nbrs:
                raise LawError(f"{rule}: forwarders {sorted(fwd_set - nbrs)} "
                               f"outside the cell of {m}")
            if not nbrs <= names | self.engine.externals:
                raise LawError(f"{rule}: cell of {m} reaches unknown names")
            if not nbrs <= names:
                # silent externals may listen; their reception is unobservable
                # to the network and the propagation argument is unaffected
                ext = sorted(nbrs - names)
                ev.append(f"externals {ext} in cell of {m} are silent listeners")
            ev.extend(f"cell of {m}: {note}" for note in
                      self.engine._silent_cell(net, m, fwd_set | frozenset(senders), rule))

    # -- timing laws -----------------------------------------------------------

    def idle_elim(self, name: str):
        """Sleeping termination is termination."""
        proc = self.current.node(name).proc
        stripped, k = proc, 0
        while isinstance(stripped, Sleep) and len(stripped.cont.branches) == 1:
            stripped = stripped.cont.branches[0][1]
            k += 1
        if k == 0 or not isinstance(stripped, Nil):
            raise LawError(f"idle-elim: {name} does not run sleep^k.nil")
        return self._push(self.current.with_proc(name, Nil()), Fraction(0),
                          "idle-elim", (f"{name}: dropped {k} sleep prefix(es)",))

    def receiver_timeout(self, name: str):
        """A one-shot receiver with nobody around to send must time out."""
        net = self.current
        proc = net.node(name).proc
        if not isinstance(proc, Recv):
            raise LawError(f"receiver-timeout: {name} is not a one-shot receiver")
        ev = self._neighbours_silent(net, name, "receiver-timeout")
        nxt = net.with_proc(name, Sleep(proc.timeout))
        return self._push(nxt, Fraction(0), "receiver-timeout", ev)

    def receiver_wait(self, name: str):
        """A persistent receiver with nobody around to send just waits."""
        net = self.current
        proc = net.node(name).proc
        if not is_receiver_now(proc) or not isinstance(proc, Fix):
            raise LawError(f"receiver-wait: {name} is not a persistent receiver")
        ev = self._neighbours_silent(net, name, "receiver-wait")
        nxt = net.with_proc(name, Sleep(one(proc)))
        return self._push(nxt, Fraction(0), "receiver-wait", ev)

    def _neighbours_silent(self, net: Network, name: str, rule: str) -> list[str]:
        ev = []
        for o in sorted(net.node(name).nbrs):
            if o in self.engine.externals:
                ev.append(f"external {o} never transmits")
                continue
            if o not in net.names():
                raise LawError(f"{rule}: unknown neighbour {o}")
            if can_transmit_now(net.node(o).proc):
                raise LawError(f"{rule}: neighbour {o} may transmit this round")
            ev.append(f"{o} cannot transmit this round")
        return ev

    def lost_broadcast(self, name: str):
        """A gossip transmission nobody can receive evolves silently."""
        net = self.current
        got = match_snd(net.node(name).proc)
        if got is None:
            raise LawError(f"lost-broadcast: {name} is not a one-shot gossip sender")
        ev = []
        for o in sorted(net.node(name).nbrs):
            if o in self.engine.externals:
                raise LawError(
                    f"lost-broadcast: external {o} could observe the transmission")
            if o not in net.names():
                raise LawError(f"lost-broadcast: unknown neighbour {o}")
            if is_receiver_now(net.node(o).proc):
                raise LawError(f"lost-broadcast: neighbour {o} is listening")
            ev.append(f"{o} is not listening")
        return self._push(net.with_proc(name, Nil()), Fraction(0), "lost-broadcast", ev)

    def under_tick(self, script: Callable[["Chain"], None]):
        """Work underneath one time step: strip a sleep prefix from every
        node (idle nodes count as sleeping), rewrite, then re-wrap."""
        net = self.current
        stripped_nodes = []
        pumped = set()
        for n in net.nodes:
            if isinstance(n.proc, Nil):
                pumped.add(n.name)
                stripped_nodes.append(n)
            elif isinstance(n.proc, Sleep) and len(n.proc.cont.branches) == 1:
                stripped_nodes.append(n.with_proc(n.proc.cont.branches[0][1]))
            else:
                raise LawError(f"under-tick: node {n.name} is not sleeping")
        inner = Chain(self.engine, Network(tuple(stripped_nodes)))
        script(inner)
        rewrapped = []
        for n in inner.current.nodes:
            if n.name in pumped and isinstance(n.proc, Nil):
                rewrapped.append(n)
            else:
                rewrapped.append(n.with_proc(Sleep(one(n.proc))))
        ev = [f"idle nodes treated as sleeping: {sorted(pumped)}"] if pumped else []
        return self._push(Network(tuple(rewrapped)), inner.total(), "under-tick",
                          ev, tuple(inner.steps))

    # -- choice surgery ---------------------------------------------------------

    def tau_elim(self, name: str):
        """Drop a trivial internal step (single-branch choice)."""
        proc = self.current.node(name).proc
        if isinstance(proc, TauP):
            c = canonical_process(proc)
            assert isinstance(c, TauP)
            if len(c.cont.branches) == 1:
                return self._push(self.current.with_proc(name, c.cont.branches[0][1]),
                                  Fraction(0), "tau-elim", (f"{name}: trivial coin",))
        raise LawError(f"tau-elim: {name} does not start with a trivial internal step")

    def tau_intro(self, name: str):
        proc = self.current.node(name).proc
        return self._push(self.current.with_proc(name, TauP(one(proc))),
                          Fraction(0), "tau-intro", (f"{name}: inserted trivial coin",))

    def flatten_choice(self, name: str):
        """Hoist nested internal choices into one (probabilities multiply),
        merging equal branches."""
        proc = self.current.node(name).proc
        if not isinstance(proc, TauP):
            raise LawError(f"choice-flatten: {name} does not start with a choice")
        flat: list[tuple[Weight, Process]] = []
        hoisted = 0
        for w, q in proc.cont.branches:
            if isinstance(q, TauP):
                hoisted += 1
                for wq, qq in q.cont.branches:
                    flat.append((w * wq, qq))
            else:
                flat.append((w, q))
        if hoisted == 0:
            raise LawError(f"choice-flatten: nothing to hoist at {name}")
        nxt = self.current.with_proc(name, TauP(Choice(tuple(flat))))
        return self._push(nxt, Fraction(0), "choice-flatten",
                          (f"{name}: hoisted {hoisted} nested choice(s)",))

    def keep_branch(self, name: str, branch: Process):
        """Commit an internal choice to one branch; the tolerance is the
        discarded probability mass."""
        proc = self.current.node(name).proc
        if not isinstance(proc, TauP):
            raise LawError(f"keep-branch: {name} does not start with a choice")
        want = canonical_process(branch)
        kept: Optional[Weight] = None
        for w, q in proc.cont.branches:
            if canonical_process(q) == want:
                kept = w if kept is None else kept + w
        if kept is None:
            raise LawError(f"keep-branch: no branch of {name} matches")
        return self._push(self.current.with_proc(name, branch), 1 - kept,
                          "keep-branch", (f"{name}: kept branch of weight {kept}",))


# ---------------------------------------------------------------------------
# composition laws over finished derivations


def bound_one(engine: LawEngine, target: Network, system: Network) -> Derivation:
    """Distances are 1-bounded, so any pair is related with tolerance one."""
    return Derivation(canonical_form(target), canonical_form(system), Fraction(1),
                      "bound-one", ("maximal distance",))


def transitivity(a: Derivation, b: Derivation) -> Derivation:
    """Tolerances add along chained simulations."""
    if canonical_form(a.system) != canonical_form(b.target):
        raise LawError("transitivity: middle networks differ")
    return Derivation(a.target, b.system, a.tol + b.tol, "transitivity",
                      (), (a, b))


def parallel(j1: Derivation, j2: Derivation) -> Derivation:
    """Parallel composition is non-expansive: tolerances add (capped at 1)."""
    target = j1.target.par(j2.target)
    system = j1.system.par(j2.system)
    tol = j1.tol + j2.tol
    if isinstance(tol, Fraction):
        tol = min(Fraction(1), tol)
    return Derivation(canonical_form(target), canonical_form(system), tol,
                      "non-expansive-par", (), (j1, j2))


def sim_reach(engine: LawEngine, target: Network, system: Network,
              q: Weight) -> Derivation:
    """If the system internally reaches the target with probability 1-q,
    it simulates the target within q."""
    engine._check_reach(system, target, q, "reach")
    return Derivation(canonical_form(target), canonical_form(system), q, "reach",
                      (f"system reaches target internally with mass >= 1-({q})",))


def sim_concat(engine: LawEngine, sub: Derivation, system: Network,
               q: Weight) -> Derivation:
    """Prepend an internal reach of the sub-derivation's system: the prior
    tolerance is weighted by the reach probability."""
    engine._check_reach(system, sub.system, q, "reach-weighted")
    tol = sub.tol * (1 - q) + q
    return Derivation(sub.target, canonical_form(system), tol, "reach-weighted",
                      (f"reaches intermediate system with mass >= 1-({q})",), (sub,))


def sim_concat_tick(engine: LawEngine, sub: Derivation, system: Network,
                    q: Weight) -> Derivation:
    """Variant of reach-weighted where the reach happens right after one
    time step on both sides."""
    n = sub.system
    engine._check_only_tick(n, "reach-weighted-after-tick")
    n1 = _tick_syntactic(n)
    engine._check_no_tau(n1, "reach-weighted-after-tick")
    o1 = _tick_syntactic(system)
    for p in engine._samples(system):
        lts, (inst, want) = engine._lts_at(p, system, o1)
        step = lts.sigma_step(inst)
        if step is None or len(step.support) != 1:
            raise LawError("reach-weighted-after-tick: system lacks a point time step")
        if lts.state_id(step.support[0][0]) != lts.state_id(want):
            raise LawError("reach-weighted-after-tick: time step disagrees")
    engine._check_reach(o1, n1, q, "reach-weighted-after-tick")
    tol = sub.tol * (1 - q) + q
    return Derivation(sub.target, canonical_form(system), tol,
                      "reach-weighted-after-tick",
                      (f"after one time step, reaches with mass >= 1-({q})",), (sub,))


def compose_sender_branches(engine: LawEngine, net: Network, sender: str,
                            transmitted: Derivation, silent: Derivation) -> Derivation:
    """Split on a gossip sender's coin: weight the transmitted-branch and
    silent-branch tolerances by the gossip probability."""
    rule = "compose-sender-branches"
    net = canonical_form(net)
    got = match_snd(net.node(sender).proc)
    if got is None:
        raise LawError(f"{rule}: {sender} is not a one-shot gossip sender")
    val, p = got
    if not isinstance(val, Value):
        raise LawError(f"{rule}: open payload")
    names = net.names()
    nbrs = net.node(sender).nbrs
    receivers = frozenset(o for o in nbrs
                          if o in names and is_receiver_now(net.node(o).proc))
    ev = [f"{sender} transmits {val} with probability {p}",
          f"receivers in its cell: {sorted(receivers)}"]
    ev.extend(f"cell of {sender}: {note}" for note in
              engine._silent_cell(net, sender, receivers, rule))
    engine._check_time_blocked(net, rule)
    ev.append("time is blocked until the coin is resolved")

    loaded = net.with_proc(sender, Nil())
    for o in sorted(receivers):
        h = unfolded(net.node(o).proc)
        assert isinstance(h, Recv)
        if len(h.then.branches) != 1:
            raise LawError(f"{rule}: receiver {o} has a probabilistic receive branch")
        from .calculus import subst_value
        loaded = loaded.with_proc(o, subst_value(h.then.branches[0][1], h.var, val))
    quiet = net.with_proc(sender, Nil())

    if canonical_form(transmitted.system) != canonical_form(loaded):
        raise LawError(f"{rule}: transmitted branch proves the wrong network")
    if canonical_form(silent.system) != canonical_form(quiet):
        raise LawError(f"{rule}: silent branch proves the wrong network")
    if canonical_form(transmitted.target) != canonical_form(silent.target):
        raise LawError(f"{rule}: branches target different networks")
    tol = p * transmitted.tol + (1 - p) * silent.tol
    return Derivation(canonical_form(transmitted.target), net, tol, rule,
                      tuple(ev), (transmitted, silent))


def compose_paths(engine: LawEngine, net: Network, chooser: str,
                  branches: Sequence[tuple[Process, Derivation]]) -> Derivation:
    """Combine per-branch simulations of a node's internal choice into a
    choice-shaped target; tolerances mix with the branch probabilities."""
    rule = "compose-paths"
    net = canonical_form(net)
    proc = net.node(chooser).proc
    if not isinstance(proc, TauP):
        raise LawError(f"{rule}: {chooser} does not start with a choice")
    by_proc = {canonical_process(q): w for w, q in proc.cont.branches}
    if len(by_proc) != len(proc.cont.branches):
        raise LawError(f"{rule}: duplicate branches after canonicalization")
    supplied = {canonical_process(q) for q, _ in branches}
    if supplied != set(by_proc):
        raise LawError(f"{rule}: supplied branches do not match the choice")

    # every branch target must be all-idle except one shared node
    dname: Optional[str] = None
    base: Optional[Network] = None
    parts: list[tuple[Weight, Process, Derivation]] = []
    for q, sub in branches:
        want = canonical_form(net.with_proc(chooser, q))
        if canonical_form(sub.system) != want:
            raise LawError(f"{rule}: branch derivation proves the wrong network")
        tgt = canonical_form(sub.target)
        busy = [n.name for n in tgt.nodes if not isinstance(n.proc, Nil)]
        if len(busy) > 1:
            raise LawError(f"{rule}: branch target has several active nodes: {busy}")
        if busy:
            if dname is None:
                dname = busy[0]
            elif dname != busy[0]:
                raise LawError(f"{rule}: branch targets disagree on the active node")
        if base is None:
            base = tgt
        elif {n.name for n in base.nodes} != {n.name for n in tgt.nodes}:
            raise LawError(f"{rule}: branch targets have different node sets")
        parts.append((by_proc[canonical_process(q)], tgt, sub))
    if dname is None or base is None:
        raise LawError(f"{rule}: all branch targets are idle")

    mix = choice(*((w, tgt.node(dname).proc) for w, tgt, _ in parts))
    target = base.with_proc(dname, TauP(mix))
    tol: Weight = Fraction(0)
    for w, _, sub in parts:
        tol = tol + w * sub.tol
    return Derivation(canonical_form(target), net, tol, rule,
                      (f"{chooser}'s choice mixed into {dname}",),
                      tuple(sub for _, _, sub in parts))


def additive_choice(engine: LawEngine, net: Network, chooser: str,
                    branches: Sequence[tuple[Process, Derivation]]) -> Derivation:
    """All branch systems simulate one shared target; the choice-shaped
    system simulates it with the probability-weighted tolerance."""
    rule = "additive-choice"
    net = canonical_form(net)
    proc = net.node(chooser).proc
    if not isinstance(proc, TauP):
        raise LawError(f"{rule}: {chooser} does not start with a choice")
    by_proc = {canonical_process(q): w for w, q in proc.cont.branches}
    if {canonical_process(q) for q, _ in branches} != set(by_proc):
        raise LawError(f"{rule}: supplied branches do not match the choice")
    target: Optional[Network] = None
    tol: Weight = Fraction(0)
    subs = []
    for q, sub in branches:
        want = canonical_form(net.with_proc(chooser, q))
        if canonical_form(sub.system) != want:
            raise LawError(f"{rule}: branch derivation proves the wrong network")
        if target is None:
            target = canonical_form(sub.target)
        elif canonical_form(sub.target) != target:
            raise LawError(f"{rule}: branches target different networks")
        tol = tol + by_proc[canonical_process(q)] * sub.tol
        subs.append(sub)
    assert target is not None
    return Derivation(target, net, tol, rule, (), tuple(subs))


# ---------------------------------------------------------------------------
# the five simple choice laws, as single-node instances


def simple_law_instance(rule: int, name: str = "n", nbrs: Iterable[str] = ("obs",),
                        **kw) -> Derivation:
    """Instantiate one of the five basic choice laws on a single node.

    Returns the judgment relating the plain behaviour (target) to its
    probabilistic elaboration (system); callers can cross-check the stated
    tolerance against the computed simulation distance.
    """
    nbrs = frozenset(nbrs)

    def net(proc: Process) -> Network:
        return Network((Node(name, nbrs, proc),))

    if rule == 1:
        P, Q, p = kw["P"], kw["Q"], kw["p"]
        return Derivation(canonical_form(net(P)),
                          canonical_form(net(TauP(choice((p, P), (1 - p, Q))))),
                          1 - p, "simple-1")
    if rule == 2:
        P, Q, R, p, q = kw["P"], kw["Q"], kw["R"], kw["p"], kw["q"]
        inner = TauP(choice((q, P), (1 - q, Q)))
        sys_proc = TauP(choice((p, inner), (1 - p, R)))
        return Derivation(canonical_form(net(Q)), canonical_form(net(sys_proc)),
                          (1 - p) + p * q, "simple-2")
    if rule == 3:
        ps, qs, mat = kw["ps"], kw["qs"], kw["P"]
        flat = choice(*((pi * qj, mat[i][j])
                        for i, pi in enumerate(ps) for j, qj in enumerate(qs)))
        nested = choice(*((pi, TauP(choice(*((qj, mat[i][j])
                                             for j, qj in enumerate(qs)))))
                          for i, pi in enumerate(ps)))
        return Derivation(canonical_form(net(TauP(flat))),
                          canonical_form(net(TauP(nested))),
                          Fraction(0), "simple-3")
    if rule == 4:
        P, Q, v, p, q = kw["P"], kw["Q"], kw["v"], kw["p"], kw["q"]
        lhs = Bcast(v, choice((p, TauP(choice((q, P), (1 - q, TauP(one(P)))))),
                              (1 - p, Q)))
        rhs = Bcast(v, choice((p, P), (1 - p, TauP(one(Q)))))
        return Derivation(canonical_form(net(lhs)), canonical_form(net(rhs)),
                          Fraction(0), "simple-4", ("two-sided",))
    if rule == 5:
        P, Q, v, w, p, q = kw["P"], kw["Q"], kw["v"], kw["w"], kw["p"], kw["q"]
        bare = Bcast(v, one(Bcast(w, one(Nil()))))
        padded = TauP(choice(
            (p, Bcast(v, one(TauP(choice((q, Bcast(w, one(Nil()))), (1 - q, P)))))),
            (1 - p, Q)))
        return Derivation(canonical_form(net(bare)), canonical_form(net(padded)),
                          1 - p * q, "simple-5")
    raise LawError(f"no simple law numbered {rule}")
