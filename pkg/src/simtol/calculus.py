"""Abstract syntax for timed probabilistic broadcast networks.

A network is a flat parallel composition of named nodes; each node runs a
sequential process over a shared radio channel.  Processes are immutable
values; all operations here are pure.

Probability weights are exact: plain ``Fraction`` for concrete networks or
``Poly`` in the gossip probability ``p`` for symbolic reasoning.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Union

from .poly import Poly, Weight, as_weight, weight_key

# ---------------------------------------------------------------------------
# values


@dataclass(frozen=True)
class Value:
    """Closed value: an opaque atom, equal iff symbols are equal."""

    sym: str

    def __str__(self):
        return self.sym


@dataclass(frozen=True)
class ValueVar:
    """Occurrence of a receive-bound value variable."""

    name: str

    def __str__(self):
        return self.name


ValueExpr = Union[Value, ValueVar]


# ---------------------------------------------------------------------------
# processes


class Process:
    """Base class; concrete forms below."""

    __slots__ = ()


@dataclass(frozen=True)
class Nil(Process):
    def __str__(self):
        return "nil"


@dataclass(frozen=True)
class Choice:
    """Probabilistic choice: non-empty weighted branches summing to one.

    The singleton ``1:P`` is the canonical deterministic continuation.
    """

    branches: tuple[tuple[Weight, Process], ...]

    def __post_init__(self):
        if not self.branches:
            raise ValueError("empty probabilistic choice")
        total = self.branches[0][0]
        for w, _ in self.branches[1:]:
            total = total + w
        if not _weight_is_one(total):
            raise ValueError(f"branch weights sum to {total}, not 1")
        for w, _ in self.branches:
            if isinstance(w, Fraction) and not 0 < w <= 1:
                raise ValueError(f"branch weight {w} outside (0,1]")

    def __str__(self):
        if len(self.branches) == 1:
            return str(self.branches[0][1])
        inner = " + ".join(f"{w}:{p}" for w, p in self.branches)
        return f"({inner})"


def _weight_is_one(w: Weight) -> bool:
    if isinstance(w, Poly):
        return w == Poly.const(1)
    return w == 1


def one(p: Process) -> Choice:
    return Choice(((Fraction(1), p),))


def choice(*branches: tuple[object, Process]) -> Choice:
    """Build a choice, normalizing weights and dropping zero-weight branches."""
    out = []
    for w, p in branches:
        w = as_weight(w)
        if isinstance(w, Fraction) and w == 0:
            continue
        out.append((w, p))
    return Choice(tuple(out))


@dataclass(frozen=True)
class Bcast(Process):
    value: ValueExpr
    cont: Choice

    def __str__(self):
        return f"!<{self.value}>.{self.cont}"


@dataclass(frozen=True)
class Recv(Process):
    """Receiver with timeout: bind ``var`` in ``then`` on reception this
    round, otherwise continue as ``timeout`` after the round ends."""

    var: str
    then: Choice
    timeout: Choice

    def __str__(self):
        return f"?({self.var}).{self.then} else {self.timeout}"


@dataclass(frozen=True)
class Tau(Process):
    cont: Choice

    def __str__(self):
        return f"tau.{self.cont}"


@dataclass(frozen=True)
class Sleep(Process):
    cont: Choice

    def __str__(self):
        return f"sigma.{self.cont}"


@dataclass(frozen=True)
class PVar(Process):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Fix(Process):
    """Time-guarded recursion: every occurrence of ``name`` in ``body`` sits
    under a Sleep prefix or in a Recv timeout branch."""

    name: str
    body: Process

    def __str__(self):
        return f"fix {self.name}.{self.body}"


def sleepn(k: int, p: Process) -> Process:
    for _ in range(k):
        p = Sleep(one(p))
    return p


# ---------------------------------------------------------------------------
# nodes and networks


@dataclass(frozen=True)
class Node:
    name: str
    nbrs: frozenset[str]
    proc: Process

    def with_proc(self, proc: Process) -> "Node":
        return Node(self.name, self.nbrs, proc)

    def __str__(self):
        nbrs = ",".join(sorted(self.nbrs))
        return f"{self.name}[{self.proc}]^{{{nbrs}}}"


@dataclass(frozen=True)
class Network:
    """Flat, name-sorted parallel composition; ``stuck`` is the deadlocked
    network used internally by the metric, never in user input."""

    nodes: tuple[Node, ...] = ()
    stuck: bool = False
    _hash: Optional[int] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.stuck and self.nodes:
            raise ValueError("the stuck network has no nodes")
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate node names: {names}")
        if list(names) != sorted(names):
            object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.name)))
        object.__setattr__(self, "_hash", hash((self.stuck, self.nodes)))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.stuck == other.stuck and self.nodes == other.nodes

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(f"no node named {name}")

    def names(self) -> frozenset[str]:
        return frozenset(n.name for n in self.nodes)

    def with_node(self, node: Node) -> "Network":
        return Network(tuple(node if n.name == node.name else n for n in self.nodes))

    def with_proc(self, name: str, proc: Process) -> "Network":
        return self.with_node(self.node(name).with_proc(proc))

    def without(self, names: Iterable[str]) -> "Network":
        drop = set(names)
        return Network(tuple(n for n in self.nodes if n.name not in drop))

    def par(self, other: "Network") -> "Network":
        if self.stuck or other.stuck:
            raise ValueError("cannot compose with the stuck network")
        return Network(self.nodes + other.nodes)

    def __str__(self):
        if self.stuck:
            return "<stuck>"
        if not self.nodes:
            return "0"
        return " | ".join(str(n) for n in self.nodes)


EMPTY = Network()
STUCK = Network(stuck=True)


def network(*nodes: Node) -> Network:
    return Network(tuple(nodes))


def nodes(m: Network) -> frozenset[str]:
    return m.names()


def cell(name: str, m: Network) -> frozenset[str]:
    """Neighbour set of a node of ``m``."""
    return m.node(name).nbrs


# ---------------------------------------------------------------------------
# substitution

# Value substitution: the substituted value is a closed atom, so capture is
# impossible; only shadowing by a same-named Recv binder matters.


def subst_value(p: Process, x: str, v: Value) -> Process:
    def val(e: ValueExpr) -> ValueExpr:
        return v if isinstance(e, ValueVar) and e.name == x else e

    def go(p: Process) -> Process:
        if isinstance(p, Nil) or isinstance(p, PVar):
            return p
        if isinstance(p, Bcast):
            return Bcast(val(p.value), go_choice(p.cont))
        if isinstance(p, Recv):
            then = p.then if p.var == x else go_choice(p.then)
            return Recv(p.var, then, go_choice(p.timeout))
        if isinstance(p, Tau):
            return Tau(go_choice(p.cont))
        if isinstance(p, Sleep):
            return Sleep(go_choice(p.cont))
        if isinstance(p, Fix):
            return Fix(p.name, go(p.body))
        raise TypeError(p)

    def go_choice(c: Choice) -> Choice:
        return Choice(tuple((w, go(q)) for w, q in c.branches))

    return go(p)


def subst_proc(p: Process, name: str, repl: Process) -> Process:
    """Substitute a process variable; ``repl`` must be closed."""

    def go(p: Process) -> Process:
        if isinstance(p, PVar):
            return repl if p.name == name else p
        if isinstance(p, Nil):
            return p
        if isinstance(p, Bcast):
            return Bcast(p.value, go_choice(p.cont))
        if isinstance(p, Recv):
            return Recv(p.var, go_choice(p.then), go_choice(p.timeout))
        if isinstance(p, Tau):
            return Tau(go_choice(p.cont))
        if isinstance(p, Sleep):
            return Sleep(go_choice(p.cont))
        if isinstance(p, Fix):
            return p if p.name == name else Fix(p.name, go(p.body))
        raise TypeError(p)

    def go_choice(c: Choice) -> Choice:
        return Choice(tuple((w, go(q)) for w, q in c.branches))

    return go(p)


def unfold_fix(n: Node) -> Node:
    """One-step recursion unfolding of a node whose process is a ``Fix``."""
    if not isinstance(n.proc, Fix):
        raise ValueError(f"node {n.name} does not run a fix process")
    f = n.proc
    return n.with_proc(subst_proc(f.body, f.name, f))


# ---------------------------------------------------------------------------
# closedness and time-guardedness


def free_value_vars(p: Process, bound: frozenset[str] = frozenset()) -> frozenset[str]:
    out: set[str] = set()
    if isinstance(p, Bcast):
        if isinstance(p.value, ValueVar) and p.value.name not in bound:
            out.add(p.value.name)
        for _, q in p.cont.branches:
            out |= free_value_vars(q, bound)
    elif isinstance(p, Recv):
        for _, q in p.then.branches:
            out |= free_value_vars(q, bound | {p.var})
        for _, q in p.timeout.branches:
            out |= free_value_vars(q, bound)
    elif isinstance(p, (Tau, Sleep)):
        for _, q in p.cont.branches:
            out |= free_value_vars(q, bound)
    elif isinstance(p, Fix):
        out |= free_value_vars(p.body, bound)
    return frozenset(out)


def free_proc_vars(p: Process, bound: frozenset[str] = frozenset()) -> frozenset[str]:
    out: set[str] = set()
    if isinstance(p, PVar):
        if p.name not in bound:
            out.add(p.name)
    elif isinstance(p, (Bcast, Tau, Sleep)):
        for _, q in p.cont.branches:
            out |= free_proc_vars(q, bound)
    elif isinstance(p, Recv):
        for c in (p.then, p.timeout):
            for _, q in c.branches:
                out |= free_proc_vars(q, bound)
    elif isinstance(p, Fix):
        out |= free_proc_vars(p.body, bound | {p.name})
    return frozenset(out)


def is_closed(p: Process) -> bool:
    return not free_value_vars(p) and not free_proc_vars(p)


def is_time_guarded(p: Process) -> bool:
    """Every occurrence of each fix-bound variable sits under a Sleep prefix
    or in the timeout branch of a receiver."""

    def unguarded(p: Process, var: str) -> bool:
        if isinstance(p, PVar):
            return p.name == var
        if isinstance(p, (Bcast, Tau)):
            return any(unguarded(q, var) for _, q in p.cont.branches)
        if isinstance(p, Recv):
            # reception consumes the round, but the receive branch is still
            # reachable this round; only the timeout branch is guarded
            return any(unguarded(q, var) for _, q in p.then.branches)
        if isinstance(p, Sleep):
            return False
        if isinstance(p, Fix):
            return False if p.name == var else unguarded(p.body, var)
        return False

    def go(p: Process) -> bool:
        if isinstance(p, Fix):
            return not unguarded(p.body, p.name) and go(p.body)
        if isinstance(p, (Bcast, Tau, Sleep)):
            return all(go(q) for _, q in p.cont.branches)
        if isinstance(p, Recv):
            return all(go(q) for c in (p.then, p.timeout) for _, q in c.branches)
        return True

    return go(p)


# ---------------------------------------------------------------------------
# canonical form

_TAG = {Nil: 0, Bcast: 1, Recv: 2, Tau: 3, Sleep: 4, PVar: 5, Fix: 6}


def _proc_key(p: Process):
    if isinstance(p, Nil):
        return (0,)
    if isinstance(p, Bcast):
        v = (0, p.value.sym) if isinstance(p.value, Value) else (1, p.value.name)
        return (1, v, _choice_key(p.cont))
    if isinstance(p, Recv):
        return (2, p.var, _choice_key(p.then), _choice_key(p.timeout))
    if isinstance(p, Tau):
        return (3, _choice_key(p.cont))
    if isinstance(p, Sleep):
        return (4, _choice_key(p.cont))
    if isinstance(p, PVar):
        return (5, p.name)
    if isinstance(p, Fix):
        return (6, p.name, _proc_key(p.body))
    raise TypeError(p)


def _choice_key(c: Choice):
    return tuple((_proc_key(q), weight_key(w)) for w, q in c.branches)


def canonical_process(p: Process) -> Process:
    """Alpha-normalize binders, merge equal branches, sort branches.

    Fix unfolding is deliberately not applied: canonical forms stay finite
    and unfolding happens lazily during successor generation.
    """
    fresh_v = itertools.count()
    fresh_x = itertools.count()

    def go(p: Process, venv: dict[str, str], xenv: dict[str, str]) -> Process:
        if isinstance(p, Nil):
            return p
        if isinstance(p, Bcast):
            v = p.value
            if isinstance(v, ValueVar):
                v = ValueVar(venv.get(v.name, v.name))
            return Bcast(v, go_choice(p.cont, venv, xenv))
        if isinstance(p, Recv):
            fresh = f"_x{next(fresh_v)}"
            then = go_choice(p.then, {**venv, p.var: fresh}, xenv)
            return Recv(fresh, then, go_choice(p.timeout, venv, xenv))
        if isinstance(p, Tau):
            return Tau(go_choice(p.cont, venv, xenv))
        if isinstance(p, Sleep):
            return Sleep(go_choice(p.cont, venv, xenv))
        if isinstance(p, PVar):
            return PVar(xenv.get(p.name, p.name))
        if isinstance(p, Fix):
            fresh = f"_X{next(fresh_x)}"
            return Fix(fresh, go(p.body, venv, {**xenv, p.name: fresh}))
        raise TypeError(p)

    def go_choice(c: Choice, venv, xenv) -> Choice:
        merged: dict[Process, Weight] = {}
        for w, q in c.branches:
            q = go(q, venv, xenv)
            if q in merged:
                merged[q] = merged[q] + w
            else:
                merged[q] = w
        branches = sorted(((w, q) for q, w in merged.items()), key=lambda b: _proc_key(b[1]))
        return Choice(tuple(branches))

    return go(p, {}, {})


def canonical_form(m: Network) -> Network:
    if m.stuck:
        return m
    return Network(tuple(n.with_proc(canonical_process(n.proc)) for n in m.nodes))


def network_key(m: Network):
    """Deterministic total-order key for networks (states of the pLTS)."""
    if m.stuck:
        return (1,)
    return (0, tuple((n.name, tuple(sorted(n.nbrs)), _proc_key(n.proc)) for n in m.nodes))


# ---------------------------------------------------------------------------
# well-formedness


@dataclass(frozen=True)
class Violation:
    condition: str
    nodes: tuple[str, ...]
    detail: str

    def __str__(self):
        return f"{self.condition}({', '.join(self.nodes)}): {self.detail}"


def check_well_formed(m, externals: frozenset[str] = frozenset()) -> list[Violation]:
    """The four well-formedness conditions, plus closedness/time-guardedness.

    ``m`` may be a Network or a plain node sequence (a Network value cannot
    even hold duplicate names, but parsed input must still be reportable).
    Names in ``externals`` (observer nodes such as a tester) may appear in
    neighbour sets without being nodes; they are exempt from the symmetry and
    connectivity conditions.
    """
    if isinstance(m, Network):
        if m.stuck:
            return [Violation("stuck", (), "the stuck network is not a user network")]
        node_list = list(m.nodes)
    else:
        node_list = list(m)

    out: list[Violation] = []
    by_name: dict[str, Node] = {}
    for n in node_list:
        if n.name in by_name:
            out.append(Violation("duplicate-name", (n.name,), "two nodes share this name"))
        else:
            by_name[n.name] = n
    names = frozenset(by_name)

    for n in node_list:
        if n.name in n.nbrs:
            out.append(Violation("self-neighbour", (n.name,), f"{n.name} lists itself"))
        if n.name in externals:
            out.append(Violation("external-clash", (n.name,), "node name declared external"))
        for other in sorted(n.nbrs):
            if other in externals or other == n.name:
                continue
            if other not in names:
                out.append(
                    Violation("unknown-neighbour", (n.name, other),
                              f"{other} is neither a node nor declared external"))
            elif n.name not in by_name[other].nbrs:
                out.append(
                    Violation("asymmetric", (n.name, other),
                              f"{other} in nbrs({n.name}) but not vice versa"))
        if not is_closed(n.proc):
            out.append(Violation("open-process", (n.name,), "free variables in process"))
        if not is_time_guarded(n.proc):
            out.append(Violation("unguarded-recursion", (n.name,), "recursion not time-guarded"))

    # connectivity over internal nodes only
    if len(node_list) > 1:
        root = node_list[0].name
        seen = {root}
        frontier = [root]
        while frontier:
            cur = frontier.pop()
            for nxt in by_name[cur].nbrs:
                if nxt in names and nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        missing = sorted(names - seen)
        if missing:
            out.append(Violation("disconnected", tuple(missing), "unreachable from " + root))
    return out


def assert_well_formed(m: Network, externals: frozenset[str] = frozenset()):
    bad = check_well_formed(m, externals)
    if bad:
        raise ValueError("ill-formed network: " + "; ".join(map(str, bad)))


# ---------------------------------------------------------------------------
# syntactic inventory helpers


def syntactic_values(m: Network) -> frozenset[str]:
    """All closed value atoms appearing in the network."""

    def of_proc(p: Process) -> Iterator[str]:
        if isinstance(p, Bcast):
            if isinstance(p.value, Value):
                yield p.value.sym
            for _, q in p.cont.branches:
                yield from of_proc(q)
        elif isinstance(p, Recv):
            for c in (p.then, p.timeout):
                for _, q in c.branches:
                    yield from of_proc(q)
        elif isinstance(p, (Tau, Sleep)):
            for _, q in p.cont.branches:
                yield from of_proc(q)
        elif isinstance(p, Fix):
            yield from of_proc(p.body)

    return frozenset(v for n in m.nodes for v in of_proc(n.proc))


def instantiate(m: Network, p: Fraction) -> Network:
    """Evaluate every symbolic weight at a concrete gossip probability."""

    def go(proc: Process) -> Process:
        if isinstance(proc, (Nil, PVar)):
            return proc
        if isinstance(proc, Bcast):
            return Bcast(proc.value, go_choice(proc.cont))
        if isinstance(proc, Recv):
            return Recv(proc.var, go_choice(proc.then), go_choice(proc.timeout))
        if isinstance(proc, Tau):
            return Tau(go_choice(proc.cont))
        if isinstance(proc, Sleep):
            return Sleep(go_choice(proc.cont))
        if isinstance(proc, Fix):
            return Fix(proc.name, go(proc.body))
        raise TypeError(proc)

    def go_choice(c: Choice) -> Choice:
        out = []
        for w, q in c.branches:
            w = w(p) if isinstance(w, Poly) else w
            if w == 0:
                continue
            out.append((w, go(q)))
        return Choice(tuple(out))

    return Network(tuple(n.with_proc(go(n.proc)) for n in m.nodes), stuck=m.stuck)
