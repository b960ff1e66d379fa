"""Gossip process constructors and the catalog of case-study networks.

Three forwarder families: collision-oblivious (``fwd``), collision-sensitive
(``fwdc``, a second same-round reception aborts forwarding) and randomized
delay (``fwdu``).  Each GSP case pairs a gossip network with the DONE network
in which the message has already propagated to the destination.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .calculus import (
    Bcast, Choice, Fix, Network, Nil, Node, PVar, Recv, Sleep, Tau, Value,
    ValueExpr, ValueVar, Process, assert_well_formed, choice, one, sleepn,
)
from .poly import Poly, Weight, as_weight

V = Value("v")
TESTER = "tester"


def mk_rcv(var: str, body: Choice) -> Process:
    """Persistent receiver: wait across rounds until a message arrives."""
    return Fix("X", Recv(var, body, one(PVar("X"))))


def mk_snd(v: ValueExpr, p) -> Process:
    """Gossip sender: one internal coin, then broadcast with probability p."""
    p = as_weight(p)
    return Tau(choice((p, Bcast(v, one(Nil()))), (1 - p, Nil())))


def mk_resnd(v: ValueExpr, p) -> Process:
    return Sleep(one(mk_snd(v, p)))


def mk_fwd(p) -> Process:
    return mk_rcv("x", one(mk_resnd(ValueVar("x"), p)))


def mk_resndc(v: ValueExpr, p) -> Process:
    """Loaded collision-sensitive forwarder: a second reception this round
    kills the pending retransmission."""
    return Recv("x", one(Nil()), one(mk_snd(v, p)))


def mk_fwdc(p) -> Process:
    return mk_rcv("x", one(mk_resndc(ValueVar("x"), p)))


def mk_sndu(v: ValueExpr, p, k: int) -> Process:
    """Randomized-delay sender: gossip coin, then broadcast after a delay
    drawn uniformly from 1..k rounds."""
    if k < 1:
        raise ValueError("delay window must be at least 1")
    p = as_weight(p)
    delays = choice(*((Fraction(1, k), sleepn(i, mk_snd(v, 1))) for i in range(1, k + 1)))
    return Tau(choice((p, Tau(delays)), (1 - p, Nil())))


def mk_resndu(v: ValueExpr, p, k: int) -> Process:
    return Recv("y", one(Nil()), one(mk_sndu(v, p, k)))


def mk_fwdu(p, k: int) -> Process:
    return mk_rcv("x", one(mk_resndu(ValueVar("x"), p, k)))


# ---------------------------------------------------------------------------
# case catalog


@dataclass(frozen=True)
class Case:
    name: str
    network: Network
    externals: frozenset[str]
    horizon: int
    summary: str


CASE_NAMES = tuple(
    f"{kind}{i}" for i in range(1, 7) for kind in ("GSP", "DONE")
)

_TOPO_PAIR = {"s1": frozenset({"d"}), "s2": frozenset({"d"}),
              "d": frozenset({"s1", "s2", TESTER})}

_TOPO_CHAIN = {
    "s1": frozenset({"n1"}),
    "s2": frozenset({"n1", "n2"}),
    "n1": frozenset({"s1", "s2", "n3"}),
    "n2": frozenset({"s2", "n3"}),
    "n3": frozenset({"n1", "n2", "d"}),
    "d": frozenset({"n3", TESTER}),
}

_TOPO_SPLIT = {
    "s1": frozenset({"d"}),
    "s2": frozenset({"n"}),
    "n": frozenset({"s2", "d"}),
    "d": frozenset({"s1", "n", TESTER}),
}


def _net(topo: dict[str, frozenset[str]], procs: dict[str, Process]) -> Network:
    return Network(tuple(Node(name, topo[name], procs[name]) for name in topo))


def build_case(case: str, p: Union[Fraction, Poly, str, int]) -> Case:
    """The catalog network for GSP1..GSP6 / DONE1..DONE6 at gossip
    probability ``p`` (a rational, or a Poly for symbolic reasoning)."""
    p = as_weight(p)
    name = case.upper()
    horizon = 5 if name.endswith("6") else 3
    nil = Nil()

    if name == "GSP1":
        net = _net(_TOPO_PAIR, {"s1": mk_snd(V, p), "s2": mk_snd(V, p), "d": mk_fwd(1)})
        summary = "two gossip senders, forwarding destination, no collisions"
    elif name in ("DONE1", "DONE4"):
        net = _net(_TOPO_PAIR, {"s1": nil, "s2": nil, "d": mk_resnd(V, 1)})
        summary = "message delivered to the destination of GSP1/GSP4"
    elif name == "GSP2":
        net = _net(_TOPO_CHAIN, {
            "s1": mk_snd(V, p), "s2": mk_snd(V, p),
            "n1": mk_fwd(p), "n2": mk_fwd(p), "n3": mk_fwd(p), "d": mk_fwd(1)})
        summary = "two senders, three relays, no collisions"
    elif name in ("DONE2", "DONE5"):
        net = _net(_TOPO_CHAIN, {
            "s1": nil, "s2": nil, "n1": nil, "n2": nil, "n3": nil,
            "d": sleepn(2, mk_resnd(V, 1))})
        summary = "message delivered to the destination of GSP2/GSP5"
    elif name == "GSP3":
        net = _net(_TOPO_SPLIT, {
            "s1": mk_snd(V, p), "s2": mk_snd(V, p), "n": mk_fwd(p), "d": mk_fwd(1)})
        summary = "two propagation paths of different length"
    elif name == "DONE3":
        net = _net(_TOPO_SPLIT, {
            "s1": nil, "s2": nil, "n": nil,
            "d": Tau(choice((p, sleepn(1, mk_snd(V, 1))),
                            (1 - p, sleepn(2, mk_snd(V, 1)))))})
        summary = "delivery after one or two rounds, mixing both paths"
    elif name == "GSP4":
        net = _net(_TOPO_PAIR, {"s1": mk_snd(V, p), "s2": mk_snd(V, p), "d": mk_fwdc(1)})
        summary = "GSP1 with a collision-sensitive destination"
    elif name == "GSP5":
        net = _net(_TOPO_CHAIN, {
            "s1": mk_snd(V, p), "s2": mk_snd(V, p),
            "n1": mk_fwdc(p), "n2": mk_fwdc(p), "n3": mk_fwdc(p), "d": mk_fwdc(1)})
        summary = "GSP2 with collision-sensitive relays"
    elif name == "GSP6":
        net = _net(_TOPO_PAIR, {"s1": mk_sndu(V, p, 2), "s2": mk_sndu(V, p, 2),
                                "d": mk_fwdu(1, 1)})
        summary = "random transmission delays to mitigate collisions"
    elif name == "DONE6":
        half = Fraction(1, 2)
        w = half + p * p * half
        net = _net(_TOPO_PAIR, {
            "s1": nil, "s2": nil,
            "d": Tau(choice((w, sleepn(3, mk_snd(V, 1))),
                            (1 - w, sleepn(4, mk_snd(V, 1)))))})
        summary = "message delivered to the destination of GSP6"
    else:
        raise KeyError(f"unknown case {case!r}; expected GSP1..GSP6 or DONE1..DONE6")

    externals = frozenset({TESTER})
    if all(isinstance(w, Fraction) for w in _weights_of(net)):
        assert_well_formed(net, externals)
    return Case(name, net, externals, horizon, summary)


def _weights_of(net: Network):
    from .calculus import Bcast as B, Recv as R, Sleep as S, Tau as T, Fix as F

    def walk(proc):
        if isinstance(proc, (B, T, S)):
            for w, q in proc.cont.branches:
                yield w
                yield from walk(q)
        elif isinstance(proc, R):
            for c in (proc.then, proc.timeout):
                for w, q in c.branches:
                    yield w
                    yield from walk(q)
        elif isinstance(proc, F):
            yield from walk(proc.body)

    for n in net.nodes:
        yield from walk(n.proc)


def paired_done(case: str) -> str:
    """DONE counterpart of a GSP case name."""
    return "DONE" + case.upper().removeprefix("GSP")
