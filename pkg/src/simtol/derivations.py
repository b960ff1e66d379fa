"""Scripted tolerance derivations for the six catalog cases.

Each script drives the law engine through the exact rewrite sequence that
establishes "the gossip network simulates its delivered counterpart", with
every side condition machine checked.  Run with a symbolic probability to
obtain the closed-form tolerance polynomial.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Union

from .calculus import Bcast, Network, Nil, Process, Sleep, Tau, Value, choice, one, sleepn
from .gossip import V, build_case, mk_fwd, mk_fwdc, mk_resnd, mk_resndc, mk_snd, paired_done
from .laws import (
    Chain, Derivation, LawEngine, bound_one, compose_paths,
    compose_sender_branches, sim_concat, sim_concat_tick, transitivity,
)
from .poly import Poly, Weight


@dataclass(frozen=True)
class Certificate:
    case: str
    derivation: Derivation
    tolerance: Weight

    def pretty(self, p=None) -> str:
        head = f"case {self.case}: tolerance {self.tolerance}"
        if p is not None:
            head += f" = {self.derivation.tol_at(Fraction(p))} at p={p}"
        return head + "\n" + self.derivation.pretty(None if p is None else Fraction(p))


def _under(ch: Chain, depth: int, script: Callable[[Chain], None]) -> None:
    if depth == 0:
        script(ch)
    else:
        ch.under_tick(lambda c: _under(c, depth - 1, script))


def _snd1() -> Process:
    return mk_snd(V, 1)


# ---------------------------------------------------------------------------
# collision-free cases


def derive_gsp1(engine: LawEngine, p) -> Derivation:
    gsp = build_case("GSP1", p).network
    ch = Chain(engine, gsp)
    ch.propagation(["s1", "s2"], ["d"])
    return ch.judgment()


def derive_gsp2(engine: LawEngine, p) -> Derivation:
    gsp = build_case("GSP2", p).network

    # branch: the second source has already gossiped to both front relays
    start_tx = gsp.with_proc("s2", Nil())
    for n in ("n1", "n2"):
        start_tx = start_tx.with_proc(n, mk_resnd(V, p))
    cha = Chain(engine, start_tx)
    cha.lost_broadcast("s1")
    cha.receiver_wait("n3").receiver_wait("d")
    net_a = cha.current
    chb = Chain(engine, net_a)
    chb.under_tick(lambda c: c.propagation(["n1", "n2"], ["n3"]))
    net_b = chb.current
    below = Chain(engine, net_b)
    below.idle_elim("n1").idle_elim("n2")
    below.under_tick(lambda c: c.receiver_wait("d"))
    _under(below, 2, lambda c: c.propagation(["n3"], ["d"]))
    below.idle_elim("n3")
    j_a = transitivity(
        sim_concat_tick(engine, below.judgment(), net_a, (1 - p) * (1 - p)),
        cha.judgment())

    # branch: the second source stayed silent
    start_quiet = gsp.with_proc("s2", Nil())
    chc = Chain(engine, start_quiet)
    chc.propagation(["s1"], ["n1"])
    net_c = chc.current
    chd = Chain(engine, net_c)
    chd.receiver_wait("n2").receiver_wait("n3").receiver_wait("d")
    net_d = chd.current
    che = Chain(engine, net_d)
    che.under_tick(lambda c: c.propagation(["n1"], ["n3"]))
    net_e = che.current
    below_e = Chain(engine, net_e)
    below_e.idle_elim("n1")
    below_e.under_tick(lambda c: c.receiver_wait("n2").receiver_wait("d"))
    _under(below_e, 2, lambda c: c.propagation(["n3"], ["n2", "d"]))
    below_e.idle_elim("n3")
    _under(below_e, 3, lambda c: c.lost_broadcast("n2"))
    below_e.idle_elim("n2")
    j_d = sim_concat_tick(engine, below_e.judgment(), net_d, 1 - p)
    j_c = transitivity(j_d, chd.judgment())
    j_quiet = sim_concat(engine, j_c, start_quiet, 1 - p)

    return compose_sender_branches(engine, gsp, "s2", j_a, j_quiet)


def derive_gsp3(engine: LawEngine, p) -> Derivation:
    gsp = build_case("GSP3", p).network
    fired = Bcast(V, one(Nil()))

    # first path: the direct source transmits now
    start_tx = gsp.with_proc("s1", fired)
    ch1 = Chain(engine, start_tx)
    ch1.tau_intro("s1")
    ch1.propagation(["s1"], ["d"])
    ch1.propagation(["s2"], ["n"])
    ch1.under_tick(lambda c: c.lost_broadcast("n"))
    ch1.idle_elim("n")
    j1 = ch1.judgment()

    # second path: only the relayed source transmits
    start_quiet = gsp.with_proc("s1", Nil())
    net_f = start_quiet.with_proc("s2", Nil()).with_proc("n", mk_resnd(V, p))
    chf = Chain(engine, net_f)
    chf.receiver_wait("d")
    chf.under_tick(lambda c: c.propagation(["n"], ["d"]))
    chf.idle_elim("n")
    j2 = sim_concat(engine, chf.judgment(), start_quiet, 1 - p)

    return compose_paths(engine, gsp, "s1", [(fired, j1), (Nil(), j2)])


# ---------------------------------------------------------------------------
# collision-prone cases


def derive_gsp4(engine: LawEngine, p) -> Derivation:
    gsp = build_case("GSP4", p).network
    ch = Chain(engine, gsp)
    ch.propagation_collisions(["s1", "s2"], ["d"])
    ch.receiver_timeout("d")
    return ch.judgment()


def derive_gsp5(engine: LawEngine, p) -> Derivation:
    gsp = build_case("GSP5", p).network
    loaded = {n: mk_resndc(V, p) for n in ("n1", "n2")}

    # both sources transmitted: the front relay collided out
    start_aa = gsp.with_proc("s1", Nil()).with_proc("s2", Nil())
    start_aa = start_aa.with_proc("n1", Nil()).with_proc("n2", loaded["n2"])
    ch = Chain(engine, start_aa)
    ch.receiver_timeout("n2").receiver_wait("n3").receiver_wait("d")
    net_h = ch.current
    chh = Chain(engine, net_h)
    chh.under_tick(lambda c: c.propagation_collisions(["n2"], ["n3"]))
    net_i = chh.current
    below_i = Chain(engine, net_i)
    below_i.idle_elim("n2")
    below_i.under_tick(lambda c: c.receiver_timeout("n3").receiver_wait("d"))
    _under(below_i, 2, lambda c: c.propagation_collisions(["n3"], ["d"]))
    below_i.idle_elim("n3")
    _under(below_i, 2, lambda c: c.receiver_timeout("d"))
    j_aa = transitivity(
        sim_concat_tick(engine, below_i.judgment(), net_h, 1 - p), ch.judgment())

    # only the wide source transmitted: both front relays are loaded
    start_ab = gsp.with_proc("s1", Nil()).with_proc("s2", Nil())
    start_ab = start_ab.with_proc("n1", loaded["n1"]).with_proc("n2", loaded["n2"])
    chl = Chain(engine, start_ab)
    chl.receiver_timeout("n1").receiver_timeout("n2")
    chl.receiver_wait("n3").receiver_wait("d")
    net_l = chl.current
    chm = Chain(engine, net_l)
    chm.under_tick(lambda c: c.propagation_collisions(["n1", "n2"], ["n3"]))
    net_m = chm.current
    below_m = Chain(engine, net_m)
    below_m.idle_elim("n1").idle_elim("n2")
    below_m.under_tick(lambda c: c.receiver_timeout("n3").receiver_wait("d"))
    _under(below_m, 2, lambda c: c.propagation_collisions(["n3"], ["d"]))
    below_m.idle_elim("n3")
    _under(below_m, 2, lambda c: c.receiver_timeout("d"))
    two = Fraction(2)
    q_l = 1 - two * p * (1 - p)
    j_ab = transitivity(
        sim_concat_tick(engine, below_m.judgment(), net_l, q_l), chl.judgment())

    # narrow source still undecided, wide source transmitted
    start_a = gsp.with_proc("s2", Nil())
    start_a = start_a.with_proc("n1", loaded["n1"]).with_proc("n2", loaded["n2"])
    j_a = compose_sender_branches(engine, start_a, "s1", j_aa, j_ab)

    # wide source silent
    start_b = gsp.with_proc("s2", Nil())
    chn = Chain(engine, start_b)
    chn.propagation_collisions(["s1"], ["n1"])
    net_n = chn.current
    cho = Chain(engine, net_n)
    cho.receiver_timeout("n1")
    cho.receiver_wait("n2").receiver_wait("n3").receiver_wait("d")
    net_o = cho.current
    cht = Chain(engine, net_o)
    cht.under_tick(lambda c: c.propagation_collisions(["n1"], ["n3"]))
    net_t = cht.current
    below_t = Chain(engine, net_t)
    below_t.idle_elim("n1")
    below_t.under_tick(
        lambda c: c.receiver_wait("n2").receiver_timeout("n3").receiver_wait("d"))
    _under(below_t, 2, lambda c: c.propagation_collisions(["n3"], ["n2", "d"]))
    below_t.idle_elim("n3")
    _under(below_t, 2, lambda c: c.receiver_timeout("n2").receiver_timeout("d"))
    _under(below_t, 3, lambda c: c.lost_broadcast("n2"))
    below_t.idle_elim("n2")
    j_o = sim_concat_tick(engine, below_t.judgment(), net_o, 1 - p)
    j_n = transitivity(j_o, cho.judgment())
    j_b = sim_concat(engine, j_n, start_b, 1 - p)

    return compose_sender_branches(engine, gsp, "s2", j_a, j_b)


# ---------------------------------------------------------------------------
# randomized delays


def _delay_mix() -> Process:
    """Committed sender that delays one or two rounds, uniformly."""
    half = Fraction(1, 2)
    return Tau(choice((half, sleepn(1, _snd1())), (half, sleepn(2, _snd1()))))


def derive_gsp6(engine: LawEngine, p) -> Derivation:
    gsp = build_case("GSP6", p).network
    half = Fraction(1, 2)
    inner = _delay_mix()

    def one_sender_delayed(sender: str, other: str, h: int) -> Derivation:
        """sender fires after h rounds, the other source is silent."""
        start = gsp.with_proc(sender, sleepn(h, _snd1())).with_proc(other, Nil())
        ch = Chain(engine, start)
        ch.receiver_wait("d")
        if h == 2:
            ch.under_tick(lambda c: c.receiver_wait("d"))
        _under(ch, h, lambda c: c.propagation_random(sender, ["d"]).receiver_timeout("d"))
        _under(ch, h + 1, lambda c: c.tau_elim("d").tau_elim("d"))
        ch.idle_elim(sender)
        return ch.judgment()

    def one_sender_mixed(sender: str, other: str) -> Derivation:
        """sender fires after one or two rounds, the other stays silent."""
        net = gsp.with_proc(sender, inner).with_proc(other, Nil())
        return compose_paths(engine, net, sender, [
            (sleepn(1, _snd1()), one_sender_delayed(sender, other, 1)),
            (sleepn(2, _snd1()), one_sender_delayed(sender, other, 2)),
        ])

    eq_9 = one_sender_mixed("s1", "s2")
    eq_14 = one_sender_mixed("s2", "s1")

    # complete behaviour of the first source when the second is silent
    ch10 = Chain(engine, gsp.with_proc("s2", Nil()))
    ch10.keep_branch("s1", inner)
    eq_10 = transitivity(eq_9, ch10.judgment())

    def staggered(first: str, second: str) -> Derivation:
        """first fires after one round, second after two: no collision."""
        start = (gsp.with_proc(first, sleepn(1, _snd1()))
                 .with_proc(second, sleepn(2, _snd1())))
        ch = Chain(engine, start)
        ch.receiver_wait("d")
        ch.under_tick(
            lambda c: c.propagation_random(first, ["d"]).receiver_timeout("d"))
        _under(ch, 2, lambda c: c.tau_elim("d").tau_elim("d").lost_broadcast(second))
        ch.idle_elim(first).idle_elim(second)
        return ch.judgment()

    eq_7 = staggered("s1", "s2")
    eq_8 = staggered("s2", "s1")

    done_shape = gsp.with_proc("s1", Nil()).with_proc("s2", Nil())

    def clash(h: int) -> Derivation:
        """both sources fire after h rounds: the collision wastes the round."""
        system = (gsp.with_proc("s1", sleepn(h, _snd1()))
                  .with_proc("s2", sleepn(h, _snd1())))
        return bound_one(engine, done_shape.with_proc("d", sleepn(3, _snd1())), system)

    def first_fixed(first: str, second: str, h: int, hit: Derivation) -> Derivation:
        """first fires after h rounds, second mixes its delay."""
        net = (gsp.with_proc(first, sleepn(h, _snd1())).with_proc(second, inner))
        raw = compose_paths(engine, net, second, [
            (sleepn(h, _snd1()), clash(h)),
            (sleepn(3 - h, _snd1()), hit),
        ])
        cleanup = Chain(engine, raw.target)
        cleanup.tau_elim("d")
        return transitivity(cleanup.judgment(), raw)

    eq_11 = first_fixed("s1", "s2", 1, eq_7)
    eq_12 = first_fixed("s1", "s2", 2, eq_8)

    net13 = gsp.with_proc("s1", inner).with_proc("s2", inner)
    raw13 = compose_paths(engine, net13, "s1", [
        (sleepn(1, _snd1()), eq_11),
        (sleepn(2, _snd1()), eq_12),
    ])
    cleanup13 = Chain(engine, raw13.target)
    cleanup13.tau_elim("d")
    eq_13 = transitivity(cleanup13.judgment(), raw13)

    net15 = gsp.with_proc("s2", inner)
    raw15 = compose_paths(engine, net15, "s1", [(inner, eq_13), (Nil(), eq_14)])
    cleanup15 = Chain(engine, raw15.target)
    cleanup15.flatten_choice("d")
    eq_15 = transitivity(cleanup15.judgment(), raw15)

    raw = compose_paths(engine, gsp, "s2", [(inner, eq_15), (Nil(), eq_10)])
    cleanup = Chain(engine, raw.target)
    cleanup.flatten_choice("d")
    return transitivity(cleanup.judgment(), raw)


# ---------------------------------------------------------------------------
# entry point


_SCRIPTS = {
    "GSP1": derive_gsp1,
    "GSP2": derive_gsp2,
    "GSP3": derive_gsp3,
    "GSP4": derive_gsp4,
    "GSP5": derive_gsp5,
    "GSP6": derive_gsp6,
}


def replay_paper_derivations(case: str, p: Union[Fraction, Poly, None] = None,
                             engine: LawEngine = None) -> Certificate:
    """Execute the scripted derivation for a case.

    With ``p`` omitted the replay runs symbolically and the certificate's
    tolerance is an exact polynomial in the gossip probability.
    """
    case = case.upper()
    if case not in _SCRIPTS:
        raise KeyError(f"no derivation scripted for {case!r}")
    if p is None:
        p = Poly.var()
    engine = engine or LawEngine()
    deriv = _SCRIPTS[case](engine, p)
    expect = build_case(paired_done(case), p).network
    from .calculus import canonical_form

    if canonical_form(deriv.target) != canonical_form(expect):
        raise AssertionError(
            f"{case}: derivation target differs from the delivered network")
    return Certificate(case, deriv, deriv.tol)
