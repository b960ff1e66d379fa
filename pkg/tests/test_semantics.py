from fractions import Fraction as F

import pytest

from simtol.calculus import (
    Bcast, Network, Nil, Node, Recv, Sleep, Tau as TauP, Value, canonical_form,
    choice, network, one, EMPTY,
)
from simtol.gossip import build_case, mk_fwd, mk_resnd, mk_snd, V
from simtol.semantics import (
    BudgetExceeded, Lts, Obs, Rcv, Setting, Sigma, SubDist, Tau, TAU, SIGMA,
    game_moves, instantaneous_depth, network_depth_bound, setting_for, unfolded,
)

ALL_CASES = ("GSP1", "GSP2", "GSP3", "GSP4", "GSP5", "GSP6",
             "DONE1", "DONE2", "DONE3", "DONE6")


def lts_for(*nets, externals=("tester",)):
    return Lts(setting_for(*nets, externals=externals))


def by_label(steps, cls):
    return [(lbl, d) for lbl, d in steps if isinstance(lbl, cls)]


# ---------------------------------------------------------------------------
# strong steps


def test_internal_coin_splits_mass():
    # one node tossing between two different broadcasts
    p = TauP(choice((F(1, 3), Bcast(Value("v1"), one(Nil()))),
                    (F(2, 3), Bcast(Value("v2"), one(Nil())))))
    net = network(Node("n", frozenset({"obs"}), p))
    lts = lts_for(net, externals=("obs",))
    taus = by_label(lts.strong_steps(net), Tau)
    assert len(taus) == 1
    dist = taus[0][1]
    assert dist.mass() == 1
    assert sorted(w for _, w in dist.support) == [F(1, 3), F(2, 3)]


def test_broadcast_with_external_listener_is_observable():
    net = network(
        Node("d", frozenset({"s1", "s2", "tester"}), Bcast(V, one(Nil()))),
        Node("s1", frozenset({"d"}), Nil()),
        Node("s2", frozenset({"d"}), Nil()))
    lts = lts_for(net)
    obs = by_label(lts.strong_steps(net), Obs)
    assert len(obs) == 1
    lbl, dist = obs[0]
    assert lbl == Obs("v", frozenset({"tester"}))
    assert dist.mass() == 1


def test_internal_broadcast_becomes_silent_step():
    # every neighbour is a network node, so nobody outside can hear
    net = network(
        Node("m", frozenset({"n"}), Bcast(V, one(Nil()))),
        Node("n", frozenset({"m"}), mk_fwd(F(1, 2))))
    lts = Lts(Setting(frozenset(), frozenset({"v"})))
    steps = lts.strong_steps(net)
    assert by_label(steps, Obs) == []
    (lbl, dist), = by_label(steps, Tau)
    target = dist.support[0][0]
    from simtol.calculus import canonical_process

    assert target.node("n").proc == canonical_process(mk_resnd(V, F(1, 2)))


def test_empty_network_ticks_in_place():
    lts = Lts(Setting(frozenset(), frozenset()))
    (lbl, dist), = lts.strong_steps(EMPTY)
    assert isinstance(lbl, Sigma) and dist == SubDist.dirac(EMPTY)


def test_input_enabledness_and_reception():
    c = build_case("GSP1", F(4, 5))
    lts = lts_for(c.network)
    rcv = by_label(lts.strong_steps(c.network), Rcv)
    assert len(rcv) == 1  # one external sender, one value
    lbl, dist = rcv[0]
    assert lbl == Rcv("tester", "v")
    got = dist.support[0][0]
    assert got.node("d").proc == mk_resnd(V, F(1))


def test_stuck_network_has_no_moves():
    from simtol.calculus import STUCK

    lts = Lts(Setting(frozenset({"tester"}), frozenset({"v"})))
    assert lts.strong_steps(STUCK) == []


# ---------------------------------------------------------------------------
# time steps


def test_sleep_tick():
    net = network(Node("n", frozenset({"obs"}), Sleep(one(Nil()))))
    lts = lts_for(net, externals=("obs",))
    assert lts.sigma_step(net) == SubDist.dirac(
        canonical_form(network(Node("n", frozenset({"obs"}), Nil()))))


def test_sender_blocks_time():
    net = network(Node("n", frozenset({"obs"}), Bcast(V, one(Nil()))))
    lts = lts_for(net, externals=("obs",))
    assert lts.sigma_step(net) is None


def test_receiver_times_out_without_senders():
    proc = Recv("x", one(Nil()), one(mk_snd(V, F(1, 2))))
    net = network(Node("n", frozenset({"obs"}), proc))
    lts = lts_for(net, externals=("obs",))
    dist = lts.sigma_step(net)
    assert dist is not None
    from simtol.calculus import canonical_process

    assert dist.support[0][0].node("n").proc == canonical_process(mk_snd(V, F(1, 2)))


# ---------------------------------------------------------------------------
# weak transitions


def test_weak_internal_is_reflexive():
    c = build_case("GSP1", F(4, 5))
    lts = lts_for(c.network)
    outs = lts.weak_step(SubDist.dirac(c.network), TAU)
    assert any(d == SubDist.dirac(canonical_form(c.network)) for d in outs)


def test_weak_observable_after_coin():
    # the one-third branch broadcasts v1: a weak observable step keeps
    # exactly that third of the mass
    p = TauP(choice((F(1, 3), Bcast(Value("v1"), one(Nil()))),
                    (F(2, 3), Bcast(Value("v2"), one(Nil())))))
    node = Node("n", frozenset({"obs"}), p)
    net = network(node)
    lts = lts_for(net, externals=("obs",))
    outs = lts.weak_step(SubDist.dirac(net), Obs("v1", frozenset({"obs"})))
    want = SubDist(((canonical_form(network(node.with_proc(Nil()))).nodes[0], F(1, 3)),))
    terminal = canonical_form(network(node.with_proc(Nil())))
    assert any(d.support == ((terminal, F(1, 3)),) for d in outs)
    assert all(d.mass() <= 1 for d in outs)


def test_weak_reach_of_delivered_shape():
    p = F(4, 5)
    gsp = build_case("GSP1", p).network
    done = build_case("DONE1", p).network
    lts = lts_for(gsp, done)
    assert lts.max_tau_mass(gsp, done) == 1 - (1 - p) ** 2


# ---------------------------------------------------------------------------
# reachability


def test_reachable_empty():
    lts = Lts(Setting(frozenset(), frozenset()))
    seen, edges = lts.reachable(EMPTY)
    assert [lts.state(s) for s in seen] == [EMPTY]


def test_reachable_done1_is_a_tick_lasso():
    c = build_case("DONE1", F(1, 2))
    lts = lts_for(c.network)
    seen, edges = lts.reachable(c.network)
    # explicit enumeration: delayed sender, bare sender, committed
    # broadcast, spent network
    assert len(seen) == 4
    spent = [s for s in seen
             if isinstance(lts.state(s).node("d").proc, Nil)]
    assert len(spent) == 1
    # the spent state ticks to itself forever
    (tick,) = [d for lbl, d in lts.strong(spent[0]) if isinstance(lbl, Sigma)]
    assert lts.dist(tick) == ((spent[0], F(1)),)


def test_reachable_gsp2_closes_in_budget():
    c = build_case("GSP2", F(1, 2))
    lts = Lts(setting_for(c.network), state_budget=10_000)
    seen, _ = lts.reachable(c.network)
    assert len(seen) < 10_000


def test_budget_exhaustion_reported():
    c = build_case("GSP2", F(1, 2))
    lts = Lts(setting_for(c.network), state_budget=5)
    with pytest.raises(BudgetExceeded):
        lts.reachable(c.network)


def test_dump_deterministic_and_golden():
    net = network(Node("n", frozenset({"obs"}), mk_snd(V, F(1, 2))))
    lts1 = lts_for(net, externals=("obs",))
    lts2 = lts_for(net, externals=("obs",))
    assert lts1.dump(net) == lts2.dump(net)
    assert lts1.dump(net) == (
        "state 0 n[tau.(1/2:nil + 1/2:!<v>.nil)]^{obs}\n"
        "state 1 n[nil]^{obs}\n"
        "state 2 n[!<v>.nil]^{obs}\n"
        "trans 0 tau -> 1/2:1 1/2:2\n"
        "trans 0 obs?v -> 1:0\n"
        "trans 1 sigma -> 1:1\n"
        "trans 1 obs?v -> 1:1\n"
        "trans 2 obs?v -> 1:2\n"
        "trans 2 !v>{obs} -> 1:1\n")


# ---------------------------------------------------------------------------
# time-property suites over the whole catalog


def explore(case, p=F(1, 2)):
    c = build_case(case, p)
    lts = lts_for(c.network)
    seen, edges = lts.reachable(c.network)
    return c, lts, seen, edges


@pytest.mark.parametrize("case", ALL_CASES)
def test_time_determinism(case):
    _, lts, seen, _ = explore(case)
    for sid in seen:
        ticks = [d for lbl, d in lts.strong(sid) if isinstance(lbl, Sigma)]
        assert len(ticks) <= 1
        if ticks:
            assert lts.dist_mass(ticks[0]) == 1


@pytest.mark.parametrize("case", ALL_CASES)
def test_maximal_progress_and_patience(case):
    from simtol.calculus import Bcast as B, Tau as T

    _, lts, seen, _ = explore(case)
    for sid in seen:
        net = lts.state(sid)
        instant = any(isinstance(unfolded(n.proc), (B, T)) for n in net.nodes)
        has_tick = lts.sigma_step(net) is not None
        assert has_tick == (not instant)


@pytest.mark.parametrize("case", ALL_CASES)
def test_well_timedness(case):
    _, lts, seen, _ = explore(case)
    memo = {}

    def streak(sid):
        if sid in memo:
            if memo[sid] is None:
                raise AssertionError("instantaneous cycle")
            return memo[sid]
        memo[sid] = None
        best = 0
        for lbl, did in lts.strong(sid):
            if isinstance(lbl, (Sigma, Rcv)):
                continue
            best = max(best, 1 + max(streak(t) for t, _ in lts.dist(did)))
        memo[sid] = best
        return best

    for sid in seen:
        assert streak(sid) <= network_depth_bound(lts.state(sid))


@pytest.mark.parametrize("case", ALL_CASES)
def test_input_enabledness_everywhere(case):
    _, lts, seen, _ = explore(case)
    for sid in seen:
        rcv = [lbl for lbl, _ in lts.strong(sid) if isinstance(lbl, Rcv)]
        assert Rcv("tester", "v") in rcv


@pytest.mark.parametrize("case", ALL_CASES)
def test_mass_bookkeeping(case):
    _, lts, seen, edges = explore(case)
    for _, lbl, did in edges:
        assert lts.dist_mass(did) == 1
    # weak steps may lose mass only through visible sub-support firing
    c = build_case(case, F(1, 2))
    outs = lts.weak_step(SubDist.dirac(c.network), TAU)
    assert all(d.mass() == 1 for d in outs)


def test_depth_bound_examples():
    assert instantaneous_depth(mk_snd(V, F(1, 2))) == 2
    assert instantaneous_depth(mk_fwd(F(1, 2))) == 0
    assert instantaneous_depth(Sleep(one(mk_snd(V, 1)))) == 0
