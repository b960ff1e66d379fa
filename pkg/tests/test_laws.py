from fractions import Fraction as F

import pytest

from simtol.calculus import (
    Bcast, Network, Nil, Node, Recv, Sleep, Tau as TauP, Value, canonical_form,
    canonical_process, choice, network, one,
)
from simtol.derivations import replay_paper_derivations
from simtol.gossip import (
    build_case, mk_fwd, mk_fwdc, mk_fwdu, mk_resnd, mk_resndc, mk_snd, V,
)
from simtol.laws import (
    Chain, LawEngine, LawError, bound_one, can_receive_now, can_transmit_now,
    can_transmit_now_semantic, compose_paths, compose_sender_branches,
    is_receiver_now, match_fwd, match_fwdc, match_fwdu, match_snd,
    parallel, sim_concat, sim_concat_tick, simple_law_instance, transitivity,
)
from simtol.poly import Poly
from simtol.quasimetric import check_tolerance
from simtol.semantics import Lts, setting_for


@pytest.fixture
def engine():
    return LawEngine()


# ---------------------------------------------------------------------------
# one-round reachability predicates


def test_can_transmit_now_examples():
    assert can_transmit_now(mk_snd(V, F(1, 2)))
    assert not can_transmit_now(Sleep(one(mk_snd(V, 1))))
    assert not can_transmit_now(mk_fwd(F(1, 2)))


def test_can_receive_now_examples():
    assert can_receive_now(mk_fwd(F(1, 2)))
    assert not can_receive_now(Sleep(one(mk_fwd(F(1, 2)))))
    assert can_receive_now(mk_resndc(V, F(1, 2)))
    assert not can_receive_now(mk_snd(V, F(1, 2)))


def test_receiver_head_unfolds_recursion():
    assert is_receiver_now(mk_fwd(F(1)))
    assert not is_receiver_now(mk_resnd(V, F(1)))


def test_syntactic_and_semantic_transmit_agree_on_catalog():
    lts = Lts(setting_for(externals=("tester",), extra_values=("v",)))
    procs = [mk_snd(V, F(1, 2)), mk_fwd(F(1, 2)), mk_fwdc(F(1, 2)),
             mk_resnd(V, F(1, 2)), mk_resndc(V, F(1, 2)), mk_fwdu(F(1, 2), 2),
             Nil(), Sleep(one(mk_snd(V, 1))),
             TauP(choice((F(1, 2), Nil()), (F(1, 2), mk_snd(V, 1))))]
    for proc in procs:
        node = Node("n", frozenset({"tester"}), proc)
        assert can_transmit_now(proc) == can_transmit_now_semantic(lts, node), proc


# ---------------------------------------------------------------------------
# shape matchers


def test_match_snd_and_degenerate():
    got = match_snd(mk_snd(V, F(4, 5)))
    assert got == (V, F(4, 5))
    assert match_snd(mk_snd(V, 1)) == (V, F(1))
    assert match_snd(Nil()) is None


def test_match_forwarders():
    assert match_fwd(mk_fwd(F(2, 3))) == F(2, 3)
    assert match_fwd(mk_fwdc(F(2, 3))) is None
    assert match_fwdc(mk_fwdc(F(2, 3))) == F(2, 3)
    assert match_fwdu(mk_fwdu(F(1), 1)) == (F(1), 1)


# ---------------------------------------------------------------------------
# propagation laws: formulas and rewrites


def test_propagation_two_senders(engine):
    p1, p2 = F(1, 3), F(1, 4)
    net = network(
        Node("m1", frozenset({"n1", "n2"}), mk_snd(V, p1)),
        Node("m2", frozenset({"n1", "n2"}), mk_snd(V, p2)),
        Node("n1", frozenset({"m1", "m2"}), mk_fwd(F(1, 2))),
        Node("n2", frozenset({"m1", "m2"}), mk_fwd(F(1, 5))))
    ch = Chain(engine, net)
    ch.propagation(["m1", "m2"], ["n1", "n2"])
    j = ch.judgment()
    assert j.tol == (1 - p1) * (1 - p2)
    assert j.target.node("n1").proc == canonical_process(mk_resnd(V, F(1, 2)))
    assert j.target.node("m1").proc == Nil()


def test_propagation_certain_sender_gives_zero(engine):
    net = network(
        Node("m", frozenset({"n"}), mk_snd(V, 1)),
        Node("n", frozenset({"m"}), mk_fwd(F(1, 2))))
    ch = Chain(engine, net)
    ch.propagation(["m"], ["n"])
    assert ch.judgment().tol == 0


def test_propagation_shape_errors_name_the_condition(engine):
    gsp2 = build_case("GSP2", F(1, 2)).network
    with pytest.raises(LawError, match="outside the cell"):
        Chain(engine, gsp2).propagation(["s1"], ["n2"])
    with pytest.raises(LawError, match="not a forwarder"):
        Chain(engine, gsp2).propagation(["s1"], ["s2"])
    with pytest.raises(LawError, match="can still receive"):
        # the front relay is a live receiver inside the sender's cell
        net = network(
            Node("m", frozenset({"n", "o"}), mk_snd(V, F(1, 2))),
            Node("n", frozenset({"m"}), mk_fwd(F(1, 2))),
            Node("o", frozenset({"m"}), mk_fwd(F(1, 2))))
        Chain(engine, net).propagation(["m"], ["n"])


def test_propagation_collisions_formula(engine):
    p1, p2 = F(1, 3), F(1, 4)
    net = network(
        Node("m1", frozenset({"n"}), mk_snd(V, p1)),
        Node("m2", frozenset({"n"}), mk_snd(V, p2)),
        Node("n", frozenset({"m1", "m2"}), mk_fwdc(F(1, 2))))
    ch = Chain(engine, net)
    ch.propagation_collisions(["m1", "m2"], ["n"])
    assert ch.judgment().tol == 1 - (p1 * (1 - p2) + p2 * (1 - p1))


def test_propagation_collisions_single_sender_degenerates(engine):
    p = F(2, 5)
    net = network(
        Node("m", frozenset({"n"}), mk_snd(V, p)),
        Node("n", frozenset({"m"}), mk_fwdc(F(1, 2))))
    ch = Chain(engine, net)
    ch.propagation_collisions(["m"], ["n"])
    assert ch.judgment().tol == 1 - p


# ---------------------------------------------------------------------------
# timing laws


def test_idle_elim_two_sided(engine):
    net = network(Node("n", frozenset({"tester"}), Sleep(one(Sleep(one(Nil()))))))
    ch = Chain(engine, net)
    ch.idle_elim("n")
    j = ch.judgment()
    assert j.tol == 0 and j.target.node("n").proc == Nil()
    # and the metric agrees in both directions
    lts = Lts(setting_for(j.target, j.system))
    assert check_tolerance(j.target, j.system, 0, lts=lts).holds
    assert check_tolerance(j.system, j.target, 0, lts=lts).holds


def test_receiver_timeout_requires_silence(engine):
    noisy = network(
        Node("r", frozenset({"s"}), mk_resndc(V, F(1, 2))),
        Node("s", frozenset({"r"}), mk_snd(V, F(1, 2))))
    with pytest.raises(LawError, match="may transmit"):
        Chain(engine, noisy).receiver_timeout("r")
    quiet = network(
        Node("r", frozenset({"s"}), mk_resndc(V, F(1, 2))),
        Node("s", frozenset({"r"}), Nil()))
    ch = Chain(engine, quiet)
    ch.receiver_timeout("r")
    assert ch.current.node("r").proc == canonical_process(Sleep(one(mk_snd(V, F(1, 2)))))


def test_lost_broadcast_requires_no_listeners(engine):
    listening = network(
        Node("m", frozenset({"r"}), mk_snd(V, F(1, 2))),
        Node("r", frozenset({"m"}), mk_fwd(F(1, 2))))
    with pytest.raises(LawError, match="listening"):
        Chain(engine, listening).lost_broadcast("m")
    # an external in the cell would observe the send
    observed = network(Node("m", frozenset({"tester"}), mk_snd(V, F(1, 2))))
    with pytest.raises(LawError, match="observe"):
        Chain(engine, observed).lost_broadcast("m")
    deaf = network(
        Node("m", frozenset({"r"}), mk_snd(V, F(1, 2))),
        Node("r", frozenset({"m"}), Nil()))
    ch = Chain(engine, deaf)
    ch.lost_broadcast("m")
    assert ch.current.node("m").proc == Nil()
    assert ch.judgment().tol == 0


def test_under_tick_congruence(engine):
    p = F(1, 2)
    net = network(
        Node("m", frozenset({"n"}), Sleep(one(mk_snd(V, p)))),
        Node("n", frozenset({"m"}), Sleep(one(mk_fwd(F(1, 3))))),
        Node("z", frozenset({"n"}) | frozenset({"m"}), Nil()))
    net = network(
        Node("m", frozenset({"n"}), Sleep(one(mk_snd(V, p)))),
        Node("n", frozenset({"m"}), Sleep(one(mk_fwd(F(1, 3))))))
    ch = Chain(engine, net)
    ch.under_tick(lambda c: c.propagation(["m"], ["n"]))
    j = ch.judgment()
    assert j.tol == 1 - p
    assert j.target.node("n").proc == canonical_process(
        Sleep(one(mk_resnd(V, F(1, 3)))))
    with pytest.raises(LawError, match="not sleeping"):
        Chain(engine, network(Node("m", frozenset({"n"}), mk_snd(V, p)),
                              Node("n", frozenset({"m"}), Sleep(one(Nil()))))
              ).under_tick(lambda c: None)


# ---------------------------------------------------------------------------
# composition laws


def test_compose_sender_branches_formula(engine):
    # replay the final composition step of the relayed two-sender case
    p = F(1, 2)
    cert = replay_paper_derivations("GSP2", p)
    root = cert.derivation
    assert root.rule == "compose-sender-branches"
    tx, silent = root.children
    assert root.tol == p * tx.tol + (1 - p) * silent.tol


def test_compose_sender_branches_rejects_wrong_branch(engine):
    p = F(1, 2)
    gsp1 = build_case("GSP1", p).network
    done1 = build_case("DONE1", p).network
    wrong = bound_one(engine, done1, gsp1)
    with pytest.raises(LawError, match="wrong network"):
        compose_sender_branches(engine, gsp1, "s1", wrong, wrong)


def test_compose_paths_mixes_tolerances(engine):
    p = F(1, 2)
    cert = replay_paper_derivations("GSP3", p)
    assert cert.tolerance == p * (1 - p) + (1 - p) * (1 - p * p)


def test_compose_paths_weight_mismatch(engine):
    p = F(1, 2)
    gsp3 = build_case("GSP3", p).network
    done3 = build_case("DONE3", p).network
    j = bound_one(engine, done3, gsp3)
    with pytest.raises(LawError, match="do not match"):
        compose_paths(engine, gsp3, "s1", [(Nil(), j)])


def test_sim_concat_checks_reach(engine):
    p = F(1, 2)
    gsp = build_case("GSP1", p).network
    done = build_case("DONE1", p).network
    sub = bound_one(engine, done, done)
    sub0 = transitivity(sub, sub)  # silly but well-typed
    good = sim_concat(engine, bound_one(engine, done, done), gsp, (1 - p) ** 2)
    assert good.tol == 1 * (1 - (1 - p) ** 2) + (1 - p) ** 2
    with pytest.raises(LawError, match="reach mass"):
        sim_concat(engine, bound_one(engine, done, done), gsp, F(0))


def test_sim_concat_tick_premises(engine):
    p = F(1, 2)
    gsp = build_case("GSP1", p).network
    done = build_case("DONE1", p).network
    # the gossip network has pending coins: it is not tick-only
    with pytest.raises(LawError, match="internal"):
        sim_concat_tick(engine, bound_one(engine, done, gsp), done, F(0))


def test_parallel_is_capped(engine):
    a = network(Node("a", frozenset({"b"}), Nil()))
    b = network(Node("b", frozenset({"a"}), Nil()))
    j1 = bound_one(engine, a, a)
    j2 = bound_one(engine, b, b)
    assert parallel(j1, j2).tol == 1


def test_bound_one(engine):
    g = build_case("GSP1", F(1, 2)).network
    d = build_case("DONE1", F(1, 2)).network
    assert bound_one(engine, d, g).tol == 1


# ---------------------------------------------------------------------------
# the five simple laws agree with the computed distance


@pytest.mark.parametrize("rule,kw", [
    (1, dict(P=Nil(), Q=Bcast(Value("v"), one(Nil())), p=F(2, 3))),
    (1, dict(P=Nil(), Q=Nil(), p=F(1))),
    (2, dict(P=Bcast(Value("v"), one(Nil())), Q=Nil(),
             R=Bcast(Value("w"), one(Nil())), p=F(1, 2), q=F(1, 3))),
    (4, dict(P=Nil(), Q=Bcast(Value("w"), one(Nil())), v=Value("v"),
             p=F(1, 2), q=F(1, 4))),
    (5, dict(P=Nil(), Q=Nil(), v=Value("v"), w=Value("w"), p=F(1, 2), q=F(1, 3))),
])
def test_simple_laws_sound_and_tight(rule, kw):
    d = simple_law_instance(rule, **kw)
    setting = setting_for(d.target, d.system, externals=("obs",))
    v = check_tolerance(d.target, d.system, d.tol, setting=setting)
    assert v.holds and v.converged
    assert v.computed_bound == d.tol  # the stated tolerances are exact here
    if rule == 4:
        rev = check_tolerance(d.system, d.target, F(0), setting=setting)
        assert rev.holds


def test_simple_law_rule1_certain_choice_collapses():
    d = simple_law_instance(1, P=Nil(), Q=Bcast(Value("v"), one(Nil())), p=F(1))
    assert d.tol == 0


def test_simple_law_three_flattens_products():
    mat = [[Nil(), Bcast(Value("v"), one(Nil()))],
           [Bcast(Value("w"), one(Nil())), Sleep(one(Nil()))]]
    d = simple_law_instance(3, ps=[F(1, 2), F(1, 2)], qs=[F(1, 3), F(2, 3)], P=mat)
    assert d.tol == 0
    setting = setting_for(d.target, d.system, externals=("obs",))
    assert check_tolerance(d.target, d.system, F(0), setting=setting).holds


# ---------------------------------------------------------------------------
# replay regressions


def test_replay_deterministic():
    a = replay_paper_derivations("GSP4")
    b = replay_paper_derivations("GSP4")
    assert a.tolerance == b.tolerance
    assert a.derivation.pretty() == b.derivation.pretty()


def test_replay_symbolic_matches_concrete_evaluation():
    pv = Poly.var()
    for case in ("GSP1", "GSP3", "GSP4", "GSP6"):
        sym = replay_paper_derivations(case)
        for p in (F(1, 4), F(2, 3)):
            conc = replay_paper_derivations(case, p)
            assert sym.derivation.tol_at(p) == conc.derivation.tol_at(p)


def test_certificates_carry_evidence():
    cert = replay_paper_derivations("GSP1", F(1, 2))
    text = cert.derivation.pretty(F(1, 2))
    assert "message-propagation" in text
    assert "cell of" in text
