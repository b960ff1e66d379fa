import itertools
import random
from fractions import Fraction as F

import pytest

from simtol.calculus import (
    Bcast, Network, Nil, Node, Sleep, Tau as TauP, Value, canonical_form,
    choice, network, one,
)
from simtol.gossip import build_case, mk_fwd, mk_resnd, mk_snd, V
from simtol.quasimetric import (
    DistanceEngine, MarginalMismatch, ToleranceVerdict, check_tolerance,
    kantorovich, kernel_is_simulation, min_quasimetric, transport,
)
from simtol.semantics import Lts, SubDist, setting_for


# ---------------------------------------------------------------------------
# brute-force transportation oracle: enumerate basic feasible solutions as
# spanning trees of the bipartite supply/demand graph and take the best


def brute_force_transport(costs, supply, demand):
    m, n = len(supply), len(demand)
    nodes = m + n
    edges = [(i, j) for i in range(m) for j in range(n)]
    best = None
    for tree in itertools.combinations(edges, nodes - 1):
        adj = {k: [] for k in range(nodes)}
        for i, j in tree:
            adj[i].append((m + j, (i, j)))
            adj[m + j].append((i, (i, j)))
        # connectivity check
        seen = {0}
        stack = [0]
        while stack:
            for nxt, _ in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        if len(seen) != nodes:
            continue
        # solve the unique flow on the tree by leaf elimination
        need = {k: (supply[k] if k < m else -demand[k - m]) for k in range(nodes)}
        deg = {k: len(adj[k]) for k in range(nodes)}
        flows = {}
        order = [k for k in range(nodes) if deg[k] == 1]
        removed = set()
        ok = True
        while order:
            leaf = order.pop()
            if leaf in removed:
                continue
            links = [(nxt, e) for nxt, e in adj[leaf] if nxt not in removed]
            if not links:
                break
            nxt, e = links[0]
            amount = need[leaf] if leaf < m else -need[leaf]
            flows[e] = amount if leaf < m else amount
            # shipping from supply side i to demand side j
            i, j = e
            f = need[leaf] if leaf < m else -need[leaf]
            flows[e] = f
            need[i] -= f
            need[m + j] += f
            removed.add(leaf)
            deg[nxt] -= 1
            if deg[nxt] == 1:
                order.append(nxt)
        if any(v < 0 for v in flows.values()):
            continue
        leftover = [k for k in range(nodes) if k not in removed]
        if any(need[k] != 0 for k in leftover):
            continue
        cost = sum(flows[(i, j)] * costs[i][j] for (i, j) in flows)
        if best is None or cost < best:
            best = cost
    return best


def random_instance(rng, max_support=4):
    m = rng.randint(1, max_support)
    n = rng.randint(1, max_support)

    def masses(k):
        cuts = sorted(rng.randint(1, 11) for _ in range(k - 1))
        parts = []
        prev = 0
        for c in cuts + [12]:
            parts.append(F(c - prev, 12))
            prev = c
        return [p for p in parts if p > 0]

    supply = masses(m)
    demand = masses(n)
    costs = [[F(rng.randint(0, 8), 8) for _ in demand] for _ in supply]
    return costs, supply, demand


def test_transport_matches_brute_force_on_100_random_instances():
    rng = random.Random(20240811)
    checked = 0
    while checked < 100:
        costs, supply, demand = random_instance(rng)
        got, flow = transport(costs, supply, demand)
        want = brute_force_transport(costs, supply, demand)
        assert got == want, (costs, supply, demand)
        # plan is feasible and achieves the reported cost
        assert [sum(row) for row in flow] == supply
        assert [sum(col) for col in zip(*flow)] == demand
        assert sum(flow[i][j] * costs[i][j]
                   for i in range(len(supply)) for j in range(len(demand))) == got
        checked += 1


# ---------------------------------------------------------------------------
# the lifting


def nnet(proc, name="n"):
    return canonical_form(network(Node(name, frozenset({"obs"}), proc)))


def test_lifting_of_diracs_is_the_ground_distance():
    a, b = nnet(Nil()), nnet(Sleep(one(Nil())))
    val, matching = kantorovich(lambda x, y: F(1, 3), SubDist.dirac(a), SubDist.dirac(b))
    assert val == F(1, 3)
    assert matching == {(a, b): F(1)}


def test_lifting_same_distribution_is_zero():
    a, b = nnet(Nil()), nnet(Sleep(one(Nil())))
    delta = SubDist(((a, F(1, 3)), (b, F(2, 3))))

    def d(x, y):
        return F(0) if x == y else F(1)

    val, matching = kantorovich(d, delta, delta)
    assert val == 0
    assert matching == {(a, a): F(1, 3), (b, b): F(2, 3)}


def test_lifting_crossed_supports():
    # half A half B against half C half D with zero-cost partners crossed
    a, b, c, d = (nnet(Nil(), "a"), nnet(Nil(), "b"), nnet(Nil(), "c"),
                  nnet(Nil(), "d"))
    cost = {(a, c): F(0), (b, d): F(0), (a, d): F(1), (b, c): F(1)}
    val, _ = kantorovich(lambda x, y: cost[(x, y)],
                         SubDist(((a, F(1, 2)), (b, F(1, 2)))),
                         SubDist(((c, F(1, 2)), (d, F(1, 2)))))
    assert val == 0


def test_lifting_rejects_subdistributions():
    a = nnet(Nil())
    with pytest.raises(MarginalMismatch):
        kantorovich(lambda x, y: F(0), SubDist(((a, F(1, 2)),)), SubDist.dirac(a))


# ---------------------------------------------------------------------------
# the distance fixed point


def test_distance_to_self_is_zero():
    for case in ("GSP1", "DONE1", "GSP4", "DONE3"):
        net = build_case(case, F(1, 2)).network
        v = check_tolerance(net, net, 0)
        assert v.holds and v.computed_bound == 0 and v.converged


def test_gsp1_bound_and_tightness():
    p = F(1, 2)
    gsp = build_case("GSP1", p).network
    done = build_case("DONE1", p).network
    lts = Lts(setting_for(gsp, done))
    v = check_tolerance(done, gsp, (1 - p) ** 2, lts=lts)
    assert v.holds and v.converged
    # the bound is exactly attained, so shaving any epsilon must fail
    assert v.computed_bound == (1 - p) ** 2
    tight = check_tolerance(done, gsp, (1 - p) ** 2 - F(1, 1000), lts=lts)
    assert not tight.holds


def test_monotone_in_sweeps():
    p = F(1, 2)
    gsp = build_case("GSP1", p).network
    done = build_case("DONE1", p).network
    prev = F(0)
    for k in range(1, 5):
        t = min_quasimetric([(done, gsp)], setting=setting_for(gsp, done),
                            max_sweeps=k)
        cur = t.entry(done, gsp)
        assert cur >= prev
        prev = cur


def test_nonconvergence_is_flagged_not_wrong():
    p = F(1, 2)
    gsp = build_case("GSP2", p).network
    done = build_case("DONE2", p).network
    t = min_quasimetric([(done, gsp)], setting=setting_for(gsp, done), max_sweeps=2)
    assert not t.converged
    full = min_quasimetric([(done, gsp)], setting=setting_for(gsp, done))
    assert full.converged
    assert t.entry(done, gsp) <= full.entry(done, gsp)


def _small_state_pool(p=F(1, 2), limit=12):
    gsp = build_case("GSP1", p).network
    done = build_case("DONE1", p).network
    lts = Lts(setting_for(gsp, done))
    seen, _ = lts.reachable(gsp)
    seen2, _ = lts.reachable(done)
    pool = [lts.state(s) for s in (seen + seen2)[:limit]]
    return lts, pool


def test_pseudoquasimetric_laws_on_converged_table():
    lts, pool = _small_state_pool()
    pairs = [(a, b) for a in pool for b in pool]
    table = min_quasimetric(pairs, lts=lts)
    assert table.converged
    ids = {m: lts.state_id(m) for m in pool}
    for m in pool:
        assert table.values[(ids[m], ids[m])] == 0
    triples = 0
    for a, b, c in itertools.product(pool, repeat=3):
        dab = table.values[(ids[a], ids[b])]
        dac = table.values[(ids[a], ids[c])]
        dcb = table.values[(ids[c], ids[b])]
        assert dab <= dac + dcb
        triples += 1
    assert triples >= 200


def test_tolerance_transitivity_sampled():
    lts, pool = _small_state_pool(limit=8)
    pairs = [(a, b) for a in pool for b in pool]
    table = min_quasimetric(pairs, lts=lts)
    ids = {m: lts.state_id(m) for m in pool}
    for a, b, c in itertools.islice(itertools.product(pool, repeat=3), 300):
        p = table.values[(ids[a], ids[b])]
        q = table.values[(ids[b], ids[c])]
        r = table.values[(ids[a], ids[c])]
        assert r <= min(F(1), p + q)


def test_weak_reach_implies_tolerance():
    # whatever the network can quietly become, it simulates
    p = F(4, 5)
    gsp = build_case("GSP1", p).network
    done = build_case("DONE1", p).network
    lts = Lts(setting_for(gsp, done))
    q = 1 - lts.max_tau_mass(gsp, done)
    v = check_tolerance(done, gsp, q, lts=lts)
    assert v.holds


def test_kernel_replay_passes_on_real_table():
    p = F(1, 2)
    gsp = build_case("GSP1", p).network
    done = build_case("DONE1", p).network
    lts = Lts(setting_for(gsp, done))
    table = min_quasimetric([(done, gsp), (gsp, gsp)], lts=lts)
    assert table.converged
    zeros = [k for k, v in table.values.items() if v == 0]
    assert zeros
    assert kernel_is_simulation(table) == []


def test_kernel_replay_catches_corruption():
    p = F(1, 2)
    gsp = build_case("GSP1", p).network
    done = build_case("DONE1", p).network
    lts = Lts(setting_for(gsp, done))
    table = min_quasimetric([(done, gsp)], lts=lts)
    key = (lts.state_id(done), lts.state_id(gsp))
    assert table.values[key] > 0
    table.values[key] = F(0)  # deliberately lie about the pair
    bad = kernel_is_simulation(table)
    assert any(c.left == canonical_form(done) for c in bad)


# ---------------------------------------------------------------------------
# non-expansiveness on sampled parallel compositions


def _proc_samples(rng):
    leaves = [Nil(), Bcast(Value("v"), one(Nil())), Sleep(one(Nil())),
              mk_snd(V, F(1, 2)), mk_resnd(V, F(3, 4)), Sleep(one(mk_snd(V, 1)))]
    p = rng.choice(leaves)
    if rng.random() < 0.5:
        q = rng.choice(leaves)
        w = rng.choice([F(1, 4), F(1, 2), F(3, 4)])
        return TauP(choice((w, p), (1 - w, q)))
    return p


def test_non_expansiveness_on_sampled_compositions():
    from simtol.laws import parallel
    from simtol.laws import Derivation

    rng = random.Random(0xA11CE)
    checked = 0
    while checked < 50:
        pa, pb = _proc_samples(rng), _proc_samples(rng)
        qa, qb = _proc_samples(rng), _proc_samples(rng)
        m1 = network(Node("a", frozenset({"b"}), pa))
        n1 = network(Node("a", frozenset({"b"}), qa))
        m2 = network(Node("b", frozenset({"a"}), pb))
        n2 = network(Node("b", frozenset({"a"}), qb))
        setting = setting_for(m1, n1, m2, n2, externals=("b",))
        setting2 = setting_for(m1, n1, m2, n2, externals=("a",))
        lts1 = Lts(setting)
        lts2 = Lts(setting2)
        b1 = min_quasimetric([(m1, n1)], lts=lts1).entry(m1, n1)
        b2 = min_quasimetric([(m2, n2)], lts=lts2).entry(m2, n2)
        par_m = m1.par(m2)
        par_n = n1.par(n2)
        lts = Lts(setting_for(par_m, par_n, externals=()))
        b = min_quasimetric([(par_m, par_n)], lts=lts).entry(par_m, par_n)
        assert b <= min(F(1), b1 + b2), (pa, pb, qa, qb, b, b1, b2)
        checked += 1
