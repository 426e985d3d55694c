import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snfg.net import (DeterministicCPD, DiscreteSpace, ContinuousSpace, GameNet, GaussianCPD,
                      NetError, TableCPD, dump, eval_density, forward_sample, partition_sets,
                      topological_order, validate)

from fixtures import (BIN, chance_net, deterministic_copy_net, enumerate_joint, fig1_net,
                      random_dag, uniform_cpd)


def chain(n="ABC"):
    parents = {n[0]: ()}
    for a, b in zip(n, n[1:]):
        parents[b] = (a,)
    cpds = {v: TableCPD((0, 1), parents[v], {k: (0.5, 0.5) for k in ([()] if not parents[v] else [(0,), (1,)])})
            for v in n}
    return GameNet(parents, {v: BIN for v in n}, cpds, {}, ())


class TestValidate:
    def test_fig1_is_valid(self):
        assert validate(fig1_net()) == []

    def test_cycle_reported_once(self):
        diags = validate(fig1_net(extra_edges=[("D", "A")]))
        assert len(diags) == 1
        assert diags[0].rule == "acyclic"

    def test_decision_node_with_cpd(self):
        diags = validate(fig1_net(cpd_on_p1=True))
        assert [(d.node, d.rule) for d in diags] == [("P1", "partition")]

    def test_space_too_small(self):
        net = GameNet({"A": ()}, {"A": DiscreteSpace((0,))}, {"A": TableCPD.root((0,), (1.0,))}, {})
        assert [d.rule for d in validate(net)] == ["space"]

    def test_bad_continuous_bounds(self):
        net = GameNet({"A": ()}, {"A": ContinuousSpace((1.0,), (0.0,))},
                      {"A": GaussianCPD(lambda pa: 0.0, 1.0)}, {})
        assert [d.rule for d in validate(net)] == ["space"]

    def test_two_nodes_one_player(self):
        net = fig1_net()
        net2 = GameNet(net.parents, net.spaces, net.cpds, {"P1": 0, "P2": 0}, net.utilities[:1])
        assert any(d.rule == "partition" for d in validate(net2))

    def test_unnormalized_table(self):
        net = GameNet({"A": ()}, {"A": BIN}, {"A": TableCPD.root((0, 1), (0.5, 0.6))}, {})
        assert [d.rule for d in validate(net)] == ["cpd"]


class TestTopologicalOrder:
    def test_chain(self):
        assert topological_order(chain()) == ("A", "B", "C")

    def test_fig1_constraints(self):
        order = topological_order(fig1_net())
        pos = {v: i for i, v in enumerate(order)}
        assert pos["A"] < pos["B"] and pos["A"] < pos["C"]
        assert pos["B"] < pos["P1"] and pos["C"] < pos["P2"]
        assert pos["P1"] < pos["D"] and pos["P2"] < pos["D"]

    def test_single_node(self):
        net = GameNet({"X": ()}, {"X": BIN}, {"X": TableCPD.root((0, 1), (0.5, 0.5))}, {})
        assert topological_order(net) == ("X",)

    def test_lexicographic_tie_break(self):
        parents = {"b": (), "a": (), "c": ("b",)}
        net = chance_net(parents)
        assert topological_order(net) == ("a", "b", "c")

    def test_cycle_names_cycle(self):
        with pytest.raises(NetError, match="cycle detected: .*A"):
            topological_order(fig1_net(extra_edges=[("D", "A")]))


class TestPartitionSets:
    def test_chain_middle(self):
        parts = partition_sets(chain(), "B")
        assert parts.succ == {"C"}
        assert parts.Y == frozenset()

    def test_fig1_p1(self):
        net = fig1_net()
        parts = partition_sets(net, "P1")
        assert set(net.parents["P1"]) == {"B"}
        assert parts.succ == {"D"}
        assert parts.Y == {"A", "C", "P2"}

    def test_unknown_node(self):
        with pytest.raises(NetError):
            partition_sets(fig1_net(), "Z")


def _bayes_ball_reachable(parents, x, given):
    """Nodes d-connected to ``x`` given ``given`` (reachability over trails)."""
    children = {v: [] for v in parents}
    for v, ps in parents.items():
        for p in ps:
            children[p].append(v)
    # ancestors of the evidence set
    anc, stack = set(), list(given)
    while stack:
        v = stack.pop()
        if v not in anc:
            anc.add(v)
            stack.extend(parents[v])
    visited, reach = set(), set()
    stack = [(x, "up")]
    while stack:
        v, d = stack.pop()
        if (v, d) in visited:
            continue
        visited.add((v, d))
        if v not in given:
            reach.add(v)
        if d == "up" and v not in given:
            stack.extend((p, "up") for p in parents[v])
            stack.extend((c, "down") for c in children[v])
        elif d == "down":
            if v not in given:
                stack.extend((c, "down") for c in children[v])
            if v in anc:
                stack.extend((p, "up") for p in parents[v])
    return reach - {x}


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 9), st.floats(0.1, 0.7), st.integers(0, 2**32 - 1))
def test_partition_identities_and_d_separation(n, p, seed):
    rng = np.random.default_rng(seed)
    parents = random_dag(rng, n, p)
    net = chance_net(parents, rng)
    g = nx.DiGraph()
    g.add_nodes_from(parents)
    g.add_edges_from((a, b) for b, ps in parents.items() for a in ps)
    allv = set(net.nodes)
    for v in net.nodes:
        parts = partition_sets(net, v)
        pa = set(net.parents[v])
        assert parts.Y | pa == parts.non_succ
        assert {v} | parts.succ | parts.non_succ == allv
        assert parts.succ == nx.descendants(g, v)
        reach = _bayes_ball_reachable(parents, v, pa)
        assert not (reach & parts.Y)
        if parts.Y:
            assert nx.is_d_separator(g, {v}, set(parts.Y), pa)


class TestForwardSample:
    def test_all_fixed_identity(self):
        net = fig1_net()
        fixed = {"A": 1, "B": 0, "C": 1, "P1": 1, "P2": 0, "D": 1}
        assert forward_sample(net, fixed, {}, np.random.default_rng(0)) == fixed

    def test_deterministic_copy(self):
        assert forward_sample(deterministic_copy_net(), {"A": 1}, {}, np.random.default_rng(0)) == {"A": 1, "B": 1}

    def test_missing_strategy(self):
        with pytest.raises(NetError, match="no strategy"):
            forward_sample(fig1_net(), {"A": 0}, {}, np.random.default_rng(0))

    def test_two_node_marginal(self):
        # exact P(B=1) by enumeration, then a 3-sigma binomial band
        net = chance_net({"A": [], "B": ["A"]}, np.random.default_rng(7))
        joint = enumerate_joint(net)
        p_b1 = sum(p for (a, b), p in joint.items() if b == 1)
        rng = np.random.default_rng(11)
        n = 100_000
        hits = sum(forward_sample(net, {}, {}, rng)["B"] for _ in range(n))
        sigma = math.sqrt(p_b1 * (1 - p_b1) / n)
        assert abs(hits / n - p_b1) < 3 * sigma

    @pytest.mark.slow
    def test_joint_total_variation(self):
        parents = {"a": [], "b": ["a"], "c": ["a"], "d": ["b", "c"]}
        net = chance_net(parents, np.random.default_rng(3))
        joint = enumerate_joint(net)
        rng = np.random.default_rng(5)
        n = 100_000
        counts = {}
        order = net.topological_order()
        for _ in range(n):
            s = forward_sample(net, {}, {}, rng)
            key = tuple(s[v] for v in order)
            counts[key] = counts.get(key, 0) + 1
        tv = 0.5 * sum(abs(counts.get(k, 0) / n - p) for k, p in joint.items())
        assert tv < 0.02


class TestEvalDensity:
    def test_deterministic_match(self):
        assert eval_density(deterministic_copy_net(), "B", 1, {"A": 1}) == 1.0

    def test_deterministic_mismatch(self):
        assert eval_density(deterministic_copy_net(), "B", 0, {"A": 1}) == 0.0

    def test_gaussian(self):
        net = GameNet({"X": ()}, {"X": ContinuousSpace((-10,), (10,))}, {"X": GaussianCPD(lambda pa: 0.0, 1.0)}, {})
        assert eval_density(net, "X", 0.0, {}) == pytest.approx(0.3989422804, abs=1e-9)

    def test_decision_node_needs_density(self):
        net = fig1_net()

        class NoDensity:
            def sample(self, pa, rng, context=None):
                return 0

        with pytest.raises(NetError):
            eval_density(net, "P1", 0, {"B": 0}, {"P1": NoDensity()})

    def test_table_normalized(self):
        net = fig1_net()
        for a in (0, 1):
            assert sum(eval_density(net, "B", b, {"A": a}) for b in (0, 1)) == pytest.approx(1.0, abs=1e-9)


def test_dump_lists_every_node():
    text = dump(fig1_net())
    lines = text.strip().splitlines()
    assert len(lines) == 6
    assert lines[0] == "node A chance parents= space=discrete{0,1}"
    assert "node P1 decision:0 parents=B space=discrete{0,1}" in lines


def test_uniform_fixture_density_sums():
    cpd = uniform_cpd((0, 1, 2))
    assert sum(cpd.density(x, {}) for x in (0, 1, 2)) == pytest.approx(1.0)
