"""Small discrete games shared by the engine tests."""
import itertools

import numpy as np

from snfg.net import (DeterministicCPD, DiscreteSpace, FunctionCPD, GameNet, TableCPD)
from snfg.strategy import StrategyConfig

BIN = DiscreteSpace((0, 1))


def uniform_cpd(values):
    values = tuple(values)
    p = 1.0 / len(values)
    return FunctionCPD(lambda pa, rng: values[int(rng.integers(len(values)))],
                       lambda x, pa: p if x in values else 0.0)


def fig1_cpds():
    return {
        "A": TableCPD.root((0, 1), (0.6, 0.4)),
        "B": TableCPD((0, 1), ("A",), {(0,): (0.7, 0.3), (1,): (0.2, 0.8)}),
        "C": TableCPD((0, 1), ("A",), {(0,): (0.5, 0.5), (1,): (0.1, 0.9)}),
        "D": TableCPD((0, 1), ("P1", "P2"), {(0, 0): (0.8, 0.2), (0, 1): (0.1, 0.9),
                                             (1, 0): (0.1, 0.9), (1, 1): (0.8, 0.2)}),
    }


def u1(inst):
    return 2.0 * inst["D"] + (1.0 if inst["P1"] == inst["A"] else 0.0)


def u2(inst):
    return 1.0 - inst["D"] + 0.5 * inst["C"] * inst["P2"]


FIG1_PARENTS = {"A": (), "B": ("A",), "C": ("A",), "P1": ("B",), "P2": ("C",), "D": ("P1", "P2")}


def fig1_net(extra_edges=(), cpd_on_p1=False):
    parents = {k: list(v) for k, v in FIG1_PARENTS.items()}
    for a, b in extra_edges:
        parents[b].append(a)
    cpds = fig1_cpds()
    if cpd_on_p1:
        cpds["P1"] = uniform_cpd((0, 1))
    return GameNet(parents, {v: BIN for v in parents}, cpds, {"P1": 0, "P2": 1}, (u1, u2))


def fig1_configs(level=1, M=2, M_prime=50):
    return {v: StrategyConfig(level=level, M=M, M_prime=M_prime,
                              satisficing=uniform_cpd((0, 1)), level0=uniform_cpd((0, 1)))
            for v in ("P1", "P2")}


def evidence_net(scale=1.0):
    """E -> O (observed by v), E -> R, v & R -> utility.  Four binary nodes."""
    parents = {"E": (), "O": ("E",), "R": ("E",), "v": ("O",)}
    cpds = {
        "E": TableCPD.root((0, 1), (0.3, 0.7)),
        "O": TableCPD((0, 1), ("E",), {(0,): (0.8, 0.2), (1,): (0.25, 0.75)}),
        "R": TableCPD((0, 1), ("E",), {(0,): (0.9, 0.1), (1,): (0.35, 0.65)}),
    }

    def util(inst):
        # strictly positive so that ratios of expectations are well defined
        return scale * (1.0 + 3.0 * (inst["v"] == inst["R"]) + 0.5 * inst["v"])

    return GameNet(parents, {v: BIN for v in parents}, cpds, {"v": 0}, (util,))


def enumerate_joint(net, fixed=None):
    """Exact joint over a fully discrete, decision-free (or fully clamped) net."""
    fixed = fixed or {}
    nodes = net.topological_order()
    out = {}
    free = [n for n in nodes if n not in fixed]
    for vals in itertools.product(*(net.spaces[n].values for n in free)):
        inst = dict(fixed)
        inst.update(zip(free, vals))
        p = 1.0
        for n in nodes:
            if n in fixed:
                continue
            pa = {q: inst[q] for q in net.parents[n]}
            p *= net.cpds[n].density(inst[n], pa)
        out[tuple(inst[n] for n in nodes)] = p
    return out


def random_dag(rng, n_nodes, edge_prob):
    names = [f"n{i:02d}" for i in range(n_nodes)]
    perm = rng.permutation(n_nodes)
    parents = {names[i]: [] for i in range(n_nodes)}
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            if rng.random() < edge_prob:
                parents[names[perm[b]]].append(names[perm[a]])
    return parents


def chance_net(parents, rng=None):
    """Binary chance-only net with random CPTs over a given parent structure."""
    rng = rng or np.random.default_rng(0)
    cpds = {}
    for v, ps in parents.items():
        table = {}
        for key in itertools.product((0, 1), repeat=len(ps)):
            p1 = float(rng.uniform(0.1, 0.9))
            table[key] = (1.0 - p1, p1)
        cpds[v] = TableCPD((0, 1), sorted(ps), table)
    return GameNet(parents, {v: BIN for v in parents}, cpds, {}, ())


def deterministic_copy_net():
    parents = {"A": (), "B": ("A",)}
    cpds = {"A": TableCPD.root((0, 1), (0.5, 0.5)), "B": DeterministicCPD(lambda pa: pa["A"])}
    return GameNet(parents, {"A": BIN, "B": BIN}, cpds, {}, ())
