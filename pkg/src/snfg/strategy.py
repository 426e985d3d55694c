"""Bounded-rational level-K strategies for semi network-form games.

Three Monte Carlo best-response samplers are provided:

``relaxed``
    every candidate move gets its own fresh set of M' full-net samples drawn
    from the posterior given the candidate and the observed parents;
``d_relaxed``
    the environment (non-descendants of the decision node) is sampled once,
    conditioned on the observed parents by rejection, and shared across all
    candidates (common random numbers);
``lw``
    like ``d_relaxed`` but the environment is weighted by the likelihood of
    the observed parents instead of being rejection-conditioned.  Optional
    per-node proposal distributions replace the natural ones, with the weight
    corrected by the target/proposal density ratio.

A level-K strategy models every other player at level K-1, bottoming out at
the player's level-0 distribution.  Strategy objects are conditional
distributions: build once, sample many times.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .net import (CPD, DiscreteSpace, GameNet, NetError, eval_density, parent_values,
                  partition_sets, sample_node)

METHODS = ("relaxed", "d_relaxed", "lw")


class StrategyError(RuntimeError):
    pass


class RejectionExhausted(StrategyError):
    """No environment sample matched the observed parents within the cap."""


class ContinuousParents(StrategyError):
    """Rejection conditioning asked for on a continuous parent."""


class WeightExhausted(StrategyError):
    """Too few nonzero-weight environment samples within the redraw cap."""

    def __init__(self, msg, accepted: int, attempts: int):
        super().__init__(msg)
        self.accepted = accepted
        self.attempts = attempts


class ProposalSupportError(StrategyError):
    """Proposal density is zero somewhere the target is positive."""


@dataclass
class ProposalNode:
    """Importance proposal for one environment node.

    ``sample(inst, rng)`` and ``density(value, inst)`` see the partial
    instantiation built so far (all earlier nodes in topological order).
    """

    sample: Callable[[Mapping, np.random.Generator], Any]
    density: Callable[[Any, Mapping], float]


# (decision node, context instantiation) -> {node id: ProposalNode}
ProposalOverride = Callable[[str, Mapping], Mapping[str, ProposalNode]]


@dataclass
class StrategyConfig:
    level: int = 1
    M: int = 5
    M_prime: int = 10
    satisficing: CPD | None = None
    level0: CPD | None = None
    proposal: ProposalOverride | None = None
    rejection_cap: int = 1_000_000
    redraw_factor: int = 100
    redraw_zero_weight: bool = True

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be >= 0")
        if self.M < 1 or self.M_prime < 1:
            raise ValueError("M and M_prime must be >= 1")


@dataclass
class UtilityEstimate:
    move: Any
    estimate: float
    sample_count: int
    weights_sum: float | None = None


@dataclass
class Decision:
    move: Any
    estimates: list = field(default_factory=list)
    env_attempts: int = 0


@dataclass
class Instrumentation:
    """Read-only counters for the complexity checks.

    ``builds`` counts level>=1 strategy constructions (one per node of the
    reasoning tree); ``samples_by_level`` counts sampling calls per level.
    """

    builds: int = 0
    builds_by_level: Counter = field(default_factory=Counter)
    samples_by_level: Counter = field(default_factory=Counter)

    @property
    def min_level_sampled(self):
        return min(self.samples_by_level) if self.samples_by_level else None


def count_strategy_evaluations(n_players: int, level: int) -> int:
    """Reasoning-tree size when all N players reason at a common level K."""
    if level <= 0:
        return 0
    return sum((n_players - 1) ** j * n_players for j in range(level))


def _same(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def candidate_set(satisficing: CPD, pa: Mapping, M: int, rng) -> list:
    """M draws from the satisficing distribution with duplicates removed (order kept)."""
    out = []
    for _ in range(M):
        x = satisficing.sample(pa, rng)
        if not any(_same(x, y) for y in out):
            out.append(x)
    return out


def _argmax(values) -> int:
    best, best_j = -np.inf, 0
    for j, val in enumerate(values):
        if val > best:
            best, best_j = val, j
    return best_j


def _as_configs(net: GameNet, cfg) -> dict:
    if isinstance(cfg, StrategyConfig):
        return {v: cfg for v in net.decision_nodes}
    missing = [v for v in net.decision_nodes if v not in cfg]
    if missing:
        raise NetError(f"no StrategyConfig for {missing}")
    return dict(cfg)


class LevelZeroStrategy:
    level = 0

    def __init__(self, node: str, cpd: CPD, counter: Instrumentation | None = None):
        if cpd is None:
            raise NetError(f"no level-0 distribution for {node!r}")
        self.node = node
        self.cpd = cpd
        self.counter = counter

    def sample(self, parents, rng, context=None):
        if self.counter is not None:
            self.counter.samples_by_level[0] += 1
        return self.cpd.sample(parents, rng)

    def density(self, value, parents):
        return self.cpd.density(value, parents)


class LevelKStrategy:
    """Level-K (K >= 1) strategy of one decision node."""

    def __init__(self, net: GameNet, node: str, level: int, configs: Mapping[str, StrategyConfig],
                 method: str = "lw", counter: Instrumentation | None = None):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        if level < 1:
            raise ValueError("LevelKStrategy needs level >= 1")
        if not net.is_decision(node):
            raise NetError(f"{node!r} is not a decision node")
        self.net = net
        self.node = node
        self.level = level
        self.method = method
        self.cfg = configs[node]
        self.player = net.player_of(node)
        self.counter = counter
        if counter is not None:
            counter.builds += 1
            counter.builds_by_level[level] += 1
        self.opponents = {d: make_strategy(net, d, level - 1, configs, method, counter)
                          for d in net.decision_nodes if d != node}

        parts = partition_sets(net, node)
        order = net.topological_order()
        self.pa = net.parents[node]
        self.succ_order = [n for n in order if n in parts.succ]
        self.env_order = [n for n in order if n in parts.non_succ]
        self.full_order = list(order)
        self.Y = parts.Y

    # -- public -------------------------------------------------------------
    def sample(self, parents, rng, context=None):
        return self.decide(parents, rng, context=context).move

    def decide(self, observed_pa: Mapping, rng: np.random.Generator, context: Mapping | None = None,
               proposal: ProposalOverride | None = None) -> Decision:
        if self.counter is not None:
            self.counter.samples_by_level[self.level] += 1
        pa = {p: observed_pa[p] for p in self.pa}
        cands = candidate_set(self.cfg.satisficing, pa, self.cfg.M, rng)
        if len(cands) == 1:
            return Decision(cands[0])
        if self.method == "relaxed":
            return self._relaxed(cands, pa, rng)
        if self.method == "d_relaxed":
            env = self._rejection_env(pa, rng)
            return self._score_shared(cands, pa, env, None, rng)
        proposal = proposal or self.cfg.proposal
        nodes = proposal(self.node, context or {}) if proposal is not None else {}
        env, weights, attempts = self._weighted_env(pa, rng, nodes)
        dec = self._score_shared(cands, pa, env, weights, rng)
        dec.env_attempts = attempts
        return dec

    def estimate_relaxed(self, move, observed_pa: Mapping, rng) -> UtilityEstimate:
        """M'-sample posterior estimate of one move's expected utility."""
        pa = {p: observed_pa[p] for p in self.pa}
        return self._relaxed([move], pa, rng).estimates[0]

    # -- helpers ------------------------------------------------------------
    def _utility(self, inst) -> float:
        return self.net.utility(self.player, inst)

    def _require_discrete_parents(self):
        for p in self.pa:
            if not isinstance(self.net.spaces.get(p), DiscreteSpace):
                raise ContinuousParents(
                    f"cannot condition on continuous parent {p!r} by rejection; "
                    "use the likelihood-weighted method")

    def _rejection_walk(self, order, fixed, pa, rng):
        """One ancestral pass over ``order``; None if a parent mismatched."""
        cap = self.cfg.rejection_cap
        for _ in range(cap):
            inst = dict(fixed)
            ok = True
            for n in order:
                if n in fixed:
                    continue
                inst[n] = sample_node(self.net, n, inst, self.opponents, rng)
                if n in pa and not _same(inst[n], pa[n]):
                    ok = False
                    break
            if ok:
                return inst
        raise RejectionExhausted(
            f"no sample matched the observed parents of {self.node!r} in {cap} draws; "
            "use the likelihood-weighted method")

    def _relaxed(self, cands, pa, rng) -> Decision:
        self._require_discrete_parents()
        M_prime = self.cfg.M_prime
        ests = []
        for c in cands:
            total = 0.0
            for _ in range(M_prime):
                inst = self._rejection_walk(self.full_order, {self.node: c}, pa, rng)
                total += self._utility(inst)
            ests.append(UtilityEstimate(c, total / M_prime, M_prime))
        j = _argmax(e.estimate for e in ests)
        return Decision(cands[j], ests)

    def _rejection_env(self, pa, rng) -> list:
        self._require_discrete_parents()
        return [self._rejection_walk(self.env_order, {}, pa, rng) for _ in range(self.cfg.M_prime)]

    def _weighted_env(self, pa, rng, proposals):
        M_prime = self.cfg.M_prime
        cap = self.cfg.redraw_factor * M_prime
        env, weights = [], []
        attempts = 0
        while len(env) < M_prime:
            if self.cfg.redraw_zero_weight and attempts >= cap:
                raise WeightExhausted(
                    f"{self.node}: only {len(env)} of {M_prime} nonzero-weight samples "
                    f"after {attempts} draws", accepted=len(env), attempts=attempts)
            attempts += 1
            inst, w = self._one_weighted(pa, rng, proposals)
            if w > 0 or not self.cfg.redraw_zero_weight:
                env.append(inst)
                weights.append(w)
        return env, weights, attempts

    def _one_weighted(self, pa, rng, proposals):
        net = self.net
        inst = {}
        w = 1.0
        for n in self.env_order:
            if n in pa:
                inst[n] = pa[n]
                w *= eval_density(net, n, pa[n], inst, self.opponents)
            elif n in proposals:
                prop = proposals[n]
                x = prop.sample(inst, rng)
                q = prop.density(x, inst)
                p = eval_density(net, n, x, inst, self.opponents)
                self._check_support(n, prop, inst)
                if q <= 0.0:
                    if p > 0.0:
                        raise ProposalSupportError(f"proposal for {n!r} has zero density at a sampled value")
                    return inst, 0.0
                inst[n] = x
                w *= p / q
            else:
                inst[n] = sample_node(net, n, inst, self.opponents, rng)
            if w == 0.0:
                return inst, 0.0
        return inst, w

    def _check_support(self, n, prop, inst):
        sp = self.net.spaces.get(n)
        if not isinstance(sp, DiscreteSpace):
            return
        pa_n = parent_values(self.net, n, inst)
        for x in sp.values:
            if prop.density(x, inst) <= 0.0 and eval_density(self.net, n, x, pa_n, self.opponents) > 0.0:
                raise ProposalSupportError(f"proposal for {n!r} misses value {x!r} that the target supports")

    def _score_shared(self, cands, pa, env, weights, rng) -> Decision:
        M_prime = len(env)
        ests = []
        for c in cands:
            total = 0.0
            for k, base in enumerate(env):
                inst = dict(base)
                inst[self.node] = c
                for n in self.succ_order:
                    inst[n] = sample_node(self.net, n, inst, self.opponents, rng)
                u = self._utility(inst)
                total += u if weights is None else weights[k] * u
            ests.append(UtilityEstimate(c, total / M_prime, M_prime,
                                        None if weights is None else float(sum(weights))))
        j = _argmax(e.estimate for e in ests)
        return Decision(cands[j], ests)


def make_strategy(net: GameNet, node: str, level: int, configs, method: str = "lw",
                  counter: Instrumentation | None = None):
    configs = _as_configs(net, configs)
    if level == 0:
        return LevelZeroStrategy(node, configs[node].level0, counter)
    return LevelKStrategy(net, node, level, configs, method, counter)


def build_all_strategies(net: GameNet, configs, method: str = "lw",
                         counter: Instrumentation | None = None) -> dict:
    """Each player's strategy at their own configured level."""
    configs = _as_configs(net, configs)
    return {v: make_strategy(net, v, configs[v].level, configs, method, counter)
            for v in net.decision_nodes}


def _sample_at_level(method, net, v, observed_pa, cfg, rng, counter, context=None, proposal=None):
    configs = _as_configs(net, cfg)
    level = configs[v].level
    if level < 1:
        raise ValueError("level-K samplers need K >= 1")
    strat = LevelKStrategy(net, v, level, configs, method, counter)
    return strat.decide(observed_pa, rng, context=context, proposal=proposal).move


def level_k_relaxed_sample(net, v, observed_pa, cfg, rng, counter=None):
    return _sample_at_level("relaxed", net, v, observed_pa, cfg, rng, counter)


def level_k_d_relaxed_sample(net, v, observed_pa, cfg, rng, counter=None):
    return _sample_at_level("d_relaxed", net, v, observed_pa, cfg, rng, counter)


def level_k_lw_d_relaxed_sample(net, v, observed_pa, cfg, rng, proposal=None, counter=None, context=None):
    return _sample_at_level("lw", net, v, observed_pa, cfg, rng, counter, context=context, proposal=proposal)


# ---------------------------------------------------------------------------
# Exact oracle
# ---------------------------------------------------------------------------

def brute_force_best_response(net: GameNet, v: str, observed_pa: Mapping,
                              opponents: Mapping[str, Any] | None = None) -> dict:
    """Exact E[u_i | x_v, x_pa(v)] for every move x_v, by full enumeration.

    ``opponents`` maps every other decision node to an object exposing
    ``density(value, parents)`` (e.g. a :class:`LevelZeroStrategy`).  The
    move's own conditional is irrelevant to the result and is taken as 1.
    """
    for n in net.nodes:
        if not isinstance(net.spaces.get(n), DiscreteSpace):
            raise NetError(f"brute force needs finite spaces; {n!r} is not discrete")
    opponents = dict(opponents or {})
    for d in net.decision_nodes:
        if d != v and d not in opponents:
            raise NetError(f"no exact strategy for {d!r}")
    player = net.player_of(v)
    order = net.topological_order()
    pa = {p: observed_pa[p] for p in net.parents[v]}

    def recurse(idx, inst, prob, acc):
        if idx == len(order):
            acc[0] += prob * net.utility(player, inst)
            acc[1] += prob
            return
        n = order[idx]
        if n == v:
            recurse(idx + 1, inst, prob, acc)
            return
        values = (pa[n],) if n in pa else net.spaces[n].values
        for x in values:
            p = eval_density(net, n, x, inst, opponents)
            if p > 0.0:
                inst[n] = x
                recurse(idx + 1, inst, prob * p, acc)
                del inst[n]

    out = {}
    for xv in net.spaces[v].values:
        acc = [0.0, 0.0]
        recurse(0, {v: xv}, 1.0, acc)
        if acc[1] == 0.0:
            raise NetError("observed parent values have zero probability")
        out[xv] = acc[0] / acc[1]
    return out
