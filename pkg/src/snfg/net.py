"""Semi network-form games: DAG structure, node partition, spaces and CPDs.

A :class:`GameNet` is a Bayes net in which the chance nodes carry fixed
conditional distributions and each decision node belongs to exactly one
player.  The strategies that fill in the decision nodes are supplied at
sampling time (see :mod:`snfg.strategy`).
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping

import numpy as np

Instantiation = dict  # NodeId -> value, possibly partial


class NetError(ValueError):
    """Raised for structural problems (cycles, unknown nodes, missing strategies)."""


class DensityUnavailable(NetError):
    pass


# ---------------------------------------------------------------------------
# Variable spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteSpace:
    values: tuple

    kind = "discrete"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))

    def __contains__(self, x) -> bool:
        return x in self.values

    def __len__(self):
        return len(self.values)

    def describe(self) -> str:
        return "discrete{" + ",".join(str(v) for v in self.values) + "}"


@dataclass(frozen=True)
class ContinuousSpace:
    """Axis-aligned box.  ``allow_none`` adds a distinguished "no move" element."""

    lower: tuple
    upper: tuple
    allow_none: bool = False

    kind = "continuous"

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def __contains__(self, x) -> bool:
        if x is None:
            return self.allow_none
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        if arr.shape != (self.dim,) or not np.all(np.isfinite(arr)):
            return False
        return bool(np.all(arr >= self.lower) and np.all(arr <= self.upper))

    def describe(self) -> str:
        box = " x ".join(f"[{lo:g},{hi:g}]" for lo, hi in zip(self.lower, self.upper))
        return "continuous" + box + ("|none" if self.allow_none else "")


@dataclass(frozen=True)
class StructuredSpace:
    """Composite values (world states, observation records) checked by a predicate."""

    name: str
    predicate: Callable[[Any], bool] = lambda x: x is not None

    kind = "structured"

    def __contains__(self, x) -> bool:
        return bool(self.predicate(x))

    def describe(self) -> str:
        return f"structured<{self.name}>"


# ---------------------------------------------------------------------------
# Conditional distributions
# ---------------------------------------------------------------------------

class CPD:
    """Conditional distribution of a node given its parents.

    ``sample(parents, rng)`` draws a value; ``density(value, parents)`` returns
    the conditional mass/density or raises :class:`DensityUnavailable`.
    """

    deterministic = False

    def sample(self, parents: Mapping, rng: np.random.Generator):
        raise NotImplementedError

    def density(self, value, parents: Mapping) -> float:
        raise DensityUnavailable(type(self).__name__)

    @property
    def has_density(self) -> bool:
        return type(self).density is not CPD.density


class FunctionCPD(CPD):
    def __init__(self, sampler, density=None):
        self._sampler = sampler
        self._density = density

    def sample(self, parents, rng):
        return self._sampler(parents, rng)

    def density(self, value, parents):
        if self._density is None:
            raise DensityUnavailable("no density supplied")
        return float(self._density(value, parents))

    @property
    def has_density(self):
        return self._density is not None


class DeterministicCPD(CPD):
    """Point mass on ``fn(parents)``; the density is the indicator of that value."""

    deterministic = True

    def __init__(self, fn: Callable[[Mapping], Any], equal: Callable[[Any, Any], bool] | None = None):
        self.fn = fn
        self.equal = equal or (lambda a, b: a == b)

    def sample(self, parents, rng):
        return self.fn(parents)

    def density(self, value, parents):
        return 1.0 if self.equal(value, self.fn(parents)) else 0.0


class TableCPD(CPD):
    """Finite CPD.  ``table`` maps a tuple of parent values (in ``parent_order``)
    to a probability vector over ``values``."""

    def __init__(self, values: Iterable, parent_order: Iterable[str], table: Mapping[tuple, Iterable[float]]):
        self.values = tuple(values)
        self.parent_order = tuple(parent_order)
        self.table = {tuple(k): np.asarray(p, dtype=float) for k, p in table.items()}
        self._index = {v: i for i, v in enumerate(self.values)}

    @classmethod
    def root(cls, values, probs):
        return cls(values, (), {(): probs})

    def _row(self, parents):
        key = tuple(parents[p] for p in self.parent_order)
        try:
            return self.table[key]
        except KeyError:
            raise NetError(f"no CPD row for parent values {key}") from None

    def sample(self, parents, rng):
        row = self._row(parents)
        return self.values[int(rng.choice(len(self.values), p=row))]

    def density(self, value, parents):
        i = self._index.get(value)
        return 0.0 if i is None else float(self._row(parents)[i])


class GaussianCPD(CPD):
    """Scalar Gaussian with mean ``mean_fn(parents)`` and fixed ``sigma``."""

    def __init__(self, mean_fn: Callable[[Mapping], float], sigma: float):
        self.mean_fn = mean_fn
        self.sigma = float(sigma)

    def sample(self, parents, rng):
        return float(rng.normal(self.mean_fn(parents), self.sigma))

    def density(self, value, parents):
        z = (value - self.mean_fn(parents)) / self.sigma
        return math.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))


# ---------------------------------------------------------------------------
# The game net
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    node: str
    rule: str
    message: str

    def __str__(self):
        return f"{self.node}: [{self.rule}] {self.message}"


@dataclass(frozen=True)
class PartitionSets:
    succ: frozenset
    non_succ: frozenset
    Y: frozenset


class GameNet:
    """Immutable semi network-form game.

    Parameters
    ----------
    parents : mapping node -> sequence of parent ids.  Node ids are strings;
        every node must appear as a key.
    spaces : mapping node -> variable space.
    cpds : mapping chance node -> CPD.
    players : mapping decision node -> player index (0-based).
    utilities : sequence of callables ``u_i(inst) -> float``, one per player.
    """

    def __init__(self, parents: Mapping[str, Iterable[str]], spaces: Mapping, cpds: Mapping,
                 players: Mapping[str, int], utilities: Iterable[Callable[[Mapping], float]] = ()):
        self.parents = {str(v): tuple(sorted(ps)) for v, ps in parents.items()}
        self.nodes = tuple(sorted(self.parents))
        self.spaces = dict(spaces)
        self.cpds = dict(cpds)
        self.players = dict(players)
        self.utilities = tuple(utilities)
        self.children = {v: [] for v in self.nodes}
        for v, ps in self.parents.items():
            for p in ps:
                if p in self.children:
                    self.children[p].append(v)
        self._topo = None
        self._succ = {}

    # -- structure -----------------------------------------------------------
    @property
    def decision_nodes(self) -> tuple:
        return tuple(sorted(self.players, key=lambda v: (self.players[v], v)))

    @property
    def chance_nodes(self) -> tuple:
        return tuple(v for v in self.nodes if v not in self.players)

    @property
    def n_players(self) -> int:
        return len(set(self.players.values()))

    def is_decision(self, v) -> bool:
        return v in self.players

    def player_of(self, v) -> int:
        return self.players[v]

    def node_of(self, player: int) -> str:
        for v, i in self.players.items():
            if i == player:
                return v
        raise NetError(f"no decision node for player {player}")

    def utility(self, player: int, inst: Mapping) -> float:
        return float(self.utilities[player](inst))

    def _check_node(self, v):
        if v not in self.parents:
            raise NetError(f"unknown node {v!r}")

    def topological_order(self) -> tuple:
        if self._topo is None:
            self._topo = topological_order(self)
        return self._topo

    def descendants(self, v) -> frozenset:
        self._check_node(v)
        if v not in self._succ:
            seen, stack = set(), list(self.children[v])
            while stack:
                c = stack.pop()
                if c not in seen:
                    seen.add(c)
                    stack.extend(self.children[c])
            self._succ[v] = frozenset(seen)
        return self._succ[v]


def _find_cycle(net: GameNet, remaining: set) -> list:
    # walk parent pointers inside the unresolved subgraph until a node repeats
    v = min(remaining)
    path, pos = [], {}
    while v not in pos:
        pos[v] = len(path)
        path.append(v)
        v = min(p for p in net.parents[v] if p in remaining)
    return path[pos[v]:] + [v]


def topological_order(net: GameNet) -> tuple:
    """Kahn's algorithm with lexicographic tie-break."""
    indeg = {v: sum(1 for p in net.parents[v] if p in net.parents) for v in net.nodes}
    heap = [v for v, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for c in net.children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != len(net.nodes):
        cycle = _find_cycle(net, set(net.nodes) - set(order))
        # parent-pointer walk yields the cycle reversed
        raise NetError("cycle detected: " + " -> ".join(reversed(cycle)))
    return tuple(order)


def validate(net: GameNet) -> list[Diagnostic]:
    """Check the structural invariants; one diagnostic per violation."""
    diags = []
    for v, ps in net.parents.items():
        for p in ps:
            if p not in net.parents:
                diags.append(Diagnostic(v, "edges", f"parent {p!r} is not a node"))
    try:
        topological_order(net)
    except NetError as exc:
        cyc = str(exc).split(": ", 1)[1]
        diags.append(Diagnostic(cyc.split(" -> ")[0], "acyclic", str(exc)))

    for v in net.nodes:
        sp = net.spaces.get(v)
        if sp is None:
            diags.append(Diagnostic(v, "space", "no variable space"))
        elif isinstance(sp, DiscreteSpace) and len(sp) < 2:
            diags.append(Diagnostic(v, "space", "discrete space needs at least two elements"))
        elif isinstance(sp, ContinuousSpace):
            lo, hi = np.array(sp.lower), np.array(sp.upper)
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
                diags.append(Diagnostic(v, "space", "continuous bounds must be finite with lower < upper"))

    counts = {}
    for v, i in net.players.items():
        counts.setdefault(i, []).append(v)
    for i, vs in sorted(counts.items()):
        if len(vs) != 1:
            diags.append(Diagnostic(sorted(vs)[0], "partition", f"player {i} owns {len(vs)} decision nodes"))
    if counts and sorted(counts) != list(range(len(counts))):
        diags.append(Diagnostic(net.decision_nodes[0], "partition", "player indices must be 0..N-1"))
    if net.utilities and len(net.utilities) != len(counts):
        diags.append(Diagnostic(net.nodes[0] if net.nodes else "-", "utility",
                                f"{len(net.utilities)} utilities for {len(counts)} players"))

    for v in net.nodes:
        if v in net.players:
            if v in net.cpds:
                diags.append(Diagnostic(v, "partition", "decision node must not carry a CPD"))
        elif v not in net.cpds:
            diags.append(Diagnostic(v, "partition", "chance node has no CPD"))
    for v in net.cpds:
        if v not in net.parents:
            diags.append(Diagnostic(v, "partition", "CPD attached to unknown node"))

    for v, cpd in net.cpds.items():
        sp = net.spaces.get(v)
        if isinstance(cpd, TableCPD) and isinstance(sp, DiscreteSpace):
            for key, row in cpd.table.items():
                if abs(row.sum() - 1.0) > 1e-9 or np.any(row < 0):
                    diags.append(Diagnostic(v, "cpd", f"row {key} is not normalized"))
            if any(x not in sp for x in cpd.values):
                diags.append(Diagnostic(v, "cpd", "CPD support outside the node space"))
    return diags


def partition_sets(net: GameNet, v: str) -> PartitionSets:
    """Split V around ``v``: descendants, non-descendants, and the set Y of
    non-descendants that are neither ``v`` nor its parents."""
    net._check_node(v)
    succ = net.descendants(v)
    allv = frozenset(net.nodes)
    non_succ = allv - succ - {v}
    Y = non_succ - frozenset(net.parents[v])
    return PartitionSets(succ=succ, non_succ=non_succ, Y=Y)


# ---------------------------------------------------------------------------
# Sampling and densities
# ---------------------------------------------------------------------------

def parent_values(net: GameNet, v: str, inst: Mapping) -> dict:
    return {p: inst[p] for p in net.parents[v]}


def sample_node(net: GameNet, v: str, inst: Mapping, strategies: Mapping, rng: np.random.Generator):
    pa = parent_values(net, v, inst)
    if v in net.players:
        strat = strategies.get(v) if strategies else None
        if strat is None:
            raise NetError(f"no strategy for decision node {v!r}")
        return strat.sample(pa, rng, context=inst)
    return net.cpds[v].sample(pa, rng)


def forward_sample(net: GameNet, fixed: Mapping | None = None, strategies: Mapping | None = None,
                   rng: np.random.Generator | None = None) -> Instantiation:
    """Ancestral sample of the whole net; nodes in ``fixed`` keep their values."""
    fixed = dict(fixed or {})
    for v in fixed:
        net._check_node(v)
    rng = rng if rng is not None else np.random.default_rng()
    inst = {}
    for v in net.topological_order():
        if v in fixed:
            inst[v] = fixed[v]
        else:
            inst[v] = sample_node(net, v, inst, strategies or {}, rng)
    return inst


def eval_density(net: GameNet, node: str, value, parents: Mapping, strategies: Mapping | None = None) -> float:
    """Conditional density/mass of ``value`` at ``node`` given its parent values.

    Decision nodes need a strategy exposing ``density`` (the level-0 case).
    """
    net._check_node(node)
    pa = {p: parents[p] for p in net.parents[node]}
    if node in net.players:
        strat = (strategies or {}).get(node)
        dens = getattr(strat, "density", None)
        if dens is None:
            raise DensityUnavailable(f"strategy at {node!r} exposes no density")
        return float(dens(value, pa))
    cpd = net.cpds[node]
    return float(cpd.density(value, pa))


def dump(net: GameNet) -> str:
    """Plain-text listing, one line per node in topological order::

        node <id> <chance|decision:player> parents=<a,b> space=<description>
    """
    lines = []
    try:
        order = net.topological_order()
    except NetError:
        order = net.nodes
    for v in order:
        role = f"decision:{net.players[v]}" if v in net.players else "chance"
        sp = net.spaces.get(v)
        desc = sp.describe() if sp is not None else "?"
        lines.append(f"node {v} {role} parents={','.join(net.parents[v])} space={desc}")
    return "\n".join(lines) + "\n"
