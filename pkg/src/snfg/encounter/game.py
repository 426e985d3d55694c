"""The two-pilot encounter as a semi net-form game, and the pilots' decisions.

Nodes: ``S`` (world state), ``W_TCAS_i`` (TCAS sensor reading), ``T_i``
(advisory), ``W_i`` (pilot observation), ``A_i`` (pilot move, decision node of
player i-1) and ``H`` (outcome, summarised by the rollout's d_min).

Pilots reason with the likelihood-weighted d-relaxed sampler.  ``S`` and the
own ``W_TCAS_i`` are drawn from tight proposals centred on the values in the
decision context (the simulator's truth at the top level, the imagined world
for a modelled opponent), and the weight is corrected by target/proposal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..net import (ContinuousSpace, DeterministicCPD, DiscreteSpace, FunctionCPD, GameNet, NetError,
                   StructuredSpace)
from ..strategy import (Decision, LevelKStrategy, ProposalNode, StrategyConfig, WeightExhausted,
                        build_all_strategies)
from .rollout import rollout_dmin
from .state import (INTENT_OUTCOMES, OBS_COLS, PILOT_NOISE, TCAS_NOISE, ZDOT_LIMIT, FilterTimeConstants,
                    PilotObservation, TcasObservation, UtilityWeights, WorldState, exact_tcas,
                    gaussian_logpdf, pilot_observe, pilot_utility, tcas_observe)
from .tcas import RA_VALUES, TcasParams, mini_tcas

DEG = math.pi / 180.0
# hard left, moderate left, maintain, moderate right, hard right (left = positive heading rate)
HEADING_RATES = (3.0 * DEG, 1.5 * DEG, 0.0, -1.5 * DEG, -3.0 * DEG)
PROPOSAL_SIGMA_S = np.array([5.0, 5.0, 2.0, 0.01, 0.0, 1.0, 5.0])
PROPOSAL_SIGMA_TCAS = np.array([5.0, 2.0, 2.0, 2.0, 2.0])


class PilotDecisionError(RuntimeError):
    def __init__(self, msg, ra=None, accepted=0, attempts=0):
        super().__init__(msg)
        self.ra = ra
        self.accepted = accepted
        self.attempts = attempts

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0


@dataclass(frozen=True)
class PilotModel:
    """Level-K pilot parameters shared by both pilots."""

    level: int = 2
    M: int = 5
    M_prime: int = 10
    level0_sigma: float = 20.0
    q: float = 0.8
    redraw_factor: int = 100
    proposal_sigma_s: tuple = tuple(PROPOSAL_SIGMA_S)
    proposal_sigma_tcas: tuple = tuple(PROPOSAL_SIGMA_TCAS)

    def __post_init__(self):
        if self.level < 1 or self.M < 1 or self.M_prime < 1:
            raise ValueError("level, M and M_prime must be >= 1")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1]")
        if self.level0_sigma <= 0:
            raise ValueError("level0_sigma must be positive")


@dataclass(frozen=True)
class GameParams:
    tcas: TcasParams = field(default_factory=TcasParams)
    weights: UtilityWeights = field(default_factory=UtilityWeights)
    taus: FilterTimeConstants = field(default_factory=FilterTimeConstants)
    pilot: PilotModel = field(default_factory=PilotModel)
    pilot_noise: float = 1.0  # multiplier on the pilot observation noise
    tcas_noise: float = 1.0   # multiplier on the TCAS sensor noise
    delay: float = 5.0
    dt: float = 1.0
    horizon: float = 120.0
    horizontal: bool = False
    heading_rates: tuple = HEADING_RATES


def node(kind: str, i: int) -> str:
    """Node id for aircraft index i (0 or 1)."""
    return f"{kind}_{i + 1}"


# ---------------------------------------------------------------------------
# Pilot move distributions
# ---------------------------------------------------------------------------

def _phi(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def truncated_normal_pdf(x, mean, sigma, lo=-ZDOT_LIMIT, hi=ZDOT_LIMIT) -> float:
    if not lo <= x <= hi:
        return 0.0
    z = (x - mean) / sigma
    mass = _phi((hi - mean) / sigma) - _phi((lo - mean) / sigma)
    return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2 * math.pi) * mass)


def truncated_normal_sample(mean, sigma, rng, lo=-ZDOT_LIMIT, hi=ZDOT_LIMIT) -> float:
    while True:
        x = float(rng.normal(mean, sigma))
        if lo <= x <= hi:
            return x


def _own_hra(w: PilotObservation, i: int):
    h = w.hra[i]
    return 0.0 if h is None else h


def satisficing_cpd(i: int, params: GameParams) -> FunctionCPD:
    """Uniform over the move space once an advisory is present; no move otherwise."""
    rates = params.heading_rates
    horizontal = params.horizontal
    t_key = node("T", i)

    def sample(pa, rng):
        if pa[t_key] is None:
            return None
        vz = float(rng.uniform(-ZDOT_LIMIT, ZDOT_LIMIT))
        if horizontal:
            return (vz, rates[int(rng.integers(len(rates)))])
        return vz

    def density(a, pa):
        if pa[t_key] is None:
            return 1.0 if a is None else 0.0
        if a is None:
            return 0.0
        vz = a[0] if horizontal else a
        p = 1.0 / (2 * ZDOT_LIMIT) if -ZDOT_LIMIT <= vz <= ZDOT_LIMIT else 0.0
        if horizontal:
            p *= (1.0 / len(rates)) if a[1] in rates else 0.0
        return p

    return FunctionCPD(sample, density)


def level0_cpd(i: int, params: GameParams) -> FunctionCPD:
    """Wide Gaussian about the advisory, truncated to the move space; follows the horizontal advisory."""
    sigma = params.pilot.level0_sigma
    horizontal = params.horizontal
    t_key, w_key = node("T", i), node("W", i)

    def sample(pa, rng):
        t = pa[t_key]
        if t is None:
            return None
        vz = truncated_normal_sample(float(t), sigma, rng)
        return (vz, _own_hra(pa[w_key], i)) if horizontal else vz

    def density(a, pa):
        t = pa[t_key]
        if t is None:
            return 1.0 if a is None else 0.0
        if a is None:
            return 0.0
        if horizontal:
            if a[1] != _own_hra(pa[w_key], i):
                return 0.0
            a = a[0]
        return truncated_normal_pdf(a, float(t), sigma)

    return FunctionCPD(sample, density)


# ---------------------------------------------------------------------------
# Net
# ---------------------------------------------------------------------------

def _state_prior_density(s, pa) -> float:
    # flat over kinematics, uniform over the four intent outcomes per aircraft
    return 1.0 / 16.0


def _no_state_sampler(pa, rng):
    raise NetError("S has an improper prior; observe it or supply a proposal")


def _tcas_cpd(i: int, params: GameParams) -> FunctionCPD:
    sigma = params.tcas_noise * TCAS_NOISE

    def sample(pa, rng):
        return tcas_observe(pa["S"], i, params.tcas_noise, rng)

    def density(w, pa):
        exact, _ = exact_tcas(pa["S"].kin, i)
        return math.exp(gaussian_logpdf(w.as_array(), exact, sigma))

    return FunctionCPD(sample, density)


def _pilot_obs_cpd(params: GameParams) -> FunctionCPD:
    sigma = np.tile(params.pilot_noise * PILOT_NOISE, 2)

    def sample(pa, rng):
        return pilot_observe(pa["S"], params.pilot_noise, rng)

    def density(w, pa):
        s = pa["S"]
        if w.hra != s.hra:
            return 0.0
        return math.exp(gaussian_logpdf(w.kin.ravel(), s.kin[:, OBS_COLS].ravel(), sigma))

    return FunctionCPD(sample, density)


def _advisory_cpd(i: int, params: GameParams) -> DeterministicCPD:
    w_key = node("W_TCAS", i)
    j = 1 - i
    return DeterministicCPD(lambda pa: mini_tcas(pa[w_key], pa["S"].intents[i], pa["S"].intents[j], params.tcas))


def _outcome_cpd(params: GameParams) -> DeterministicCPD:
    def fn(pa):
        return rollout_dmin(pa["S"].kin, (pa["A_1"], pa["A_2"]), params.delay, params.dt, params.taus,
                            params.horizon)

    return DeterministicCPD(fn)


def _utility(i: int, params: GameParams):
    w = params.weights
    w_key, t_key, a_key = node("W", i), node("T", i), node("A", i)

    def u(inst):
        obs = inst[w_key]
        return pilot_utility(inst["H"], float(obs.kin[i, 5]), inst[t_key], inst[a_key], w,
                             float(obs.kin[i, 4]), obs.hra[i])

    return u


def build_encounter_net(params: GameParams = GameParams()) -> GameNet:
    parents = {"S": (), "H": ("S", "A_1", "A_2")}
    spaces = {
        "S": StructuredSpace("world", lambda s: isinstance(s, WorldState)),
        "H": StructuredSpace("d_min", lambda d: d >= 0),
    }
    cpds = {"S": FunctionCPD(_no_state_sampler, _state_prior_density), "H": _outcome_cpd(params)}
    move_space = (StructuredSpace("vertical rate x heading rate", lambda a: a is None or len(a) == 2)
                  if params.horizontal else ContinuousSpace((-ZDOT_LIMIT,), (ZDOT_LIMIT,), allow_none=True))
    for i in (0, 1):
        wt, t, w, a = node("W_TCAS", i), node("T", i), node("W", i), node("A", i)
        parents.update({wt: ("S",), t: ("S", wt), w: ("S",), a: (w, t)})
        spaces[wt] = StructuredSpace("tcas observation", lambda o: isinstance(o, TcasObservation))
        spaces[t] = DiscreteSpace(RA_VALUES)
        spaces[w] = StructuredSpace("pilot observation", lambda o: isinstance(o, PilotObservation))
        spaces[a] = move_space
        cpds[wt] = _tcas_cpd(i, params)
        cpds[t] = _advisory_cpd(i, params)
        cpds[w] = _pilot_obs_cpd(params)
    players = {"A_1": 0, "A_2": 1}
    return GameNet(parents, spaces, cpds, players, (_utility(0, params), _utility(1, params)))


# ---------------------------------------------------------------------------
# Proposals
# ---------------------------------------------------------------------------

def state_proposal(center: WorldState, own: int, pilot: PilotModel) -> ProposalNode:
    """Tight Gaussian on the kinematics; intruder intent kept with probability q."""
    sig = np.tile(np.asarray(pilot.proposal_sigma_s, float), (2, 1))
    pos = sig > 0
    cols = np.array(OBS_COLS)
    base = center.kin[:, cols]
    intr = 1 - own
    true_intent = center.intents[intr]
    q = pilot.q
    lognorm = -np.sum(np.log(sig[pos])) - 0.5 * math.log(2 * math.pi) * pos.sum()

    def sample(inst, rng):
        kin = center.kin.copy()
        kin[:, cols] = base + rng.normal(0.0, 1.0, base.shape) * sig
        if rng.random() < q:
            intent = true_intent
        else:
            intent = INTENT_OUTCOMES[int(rng.integers(4))]
        intents = list(center.intents)
        intents[intr] = intent
        return WorldState(kin, tuple(intents), center.time, center.hra)

    def density(s, inst):
        if s.intents[own] != center.intents[own] or s.hra != center.hra:
            return 0.0
        d = s.kin[:, cols] - base
        if np.any(d[~pos] != 0.0):
            return 0.0
        z = d[pos] / sig[pos]
        p = math.exp(lognorm - 0.5 * float(z @ z))
        p_int = (1.0 - q) / 4.0 + (q if s.intents[intr] == true_intent else 0.0)
        return p * p_int

    return ProposalNode(sample, density)


def tcas_proposal(center: TcasObservation, pilot: PilotModel) -> ProposalNode:
    sig = np.asarray(pilot.proposal_sigma_tcas, float)
    mu = center.as_array()

    def sample(inst, rng):
        return TcasObservation.from_array(mu + rng.normal(0.0, 1.0, 5) * sig)

    def density(w, inst):
        return math.exp(gaussian_logpdf(w.as_array(), mu, sig))

    return ProposalNode(sample, density)


def make_proposal(pilot: PilotModel):
    """Proposal override keyed on the deciding node and its context."""

    def override(v: str, context):
        i = int(v[-1]) - 1
        wt = node("W_TCAS", i)
        if "S" not in context or wt not in context:
            raise NetError(f"proposal for {v} needs S and {wt} in the decision context")
        return {"S": state_proposal(context["S"], i, pilot), wt: tcas_proposal(context[wt], pilot)}

    return override


# ---------------------------------------------------------------------------
# Decisions
# ---------------------------------------------------------------------------

class EncounterGame:
    """Encounter net plus both pilots' level-K strategies, built once."""

    def __init__(self, params: GameParams = GameParams(), counter=None):
        self.params = params
        self.net = build_encounter_net(params)
        p = params.pilot
        proposal = make_proposal(p)
        self.configs = {
            node("A", i): StrategyConfig(level=p.level, M=p.M, M_prime=p.M_prime,
                                         satisficing=satisficing_cpd(i, params), level0=level0_cpd(i, params),
                                         proposal=proposal, redraw_factor=p.redraw_factor)
            for i in (0, 1)
        }
        self.strategies = build_all_strategies(self.net, self.configs, "lw", counter)

    def decide(self, s: WorldState, own: int, w_i: PilotObservation, t_i, w_tcas_i: TcasObservation,
               rng) -> Decision:
        if t_i is None:
            raise ValueError("pilots decide only after an advisory")
        strat: LevelKStrategy = self.strategies[node("A", own)]
        context = {"S": s, node("W_TCAS", own): w_tcas_i}
        try:
            return strat.decide({node("W", own): w_i, node("T", own): t_i}, rng, context=context)
        except WeightExhausted as e:
            raise PilotDecisionError(
                f"pilot {own + 1}: advisory {t_i} reproduced in {e.accepted} of {e.attempts} proposals",
                ra=t_i, accepted=e.accepted, attempts=e.attempts) from e


def pilot_decide(s: WorldState, w_i: PilotObservation, t_i, w_tcas_i: TcasObservation,
                 params: GameParams = GameParams(), rng=None, own: int = 0, game: EncounterGame | None = None):
    """Level-K likelihood-weighted move of pilot ``own`` for the observed advisory."""
    game = game or EncounterGame(params)
    rng = rng if rng is not None else np.random.default_rng()
    return game.decide(s, own, w_i, t_i, w_tcas_i, rng).move
