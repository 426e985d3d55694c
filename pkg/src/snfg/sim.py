"""Time-extended encounter simulation and social-welfare scoring."""
from __future__ import annotations

import csv
import functools
import json
import math
import time as _time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .encounter.game import EncounterGame, GameParams, PilotDecisionError, PilotModel, HEADING_RATES
from .encounter.state import (F, PHIC, TH, X, Y, Z, ZD, ZDC, FilterTimeConstants, TcasIntent, UtilityWeights,
                              WorldState, pilot_observe, roll_for_heading_rate, separation, step_kin,
                              tcas_observe)
from .encounter.tcas import TcasParams, mini_tcas, sense_of

MODES = ("vertical", "horizontal")


@dataclass(frozen=True)
class EncounterConfig:
    dt: float = 1.0
    t_target_range: tuple = (40.0, 60.0)
    speed_range: tuple = (250.0, 500.0)          # ft/s
    altitude_range: tuple = (5000.0, 20000.0)    # ft, own altitude at closest approach
    heading_range: tuple = (0.0, 2 * math.pi)    # rad, own heading
    approach_angle_range: tuple = (0.0, 2 * math.pi)  # rad, intruder heading relative to own
    vertical_rate_range: tuple = (-15.0, 15.0)   # ft/s
    hmd_max: float = 500.0                       # ft, horizontal miss at closest approach
    vmd_max: float = 100.0                       # ft, vertical miss at closest approach
    reaction_delay: float = 5.0
    nmac_horizontal: float = 500.0
    nmac_vertical: float = 100.0
    max_duration: float = 120.0
    pilot_noise: float = 1.0
    tcas_noise: float = 1.0
    pilot: PilotModel = field(default_factory=PilotModel)
    weights: UtilityWeights = field(default_factory=UtilityWeights)
    tcas: TcasParams = field(default_factory=TcasParams)
    taus: FilterTimeConstants = field(default_factory=FilterTimeConstants)
    mode: str = "vertical"
    heading_rates: tuple = HEADING_RATES
    rollout_horizon: float = 120.0

    def __post_init__(self):
        lo, hi = self.t_target_range
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 < lo <= hi < self.max_duration:
            raise ValueError("t_target_range must lie inside (0, max_duration)")
        if min(self.nmac_horizontal, self.nmac_vertical) <= 0:
            raise ValueError("NMAC thresholds must be positive")
        for name in ("speed_range", "altitude_range", "heading_range", "approach_angle_range", "vertical_rate_range"):
            a, b = getattr(self, name)
            if a > b:
                raise ValueError(f"{name}: lower bound above upper bound")
        if self.hmd_max < 0 or self.vmd_max < 0:
            raise ValueError("miss-distance bounds must be >= 0")
        if self.speed_range[0] <= 0:
            raise ValueError("speeds must be positive")
        if min(self.pilot_noise, self.tcas_noise) < 0:
            raise ValueError("noise multipliers must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def delay_steps(self) -> int:
        return int(round(self.reaction_delay / self.dt))

    def game_params(self) -> GameParams:
        return GameParams(tcas=self.tcas, weights=self.weights, taus=self.taus, pilot=self.pilot,
                          pilot_noise=self.pilot_noise, tcas_noise=self.tcas_noise,
                          delay=self.delay_steps * self.dt, dt=self.dt, horizon=self.rollout_horizon,
                          horizontal=self.mode == "horizontal", heading_rates=self.heading_rates)


@functools.lru_cache(maxsize=16)
def get_game(params: GameParams) -> EncounterGame:
    return EncounterGame(params)


# ---------------------------------------------------------------------------
# Encounter generation
# ---------------------------------------------------------------------------

def _u(rng, lo_hi):
    lo, hi = lo_hi
    return lo if lo == hi else float(rng.uniform(lo, hi))


def generate_encounter(cfg: EncounterConfig, rng) -> WorldState:
    """Two straight-line tracks whose closest approach falls at t_target.

    The miss vector at t_target is drawn at NMAC scale and made orthogonal to
    the relative velocity, so t_target is exactly the time of closest approach.
    """
    t_target = _u(rng, cfg.t_target_range)
    f1, f2 = _u(rng, cfg.speed_range), _u(rng, cfg.speed_range)
    th1 = _u(rng, cfg.heading_range)
    th2 = (th1 + _u(rng, cfg.approach_angle_range)) % (2 * math.pi)
    zd1, zd2 = _u(rng, cfg.vertical_rate_range), _u(rng, cfg.vertical_rate_range)
    z_cpa = _u(rng, cfg.altitude_range)
    hmd = _u(rng, (0.0, cfg.hmd_max))
    bearing = _u(rng, (0.0, 2 * math.pi))
    vmd = _u(rng, (-cfg.vmd_max, cfg.vmd_max))

    v1 = np.array([f1 * math.cos(th1), f1 * math.sin(th1), zd1])
    v2 = np.array([f2 * math.cos(th2), f2 * math.sin(th2), zd2])
    dv = v2 - v1
    dv2 = float(dv @ dv)
    if dv2 < 1e-9:
        raise ValueError("identical velocities: the tracks never converge")
    miss = np.array([hmd * math.cos(bearing), hmd * math.sin(bearing), vmd])
    miss -= (miss @ dv) / dv2 * dv
    p1 = np.array([0.0, 0.0, z_cpa]) - v1 * t_target
    p2 = np.array([0.0, 0.0, z_cpa]) + miss - v2 * t_target
    kin = np.zeros((2, 10))
    for row, p, th, zd, f in ((0, p1, th1, zd1, f1), (1, p2, th2, zd2, f2)):
        kin[row] = (p[0], p[1], p[2], th, 0.0, zd, f, 0.0, zd, f)
    return WorldState(kin)


def linear_cpa_time(s: WorldState) -> float:
    """Closest-approach time of the straight-line extrapolation of both tracks."""
    k = s.kin
    v = np.column_stack([k[:, F] * np.cos(k[:, TH]), k[:, F] * np.sin(k[:, TH]), k[:, ZD]])
    dp = k[1, :3] - k[0, :3]
    dv = v[1] - v[0]
    return float(-(dp @ dv) / (dv @ dv))


def detect_nmac(s: WorldState, horizontal: float = 500.0, vertical: float = 100.0) -> bool:
    d = s.kin[1, :3] - s.kin[0, :3]
    return bool(math.hypot(d[0], d[1]) < horizontal and abs(d[2]) < vertical)


# ---------------------------------------------------------------------------
# Outcome
# ---------------------------------------------------------------------------

@dataclass
class OutcomeRecord:
    seed: object
    d_min: float
    nmac: bool
    F: float
    ra: tuple = (None, None)
    t_ra: tuple = (None, None)
    action: tuple = (None, None)
    hra: tuple = (None, None)
    discarded: bool = False
    failed: bool = False
    failure: str | None = None
    duration: float = 0.0
    trajectory: list | None = None
    wall_time: float = 0.0

    @property
    def usable(self) -> bool:
        return not (self.discarded or self.failed)

    def canonical_bytes(self) -> bytes:
        """Byte image of everything except wall time (floats at full precision)."""
        d = asdict(self)
        d.pop("wall_time")
        d["seed"] = repr(self.seed)
        return json.dumps(d, sort_keys=True, default=repr).encode()


TRAJECTORY_COLUMNS = ("time", "aircraft", "x", "y", "z", "theta", "z_dot", "f", "ra")


def trajectory_rows(record: OutcomeRecord):
    for t, kin, ras in record.trajectory or ():
        for i in (0, 1):
            row = kin[i]
            yield (t, i + 1, row[X], row[Y], row[Z], row[TH], row[ZD], row[F], "" if ras[i] is None else ras[i])


def write_trajectory_csv(record: OutcomeRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        w.writerows(trajectory_rows(record))


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

class EncounterSim:
    """One encounter, advanced a step at a time.

    Within a step aircraft are processed in index order: TCAS reading,
    advisory, intent broadcast (seen by the other aircraft in the same step),
    then the pilot's single decision on a first advisory.  Decisions are
    latched and applied ``reaction_delay`` later.  ``hra_policy(sim, i)``
    picks the horizontal advisory of the second aircraft to be alerted.
    """

    def __init__(self, cfg: EncounterConfig, s0: WorldState, rng, game: EncounterGame | None = None,
                 seed=None, keep_trajectory=False, hra_policy=None, stop_on_discard=True):
        self.cfg = cfg
        self.stop_on_discard = stop_on_discard
        self.game = game or get_game(cfg.game_params())
        self.rng = rng
        self.seed = seed
        self.keep = keep_trajectory
        self.hra_policy = hra_policy
        self.s = s0
        self.k = 0
        self.first_ra = [None, None]
        self.t_ra = [None, None]
        self.actions = [None, None]
        self.pending = []           # (due step, aircraft, action)
        self.last_ra = [None, None]
        self.d_min = separation(s0.kin)
        self.nmac = detect_nmac(s0, cfg.nmac_horizontal, cfg.nmac_vertical)
        self.discarded = False
        self.failure = None
        self.done = self.nmac
        self.r_prev = math.hypot(*(s0.kin[1, :2] - s0.kin[0, :2]))
        self.rising = 0
        self.traj = [self._traj_row()] if keep_trajectory else None
        self._intents = None

    def clone(self, rng) -> "EncounterSim":
        c = object.__new__(EncounterSim)
        c.__dict__.update(self.__dict__)
        c.rng = rng
        c.hra_policy = None
        c.keep = False
        c.traj = None
        for name in ("first_ra", "t_ra", "actions", "pending", "last_ra"):
            setattr(c, name, list(getattr(self, name)))
        c._intents = list(self._intents) if self._intents is not None else None
        return c

    def _traj_row(self):
        return (self.s.time, self.s.kin.tolist(), tuple(self.last_ra))

    # -- stepping -------------------------------------------------------------
    def run(self) -> "EncounterSim":
        max_steps = int(round(self.cfg.max_duration / self.cfg.dt))
        while not self.done and self.k < max_steps:
            self.step()
        return self

    def step(self):
        self._intents = list(self.s.intents)
        self._aircraft_loop(0)

    def _aircraft_loop(self, start):
        for i in range(start, 2):
            if self.done:
                return
            self._sense(i)
        if not self.done:
            self._advance()

    def _sense(self, i):
        cfg = self.cfg
        cur = self.s.replace(intents=tuple(self._intents))
        w_tcas = tcas_observe(cur, i, cfg.tcas_noise, self.rng)
        ra = mini_tcas(w_tcas, self._intents[i], self._intents[1 - i], cfg.tcas)
        self.last_ra[i] = ra
        if ra is None:
            return
        if self.first_ra[i] is not None:
            if ra != self.first_ra[i]:
                self.discarded = True
                self.done = self.done or self.stop_on_discard
            return
        self.first_ra[i] = ra
        self.t_ra[i] = self.s.time
        self._intents[i] = TcasIntent(True, sense_of(ra))
        if cfg.mode == "horizontal":
            hra = list(cur.hra)
            if self.first_ra[1 - i] is None or self.hra_policy is None:
                hra[i] = 0.0
            else:
                hra[i] = float(self.hra_policy(self, i, cur, ra, w_tcas))
            cur = cur.replace(hra=tuple(hra))
            self.s = self.s.replace(hra=tuple(hra))
        self._decide(i, cur, ra, w_tcas)

    def _decide(self, i, cur, ra, w_tcas):
        w_i = pilot_observe(cur, self.cfg.pilot_noise, self.rng)
        try:
            move = self.game.decide(cur, i, w_i, ra, w_tcas, self.rng).move
        except PilotDecisionError as e:
            self.failure = str(e)
            self.done = True
            return
        self.actions[i] = move
        self.pending.append((self.k + self.cfg.delay_steps, i, move))

    def resume_with_hra(self, i, cur, ra, w_tcas, hra_value):
        """Counterfactual completion from the moment aircraft i is alerted."""
        hra = list(cur.hra)
        hra[i] = float(hra_value)
        cur = cur.replace(hra=tuple(hra))
        self.s = self.s.replace(hra=tuple(hra))
        self._decide(i, cur, ra, w_tcas)
        self._aircraft_loop(i + 1)
        return self.run()

    def _advance(self):
        cfg = self.cfg
        kin = self.s.kin.copy()
        keep = []
        for due, i, a in self.pending:
            if due == self.k:
                if isinstance(a, tuple):
                    kin[i, ZDC] = a[0]
                    kin[i, PHIC] = roll_for_heading_rate(a[1], kin[i, F])
                else:
                    kin[i, ZDC] = a
            else:
                keep.append((due, i, a))
        self.pending = keep
        kin = step_kin(kin, cfg.dt, cfg.taus)
        self.s = WorldState(kin, tuple(self._intents), self.s.time + cfg.dt, self.s.hra)
        self.k += 1
        if self.keep:
            self.traj.append(self._traj_row())
        self.d_min = min(self.d_min, separation(kin))
        if detect_nmac(self.s, cfg.nmac_horizontal, cfg.nmac_vertical):
            self.nmac = True
            self.done = True
            return
        rel = kin[1, :2] - kin[0, :2]
        r = math.hypot(rel[0], rel[1])
        self.rising = self.rising + 1 if r > self.r_prev else 0
        self.r_prev = r
        if self.rising >= 2:
            v = kin[:, F:F + 1] * np.column_stack([np.cos(kin[:, TH]), np.sin(kin[:, TH])])
            if float(rel @ (v[1] - v[0])) > 0:
                self.done = True

    # -- outcome -------------------------------------------------------------
    @property
    def F(self) -> float:
        return 0.0 if self.nmac else self.d_min

    def record(self, wall_time=0.0) -> OutcomeRecord:
        return OutcomeRecord(
            seed=self.seed, d_min=self.d_min, nmac=self.nmac, F=self.F,
            ra=tuple(self.first_ra), t_ra=tuple(self.t_ra), action=tuple(self.actions), hra=tuple(self.s.hra),
            discarded=self.discarded, failed=self.failure is not None, failure=self.failure,
            duration=self.s.time, trajectory=self.traj, wall_time=wall_time)


def run_encounter(cfg: EncounterConfig, rng, seed=None, initial: WorldState | None = None,
                  keep_trajectory: bool = False, hra_policy=None) -> OutcomeRecord:
    t0 = _time.perf_counter()
    s0 = initial if initial is not None else generate_encounter(cfg, rng)
    sim = EncounterSim(cfg, s0, rng, seed=seed, keep_trajectory=keep_trajectory, hra_policy=hra_policy)
    sim.run()
    return sim.record(_time.perf_counter() - t0)


def encounter_rng(root_seed: int, point: int, index: int) -> np.random.Generator:
    """Independent stream for encounter ``index`` at grid point ``point``."""
    return np.random.default_rng(np.random.SeedSequence([root_seed, point, index]))
