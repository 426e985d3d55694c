"""World state, observations, kinematics and the pilot utility."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

G = 32.174  # ft/s^2

# column layout of the (2, 10) kinematic array
X, Y, Z, TH, THD, ZD, F, PHIC, ZDC, FC = range(10)
KIN_FIELDS = ("x", "y", "z", "theta", "theta_dot", "z_dot", "f", "phi_c", "z_dot_c", "f_c")
OBS_COLS = (X, Y, Z, TH, THD, ZD, F)

TCAS_NOISE = np.array([100.0, 50.0, 4.0, 10.0, 10.0])       # r_h, r_h_dot, h_dot, h, h_i
PILOT_NOISE = np.array([100.0, 100.0, 20.0, 0.05, 0.0, 5.0, 10.0])  # x y z th thd zd f

SENSES = ("up", "level", "down")
ZDOT_LIMIT = 50.0


@dataclass(frozen=True)
class AircraftState:
    x: float
    y: float
    z: float
    theta: float
    theta_dot: float
    z_dot: float
    f: float
    phi_c: float
    z_dot_c: float
    f_c: float

    def __post_init__(self):
        vals = [getattr(self, k) for k in KIN_FIELDS]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("aircraft state must be finite")
        if self.f <= 0:
            raise ValueError("forward speed must be positive")
        if abs(self.z_dot_c) > ZDOT_LIMIT:
            raise ValueError("commanded vertical speed outside [-50, 50] ft/s")

    @classmethod
    def from_row(cls, row) -> "AircraftState":
        return cls(*(float(v) for v in row))

    def as_row(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in KIN_FIELDS], dtype=float)


@dataclass(frozen=True)
class TcasIntent:
    issued: bool = False
    sense: str | None = None

    def __post_init__(self):
        if self.issued != (self.sense is not None):
            raise ValueError("intent sense is present iff an advisory was issued")
        if self.sense is not None and self.sense not in SENSES:
            raise ValueError(f"bad sense {self.sense!r}")


NO_INTENT = TcasIntent()
INTENT_OUTCOMES = (NO_INTENT, TcasIntent(True, "up"), TcasIntent(True, "level"), TcasIntent(True, "down"))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class WorldState:
    """True state of both aircraft.  ``kin`` is a read-only (2, 10) array.

    ``hra`` holds the horizontal advisory (heading rate, rad/s) issued to each
    aircraft in horizontal mode; pilots see it exactly.
    """

    kin: np.ndarray
    intents: tuple = (NO_INTENT, NO_INTENT)
    time: float = 0.0
    hra: tuple = (None, None)

    def __post_init__(self):
        kin = _frozen(self.kin)
        if kin.shape != (2, 10):
            raise ValueError("world state needs exactly two aircraft")
        if not np.all(np.isfinite(kin)):
            raise ValueError("world state must be finite")
        if len(self.intents) != 2:
            raise ValueError("need one intent per aircraft")
        if self.time < 0:
            raise ValueError("time must be non-negative")
        object.__setattr__(self, "kin", kin)
        object.__setattr__(self, "intents", tuple(self.intents))
        object.__setattr__(self, "hra", tuple(self.hra))

    @classmethod
    def from_aircraft(cls, aircraft: Sequence[AircraftState], intents=(NO_INTENT, NO_INTENT), time=0.0,
                      hra=(None, None)) -> "WorldState":
        if len(aircraft) != 2:
            raise ValueError("world state needs exactly two aircraft")
        return cls(np.vstack([a.as_row() for a in aircraft]), intents, time, hra)

    @property
    def aircraft(self) -> tuple:
        return tuple(AircraftState.from_row(r) for r in self.kin)

    def replace(self, **kw) -> "WorldState":
        d = dict(kin=self.kin, intents=self.intents, time=self.time, hra=self.hra)
        d.update(kw)
        return WorldState(**d)

    def __eq__(self, other):
        return (isinstance(other, WorldState) and np.array_equal(self.kin, other.kin)
                and self.intents == other.intents and self.time == other.time and self.hra == other.hra)

    __hash__ = None


@dataclass(frozen=True, slots=True)
class TcasObservation:
    r_h: float
    r_h_dot: float
    h_dot: float
    h: float
    h_i: float
    coincident: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.r_h, self.r_h_dot, self.h_dot, self.h, self.h_i])

    @classmethod
    def from_array(cls, a, coincident=False) -> "TcasObservation":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]), float(a[4]), coincident)


@dataclass(frozen=True, eq=False)
class PilotObservation:
    """Noisy (x, y, z, theta, theta_dot, z_dot, f) of both aircraft, shape (2, 7).

    Horizontal advisories are displayed, so ``hra`` is copied exactly.
    """

    kin: np.ndarray
    hra: tuple = (None, None)

    def __post_init__(self):
        object.__setattr__(self, "kin", _frozen(self.kin))
        object.__setattr__(self, "hra", tuple(self.hra))

    def __eq__(self, other):
        return (isinstance(other, PilotObservation) and np.array_equal(self.kin, other.kin)
                and self.hra == other.hra)

    __hash__ = None


@dataclass(frozen=True)
class UtilityWeights:
    alpha1: float = 5.0
    alpha2: float = 0.2
    alpha3: float = 0.1
    delta: float = 1.0
    heading_weight: float = 10.0  # ft/s of vertical-rate penalty per deg/s of heading-rate change

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ValueError("utility weights must be non-negative")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def ordered(self) -> bool:
        """Collision weight dominates course weight, which dominates compliance."""
        return self.alpha1 > self.alpha2 > self.alpha3


@dataclass(frozen=True)
class FilterTimeConstants:
    theta_dot: float = 2.0
    z_dot: float = 3.0
    f: float = 5.0

    def __post_init__(self):
        if min(self.theta_dot, self.z_dot, self.f) <= 0:
            raise ValueError("time constants must be positive")


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------

def exact_tcas(kin: np.ndarray, own: int) -> tuple[np.ndarray, bool]:
    i, j = own, 1 - own
    dx = kin[j, X] - kin[i, X]
    dy = kin[j, Y] - kin[i, Y]
    r = math.hypot(dx, dy)
    if r == 0.0:
        r_dot, coincident = 0.0, True
    else:
        dvx = kin[j, F] * math.cos(kin[j, TH]) - kin[i, F] * math.cos(kin[i, TH])
        dvy = kin[j, F] * math.sin(kin[j, TH]) - kin[i, F] * math.sin(kin[i, TH])
        r_dot, coincident = (dx * dvx + dy * dvy) / r, False
    vals = np.array([r, r_dot, kin[j, ZD] - kin[i, ZD], kin[j, Z] - kin[i, Z], kin[i, Z]])
    return vals, coincident


def tcas_observe(s: WorldState, own: int, noise_scale: float = 1.0, rng=None) -> TcasObservation:
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    vals, coincident = exact_tcas(s.kin, own)
    if noise_scale > 0:
        vals = vals + rng.normal(0.0, 1.0, 5) * (noise_scale * TCAS_NOISE)
        vals[0] = max(vals[0], 0.0)
    return TcasObservation.from_array(vals, coincident)


def pilot_observe(s: WorldState, noise_scale: float = 1.0, rng=None) -> PilotObservation:
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    obs = s.kin[:, OBS_COLS]
    if noise_scale > 0:
        obs = obs + rng.normal(0.0, 1.0, (2, 7)) * (noise_scale * PILOT_NOISE)
    return PilotObservation(obs, s.hra)


def gaussian_logpdf(x, mean, sigma) -> float:
    """Sum of independent normal log-densities; sigma == 0 entries act as exact-match indicators."""
    x, mean, sigma = np.asarray(x, float), np.asarray(mean, float), np.broadcast_to(sigma, np.shape(x))
    pos = sigma > 0
    if np.any(x[~pos] != mean[~pos]):
        return -math.inf
    z = (x[pos] - mean[pos]) / sigma[pos]
    return float(-0.5 * np.sum(z * z) - np.sum(np.log(sigma[pos])) - 0.5 * math.log(2 * math.pi) * pos.sum())


# ---------------------------------------------------------------------------
# Utility
# ---------------------------------------------------------------------------

def pilot_utility(outcome, current_zdot: float, ra, action, w: UtilityWeights,
                  current_heading_rate: float = 0.0, hra=None) -> float:
    """alpha1 ln(delta + d_min) - alpha2 |zdot - a| - alpha3 |ra - a|.

    ``outcome`` is a d_min value or a mapping with a ``d_min`` entry.  With no
    advisory the compliance term is dropped; with no action (the pilot keeps
    the current command) the course and compliance terms are dropped.  Tuple
    actions ``(vertical rate, heading rate)`` add heading penalties scaled by
    ``w.heading_weight`` per deg/s.
    """
    d_min = outcome["d_min"] if isinstance(outcome, Mapping) else getattr(outcome, "d_min", outcome)
    if d_min < 0:
        raise ValueError("d_min must be >= 0")
    u = w.alpha1 * math.log(w.delta + d_min)
    if action is None:
        return u
    heading = None
    if isinstance(action, tuple):
        action, heading = action
    u -= w.alpha2 * abs(current_zdot - action)
    if ra is not None:
        u -= w.alpha3 * abs(ra - action)
    if heading is not None:
        k = w.heading_weight * 180.0 / math.pi
        u -= w.alpha2 * k * abs(current_heading_rate - heading)
        if hra is not None:
            u -= w.alpha3 * k * abs(hra - heading)
    return u


# ---------------------------------------------------------------------------
# Kinematics
# ---------------------------------------------------------------------------

def heading_rate_command(phi_c: float, f: float) -> float:
    """Coordinated-turn heading rate for a commanded roll (small-angle form)."""
    return G * phi_c / f


def roll_for_heading_rate(rate: float, f: float) -> float:
    return rate * f / G


def kinematics_step(a: AircraftState, dt: float, taus: FilterTimeConstants = FilterTimeConstants()) -> AircraftState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    th_cmd = heading_rate_command(a.phi_c, a.f)
    thd = a.theta_dot + dt / taus.theta_dot * (th_cmd - a.theta_dot)
    zd = a.z_dot + dt / taus.z_dot * (a.z_dot_c - a.z_dot)
    f = a.f + dt / taus.f * (a.f_c - a.f)
    # positions advance with the rates held at the start of the step
    return AircraftState(
        x=a.x + dt * a.f * math.cos(a.theta),
        y=a.y + dt * a.f * math.sin(a.theta),
        z=a.z + dt * a.z_dot,
        theta=a.theta + dt * a.theta_dot,
        theta_dot=thd, z_dot=zd, f=f,
        phi_c=a.phi_c, z_dot_c=a.z_dot_c, f_c=a.f_c,
    )


def step_kin(kin: np.ndarray, dt: float, taus: FilterTimeConstants) -> np.ndarray:
    """Vectorised kinematics_step over both rows of a (2, 10) array."""
    out = kin.copy()
    f = kin[:, F]
    th_cmd = G * kin[:, PHIC] / f
    out[:, THD] = kin[:, THD] + dt / taus.theta_dot * (th_cmd - kin[:, THD])
    out[:, ZD] = kin[:, ZD] + dt / taus.z_dot * (kin[:, ZDC] - kin[:, ZD])
    out[:, F] = f + dt / taus.f * (kin[:, FC] - f)
    out[:, X] = kin[:, X] + dt * f * np.cos(kin[:, TH])
    out[:, Y] = kin[:, Y] + dt * f * np.sin(kin[:, TH])
    out[:, Z] = kin[:, Z] + dt * kin[:, ZD]
    out[:, TH] = kin[:, TH] + dt * kin[:, THD]
    return out


def separation(kin: np.ndarray) -> float:
    d = kin[1, :3] - kin[0, :3]
    return float(math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]))


def min_approach_distance(trajectory: Sequence[WorldState]) -> float:
    if not trajectory:
        raise ValueError("empty trajectory")
    return min(separation(s.kin) for s in trajectory)
