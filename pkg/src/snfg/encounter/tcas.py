"""Memory-less, coordinated mini-TCAS advisory logic.

Detection runs three tests on the (noisy) observation:

* range: inside DMOD, or closing with modified range tau below ``tau``;
* altitude: inside ZTHR, or vertically converging with vertical tau below ``tau_v``;
* altitude separation: projected vertical separation at horizontal closest
  approach inside ZTHR.

Sense selection projects the intruder's relative altitude to closest approach
and, for each remaining sense, subtracts the own-ship displacement of a
standard maneuver (pilot delay, then ``accel`` up to 25 ft/s).  Own vertical
rate is not observed and is taken as zero.  Senses carried in the intruder's
intent are removed first; an own-ship intent locks the sense.  Strength is the
weakest rate whose projected miss reaches ALIM.  Once the own advisory is
out, the projection drops the response delay, so a later strengthening means
the aircraft is not following the advisory.
"""
from __future__ import annotations

from dataclasses import dataclass

from .state import TcasIntent, TcasObservation

RA_VALUES = (None, -42, -25, 0, 25, 42)
SENSE_OF = {42: "up", 25: "up", 0: "level", -25: "down", -42: "down"}
_ORDER = ("up", "down", "level")  # tie order


@dataclass(frozen=True)
class TcasParams:
    dmod: float = 3500.0      # ft
    zthr: float = 600.0       # ft
    tau: float = 30.0         # s, range tau threshold
    tau_v: float = 30.0       # s, vertical tau threshold
    alim: float = 400.0       # ft, strength-selection safety distance
    delay: float = 5.0        # s, assumed pilot response
    accel: float = 8.0        # ft/s^2 (about 0.25 g)
    no_descend_below: float = 1100.0  # ft, own altitude inhibiting descend senses

    def __post_init__(self):
        if min(self.dmod, self.zthr, self.tau, self.tau_v, self.alim, self.accel) <= 0 or self.delay < 0:
            raise ValueError("TCAS thresholds must be positive")


def sense_of(ra):
    return None if ra is None else SENSE_OF[ra]


def maneuver_displacement(t: float, rate: float, p: TcasParams, delay: float | None = None) -> float:
    """Own altitude change after t seconds of a delayed maneuver to ``rate``."""
    tau = t - (p.delay if delay is None else delay)
    if tau <= 0 or rate == 0:
        return 0.0
    v = abs(rate)
    tr = v / p.accel
    d = 0.5 * p.accel * tau * tau if tau <= tr else 0.5 * p.accel * tr * tr + v * (tau - tr)
    return d if rate > 0 else -d


def time_to_go(obs: TcasObservation, p: TcasParams) -> float:
    r = max(obs.r_h, 0.0)
    return r / -obs.r_h_dot if obs.r_h_dot < 0 else 0.0


def detect(obs: TcasObservation, p: TcasParams) -> bool:
    r = max(obs.r_h, 0.0)
    closing = obs.r_h_dot < 0
    if r <= p.dmod:
        range_ok = True
    else:
        range_ok = closing and (r - p.dmod * p.dmod / r) / -obs.r_h_dot < p.tau
    if not range_ok:
        return False
    h, hd = obs.h, obs.h_dot
    alt_ok = abs(h) < p.zthr or (h * hd < 0 and -h / hd < p.tau_v)
    if not alt_ok:
        return False
    t = time_to_go(obs, p)
    return abs(h + hd * t) < p.zthr


def projected_miss(obs: TcasObservation, rate: float, p: TcasParams, delay: float | None = None) -> float:
    t = time_to_go(obs, p)
    return abs(obs.h + obs.h_dot * t - maneuver_displacement(t, rate, p, delay))


def mini_tcas(obs: TcasObservation, own_intent: TcasIntent, intruder_intent: TcasIntent,
              params: TcasParams = TcasParams()):
    """Resolution advisory (ft/s) or None."""
    if not detect(obs, params):
        return None
    if own_intent.issued:
        # maneuver already under way: no response delay in the projection
        senses, delay = [own_intent.sense], 0.0
    else:
        senses, delay = list(_ORDER), params.delay
    if intruder_intent.issued:
        senses = [s for s in senses if s != intruder_intent.sense]
    if obs.h_i < params.no_descend_below:
        senses = [s for s in senses if s != "down"]
    if not senses:
        return None
    rates = {"up": 25.0, "down": -25.0, "level": 0.0}
    best, best_miss = None, -1.0
    for s in senses:
        m = projected_miss(obs, rates[s], params, delay)
        if m > best_miss:
            best, best_miss = s, m
    if best == "level":
        return 0
    sign = 1 if best == "up" else -1
    return 25 * sign if best_miss >= params.alim else 42 * sign
