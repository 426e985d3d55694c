"""Flat ``section.key = value`` configuration files.

Every key has a default; unknown keys and malformed values raise
:class:`ConfigError`.  Lines starting with ``#`` are comments.  Angles are
given in degrees in the file.

    noise.M_w = 2
    tcas.DMOD = 5000
    strategy.M = 10
"""
from __future__ import annotations

import math

from .encounter.game import PilotModel
from .encounter.state import FilterTimeConstants, UtilityWeights
from .encounter.tcas import TcasParams
from .sim import EncounterConfig


class ConfigError(ValueError):
    pass


# key -> (default, type, one-line doc)
SCHEMA = {
    "sim.dt": (1.0, float, "time step (s)"),
    "sim.t_target_min": (40.0, float, "earliest closest-approach time (s)"),
    "sim.t_target_max": (60.0, float, "latest closest-approach time (s)"),
    "sim.speed_min": (250.0, float, "ground speed lower bound (ft/s)"),
    "sim.speed_max": (500.0, float, "ground speed upper bound (ft/s)"),
    "sim.altitude_min": (5000.0, float, "altitude at closest approach, lower bound (ft)"),
    "sim.altitude_max": (20000.0, float, "altitude at closest approach, upper bound (ft)"),
    "sim.heading_min": (0.0, float, "own heading lower bound (deg)"),
    "sim.heading_max": (360.0, float, "own heading upper bound (deg)"),
    "sim.approach_angle_min": (0.0, float, "relative intruder heading lower bound (deg)"),
    "sim.approach_angle_max": (360.0, float, "relative intruder heading upper bound (deg)"),
    "sim.vertical_rate_min": (-15.0, float, "initial vertical rate lower bound (ft/s)"),
    "sim.vertical_rate_max": (15.0, float, "initial vertical rate upper bound (ft/s)"),
    "sim.hmd_max": (500.0, float, "largest horizontal miss of the unmanoeuvred tracks (ft)"),
    "sim.vmd_max": (100.0, float, "largest vertical miss of the unmanoeuvred tracks (ft)"),
    "sim.reaction_delay": (5.0, float, "pilot reaction delay (s)"),
    "sim.nmac_horizontal": (500.0, float, "NMAC horizontal threshold (ft)"),
    "sim.nmac_vertical": (100.0, float, "NMAC vertical threshold (ft)"),
    "sim.max_duration": (120.0, float, "encounter time limit (s)"),
    "sim.rollout_horizon": (120.0, float, "look-ahead of the pilots' outcome rollouts (s)"),
    "sim.mode": ("vertical", str, "vertical | horizontal"),
    "noise.M_w": (1.0, float, "pilot observation noise multiplier"),
    "noise.M_WTCAS": (1.0, float, "TCAS sensor noise multiplier"),
    "strategy.K": (2, int, "pilot level"),
    "strategy.M": (5, int, "candidate moves per decision"),
    "strategy.M_prime": (10, int, "environment samples per decision"),
    "strategy.level0_sigma": (20.0, float, "level-0 spread about the advisory (ft/s)"),
    "strategy.q": (0.8, float, "probability the intent proposal keeps the true intent"),
    "strategy.redraw_factor": (100, int, "proposal draws allowed per required sample"),
    "utility.alpha1": (5.0, float, "weight on log separation"),
    "utility.alpha2": (0.2, float, "weight on deviation from current vertical rate"),
    "utility.alpha3": (0.1, float, "weight on deviation from the advisory"),
    "utility.delta": (1.0, float, "offset inside the log (ft)"),
    "utility.heading_weight": (10.0, float, "ft/s of penalty per deg/s of heading-rate change"),
    "tcas.DMOD": (3500.0, float, "range threshold (ft)"),
    "tcas.ZTHR": (600.0, float, "altitude threshold (ft)"),
    "tcas.tau": (30.0, float, "range tau threshold (s)"),
    "tcas.tau_v": (30.0, float, "vertical tau threshold (s)"),
    "tcas.ALIM": (400.0, float, "strength-selection safety distance (ft)"),
    "tcas.delay": (5.0, float, "pilot delay assumed by sense selection (s)"),
    "tcas.accel": (8.0, float, "vertical acceleration assumed by sense selection (ft/s^2)"),
    "tcas.no_descend_below": (1100.0, float, "own altitude below which descend senses are inhibited (ft)"),
    "filter.tau_theta_dot": (2.0, float, "heading-rate time constant (s)"),
    "filter.tau_z_dot": (3.0, float, "vertical-rate time constant (s)"),
    "filter.tau_f": (5.0, float, "speed time constant (s)"),
    "horizontal.hard_rate": (3.0, float, "hard-turn heading rate (deg/s)"),
    "horizontal.moderate_rate": (1.5, float, "moderate-turn heading rate (deg/s)"),
    "horizontal.rollouts": (50, int, "counterfactual completions per horizontal candidate"),
}


def defaults() -> dict:
    return {k: v[0] for k, v in SCHEMA.items()}


def _coerce(key, raw):
    if key not in SCHEMA:
        raise ConfigError(f"unknown configuration key {key!r}")
    typ = SCHEMA[key][1]
    try:
        if typ is int:
            f = float(raw)
            if f != int(f):
                raise ValueError
            return int(f)
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot read {raw!r} as {typ.__name__}") from None


def parse(text: str, base: dict | None = None) -> dict:
    out = dict(base or defaults())
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'section.key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        out[key] = _coerce(key, raw)
    return out


def load(path) -> dict:
    try:
        with open(path) as fh:
            return parse(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e


def with_overrides(values: dict, **overrides) -> dict:
    out = dict(values)
    for k, v in overrides.items():
        out[k] = _coerce(k, v)
    return out


def dump(values: dict) -> str:
    return "".join(f"{k} = {values[k]}\n" for k in sorted(values))


def build(values: dict) -> EncounterConfig:
    """Resolve a key/value mapping into an :class:`EncounterConfig`."""
    v = {**defaults(), **values}
    for k in values:
        if k not in SCHEMA:
            raise ConfigError(f"unknown configuration key {k!r}")
    deg = math.pi / 180.0
    hard, mod = v["horizontal.hard_rate"] * deg, v["horizontal.moderate_rate"] * deg
    try:
        return EncounterConfig(
            dt=v["sim.dt"],
            t_target_range=(v["sim.t_target_min"], v["sim.t_target_max"]),
            speed_range=(v["sim.speed_min"], v["sim.speed_max"]),
            altitude_range=(v["sim.altitude_min"], v["sim.altitude_max"]),
            heading_range=(v["sim.heading_min"] * deg, v["sim.heading_max"] * deg),
            approach_angle_range=(v["sim.approach_angle_min"] * deg, v["sim.approach_angle_max"] * deg),
            vertical_rate_range=(v["sim.vertical_rate_min"], v["sim.vertical_rate_max"]),
            hmd_max=v["sim.hmd_max"], vmd_max=v["sim.vmd_max"],
            reaction_delay=v["sim.reaction_delay"],
            nmac_horizontal=v["sim.nmac_horizontal"], nmac_vertical=v["sim.nmac_vertical"],
            max_duration=v["sim.max_duration"], rollout_horizon=v["sim.rollout_horizon"],
            mode=v["sim.mode"],
            pilot_noise=v["noise.M_w"], tcas_noise=v["noise.M_WTCAS"],
            pilot=PilotModel(level=v["strategy.K"], M=v["strategy.M"], M_prime=v["strategy.M_prime"],
                             level0_sigma=v["strategy.level0_sigma"], q=v["strategy.q"],
                             redraw_factor=v["strategy.redraw_factor"]),
            weights=UtilityWeights(alpha1=v["utility.alpha1"], alpha2=v["utility.alpha2"],
                                   alpha3=v["utility.alpha3"], delta=v["utility.delta"],
                                   heading_weight=v["utility.heading_weight"]),
            tcas=TcasParams(dmod=v["tcas.DMOD"], zthr=v["tcas.ZTHR"], tau=v["tcas.tau"], tau_v=v["tcas.tau_v"],
                            alim=v["tcas.ALIM"], delay=v["tcas.delay"], accel=v["tcas.accel"],
                            no_descend_below=v["tcas.no_descend_below"]),
            taus=FilterTimeConstants(theta_dot=v["filter.tau_theta_dot"], z_dot=v["filter.tau_z_dot"],
                                     f=v["filter.tau_f"]),
            heading_rates=(hard, mod, 0.0, -mod, -hard),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def resolve(path=None, **overrides) -> tuple[dict, EncounterConfig]:
    values = load(path) if path else defaults()
    values = with_overrides(values, **overrides) if overrides else values
    return values, build(values)


def documented_defaults() -> str:
    return "".join(f"# {doc}\n{k} = {d}\n" for k, (d, _, doc) in SCHEMA.items())
