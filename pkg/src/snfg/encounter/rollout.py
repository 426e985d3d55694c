"""Deterministic outcome rollouts: fly both aircraft forward and report d_min.

``rollout_dmin`` is the numba kernel used inside the pilots' reasoning;
``rollout_dmin_py`` is the same loop on top of :func:`step_kin` and serves
as its reference.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .state import G, FilterTimeConstants, step_kin

NAN = float("nan")


@njit(cache=True)
def _rollout(kin0, cmd_z, cmd_h, delay_steps, dt, t_thd, t_zd, t_f, max_steps):
    kin = kin0.copy()
    dx = kin[1, 0] - kin[0, 0]
    dy = kin[1, 1] - kin[0, 1]
    dz = kin[1, 2] - kin[0, 2]
    d_min = math.sqrt(dx * dx + dy * dy + dz * dz)
    r_prev = math.sqrt(dx * dx + dy * dy)
    rising = 0
    new = np.empty_like(kin)
    for step in range(max_steps):
        if step == delay_steps:
            for i in range(2):
                if not math.isnan(cmd_z[i]):
                    kin[i, 8] = cmd_z[i]
                if not math.isnan(cmd_h[i]):
                    kin[i, 7] = cmd_h[i] * kin[i, 6] / G
        for i in range(2):
            f = kin[i, 6]
            th = kin[i, 3]
            new[i, 4] = kin[i, 4] + dt / t_thd * (G * kin[i, 7] / f - kin[i, 4])
            new[i, 5] = kin[i, 5] + dt / t_zd * (kin[i, 8] - kin[i, 5])
            new[i, 6] = f + dt / t_f * (kin[i, 9] - f)
            new[i, 0] = kin[i, 0] + dt * f * math.cos(th)
            new[i, 1] = kin[i, 1] + dt * f * math.sin(th)
            new[i, 2] = kin[i, 2] + dt * kin[i, 5]
            new[i, 3] = th + dt * kin[i, 4]
            new[i, 7] = kin[i, 7]
            new[i, 8] = kin[i, 8]
            new[i, 9] = kin[i, 9]
        kin[:, :] = new
        dx = kin[1, 0] - kin[0, 0]
        dy = kin[1, 1] - kin[0, 1]
        dz = kin[1, 2] - kin[0, 2]
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        if d < d_min:
            d_min = d
        r = math.sqrt(dx * dx + dy * dy)
        rising = rising + 1 if r > r_prev else 0
        r_prev = r
        if rising >= 2:
            dvx = kin[1, 6] * math.cos(kin[1, 3]) - kin[0, 6] * math.cos(kin[0, 3])
            dvy = kin[1, 6] * math.sin(kin[1, 3]) - kin[0, 6] * math.sin(kin[0, 3])
            if dx * dvx + dy * dvy > 0:
                break
    return d_min


def _cmds(actions):
    cz = np.full(2, NAN)
    ch = np.full(2, NAN)
    for i, a in enumerate(actions):
        if a is None:
            continue
        if isinstance(a, tuple):
            cz[i], ch[i] = (NAN if a[0] is None else a[0]), (NAN if a[1] is None else a[1])
        else:
            cz[i] = a
    return cz, ch


def rollout_dmin(kin: np.ndarray, actions, delay: float = 5.0, dt: float = 1.0,
                 taus: FilterTimeConstants = FilterTimeConstants(), horizon: float = 120.0) -> float:
    """d_min when each pilot's action takes effect ``delay`` seconds from now.

    ``actions`` holds one entry per aircraft: None keeps the current command,
    a number sets the vertical-rate command, a ``(vertical rate, heading rate)``
    tuple also sets the commanded roll for that heading rate.
    """
    cz, ch = _cmds(actions)
    return float(_rollout(np.ascontiguousarray(kin, dtype=np.float64), cz, ch, int(round(delay / dt)), dt,
                          taus.theta_dot, taus.z_dot, taus.f, int(round(horizon / dt))))


def rollout_dmin_py(kin, actions, delay=5.0, dt=1.0, taus=FilterTimeConstants(), horizon=120.0) -> float:
    cz, ch = _cmds(actions)
    kin = np.array(kin, dtype=float)
    sep = lambda k: float(np.linalg.norm(k[1, :3] - k[0, :3]))
    d_min = sep(kin)
    r_prev = float(np.hypot(*(kin[1, :2] - kin[0, :2])))
    rising = 0
    for step in range(int(round(horizon / dt))):
        if step == int(round(delay / dt)):
            for i in range(2):
                if not math.isnan(cz[i]):
                    kin[i, 8] = cz[i]
                if not math.isnan(ch[i]):
                    kin[i, 7] = ch[i] * kin[i, 6] / G
        kin = step_kin(kin, dt, taus)
        d_min = min(d_min, sep(kin))
        rel = kin[1, :2] - kin[0, :2]
        r = float(np.hypot(*rel))
        rising = rising + 1 if r > r_prev else 0
        r_prev = r
        if rising >= 2:
            v = kin[:, 6:7] * np.column_stack([np.cos(kin[:, 3]), np.sin(kin[:, 3])])
            if float(rel @ (v[1] - v[0])) > 0:
                break
    return d_min
