"""Intelligent Driver Model car-following acceleration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class IdmParams:
    v0: float = 13.0        # desired speed, m/s
    time_headway: float = 1.5
    s0: float = 2.0         # minimum gap, m
    a_max: float = 1.5      # m/s^2
    b: float = 2.0          # comfortable deceleration, m/s^2
    delta: float = 4.0
    b_hard: float = 6.0     # emergency braking bound, m/s^2

    def validate(self) -> None:
        for name in ("v0", "time_headway", "s0", "a_max", "b", "b_hard"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IdmParams.{name} must be positive")
        if self.delta < 1:
            raise ValueError("IdmParams.delta must be >= 1")


def idm_accel(v: float, dv: float, gap: float, params: IdmParams) -> float:
    """IDM acceleration for a follower at speed v.

    dv = v - v_lead (closing speed); gap is the bumper gap (inf = free road).
    Non-positive gaps trigger the emergency braking bound.
    """
    if gap <= 0.0:
        return -params.b_hard
    v = max(0.0, v)
    s_star = params.s0 + v * params.time_headway + v * dv / (2.0 * np.sqrt(params.a_max * params.b))
    if np.isinf(gap):
        ratio = 0.0
    else:
        ratio = s_star / gap
    a = params.a_max * (1.0 - (v / params.v0) ** params.delta - ratio ** 2)
    return float(np.clip(a, -params.b_hard, params.a_max))
