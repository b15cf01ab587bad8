"""Action mapping, kinematic bicycle integration and rectangle collision tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DT = 0.02
SPEED_LIMIT = 80.0 / 3.6


@dataclass(frozen=True)
class VehicleParams:
    s_max: float = 0.7
    f_max: float = 5000.0
    b_max: float = 8000.0
    mass: float = 1100.0
    wheelbase: float = 2.5
    drag: float = 0.8
    v_max: float = SPEED_LIMIT
    length: float = 4.5
    width: float = 1.8

    def __post_init__(self):
        for name in ("s_max", "f_max", "b_max", "mass", "wheelbase", "v_max", "length", "width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.drag < 0:
            raise ValueError("drag must be >= 0")


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    heading: float
    speed: float = 0.0
    steering: float = 0.0
    length: float = 4.5
    width: float = 1.8


@dataclass(frozen=True)
class ControlCommand:
    steer: float
    throttle: float
    brake: float


def map_action(a1, a2, p: VehicleParams) -> ControlCommand:
    """Normalized (a1, a2) in [-1, 1]^2 to steering angle, engine force and brake force.

    Works elementwise on arrays as well as on scalars.
    """
    a1 = np.clip(a1, -1.0, 1.0)
    a2 = np.clip(a2, -1.0, 1.0)
    return ControlCommand(p.s_max * a1, p.f_max * np.maximum(0.0, a2), p.b_max * np.maximum(0.0, -a2))


def step_vehicle(s: VehicleState, c: ControlCommand, p: VehicleParams, dt: float = DT) -> VehicleState:
    steer = min(max(float(c.steer), -p.s_max), p.s_max)
    v = s.speed
    sign = 1.0 if v > 0 else 0.0
    acc = (float(c.throttle) - float(c.brake) * sign - p.drag * v * v) / p.mass
    v_new = min(max(v + acc * dt, 0.0), p.v_max)
    heading = s.heading + (v / p.wheelbase) * math.tan(steer) * dt
    x = s.x + v_new * math.cos(heading) * dt
    y = s.y + v_new * math.sin(heading) * dt
    return VehicleState(x, y, heading, v_new, steer, s.length, s.width)


def corners(s: VehicleState) -> np.ndarray:
    """Footprint corners (4, 2), counterclockwise from front-left."""
    c, sn = math.cos(s.heading), math.sin(s.heading)
    hl, hw = s.length / 2, s.width / 2
    local = ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    return np.array([(s.x + c * lx - sn * ly, s.y + sn * lx + c * ly) for lx, ly in local])


def check_collision(a: VehicleState, b: VehicleState) -> bool:
    """Separating-axis overlap test of the two oriented footprints."""
    reach = 0.5 * (math.hypot(a.length, a.width) + math.hypot(b.length, b.width))
    if (a.x - b.x) ** 2 + (a.y - b.y) ** 2 > reach * reach:
        return False
    ca, cb = corners(a), corners(b)
    for h in (a.heading, b.heading):
        for ax, ay in ((math.cos(h), math.sin(h)), (-math.sin(h), math.cos(h))):
            pa = ca[:, 0] * ax + ca[:, 1] * ay
            pb = cb[:, 0] * ax + cb[:, 1] * ay
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True
