import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from shapely.geometry import Polygon

from junctionrl.dynamics import (DT, SPEED_LIMIT, ControlCommand, VehicleParams, VehicleState, check_collision,
                                 corners, map_action, step_vehicle)

P = VehicleParams()
unit = st.floats(-1.0, 1.0, allow_nan=False)


def test_map_action_examples():
    c = map_action(0.0, 0.0, P)
    assert (c.steer, c.throttle, c.brake) == (0.0, 0.0, 0.0)
    c = map_action(1.0, 1.0, P)
    assert (c.steer, c.throttle, c.brake) == (0.7, 5000.0, 0.0)
    c = map_action(-0.5, -0.4, P)
    assert c.steer == -0.5 * P.s_max and c.throttle == 0.0 and c.brake == pytest.approx(3200.0, abs=1e-9)


def test_map_action_clamps_inputs():
    c = map_action(3.0, -7.0, P)
    assert (c.steer, c.throttle, c.brake) == (P.s_max, 0.0, P.b_max)


@given(unit, unit)
def test_map_action_odd_and_exclusive(a1, a2):
    c = map_action(a1, a2, P)
    m = map_action(-a1, a2, P)
    assert m.steer == -c.steer
    assert c.throttle * c.brake == 0.0
    assert 0.0 <= c.throttle <= P.f_max and 0.0 <= c.brake <= P.b_max


def test_vehicle_params_must_be_positive():
    with pytest.raises(ValueError):
        VehicleParams(mass=0.0)


def test_zero_command_at_rest_is_fixed_point():
    s = VehicleState(1.0, 2.0, 0.3)
    assert step_vehicle(s, ControlCommand(0.0, 0.0, 0.0), P) == s


def test_full_throttle_closed_form_without_drag():
    p = VehicleParams(drag=0.0)
    s = VehicleState(0.0, 0.0, 0.0)
    for k in range(1, 400):
        s = step_vehicle(s, ControlCommand(0.0, p.f_max, 0.0), p)
        assert s.speed == pytest.approx(min(k * DT * p.f_max / p.mass, p.v_max), abs=1e-9)


def test_constant_steering_traces_a_circle():
    delta, v = 0.3, 5.0
    radius = P.wheelbase / math.tan(delta)
    s = VehicleState(0.0, 0.0, 0.0, v)
    cmd = ControlCommand(delta, P.drag * v * v, 0.0)
    n = round(2 * math.pi * radius / (v * DT))
    for _ in range(n):
        s = step_vehicle(s, cmd, P)
    assert s.speed == v
    assert math.hypot(s.x, s.y) < 0.01 * radius


@given(st.floats(0, SPEED_LIMIT), unit, unit, st.floats(-math.pi, math.pi))
def test_speed_stays_in_range(v, a1, a2, h):
    s = step_vehicle(VehicleState(0.0, 0.0, h, v), map_action(a1, a2, P), P)
    assert 0.0 <= s.speed <= P.v_max
    assert abs(s.steering) <= P.s_max


@given(st.floats(0, SPEED_LIMIT), unit, st.floats(0.0, 1.0))
def test_speed_non_increasing_without_throttle(v, a1, brake):
    s = step_vehicle(VehicleState(0.0, 0.0, 0.0, v), ControlCommand(a1 * P.s_max, 0.0, brake * P.b_max), P)
    assert s.speed <= v


@given(st.floats(0, SPEED_LIMIT), unit, unit)
def test_step_is_deterministic(v, a1, a2):
    s = VehicleState(3.0, -1.0, 0.2, v)
    c = map_action(a1, a2, P)
    assert step_vehicle(s, c, P) == step_vehicle(s, c, P)


# -- collisions ----------------------------------------------------------------


def test_identical_poses_collide():
    a = VehicleState(0.0, 0.0, 0.4)
    assert check_collision(a, a)


def test_lateral_gap_separates():
    a = VehicleState(0.0, 0.0, 0.0)
    b = VehicleState(0.0, 1.81, 0.0)
    assert not check_collision(a, b)
    assert check_collision(a, VehicleState(0.0, 1.79, 0.0))


def test_collision_matches_polygon_oracle():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(1000):
        a = VehicleState(0.0, 0.0, rng.uniform(-math.pi, math.pi))
        b = VehicleState(*rng.uniform(-6, 6, size=2), rng.uniform(-math.pi, math.pi))
        expect = Polygon(corners(a)).intersects(Polygon(corners(b)))
        assert check_collision(a, b) == expect
        hits += expect
    # both outcomes are well represented
    assert 100 < hits < 900
