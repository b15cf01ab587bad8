import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from junctionrl.dynamics import VehicleState
from junctionrl.sensing import (LidarConfig, V2XReport, beam_angles, ray_distances, raycast, v2x_query,
                                vehicle_segments)

CLEAN = LidarConfig(noise_sigma=0.0)
EGO = VehicleState(0.0, 0.0, 0.0)


def ray_oracle(ox, oy, angle, segments, max_range):
    """Scalar ray/segment intersection via homogeneous line coordinates."""
    dx, dy = math.cos(angle), math.sin(angle)
    best = max_range
    for x0, y0, x1, y1 in segments:
        # line through the segment: a*x + b*y = c
        a, b = y1 - y0, x0 - x1
        c = a * x0 + b * y0
        denom = a * dx + b * dy
        if denom == 0:
            continue
        t = (c - a * ox - b * oy) / denom
        if t < 0:
            continue
        px, py = ox + t * dx, oy + t * dy
        # parameter of the hit along the segment
        L2 = (x1 - x0) ** 2 + (y1 - y0) ** 2
        u = ((px - x0) * (x1 - x0) + (py - y0) * (y1 - y0)) / L2
        if -1e-12 <= u <= 1 + 1e-12:
            best = min(best, t)
    return best


def random_vehicles(rng, k):
    out = []
    while len(out) < k:
        x, y = rng.uniform(-45, 45, size=2)
        if math.hypot(x, y) > 4:
            out.append(VehicleState(float(x), float(y), float(rng.uniform(-math.pi, math.pi))))
    return out


def test_beam_layout():
    assert CLEAN.beam_count == 240
    assert math.degrees(CLEAN.angular_resolution) == pytest.approx(1.5)
    ang = beam_angles(VehicleState(0, 0, 0.3), CLEAN)
    assert ang[0] == 0.3 and ang[1] - ang[0] == pytest.approx(math.radians(1.5))


def test_empty_scene_reads_max():
    scan = raycast(np.empty((0, 4)), EGO, CLEAN)
    assert scan.shape == (240,) and np.all(scan == 1.0)


def test_wall_at_half_range():
    wall = np.array([[25.0, -10.0, 25.0, 10.0]])
    assert raycast(wall, EGO, CLEAN)[0] == pytest.approx(0.5, abs=1e-15)


def test_raycast_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(500):
        segs = vehicle_segments(random_vehicles(rng, int(rng.integers(1, 6))))
        ego = VehicleState(0.0, 0.0, float(rng.uniform(-math.pi, math.pi)))
        angles = beam_angles(ego, CLEAN)
        got = ray_distances(0.0, 0.0, angles, segs, 50.0)
        for i in range(0, 240, 3):
            assert abs(got[i] - ray_oracle(0.0, 0.0, angles[i], segs, 50.0)) < 1e-9


@given(st.integers(0, 239), st.integers(0, 2**31))
def test_rotational_equivariance(k, seed):
    rng = np.random.default_rng(seed)
    vehicles = random_vehicles(rng, 5)
    theta = k * CLEAN.angular_resolution
    c, s = math.cos(theta), math.sin(theta)
    rotated = [VehicleState(c * v.x - s * v.y, s * v.x + c * v.y, v.heading + theta) for v in vehicles]
    a = raycast(vehicle_segments(vehicles), EGO, CLEAN)
    b = raycast(vehicle_segments(rotated), EGO, CLEAN)
    assert np.allclose(b, np.roll(a, k), atol=1e-9)


@given(st.integers(0, 2**31))
def test_adding_obstacles_never_increases_readings(seed):
    rng = np.random.default_rng(seed)
    vehicles = random_vehicles(rng, 6)
    base = raycast(vehicle_segments(vehicles[:3]), EGO, CLEAN)
    more = raycast(vehicle_segments(vehicles), EGO, CLEAN)
    assert np.all(more <= base)


def test_noise_statistics():
    wall = np.array([[25.0, -100.0, 25.0, 100.0]])
    cfg = LidarConfig(noise_sigma=0.01)
    rng = np.random.default_rng(1)
    draws = np.array([raycast(wall, EGO, cfg, rng)[0] for _ in range(10_000)])
    assert np.std(draws) == pytest.approx(0.01, rel=0.05)
    assert np.all((draws >= 0) & (draws <= 1))


# -- V2X -----------------------------------------------------------------------


def test_v2x_empty():
    reps = v2x_query([], EGO)
    assert reps == [V2XReport()] * 4 and not any(r.present for r in reps)


def test_v2x_single_vehicle_ahead():
    reps = v2x_query([VehicleState(10.0, 0.0, 0.0, 5.0)], EGO)
    assert reps[0] == V2XReport(10.0, 0.0, 5.0, 0.0, True)
    assert reps[1:] == [V2XReport()] * 3


def test_v2x_matches_sort_oracle():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(0, 9))
        others = [VehicleState(*rng.uniform(-60, 60, size=2), rng.uniform(-3, 3), rng.uniform(0, 20))
                  for _ in range(n)]
        ego = VehicleState(*rng.uniform(-5, 5, size=2), rng.uniform(-3, 3))
        order = sorted(range(n), key=lambda i: (math.hypot(others[i].x - ego.x, others[i].y - ego.y), i))[:4]
        reps = v2x_query(others, ego)
        assert len(reps) == 4
        for slot, i in enumerate(order):
            o = others[i]
            dx, dy = o.x - ego.x, o.y - ego.y
            assert reps[slot].present and reps[slot].speed == o.speed
            assert math.hypot(reps[slot].dx, reps[slot].dy) == pytest.approx(math.hypot(dx, dy), abs=1e-9)
            # ego-frame coordinates rotate back to the world offset
            c, s = math.cos(ego.heading), math.sin(ego.heading)
            assert c * reps[slot].dx - s * reps[slot].dy == pytest.approx(dx, abs=1e-9)
        assert not any(r.present for r in reps[len(order):])


def test_v2x_reports_occluded_vehicle():
    occluder = VehicleState(10.0, 0.0, 0.0)
    hidden = VehicleState(20.0, 0.0, 0.0)
    scan = raycast(vehicle_segments([occluder, hidden]), EGO, CLEAN)
    assert scan[0] * 50 == pytest.approx(10.0 - 2.25)
    reps = v2x_query([hidden, occluder], EGO)
    assert reps[1].present and reps[1].dx == pytest.approx(20.0)


@given(st.integers(0, 2**31))
def test_lidar_visible_subset_of_v2x(seed):
    rng = np.random.default_rng(seed)
    others = random_vehicles(rng, 7)
    nearest = sorted(range(7), key=lambda i: math.hypot(others[i].x, others[i].y))[:4]
    reported = {(round(r.dx, 9), round(r.dy, 9)) for r in v2x_query(others, EGO)}
    for i in nearest:
        # every one of the four nearest is reported, whether or not a beam reaches it
        assert (round(others[i].x, 9), round(others[i].y, 9)) in reported
