import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from junctionrl.dynamics import VehicleParams, VehicleState, check_collision
from junctionrl.geometry import ScenarioSpec, build_scenario
from junctionrl.traffic import (FREE_ROAD, IdmParams, PlacementError, _make_hdv, idm_acceleration,
                                spawn_traffic, step_traffic)

IDM = IdmParams()
VP = VehicleParams()


def straight(length=100.0, lanes=3):
    return build_scenario(ScenarioSpec(kind="straight", entrance_length=length, lanes_per_approach=lanes))


# -- IDM law -------------------------------------------------------------------


def test_free_road_fixed_points():
    assert idm_acceleration(IDM.v0, FREE_ROAD, 0.0, IDM) == 0.0
    assert idm_acceleration(0.0, FREE_ROAD, 0.0, IDM) == IDM.a_max


def test_non_positive_gap_is_emergency_braking():
    assert idm_acceleration(5.0, 0.0, 5.0, IDM) == -2 * IDM.b_comf
    assert idm_acceleration(5.0, -1.0, 5.0, IDM) == -2 * IDM.b_comf


@pytest.mark.parametrize("v", [1.0, 4.0, 8.0, 10.5])
def test_equilibrium_gap_matches_root_finder(v):
    root = brentq(lambda g: idm_acceleration(v, g, v, IDM), IDM.s0 + 1e-9, 1e4, xtol=1e-12)
    analytic = (IDM.s0 + v * IDM.T_headway) / math.sqrt(1 - (v / IDM.v0) ** IDM.delta)
    assert abs(root - analytic) < 1e-6


def test_monotonicity_grid():
    speeds = np.linspace(0, 20, 41)
    gaps = np.linspace(0.5, 100, 60)
    for vl in (0.0, 5.0, 11.0):
        for g in gaps:
            acc = [idm_acceleration(v, g, vl, IDM) for v in speeds]
            assert all(b <= a + 1e-12 for a, b in zip(acc, acc[1:]))
        for v in speeds:
            acc = [idm_acceleration(v, g, vl, IDM) for g in gaps]
            assert all(b >= a - 1e-12 for a, b in zip(acc, acc[1:]))


def test_invalid_idm_params():
    with pytest.raises(ValueError):
        IdmParams(delta=0.0)


# -- spawning ------------------------------------------------------------------


def test_zero_density_spawns_nothing():
    assert spawn_traffic(straight(), 0.0, 1) == []


def test_count_follows_density():
    net = straight(100.0, 3)  # 300 m of lanes
    assert len(spawn_traffic(net, 0.1, 1)) == 3
    net = build_scenario(ScenarioSpec(kind="four_way"))
    total = sum(l.length for l in net.lanes.values() if l.kind != "connector")
    assert len(spawn_traffic(net, 0.1, 5)) == round(0.1 * total / 10)


def test_spawn_determinism_and_seed_sensitivity():
    net = build_scenario(ScenarioSpec(kind="t_intersection"))

    def poses(seed):
        return [(h.state.x, h.state.y) for h in spawn_traffic(net, 0.1, seed)]

    assert poses(3) == poses(3)
    base = poses(0)
    assert sum(poses(s) == base for s in range(1, 101)) == 0


def test_spawn_respects_min_gap_and_routes_continue():
    net = build_scenario(ScenarioSpec(kind="four_way"))
    hdvs = spawn_traffic(net, 0.2, 7)
    by_lane = {}
    for h in hdvs:
        lane = h.route.lane_ids[0]
        by_lane.setdefault(lane, []).append(-h.lane_offsets[lane])
        if net.lanes[lane].kind == "inbound":
            assert len(h.route.lane_ids) == 3
        assert not h.active and h.state.speed == 0.0
    for offsets in by_lane.values():
        offsets.sort()
        assert all(b - a - VP.length >= 2 * IDM.s0 - 1e-9 for a, b in zip(offsets, offsets[1:]))


def test_overfull_density_raises():
    with pytest.raises(PlacementError):
        spawn_traffic(straight(50.0, 1), 5.0, 0)


# -- stepping ------------------------------------------------------------------


def test_far_ego_never_triggers():
    net = build_scenario(ScenarioSpec(kind="four_way"))
    hdvs = spawn_traffic(net, 0.1, 2)
    before = [h.state for h in hdvs]
    ego = VehicleState(500.0, 500.0, 0.0)
    for _ in range(200):
        step_traffic(hdvs, ego, net)
    assert [h.state for h in hdvs] == before
    assert not any(h.active for h in hdvs)


@given(st.lists(st.tuples(st.floats(-150, 150), st.floats(-150, 150)), min_size=1, max_size=30))
def test_activation_is_monotone(positions):
    net = build_scenario(ScenarioSpec(kind="t_intersection"))
    hdvs = spawn_traffic(net, 0.1, 4)
    was = [False] * len(hdvs)
    for x, y in positions:
        step_traffic(hdvs, VehicleState(x, y, 0.0), net)
        now = [h.active for h in hdvs]
        assert all(n or not w for w, n in zip(was, now))
        was = now


def test_free_road_speed_matches_ode_and_reaches_v0():
    net = straight(1000.0, 1)
    h = _make_hdv(net, "s_0", 5.0, IDM, VP)
    h.active = True
    hdvs = [h]
    sol = solve_ivp(lambda t, v: [IDM.a_max * (1 - (v[0] / IDM.v0) ** IDM.delta)], (0, 40), [0.0],
                    rtol=1e-10, atol=1e-12, dense_output=True)
    for k in range(1, 2001):
        step_traffic(hdvs, None, net)
        if k % 250 == 0:
            assert h.state.speed == pytest.approx(sol.sol(k * 0.02)[0], abs=0.05)
    assert abs(h.state.speed - IDM.v0) < 0.01 * IDM.v0


def test_follower_stops_behind_stationary_leader():
    net = straight(300.0, 1)
    rng = np.random.default_rng(0)
    for _ in range(100):
        gap0 = rng.uniform(20.0, 150.0)
        follower = _make_hdv(net, "s_0", 5.0, IDM, VP)
        follower.state = VehicleState(follower.state.x, follower.state.y, follower.state.heading,
                                      rng.uniform(0.0, IDM.v0), 0.0, VP.length, VP.width)
        follower.active = True
        leader = _make_hdv(net, "s_0", 5.0 + VP.length + gap0, IDM, VP)
        hdvs = [follower, leader]
        for _ in range(3000):
            step_traffic(hdvs, None, net)
            assert not check_collision(follower.state, leader.state)
            if follower.state.speed == 0.0 and follower.route_s > 5.0:
                break
        gap = leader.state.x - follower.state.x - VP.length
        assert gap >= IDM.s0 - 0.1


def test_ring_platoon_keeps_positive_gaps():
    n, circumference, dt = 10, 200.0, 0.02
    pos = np.linspace(0, circumference, n, endpoint=False)
    vel = np.full(n, 5.0)
    vel[0] = 0.0  # perturbation
    for _ in range(10_000):
        gaps = (np.roll(pos, -1) - pos) % circumference - VP.length
        assert np.all(gaps > 0)
        acc = np.array([idm_acceleration(vel[i], gaps[i], vel[(i + 1) % n], IDM) for i in range(n)])
        vel = np.maximum(vel + acc * dt, 0.0)
        pos = (pos + vel * dt) % circumference
