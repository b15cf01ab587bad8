"""Human-driven vehicles: IDM car following, pure-pursuit lane keeping, seeded
density-based spawning and trigger-zone activation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import DT, ControlCommand, VehicleParams, VehicleState, step_vehicle
from .geometry import Path, RoadNetwork, Route, plan_route, wrap_angle

FREE_ROAD = math.inf


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class IdmParams:
    v0: float = 11.0
    T_headway: float = 1.5
    a_max: float = 1.5
    b_comf: float = 2.0
    s0: float = 2.0
    delta: float = 4.0

    def __post_init__(self):
        for name in ("v0", "T_headway", "a_max", "b_comf", "s0", "delta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IDM parameter {name} must be positive")


@dataclass(frozen=True)
class TrafficConfig:
    idm: IdmParams = IdmParams()
    trigger_radius: float = 60.0
    lookahead: float = 5.0
    conflict_horizon: float = 20.0
    leader_range: float = 60.0
    jitter: bool = False
    jitter_fraction: float = 0.1

    def __post_init__(self):
        if self.trigger_radius <= 0:
            raise ValueError("trigger_radius must be positive")


def idm_acceleration(v: float, gap: float, v_lead: float, p: IdmParams) -> float:
    """IDM acceleration clamped to [-2*b_comf, a_max]; ``gap = FREE_ROAD`` means no leader."""
    b_hard = 2.0 * p.b_comf
    if gap <= 0:
        return -b_hard
    acc = p.a_max * (1.0 - (v / p.v0) ** p.delta)
    if gap != FREE_ROAD:
        s_star = p.s0 + max(0.0, v * p.T_headway + v * (v - v_lead) / (2.0 * math.sqrt(p.a_max * p.b_comf)))
        acc -= p.a_max * (s_star / gap) ** 2
    return min(max(acc, -b_hard), p.a_max)


@dataclass
class Hdv:
    state: VehicleState
    route: Route
    idm: IdmParams
    active: bool = False
    route_s: float = 0.0
    finished: bool = False
    lane_offsets: dict[str, float] = field(default_factory=dict)

    @property
    def path(self) -> Path:
        return self.route.path


def _route_to_end(net: RoadNetwork, lane_id: str, s: float) -> Route:
    last = lane_id
    seen = {lane_id}
    while net.lanes[last].successors:
        last = net.lanes[last].successors[0]
        if last in seen:
            break
        seen.add(last)
    if last == lane_id:
        return plan_route(net, (lane_id, s), (lane_id, net.lanes[lane_id].length))
    return plan_route(net, (lane_id, s), (last, net.lanes[last].length))


def _make_hdv(net: RoadNetwork, lane_id: str, s: float, idm: IdmParams, vp: VehicleParams) -> Hdv:
    route = _route_to_end(net, lane_id, s)
    x, y = route.path.point(0.0)
    st = VehicleState(x, y, route.path.heading(0.0), 0.0, 0.0, vp.length, vp.width)
    offsets, acc = {}, -s
    for lid in route.lane_ids:
        offsets[lid] = acc
        acc += net.lanes[lid].length
    return Hdv(st, route, idm, lane_offsets=offsets)


def spawn_traffic(net: RoadNetwork, density: float, seed, cfg: TrafficConfig = TrafficConfig(),
                  vp: VehicleParams = VehicleParams(), exclude: list[tuple[float, float, float]] = (),
                  max_tries: int = 200) -> list[Hdv]:
    """Place ``round(density * lane_length / 10 m)`` parked HDVs at seeded lane offsets.

    ``exclude`` holds (x, y, radius) zones kept free, e.g. around the ego spawn.
    """
    if density < 0:
        raise ValueError("density must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lanes = [l for l in net.lanes.values() if l.kind != "connector"]
    lengths = np.array([l.length for l in lanes])
    count = int(round(density * lengths.sum() / 10.0))
    if count == 0:
        return []
    min_spacing = vp.length + 2.0 * cfg.idm.s0
    placed: list[tuple[str, float, float, float]] = []
    tries = 0
    while len(placed) < count:
        tries += 1
        if tries > max_tries * count:
            raise PlacementError(f"could only place {len(placed)} of {count} vehicles")
        k = int(rng.choice(len(lanes), p=lengths / lengths.sum()))
        lane = lanes[k]
        lo, hi = vp.length / 2, lane.length - vp.length / 2
        if hi <= lo:
            continue
        s = float(rng.uniform(lo, hi))
        x, y = lane.path.point(s)
        if any(math.hypot(x - ex, y - ey) < r for ex, ey, r in exclude):
            continue
        if any(lid == lane.id and abs(s - ps) < min_spacing for lid, ps, _, _ in placed):
            continue
        if any(math.hypot(x - px, y - py) < vp.width + 0.2 for _, _, px, py in placed):
            continue
        placed.append((lane.id, s, x, y))

    hdvs = []
    for lid, s, _, _ in placed:
        idm = cfg.idm
        if cfg.jitter:
            f = 1.0 + rng.uniform(-cfg.jitter_fraction, cfg.jitter_fraction, size=5)
            idm = replace(idm, v0=idm.v0 * f[0], T_headway=idm.T_headway * f[1], a_max=idm.a_max * f[2],
                          b_comf=idm.b_comf * f[3], s0=idm.s0 * f[4])
        hdvs.append(_make_hdv(net, lid, s, idm, vp))
    return hdvs


def _leader(i: int, hdvs: list[Hdv], ego: VehicleState | None, xy: np.ndarray, cfg: TrafficConfig,
            conflicts: dict, occupancy: dict):
    """Bumper gap and along-path speed of the nearest vehicle ahead on hdv i's path."""
    me = hdvs[i]
    st = me.state
    hx, hy = math.cos(st.heading), math.sin(st.heading)
    rel = xy - (st.x, st.y)
    ahead = (rel @ (hx, hy) > -st.length) & (np.hypot(rel[:, 0], rel[:, 1]) < cfg.leader_range)
    ahead[i] = False
    best_gap, best_v = FREE_ROAD, 0.0
    n = len(hdvs)
    for j in np.flatnonzero(ahead):
        if j < n:
            if hdvs[j].finished:
                continue
            ost = hdvs[j].state
        else:
            ost = ego
        s, d, _ = me.path.project(ost.x, ost.y, me.route_s - 1.0, me.route_s + cfg.leader_range)
        if s <= me.route_s or abs(d) > 0.5 * (st.width + ost.width) + 0.3:
            continue
        gap = s - me.route_s - 0.5 * (st.length + ost.length)
        if gap < best_gap:
            best_gap = gap
            best_v = ost.speed * math.cos(wrap_angle(ost.heading - me.path.heading(s)))
    # yield at junction conflict points to whoever is nearer to the crossing
    for lane_id, off in me.lane_offsets.items():
        for other_lane, s_me, s_other in conflicts.get(lane_id, ()):
            dist_me = off + s_me - me.route_s
            if not 0.0 < dist_me <= cfg.conflict_horizon:
                continue
            for j, base in occupancy.get(other_lane, ()):
                if j == i:
                    continue
                dist_other = base + s_other
                if dist_other < -hdvs[j].state.length or dist_other > cfg.conflict_horizon:
                    continue
                if dist_other < dist_me or (dist_other == dist_me and j < i):
                    gap = max(dist_me - 0.5 * st.length - 1.0, 1e-3)
                    if gap < best_gap:
                        best_gap, best_v = gap, 0.0
    return best_gap, best_v


def _pure_pursuit(h: Hdv, vp: VehicleParams, lookahead: float) -> float:
    st = h.state
    tx, ty = h.path.point(h.route_s + lookahead)
    alpha = wrap_angle(math.atan2(ty - st.y, tx - st.x) - st.heading)
    ld = max(math.hypot(tx - st.x, ty - st.y), 1e-3)
    return min(max(math.atan2(2.0 * vp.wheelbase * math.sin(alpha), ld), -vp.s_max), vp.s_max)


def step_traffic(hdvs: list[Hdv], ego: VehicleState | None, net: RoadNetwork, dt: float = DT,
                 cfg: TrafficConfig = TrafficConfig(), vp: VehicleParams = VehicleParams()) -> list[Hdv]:
    """Advance every HDV by one tick; synchronous update from a common snapshot."""
    if not hdvs:
        return hdvs
    if ego is not None:
        for h in hdvs:
            if not h.active and math.hypot(h.state.x - ego.x, h.state.y - ego.y) < cfg.trigger_radius:
                h.active = True
    movers = [i for i, h in enumerate(hdvs) if h.active and not h.finished]
    if not movers:
        return hdvs
    pts = [(h.state.x, h.state.y) for h in hdvs]
    if ego is not None:
        pts.append((ego.x, ego.y))
    xy = np.asarray(pts)
    conflicts = net.conflicts
    occupancy: dict[str, list[tuple[int, float]]] = {}
    for j in movers:
        h = hdvs[j]
        for lid, off in h.lane_offsets.items():
            if lid in conflicts:
                occupancy.setdefault(lid, []).append((j, off - h.route_s))
    commands = {}
    for i in movers:
        h = hdvs[i]
        gap, v_lead = _leader(i, hdvs, ego, xy, cfg, conflicts, occupancy)
        acc = idm_acceleration(h.state.speed, gap, v_lead, h.idm)
        force = vp.mass * acc + vp.drag * h.state.speed ** 2
        steer = _pure_pursuit(h, vp, cfg.lookahead)
        if force >= 0:
            commands[i] = ControlCommand(steer, min(force, vp.f_max), 0.0)
        else:
            commands[i] = ControlCommand(steer, 0.0, min(-force, vp.b_max))
    for i in movers:
        h = hdvs[i]
        h.state = step_vehicle(h.state, commands[i], vp, dt)
        s, _, _ = h.path.project(h.state.x, h.state.y, h.route_s - 1.0, h.route_s + 5.0)
        h.route_s = max(h.route_s, s)
        if h.route_s >= h.path.length - 0.5:
            h.finished = True
    return hdvs
