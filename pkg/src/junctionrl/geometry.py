"""Road networks for the scenario families, lane-relative coordinates and routing.

Lane centerlines are chains of exact line and circular-arc pieces; a dense
polyline (<= 0.5 m per segment) is derived from them for raycasting and
serialization. Projection onto the exact pieces makes the Frenet transform
invertible for any lateral offset smaller than the tightest turn radius.
"""
from __future__ import annotations

import heapq
from bisect import bisect_right
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
POLYLINE_STEP = 0.5
CHECKPOINT_INTERVAL = 10.0
CAPTURE_RADIUS = 2.0
ROUNDABOUT_RADIUS = 20.0
ROUNDABOUT_FILLET = 8.0

SCHEMA = "junctionrl.roadnet/1"


class ConfigurationError(ValueError):
    pass


class ProjectionError(ValueError):
    pass


class PlanningError(ValueError):
    pass


def wrap_angle(a: float) -> float:
    """Wrap to [-pi, pi)."""
    return (a + math.pi) % TWO_PI - math.pi


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


# ---------------------------------------------------------------------------
# centerline pieces


@dataclass(frozen=True)
class LinePiece:
    start: tuple[float, float]
    end: tuple[float, float]
    length: float = field(init=False, repr=False, compare=False)
    _dir: tuple[float, float] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        L = math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])
        object.__setattr__(self, "length", L)
        d = ((self.end[0] - self.start[0]) / L, (self.end[1] - self.start[1]) / L) if L > 0 else (1.0, 0.0)
        object.__setattr__(self, "_dir", d)

    def point(self, s: float) -> tuple[float, float]:
        ux, uy = self._dir
        return self.start[0] + s * ux, self.start[1] + s * uy

    def heading(self, s: float) -> float:
        ux, uy = self._dir
        return math.atan2(uy, ux)

    def project(self, x: float, y: float) -> tuple[float, float, float]:
        """Return (local s, signed lateral d, euclidean distance)."""
        ux, uy = self._dir
        rx, ry = x - self.start[0], y - self.start[1]
        s = min(max(rx * ux + ry * uy, 0.0), self.length)
        qx, qy = self.start[0] + s * ux, self.start[1] + s * uy
        dx, dy = x - qx, y - qy
        return s, _cross(ux, uy, dx, dy), math.hypot(dx, dy)

    def split(self, s0: float, s1: float) -> "LinePiece":
        return LinePiece(self.point(s0), self.point(s1))

    def to_dict(self) -> dict:
        return {"type": "line", "start": list(self.start), "end": list(self.end)}


@dataclass(frozen=True)
class ArcPiece:
    """Circular arc; positive sweep is counterclockwise travel."""

    center: tuple[float, float]
    radius: float
    start_angle: float
    sweep: float
    length: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "length", self.radius * abs(self.sweep))

    def _angle(self, s: float) -> float:
        return self.start_angle + math.copysign(s / self.radius, self.sweep)

    def point(self, s: float) -> tuple[float, float]:
        a = self._angle(s)
        return self.center[0] + self.radius * math.cos(a), self.center[1] + self.radius * math.sin(a)

    def heading(self, s: float) -> float:
        return self._angle(s) + math.copysign(math.pi / 2, self.sweep)

    def project(self, x: float, y: float) -> tuple[float, float, float]:
        rx, ry = x - self.center[0], y - self.center[1]
        rho = math.hypot(rx, ry)
        phi = math.atan2(ry, rx) if rho > 0 else self.start_angle
        if self.sweep > 0:
            tau = (phi - self.start_angle) % TWO_PI
        else:
            tau = (self.start_angle - phi) % TWO_PI
        span = abs(self.sweep)
        if tau <= span:
            s = tau * self.radius
            d = self.radius - rho if self.sweep > 0 else rho - self.radius
            return s, d, abs(rho - self.radius)
        best = None
        for s in (0.0, self.length):
            qx, qy = self.point(s)
            h = self.heading(s)
            dx, dy = x - qx, y - qy
            cand = (s, _cross(math.cos(h), math.sin(h), dx, dy), math.hypot(dx, dy))
            if best is None or cand[2] < best[2]:
                best = cand
        return best

    def split(self, s0: float, s1: float) -> "ArcPiece":
        a0 = self._angle(s0)
        return ArcPiece(self.center, self.radius, a0, math.copysign((s1 - s0) / self.radius, self.sweep))

    def to_dict(self) -> dict:
        return {"type": "arc", "center": list(self.center), "radius": self.radius,
                "start_angle": self.start_angle, "sweep": self.sweep}


Piece = LinePiece | ArcPiece


def piece_from_dict(d: dict) -> Piece:
    if d["type"] == "line":
        return LinePiece(tuple(d["start"]), tuple(d["end"]))
    if d["type"] == "arc":
        return ArcPiece(tuple(d["center"]), float(d["radius"]), float(d["start_angle"]), float(d["sweep"]))
    raise ConfigurationError(f"unknown piece type {d['type']!r}")


@dataclass(frozen=True)
class Path:
    """Arclength-parameterized chain of pieces."""

    pieces: tuple[Piece, ...]

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([p.length for p in self.pieces])])

    @property
    def length(self) -> float:
        return float(self.offsets[-1])

    def _locate(self, s: float) -> tuple[int, float]:
        b = self._bounds
        s = min(max(s, 0.0), b[-1])
        i = min(max(bisect_right(b, s) - 1, 0), len(self.pieces) - 1)
        return i, s - b[i]

    def point(self, s: float) -> tuple[float, float]:
        i, ls = self._locate(s)
        return self.pieces[i].point(ls)

    def heading(self, s: float) -> float:
        i, ls = self._locate(s)
        return self.pieces[i].heading(ls)

    def from_frenet(self, s: float, d: float) -> tuple[float, float]:
        x, y = self.point(s)
        h = self.heading(s)
        return x - d * math.sin(h), y + d * math.cos(h)

    @cached_property
    def _bounds(self) -> list[float]:
        return self.offsets.tolist()

    def project(self, x: float, y: float, s_min: float = -math.inf, s_max: float = math.inf):
        """Closest point over pieces overlapping [s_min, s_max]; returns (s, d, dist)."""
        best = None
        b = self._bounds
        for i, piece in enumerate(self.pieces):
            if b[i + 1] < s_min or b[i] > s_max:
                continue
            ls, d, dist = piece.project(x, y)
            if best is None or dist < best[2] - 1e-12:
                best = (b[i] + ls, d, dist)
        if best is None:
            return self.project(x, y)
        return best

    def sample(self, step: float = POLYLINE_STEP) -> np.ndarray:
        pts = []
        for piece in self.pieces:
            n = max(1, math.ceil(piece.length / step - 1e-9))
            for k in range(n):
                pts.append(piece.point(piece.length * k / n))
        pts.append(self.pieces[-1].point(self.pieces[-1].length))
        return np.asarray(pts, dtype=float)

    def sub(self, s0: float, s1: float) -> "Path":
        out = []
        for i, piece in enumerate(self.pieces):
            a, b = self.offsets[i], self.offsets[i + 1]
            lo, hi = max(a, s0), min(b, s1)
            if hi - lo > 1e-9:
                out.append(piece.split(lo - a, hi - a))
        if not out:
            i, ls = self._locate(s0)
            out.append(self.pieces[i].split(ls, ls))
        return Path(tuple(out))

    def __add__(self, other: "Path") -> "Path":
        return Path(tuple(p for p in self.pieces if p.length > 0) + tuple(p for p in other.pieces if p.length > 0))


# ---------------------------------------------------------------------------
# road network


@dataclass(frozen=True)
class Lane:
    id: str
    path: Path
    width: float = 3.5
    successors: tuple[str, ...] = ()
    kind: str = "inbound"

    @property
    def length(self) -> float:
        return self.path.length

    @cached_property
    def polyline(self) -> np.ndarray:
        return self.path.sample()


@dataclass
class ScenarioSpec:
    kind: str = "t_intersection"
    seed: int = 0
    traffic_density: float = 0.1
    entrance_length: float = 50.0
    lanes_per_approach: int = 3
    speed_limit: float = 80.0 / 3.6
    lane_width: float = 3.5

    def __post_init__(self):
        if self.traffic_density < 0:
            raise ConfigurationError("traffic_density must be >= 0")
        if self.entrance_length <= 0:
            raise ConfigurationError("entrance_length must be > 0")
        if self.lanes_per_approach < 1:
            raise ConfigurationError("lanes_per_approach must be >= 1")


SCENARIO_KINDS = ("t_intersection", "four_way", "roundabout", "straight")


@dataclass
class RoadNetwork:
    kind: str
    lanes: dict[str, Lane]
    boundaries: list[np.ndarray]
    spawn_points: list[tuple[str, float]]
    destinations: list[tuple[str, float]]
    lane_width: float = 3.5

    def __post_init__(self):
        for lane in self.lanes.values():
            for succ in lane.successors:
                if succ not in self.lanes:
                    raise ConfigurationError(f"lane {lane.id} has unknown successor {succ}")

    @cached_property
    def segments(self) -> np.ndarray:
        """All boundary edges as rows (x0, y0, x1, y1)."""
        rows = []
        for ring in self.boundaries:
            rows.append(np.hstack([ring, np.roll(ring, -1, axis=0)]))
        return np.vstack(rows)

    @cached_property
    def predecessors(self) -> dict[str, tuple[str, ...]]:
        pred: dict[str, list[str]] = {k: [] for k in self.lanes}
        for lane in self.lanes.values():
            for succ in lane.successors:
                pred[succ].append(lane.id)
        return {k: tuple(v) for k, v in pred.items()}

    @cached_property
    def conflicts(self) -> dict[str, list[tuple[str, float, float]]]:
        """First crossing of every pair of connector paths: lane -> [(other, s_self, s_other)]."""
        conns = [l for l in self.lanes.values() if l.kind == "connector"]
        out: dict[str, list[tuple[str, float, float]]] = {l.id: [] for l in conns}
        for i, a in enumerate(conns):
            for b in conns[i + 1:]:
                hit = first_crossing(a.polyline, b.polyline)
                if hit is not None:
                    out[a.id].append((b.id, hit[0], hit[1]))
                    out[b.id].append((a.id, hit[1], hit[0]))
        return out

    def contains(self, x: float, y: float) -> bool:
        return bool(points_inside(self.segments, np.array([[x, y]]))[0])

    def to_json(self) -> str:
        return json.dumps({
            "schema": SCHEMA,
            "kind": self.kind,
            "lane_width": self.lane_width,
            "lanes": [
                {"id": l.id, "kind": l.kind, "width": l.width, "successors": list(l.successors),
                 "length": l.length, "pieces": [p.to_dict() for p in l.path.pieces],
                 "polyline": l.polyline.round(6).tolist()}
                for l in self.lanes.values()
            ],
            "boundaries": [ring.tolist() for ring in self.boundaries],
            "spawn_points": [list(sp) for sp in self.spawn_points],
            "destinations": [list(d) for d in self.destinations],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RoadNetwork":
        d = json.loads(text)
        if d.get("schema") != SCHEMA:
            raise ConfigurationError(f"unsupported network schema {d.get('schema')!r}")
        lanes = {}
        for ld in d["lanes"]:
            path = Path(tuple(piece_from_dict(p) for p in ld["pieces"]))
            lanes[ld["id"]] = Lane(ld["id"], path, ld["width"], tuple(ld["successors"]), ld["kind"])
        return cls(d["kind"], lanes, [np.asarray(r, dtype=float) for r in d["boundaries"]],
                   [tuple(x) for x in d["spawn_points"]], [tuple(x) for x in d["destinations"]],
                   d["lane_width"])


def first_crossing(pa: np.ndarray, pb: np.ndarray) -> tuple[float, float] | None:
    """Arclengths (along a, along b) of the crossing of two polylines that comes first along a."""
    a0, a1 = pa[:-1, None, :], pa[1:, None, :]
    b0, b1 = pb[None, :-1, :], pb[None, 1:, :]
    ea, eb = a1 - a0, b1 - b0
    r = b0 - a0
    den = ea[..., 0] * eb[..., 1] - ea[..., 1] * eb[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (r[..., 0] * eb[..., 1] - r[..., 1] * eb[..., 0]) / den
        u = (r[..., 0] * ea[..., 1] - r[..., 1] * ea[..., 0]) / den
    ok = (np.abs(den) > 1e-12) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    if not ok.any():
        return None
    ia, ib = np.nonzero(ok)
    la = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pa, axis=0), axis=1))])
    lb = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pb, axis=0), axis=1))])
    sa = la[ia] + t[ia, ib] * (la[ia + 1] - la[ia])
    k = int(np.argmin(sa))
    sb = lb[ib[k]] + u[ia[k], ib[k]] * (lb[ib[k] + 1] - lb[ib[k]])
    return float(sa[k]), float(sb)


def points_inside(segments: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Even-odd crossing test of each point against all boundary edges (holes allowed)."""
    x0, y0, x1, y1 = (segments[:, k][None, :] for k in range(4))
    px, py = pts[:, 0:1], pts[:, 1:2]
    straddle = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    crossings = np.sum(straddle & (px < xint), axis=1)
    return crossings % 2 == 1


def _rot(p, phi):
    c, s = math.cos(phi), math.sin(phi)
    return (c * p[0] - s * p[1], s * p[0] + c * p[1])


def _arc_points(radius, a0, a1, step=POLYLINE_STEP):
    """Points on a CCW arc from a0 to a1, excluding the end point."""
    sweep = (a1 - a0) % TWO_PI
    n = max(1, math.ceil(radius * sweep / step))
    return [(radius * math.cos(a0 + sweep * k / n), radius * math.sin(a0 + sweep * k / n)) for k in range(n)]


def _lane_turn_preferences(n: int) -> list[list[str]]:
    if n == 1:
        return [["straight", "right", "left"]]
    prefs = []
    for i in range(n):
        if i == 0:
            prefs.append(["left", "straight", "right"])
        elif i == n - 1:
            prefs.append(["right", "straight", "left"])
        else:
            prefs.append(["straight", "right", "left"])
    return prefs


_TURN_OFFSET = {"right": 90, "straight": 180, "left": 270}


def _build_junction(spec: ScenarioSpec, arm_degrees: Sequence[int]) -> RoadNetwork:
    roundabout = spec.kind == "roundabout"
    n, w, E = spec.lanes_per_approach, spec.lane_width, spec.entrance_length
    H = n * w
    offsets = [(i + 0.5) * w for i in range(n)]
    present = set(arm_degrees)

    if roundabout:
        ring_r = [ROUNDABOUT_RADIUS + (i - (n - 1) / 2) * w for i in range(n)]
        if ring_r[0] - w / 2 <= 0:
            raise ConfigurationError("too many lanes for the roundabout ring")
        rho = ROUNDABOUT_FILLET
        xf = [math.sqrt((r + rho) ** 2 - (o + rho) ** 2) for r, o in zip(ring_r, offsets)]
        r_out = ROUNDABOUT_RADIUS + H / 2
        start = math.ceil(max(max(xf), math.sqrt(max(r_out**2 - H**2, 0.0))) + 2.0)
    else:
        start = H + 4.5  # junction half-size

    lanes: dict[str, Lane] = {}
    succ: dict[str, list[str]] = {}
    spawn, dest = [], []
    for deg in arm_degrees:
        phi = math.radians(deg)
        for i, o in enumerate(offsets):
            a = _rot((start + E, o), phi)
            b = _rot((start, o), phi)
            lid = f"a{deg}_in_{i}"
            lanes[lid] = Lane(lid, Path((LinePiece(a, b),)), w, (), "inbound")
            succ[lid] = []
            spawn.append((lid, 5.0))
            c = _rot((start, -o), phi)
            e = _rot((start + E, -o), phi)
            lid = f"a{deg}_out_{i}"
            lanes[lid] = Lane(lid, Path((LinePiece(c, e),)), w, (), "outbound")
            succ[lid] = []
            dest.append((lid, E - 10.0))

    prefs = _lane_turn_preferences(n)
    for deg in arm_degrees:
        phi_a = math.radians(deg)
        for i, o in enumerate(offsets):
            for turn in prefs[i]:
                deg_b = (deg + _TURN_OFFSET[turn]) % 360
                if deg_b in present:
                    break
            else:
                continue
            phi_b = math.radians(deg_b)
            if roundabout:
                path = _roundabout_connector(phi_a, phi_b, o, ring_r[i], xf[i], start)
            else:
                path = _junction_connector(phi_a, phi_b, o, start, turn)
            cid = f"c{deg}_{i}_{deg_b}"
            lanes[cid] = Lane(cid, path, w, (), "connector")
            succ[f"a{deg}_in_{i}"].append(cid)
            succ[cid] = [f"a{deg_b}_out_{i}"]

    lanes = {k: Lane(l.id, l.path, l.width, tuple(succ.get(k, ())), l.kind) for k, l in lanes.items()}

    if roundabout:
        r_out = ROUNDABOUT_RADIUS + H / 2
        r_in = ROUNDABOUT_RADIUS - H / 2
        xc = math.sqrt(r_out**2 - H**2)
        half = math.atan2(H, xc)
        outer = []
        degs = sorted(arm_degrees)
        for k, deg in enumerate(degs):
            phi = math.radians(deg)
            outer += [_rot(p, phi) for p in ((xc, -H), (start + E, -H), (start + E, H), (xc, H))]
            nxt = math.radians(degs[(k + 1) % len(degs)]) + (TWO_PI if k == len(degs) - 1 else 0.0)
            outer += _arc_points(r_out, phi + half, nxt - half)[1:]
        island = _arc_points(r_in, 0.0, TWO_PI - 1e-12)
        boundaries = [np.asarray(outer), np.asarray(island)]
    else:
        J = start
        ring = []
        for side in (0, 90, 180, 270):
            phi = math.radians(side)
            ring.append(_rot((J, -J), phi))
            if side in present:
                ring += [_rot(p, phi) for p in ((J, -H), (J + E, -H), (J + E, H), (J, H))]
        boundaries = [np.asarray(ring)]
    return RoadNetwork(spec.kind, lanes, boundaries, spawn, dest, w)


def _junction_connector(phi_a, phi_b, o, J, turn) -> Path:
    p0 = _rot((J, o), phi_a)
    p1 = _rot((J, -o), phi_b)
    if turn == "straight" or abs(wrap_angle(phi_b - phi_a - math.pi)) < 1e-9:
        return Path((LinePiece(p0, p1),))
    h0 = phi_a + math.pi
    left = turn == "left"
    # tangent lines meet at the corner; equal tangent lengths give the radius
    d0 = (math.cos(h0), math.sin(h0))
    d1 = (math.cos(phi_b), math.sin(phi_b))
    den = _cross(d0[0], d0[1], -d1[0], -d1[1])
    t = _cross(p1[0] - p0[0], p1[1] - p0[1], -d1[0], -d1[1]) / den
    radius = abs(t)
    nx, ny = (-d0[1], d0[0]) if left else (d0[1], -d0[0])
    c = (p0[0] + radius * nx, p0[1] + radius * ny)
    a0 = math.atan2(p0[1] - c[1], p0[0] - c[0])
    arc = ArcPiece(c, radius, a0, math.pi / 2 if left else -math.pi / 2)
    end = arc.point(arc.length)
    assert math.hypot(end[0] - p1[0], end[1] - p1[1]) < 1e-9
    return Path((arc,))


def _roundabout_connector(phi_a, phi_b, o, r, xf, start) -> Path:
    rho = ROUNDABOUT_FILLET
    beta = math.atan2(o + rho, xf)
    pieces: list[Piece] = []
    # entry: straight then a right-hand fillet onto the ring
    cf = _rot((xf, o + rho), phi_a)
    if start > xf:
        pieces.append(LinePiece(_rot((start, o), phi_a), _rot((xf, o), phi_a)))
    pieces.append(ArcPiece(cf, rho, phi_a - math.pi / 2, math.atan2(-(o + rho), -xf) + math.pi / 2))
    a_in = phi_a + beta
    a_out = phi_b - beta
    pieces.append(ArcPiece((0.0, 0.0), r, a_in, (a_out - a_in) % TWO_PI))
    cx = _rot((xf, -(o + rho)), phi_b)
    a_fillet = math.atan2(o + rho, -xf)
    pieces.append(ArcPiece(cx, rho, phi_b + a_fillet, math.pi / 2 - a_fillet))
    if start > xf:
        pieces.append(LinePiece(_rot((xf, -o), phi_b), _rot((start, -o), phi_b)))
    return Path(tuple(pieces))


def _build_straight(spec: ScenarioSpec) -> RoadNetwork:
    n, w, E = spec.lanes_per_approach, spec.lane_width, spec.entrance_length
    H = n * w
    lanes = {}
    for i in range(n):
        y = -H / 2 + (i + 0.5) * w
        lid = f"s_{i}"
        lanes[lid] = Lane(lid, Path((LinePiece((0.0, y), (E, y)),)), w, (), "straight")
    ring = np.array([[0.0, -H / 2], [E, -H / 2], [E, H / 2], [0.0, H / 2]])
    mid = f"s_{n // 2}"
    return RoadNetwork("straight", lanes, [ring], [(k, 0.0) for k in lanes], [(mid, E)], w)


@lru_cache(maxsize=64)
def _build_cached(kind, entrance_length, lanes_per_approach, lane_width) -> RoadNetwork:
    spec = ScenarioSpec(kind=kind, entrance_length=entrance_length,
                        lanes_per_approach=lanes_per_approach, lane_width=lane_width)
    if kind == "t_intersection":
        return _build_junction(spec, (0, 180, 270))
    if kind == "four_way":
        return _build_junction(spec, (0, 90, 180, 270))
    if kind == "roundabout":
        return _build_junction(spec, (0, 90, 180, 270))
    return _build_straight(spec)


def build_scenario(spec: ScenarioSpec) -> RoadNetwork:
    """Build the road network for ``spec``; geometry ignores the seed and density."""
    if spec.kind not in SCENARIO_KINDS:
        raise ConfigurationError(f"unsupported scenario kind {spec.kind!r}")
    return _build_cached(spec.kind, float(spec.entrance_length), int(spec.lanes_per_approach),
                         float(spec.lane_width))


# ---------------------------------------------------------------------------
# frenet, routing, navigation, boundaries


@dataclass(frozen=True)
class FrenetPose:
    lane_id: str
    s: float
    d: float


def to_frenet(x: float, y: float, lane: Lane) -> FrenetPose:
    s, d, dist = lane.path.project(x, y)
    if dist > 4.0 * lane.width:
        raise ProjectionError(f"point ({x:.2f}, {y:.2f}) is {dist:.2f} m from lane {lane.id}")
    return FrenetPose(lane.id, s, d)


def from_frenet(pose: FrenetPose, lane: Lane) -> tuple[float, float]:
    return lane.path.from_frenet(pose.s, pose.d)


@dataclass(frozen=True)
class Route:
    lane_ids: tuple[str, ...]
    path: Path
    checkpoints: np.ndarray
    checkpoint_s: np.ndarray
    destination: tuple[float, float]

    @property
    def length(self) -> float:
        return self.path.length


def plan_route(net: RoadNetwork, spawn: tuple[str, float], dest: tuple[str, float],
               checkpoint_interval: float = CHECKPOINT_INTERVAL) -> Route:
    """Shortest-arclength lane sequence from ``spawn`` to ``dest`` with evenly spaced checkpoints."""
    (l0, s0), (l1, s1) = spawn, dest
    for lid in (l0, l1):
        if lid not in net.lanes:
            raise PlanningError(f"unknown lane {lid}")
    if l0 == l1 and s1 >= s0:
        seq = [l0]
    else:
        # node cost: remaining length on the spawn lane plus full interior lanes
        dist = {l0: net.lanes[l0].length - s0}
        prev: dict[str, str] = {}
        best, best_prev = math.inf, None
        heap = [(dist[l0], l0)]
        while heap:
            d, lid = heapq.heappop(heap)
            if d > dist.get(lid, math.inf) or d >= best:
                continue
            for nxt in net.lanes[lid].successors:
                if nxt == l1 and d + s1 < best:
                    best, best_prev = d + s1, lid
                nd = d + net.lanes[nxt].length
                if nxt != l0 and nd < dist.get(nxt, math.inf):
                    dist[nxt] = nd
                    prev[nxt] = lid
                    heapq.heappush(heap, (nd, nxt))
        if best_prev is None:
            raise PlanningError(f"destination lane {l1} unreachable from {l0}")
        seq = [l1, best_prev]
        while seq[-1] != l0:
            seq.append(prev[seq[-1]])
        seq.reverse()

    if len(seq) == 1:
        path = net.lanes[l0].path.sub(s0, s1)
    else:
        path = net.lanes[l0].path.sub(s0, net.lanes[l0].length)
        for lid in seq[1:-1]:
            path = path + net.lanes[lid].path
        path = path + net.lanes[l1].path.sub(0.0, s1)

    L = path.length
    n = max(1, math.ceil(L / checkpoint_interval - 1e-9))
    cs = np.array([min(k * checkpoint_interval, L) for k in range(1, n)] + [L])
    pts = np.array([path.point(s) for s in cs])
    return Route(tuple(seq), path, pts, cs, path.point(L))


def navigation_features(route: Route, x: float, y: float, heading: float, index: int = 0):
    """Distance and ego-frame bearing to checkpoint ``index`` (clamped to the last one)."""
    cx, cy = route.checkpoints[min(index, len(route.checkpoints) - 1)]
    dx, dy = cx - x, cy - y
    return math.hypot(dx, dy), wrap_angle(math.atan2(dy, dx) - heading)


@dataclass
class Navigator:
    """Tracks checkpoint consumption along a route."""

    route: Route
    capture_radius: float = CAPTURE_RADIUS
    index: int = 0

    def update(self, x: float, y: float, route_s: float | None = None) -> int:
        last = len(self.route.checkpoints) - 1
        while self.index < last:
            cx, cy = self.route.checkpoints[self.index]
            passed = route_s is not None and route_s >= self.route.checkpoint_s[self.index]
            if passed or math.hypot(cx - x, cy - y) <= self.capture_radius:
                self.index += 1
            else:
                break
        return self.index

    def features(self, x: float, y: float, heading: float, route_s: float | None = None):
        self.update(x, y, route_s)
        return navigation_features(self.route, x, y, heading, self.index)


def _clipped_side_distance(segs_local: np.ndarray, side: float) -> float:
    """Min distance from the origin to edges clipped to the half-plane side*y >= 0."""
    x0, y0, x1, y1 = segs_local.T
    y0s, y1s = side * y0, side * y1
    keep = (y0s >= 0) | (y1s >= 0)
    x0, y0, x1, y1, y0s, y1s = x0[keep], y0[keep], x1[keep], y1[keep], y0s[keep], y1s[keep]
    if x0.size == 0:
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(y0s != y1s, y0s / (y0s - y1s), 0.0)
    xc = x0 + t * (x1 - x0)
    yc = y0 + t * (y1 - y0)
    ax = np.where(y0s >= 0, x0, xc)
    ay = np.where(y0s >= 0, y0, yc)
    bx = np.where(y1s >= 0, x1, xc)
    by = np.where(y1s >= 0, y1, yc)
    ex, ey = bx - ax, by - ay
    L2 = ex * ex + ey * ey
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.clip(np.where(L2 > 0, -(ax * ex + ay * ey) / L2, 0.0), 0.0, 1.0)
    return float(np.min(np.hypot(ax + u * ex, ay + u * ey)))


def distance_to_boundary(net: RoadNetwork, x: float, y: float, heading: float) -> tuple[float, float]:
    """Distances to the nearest drivable-area edge on the left and right; negative off-road."""
    segs = net.segments
    c, s = math.cos(heading), math.sin(heading)
    rx0, ry0 = segs[:, 0] - x, segs[:, 1] - y
    rx1, ry1 = segs[:, 2] - x, segs[:, 3] - y
    local = np.column_stack([c * rx0 + s * ry0, -s * rx0 + c * ry0, c * rx1 + s * ry1, -s * rx1 + c * ry1])
    left = _clipped_side_distance(local, 1.0)
    right = _clipped_side_distance(local, -1.0)
    if not net.contains(x, y):
        return -left, -right
    return left, right
