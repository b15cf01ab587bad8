"""Planar LiDAR raycasting and the idealized V2X channel."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import VehicleState, corners


@dataclass(frozen=True)
class LidarConfig:
    beam_count: int = 240
    max_range: float = 50.0
    noise_sigma: float = 0.01

    @property
    def angular_resolution(self) -> float:
        """Beam spacing in radians; the beams cover the full circle."""
        return 2.0 * math.pi / self.beam_count


@dataclass(frozen=True)
class V2XConfig:
    k: int = 4
    dropout: float = 0.0
    latency_steps: int = 0


@dataclass(frozen=True)
class V2XReport:
    dx: float = 0.0
    dy: float = 0.0
    speed: float = 0.0
    relative_heading: float = 0.0
    present: bool = False


def vehicle_segments(vehicles: Sequence[VehicleState]) -> np.ndarray:
    """Footprint edges of every vehicle as rows (x0, y0, x1, y1)."""
    if not vehicles:
        return np.empty((0, 4))
    out = []
    for v in vehicles:
        c = corners(v)
        out.append(np.hstack([c, np.roll(c, -1, axis=0)]))
    return np.vstack(out)


def beam_angles(ego: VehicleState, cfg: LidarConfig) -> np.ndarray:
    """Beam i points at ego heading + i * resolution (counterclockwise)."""
    return ego.heading + np.arange(cfg.beam_count) * cfg.angular_resolution


def ray_distances(ox: float, oy: float, angles: np.ndarray, segments: np.ndarray, max_range: float) -> np.ndarray:
    """Distance along each ray to the nearest segment hit, capped at ``max_range``."""
    out = np.full(angles.shape, max_range)
    if segments.size == 0:
        return out
    # drop edges whose endpoints are both beyond reach on the same side
    x0, y0, x1, y1 = segments.T
    near = ~(((x0 - ox > max_range) & (x1 - ox > max_range)) | ((ox - x0 > max_range) & (ox - x1 > max_range))
             | ((y0 - oy > max_range) & (y1 - oy > max_range)) | ((oy - y0 > max_range) & (oy - y1 > max_range)))
    seg = segments[near]
    if seg.size == 0:
        return out
    dx, dy = np.cos(angles)[:, None], np.sin(angles)[:, None]
    px, py = (seg[:, 0] - ox)[None, :], (seg[:, 1] - oy)[None, :]
    ex, ey = (seg[:, 2] - seg[:, 0])[None, :], (seg[:, 3] - seg[:, 1])[None, :]
    den = dx * ey - dy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (px * ey - py * ex) / den
        u = (px * dy - py * dx) / den
    hit = (den != 0) & (t >= 0) & (u >= 0) & (u <= 1)
    t = np.where(hit, t, np.inf)
    return np.minimum(t.min(axis=1), max_range)


def raycast(segments: np.ndarray, ego: VehicleState, cfg: LidarConfig = LidarConfig(),
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Normalized noisy LiDAR scan; ``segments`` must not contain the ego footprint."""
    d = ray_distances(ego.x, ego.y, beam_angles(ego, cfg), segments, cfg.max_range) / cfg.max_range
    if cfg.noise_sigma > 0 and rng is not None:
        d = d + rng.normal(0.0, cfg.noise_sigma, size=d.shape)
    return np.clip(d, 0.0, 1.0)


def v2x_query(others: Sequence[VehicleState], ego: VehicleState, k: int = 4) -> list[V2XReport]:
    """Anonymous motion data of the k nearest vehicles, nearest first, zero-padded."""
    reports = []
    if others:
        xy = np.array([(o.x, o.y) for o in others])
        dist = np.hypot(xy[:, 0] - ego.x, xy[:, 1] - ego.y)
        order = np.argsort(dist, kind="stable")[:k]
        c, s = math.cos(ego.heading), math.sin(ego.heading)
        for j in order:
            o = others[j]
            rx, ry = o.x - ego.x, o.y - ego.y
            dh = (o.heading - ego.heading + math.pi) % (2 * math.pi) - math.pi
            reports.append(V2XReport(c * rx + s * ry, -s * rx + c * ry, o.speed, dh, True))
    reports += [V2XReport()] * (k - len(reports))
    return reports
