"""Synthetic lane-graph maps: straight, curve, intersection, lane-change."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LANE_WIDTH = 3.5
POINT_SPACING = 2.0

# lane_type one-hot indices
LT_STRAIGHT, LT_CURVE, LT_CONNECTOR, LT_EXIT = 0, 1, 2, 3


@dataclass
class Lane:
    lane_id: int
    centerline: np.ndarray  # (N, 2)
    speed_limit: float
    width: float = LANE_WIDTH
    lane_type: int = LT_STRAIGHT
    tl_state: float = 1.0  # 1 = green/none, 0 = red
    successors: list[int] = field(default_factory=list)

    def length(self) -> float:
        seg = np.diff(self.centerline, axis=0)
        return float(np.hypot(seg[:, 0], seg[:, 1]).sum())


@dataclass
class LaneGraph:
    lanes: list[Lane]

    def lane(self, lane_id: int) -> Lane:
        for ln in self.lanes:
            if ln.lane_id == lane_id:
                return ln
        raise KeyError(f"no lane {lane_id}")

    def chain_centerline(self, lane_ids: list[int]) -> np.ndarray:
        """Concatenate centerlines of a lane chain into one polyline."""
        pts = [self.lane(lane_ids[0]).centerline]
        for lid in lane_ids[1:]:
            cl = self.lane(lid).centerline
            # drop duplicated joint point
            if np.allclose(cl[0], pts[-1][-1]):
                cl = cl[1:]
            pts.append(cl)
        return np.concatenate(pts, axis=0)


def _line(p0, p1, spacing=POINT_SPACING) -> np.ndarray:
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    n = max(2, int(np.ceil(np.linalg.norm(p1 - p0) / spacing)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return p0 + t * (p1 - p0)


def _arc(center, radius, a0, a1, spacing=POINT_SPACING) -> np.ndarray:
    length = abs(a1 - a0) * radius
    n = max(2, int(np.ceil(length / spacing)) + 1)
    ang = np.linspace(a0, a1, n)
    return np.stack([center[0] + radius * np.cos(ang),
                     center[1] + radius * np.sin(ang)], axis=1)


def straight_map(n_lanes: int = 2, length: float = 400.0,
                 speed_limit: float = 13.0) -> LaneGraph:
    lanes = []
    for i in range(n_lanes):
        y = i * LANE_WIDTH
        lanes.append(Lane(i, _line((-length / 2, y), (length / 2, y)), speed_limit))
    return LaneGraph(lanes)


def curve_map(radius: float = 120.0, n_lanes: int = 2,
              speed_limit: float = 11.0, sweep: float = 2.2) -> LaneGraph:
    lanes = []
    for i in range(n_lanes):
        r = radius + i * LANE_WIDTH
        cl = _arc((0.0, radius), r, -np.pi / 2, -np.pi / 2 + sweep)
        lanes.append(Lane(i, cl, speed_limit, lane_type=LT_CURVE))
    return LaneGraph(lanes)


def intersection_map(arm: float = 160.0, speed_limit: float = 11.0) -> LaneGraph:
    """Two crossing roads. The east-west road has a green light; the
    north-south road is held at red, so crossing traffic queues at the line."""
    half = 2 * LANE_WIDTH  # clear box around the crossing
    lanes = [
        # ego road: westbound approach, crossing connector, exit (ids 0,1,2)
        Lane(0, _line((-arm, 0.0), (-half, 0.0)), speed_limit, successors=[1]),
        Lane(1, _line((-half, 0.0), (half, 0.0)), speed_limit,
             lane_type=LT_CONNECTOR, successors=[2]),
        Lane(2, _line((half, 0.0), (arm, 0.0)), speed_limit, lane_type=LT_EXIT),
        # right-turn connector from the approach (id 3) plus its exit (id 4)
        Lane(3, _arc((-half, -half), half, np.pi / 2, 0.0), speed_limit * 0.6,
             lane_type=LT_CONNECTOR, successors=[4]),
        Lane(4, _line((0.0, -half), (0.0, -arm)), speed_limit, lane_type=LT_EXIT),
        # crossing road (red light): southbound approach and exit (ids 5,6)
        Lane(5, _line((LANE_WIDTH, arm), (LANE_WIDTH, half)), speed_limit,
             tl_state=0.0, successors=[6]),
        Lane(6, _line((LANE_WIDTH, half), (LANE_WIDTH, -arm)), speed_limit,
             tl_state=0.0, lane_type=LT_EXIT),
        # parallel same-direction lane on the ego road (id 7)
        Lane(7, _line((-arm, LANE_WIDTH), (arm, LANE_WIDTH)), speed_limit),
    ]
    return LaneGraph(lanes)


def lane_change_map(n_lanes: int = 3, length: float = 400.0,
                    speed_limit: float = 13.0) -> LaneGraph:
    return straight_map(n_lanes=n_lanes, length=length, speed_limit=speed_limit)


MAP_BUILDERS = {
    "straight": straight_map,
    "curve": curve_map,
    "intersection": intersection_map,
    "lane-change": lane_change_map,
}


class Path:
    """Arc-length parametrized polyline."""

    def __init__(self, polyline: np.ndarray):
        pts = np.asarray(polyline, dtype=np.float64)
        if pts.shape[0] >= 2:
            seg_len = np.hypot(*np.diff(pts, axis=0).T)
            keep = np.concatenate([[True], seg_len > 1e-9])
            if keep.sum() >= 2:
                pts = pts[keep]  # drop zero-length segments (e.g. stopped logs)
            else:
                pts = pts[:2]    # fully degenerate: keep one tiny segment
        self.points = pts
        seg = np.diff(self.points, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.s = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.length = float(self.s[-1])

    def position(self, s) -> np.ndarray:
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.length)
        x = np.interp(s, self.s, self.points[:, 0])
        y = np.interp(s, self.s, self.points[:, 1])
        return np.stack([x, y], axis=-1)

    def heading(self, s) -> np.ndarray:
        """(sin, cos) of the tangent at arc position s."""
        s = np.atleast_1d(np.clip(np.asarray(s, dtype=np.float64), 0.0, self.length))
        idx = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 2)
        seg = self.points[idx + 1] - self.points[idx]
        norm = np.hypot(seg[:, 0], seg[:, 1])
        zero = norm <= 1e-12
        norm[zero] = 1.0
        out = np.stack([seg[:, 1] / norm, seg[:, 0] / norm], axis=-1)  # (sin, cos)
        out[zero] = (0.0, 1.0)
        return out

    def project(self, point: np.ndarray) -> tuple[float, float]:
        """(arc length, lateral distance) of the closest point on the path."""
        p = np.asarray(point, dtype=np.float64)
        a = self.points[:-1]
        b = self.points[1:]
        ab = b - a
        denom = np.maximum((ab * ab).sum(axis=1), 1e-12)
        t = np.clip(((p - a) * ab).sum(axis=1) / denom, 0.0, 1.0)
        closest = a + t[:, None] * ab
        d2 = ((closest - p) ** 2).sum(axis=1)
        i = int(np.argmin(d2))
        s = self.s[i] + t[i] * (self.s[i + 1] - self.s[i])
        return float(s), float(np.sqrt(d2[i]))


def point_to_polyline_distance(point: np.ndarray, polyline: np.ndarray) -> float:
    """Minimum distance from a point to a polyline (segment-wise projection)."""
    p = np.asarray(point, dtype=np.float64)
    a = polyline[:-1]
    b = polyline[1:]
    ab = b - a
    denom = (ab * ab).sum(axis=1)
    denom = np.where(denom == 0, 1.0, denom)
    t = np.clip(((p - a) * ab).sum(axis=1) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = np.hypot(*(p - proj).T)
    return float(d.min())
