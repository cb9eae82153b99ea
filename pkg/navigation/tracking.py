import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import TrackingParams
from .geometry import as_points

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Track:
    """A persistent pedestrian hypothesis"""
    id: int
    position: np.ndarray
    last_seen: float
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    age: int = 1
    observations: int = 1

    @property
    def speed(self) -> float:
        return math.hypot(self.velocity[0], self.velocity[1])


@dataclass(frozen=True, eq=False)
class Group:
    """Coherently moving tracks; ``id`` is the lowest member track id"""
    id: int
    members: Tuple[int, ...]
    velocity: np.ndarray
    closest: np.ndarray
    closest_id: int

    @property
    def speed(self) -> float:
        return math.hypot(self.velocity[0], self.velocity[1])

    @property
    def size(self) -> int:
        return len(self.members)


def _detection_position(detection) -> np.ndarray:
    position = getattr(detection, 'position', detection)
    return as_points(position, 2)[0]


def update_tracks(tracks: Sequence[Track], detections: Sequence, t: float,
                  params: TrackingParams = TrackingParams(),
                  next_id: Optional[int] = None) -> Tuple[List[Track], int]:
    """
    Associate one frame of detections with the existing tracks

    Tracks are predicted forward at constant velocity; (track, detection)
    pairs closer than ``gate_radius`` are matched greedily by increasing
    distance. Unmatched detections start new tracks and tracks unseen for
    longer than ``stale_time`` are dropped.

    Args:
        tracks (Sequence[Track]): current tracks (not modified)
        detections (Sequence): detection objects with ``position``, or raw positions
        t (float): frame timestamp in seconds
        params (TrackingParams): gating and smoothing constants
        next_id (Optional[int]): id for the next new track

    Returns:
        Tuple[List[Track], int]: updated tracks sorted by id, and the next free id
    """
    tracks = [replace(track, position=track.position.copy(), velocity=track.velocity.copy())
              for track in tracks]
    if next_id is None:
        next_id = max((track.id for track in tracks), default=-1) + 1
    positions = [_detection_position(d) for d in detections]

    candidates = []
    if tracks and positions:
        predicted = np.array([track.position + track.velocity * (t - track.last_seen) for track in tracks])
        offsets = np.asarray(positions)[None, :, :] - predicted[:, None, :]
        distances = np.sqrt((offsets ** 2).sum(axis=-1))
        for ti, di in zip(*np.nonzero(distances <= params.gate_radius)):
            candidates.append((float(distances[ti, di]), tracks[ti].id, int(di), int(ti)))
    candidates.sort()

    matched_tracks = set()
    matched_detections = set()
    for _, _, di, ti in candidates:
        if ti in matched_tracks or di in matched_detections:
            continue
        matched_tracks.add(ti)
        matched_detections.add(di)

        track = tracks[ti]
        elapsed = t - track.last_seen
        if elapsed > 0:
            raw = (positions[di] - track.position) / elapsed
            if track.observations == 1:
                track.velocity = raw
            else:
                track.velocity = params.smoothing * raw + (1.0 - params.smoothing) * track.velocity
        track.position = positions[di].copy()
        track.last_seen = t
        track.age += 1
        track.observations += 1

    for di, position in enumerate(positions):
        if di not in matched_detections:
            tracks.append(Track(id=next_id, position=position.copy(), last_seen=t))
            next_id += 1

    kept = [track for track in tracks if t - track.last_seen <= params.stale_time]
    if len(kept) < len(tracks):
        logger.debug("Dropped %d stale track(s) at t=%.2f", len(tracks) - len(kept), t)
    return sorted(kept, key=lambda track: track.id), next_id


def _coherent(a: Track, b: Track, params: TrackingParams) -> bool:
    if np.linalg.norm(a.position - b.position) > params.group_distance:
        return False
    if abs(a.speed - b.speed) > params.group_speed_delta:
        return False
    if a.speed >= params.heading_min_speed and b.speed >= params.heading_min_speed:
        cross = a.velocity[0] * b.velocity[1] - a.velocity[1] * b.velocity[0]
        dot = float(a.velocity @ b.velocity)
        if abs(math.degrees(math.atan2(cross, dot))) > params.group_heading_delta_deg:
            return False
    return True


def form_groups(tracks: Sequence[Track], robot_position,
                params: TrackingParams = TrackingParams()) -> List[Group]:
    """
    Partition tracks into coherent-motion groups

    Two tracks are linked when they are within ``group_distance``, their
    speeds differ by at most ``group_speed_delta`` and their headings by at
    most ``group_heading_delta_deg`` (headings are only compared when both
    move faster than ``heading_min_speed``). Groups are the transitive
    closure of the links.

    Returns:
        List[Group]: groups sorted by id
    """
    ordered = sorted(tracks, key=lambda track: track.id)
    parent = list(range(len(ordered)))

    def root(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            if _coherent(ordered[i], ordered[j], params):
                ri, rj = root(i), root(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    clusters = {}
    for i in range(len(ordered)):
        clusters.setdefault(root(i), []).append(ordered[i])

    robot = as_points(robot_position, 2)[0]
    groups = []
    for members in clusters.values():
        closest = min(members, key=lambda m: (float(np.linalg.norm(m.position - robot)), m.id))
        groups.append(Group(
            id=min(m.id for m in members),
            members=tuple(m.id for m in members),
            velocity=np.mean([m.velocity for m in members], axis=0),
            closest=closest.position.copy(),
            closest_id=closest.id,
        ))
    return sorted(groups, key=lambda group: group.id)


class PedestrianTracker:
    """Owns track state and id allocation for one mission loop"""

    def __init__(self, params: TrackingParams = TrackingParams()):
        self.params = params
        self.tracks: List[Track] = []
        self._next_id = 0

    def update(self, detections: Sequence, t: float) -> List[Track]:
        self.tracks, self._next_id = update_tracks(self.tracks, detections, t, self.params, self._next_id)
        return self.tracks

    def visible_tracks(self, t: float) -> List[Track]:
        """Tracks refreshed by the frame at time ``t``"""
        return [track for track in self.tracks if track.last_seen == t]
