import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import LineString, Point, Polygon
from shapely.ops import nearest_points, unary_union

from .config import NavigationConfig, SocialForceParams
from .exceptions import NoPath, ScenarioError
from .geometry import as_points, resample_polyline, rotation, wrap_angle

logger = logging.getLogger(__name__)

MAX_DT = 0.2
SPEED_LIMIT = 2.5


@dataclass(frozen=True, eq=False)
class DiscObstacle:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ScenarioError(f"obstacle radius must be positive, got {self.radius}")
        object.__setattr__(self, 'center', as_points(self.center, 2)[0])

    def polygon(self) -> Polygon:
        return Point(self.center).buffer(self.radius, quad_segs=8)


@dataclass(frozen=True, eq=False)
class Curb:
    """Curb polyline with the street-side drop below the sidewalk"""
    line: LineString
    drop: float = 0.1


@dataclass(eq=False)
class SidewalkMap:
    """
    Static world geometry

    The walkable area is the union of sidewalks and crosswalks, both at
    sidewalk level (z = 0). Buildings and obstacle discs are solid. Every
    other location is street, lying the drop of its nearest curb below the
    sidewalk.
    """
    sidewalks: List[Polygon]
    crosswalks: List[Polygon] = field(default_factory=list)
    buildings: List[Polygon] = field(default_factory=list)
    curbs: List[Curb] = field(default_factory=list)
    obstacles: List[DiscObstacle] = field(default_factory=list)
    landmarks: Dict[str, np.ndarray] = field(default_factory=dict)
    default_drop: float = 0.1

    def __post_init__(self):
        if not self.sidewalks:
            raise ScenarioError("map needs at least one sidewalk polygon")
        for kind, polygons in (('sidewalk', self.sidewalks), ('crosswalk', self.crosswalks),
                               ('building', self.buildings)):
            for index, polygon in enumerate(polygons):
                if not polygon.is_valid or polygon.is_empty:
                    raise ScenarioError(f"{kind} {index} is not a simple polygon")

        self.walkable = unary_union(self.sidewalks + self.crosswalks)
        self.solids = unary_union(self.buildings + [o.polygon() for o in self.obstacles])
        self.solid_boundary = LineString() if self.solids.is_empty else self.solids.boundary
        self.walkable_boundary = self.walkable.boundary
        shapely.prepare(self.walkable)
        shapely.prepare(self.solids)
        shapely.prepare(self.walkable_boundary)

    def is_walkable(self, points) -> np.ndarray:
        pts = as_points(points, 2)
        return shapely.intersects_xy(self.walkable, pts[:, 0], pts[:, 1])

    def in_solid(self, points) -> np.ndarray:
        pts = as_points(points, 2)
        if self.solids.is_empty:
            return np.zeros(len(pts), dtype=bool)
        return shapely.contains_xy(self.solids, pts[:, 0], pts[:, 1])

    def street_drop(self, points) -> np.ndarray:
        """Drop of the curb nearest to each point"""
        pts = as_points(points, 2)
        if not self.curbs:
            return np.full(len(pts), self.default_drop)
        geoms = shapely.points(pts)
        distances = np.stack([shapely.distance(curb.line, geoms) for curb in self.curbs])
        drops = np.array([curb.drop for curb in self.curbs])
        return drops[np.argmin(distances, axis=0)]

    def ground_height(self, points) -> np.ndarray:
        pts = as_points(points, 2)
        heights = -self.street_drop(pts)
        heights[self.is_walkable(pts)] = 0.0
        return heights


class GroundGrid:
    """
    Ground heights and solid cells on a fixed world grid

    Cells sit at integer multiples of ``resolution`` and cover the map
    bounds plus ``margin``. Maps whose grid would exceed ``max_cells`` are
    not cached and every window is sampled on demand.
    """

    def __init__(self, sidewalk_map: SidewalkMap, resolution: float, margin: float,
                 max_cells: int = 4_000_000):
        self.map = sidewalk_map
        self.resolution = resolution
        parts = [sidewalk_map.walkable, sidewalk_map.solids] + [curb.line for curb in sidewalk_map.curbs]
        minx, miny, maxx, maxy = unary_union([p for p in parts if not p.is_empty]).bounds
        self.ix0 = math.ceil((minx - margin) / resolution)
        self.iy0 = math.ceil((miny - margin) / resolution)
        ix1 = math.floor((maxx + margin) / resolution)
        iy1 = math.floor((maxy + margin) / resolution)
        self.cells = None
        if (ix1 - self.ix0 + 1) * (iy1 - self.iy0 + 1) > max_cells:
            logger.info("Map too large for a cached ground grid, sampling per frame")
            return

        xs = np.arange(self.ix0, ix1 + 1) * resolution
        ys = np.arange(self.iy0, iy1 + 1) * resolution
        points = np.stack(np.meshgrid(xs, ys), axis=-1)
        flat = points.reshape(-1, 2)
        solid = sidewalk_map.in_solid(flat).reshape(points.shape[:2])
        height = sidewalk_map.ground_height(flat).reshape(points.shape[:2])
        self.cells = (points, solid, height)

    def _sample(self, xs: np.ndarray, ys: np.ndarray):
        points = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
        solid = self.map.in_solid(points)
        return points, solid, self.map.ground_height(points)

    def window(self, center: np.ndarray, reach: float) -> Tuple[np.ndarray, np.ndarray]:
        """Non-solid cells within ``reach`` of ``center`` (row-major, y outer) and their heights"""
        res = self.resolution
        ix_lo, ix_hi = math.ceil((center[0] - reach) / res), math.floor((center[0] + reach) / res)
        iy_lo, iy_hi = math.ceil((center[1] - reach) / res), math.floor((center[1] + reach) / res)
        if self.cells is not None:
            points, solid, height = self.cells
            rows = slice(iy_lo - self.iy0, iy_hi - self.iy0 + 1)
            cols = slice(ix_lo - self.ix0, ix_hi - self.ix0 + 1)
            inside = (iy_lo >= self.iy0 and ix_lo >= self.ix0
                      and rows.stop <= points.shape[0] and cols.stop <= points.shape[1])
        else:
            inside = False
        if inside:
            points = points[rows, cols].reshape(-1, 2)
            solid = solid[rows, cols].ravel()
            height = height[rows, cols].ravel()
        else:
            points, solid, height = self._sample(np.arange(ix_lo, ix_hi + 1) * res,
                                                 np.arange(iy_lo, iy_hi + 1) * res)
        keep = (np.linalg.norm(points - center, axis=1) <= reach) & ~solid
        return points[keep], height[keep]


@dataclass
class RobotState:
    """Unicycle robot; ``heading`` in radians, wrapped to [-pi, pi)"""
    x: float
    y: float
    heading: float = 0.0
    linear: float = 0.0
    angular: float = 0.0
    radius: float = 0.4
    v_max: float = 0.8

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def pose(self) -> tuple:
        return self.x, self.y, self.heading

    def command(self, linear: float, angular: float):
        self.linear = float(np.clip(linear, -self.v_max, self.v_max))
        self.angular = float(angular)

    def advance(self, dt: float):
        self.x += self.linear * math.cos(self.heading) * dt
        self.y += self.linear * math.sin(self.heading) * dt
        self.heading = float(wrap_angle(self.heading + self.angular * dt))


@dataclass(eq=False)
class SimPedestrian:
    """Social-force pedestrian walking a route of points"""
    id: int
    position: np.ndarray
    desired_speed: float
    route: np.ndarray
    velocity: np.ndarray = None
    route_index: int = 0
    loop: bool = False
    radius: float = 0.3
    start_time: float = 0.0
    end_time: float = math.inf
    group: Optional[int] = None
    finished: bool = False

    def __post_init__(self):
        if not 0 < self.desired_speed <= SPEED_LIMIT:
            raise ScenarioError(f"pedestrian {self.id}: desired speed must be in (0, {SPEED_LIMIT}]")
        if not 0.2 <= self.radius <= 0.5:
            raise ScenarioError(f"pedestrian {self.id}: radius must be in [0.2, 0.5]")
        self.position = as_points(self.position, 2)[0].copy()
        self.route = as_points(self.route, 2)
        if len(self.route) == 0:
            raise ScenarioError(f"pedestrian {self.id}: route is empty")
        self.velocity = np.zeros(2) if self.velocity is None else as_points(self.velocity, 2)[0].copy()

    @property
    def goal(self) -> np.ndarray:
        return self.route[self.route_index]

    def is_active(self, t: float) -> bool:
        return not self.finished and self.start_time <= t < self.end_time

    def advance_route(self, reach: float):
        if np.linalg.norm(self.goal - self.position) >= reach:
            return
        if self.route_index + 1 < len(self.route):
            self.route_index += 1
        elif self.loop:
            self.route_index = 0
        else:
            self.finished = True
            self.velocity = np.zeros(2)


class Body(NamedTuple):
    position: np.ndarray
    radius: float


def social_force(pedestrian: SimPedestrian, neighbours: Sequence[Body] = (),
                 obstacles: Sequence[DiscObstacle] = (), region=None, region_boundary=None,
                 params: SocialForceParams = SocialForceParams()) -> np.ndarray:
    """
    Social-force acceleration of one pedestrian

    Goal attraction relaxes the velocity toward ``desired_speed`` along the
    direction of the next route point. Neighbours push with
    ``ped_a * exp((r_a + r_b - d) / ped_b)``; obstacle discs and the boundary
    of ``region`` push with ``obstacle_a * exp((r_a - d) / obstacle_b)``
    where d is the surface distance. The result is clamped to ``a_max``.

    Args:
        pedestrian (SimPedestrian): the pedestrian being driven
        neighbours (Sequence[Body]): other bodies, the robot included
        obstacles (Sequence[DiscObstacle]): static discs
        region: optional shapely geometry the pedestrian should stay inside
        region_boundary: precomputed ``region.boundary``
        params (SocialForceParams): model constants

    Returns:
        np.ndarray: acceleration in m/s^2
    """
    position = pedestrian.position
    to_goal = pedestrian.goal - position
    distance = np.linalg.norm(to_goal)
    desired = pedestrian.desired_speed * to_goal / distance if distance > 1e-9 else np.zeros(2)
    force = (desired - pedestrian.velocity) / params.tau

    if len(neighbours):
        others = np.array([body.position for body in neighbours], dtype=float)
        radii = np.array([body.radius for body in neighbours], dtype=float)
        diff = position - others
        d = np.linalg.norm(diff, axis=1)
        near = (d > 1e-9) & (d <= params.interaction_range)
        if near.any():
            magnitude = params.ped_a * np.exp((pedestrian.radius + radii[near] - d[near]) / params.ped_b)
            force = force + (magnitude[:, None] * diff[near] / d[near, None]).sum(axis=0)

    for obstacle in obstacles:
        diff = position - obstacle.center
        d = np.linalg.norm(diff)
        surface = d - obstacle.radius
        if d > 1e-9 and surface <= params.interaction_range:
            force = force + params.obstacle_a * math.exp((pedestrian.radius - surface) / params.obstacle_b) * diff / d

    if region is not None and not region.is_empty:
        boundary = region.boundary if region_boundary is None else region_boundary
        nearest = np.asarray(nearest_points(boundary, Point(position))[0].coords[0])
        diff = position - nearest
        d = np.linalg.norm(diff)
        if 1e-9 < d <= params.interaction_range:
            inward = diff / d if shapely.intersects_xy(region, position[0], position[1]) else -diff / d
            force = force + params.obstacle_a * math.exp((pedestrian.radius - d) / params.obstacle_b) * inward

    magnitude = np.linalg.norm(force)
    if magnitude > params.a_max:
        force = force * (params.a_max / magnitude)
    return force


@dataclass(frozen=True, eq=False)
class Detection:
    id: int
    position: np.ndarray
    velocity: np.ndarray


@dataclass(frozen=True, eq=False)
class SensorFrame:
    """
    One sensing instant

    ``cloud`` and ``scan`` are robot-local (x forward, y left, z up from the
    wheel-contact plane); detections are in the world frame.
    """
    timestamp: float
    cloud: np.ndarray
    detections: List[Detection]
    scan: List[np.ndarray]


@dataclass
class GroundTruth:
    min_clearance: float = math.inf
    collisions: int = 0
    curb_crossings: int = 0


class World:
    """
    Fixed-step sidewalk simulation

    The robot moves first each step, then active pedestrians in id order.
    A pedestrian move that would overlap another body more deeply or leave
    the walkable area is rejected for that step (the pedestrian stops).
    """

    def __init__(self, sidewalk_map: SidewalkMap, pedestrians: Iterable[SimPedestrian],
                 robot: Optional[RobotState] = None,
                 config: Optional[NavigationConfig] = None, seed: int = 0):
        self.map = sidewalk_map
        self.robot = robot
        self.pedestrians = sorted(pedestrians, key=lambda p: p.id)
        self.config = config or NavigationConfig()
        self.rng = np.random.default_rng(seed)
        self.time = 0.0
        self.truth = GroundTruth()
        self._contacts = set()
        self._ground: Optional[GroundGrid] = None
        self._robot_on_sidewalk = bool(self.map.is_walkable(robot.position)[0]) if robot else True

    @property
    def dt(self) -> float:
        return self.config.world.dt

    def active_pedestrians(self) -> List[SimPedestrian]:
        return [p for p in self.pedestrians if p.is_active(self.time)]

    def pedestrian(self, pedestrian_id: int) -> SimPedestrian:
        for candidate in self.pedestrians:
            if candidate.id == pedestrian_id:
                return candidate
        raise KeyError(pedestrian_id)

    def step(self, dt: Optional[float] = None):
        """Advance the world by ``dt`` seconds (default ``world.dt``)"""
        dt = self.dt if dt is None else dt
        if not 0 < dt <= MAX_DT:
            raise ValueError(f"dt must be in (0, {MAX_DT}], got {dt}")

        params = self.config.social_force
        active = self.active_pedestrians()
        robot_body = [Body(self.robot.position, self.robot.radius)] if self.robot else []
        accelerations = []
        for ped in active:
            # members of one walking group keep formation instead of pushing apart
            neighbours = [
                Body(o.position, o.radius) for o in active
                if o is not ped and (ped.group is None or o.group != ped.group)
            ] + robot_body
            accelerations.append(
                social_force(ped, neighbours, self.map.obstacles, self.map.walkable,
                             self.map.walkable_boundary, params)
            )

        if self.robot:
            self.robot.advance(dt)

        for ped, acceleration in zip(active, accelerations):
            velocity = ped.velocity + acceleration * dt
            speed = np.linalg.norm(velocity)
            limit = params.max_speed_factor * ped.desired_speed
            if speed > limit:
                velocity = velocity * (limit / speed)
            proposed = ped.position + velocity * dt

            if self._move_allowed(ped, proposed, active):
                ped.position = proposed
                ped.velocity = velocity
            else:
                ped.velocity = np.zeros(2)
            ped.advance_route(params.route_reach)

        self.time = round(self.time + dt, 9)
        if self.robot:
            self._update_truth()

    def _move_allowed(self, ped: SimPedestrian, proposed: np.ndarray,
                      active: List[SimPedestrian]) -> bool:
        bodies = [Body(o.position, o.radius) for o in active if o is not ped]
        if self.robot:
            bodies.append(Body(self.robot.position, self.robot.radius))
        for body in bodies:
            contact = ped.radius + body.radius
            new_distance = np.linalg.norm(proposed - body.position)
            if new_distance < contact and new_distance < np.linalg.norm(ped.position - body.position):
                return False
        if not self.map.is_walkable(proposed)[0] and self.map.is_walkable(ped.position)[0]:
            return False
        return True

    def _update_truth(self):
        robot = self.robot
        touching = set()
        for ped in self.active_pedestrians():
            gap = np.linalg.norm(ped.position - robot.position) - robot.radius - ped.radius
            self.truth.min_clearance = min(self.truth.min_clearance, float(gap))
            if gap < 0:
                touching.add(ped.id)
        new_contacts = touching - self._contacts
        if new_contacts:
            self.truth.collisions += len(new_contacts)
            logger.warning("Robot collided with pedestrian(s) %s at t=%.2f", sorted(new_contacts), self.time)
        self._contacts = touching

        on_sidewalk = bool(self.map.is_walkable(robot.position)[0])
        if self._robot_on_sidewalk and not on_sidewalk:
            self.truth.curb_crossings += 1
            logger.warning("Robot left the sidewalk at (%.2f, %.2f)", robot.x, robot.y)
        self._robot_on_sidewalk = on_sidewalk

    def sense(self) -> SensorFrame:
        """Simulated detections, 3D cloud and 2D scan around the robot"""
        if self.robot is None:
            raise ValueError("sense() needs a robot in the world")
        return SensorFrame(
            timestamp=self.time,
            cloud=self._sense_cloud(),
            detections=self._sense_pedestrians(),
            scan=self._sense_scan(),
        )

    def _sense_pedestrians(self) -> List[Detection]:
        params = self.config.world
        robot = self.robot
        half_fov = math.radians(params.detection_fov_deg) / 2.0
        detections = []
        for ped in self.active_pedestrians():
            offset = ped.position - robot.position
            distance = float(np.linalg.norm(offset))
            if distance > params.detection_range:
                continue
            bearing = abs(float(wrap_angle(math.atan2(offset[1], offset[0]) - robot.heading)))
            if distance > 0 and bearing > half_fov:
                continue
            position = ped.position.copy()
            if params.detection_noise > 0:
                position = position + self.rng.normal(0.0, params.detection_noise, 2)
            detections.append(Detection(ped.id, position, ped.velocity.copy()))
        return detections

    def _to_local(self, points: np.ndarray) -> np.ndarray:
        return (points - self.robot.position) @ rotation(self.robot.heading)

    def _sense_cloud(self) -> np.ndarray:
        params = self.config.world
        robot = self.robot
        reach = params.lidar_range
        res = params.cloud_resolution

        if self._ground is None:
            self._ground = GroundGrid(self.map, res, reach)
        grid, heights = self._ground.window(robot.position, reach)
        ground = np.column_stack((self._to_local(grid), heights))

        surfaces = []
        view = Point(robot.x, robot.y).buffer(reach)
        for piece in _line_pieces(self.map.solid_boundary.intersection(view)):
            samples = resample_polyline(piece, res)
            local = self._to_local(samples)
            for z in np.arange(res, params.obstacle_height + 1e-9, res):
                surfaces.append(np.column_stack((local, np.full(len(local), z))))

        return np.vstack([ground] + surfaces) if surfaces else ground

    def _sense_scan(self) -> List[np.ndarray]:
        params = self.config.world
        view = Point(self.robot.x, self.robot.y).buffer(params.scan_range)
        return [
            self._to_local(resample_polyline(piece, params.scan_resolution))
            for piece in _line_pieces(self.map.solid_boundary.intersection(view))
        ]


def _line_pieces(geometry) -> List[np.ndarray]:
    """Coordinates of every line component of a shapely geometry"""
    if geometry.is_empty:
        return []
    if hasattr(geometry, 'geoms'):
        pieces = []
        for part in geometry.geoms:
            pieces.extend(_line_pieces(part))
        return pieces
    if geometry.geom_type in ('LineString', 'LinearRing'):
        return [np.asarray(geometry.coords)[:, :2]]
    return []


def free_space(sidewalk_map: SidewalkMap, radius: float):
    """Walkable area shrunk by ``radius`` with obstacles inflated by ``radius``"""
    free = sidewalk_map.walkable.buffer(-radius, join_style='mitre')
    if sidewalk_map.obstacles:
        inflated = unary_union([
            Point(o.center).buffer(o.radius + radius, quad_segs=4) for o in sidewalk_map.obstacles
        ])
        free = free.difference(inflated)
    return free


def _vertices(geometry) -> List[tuple]:
    polygons = geometry.geoms if hasattr(geometry, 'geoms') else [geometry]
    vertices = []
    for polygon in polygons:
        if polygon.is_empty or polygon.geom_type != 'Polygon':
            continue
        for ring in [polygon.exterior, *polygon.interiors]:
            vertices.extend(tuple(c) for c in list(ring.coords)[:-1])
    return vertices


def shortest_path(sidewalk_map: SidewalkMap, start, goal, radius: float = 0.4) -> np.ndarray:
    """
    Shortest polyline from start to goal inside the sidewalk free space

    Visibility graph over the vertices of the walkable area shrunk by the
    robot radius, searched with Dijkstra. A start or goal inside the
    walkable area but closer than ``radius`` to its edge is snapped to the
    nearest free point.

    Args:
        sidewalk_map (SidewalkMap): map to plan in
        start: start position (x, y)
        goal: goal position (x, y)
        radius (float): robot radius used to inflate the boundary

    Returns:
        np.ndarray: (M, 2) path vertices from start to goal
    """
    start = as_points(start, 2)[0]
    goal = as_points(goal, 2)[0]
    walkable = sidewalk_map.is_walkable(np.vstack((start, goal)))
    if not walkable[0]:
        raise NoPath(f"start {tuple(start)} is outside the sidewalk")
    if not walkable[1]:
        raise NoPath(f"goal {tuple(goal)} is outside the sidewalk")

    free = free_space(sidewalk_map, radius)
    if free.is_empty:
        raise NoPath("sidewalk is narrower than the robot")
    tolerant = free.buffer(1e-7)
    shapely.prepare(tolerant)

    def snap(point: np.ndarray) -> np.ndarray:
        if tolerant.covers(Point(point)):
            return point
        return np.asarray(nearest_points(free, Point(point))[0].coords[0])

    nodes = [tuple(snap(start)), tuple(snap(goal))] + _vertices(free)
    count = len(nodes)
    coords = np.array(nodes)

    pairs = [(i, j) for i in range(count) for j in range(i + 1, count)]
    lines = shapely.linestrings([[nodes[i], nodes[j]] for i, j in pairs])
    visible = shapely.covers(tolerant, lines)

    adjacency: List[List[tuple]] = [[] for _ in range(count)]
    for (i, j), ok in zip(pairs, visible):
        if ok:
            length = float(np.linalg.norm(coords[i] - coords[j]))
            adjacency[i].append((j, length))
            adjacency[j].append((i, length))

    distance = [math.inf] * count
    previous = [-1] * count
    distance[0] = 0.0
    queue = [(0.0, 0)]
    while queue:
        d, node = heapq.heappop(queue)
        if d > distance[node]:
            continue
        if node == 1:
            break
        for neighbour, length in adjacency[node]:
            candidate = d + length
            if candidate < distance[neighbour]:
                distance[neighbour] = candidate
                previous[neighbour] = node
                heapq.heappush(queue, (candidate, neighbour))

    if math.isinf(distance[1]):
        raise NoPath(f"goal {tuple(goal)} is not reachable from {tuple(start)}")

    path = [1]
    while path[-1] != 0:
        path.append(previous[path[-1]])
    path.reverse()
    logger.debug("Shortest path: %d vertices, %.2f m", len(path), distance[1])
    return coords[path]
