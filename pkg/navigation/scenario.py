"""
Scenario files

A scenario is a JSON document::

    {
      "name": "two_block",
      "seed": 7,
      "max_time": 240,
      "map": {
        "sidewalks":  [[[x, y], ...], ...],
        "crosswalks": [[[x, y], ...], ...],
        "buildings":  [[[x, y], ...], ...],
        "curbs":      [{"points": [[x, y], ...], "drop": 0.1}],
        "obstacles":  [{"center": [x, y], "radius": 0.3}],
        "landmarks":  {"lab": [x, y]}
      },
      "robot": {"start": [x, y] | "landmark", "heading": 0.0},
      "waypoints": [{"position": [x, y] | "landmark", "tolerance": 0.5}, ...],
      "pedestrians": {
        "flows": [{"route": [[x, y], ...], "count": 8, "speed_mean": 1.2,
                   "speed_sd": 0.1, "group_size": [1, 3], "loop": true,
                   "spacing": 0.9, "radius": 0.3}],
        "scripted": [{"route": [[x, y], ...], "speed": 0.6, "start_time": 10,
                      "end_time": 30, "radius": 0.3, "loop": false,
                      "group": 1}]
      },
      "comparison_pedestrian": {"speed": 1.2},
      "parameters": {"curb": {"d_look": 3.0}, "avoidance.w_right": 0.3}
    }

Only ``map.sidewalks``, ``robot.start`` and ``waypoints`` are required.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from shapely.geometry import LineString, Polygon

from .config import NavigationConfig
from .exceptions import ScenarioError
from .geometry import as_points
from .mission import Mission, Waypoint
from .world import Curb, DiscObstacle, RobotState, SidewalkMap, SimPedestrian, World

logger = logging.getLogger(__name__)

SPAWN_CLEARANCE = 1.5


@dataclass(eq=False)
class FlowSpec:
    """Groups of pedestrians spread evenly along a shared route"""
    route: np.ndarray
    count: int
    speed_mean: float = 1.47
    speed_sd: float = 0.1
    group_size: Tuple[int, int] = (1, 1)
    loop: bool = True
    spacing: float = 0.9
    radius: float = 0.3


@dataclass(eq=False)
class ScriptedSpec:
    """One pedestrian that appears at ``start_time`` and leaves at ``end_time``"""
    route: np.ndarray
    speed: float
    start_time: float = 0.0
    end_time: float = math.inf
    radius: float = 0.3
    loop: bool = False
    group: Optional[int] = None


@dataclass(eq=False)
class Scenario:
    name: str
    map: SidewalkMap
    robot_start: np.ndarray
    waypoints: List[Waypoint]
    robot_heading: float = 0.0
    flows: List[FlowSpec] = field(default_factory=list)
    scripted: List[ScriptedSpec] = field(default_factory=list)
    comparison_speed: float = 1.47
    seed: int = 0
    parameters: Dict[str, Any] = field(default_factory=dict)
    source: Optional[str] = None

    def mission(self, config: NavigationConfig) -> Mission:
        return Mission(self.waypoints, goal_tolerance=config.mission.goal_tolerance)

    def robot(self, config: NavigationConfig) -> RobotState:
        return RobotState(
            float(self.robot_start[0]), float(self.robot_start[1]), self.robot_heading,
            radius=config.robot.radius, v_max=config.robot.v_max,
        )

    def comparison_pedestrian(self, pedestrian_id: int) -> SimPedestrian:
        """Pedestrian walking from the robot start through every waypoint"""
        route = np.vstack([w.position for w in self.waypoints])
        return SimPedestrian(
            id=pedestrian_id,
            position=self.robot_start.copy(),
            desired_speed=self.comparison_speed,
            route=route,
            velocity=_heading_velocity(self.robot_start, route[0], self.comparison_speed),
        )


def _heading_velocity(position: np.ndarray, target: np.ndarray, speed: float) -> np.ndarray:
    offset = target - position
    distance = np.linalg.norm(offset)
    return offset / distance * speed if distance > 1e-9 else np.zeros(2)


class _Reader:
    """Small helper that turns schema problems into located ScenarioErrors"""

    def __init__(self, source: str):
        self.source = source

    def fail(self, where: str, message: str):
        raise ScenarioError(f"{self.source}: {where}: {message}")

    def points(self, value, where: str, minimum: int = 1) -> np.ndarray:
        try:
            pts = as_points(value, 2)
        except (TypeError, ValueError) as exc:
            self.fail(where, f"expected a list of [x, y] points ({exc})")
        if len(pts) < minimum:
            self.fail(where, f"expected at least {minimum} point(s)")
        return pts

    def polygons(self, value, where: str) -> List[Polygon]:
        if not isinstance(value, list):
            self.fail(where, "expected a list of polygons")
        return [Polygon(self.points(v, f"{where}[{i}]", 3)) for i, v in enumerate(value)]

    def number(self, mapping: dict, key: str, where: str, default=None) -> float:
        value = mapping.get(key, default)
        if value is None:
            self.fail(where, f"missing '{key}'")
        try:
            return float(value)
        except (TypeError, ValueError):
            self.fail(where, f"'{key}' must be a number")


def _parse_map(reader: _Reader, data: dict) -> SidewalkMap:
    if not isinstance(data, dict):
        reader.fail('map', "expected an object")
    if 'sidewalks' not in data:
        reader.fail('map', "missing 'sidewalks'")

    curbs = []
    for i, curb in enumerate(data.get('curbs', [])):
        where = f"map.curbs[{i}]"
        curbs.append(Curb(LineString(reader.points(curb.get('points'), where, 2)),
                          reader.number(curb, 'drop', where, 0.1)))
    obstacles = []
    for i, obstacle in enumerate(data.get('obstacles', [])):
        where = f"map.obstacles[{i}]"
        obstacles.append(DiscObstacle(reader.points(obstacle.get('center'), where)[0],
                                      reader.number(obstacle, 'radius', where)))
    landmarks = {
        name: reader.points(position, f"map.landmarks.{name}")[0]
        for name, position in data.get('landmarks', {}).items()
    }
    try:
        return SidewalkMap(
            sidewalks=reader.polygons(data['sidewalks'], 'map.sidewalks'),
            crosswalks=reader.polygons(data.get('crosswalks', []), 'map.crosswalks'),
            buildings=reader.polygons(data.get('buildings', []), 'map.buildings'),
            curbs=curbs,
            obstacles=obstacles,
            landmarks=landmarks,
        )
    except ScenarioError as exc:
        reader.fail('map', str(exc))


def _position(reader: _Reader, value, landmarks: Dict[str, np.ndarray], where: str) -> np.ndarray:
    if isinstance(value, str):
        if value not in landmarks:
            reader.fail(where, f"unknown landmark '{value}'")
        return landmarks[value].copy()
    return reader.points(value, where)[0]


def parse_scenario(data: dict, source: str = '<scenario>') -> Scenario:
    """Validate a decoded scenario document"""
    reader = _Reader(source)
    if not isinstance(data, dict):
        reader.fail('document', "expected a JSON object")

    sidewalk_map = _parse_map(reader, data.get('map'))

    robot = data.get('robot') or {}
    if 'start' not in robot:
        reader.fail('robot', "missing 'start'")
    start = _position(reader, robot['start'], sidewalk_map.landmarks, 'robot.start')

    waypoints = []
    for i, entry in enumerate(data.get('waypoints') or []):
        where = f"waypoints[{i}]"
        if isinstance(entry, dict):
            tolerance = entry.get('tolerance')
            waypoints.append(Waypoint(
                _position(reader, entry.get('position'), sidewalk_map.landmarks, where),
                None if tolerance is None else reader.number(entry, 'tolerance', where),
            ))
        else:
            waypoints.append(Waypoint(_position(reader, entry, sidewalk_map.landmarks, where)))
    if not waypoints:
        reader.fail('waypoints', "at least one waypoint is required")

    pedestrians = data.get('pedestrians') or {}
    flows = []
    for i, flow in enumerate(pedestrians.get('flows', [])):
        where = f"pedestrians.flows[{i}]"
        sizes = flow.get('group_size', [1, 1])
        if isinstance(sizes, (int, float)):
            sizes = [sizes, sizes]
        if len(sizes) != 2 or int(sizes[0]) < 1 or int(sizes[1]) < int(sizes[0]):
            reader.fail(where, "group_size must be [min, max] with 1 <= min <= max")
        count = reader.number(flow, 'count', where)
        if count < 0 or not count.is_integer():
            reader.fail(where, "'count' must be a whole number >= 0")
        flows.append(FlowSpec(
            route=reader.points(flow.get('route'), f"{where}.route", 2),
            count=int(count),
            speed_mean=reader.number(flow, 'speed_mean', where, 1.47),
            speed_sd=reader.number(flow, 'speed_sd', where, 0.1),
            group_size=(int(sizes[0]), int(sizes[1])),
            loop=bool(flow.get('loop', True)),
            spacing=reader.number(flow, 'spacing', where, 0.9),
            radius=reader.number(flow, 'radius', where, 0.3),
        ))
    scripted = []
    for i, entry in enumerate(pedestrians.get('scripted', [])):
        where = f"pedestrians.scripted[{i}]"
        scripted.append(ScriptedSpec(
            route=reader.points(entry.get('route'), f"{where}.route"),
            speed=reader.number(entry, 'speed', where),
            start_time=reader.number(entry, 'start_time', where, 0.0),
            end_time=reader.number(entry, 'end_time', where, math.inf),
            radius=reader.number(entry, 'radius', where, 0.3),
            loop=bool(entry.get('loop', False)),
            group=None if entry.get('group') is None else int(reader.number(entry, 'group', where)),
        ))

    parameters = dict(data.get('parameters') or {})
    if 'max_time' in data:
        parameters.setdefault('mission.max_time', data['max_time'])

    comparison = data.get('comparison_pedestrian') or {}
    return Scenario(
        name=str(data.get('name', 'scenario')),
        map=sidewalk_map,
        robot_start=start,
        robot_heading=reader.number(robot, 'heading', 'robot', 0.0),
        waypoints=waypoints,
        flows=flows,
        scripted=scripted,
        comparison_speed=reader.number(comparison, 'speed', 'comparison_pedestrian', 1.47),
        seed=int(data.get('seed', 0)),
        parameters=parameters,
        source=source,
    )


def load_scenario(path: str) -> Scenario:
    """
    Read and validate a scenario file

    Raises:
        ScenarioError: with ``path:line:col`` for JSON syntax errors and
            ``path: field: message`` for schema errors
    """
    try:
        with open(path) as handle:
            text = handle.read()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    scenario = parse_scenario(data, path)
    logger.debug("Loaded scenario '%s' from %s", scenario.name, path)
    return scenario


def _point_at(route: np.ndarray, cumulative: np.ndarray, s: float) -> Tuple[np.ndarray, int]:
    """Point at arc length ``s`` and the index of the vertex that follows it"""
    index = int(np.clip(np.searchsorted(cumulative, s, side='right') - 1, 0, len(route) - 2))
    segment = cumulative[index + 1] - cumulative[index]
    fraction = 0.0 if segment <= 0 else (s - cumulative[index]) / segment
    return route[index] + fraction * (route[index + 1] - route[index]), index + 1


def spawn_flow(flow: FlowSpec, rng: np.random.Generator, first_id: int, first_group: int,
               keep_clear: Optional[np.ndarray] = None) -> List[SimPedestrian]:
    """
    Pedestrians of one flow, groups evenly spaced along the route

    Group sizes are drawn from ``group_size`` until ``count`` pedestrians
    exist; members share the group's speed and walk ``spacing`` apart.
    Pedestrians that would spawn within 1.5 m of ``keep_clear`` are skipped.
    """
    route = flow.route
    closed = np.vstack((route, route[:1])) if flow.loop else route
    cumulative = np.concatenate(([0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))))
    length = cumulative[-1]

    sizes = []
    while sum(sizes) < flow.count:
        sizes.append(int(rng.integers(flow.group_size[0], flow.group_size[1] + 1)))
    if sizes:
        sizes[-1] -= sum(sizes) - flow.count

    pedestrians = []
    next_id = first_id
    for g, size in enumerate(sizes):
        speed = float(np.clip(rng.normal(flow.speed_mean, flow.speed_sd), 0.2, 2.5))
        lead = g * length / len(sizes)
        if not flow.loop:
            lead = min(lead + (size - 1) * flow.spacing, length)
        for member in range(size):
            s = lead - member * flow.spacing
            s = s % length if flow.loop else min(max(s, 0.0), length)
            position, next_index = _point_at(closed, cumulative, s)
            next_index %= len(route)
            if keep_clear is not None and np.linalg.norm(position - keep_clear) < SPAWN_CLEARANCE:
                continue
            pedestrians.append(SimPedestrian(
                id=next_id,
                position=position,
                desired_speed=speed,
                route=route,
                route_index=next_index,
                velocity=_heading_velocity(position, route[next_index], speed),
                loop=flow.loop,
                radius=flow.radius,
                group=first_group + g,
            ))
            next_id += 1
    return pedestrians


def spawn_pedestrians(scenario: Scenario, rng: np.random.Generator) -> List[SimPedestrian]:
    pedestrians: List[SimPedestrian] = []
    group = 0
    for flow in scenario.flows:
        spawned = spawn_flow(flow, rng, len(pedestrians), group, scenario.robot_start)
        pedestrians.extend(spawned)
        group = max((p.group for p in spawned), default=group - 1) + 1
    # scripted group labels map to fresh ids after the flow groups
    labels = {}
    for spec in scenario.scripted:
        route = spec.route
        target = route[1] if len(route) > 1 else route[0]
        pedestrians.append(SimPedestrian(
            id=len(pedestrians),
            position=route[0].copy(),
            desired_speed=spec.speed,
            route=route,
            route_index=1 if len(route) > 1 else 0,
            velocity=_heading_velocity(route[0], target, spec.speed),
            loop=spec.loop,
            radius=spec.radius,
            start_time=spec.start_time,
            end_time=spec.end_time,
            group=None if spec.group is None else labels.setdefault(spec.group, group + len(labels)),
        ))
    return pedestrians


def build_world(scenario: Scenario, config: NavigationConfig, seed: int,
                with_robot: bool = True, comparison: bool = False) -> World:
    """
    Fresh world for one trial; the seed drives flow spawning and sensor noise

    With ``comparison`` the scenario's comparison pedestrian is added with
    the highest id, so it is ``world.pedestrians[-1]``.
    """
    rng = np.random.default_rng(seed)
    pedestrians = spawn_pedestrians(scenario, rng)
    if comparison:
        pedestrians.append(scenario.comparison_pedestrian(len(pedestrians)))
    robot = scenario.robot(config) if with_robot else None
    return World(scenario.map, pedestrians, robot, config, seed=int(rng.integers(0, 2**31 - 1)))
