import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from .avoidance import NavAction, STOP, inject_statics, make_state, policy
from .config import NavigationConfig
from .curb import CurbEstimate, estimate_curb, height_filter
from .exceptions import NoCurb
from .geometry import as_points, polyline_length, rotation
from .surfing import SurfContext, SurfDecision, surf_cycle
from .tracking import Group, PedestrianTracker, form_groups
from .world import World

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['t', 'x', 'y', 'heading', 'mode', 'subgoal_x', 'subgoal_y', 'group_id']


class Mode(str, Enum):
    SURFING = 'Surfing'
    CURB_FOLLOWING = 'CurbFollowing'
    COMPLETE = 'Complete'
    BLOCKED = 'Blocked'


class ModeOverride(str, Enum):
    AUTO = 'auto'
    SURFING = 'surfing'
    CURB = 'curb'


class Outcome(str, Enum):
    COMPLETE = 'Complete'
    TIMEOUT = 'Timeout'
    BLOCKED = 'Blocked'
    NO_PATH = 'NoPath'


@dataclass(frozen=True, eq=False)
class Waypoint:
    position: np.ndarray
    tolerance: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'position', as_points(self.position, 2)[0])
        if self.tolerance is not None and self.tolerance <= 0:
            raise ValueError("waypoint tolerance must be positive")


@dataclass(frozen=True, eq=False)
class Mission:
    """Ordered waypoints; ``current_index`` is 0-based"""
    waypoints: Sequence[Waypoint]
    goal_tolerance: float = 0.5
    current_index: int = 0
    mode: Mode = Mode.CURB_FOLLOWING

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("a mission needs at least one waypoint")
        object.__setattr__(self, 'waypoints', tuple(self.waypoints))

    @property
    def global_goal(self) -> np.ndarray:
        return self.waypoints[-1].position

    @property
    def active(self) -> Waypoint:
        return self.waypoints[self.current_index]

    @property
    def complete(self) -> bool:
        return self.mode == Mode.COMPLETE

    def tolerance(self, waypoint: Waypoint) -> float:
        return self.goal_tolerance if waypoint.tolerance is None else waypoint.tolerance


def check_arrival(mission: Mission, robot_position) -> Mission:
    """Advance to the next waypoint, or complete, once inside the active waypoint's tolerance"""
    if mission.complete:
        return mission
    robot = as_points(robot_position, 2)[0]
    waypoint = mission.active
    if np.linalg.norm(robot - waypoint.position) >= mission.tolerance(waypoint):
        return mission
    if mission.current_index + 1 < len(mission.waypoints):
        logger.info("Reached waypoint %d of %d", mission.current_index + 1, len(mission.waypoints))
        return replace(mission, current_index=mission.current_index + 1)
    logger.info("Reached the goal")
    return replace(mission, mode=Mode.COMPLETE)


@dataclass(frozen=True, eq=False)
class Arbitration:
    mode: Mode
    subgoal: Optional[np.ndarray] = None
    decision: SurfDecision = field(default_factory=SurfDecision)


def arbitrate(groups: Sequence[Group], curb: Optional[CurbEstimate], ctx: SurfContext,
              d_look: float = 3.0, override: ModeOverride = ModeOverride.AUTO,
              previous_group: Optional[int] = None, switch_margin: float = 0.0) -> Arbitration:
    """
    Choose the subgoal source for this cycle

    Group surfing wins whenever a group passes the filter and selection.
    Otherwise a curb estimate gives a CurbFollowing subgoal; within
    ``d_look`` of the waypoint the waypoint itself is the subgoal. With
    neither source the robot is Blocked.

    Args:
        groups (Sequence[Group]): groups formed from this cycle's tracks
        curb (Optional[CurbEstimate]): this cycle's curb estimate, if any
        ctx (SurfContext): robot, waypoint and speed limit
        d_look (float): curb lookahead distance
        override (ModeOverride): restrict arbitration to one planner
        previous_group (Optional[int]): group followed in the previous cycle
        switch_margin (float): minimum speed gain before switching groups

    Returns:
        Arbitration: mode, subgoal and the surfing decision
    """
    override = ModeOverride(override)
    if override != ModeOverride.CURB:
        decision = surf_cycle(groups, ctx, previous_group, switch_margin)
        if decision:
            return Arbitration(Mode.SURFING, decision.subgoal, decision)

    if override != ModeOverride.SURFING and curb is not None:
        if np.linalg.norm(ctx.x_i) < d_look:
            return Arbitration(Mode.CURB_FOLLOWING, ctx.waypoint.copy())
        return Arbitration(Mode.CURB_FOLLOWING, curb.subgoal)

    return Arbitration(Mode.BLOCKED)


@dataclass
class EpisodeResult:
    outcome: Outcome
    trace: pd.DataFrame
    duration: float
    min_clearance: float
    collisions: int
    curb_crossings: int
    blocked_cycles: int
    waypoints_reached: int

    @property
    def path_length(self) -> float:
        return polyline_length(self.trace[['x', 'y']].to_numpy())

    def summary(self) -> dict:
        return {
            'outcome': self.outcome.value,
            'duration': round(self.duration, 6),
            'min_clearance': round(self.min_clearance, 6) if math.isfinite(self.min_clearance) else None,
            'collisions': self.collisions,
            'curb_crossings': self.curb_crossings,
            'blocked_cycles': self.blocked_cycles,
            'waypoints_reached': self.waypoints_reached,
            'path_length': round(self.path_length, 6),
        }


class EpisodeLoop:
    """
    Sense, track, arbitrate, avoid and step at the control rate

    The loop owns the world, the tracker and the mission for one episode.
    """

    def __init__(self, world: World, mission: Mission, config: NavigationConfig,
                 override: ModeOverride = ModeOverride.AUTO):
        if world.robot is None:
            raise ValueError("an episode needs a robot in the world")
        self.world = world
        self.mission = mission
        self.config = config
        self.override = ModeOverride(override)
        self.tracker = PedestrianTracker(config.tracking)
        self.previous_group: Optional[int] = None
        self.rows: List[list] = []
        self.blocked_cycles = 0

    def _log(self, mode: Mode, subgoal: Optional[np.ndarray], group_id: Optional[int]):
        robot = self.world.robot
        sx, sy = (float(subgoal[0]), float(subgoal[1])) if subgoal is not None else (math.nan, math.nan)
        self.rows.append([
            round(self.world.time, 9), robot.x, robot.y, robot.heading, mode.value, sx, sy,
            -1 if group_id is None else int(group_id),
        ])

    def _scan_world(self, scan: Sequence[np.ndarray]) -> List[np.ndarray]:
        robot = self.world.robot
        turn = rotation(robot.heading)
        return [piece @ turn.T + robot.position for piece in scan]

    def cycle(self) -> Mode:
        """Run one control cycle and return the logged mode"""
        world = self.world
        robot = world.robot
        config = self.config

        frame = world.sense()
        self.tracker.update(frame.detections, frame.timestamp)
        visible = self.tracker.visible_tracks(frame.timestamp)
        groups = form_groups(visible, robot.position, config.tracking)
        ctx = SurfContext(robot.position, self.mission.active.position, robot.v_max)

        curb = None
        if self.override != ModeOverride.SURFING:
            try:
                filtered = height_filter(frame.cloud, config.curb.height_epsilon)
                curb = estimate_curb(filtered, robot.pose, ctx.waypoint, config.curb)
            except NoCurb as exc:
                logger.debug("No curb at t=%.2f: %s", world.time, exc)

        decision = arbitrate(groups, curb, ctx, config.curb.d_look, self.override,
                             self.previous_group, config.surfing.switch_margin)
        if decision.mode != self.mission.mode:
            logger.debug("Mode %s -> %s at t=%.2f", self.mission.mode.value, decision.mode.value, world.time)
        self.mission = replace(self.mission, mode=decision.mode)
        self.previous_group = decision.decision.selected_group

        if decision.subgoal is None:
            action = STOP
        else:
            state = make_state(
                robot.pose, robot.linear,
                [(t.position, t.velocity, config.tracking.pedestrian_radius) for t in visible],
                decision.subgoal, robot.radius, robot.v_max,
            )
            state = inject_statics(
                state,
                curb.curb_points if curb is not None else (),
                self._scan_world(frame.scan),
                config.avoidance,
            )
            action = policy(state, config.avoidance)

        mode = Mode.BLOCKED if action.blocked else decision.mode
        if action.blocked:
            self.blocked_cycles += 1
        self._log(mode, decision.subgoal, decision.decision.selected_group)
        self._apply(action)
        return mode

    def _apply(self, action: NavAction):
        world = self.world
        world.robot.command(action.linear, action.angular)
        period = 1.0 / self.config.mission.control_rate
        for _ in range(max(1, int(round(period / world.dt)))):
            world.step()

    def run(self, max_time: Optional[float] = None) -> EpisodeResult:
        """
        Run until the mission completes or ``max_time`` elapses

        Returns:
            EpisodeResult: trace, outcome and ground-truth statistics
        """
        world = self.world
        max_time = self.config.mission.max_time if max_time is None else max_time
        last_mode = self.mission.mode
        logger.info("Episode started with %d waypoint(s)", len(self.mission.waypoints))

        while True:
            self.mission = check_arrival(self.mission, world.robot.position)
            if self.mission.complete:
                self._log(Mode.COMPLETE, None, None)
                outcome = Outcome.COMPLETE
                break
            if world.time >= max_time - 1e-9:
                outcome = Outcome.BLOCKED if last_mode == Mode.BLOCKED else Outcome.TIMEOUT
                break
            last_mode = self.cycle()

        reached = len(self.mission.waypoints) if self.mission.complete else self.mission.current_index
        result = EpisodeResult(
            outcome=outcome,
            trace=pd.DataFrame(self.rows, columns=TRACE_COLUMNS),
            duration=world.time,
            min_clearance=world.truth.min_clearance,
            collisions=world.truth.collisions,
            curb_crossings=world.truth.curb_crossings,
            blocked_cycles=self.blocked_cycles,
            waypoints_reached=reached,
        )
        log = logger.info if outcome == Outcome.COMPLETE else logger.warning
        log("Episode ended %s after %.1f s (%d collisions, %d curb crossings)",
            outcome.value, world.time, result.collisions, result.curb_crossings)
        return result


def run_episode(world: World, mission: Mission, config: Optional[NavigationConfig] = None,
                max_time: Optional[float] = None,
                override: ModeOverride = ModeOverride.AUTO) -> EpisodeResult:
    return EpisodeLoop(world, mission, config or world.config, override).run(max_time)
