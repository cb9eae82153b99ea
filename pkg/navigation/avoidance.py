"""
Socially-aware local collision avoidance

The policy maps a NavState (robot pose and velocity, observed pedestrians,
static pseudo-pedestrians, subgoal) to a NavAction (linear, angular
velocity). Candidate actions on a fixed grid are rolled out as constant
arcs against constant-velocity agent predictions; infeasible rollouts are
discarded and the rest scored for progress, heading, clearance and the two
social behaviours: keep to the right, pass on the left.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple

import numpy as np

from .config import AvoidanceParams
from .geometry import as_points, resample_polyline, split_polyline, wrap_angle

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Agent:
    position: np.ndarray
    velocity: np.ndarray
    radius: float
    static: bool = False


@dataclass(frozen=True, eq=False)
class NavState:
    """Policy input; pedestrians first, then statics, each sorted by distance"""
    robot_position: np.ndarray
    robot_heading: float
    robot_speed: float
    robot_radius: float
    v_max: float
    subgoal: np.ndarray
    agents: Tuple[Agent, ...] = field(default_factory=tuple)

    @property
    def pedestrians(self) -> List[Agent]:
        return [agent for agent in self.agents if not agent.static]

    @property
    def statics(self) -> List[Agent]:
        return [agent for agent in self.agents if agent.static]


@dataclass(frozen=True)
class NavAction:
    linear: float
    angular: float
    blocked: bool = False


STOP = NavAction(0.0, 0.0, blocked=True)


def _by_distance(agents: Sequence[Agent], origin: np.ndarray) -> List[Agent]:
    keyed = sorted(enumerate(agents), key=lambda item: (float(np.linalg.norm(item[1].position - origin)), item[0]))
    return [agent for _, agent in keyed]


def make_state(robot_pose, robot_speed: float, pedestrians: Sequence[Tuple], subgoal,
               robot_radius: float = 0.4, v_max: float = 0.8) -> NavState:
    """
    Build a NavState from (position, velocity, radius) pedestrian tuples

    Args:
        robot_pose: (x, y, heading)
        robot_speed (float): current linear velocity
        pedestrians (Sequence[Tuple]): observed agents as (position, velocity, radius)
        subgoal: target point (x, y)
        robot_radius (float): robot body radius
        v_max (float): robot speed limit

    Returns:
        NavState: pedestrians sorted by distance to the robot
    """
    x, y, heading = (float(v) for v in robot_pose)
    origin = np.array([x, y])
    agents = [
        Agent(as_points(p, 2)[0], as_points(v, 2)[0], float(r))
        for p, v, r in pedestrians
    ]
    return NavState(
        robot_position=origin,
        robot_heading=heading,
        robot_speed=float(robot_speed),
        robot_radius=robot_radius,
        v_max=v_max,
        subgoal=as_points(subgoal, 2)[0],
        agents=tuple(_by_distance(agents, origin)),
    )


def _pieces(obstacles) -> List[np.ndarray]:
    if obstacles is None:
        return []
    if isinstance(obstacles, np.ndarray):
        return [obstacles] if obstacles.size else []
    pieces = list(obstacles)
    if pieces and all(isinstance(p, np.ndarray) and p.ndim == 2 for p in pieces):
        return [p for p in pieces if p.size]
    return [as_points(pieces, 2)] if pieces else []


def inject_statics(state: NavState, curb_points=(), scan_obstacles=(),
                   params: AvoidanceParams = AvoidanceParams()) -> NavState:
    """
    Append zero-velocity pseudo-pedestrians along curbs and scanned obstacles

    Each ordered point sequence is split at gaps wider than ``static_gap``
    and resampled every ``static_spacing`` meters of arc length; samples
    farther than ``static_range`` from the robot are dropped.

    Args:
        state (NavState): state holding the observed pedestrians
        curb_points: ordered curb points, one (N, 2) array or a list of them
        scan_obstacles: ordered obstacle boundary points, same forms
        params (AvoidanceParams): static radius, spacing, gap and range

    Returns:
        NavState: a new state, or ``state`` itself when nothing was added
    """
    samples = []
    for piece in _pieces(curb_points) + _pieces(scan_obstacles):
        for part in split_polyline(piece, params.static_gap):
            samples.append(resample_polyline(part, params.static_spacing))
    if not samples:
        return state

    points = np.vstack(samples)
    points = points[np.linalg.norm(points - state.robot_position, axis=1) <= params.static_range]
    if not len(points):
        return state

    statics = [Agent(p.copy(), np.zeros(2), params.static_radius, static=True) for p in points]
    return replace(state, agents=state.agents + tuple(_by_distance(statics, state.robot_position)))


def action_grid(v_max: float, params: AvoidanceParams) -> Tuple[np.ndarray, np.ndarray]:
    """Candidate (nu, omega) pairs, nu in the outer loop"""
    nu = np.linspace(0.0, v_max, params.v_samples)
    omega = np.linspace(-params.omega_max, params.omega_max, params.w_samples)
    nus, omegas = np.meshgrid(nu, omega, indexing='ij')
    return nus.ravel(), omegas.ravel()


def _times(params: AvoidanceParams) -> np.ndarray:
    steps = int(round(params.horizon / params.rollout_dt))
    return np.arange(1, steps + 1) * params.rollout_dt


def _arcs(position: np.ndarray, heading: float, nu: np.ndarray, omega: np.ndarray,
          times: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form unicycle positions (C, K, 2) and headings (C, K)"""
    nu = nu[:, None]
    omega = omega[:, None]
    t = times[None, :]
    headings = heading + omega * t
    straight = np.abs(omega) < 1e-9
    safe_omega = np.where(straight, 1.0, omega)
    dx = np.where(straight, nu * t * math.cos(heading),
                  nu / safe_omega * (np.sin(headings) - math.sin(heading)))
    dy = np.where(straight, nu * t * math.sin(heading),
                  -nu / safe_omega * (np.cos(headings) - math.cos(heading)))
    return np.stack((position[0] + dx, position[1] + dy), axis=-1), headings


def rollout(state: NavState, nu: float, omega: float,
            params: AvoidanceParams = AvoidanceParams()) -> np.ndarray:
    """Predicted robot positions every ``rollout_dt`` over the horizon for one action"""
    positions, _ = _arcs(state.robot_position, state.robot_heading,
                         np.array([float(nu)]), np.array([float(omega)]), _times(params))
    return positions[0]


def _predict_agents(state: NavState, times: np.ndarray) -> np.ndarray:
    if not state.agents:
        return np.empty((0, len(times), 2))
    positions = np.array([a.position for a in state.agents])
    velocities = np.array([a.velocity for a in state.agents])
    return positions[:, None, :] + velocities[:, None, :] * times[None, :, None]


def safety_radii(state: NavState, params: AvoidanceParams) -> np.ndarray:
    return np.array([state.robot_radius + a.radius + params.safety_margin for a in state.agents])


def _within_reach(state: NavState, params: AvoidanceParams, horizon: float) -> NavState:
    """
    Drop agents no rollout can come near

    An agent is kept when robot and agent, both moving straight at each
    other at full speed, could close to within its clearance or social
    radius before ``horizon``. Dropped agents change no feasibility, margin
    or social term.
    """
    if not state.agents:
        return state
    positions = np.array([a.position for a in state.agents])
    speeds = np.hypot(*np.array([a.velocity for a in state.agents]).T)
    current = np.linalg.norm(positions - state.robot_position, axis=1)
    reach = np.maximum(safety_radii(state, params) + params.clearance_ref, params.social_radius)
    closest = current - (state.v_max + speeds) * horizon
    keep = closest <= reach + 1e-6
    if keep.all():
        return state
    return replace(state, agents=tuple(a for a, k in zip(state.agents, keep) if k))


def _social_penalty(state: NavState, paths: np.ndarray, headings: np.ndarray,
                    predicted: np.ndarray, distances: np.ndarray, params: AvoidanceParams) -> np.ndarray:
    penalty = np.zeros(paths.shape[0])
    forward = np.array([math.cos(state.robot_heading), math.sin(state.robot_heading)])
    for index, agent in enumerate(state.agents):
        speed = np.linalg.norm(agent.velocity)
        if agent.static or speed < params.moving_speed:
            continue
        alignment = float(agent.velocity @ forward) / speed
        if alignment < -params.oncoming_cos:
            weight, sign = params.w_pass, -1.0    # oncoming agent belongs on our left
        elif alignment > params.oncoming_cos:
            weight, sign = params.w_overtake, 1.0  # overtaken agent belongs on our right
        else:
            continue

        closest = np.argmin(distances[:, :, index], axis=1)
        rows = np.arange(paths.shape[0])
        d = distances[rows, closest, index]
        relative = predicted[index, closest] - paths[rows, closest]
        cos_h = np.cos(headings[rows, closest])
        sin_h = np.sin(headings[rows, closest])
        side = (cos_h * relative[:, 1] - sin_h * relative[:, 0]) / np.maximum(d, 1e-9)
        penalty += np.where(d <= params.social_radius, weight * np.maximum(0.0, sign * side), 0.0)
    return penalty


def score_candidates(state: NavState, params: AvoidanceParams = AvoidanceParams()):
    """
    Feasibility and score of every candidate action

    Returns:
        Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
            nu, omega, feasible mask and score per candidate
    """
    nu, omega = action_grid(state.v_max, params)
    times = _times(params)
    state = _within_reach(state, params, times[-1])
    paths, headings = _arcs(state.robot_position, state.robot_heading, nu, omega, times)
    predicted = _predict_agents(state, times)

    if state.agents:
        distances = np.linalg.norm(paths[:, :, None, :] - predicted.transpose(1, 0, 2)[None], axis=-1)
        r_safe = safety_radii(state, params)
        current = np.array([np.linalg.norm(a.position - state.robot_position) for a in state.agents])
        # already inside r_safe: only forbid getting closer
        limit = np.where(current > r_safe, r_safe, current - 1e-9)
        feasible = np.all(distances > limit[None, None, :], axis=(1, 2))
        margin = np.clip((distances - r_safe[None, None, :]).min(axis=(1, 2)), 0.0, params.clearance_ref)
    else:
        distances = np.empty((len(nu), len(times), 0))
        feasible = np.ones(len(nu), dtype=bool)
        margin = np.full(len(nu), params.clearance_ref)

    at = min(int(round(params.score_horizon / params.rollout_dt)), len(times)) - 1
    reached = paths[:, at]
    reached_heading = headings[:, at]
    progress = (np.linalg.norm(state.subgoal - state.robot_position)
                - np.linalg.norm(state.subgoal - reached, axis=1))
    to_subgoal = state.subgoal - reached
    bearing = np.arctan2(to_subgoal[:, 1], to_subgoal[:, 0])
    heading_error = np.abs(wrap_angle(bearing - reached_heading)) / math.pi

    travel = state.subgoal - state.robot_position
    norm = np.linalg.norm(travel)
    if norm > 1e-9:
        travel = travel / norm
        offset = travel[0] * (reached[:, 1] - state.robot_position[1]) - travel[1] * (reached[:, 0] - state.robot_position[0])
    else:
        offset = np.zeros(len(nu))

    score = (params.w_progress * progress
             - params.w_heading * heading_error
             + params.w_clearance * margin / params.clearance_ref
             - params.w_right * np.maximum(0.0, offset)
             - _social_penalty(state, paths, headings, predicted, distances, params))
    return nu, omega, feasible, score


def policy(state: NavState, params: AvoidanceParams = AvoidanceParams()) -> NavAction:
    """
    Best feasible action for the state

    Returns the highest-scoring feasible candidate, the lowest candidate
    index on ties. When every candidate is infeasible the robot stops and
    the action is flagged ``blocked``.
    """
    nu, omega, feasible, score = score_candidates(state, params)
    if not feasible.any():
        logger.debug("All %d candidate actions collide; stopping", len(nu))
        return STOP
    best = int(np.argmax(np.where(feasible, score, -np.inf)))
    return NavAction(float(nu[best]), float(omega[best]))
