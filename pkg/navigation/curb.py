import logging
from dataclasses import dataclass

import numpy as np

from .config import CurbParams
from .exceptions import DegenerateInput, NoCurb
from .geometry import (
    KdTree2, Line2, as_points, concave_hull, fit_line2, kd_nearest, lift_from_plane,
    project_to_plane, ransac_plane, rotation, split_components,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CurbEstimate:
    """
    Result of one curb detection, in the world frame

    ``curb_points`` are the hull vertices used for the line fit, in hull
    traversal order.
    """
    hull: np.ndarray
    curb_line: Line2
    subgoal: np.ndarray
    curb_points: np.ndarray


def height_filter(cloud, epsilon: float = 0.02) -> np.ndarray:
    """Points strictly more than ``epsilon`` below the wheel-contact plane"""
    points = as_points(cloud, 3)
    return points[points[:, 2] < -epsilon]


def estimate_curb(filtered, robot_pose, waypoint, params: CurbParams = CurbParams()) -> CurbEstimate:
    """
    Fit the curb line from below-plane points and place a subgoal along it

    Steps, all in the robot-local frame until the last one:

    1. RANSAC plane through the street returns, refit on its inliers
    2. project the inliers into the plane
    3. keep the connected component nearest the robot
    4. concave hull of that component
    5. line through the hull vertices nearest the robot (within ``window``)

    The line is moved to the world frame and oriented toward the waypoint;
    the subgoal sits ``d_look`` ahead of the robot on the parallel through it.

    Args:
        filtered: (N, 3) output of :func:`height_filter`, robot-local
        robot_pose: (x, y, heading) in the world frame
        waypoint: active waypoint (x, y) in the world frame
        params (CurbParams): pipeline parameters

    Returns:
        CurbEstimate: hull, curb line and subgoal in the world frame
    """
    points = as_points(filtered, 3)
    if len(points) < params.min_points:
        raise NoCurb(f"only {len(points)} street returns (need {params.min_points})")

    x, y, heading = (float(v) for v in robot_pose)
    robot = np.array([x, y])
    turn = rotation(heading)

    try:
        plane, inliers = ransac_plane(points, params.ransac_threshold, params.ransac_iterations, params.seed)
        projected = project_to_plane(points[inliers], plane)
        origin = project_to_plane(np.zeros((1, 3)), plane)[0]

        labels = split_components(projected, params.component_link)
        gaps = np.linalg.norm(projected - origin, axis=1)
        nearest_label = labels[int(np.argmin(gaps))]
        component = projected[labels == nearest_label]

        hull = concave_hull(component, params.alpha)
        nearest = kd_nearest(KdTree2(hull), origin, params.k_curb)
        nearest = nearest[np.linalg.norm(nearest - origin, axis=1) <= params.window]
        line = fit_line2(nearest)
    except DegenerateInput as exc:
        raise NoCurb(str(exc)) from exc

    def to_world(uv: np.ndarray) -> np.ndarray:
        return lift_from_plane(uv, plane)[:, :2] @ turn.T + robot

    ends = lift_from_plane(np.vstack((line.point, line.point + line.direction)), plane)[:, :2]
    direction = turn @ (ends[1] - ends[0])
    length = np.linalg.norm(direction)
    if length < 1e-9:
        raise NoCurb("curb line is perpendicular to the ground")
    direction = direction / length

    x_i = as_points(waypoint, 2)[0] - robot
    if direction @ x_i < 0:
        direction = -direction

    hull_world = to_world(hull)
    used = {tuple(p) for p in nearest.tolist()}
    in_window = np.array([tuple(p) in used for p in hull.tolist()])
    return CurbEstimate(
        hull=hull_world,
        curb_line=Line2(point=to_world(line.point[None, :])[0], direction=direction),
        subgoal=robot + params.d_look * direction,
        curb_points=hull_world[in_window],
    )
