from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import as_points
from .tracking import Group


@dataclass(frozen=True, eq=False)
class SurfContext:
    robot_position: np.ndarray
    waypoint: np.ndarray
    v_max: float = 0.8

    def __post_init__(self):
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        object.__setattr__(self, 'robot_position', as_points(self.robot_position, 2)[0])
        object.__setattr__(self, 'waypoint', as_points(self.waypoint, 2)[0])

    @property
    def x_i(self) -> np.ndarray:
        """Vector from the robot to the active waypoint"""
        return self.waypoint - self.robot_position


@dataclass(frozen=True, eq=False)
class SurfDecision:
    selected_group: Optional[int] = None
    subgoal: Optional[np.ndarray] = None

    def __bool__(self) -> bool:
        return self.selected_group is not None


def toward_waypoint(group: Group, ctx: SurfContext) -> float:
    x_i = ctx.x_i
    return float(group.velocity[0]) * float(x_i[0]) + float(group.velocity[1]) * float(x_i[1])


def filter_candidates(groups: Sequence[Group], ctx: SurfContext) -> list:
    """Keep the groups whose mean velocity has a positive component toward the waypoint"""
    return [group for group in groups if toward_waypoint(group, ctx) > 0]


def select_group(candidates: Sequence[Group], ctx: SurfContext,
                 previous: Optional[int] = None, switch_margin: float = 0.0) -> SurfDecision:
    """
    Pick the fastest group the robot can keep up with

    Groups faster than ``v_max`` are never followed. Among the rest the
    highest speed wins, ties going to the lowest group id. With a positive
    ``switch_margin`` the previously followed group is kept unless the
    winner is faster by at least the margin.
    """
    eligible = [group for group in candidates if group.speed <= ctx.v_max]
    if not eligible:
        return SurfDecision()

    best = min(eligible, key=lambda group: (-group.speed, group.id))
    if previous is not None and switch_margin > 0:
        kept = next((group for group in eligible if group.id == previous), None)
        if kept is not None and best.speed - kept.speed < switch_margin:
            best = kept
    return SurfDecision(selected_group=best.id, subgoal=best.closest.copy())


def surf_cycle(groups: Sequence[Group], ctx: SurfContext,
               previous: Optional[int] = None, switch_margin: float = 0.0) -> SurfDecision:
    return select_group(filter_candidates(groups, ctx), ctx, previous, switch_margin)
