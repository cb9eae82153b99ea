import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional

from .exceptions import ScenarioError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WorldParams:
    """Simulation and simulated sensor parameters"""
    dt: float = 0.05
    curb_drop: float = 0.1
    detection_range: float = 10.0
    detection_fov_deg: float = 180.0
    detection_noise: float = 0.0
    lidar_range: float = 7.0
    cloud_resolution: float = 0.3
    obstacle_height: float = 1.0
    scan_range: float = 5.0
    scan_resolution: float = 0.25


@dataclass(frozen=True)
class SocialForceParams:
    tau: float = 0.5
    ped_a: float = 2.0
    ped_b: float = 0.3
    obstacle_a: float = 3.0
    obstacle_b: float = 0.2
    a_max: float = 5.0
    max_speed_factor: float = 1.3
    route_reach: float = 0.5
    interaction_range: float = 3.0


@dataclass(frozen=True)
class RobotParams:
    radius: float = 0.4
    v_max: float = 0.8


@dataclass(frozen=True)
class CurbParams:
    """Curb detection pipeline parameters (ransac threshold is the 5 cm rule)"""
    height_epsilon: float = 0.02
    ransac_threshold: float = 0.05
    ransac_iterations: int = 200
    alpha: float = 5.0
    k_curb: int = 50
    window: float = 5.0
    d_look: float = 3.0
    min_points: int = 30
    component_link: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class TrackingParams:
    gate_radius: float = 0.8
    smoothing: float = 0.5
    stale_time: float = 1.0
    group_distance: float = 1.5
    group_speed_delta: float = 0.3
    group_heading_delta_deg: float = 30.0
    heading_min_speed: float = 0.1
    pedestrian_radius: float = 0.3


@dataclass(frozen=True)
class SurfingParams:
    switch_margin: float = 0.0


@dataclass(frozen=True)
class AvoidanceParams:
    """Sampled-rollout policy parameters and score weights"""
    horizon: float = 3.0
    rollout_dt: float = 0.2
    score_horizon: float = 1.0
    v_samples: int = 11
    w_samples: int = 21
    omega_max: float = 1.0
    safety_margin: float = 0.2
    static_radius: float = 0.1
    static_spacing: float = 0.5
    static_gap: float = 1.0
    static_range: float = 5.0
    social_radius: float = 2.0
    oncoming_cos: float = 0.5
    moving_speed: float = 0.1
    w_progress: float = 1.0
    w_heading: float = 0.2
    w_clearance: float = 0.1
    clearance_ref: float = 0.5
    w_pass: float = 1.0
    w_overtake: float = 0.5
    w_right: float = 0.3


@dataclass(frozen=True)
class MissionParams:
    goal_tolerance: float = 0.5
    control_rate: float = 10.0
    max_time: float = 300.0


@dataclass(frozen=True)
class EvaluationParams:
    resample_spacing: float = 0.1
    significance: float = 0.05


SECTIONS = {
    'world': WorldParams,
    'social_force': SocialForceParams,
    'robot': RobotParams,
    'curb': CurbParams,
    'tracking': TrackingParams,
    'surfing': SurfingParams,
    'avoidance': AvoidanceParams,
    'mission': MissionParams,
    'evaluation': EvaluationParams,
}


def _coerce(value: Any, default: Any, key: str) -> Any:
    """Convert an override value to the type of the parameter's default"""
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() in ('1', 'true', 'yes', 'on'):
                    return True
                if value.lower() in ('0', 'false', 'no', 'off'):
                    return False
                raise ValueError(value)
            return bool(value)
        if isinstance(default, int):
            as_float = float(value)
            if not as_float.is_integer():
                raise ValueError(value)
            return int(as_float)
        return float(value)
    except (TypeError, ValueError):
        raise ScenarioError(
            f"invalid value {value!r} for parameter '{key}' "
            f"(expected {type(default).__name__})"
        )


@dataclass(frozen=True)
class NavigationConfig:
    """Every tunable parameter of the navigation stack, grouped by module"""
    world: WorldParams = field(default_factory=WorldParams)
    social_force: SocialForceParams = field(default_factory=SocialForceParams)
    robot: RobotParams = field(default_factory=RobotParams)
    curb: CurbParams = field(default_factory=CurbParams)
    tracking: TrackingParams = field(default_factory=TrackingParams)
    surfing: SurfingParams = field(default_factory=SurfingParams)
    avoidance: AvoidanceParams = field(default_factory=AvoidanceParams)
    mission: MissionParams = field(default_factory=MissionParams)
    evaluation: EvaluationParams = field(default_factory=EvaluationParams)

    @classmethod
    def from_settings(cls) -> 'NavigationConfig':
        """
        Build the configuration from Django settings

        Falls back to the dataclass defaults when Django is not configured
        or the project does not define ``NAVIGATION``.

        Returns:
            NavigationConfig: defaults updated with ``settings.NAVIGATION``
        """
        config = cls()
        try:
            from django.conf import settings
            overrides = getattr(settings, 'NAVIGATION', None) if settings.configured else None
        except ImportError:
            overrides = None

        if overrides:
            config = config.with_nested(overrides)
        return config

    def with_nested(self, values: Mapping[str, Mapping[str, Any]]) -> 'NavigationConfig':
        """Apply a ``{section: {key: value}}`` mapping"""
        flat = {}
        for section, entries in values.items():
            if not isinstance(entries, Mapping):
                raise ScenarioError(f"parameter section '{section}' must be a mapping")
            for key, value in entries.items():
                flat[f'{section}.{key}'] = value
        return self.with_overrides(flat)

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'NavigationConfig':
        """
        Apply dotted ``section.key`` overrides

        Args:
            overrides (Mapping[str, Any]): e.g. ``{'curb.d_look': '3.5'}``

        Returns:
            NavigationConfig: a new configuration; ``self`` is unchanged
        """
        sections: Dict[str, Dict[str, Any]] = {}
        for dotted, value in overrides.items():
            section, _, key = dotted.partition('.')
            if section not in SECTIONS or not key:
                raise ScenarioError(f"unknown parameter '{dotted}'")
            current = getattr(self, section)
            if key not in {f.name for f in dataclasses.fields(current)}:
                raise ScenarioError(f"unknown parameter '{dotted}'")
            sections.setdefault(section, {})[key] = _coerce(value, getattr(current, key), dotted)

        updated = {
            name: dataclasses.replace(getattr(self, name), **changes)
            for name, changes in sections.items()
        }
        if updated:
            logger.debug("Applied parameter overrides: %s", sorted(overrides))
        return dataclasses.replace(self, **updated)

    def as_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}


def parse_override(text: str) -> Dict[str, str]:
    """Split a ``key=value`` command-line override"""
    key, sep, value = text.partition('=')
    if not sep or not key.strip():
        raise ScenarioError(f"override '{text}' must look like section.key=value")
    return {key.strip(): value.strip()}


def load_config(scenario_parameters: Optional[Mapping[str, Any]] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> NavigationConfig:
    """
    Resolve the effective configuration for a run

    Args:
        scenario_parameters: dotted or nested parameters from the scenario file
        overrides: dotted parameters from the command line

    Returns:
        NavigationConfig: settings → scenario → command line, in that order
    """
    config = NavigationConfig.from_settings()
    if scenario_parameters:
        nested = {k: v for k, v in scenario_parameters.items() if isinstance(v, Mapping)}
        dotted = {k: v for k, v in scenario_parameters.items() if not isinstance(v, Mapping)}
        config = config.with_nested(nested).with_overrides(dotted)
    if overrides:
        config = config.with_overrides(overrides)
    return config
