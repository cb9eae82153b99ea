import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import pandas as pd
from joblib import Parallel, delayed

from .config import NavigationConfig
from .evaluation import FLOAT_FORMAT, PathTrace, TrialComparison, compare_trials, write_report
from .exceptions import NoPath
from .geometry import polyline_length
from .mission import ModeOverride, Outcome, run_episode
from .scenario import Scenario, build_world
from .world import shortest_path

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INCOMPLETE = 1
EXIT_INFEASIBLE = 2

EPISODE_COLUMNS = [
    'trial', 'seed', 'kind', 'outcome', 'duration', 'min_clearance', 'collisions',
    'curb_crossings', 'blocked_cycles', 'waypoints_reached', 'path_length',
]


@dataclass(frozen=True)
class RunConfig:
    """What to run and where to write it"""
    trials: int = 10
    seed: Optional[int] = None
    out_dir: str = 'runs'
    mode: ModeOverride = ModeOverride.AUTO
    jobs: int = 1
    plots: bool = False
    overrides: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")


@dataclass
class RunResult:
    exit_code: int
    episodes: pd.DataFrame
    comparison: Optional[TrialComparison] = None
    files: List[str] = field(default_factory=list)


def run_robot_trial(scenario: Scenario, config: NavigationConfig, seed: int,
                    mode: ModeOverride) -> dict:
    world = build_world(scenario, config, seed)
    result = run_episode(world, scenario.mission(config), config, override=mode)
    return {'summary': result.summary(), 'trace': result.trace}


def run_pedestrian_trial(scenario: Scenario, config: NavigationConfig, seed: int) -> dict:
    """Walk the comparison pedestrian from the robot start through the waypoints, robot absent"""
    world = build_world(scenario, config, seed, with_robot=False, comparison=True)
    walker = world.pedestrians[-1]
    period = 1.0 / config.mission.control_rate
    steps = max(1, int(round(period / world.dt)))

    rows = [[0.0, float(walker.position[0]), float(walker.position[1])]]
    while not walker.finished and world.time < config.mission.max_time - 1e-9:
        for _ in range(steps):
            world.step()
        rows.append([round(world.time, 9), float(walker.position[0]), float(walker.position[1])])

    trace = pd.DataFrame(rows, columns=['t', 'x', 'y'])
    summary = {
        'outcome': (Outcome.COMPLETE if walker.finished else Outcome.TIMEOUT).value,
        'duration': round(world.time, 6),
        'path_length': round(polyline_length(trace[['x', 'y']].to_numpy()), 6),
    }
    return {'summary': summary, 'trace': trace}


class TrialRunner:
    """
    Batch of seeded trials for one scenario

    Trial ``i`` uses seed ``base + i`` for both its robot episode and its
    comparison pedestrian walk. Results are collected in trial order, so the
    artifacts do not depend on the number of workers.
    """

    def __init__(self, scenario: Scenario, config: NavigationConfig, run_config: RunConfig):
        self.scenario = scenario
        self.config = config
        self.run_config = run_config
        self.base_seed = scenario.seed if run_config.seed is None else run_config.seed
        self.out_dir = run_config.out_dir

    def _path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _write_metadata(self):
        metadata = {
            'scenario': self.scenario.name,
            'source': self.scenario.source,
            'trials': self.run_config.trials,
            'seed': self.base_seed,
            'mode': ModeOverride(self.run_config.mode).value,
            'overrides': dict(sorted(self.run_config.overrides.items())),
            'config': self.config.as_dict(),
        }
        with open(self._path('metadata.json'), 'w') as handle:
            json.dump(metadata, handle, indent=2, sort_keys=True)
            handle.write('\n')

    def _write_episodes(self, rows: List[dict]) -> pd.DataFrame:
        episodes = pd.DataFrame(rows).reindex(columns=EPISODE_COLUMNS)
        episodes.to_csv(self._path('episodes.csv'), index=False, float_format=FLOAT_FORMAT)
        return episodes

    def run(self) -> RunResult:
        """
        Run every trial, then write traces, metrics and the run metadata

        Returns:
            RunResult: exit code (0 all robot episodes Complete, 1 otherwise,
            2 when the scenario has no path) and the episode table
        """
        os.makedirs(self.out_dir, exist_ok=True)
        self._write_metadata()
        trials = self.run_config.trials
        seeds = [self.base_seed + i for i in range(trials)]

        goal = self.scenario.waypoints[-1].position
        try:
            s_path = shortest_path(self.scenario.map, self.scenario.robot_start, goal, self.config.robot.radius)
        except NoPath as exc:
            logger.warning("Scenario '%s' is infeasible: %s", self.scenario.name, exc)
            rows = [{'trial': i, 'seed': seed, 'kind': 'robot', 'outcome': Outcome.NO_PATH.value}
                    for i, seed in enumerate(seeds)]
            return RunResult(EXIT_INFEASIBLE, self._write_episodes(rows))

        s_trace = PathTrace.from_polyline('s_path', s_path, self.config.robot.v_max)
        s_trace.write_csv(self._path('s_path.csv'))

        logger.info("Running %d trial(s) of '%s' from seed %d", trials, self.scenario.name, self.base_seed)
        parallel = Parallel(n_jobs=self.run_config.jobs)
        robots = parallel(
            delayed(run_robot_trial)(self.scenario, self.config, seed, self.run_config.mode) for seed in seeds
        )
        walkers = parallel(
            delayed(run_pedestrian_trial)(self.scenario, self.config, seed) for seed in seeds
        )

        rows = []
        r_traces, p_traces = [], []
        for i, (seed, robot, walker) in enumerate(zip(seeds, robots, walkers)):
            robot['trace'].to_csv(self._path(f'r_path_{i:02d}.csv'), index=False, float_format=FLOAT_FORMAT)
            walker['trace'].to_csv(self._path(f'p_path_{i:02d}.csv'), index=False, float_format=FLOAT_FORMAT)
            for label, trace, traces in (('r_path', robot['trace'], r_traces), ('p_path', walker['trace'], p_traces)):
                if len(trace) < 2:
                    logger.warning("Trial %d %s has %d row(s), left out of the metrics", i, label, len(trace))
                    continue
                traces.append(PathTrace.from_frame(label, trace))
            rows.append({'trial': i, 'seed': seed, 'kind': 'robot', **robot['summary']})
            rows.append({'trial': i, 'seed': seed, 'kind': 'pedestrian', **walker['summary']})
        episodes = self._write_episodes(rows)

        comparison, files = None, []
        if r_traces and p_traces:
            comparison = compare_trials(p_traces, r_traces, s_trace, self.config.evaluation)
            files = list(write_report(comparison, self.out_dir).values())
        else:
            logger.warning("No trace long enough to compare, metric files skipped")

        if self.run_config.plots:
            from .visualization import PathPlotter

            plotter = PathPlotter(self._path('plots'))
            files.append(plotter.plot_paths(self.scenario.map, p_traces, r_traces, s_trace,
                                            [w.position for w in self.scenario.waypoints]))
            if comparison is not None:
                files.append(plotter.plot_boxplots(comparison.pairwise))

        robot_outcomes = episodes[episodes['kind'] == 'robot']['outcome']
        complete = bool((robot_outcomes == Outcome.COMPLETE.value).all())
        if not complete:
            logger.warning("%d of %d robot episode(s) did not complete",
                           int((robot_outcomes != Outcome.COMPLETE.value).sum()), trials)
        return RunResult(EXIT_OK if complete else EXIT_INCOMPLETE, episodes, comparison, files)


def summarize_outcomes(episodes: pd.DataFrame) -> Dict[str, int]:
    """Count of robot episodes per outcome"""
    robots = episodes[episodes['kind'] == 'robot']
    return {str(k): int(v) for k, v in robots['outcome'].value_counts().sort_index().items()}


def min_clearance(episodes: pd.DataFrame) -> float:
    values = episodes[episodes['kind'] == 'robot']['min_clearance'].dropna()
    return float(values.min()) if len(values) else math.inf
