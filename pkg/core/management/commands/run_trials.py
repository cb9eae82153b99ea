import logging
import os

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from navigation.config import load_config, parse_override
from navigation.exceptions import ScenarioError
from navigation.mission import ModeOverride
from navigation.runner import EXIT_INFEASIBLE, EXIT_OK, RunConfig, TrialRunner, min_clearance, summarize_outcomes
from navigation.scenario import load_scenario

logger = logging.getLogger(__name__)


def resolve_scenario(name: str) -> str:
    """Accept a path, or the name of a bundled scenario"""
    if os.path.exists(name):
        return name
    bundled = os.path.join(settings.SCENARIO_DIR, name if name.endswith('.json') else f'{name}.json')
    if os.path.exists(bundled):
        return bundled
    raise CommandError(f"Scenario '{name}' not found (looked in {settings.SCENARIO_DIR})", returncode=EXIT_INFEASIBLE)


class Command(BaseCommand):
    help = 'Run seeded robot and comparison-pedestrian trials on a scenario and write traces and metrics'

    def add_arguments(self, parser):
        parser.add_argument('scenario', help='Scenario file, or the name of one under scenarios/')
        parser.add_argument('--trials', type=int, default=10, help='Number of trials (default 10)')
        parser.add_argument('--seed', type=int, default=None, help='Base seed (default: the scenario seed)')
        parser.add_argument('--out', default=None, help='Output directory (default: runs/<scenario>)')
        parser.add_argument('--override', action='append', default=[], metavar='SECTION.KEY=VALUE',
                            help='Parameter override, repeatable')
        parser.add_argument('--mode', choices=[m.value for m in ModeOverride], default=ModeOverride.AUTO.value,
                            help='Force a planner or let the mission arbitrate (default auto)')
        parser.add_argument('--jobs', type=int, default=1, help='Parallel workers (default 1, -1 uses every core)')
        parser.add_argument('--plots', action='store_true', help='Also save path and box plots')

    def handle(self, *args, **options):
        if options['trials'] < 1:
            raise CommandError('--trials must be at least 1', returncode=EXIT_INFEASIBLE)

        path = resolve_scenario(options['scenario'])
        try:
            scenario = load_scenario(path)
            overrides = {}
            for text in options['override']:
                overrides.update(parse_override(text))
            config = load_config(scenario.parameters, overrides)
        except ScenarioError as e:
            raise CommandError(str(e), returncode=EXIT_INFEASIBLE)
        logger.info("Scenario %s loaded with %d override(s)", path, len(overrides))

        out_dir = options['out'] or os.path.join(settings.RUNS_DIR, scenario.name)
        run_config = RunConfig(
            trials=options['trials'],
            seed=options['seed'],
            out_dir=out_dir,
            mode=ModeOverride(options['mode']),
            jobs=options['jobs'],
            plots=options['plots'],
            overrides=overrides,
        )

        self.stdout.write(f"Running {run_config.trials} trial(s) of '{scenario.name}' into {out_dir}")
        result = TrialRunner(scenario, config, run_config).run()

        outcomes = ', '.join(f'{k}: {v}' for k, v in summarize_outcomes(result.episodes).items())
        self.stdout.write(f'Robot outcomes: {outcomes}')

        if result.exit_code == EXIT_INFEASIBLE:
            raise CommandError(f"NoPath: scenario '{scenario.name}' has no path to its goal",
                               returncode=EXIT_INFEASIBLE)

        self.stdout.write(f'Minimum robot-pedestrian clearance: {min_clearance(result.episodes):.3f} m')
        if result.comparison is not None:
            for _, test in result.comparison.t_tests.iterrows():
                self.stdout.write(
                    f"{test['metric']}: mean P-R {test['mean_pr']:.4f} m, mean P-S {test['mean_ps']:.4f} m, "
                    f"p={test['p_value']:.3g}"
                )

        if result.exit_code != EXIT_OK:
            raise CommandError('Not every robot episode completed', returncode=result.exit_code)
        self.stdout.write(self.style.SUCCESS('All robot episodes completed'))
