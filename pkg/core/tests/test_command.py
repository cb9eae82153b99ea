import filecmp
import json
import os
import tempfile
from io import StringIO

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from core.management.commands.run_trials import resolve_scenario
from navigation.runner import EXIT_INFEASIBLE


class RunTrialsCommandTests(SimpleTestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.tmp = self._tmp.name

    def run_trials(self, *args, out=None):
        stdout = StringIO()
        call_command('run_trials', *args, '--out', out or self.tmp, stdout=stdout)
        return stdout.getvalue()

    def test_straight_sidewalk(self):
        output = self.run_trials('straight', '--trials', '2')
        self.assertIn('All robot episodes completed', output)

        expected = {
            'r_path_00.csv', 'r_path_01.csv', 'p_path_00.csv', 'p_path_01.csv', 's_path.csv',
            'episodes.csv', 'metrics_pairwise.csv', 'metrics_summary.csv', 'boxplot.csv',
            't_tests.csv', 'report.txt', 'metadata.json',
        }
        self.assertTrue(expected <= set(os.listdir(self.tmp)))

        trace = pd.read_csv(os.path.join(self.tmp, 'r_path_00.csv'))
        self.assertEqual(list(trace.columns)[:4], ['t', 'x', 'y', 'heading'])
        episodes = pd.read_csv(os.path.join(self.tmp, 'episodes.csv'))
        self.assertEqual(len(episodes), 4)
        self.assertEqual(set(episodes[episodes['kind'] == 'robot']['outcome']), {'Complete'})

        with open(os.path.join(self.tmp, 'metadata.json')) as handle:
            metadata = json.load(handle)
        self.assertEqual(metadata['scenario'], 'straight')
        self.assertEqual(metadata['trials'], 2)
        self.assertEqual(metadata['seed'], 1)

    def test_overrides_are_recorded(self):
        self.run_trials('straight', '--trials', '1', '--override', 'evaluation.significance=0.01')
        with open(os.path.join(self.tmp, 'metadata.json')) as handle:
            metadata = json.load(handle)
        self.assertEqual(metadata['overrides'], {'evaluation.significance': '0.01'})
        self.assertEqual(metadata['config']['evaluation']['significance'], 0.01)

    def test_plots(self):
        self.run_trials('straight', '--trials', '1', '--plots')
        self.assertTrue(os.path.exists(os.path.join(self.tmp, 'plots', 'paths.png')))
        self.assertTrue(os.path.exists(os.path.join(self.tmp, 'plots', 'boxplot.png')))

    def test_same_seed_same_files(self):
        first = os.path.join(self.tmp, 'first')
        second = os.path.join(self.tmp, 'second')
        self.run_trials('straight', '--trials', '1', '--seed', '5', out=first)
        self.run_trials('straight', '--trials', '1', '--seed', '5', out=second)
        for name in ('r_path_00.csv', 'p_path_00.csv', 'episodes.csv', 'metrics_pairwise.csv'):
            self.assertTrue(filecmp.cmp(os.path.join(first, name), os.path.join(second, name), shallow=False))

    def test_unreachable_goal(self):
        with self.assertRaises(CommandError) as caught:
            self.run_trials('unreachable', '--trials', '1')
        self.assertEqual(caught.exception.returncode, EXIT_INFEASIBLE)
        self.assertIn('NoPath', str(caught.exception))
        episodes = pd.read_csv(os.path.join(self.tmp, 'episodes.csv'))
        self.assertEqual(list(episodes['outcome']), ['NoPath'])

    def test_start_inside_the_goal_tolerance(self):
        path = os.path.join(self.tmp, 'at_goal.json')
        with open(path, 'w') as handle:
            json.dump({
                'name': 'at_goal',
                'map': {'sidewalks': [[[0, 0], [20, 0], [20, 4], [0, 4]]]},
                'robot': {'start': [2, 2]},
                'waypoints': [[2.2, 2]],
            }, handle)
        out = os.path.join(self.tmp, 'out')
        output = self.run_trials(path, '--trials', '1', out=out)
        self.assertIn('All robot episodes completed', output)
        trace = pd.read_csv(os.path.join(out, 'r_path_00.csv'))
        self.assertEqual(list(trace['mode']), ['Complete'])
        self.assertTrue(os.path.exists(os.path.join(out, 'episodes.csv')))
        self.assertFalse(os.path.exists(os.path.join(out, 'metrics_pairwise.csv')))

    def test_invalid_scenario(self):
        path = os.path.join(self.tmp, 'broken.json')
        with open(path, 'w') as handle:
            handle.write('{"name": "broken", "map": {}}')
        with self.assertRaises(CommandError) as caught:
            self.run_trials(path, out=os.path.join(self.tmp, 'out'))
        self.assertEqual(caught.exception.returncode, EXIT_INFEASIBLE)
        self.assertIn("missing 'sidewalks'", str(caught.exception))

    def test_unknown_override(self):
        with self.assertRaises(CommandError) as caught:
            self.run_trials('straight', '--override', 'curb.nope=1')
        self.assertEqual(caught.exception.returncode, EXIT_INFEASIBLE)

    def test_trial_count(self):
        with self.assertRaises(CommandError):
            self.run_trials('straight', '--trials', '0')

    def test_resolve_scenario(self):
        self.assertTrue(resolve_scenario('straight').endswith('straight.json'))
        self.assertTrue(resolve_scenario('straight.json').endswith('straight.json'))
        with self.assertRaises(CommandError):
            resolve_scenario('no_such_scenario')
