import math
import os
import tempfile

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from navigation.evaluation import (
    PathTrace, compare_trials, format_report, h_average, h_directional, hausdorff_report, load_traces,
    welch_test, write_report,
)


def brute_force(source, target):
    """Double loop over both point sets"""
    nearest = []
    for sx, sy in source:
        best = math.inf
        for tx, ty in target:
            best = min(best, math.hypot(sx - tx, sy - ty))
        nearest.append(best)
    return max(nearest), sum(nearest) / len(nearest)


def straight_trace(label, y, length=10.0, speed=1.0):
    return PathTrace.from_polyline(label, [(0.0, y), (length, y)], speed)


class HausdorffTests(SimpleTestCase):

    def test_identical_sets(self):
        path = np.array([[0, 0], [1, 1], [2, 0]], dtype=float)
        self.assertEqual(h_directional(path, path), 0.0)
        self.assertEqual(h_average(path, path), 0.0)

    def test_single_pair(self):
        self.assertEqual(h_directional([[0, 0]], [[3, 4]]), 5.0)

    def test_average_by_hand(self):
        self.assertEqual(h_average([[0, 0], [0, 2]], [[0, 0]]), 1.0)

    def test_random_paths_match_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            source = rng.uniform(-10, 10, (int(rng.integers(1, 51)), 2))
            target = rng.uniform(-10, 10, (int(rng.integers(1, 51)), 2))
            directional, average = brute_force(source.tolist(), target.tolist())
            self.assertLessEqual(abs(h_directional(source, target) - directional), 1e-12 * max(1.0, directional))
            self.assertLessEqual(abs(h_average(source, target) - average), 1e-12 * max(1.0, average))

    def test_properties(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = rng.uniform(-5, 5, (15, 2))
            b = rng.uniform(-5, 5, (15, 2))
            report = hausdorff_report(a, b)
            self.assertLessEqual(report.h_average, report.h_directional)
            self.assertEqual(report.n_points, 15)
            # adding target points never increases either metric
            more = np.vstack((b, rng.uniform(-5, 5, (5, 2))))
            self.assertLessEqual(h_directional(a, more), report.h_directional)
            self.assertLessEqual(h_average(a, more), report.h_average)
            # rigid motion of both paths
            angle = rng.uniform(-math.pi, math.pi)
            turn = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
            shift = rng.uniform(-3, 3, 2)
            self.assertAlmostEqual(h_directional(a @ turn.T + shift, b @ turn.T + shift), report.h_directional)
            self.assertAlmostEqual(h_average(a @ turn.T + shift, b @ turn.T + shift), report.h_average)


class PathTraceTests(SimpleTestCase):

    def test_validation(self):
        with self.assertRaises(ValueError):
            PathTrace('r_path', [0.0], [[0, 0]])
        with self.assertRaises(ValueError):
            PathTrace('r_path', [0.0, 0.0], [[0, 0], [1, 0]])
        with self.assertRaises(ValueError):
            PathTrace('robot', [0.0, 1.0], [[0, 0], [1, 0]])

    def test_from_polyline_timing(self):
        trace = PathTrace.from_polyline('s_path', [(0, 0), (3, 4), (3, 6)], 0.5)
        self.assertTrue(np.allclose(trace.t, [0, 10, 14]))

    def test_resampled_spacing(self):
        points = straight_trace('p_path', 0.0, length=1.0).resampled(0.1)
        self.assertEqual(len(points), 11)

    def test_csv_files(self):
        trace = straight_trace('r_path', 1.5)
        with tempfile.TemporaryDirectory() as directory:
            for index in range(3):
                trace.write_csv(os.path.join(directory, f'r_path_{index:02d}.csv'))
            trace.write_csv(os.path.join(directory, 's_path.csv'))
            traces = load_traces(directory, 'r_path')
            self.assertEqual(len(traces), 3)
            self.assertEqual(traces[0].label, 'r_path')
            self.assertEqual(PathTrace.read_csv(os.path.join(directory, 's_path.csv')).label, 's_path')
            self.assertEqual(list(pd.read_csv(os.path.join(directory, 's_path.csv')).columns), ['t', 'x', 'y'])


class CompareTrialsTests(SimpleTestCase):

    def test_separated_populations(self):
        pedestrians = [straight_trace('p_path', 1.0 + 0.01 * i) for i in range(10)]
        robots = [straight_trace('r_path', 1.2 + 0.01 * i) for i in range(10)]
        shortest = straight_trace('s_path', 3.0)
        comparison = compare_trials(pedestrians, robots, shortest)

        pr = comparison.pairwise[comparison.pairwise['comparison'] == 'P-R']
        self.assertEqual(len(pr[pr['metric'] == 'h_average']), 100)
        for _, test in comparison.t_tests.iterrows():
            self.assertLess(test['mean_pr'], test['mean_ps'])
            self.assertLess(test['p_value'], 0.05)
            self.assertTrue(test['significant'])

    def test_identical_populations(self):
        traces = [straight_trace('p_path', 1.0 + 0.1 * (i % 3)) for i in range(6)]
        robots = [straight_trace('r_path', 1.0 + 0.1 * (i % 3)) for i in range(6)]
        comparison = compare_trials(traces, robots, straight_trace('s_path', 1.0))
        summary = comparison.summary.set_index(['comparison', 'metric'])
        self.assertLess(summary.loc[('P-R', 'h_average'), 'mean'], 0.2)
        self.assertEqual(len(comparison.boxplot), 4)
        self.assertEqual(
            list(comparison.boxplot.columns),
            ['comparison', 'metric', 'whisker_low', 'q1', 'median', 'q3', 'whisker_high'],
        )

    def test_welch(self):
        rng = np.random.default_rng(7)
        _, p_value = welch_test(rng.normal(1.97, 0.07, 100), rng.normal(2.36, 0.07, 100))
        self.assertLess(p_value, 1e-6)
        same = rng.normal(2.0, 0.1, 50)
        _, p_same = welch_test(same, same.copy())
        self.assertAlmostEqual(p_same, 1.0)
        self.assertTrue(math.isnan(welch_test([1.0], [2.0, 3.0])[1]))

    def test_report_files(self):
        comparison = compare_trials(
            [straight_trace('p_path', 1.0), straight_trace('p_path', 1.1)],
            [straight_trace('r_path', 1.2), straight_trace('r_path', 1.3)],
            straight_trace('s_path', 3.0),
        )
        with tempfile.TemporaryDirectory() as directory:
            paths = write_report(comparison, directory)
            self.assertEqual(set(paths), {'metrics_pairwise', 'metrics_summary', 'boxplot', 't_tests', 'report'})
            for path in paths.values():
                self.assertTrue(os.path.exists(path))
        text = format_report(comparison)
        self.assertIn('P-R', text)
        self.assertIn('h_directional', text)
