import math

import numpy as np
from django.test import SimpleTestCase

from navigation.surfing import SurfContext, filter_candidates, select_group, surf_cycle
from navigation.tracking import Group


def group(group_id, velocity, closest=(1.0, 0.0)):
    return Group(id=group_id, members=(group_id,), velocity=np.asarray(velocity, dtype=float),
                 closest=np.asarray(closest, dtype=float), closest_id=group_id)


def brute_force_decision(groups, robot, waypoint, v_max):
    """Direct restatement of the selection rules, used as an oracle"""
    x_i = (waypoint[0] - robot[0], waypoint[1] - robot[1])
    best = None
    for g in groups:
        vx, vy = float(g.velocity[0]), float(g.velocity[1])
        if vx * x_i[0] + vy * x_i[1] <= 0:
            continue
        speed = math.hypot(vx, vy)
        if speed > v_max:
            continue
        if best is None or speed > best[0] or (speed == best[0] and g.id < best[1]):
            best = (speed, g.id)
    return None if best is None else best[1]


class FilterTests(SimpleTestCase):

    def setUp(self):
        self.ctx = SurfContext(np.zeros(2), np.array([10.0, 0.0]), 0.8)

    def test_aligned_group_is_kept(self):
        self.assertEqual(len(filter_candidates([group(0, (1, 0))], self.ctx)), 1)

    def test_opposing_group_is_discarded(self):
        self.assertEqual(filter_candidates([group(0, (-1, 0.2))], self.ctx), [])

    def test_perpendicular_group_is_discarded(self):
        self.assertEqual(filter_candidates([group(0, (0, 1))], self.ctx), [])


class SelectTests(SimpleTestCase):

    def setUp(self):
        self.ctx = SurfContext(np.zeros(2), np.array([10.0, 0.0]), 0.8)

    def test_fastest_followable_group(self):
        decision = select_group([group(0, (0.5, 0)), group(1, (0.7, 0))], self.ctx)
        self.assertEqual(decision.selected_group, 1)

    def test_too_fast_to_follow(self):
        decision = select_group([group(0, (0.9, 0))], self.ctx)
        self.assertFalse(decision)
        self.assertIsNone(decision.subgoal)

    def test_exactly_v_max_is_followable(self):
        self.assertEqual(select_group([group(3, (0.8, 0))], self.ctx).selected_group, 3)

    def test_single_slow_candidate(self):
        decision = select_group([group(4, (0.3, 0), closest=(2.0, 0.5))], self.ctx)
        self.assertEqual(decision.selected_group, 4)
        self.assertTrue(np.array_equal(decision.subgoal, [2.0, 0.5]))

    def test_tie_goes_to_lowest_id(self):
        decision = select_group([group(5, (0.6, 0)), group(2, (0, 0.6))], self.ctx)
        self.assertEqual(decision.selected_group, 2)

    def test_switch_margin_keeps_current_group(self):
        groups = [group(0, (0.5, 0)), group(1, (0.55, 0))]
        self.assertEqual(select_group(groups, self.ctx, previous=0, switch_margin=0.1).selected_group, 0)
        self.assertEqual(select_group(groups, self.ctx, previous=0).selected_group, 1)


class SurfCycleTests(SimpleTestCase):

    def test_switches_to_faster_group(self):
        ctx = SurfContext(np.zeros(2), np.array([30.0, 0.0]), 0.8)
        first = surf_cycle([group(0, (0.5, 0))], ctx)
        self.assertEqual(first.selected_group, 0)
        second = surf_cycle([group(0, (0.5, 0)), group(2, (0.7, 0), closest=(6.0, 1.0))], ctx, previous=0)
        self.assertEqual(second.selected_group, 2)

    def test_no_groups(self):
        ctx = SurfContext(np.zeros(2), np.array([30.0, 0.0]))
        self.assertFalse(surf_cycle([], ctx))

    def test_reversing_group_is_dropped(self):
        ctx = SurfContext(np.zeros(2), np.array([30.0, 0.0]))
        self.assertEqual(surf_cycle([group(0, (0.5, 0))], ctx).selected_group, 0)
        self.assertFalse(surf_cycle([group(0, (-0.5, 0))], ctx, previous=0))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2024)
        for _ in range(10000):
            count = int(rng.integers(0, 6))
            # coarse grid values so ties and boundary cases show up
            velocities = rng.integers(-8, 9, size=(count, 2)) / 10.0
            groups = [group(int(i), v) for i, v in zip(rng.permutation(20)[:count], velocities)]
            robot = rng.integers(-5, 6, size=2).astype(float)
            waypoint = rng.integers(-5, 6, size=2).astype(float)
            v_max = float(rng.choice([0.5, 0.7, 0.8]))
            if np.array_equal(robot, waypoint):
                continue
            ctx = SurfContext(robot, waypoint, v_max)
            expected = brute_force_decision(groups, robot, waypoint, v_max)
            self.assertEqual(surf_cycle(groups, ctx).selected_group, expected)
