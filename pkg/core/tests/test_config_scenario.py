import json
import os
import tempfile

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, override_settings

from navigation.config import NavigationConfig, load_config, parse_override
from navigation.exceptions import ScenarioError
from navigation.scenario import build_world, load_scenario, parse_scenario, spawn_pedestrians


MINIMAL = {
    'name': 'minimal',
    'map': {
        'sidewalks': [[[0, 0], [20, 0], [20, 4], [0, 4]]],
        'landmarks': {'start': [1, 2]},
    },
    'robot': {'start': 'start'},
    'waypoints': [[15, 2]],
}


def with_changes(**changes):
    document = json.loads(json.dumps(MINIMAL))
    document.update(changes)
    return document


class ConfigTests(SimpleTestCase):

    def test_defaults(self):
        config = NavigationConfig()
        self.assertEqual(config.robot.v_max, 0.8)
        self.assertEqual(config.curb.ransac_threshold, 0.05)
        self.assertEqual(config.curb.alpha, 5.0)
        self.assertEqual(config.avoidance.v_samples, 11)
        self.assertEqual(config.avoidance.w_samples, 21)
        self.assertEqual(config.mission.control_rate, 10.0)

    def test_overrides_are_typed(self):
        config = NavigationConfig().with_overrides({'curb.d_look': '3.5', 'curb.k_curb': '40'})
        self.assertEqual(config.curb.d_look, 3.5)
        self.assertEqual(config.curb.k_curb, 40)
        self.assertIsInstance(config.curb.k_curb, int)

    def test_unknown_parameter(self):
        with self.assertRaises(ScenarioError):
            NavigationConfig().with_overrides({'curb.nope': 1})
        with self.assertRaises(ScenarioError):
            NavigationConfig().with_overrides({'nope.d_look': 1})

    def test_bad_value(self):
        with self.assertRaises(ScenarioError):
            NavigationConfig().with_overrides({'curb.k_curb': '2.5'})
        with self.assertRaises(ScenarioError):
            NavigationConfig().with_overrides({'robot.v_max': 'fast'})

    def test_parse_override(self):
        self.assertEqual(parse_override('avoidance.w_right = 0.5'), {'avoidance.w_right': '0.5'})
        with self.assertRaises(ScenarioError):
            parse_override('avoidance.w_right')

    @override_settings(NAVIGATION={'robot': {'v_max': 0.6}, 'curb': {'d_look': 2.0}})
    def test_precedence(self):
        config = load_config({'curb': {'d_look': 2.5}, 'avoidance.w_right': 0.4}, {'curb.d_look': '4.0'})
        self.assertEqual(config.robot.v_max, 0.6)
        self.assertEqual(config.curb.d_look, 4.0)
        self.assertEqual(config.avoidance.w_right, 0.4)

    def test_as_dict_lists_every_section(self):
        sections = NavigationConfig().as_dict()
        self.assertIn('d_look', sections['curb'])
        self.assertIn('w_right', sections['avoidance'])


class ScenarioParsingTests(SimpleTestCase):

    def test_minimal(self):
        scenario = parse_scenario(MINIMAL)
        self.assertTrue(np.array_equal(scenario.robot_start, [1, 2]))
        self.assertEqual(len(scenario.waypoints), 1)
        self.assertEqual(scenario.flows, [])

    def test_max_time_becomes_a_parameter(self):
        scenario = parse_scenario(with_changes(max_time=42))
        self.assertEqual(load_config(scenario.parameters).mission.max_time, 42.0)

    def test_missing_sidewalks(self):
        with self.assertRaisesMessage(ScenarioError, "map: missing 'sidewalks'"):
            parse_scenario(with_changes(map={}))

    def test_unknown_landmark(self):
        with self.assertRaisesMessage(ScenarioError, "unknown landmark 'lab'"):
            parse_scenario(with_changes(robot={'start': 'lab'}))

    def test_no_waypoints(self):
        with self.assertRaises(ScenarioError):
            parse_scenario(with_changes(waypoints=[]))

    def test_bad_group_size(self):
        flows = [{'route': [[1, 1], [10, 1]], 'count': 3, 'group_size': [3, 1]}]
        with self.assertRaisesMessage(ScenarioError, 'pedestrians.flows[0]'):
            parse_scenario(with_changes(pedestrians={'flows': flows}))

    def test_flow_count(self):
        for count in (-1, 2.5):
            flows = [{'route': [[1, 1], [10, 1]], 'count': count}]
            with self.subTest(count=count):
                with self.assertRaisesMessage(ScenarioError, 'pedestrians.flows[0]'):
                    parse_scenario(with_changes(pedestrians={'flows': flows}))

    def test_json_syntax_error_has_a_location(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'broken.json')
            with open(path, 'w') as handle:
                handle.write('{\n  "name": "broken",\n  "map": [\n}\n')
            with self.assertRaisesRegex(ScenarioError, r'broken\.json:4:1: '):
                load_scenario(path)

    def test_missing_file(self):
        with self.assertRaises(ScenarioError):
            load_scenario('/nonexistent/scenario.json')

    def test_bundled_scenarios_load(self):
        names = sorted(n for n in os.listdir(settings.SCENARIO_DIR) if n.endswith('.json'))
        self.assertIn('two_block.json', names)
        for name in names:
            scenario = load_scenario(os.path.join(settings.SCENARIO_DIR, name))
            self.assertEqual(scenario.name, name[:-5])
            load_config(scenario.parameters)


class SpawningTests(SimpleTestCase):

    def test_flow_groups(self):
        flows = [{'route': [[0, 1], [18, 1], [18, 3], [0, 3]], 'count': 7, 'group_size': [2, 3]}]
        scenario = parse_scenario(with_changes(pedestrians={'flows': flows}))
        pedestrians = spawn_pedestrians(scenario, np.random.default_rng(0))
        self.assertLessEqual(len(pedestrians), 7)
        self.assertEqual([p.id for p in pedestrians], list(range(len(pedestrians))))
        for p in pedestrians:
            self.assertGreaterEqual(np.linalg.norm(p.position - scenario.robot_start), 1.5)
        by_group = {}
        for p in pedestrians:
            by_group.setdefault(p.group, []).append(p.desired_speed)
        for speeds in by_group.values():
            self.assertEqual(len(set(speeds)), 1)

    def test_scripted_groups_share_a_label(self):
        scripted = [
            {'route': [[5, 1], [19, 1]], 'speed': 0.6, 'start_time': 10, 'end_time': 30, 'group': 1},
            {'route': [[5, 2], [19, 2]], 'speed': 0.6, 'start_time': 10, 'end_time': 30, 'group': 1},
            {'route': [[5, 3], [19, 3]], 'speed': 0.6},
        ]
        scenario = parse_scenario(with_changes(pedestrians={'scripted': scripted}))
        pedestrians = spawn_pedestrians(scenario, np.random.default_rng(0))
        self.assertEqual(pedestrians[0].group, pedestrians[1].group)
        self.assertIsNotNone(pedestrians[0].group)
        self.assertIsNone(pedestrians[2].group)
        self.assertEqual(pedestrians[0].start_time, 10.0)

    def test_empty_flow(self):
        flows = [
            {'route': [[0, 1], [18, 1]], 'count': 0},
            {'route': [[8, 3], [18, 3]], 'count': 2, 'group_size': [2, 2]},
        ]
        scenario = parse_scenario(with_changes(pedestrians={'flows': flows}))
        self.assertEqual(scenario.flows[0].count, 0)
        world = build_world(scenario, load_config(scenario.parameters), 0)
        self.assertEqual({p.group for p in world.pedestrians if p.group is not None}, {0})

    def test_build_world_is_seeded(self):
        scenario = load_scenario(os.path.join(settings.SCENARIO_DIR, 'two_block.json'))
        config = load_config(scenario.parameters)
        first = build_world(scenario, config, 3)
        second = build_world(scenario, config, 3)
        self.assertEqual(len(first.pedestrians), len(second.pedestrians))
        for a, b in zip(first.pedestrians, second.pedestrians):
            self.assertTrue(np.array_equal(a.position, b.position))
            self.assertEqual(a.desired_speed, b.desired_speed)

    def test_comparison_pedestrian_is_last(self):
        scenario = load_scenario(os.path.join(settings.SCENARIO_DIR, 'two_block.json'))
        world = build_world(scenario, load_config(scenario.parameters), 0, with_robot=False, comparison=True)
        walker = world.pedestrians[-1]
        self.assertIsNone(world.robot)
        self.assertTrue(np.array_equal(walker.position, scenario.robot_start))
        self.assertEqual(walker.desired_speed, 1.2)
        self.assertEqual(len(walker.route), 2)
