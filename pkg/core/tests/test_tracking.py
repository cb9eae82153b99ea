import numpy as np
from django.test import SimpleTestCase

from navigation.config import TrackingParams
from navigation.tracking import PedestrianTracker, Track, form_groups, update_tracks


def track(track_id, position, velocity, t=0.0):
    return Track(id=track_id, position=np.asarray(position, dtype=float), last_seen=t,
                 velocity=np.asarray(velocity, dtype=float), observations=5)


class UpdateTracksTests(SimpleTestCase):

    def test_velocity_from_steady_motion(self):
        tracker = PedestrianTracker()
        for frame in range(10):
            t = frame * 0.05
            tracker.update([np.array([t * 1.0, 0.0])], t)
        self.assertEqual(len(tracker.tracks), 1)
        self.assertTrue(np.allclose(tracker.tracks[0].velocity, [1.0, 0.0], atol=0.05))

    def test_stale_track_is_removed(self):
        params = TrackingParams(stale_time=1.0)
        tracks, next_id = update_tracks([], [np.array([0.0, 0.0])], 0.0, params)
        tracks, next_id = update_tracks(tracks, [], 0.5, params, next_id)
        self.assertEqual(len(tracks), 1)
        tracks, next_id = update_tracks(tracks, [], 1.5, params, next_id)
        self.assertEqual(tracks, [])

    def test_far_detections_start_separate_tracks(self):
        params = TrackingParams(gate_radius=1.0)
        tracks, next_id = update_tracks([], [np.array([0.0, 0.0]), np.array([5.0, 0.0])], 0.0, params)
        self.assertEqual([t.id for t in tracks], [0, 1])
        self.assertEqual(next_id, 2)

    def test_identity_follows_the_nearest_detection(self):
        params = TrackingParams(gate_radius=1.0)
        tracks, next_id = update_tracks([], [np.array([0.0, 0.0]), np.array([3.0, 0.0])], 0.0, params)
        tracks, next_id = update_tracks(tracks, [np.array([3.1, 0.0]), np.array([0.1, 0.0])], 0.1, params, next_id)
        by_id = {t.id: t for t in tracks}
        self.assertTrue(np.allclose(by_id[0].position, [0.1, 0.0]))
        self.assertTrue(np.allclose(by_id[1].position, [3.1, 0.0]))

    def test_input_tracks_are_not_modified(self):
        original = [track(0, (0, 0), (0, 0))]
        update_tracks(original, [np.array([0.2, 0.0])], 0.1)
        self.assertTrue(np.array_equal(original[0].position, [0, 0]))

    def test_visible_tracks(self):
        tracker = PedestrianTracker()
        tracker.update([np.array([0.0, 0.0])], 0.0)
        tracker.update([], 0.1)
        self.assertEqual(len(tracker.tracks), 1)
        self.assertEqual(tracker.visible_tracks(0.1), [])


class FormGroupsTests(SimpleTestCase):

    def test_coherent_pair(self):
        groups = form_groups([track(0, (0, 0), (1, 0)), track(1, (0.8, 0), (1, 0))], (0, -5))
        self.assertEqual(len(groups), 1)
        self.assertTrue(np.allclose(groups[0].velocity, [1, 0]))
        self.assertEqual(groups[0].members, (0, 1))

    def test_opposing_motion(self):
        groups = form_groups([track(0, (0, 0), (1, 0)), track(1, (0.8, 0), (-1, 0))], (0, -5))
        self.assertEqual(len(groups), 2)

    def test_closest_member(self):
        tracks = [track(0, (3, 0.4), (1, 0)), track(1, (3, 0.6), (1, 0)), track(2, (2.9, 0.5), (1, 0))]
        groups = form_groups(tracks, (0, 0))
        self.assertEqual(len(groups), 1)
        self.assertTrue(np.allclose(groups[0].closest, (2.9, 0.5)))
        self.assertEqual(groups[0].closest_id, 2)
        self.assertEqual(groups[0].id, 0)

    def test_chains_are_transitive(self):
        tracks = [track(i, (1.2 * i, 0), (1, 0)) for i in range(4)]
        groups = form_groups(tracks, (0, 0), TrackingParams(group_distance=1.5))
        self.assertEqual(len(groups), 1)
        self.assertEqual(groups[0].size, 4)

    def test_speed_difference_splits(self):
        groups = form_groups([track(0, (0, 0), (0.5, 0)), track(1, (0.5, 0), (1.2, 0))], (0, 0))
        self.assertEqual([g.id for g in groups], [0, 1])

    def test_standing_people_group_by_distance(self):
        groups = form_groups([track(0, (0, 0), (0, 0)), track(1, (0.5, 0), (0.05, 0))], (0, 0))
        self.assertEqual(len(groups), 1)
