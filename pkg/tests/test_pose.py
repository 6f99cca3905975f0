import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_labeled
from roweisposes.errors import ConfigError, InvalidDimensionError
from roweisposes.pose import (
    PoseDecision,
    WindowingConfig,
    calibrate_thresholds,
    recognize_frames,
    recognize_pose,
    window_filter,
)
from roweisposes.rda import LabeledMatrix, RdaModel, RoweisFactors, fit


def line_model(means=(-1.0, 1.0), alphabet=("a", "b")):
    """p = d = 1 with U = [[1]], so projected x equals x."""
    return RdaModel(
        U=np.eye(1), eigenvalues=np.ones(1), pose_alphabet=alphabet,
        class_means=np.array(means)[:, None], train_mean=np.zeros(1),
        input_class_means=np.array(means)[:, None], factors=RoweisFactors(0, 0),
    )


def decisions(distances, pose="a"):
    return [PoseDecision(pose, float(dd), t) for t, dd in enumerate(distances)]


class TestRecognizePose:
    def test_hand_argmin(self):
        dec = recognize_pose(line_model(), np.array([0.2]), frame_index=4)
        assert dec.pose == "b"
        assert dec.distance == pytest.approx(0.8, abs=1e-15)
        assert dec.frame_index == 4

    def test_tie_goes_to_first_in_alphabet(self):
        assert recognize_pose(line_model(), np.array([0.0])).pose == "a"
        assert recognize_pose(line_model(alphabet=("b", "a")), np.array([0.0])).pose == "b"

    def test_class_mean_has_zero_distance(self, rng):
        X, labels = random_labeled(rng, 6, 30, 4)
        model = fit(LabeledMatrix(X, tuple(labels)), (0, 1))
        for j, pose in enumerate(model.pose_alphabet):
            dec = recognize_pose(model, model.input_class_means[j])
            assert dec.pose == pose
            assert dec.distance < 1e-9

    def test_brute_force_minimum(self, rng):
        X, labels = random_labeled(rng, 6, 30, 4)
        model = fit(LabeledMatrix(X, tuple(labels)), (0.5, 0.5))
        frames = rng.normal(size=(6, 50)) * 3
        for t, dec in enumerate(recognize_frames(model, frames)):
            z = model.U.T @ frames[:, t]
            dist = [np.sqrt(np.sum((z - m) ** 2)) for m in model.class_means]
            assert dec.distance == pytest.approx(min(dist), abs=1e-12)
            assert dec.pose == model.pose_alphabet[int(np.argmin(dist))]
            assert dec.frame_index == t

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidDimensionError):
            recognize_pose(line_model(), np.zeros(2))


class TestWindowing:
    def test_all_below_threshold(self):
        d = decisions([0.1, 0.2, 0.3, 0.1, 0.2, 0.05, 0.3])
        assert window_filter(d, WindowingConfig(3, 0.5, 1)) == d

    def test_single_survivor(self):
        d = decisions([0.9, 0.7, 0.8, 0.95])
        out = window_filter(d, WindowingConfig(4, 0.5, 1))
        assert out == [d[1]]

    def test_single_survivor_matches_enumeration(self):
        d = decisions([0.9, 0.7, 0.8, 0.95])
        best = min(itertools.combinations(d, 1), key=lambda c: c[0].distance)
        assert window_filter(d, WindowingConfig(4, 0.5, 1)) == list(best)

    def test_infinite_threshold(self):
        d = decisions([5.0, 1e9, 3.0])
        assert window_filter(d, WindowingConfig(2)) == d

    def test_threshold_above_max(self):
        d = decisions([5.0, 7.0, 3.0])
        assert window_filter(d, WindowingConfig(2, 7.5, 1)) == d

    def test_empty(self):
        assert window_filter([], WindowingConfig()) == []

    def test_per_pose_thresholds(self):
        d = [PoseDecision("a", 0.5, 0), PoseDecision("b", 0.5, 1), PoseDecision("a", 0.1, 2)]
        out = window_filter(d, WindowingConfig(3, {"a": 0.3, "b": 0.6}, 1))
        assert out == [d[1], d[2]]

    def test_ties_keep_earlier(self):
        d = decisions([2.0, 2.0, 2.0])
        assert window_filter(d, WindowingConfig(3, 1.0, 2)) == d[:2]

    @pytest.mark.parametrize("kwargs", [dict(window_size=0), dict(min_keep_per_window=0),
                                        dict(window_size=2, min_keep_per_window=3),
                                        dict(distance_threshold=0.0), dict(distance_threshold={"a": -1.0})])
    def test_bad_config(self, kwargs):
        with pytest.raises(ConfigError):
            WindowingConfig(**kwargs)

    @settings(max_examples=100, deadline=None)
    @given(
        distances=st.lists(st.floats(0, 10), max_size=40),
        size=st.integers(1, 8),
        data=st.data(),
        threshold=st.floats(0.01, 10),
    )
    def test_subsequence_and_minimum_survivors(self, distances, size, data, threshold):
        keep = data.draw(st.integers(1, size))
        d = decisions(distances)
        out = window_filter(d, WindowingConfig(size, threshold, keep))
        idx = [x.frame_index for x in out]
        assert idx == sorted(set(idx))
        assert all(out[k] is d[i] for k, i in enumerate(idx))
        if d:
            assert out
        for start in range(0, len(d), size):
            window = d[start:start + size]
            survivors = [x for x in out if start <= x.frame_index < start + size]
            need = min(keep, len(window))
            below = [x for x in window if x.distance <= threshold]
            if len(below) >= need:
                assert survivors == below
            else:
                assert len(survivors) == need
                assert max(x.distance for x in survivors) <= min(
                    [x.distance for x in window if x not in survivors], default=np.inf)


class TestCalibration:
    def test_quantile_per_pose(self):
        model = line_model()
        X = np.array([[-1.1, -0.9, -1.3, 1.0, 1.2]])
        th = calibrate_thresholds(model, X, ["a", "a", "a", "b", "b"], quantile=1.0)
        assert th["a"] == pytest.approx(0.3)
        assert th["b"] == pytest.approx(0.2)

    def test_floor_on_noiseless_data(self):
        th = calibrate_thresholds(line_model(), np.array([[-1.0, 1.0]]), ["a", "b"])
        assert th == {"a": pytest.approx(2e-6), "b": pytest.approx(2e-6)}

    def test_unseen_pose_is_unbounded(self):
        th = calibrate_thresholds(line_model(), np.array([[-1.0]]), ["a"])
        assert th["b"] == np.inf

    def test_bad_quantile(self):
        with pytest.raises(ConfigError):
            calibrate_thresholds(line_model(), np.array([[-1.0]]), ["a"], quantile=0.0)
