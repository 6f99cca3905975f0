"""Per-frame pose recognition and windowed removal of transition frames."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ConfigError, InvalidDimensionError
from .rda import RdaModel, project

# Thresholds never go below this fraction of the closest pair of class means.
THRESHOLD_FLOOR = 1e-6


@dataclass(frozen=True)
class PoseDecision:
    pose: str
    distance: float
    frame_index: int = 0


@dataclass(frozen=True)
class WindowingConfig:
    """Windowing knobs.

    ``distance_threshold`` is either one absolute threshold in subspace
    units or a mapping from pose label to threshold (see
    :func:`calibrate_thresholds`).
    """

    window_size: int = 5
    distance_threshold: Union[float, Mapping] = float("inf")
    min_keep_per_window: int = 1

    def __post_init__(self):
        if int(self.window_size) != self.window_size or self.window_size < 1:
            raise ConfigError(f"window_size must be a positive integer, got {self.window_size}")
        if not 1 <= self.min_keep_per_window <= self.window_size:
            raise ConfigError(
                f"min_keep_per_window must lie in [1, {self.window_size}], got {self.min_keep_per_window}"
            )
        th = self.distance_threshold
        values = th.values() if isinstance(th, Mapping) else [th]
        if any(not v > 0 for v in values):
            raise ConfigError("distance thresholds must be positive")
        if isinstance(th, Mapping):
            object.__setattr__(self, "distance_threshold", dict(th))

    def threshold_for(self, pose) -> float:
        th = self.distance_threshold
        if isinstance(th, Mapping):
            return th.get(pose, float("inf"))
        return float(th)


def _nearest(model: RdaModel, Z: np.ndarray):
    # Z: (p, n) projected frames. argmin picks the first minimum, i.e. alphabet order.
    diff = Z.T[:, None, :] - model.class_means[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    best = np.argmin(dist, axis=1)
    return best, dist[np.arange(dist.shape[0]), best]


def recognize_pose(model: RdaModel, x, frame_index: int = 0) -> PoseDecision:
    """Pose whose projected class mean is nearest to the projection of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidDimensionError(f"expected a single d-vector, got shape {x.shape}")
    best, dist = _nearest(model, project(model, x)[:, None])
    return PoseDecision(model.pose_alphabet[best[0]], float(dist[0]), frame_index)


def recognize_frames(model: RdaModel, X, frame_indices=None) -> list:
    """Recognize every column of a ``d x T`` matrix of vectorized frames."""
    X = np.asarray(X, dtype=np.float64)
    best, dist = _nearest(model, project(model, X))
    if frame_indices is None:
        frame_indices = range(X.shape[1])
    return [
        PoseDecision(model.pose_alphabet[b], float(dd), int(t))
        for b, dd, t in zip(best, dist, frame_indices)
    ]


def window_filter(decisions, cfg: WindowingConfig) -> list:
    """Drop far-from-every-pose frames, keeping a minimum per window.

    The stream is cut into consecutive windows of ``window_size``. Frames
    whose distance exceeds the threshold of their pose are removed, unless
    that leaves fewer than ``min_keep_per_window`` frames in the window; then
    the lowest-distance frames (earlier frames first on ties) are retained
    until exactly that many remain. Order is preserved.
    """
    decisions = list(decisions)
    kept = []
    for start in range(0, len(decisions), cfg.window_size):
        window = decisions[start : start + cfg.window_size]
        keep = [d.distance <= cfg.threshold_for(d.pose) for d in window]
        need = min(cfg.min_keep_per_window, len(window))
        if sum(keep) < need:
            ranked = sorted(range(len(window)), key=lambda i: (window[i].distance, i))
            keep = [False] * len(window)
            for i in ranked[:need]:
                keep[i] = True
        kept.extend(d for d, k in zip(window, keep) if k)
    return kept


def calibrate_thresholds(model: RdaModel, X, labels, quantile: float = 0.95) -> dict:
    """Per-pose distance thresholds from training exemplars.

    For each pose, the ``quantile`` of the distances between its projected
    exemplars and its projected class mean. A floor of ``1e-6`` times the
    smallest distance between two class means keeps thresholds positive on
    noiseless data.
    """
    if not 0.0 < quantile <= 1.0:
        raise ConfigError(f"quantile must lie in (0, 1], got {quantile}")
    Z = project(model, np.asarray(X, dtype=np.float64))
    labels = list(labels)
    M = model.class_means
    if len(M) > 1:
        gaps = np.linalg.norm(M[:, None, :] - M[None, :, :], axis=-1)
        closest = float(np.min(gaps[~np.eye(len(M), dtype=bool)]))
    else:
        closest = 0.0
    floor = THRESHOLD_FLOOR * closest if closest > 0 else THRESHOLD_FLOOR
    thresholds = {}
    for j, pose in enumerate(model.pose_alphabet):
        cols = [i for i, l in enumerate(labels) if l == pose]
        if not cols:
            thresholds[pose] = float("inf")
            continue
        dist = np.linalg.norm(Z[:, cols] - M[j][:, None], axis=0)
        thresholds[pose] = max(float(np.quantile(dist, quantile)), floor)
    return thresholds
