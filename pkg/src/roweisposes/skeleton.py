"""Skeletal data model and frame normalization.

Frames are ``(J, 3)`` arrays of joint coordinates. Normalization runs in a
fixed order: hip translation, shoulder alignment (a rotation about the
vertical axis), scale removal, joint selection. The array helpers prefixed
with an underscore operate on stacks of frames of shape ``(..., J, 3)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DegenerateSkeletonError, SchemaError

AXES = {"x": 0, "y": 1, "z": 2}
_DEFAULT_DEPTH = {"x": "z", "y": "z", "z": "y"}
# Relative size below which a shoulder line or reference length counts as zero.
DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Frame:
    """One skeleton snapshot: ``joints`` has shape ``(J, 3)``."""

    joints: np.ndarray
    timestamp_index: int = 0

    def __post_init__(self):
        joints = np.array(self.joints, dtype=np.float64)
        if joints.ndim != 2 or joints.shape[1] != 3 or joints.shape[0] < 1:
            raise SchemaError(f"frame joints must have shape (J, 3), got {joints.shape}")
        if not np.all(np.isfinite(joints)):
            raise SchemaError("frame has non-finite coordinates")
        if self.timestamp_index < 0:
            raise SchemaError(f"timestamp_index must be nonnegative, got {self.timestamp_index}")
        joints.setflags(write=False)
        object.__setattr__(self, "joints", joints)

    @property
    def n_joints(self) -> int:
        return self.joints.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.timestamp_index == other.timestamp_index and np.array_equal(
            self.joints, other.joints
        )

    def __repr__(self):
        return f"Frame(n_joints={self.n_joints}, timestamp_index={self.timestamp_index})"


@dataclass(frozen=True, eq=False)
class Sequence:
    """A labeled, subject-attributed, time-ordered list of frames.

    ``pose_annotations`` holds one entry per frame (``None`` for frames that
    are not pose exemplars) or is ``None`` altogether.
    """

    frames: tuple
    action_label: str
    subject_id: str
    sequence_id: str = ""
    pose_annotations: Optional[tuple] = None

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise SchemaError("a sequence needs at least one frame")
        stamps = [f.timestamp_index for f in frames]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise SchemaError(f"sequence {self.sequence_id!r}: timestamps must strictly increase")
        if len({f.n_joints for f in frames}) != 1:
            raise SchemaError(f"sequence {self.sequence_id!r}: frames differ in joint count")
        object.__setattr__(self, "frames", frames)
        if self.pose_annotations is not None:
            ann = tuple(self.pose_annotations)
            if len(ann) != len(frames):
                raise SchemaError(
                    f"sequence {self.sequence_id!r}: {len(ann)} pose annotations for {len(frames)} frames"
                )
            object.__setattr__(self, "pose_annotations", ann)

    def __len__(self):
        return len(self.frames)

    @property
    def n_joints(self) -> int:
        return self.frames[0].n_joints

    @property
    def coords(self) -> np.ndarray:
        """Stacked joint coordinates, shape ``(T, J, 3)``."""
        return np.stack([f.joints for f in self.frames])

    @property
    def timestamps(self) -> tuple:
        return tuple(f.timestamp_index for f in self.frames)

    @property
    def has_annotations(self) -> bool:
        return self.pose_annotations is not None and any(a is not None for a in self.pose_annotations)

    @classmethod
    def from_array(cls, coords, action_label, subject_id, sequence_id="", pose_annotations=None, timestamps=None):
        coords = np.asarray(coords, dtype=np.float64)
        if timestamps is None:
            timestamps = range(coords.shape[0])
        frames = tuple(Frame(c, int(t)) for c, t in zip(coords, timestamps))
        return cls(frames, action_label, subject_id, sequence_id, pose_annotations)

    def with_coords(self, coords) -> "Sequence":
        """Copy of this sequence with new per-frame coordinates (labels and timestamps kept)."""
        frames = tuple(Frame(c, f.timestamp_index) for c, f in zip(coords, self.frames))
        return replace(self, frames=frames)

    def __eq__(self, other):
        if not isinstance(other, Sequence):
            return NotImplemented
        return (
            self.action_label == other.action_label
            and self.subject_id == other.subject_id
            and self.sequence_id == other.sequence_id
            and self.pose_annotations == other.pose_annotations
            and self.frames == other.frames
        )

    def __repr__(self):
        return (
            f"Sequence(action={self.action_label!r}, subject={self.subject_id!r}, "
            f"id={self.sequence_id!r}, n_frames={len(self)})"
        )


@dataclass(frozen=True)
class PreprocessConfig:
    """Landmark indices and joint selection for one dataset schema.

    ``depth_axis`` is the horizontal axis along which the shoulder line must
    have no component after alignment; it defaults to ``z`` (``y`` when the
    vertical axis is ``z``). The remaining axis is the lateral one, and the
    left-to-right shoulder vector ends up pointing along it positively.
    """

    hip_index: int
    left_shoulder_index: int
    right_shoulder_index: int
    selected_joints: tuple
    vertical_axis: str = "y"
    depth_axis: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "selected_joints", tuple(int(j) for j in self.selected_joints))
        if not self.selected_joints:
            raise SchemaError("selected_joints must not be empty")
        if len(set(self.selected_joints)) != len(self.selected_joints):
            raise SchemaError("selected_joints contains duplicates")
        landmarks = (self.hip_index, self.left_shoulder_index, self.right_shoulder_index)
        if len(set(landmarks)) != 3:
            raise SchemaError(f"hip and shoulder indices must be distinct, got {landmarks}")
        if min(landmarks + self.selected_joints) < 0:
            raise SchemaError("joint indices must be nonnegative")
        if self.vertical_axis not in AXES:
            raise SchemaError(f"vertical_axis must be one of x, y, z; got {self.vertical_axis!r}")
        depth = self.depth_axis or _DEFAULT_DEPTH[self.vertical_axis]
        if depth not in AXES or depth == self.vertical_axis:
            raise SchemaError(f"depth_axis {depth!r} must be a horizontal axis")
        object.__setattr__(self, "depth_axis", depth)

    @property
    def axes(self) -> tuple:
        """``(lateral, depth, vertical)`` coordinate indices."""
        v, dep = AXES[self.vertical_axis], AXES[self.depth_axis]
        lat = 3 - v - dep
        return lat, dep, v

    def validate(self, n_joints: int) -> None:
        """Check every index against a raw joint count."""
        indices = (self.hip_index, self.left_shoulder_index, self.right_shoulder_index) + self.selected_joints
        bad = [i for i in indices if i >= n_joints]
        if bad:
            raise SchemaError(f"joint indices {bad} out of range for {n_joints} joints")

    def to_dict(self) -> dict:
        return {
            "hip_index": self.hip_index,
            "left_shoulder_index": self.left_shoulder_index,
            "right_shoulder_index": self.right_shoulder_index,
            "selected_joints": list(self.selected_joints),
            "vertical_axis": self.vertical_axis,
            "depth_axis": self.depth_axis,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        return cls(
            hip_index=int(d["hip_index"]),
            left_shoulder_index=int(d["left_shoulder_index"]),
            right_shoulder_index=int(d["right_shoulder_index"]),
            selected_joints=tuple(d["selected_joints"]),
            vertical_axis=d.get("vertical_axis", "y"),
            depth_axis=d.get("depth_axis"),
        )

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# -- array kernels over (..., J, 3) ------------------------------------------


def _translate(coords: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    return coords - coords[..., cfg.hip_index : cfg.hip_index + 1, :]


def _shoulder_rotation(coords: np.ndarray, cfg: PreprocessConfig):
    lat, dep, _ = cfg.axes
    line = coords[..., cfg.right_shoulder_index, :] - coords[..., cfg.left_shoulder_index, :]
    a, b = line[..., lat], line[..., dep]
    r = np.hypot(a, b)
    scale = np.max(np.abs(coords), axis=(-2, -1))
    degenerate = ~(r > DEGENERATE_RTOL * scale)
    return a, b, r, degenerate


def _rotate(coords: np.ndarray, cfg: PreprocessConfig, a, b, r) -> np.ndarray:
    lat, dep, _ = cfg.axes
    c = (a / r)[..., None]
    s = (b / r)[..., None]
    out = np.array(coords, copy=True)
    out[..., lat] = c * coords[..., lat] + s * coords[..., dep]
    out[..., dep] = -s * coords[..., lat] + c * coords[..., dep]
    return out


def _reference_length(coords: np.ndarray, cfg: PreprocessConfig):
    mid = 0.5 * (coords[..., cfg.left_shoulder_index, :] + coords[..., cfg.right_shoulder_index, :])
    ref = np.linalg.norm(mid - coords[..., cfg.hip_index, :], axis=-1)
    scale = np.max(np.abs(coords), axis=(-2, -1))
    degenerate = ~(ref > DEGENERATE_RTOL * scale)
    return ref, degenerate


def _check_indices(n_joints: int, *indices: int) -> None:
    bad = [i for i in indices if not 0 <= i < n_joints]
    if bad:
        raise SchemaError(f"joint indices {bad} out of range for {n_joints} joints")


# -- per-frame operations ----------------------------------------------------


def translate_hip_to_origin(frame: Frame, cfg: PreprocessConfig) -> Frame:
    _check_indices(frame.n_joints, cfg.hip_index)
    return Frame(_translate(frame.joints, cfg), frame.timestamp_index)


def align_shoulders(frame: Frame, cfg: PreprocessConfig) -> Frame:
    """Rotate about the vertical axis so the shoulder line has no depth component.

    After rotation the left-to-right shoulder vector points along the
    positive lateral axis. Heights are untouched.
    """
    _check_indices(frame.n_joints, cfg.left_shoulder_index, cfg.right_shoulder_index)
    a, b, r, degenerate = _shoulder_rotation(frame.joints, cfg)
    if degenerate:
        raise DegenerateSkeletonError("shoulders coincide in the horizontal plane; orientation undefined")
    return Frame(_rotate(frame.joints, cfg, a, b, r), frame.timestamp_index)


def remove_scale(frame: Frame, cfg: PreprocessConfig) -> Frame:
    """Divide all coordinates by the hip to shoulder-midpoint distance."""
    _check_indices(frame.n_joints, cfg.hip_index, cfg.left_shoulder_index, cfg.right_shoulder_index)
    ref, degenerate = _reference_length(frame.joints, cfg)
    if degenerate:
        raise DegenerateSkeletonError("zero hip to shoulder-midpoint distance")
    return Frame(frame.joints / ref, frame.timestamp_index)


def select_joints(frame: Frame, cfg_or_indices) -> Frame:
    indices = cfg_or_indices.selected_joints if isinstance(cfg_or_indices, PreprocessConfig) else tuple(cfg_or_indices)
    if not indices:
        raise SchemaError("joint selection is empty")
    _check_indices(frame.n_joints, *indices)
    return Frame(frame.joints[list(indices)], frame.timestamp_index)


def vectorize(frame) -> np.ndarray:
    """Flatten a frame to ``[x_1..x_J, y_1..y_J, z_1..z_J]``."""
    joints = frame.joints if isinstance(frame, Frame) else np.asarray(frame, dtype=np.float64)
    return np.ascontiguousarray(joints.T).reshape(-1)


def vectorize_many(coords) -> np.ndarray:
    """Vectorize a ``(T, J, 3)`` stack into a ``(3J, T)`` column matrix."""
    coords = np.asarray(coords, dtype=np.float64)
    T = coords.shape[0]
    return np.ascontiguousarray(coords.transpose(0, 2, 1).reshape(T, -1).T)


def devectorize(x, timestamp_index: int = 0) -> Frame:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size % 3 or x.size == 0:
        raise SchemaError(f"cannot devectorize a vector of length {x.size}")
    return Frame(x.reshape(3, -1).T, timestamp_index)


def normalize_coords(coords, cfg: PreprocessConfig, first_frame_index: int = 0) -> np.ndarray:
    """Run all four preprocessing steps on a ``(T, J, 3)`` stack.

    Raises
    ------
    DegenerateSkeletonError
        Naming the (offset) position of the first frame that cannot be
        normalized.
    """
    coords = np.asarray(coords, dtype=np.float64)
    cfg.validate(coords.shape[-2])
    out = _translate(coords, cfg)
    a, b, r, degenerate = _shoulder_rotation(out, cfg)
    if np.any(degenerate):
        k = int(np.flatnonzero(np.atleast_1d(degenerate))[0])
        raise DegenerateSkeletonError(
            "shoulders coincide in the horizontal plane; orientation undefined", first_frame_index + k
        )
    out = _rotate(out, cfg, a, b, r)
    ref, degenerate = _reference_length(out, cfg)
    if np.any(degenerate):
        k = int(np.flatnonzero(np.atleast_1d(degenerate))[0])
        raise DegenerateSkeletonError("zero hip to shoulder-midpoint distance", first_frame_index + k)
    out = out / ref[..., None, None]
    return out[..., list(cfg.selected_joints), :]


def preprocess(seq: Sequence, cfg: PreprocessConfig) -> Sequence:
    """Normalize every frame of ``seq``; labels and annotations are kept."""
    cfg.validate(seq.n_joints)
    return seq.with_coords(normalize_coords(seq.coords, cfg))


def preprocess_frame(frame: Frame, cfg: PreprocessConfig) -> Frame:
    cfg.validate(frame.n_joints)
    return Frame(normalize_coords(frame.joints[None], cfg)[0], frame.timestamp_index)
