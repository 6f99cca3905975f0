"""Dataset manifests, the line-delimited interchange format, LOPO folds and a
synthetic skeleton generator.

Interchange format (one JSON object per line, one frame per record)::

    {"subject": "s01", "action": "walk", "sequence_id": "s01-walk-0",
     "frame_index": 0, "pose": "stand", "coords": [x1, y1, z1, x2, ...]}

``coords`` is joint-major and holds ``3 * joint_count`` numbers; each may
also be a hexadecimal float string (``float.hex``). ``pose`` is optional
(``null`` or absent for frames that are not pose exemplars). Frames of a
sequence appear in increasing ``frame_index`` order. See
``docs/interchange.md`` for the field tables.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, ParseError, ProtocolError, SchemaError
from .skeleton import PreprocessConfig, Sequence

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FileEntry:
    path: str
    subject: str


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    joint_count: int
    hip_index: int
    left_shoulder_index: int
    right_shoulder_index: int
    selected_joints: tuple
    actions: tuple
    pose_alphabet: tuple
    files: tuple = ()
    vertical_axis: str = "y"
    depth_axis: Optional[str] = None

    def __post_init__(self):
        for name in ("selected_joints", "actions", "pose_alphabet", "files"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(
            self, "files", tuple(f if isinstance(f, FileEntry) else FileEntry(**f) for f in self.files)
        )
        if self.joint_count < 3:
            raise SchemaError(f"joint_count must be at least 3, got {self.joint_count}")
        if not self.pose_alphabet:
            raise SchemaError("pose alphabet must not be empty")
        if not self.actions:
            raise SchemaError("action list must not be empty")
        if any(not f.subject for f in self.files):
            raise SchemaError("every file entry needs a subject id")
        # Raises SchemaError on bad indices or axes.
        cfg = self.preprocess_config()
        cfg.validate(self.joint_count)
        object.__setattr__(self, "depth_axis", cfg.depth_axis)

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(
            hip_index=self.hip_index,
            left_shoulder_index=self.left_shoulder_index,
            right_shoulder_index=self.right_shoulder_index,
            selected_joints=self.selected_joints,
            vertical_axis=self.vertical_axis,
            depth_axis=self.depth_axis,
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "joint_count": self.joint_count,
            "hip_index": self.hip_index,
            "left_shoulder_index": self.left_shoulder_index,
            "right_shoulder_index": self.right_shoulder_index,
            "vertical_axis": self.vertical_axis,
            "depth_axis": self.depth_axis,
            "selected_joints": list(self.selected_joints),
            "actions": list(self.actions),
            "pose_alphabet": list(self.pose_alphabet),
            "files": [{"path": f.path, "subject": f.subject} for f in self.files],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported manifest schema_version {version!r}")
        try:
            return cls(
                name=str(d["name"]),
                joint_count=int(d["joint_count"]),
                hip_index=int(d["hip_index"]),
                left_shoulder_index=int(d["left_shoulder_index"]),
                right_shoulder_index=int(d["right_shoulder_index"]),
                selected_joints=tuple(int(j) for j in d["selected_joints"]),
                actions=tuple(d["actions"]),
                pose_alphabet=tuple(d["pose_alphabet"]),
                files=tuple(FileEntry(str(f["path"]), str(f["subject"])) for f in d.get("files", [])),
                vertical_axis=d.get("vertical_axis", "y"),
                depth_axis=d.get("depth_axis"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"malformed manifest: {exc!r}") from None

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, exc.msg) from None
        return cls.from_dict(doc)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class Fold:
    held_out_subject: str
    train: tuple
    test: tuple


def _coordinate(value, path, line) -> float:
    if isinstance(value, bool):
        raise ParseError(path, line, f"coordinate {value!r} is not a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float.fromhex(value)
        except ValueError:
            pass
    raise ParseError(path, line, f"coordinate {value!r} is not a number")


def _parse_record(text: str, path, line: int, joint_count: int) -> dict:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, line, f"invalid JSON: {exc.msg}") from None
    if not isinstance(rec, dict):
        raise ParseError(path, line, "record must be a JSON object")
    for key in ("subject", "action", "sequence_id", "frame_index", "coords"):
        if key not in rec:
            raise ParseError(path, line, f"missing field {key!r}")
    coords = rec["coords"]
    if not isinstance(coords, list):
        raise ParseError(path, line, "coords must be a list")
    if len(coords) % 3:
        raise ParseError(path, line, f"coords has {len(coords)} values, not a multiple of 3")
    values = [_coordinate(v, path, line) for v in coords]
    if not all(math.isfinite(v) for v in values):
        raise ParseError(path, line, "coords contain non-finite values")
    if len(values) != 3 * joint_count:
        raise SchemaError(f"{path}:{line}: {len(values) // 3} joints, manifest expects {joint_count}")
    frame_index = rec["frame_index"]
    if isinstance(frame_index, bool) or not isinstance(frame_index, int) or frame_index < 0:
        raise ParseError(path, line, f"frame_index must be a nonnegative integer, got {frame_index!r}")
    pose = rec.get("pose")
    return {
        "subject": str(rec["subject"]),
        "action": str(rec["action"]),
        "sequence_id": str(rec["sequence_id"]),
        "frame_index": frame_index,
        "pose": None if pose is None else str(pose),
        "coords": np.array(values).reshape(joint_count, 3),
    }


def read_records(path, joint_count: int) -> list:
    """Parse one interchange file into ``Sequence`` objects, in file order."""
    path = Path(path)
    groups: dict = {}
    with path.open() as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            rec = _parse_record(text, path, line, joint_count)
            g = groups.setdefault(rec["sequence_id"], {"first": rec, "frames": [], "stamps": [], "poses": []})
            first = g["first"]
            if (rec["subject"], rec["action"]) != (first["subject"], first["action"]):
                raise ParseError(path, line, f"sequence {rec['sequence_id']!r} changes subject or action")
            if g["stamps"] and rec["frame_index"] <= g["stamps"][-1]:
                raise ParseError(path, line, f"frame_index {rec['frame_index']} is not increasing")
            g["frames"].append(rec["coords"])
            g["stamps"].append(rec["frame_index"])
            g["poses"].append(rec["pose"])
    sequences = []
    for seq_id, g in groups.items():
        poses = g["poses"] if any(p is not None for p in g["poses"]) else None
        sequences.append(
            Sequence.from_array(
                np.stack(g["frames"]), g["first"]["action"], g["first"]["subject"], seq_id, poses, g["stamps"]
            )
        )
    return sequences


def load_sequences(manifest: DatasetManifest, root) -> list:
    """Load every file listed in ``manifest`` relative to ``root``.

    Raises
    ------
    ParseError
        Malformed record (with file and line).
    SchemaError
        Joint-count, subject, action or pose-label mismatch with the manifest.
    """
    root = Path(root)
    actions, poses = set(manifest.actions), set(manifest.pose_alphabet)
    out = []
    for entry in manifest.files:
        path = root / entry.path
        if not path.exists():
            raise SchemaError(f"listed data file {path} does not exist")
        for seq in read_records(path, manifest.joint_count):
            if seq.subject_id != entry.subject:
                raise SchemaError(f"{path}: sequence {seq.sequence_id!r} has subject {seq.subject_id!r}, "
                                  f"manifest lists {entry.subject!r}")
            if seq.action_label not in actions:
                raise SchemaError(f"{path}: unknown action {seq.action_label!r}")
            bad = {p for p in (seq.pose_annotations or ()) if p is not None and p not in poses}
            if bad:
                raise SchemaError(f"{path}: unknown pose labels {sorted(bad)}")
            out.append(seq)
    return out


def load_dataset(manifest_path):
    """Load a manifest and its sequences; data paths are relative to the manifest."""
    manifest_path = Path(manifest_path)
    manifest = DatasetManifest.load(manifest_path)
    return load_sequences(manifest, manifest_path.parent), manifest


def _record(seq: Sequence, k: int) -> str:
    frame = seq.frames[k]
    pose = seq.pose_annotations[k] if seq.pose_annotations is not None else None
    rec = {
        "subject": seq.subject_id,
        "action": seq.action_label,
        "sequence_id": seq.sequence_id,
        "frame_index": frame.timestamp_index,
        "pose": pose,
        # repr of a float is the shortest decimal that round-trips exactly
        "coords": [float(v) for v in frame.joints.reshape(-1)],
    }
    return json.dumps(rec, separators=(",", ":"))


def save_dataset(sequences, manifest: DatasetManifest, root) -> DatasetManifest:
    """Write one interchange file per subject plus ``manifest.json`` under ``root``.

    Returns the manifest with its file list rewritten to the written files.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    by_subject: dict = {}
    for seq in sequences:
        by_subject.setdefault(seq.subject_id, []).append(seq)
    files = []
    for subject in sorted(by_subject):
        name = f"{subject}.jsonl"
        with (root / name).open("w") as fh:
            for seq in by_subject[subject]:
                for k in range(len(seq)):
                    fh.write(_record(seq, k) + "\n")
        files.append(FileEntry(name, subject))
    manifest = replace(manifest, files=tuple(files))
    manifest.save(root / "manifest.json")
    return manifest


def lopo_folds(sequences) -> list:
    """Leave-one-person-out folds, ordered by subject id."""
    sequences = list(sequences)
    subjects = sorted({s.subject_id for s in sequences})
    if len(subjects) < 2:
        raise ProtocolError(f"leave-one-person-out needs at least 2 subjects, got {len(subjects)}")
    return [
        Fold(
            held_out_subject=subject,
            train=tuple(s for s in sequences if s.subject_id != subject),
            test=tuple(s for s in sequences if s.subject_id == subject),
        )
        for subject in subjects
    ]


# -- synthetic data ----------------------------------------------------------

# Canonical standing skeleton: y up, z depth, left-to-right shoulders along +x.
SYNTHETIC_JOINTS = (
    "hip_center", "spine", "neck", "head",
    "shoulder_left", "elbow_left", "hand_left",
    "shoulder_right", "elbow_right", "hand_right",
    "hip_left", "knee_left", "foot_left",
    "hip_right", "knee_right", "foot_right",
)
_BASE = np.array([
    [0.0, 0.0, 0.0], [0.0, 0.25, 0.0], [0.0, 0.5, 0.0], [0.0, 0.65, 0.0],
    [-0.2, 0.48, 0.0], [-0.25, 0.22, 0.0], [-0.27, 0.0, 0.0],
    [0.2, 0.48, 0.0], [0.25, 0.22, 0.0], [0.27, 0.0, 0.0],
    [-0.1, -0.05, 0.0], [-0.1, -0.5, 0.0], [-0.1, -0.95, 0.0],
    [0.1, -0.05, 0.0], [0.1, -0.5, 0.0], [0.1, -0.95, 0.0],
])
_HIP, _LS, _RS = 0, 4, 7
_MOVABLE = (1, 2, 3, 5, 6, 8, 9, 11, 12, 14, 15)


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of a generated dataset.

    ``noise_sigma`` is the per-coordinate jitter in normalized body units
    (the hip to shoulder-midpoint distance is 1). ``n_poses`` defaults to
    ``max(n_actions, poses_per_action + 1)``.
    """

    n_subjects: int = 4
    n_actions: int = 5
    poses_per_action: int = 3
    frames_per_pose: int = 8
    noise_sigma: float = 0.02
    n_poses: Optional[int] = None
    transition_frames: int = 0
    repetitions: int = 1
    pose_spread: float = 0.35

    def __post_init__(self):
        counts = ("n_subjects", "n_actions", "poses_per_action", "frames_per_pose", "repetitions")
        for name in counts:
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v}")
        if self.transition_frames < 0:
            raise ConfigError("transition_frames must be nonnegative")
        if not self.noise_sigma >= 0:
            raise ConfigError(f"noise_sigma must be nonnegative, got {self.noise_sigma}")
        if not self.pose_spread > 0:
            raise ConfigError("pose_spread must be positive")
        n_poses = self.n_poses if self.n_poses is not None else max(self.n_actions, self.poses_per_action + 1)
        if n_poses < 1 or n_poses * (n_poses - 1) ** (self.poses_per_action - 1) < self.n_actions:
            raise ConfigError(
                f"{n_poses} poses cannot form {self.n_actions} distinct actions of {self.poses_per_action} poses"
            )
        object.__setattr__(self, "n_poses", int(n_poses))


def synthetic_prototypes(spec: SyntheticSpec, seed: int) -> np.ndarray:
    """Pose prototypes in normalized coordinates, shape ``(n_poses, J, 3)``.

    Hip-center, shoulder and hip joints keep their base positions so each
    prototype is already normalized; the other joints get random offsets.
    """
    rng = np.random.default_rng([seed, 0])
    base = _BASE / np.linalg.norm(0.5 * (_BASE[_LS] + _BASE[_RS]))
    protos = np.repeat(base[None], spec.n_poses, axis=0)
    offsets = rng.normal(scale=spec.pose_spread, size=(spec.n_poses, len(_MOVABLE), 3))
    protos[:, _MOVABLE, :] += offsets
    return protos


def _action_recipes(spec: SyntheticSpec, rng) -> list:
    recipes: list = []
    seen = set()
    while len(recipes) < spec.n_actions:
        seq = [int(rng.integers(spec.n_poses))]
        while len(seq) < spec.poses_per_action:
            nxt = int(rng.integers(spec.n_poses))
            if nxt != seq[-1]:
                seq.append(nxt)
        if tuple(seq) not in seen:
            seen.add(tuple(seq))
            recipes.append(tuple(seq))
    return recipes


def _vertical_rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    # rotation about y, acting on row vectors
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def generate_synthetic(spec: SyntheticSpec, seed: int = 0):
    """Generate labeled pose sequences and their manifest.

    Every action is a fixed sequence of poses, each held for
    ``frames_per_pose`` frames with Gaussian jitter; ``transition_frames``
    interpolated, unannotated frames separate consecutive poses. Each
    subject gets a random rotation about the vertical axis, translation and
    scale that preprocessing cancels. Pure function of ``(spec, seed)``.

    Returns
    -------
    sequences : list of Sequence
    manifest : DatasetManifest
    """
    protos = synthetic_prototypes(spec, seed)
    rng = np.random.default_rng([seed, 1])
    recipes = _action_recipes(spec, rng)
    width = max(2, len(str(max(spec.n_subjects, spec.n_actions, spec.n_poses))))
    subjects = [f"s{i + 1:0{width}d}" for i in range(spec.n_subjects)]
    actions = [f"a{i + 1:0{width}d}" for i in range(spec.n_actions)]
    poses = [f"p{i + 1:0{width}d}" for i in range(spec.n_poses)]

    sequences = []
    for subject in subjects:
        R = _vertical_rotation(rng.uniform(0.0, 2.0 * math.pi))
        shift = rng.uniform(-1.0, 1.0, size=3) + np.array([0.0, 0.0, 2.5])
        scale = rng.uniform(0.3, 0.5)
        for action, recipe in zip(actions, recipes):
            for rep in range(spec.repetitions):
                frames, labels = [], []
                for k, pose in enumerate(recipe):
                    if k and spec.transition_frames:
                        prev = protos[recipe[k - 1]]
                        for step in range(1, spec.transition_frames + 1):
                            w = step / (spec.transition_frames + 1)
                            frames.append((1.0 - w) * prev + w * protos[pose])
                            labels.append(None)
                    for _ in range(spec.frames_per_pose):
                        frames.append(protos[pose].copy())
                        labels.append(poses[pose])
                coords = np.stack(frames)
                if spec.noise_sigma > 0:
                    coords = coords + rng.normal(scale=spec.noise_sigma, size=coords.shape)
                coords = scale * (coords @ R) + shift
                sequences.append(
                    Sequence.from_array(coords, action, subject, f"{subject}-{action}-{rep}", tuple(labels))
                )

    manifest = DatasetManifest(
        name="synthetic",
        joint_count=len(SYNTHETIC_JOINTS),
        hip_index=_HIP,
        left_shoulder_index=_LS,
        right_shoulder_index=_RS,
        selected_joints=tuple(j for j in range(len(SYNTHETIC_JOINTS)) if j != _HIP),
        actions=tuple(actions),
        pose_alphabet=tuple(poses),
        files=tuple(FileEntry(f"{s}.jsonl", s) for s in subjects),
        vertical_axis="y",
        depth_axis="z",
    )
    return sequences, manifest
