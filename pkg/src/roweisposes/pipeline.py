"""Train/test pipeline: preprocessing, RDA pose subspace, windowing and an
HMM bank, plus leave-one-person-out evaluation and Roweis-map sweeps."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import hmm as hmm_mod
from .dataset import DatasetManifest, lopo_folds
from .errors import ConfigError, DegenerateSkeletonError, ProtocolError, RoweisposesError
from .pose import WindowingConfig, calibrate_thresholds, recognize_frames, window_filter
from .rda import KERNEL_KINDS, LabeledMatrix, RdaModel, RoweisFactors, fit, project, supervision_level
from .skeleton import PreprocessConfig, Sequence, normalize_coords, vectorize_many

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

# Reference average LOPO accuracy (%) per dataset and (r1, r2).
REFERENCE_ACCURACY = {
    "TST": {
        (0.0, 0.0): 81.44, (0.0, 1.0): 76.14, (1.0, 0.0): 82.20, (1.0, 1.0): 76.52,
        (0.0, 0.5): 79.17, (1.0, 0.5): 80.68, (0.5, 0.0): 79.92, (0.5, 1.0): 80.30, (0.5, 0.5): 81.82,
    },
    "UTKinect": {
        (0.0, 0.0): 38.50, (0.0, 1.0): 82.50, (1.0, 0.0): 70.50, (1.0, 1.0): 79.00,
        (0.0, 0.5): 83.50, (1.0, 0.5): 82.50, (0.5, 0.0): 41.00, (0.5, 1.0): 82.50, (0.5, 0.5): 80.50,
    },
    "UCFKinect": {
        (0.0, 0.0): 87.19, (0.0, 1.0): 79.22, (1.0, 0.0): 86.80, (1.0, 1.0): 71.72,
        (0.0, 0.5): 80.02, (1.0, 0.5): 86.25, (0.5, 0.0): 88.36, (0.5, 1.0): 69.45, (0.5, 0.5): 86.25,
    },
}

# The nine Roweis-map points of the reference comparison grid, corners first.
TABLE_GRID = (
    (0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0),
    (0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0), (0.5, 0.5),
)
CORNER_GRID = TABLE_GRID[:4]


def reference_accuracy(dataset_name: str, factors: RoweisFactors) -> Optional[float]:
    for name, table in REFERENCE_ACCURACY.items():
        if name.lower() == str(dataset_name).lower():
            return table.get((factors.r1, factors.r2))
    return None


@dataclass
class RunConfig:
    """Every knob of a run. ``distance_threshold=None`` calibrates per-pose
    thresholds at ``threshold_quantile`` of the training exemplar distances."""

    manifest: Optional[str] = None
    r1: float = 0.0
    r2: float = 1.0
    dims: Optional[int] = None
    kernel: str = "delta"
    gamma: float = 1.0
    eps: Optional[float] = None
    window_size: int = 5
    min_keep_per_window: int = 1
    distance_threshold: Optional[float] = None
    threshold_quantile: float = 0.95
    n_states: int = 5
    tol: float = 1e-6
    max_iter: int = 200
    seed: int = 0
    criterion: str = "viterbi"
    smoothing: float = 1e-6
    out: str = "out"

    def __post_init__(self):
        self.validate()

    @property
    def factors(self) -> RoweisFactors:
        return RoweisFactors(self.r1, self.r2)

    def validate(self) -> None:
        RoweisFactors(self.r1, self.r2)
        if self.kernel not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel {self.kernel!r}; expected one of {KERNEL_KINDS}")
        if self.criterion not in hmm_mod.CRITERIA:
            raise ConfigError(f"unknown criterion {self.criterion!r}; expected one of {hmm_mod.CRITERIA}")
        if self.dims is not None and (int(self.dims) != self.dims or self.dims < 1):
            raise ConfigError(f"dims must be a positive integer, got {self.dims}")
        if int(self.n_states) != self.n_states or self.n_states < 1:
            raise ConfigError(f"n_states must be a positive integer, got {self.n_states}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.eps is not None and self.eps < 0:
            raise ConfigError("eps must be nonnegative")
        if self.distance_threshold is not None and not self.distance_threshold > 0:
            raise ConfigError("distance_threshold must be positive")
        if not 0 < self.threshold_quantile <= 1:
            raise ConfigError("threshold_quantile must lie in (0, 1]")
        if self.smoothing < 0:
            raise ConfigError("smoothing must be nonnegative")
        WindowingConfig(self.window_size, 1.0, self.min_keep_per_window)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return RunConfig.from_dict(d)


def check_dims(config: RunConfig, manifest: DatasetManifest) -> None:
    d = 3 * len(manifest.selected_joints)
    if config.dims is not None and config.dims > d:
        raise ConfigError(f"dims={config.dims} exceeds the input dimensionality d={d}")


@dataclass(frozen=True, eq=False)
class PreparedSequence:
    """A preprocessed sequence with its frames as columns of ``X`` (``d x T``)."""

    sequence: Sequence
    X: np.ndarray

    @property
    def action(self) -> str:
        return self.sequence.action_label

    @property
    def subject(self) -> str:
        return self.sequence.subject_id


def prepare(sequences, cfg: PreprocessConfig) -> list:
    """Preprocess and vectorize every sequence."""
    out = []
    for seq in sequences:
        try:
            coords = normalize_coords(seq.coords, cfg)
        except DegenerateSkeletonError as exc:
            err = DegenerateSkeletonError(f"sequence {seq.sequence_id!r}, {exc}")
            err.frame_index = exc.frame_index
            raise err from exc
        out.append(PreparedSequence(seq.with_coords(coords), vectorize_many(coords)))
    return out


@dataclass(frozen=True, eq=False)
class TrainedPipeline:
    rda: RdaModel
    windowing: WindowingConfig
    bank: hmm_mod.ActionModelBank
    train_reports: dict = field(default_factory=dict)


def exemplar_matrix(prepared) -> LabeledMatrix:
    """Annotated pose frames of ``prepared`` as a labeled ``d x n`` matrix."""
    cols, labels = [], []
    for ps in prepared:
        ann = ps.sequence.pose_annotations
        if ann is None:
            continue
        idx = [i for i, a in enumerate(ann) if a is not None]
        if idx:
            cols.append(ps.X[:, idx])
            labels.extend(ann[i] for i in idx)
    if not labels:
        raise ProtocolError("training data has no pose annotations")
    return LabeledMatrix(np.hstack(cols), tuple(labels))


def _alphabet(labels, preferred) -> tuple:
    present = set(labels)
    ordered = [p for p in preferred if p in present]
    return tuple(ordered + sorted(present - set(ordered)))


def pose_symbols(rda: RdaModel, windowing: WindowingConfig, ps: PreparedSequence) -> list:
    decisions = recognize_frames(rda, ps.X, ps.sequence.timestamps)
    return [d.pose for d in window_filter(decisions, windowing)]


def train_rda(data: LabeledMatrix, config: RunConfig, pose_alphabet=(), fingerprint: str = "") -> RdaModel:
    if config.dims is not None and config.dims > data.d:
        raise ConfigError(f"dims={config.dims} exceeds the input dimensionality d={data.d}")
    return fit(
        data,
        config.factors,
        p=config.dims,
        kernel=config.kernel,
        eps=config.eps,
        gamma=config.gamma,
        alphabet=_alphabet(data.labels, pose_alphabet),
        preprocessing_fingerprint=fingerprint,
    )


def train(prepared, config: RunConfig, pose_alphabet=(), fingerprint: str = "") -> TrainedPipeline:
    """Fit the pose subspace on annotated frames, then one HMM per action."""
    prepared = list(prepared)
    data = exemplar_matrix(prepared)
    rda = train_rda(data, config, pose_alphabet, fingerprint)
    if config.distance_threshold is None:
        threshold = calibrate_thresholds(rda, data.X, data.labels, config.threshold_quantile)
    else:
        threshold = config.distance_threshold
    windowing = WindowingConfig(config.window_size, threshold, config.min_keep_per_window)

    by_action: dict = {}
    for ps in prepared:
        by_action.setdefault(ps.action, []).append(pose_symbols(rda, windowing, ps))
    bank, reports = hmm_mod.train_bank(
        by_action, rda.pose_alphabet, config.n_states, config.tol, config.max_iter, config.seed, config.smoothing
    )
    return TrainedPipeline(rda, windowing, bank, reports)


def predict(pipeline: TrainedPipeline, ps: PreparedSequence, criterion: str = "viterbi"):
    """``(action or None, scores)`` for one prepared sequence."""
    symbols = pose_symbols(pipeline.rda, pipeline.windowing, ps)
    return hmm_mod.classify_action(pipeline.bank, symbols, criterion)


@dataclass
class EvalReport:
    """LOPO results.

    ``mean_accuracy`` is pooled over all test sequences (equal to the trace
    of ``confusion`` over its total); ``fold_mean_accuracy`` averages the
    per-fold accuracies. Rejected test sequences count as errors and are
    tallied in ``rejected`` rather than in ``confusion``.
    """

    actions: list
    folds: list
    confusion: list
    rejected: list
    mean_accuracy: float
    fold_mean_accuracy: float
    config: dict
    dataset: str = ""
    reference_accuracy: Optional[float] = None
    wall_clock_seconds: float = 0.0

    @property
    def confusion_matrix(self) -> np.ndarray:
        return np.array(self.confusion, dtype=np.int64)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = REPORT_SCHEMA_VERSION
        d["kind"] = "eval_report"
        d["supervision_level"] = (self.config["r1"] + self.config["r2"]) / 2.0
        return d

    def to_text(self) -> str:
        lines = [
            f"dataset: {self.dataset or '-'}   r1={self.config['r1']}  r2={self.config['r2']}",
            f"mean accuracy (pooled): {self.mean_accuracy:.4f}",
            f"mean accuracy (per-fold average): {self.fold_mean_accuracy:.4f}",
        ]
        if self.reference_accuracy is not None:
            lines.append(f"reference accuracy: {self.reference_accuracy:.2f}%")
        lines.append("")
        lines.append(f"{'held-out subject':<20}{'correct':>8}{'total':>8}{'accuracy':>10}")
        for f in self.folds:
            lines.append(f"{f['subject']:<20}{f['correct']:>8}{f['total']:>8}{f['accuracy']:>10.4f}")
        lines.append("")
        width = max([len(a) for a in self.actions] + [8]) + 2
        lines.append("confusion (rows: true, columns: predicted)")
        lines.append(" " * width + "".join(f"{a:>{width}}" for a in self.actions) + f"{'rejected':>{width}}")
        for a, row, rej in zip(self.actions, self.confusion, self.rejected):
            lines.append(f"{a:<{width}}" + "".join(f"{v:>{width}}" for v in row) + f"{rej:>{width}}")
        lines.append("")
        lines.append(f"wall clock: {self.wall_clock_seconds:.2f} s")
        return "\n".join(lines) + "\n"


def evaluate_prepared(prepared, manifest: DatasetManifest, config: RunConfig) -> EvalReport:
    """Leave-one-person-out evaluation on already prepared sequences."""
    start = time.perf_counter()
    prepared = list(prepared)
    by_seq = {id(ps.sequence): ps for ps in prepared}
    actions = list(manifest.actions)
    extra = sorted({ps.action for ps in prepared} - set(actions))
    actions += extra
    index = {a: i for i, a in enumerate(actions)}
    confusion = np.zeros((len(actions), len(actions)), dtype=np.int64)
    rejected = np.zeros(len(actions), dtype=np.int64)
    fingerprint = manifest.preprocess_config().fingerprint()
    folds = []
    for fold in lopo_folds([ps.sequence for ps in prepared]):
        if not fold.test:
            raise ProtocolError(f"fold {fold.held_out_subject!r} has an empty test set")
        pipeline = train([by_seq[id(s)] for s in fold.train], config, manifest.pose_alphabet, fingerprint)
        correct = 0
        for seq in fold.test:
            label, _ = predict(pipeline, by_seq[id(seq)], config.criterion)
            truth = index[seq.action_label]
            if label is None:
                rejected[truth] += 1
                continue
            confusion[truth, index[label]] += 1
            correct += int(label == seq.action_label)
        acc = correct / len(fold.test)
        log.info("fold %s: %d/%d correct", fold.held_out_subject, correct, len(fold.test))
        folds.append({"subject": fold.held_out_subject, "correct": correct, "total": len(fold.test), "accuracy": acc})
    total = sum(f["total"] for f in folds)
    return EvalReport(
        actions=actions,
        folds=folds,
        confusion=confusion.tolist(),
        rejected=rejected.tolist(),
        mean_accuracy=float(np.trace(confusion)) / total,
        fold_mean_accuracy=float(np.mean([f["accuracy"] for f in folds])),
        config=config.to_dict(),
        dataset=manifest.name,
        reference_accuracy=reference_accuracy(manifest.name, config.factors),
        wall_clock_seconds=time.perf_counter() - start,
    )


def evaluate(sequences, manifest: DatasetManifest, config: RunConfig) -> EvalReport:
    check_dims(config, manifest)
    return evaluate_prepared(prepare(sequences, manifest.preprocess_config()), manifest, config)


def sweep(sequences, manifest: DatasetManifest, config: RunConfig, grid=TABLE_GRID) -> list:
    """Evaluate every ``(r1, r2)`` in ``grid`` on the same prepared data.

    A failing grid point yields a row with ``accuracy=None`` and the error
    message; the remaining points still run.
    """
    grid = [tuple(map(float, g)) for g in grid]
    if not grid:
        raise ConfigError("sweep grid must not be empty")
    check_dims(config, manifest)
    prepared = prepare(sequences, manifest.preprocess_config())
    rows = []
    for r1, r2 in grid:
        row = {"r1": r1, "r2": r2, "supervision_level": None, "accuracy": None,
               "fold_mean_accuracy": None, "reference_accuracy": None, "error": None}
        try:
            point = config.replace(r1=r1, r2=r2)
            row["supervision_level"] = supervision_level(point.factors)
            report = evaluate_prepared(prepared, manifest, point)
            row.update(accuracy=report.mean_accuracy, fold_mean_accuracy=report.fold_mean_accuracy,
                       reference_accuracy=report.reference_accuracy)
        except RoweisposesError as exc:
            log.warning("grid point (%s, %s) failed: %s", r1, r2, exc)
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def sweep_text(rows) -> str:
    lines = [f"{'r1':>6}{'r2':>6}{'s':>7}{'accuracy':>10}{'reference':>11}"]
    for r in rows:
        acc = "error" if r["accuracy"] is None else f"{r['accuracy']:.4f}"
        ref = "-" if r["reference_accuracy"] is None else f"{r['reference_accuracy']:.2f}%"
        s = "-" if r["supervision_level"] is None else f"{r['supervision_level']:.3f}"
        lines.append(f"{r['r1']:>6.2f}{r['r2']:>6.2f}{s:>7}{acc:>10}{ref:>11}")
    return "\n".join(lines) + "\n"


def embedding_rows(model: RdaModel, X, labels) -> list:
    """2-D coordinates of frames and class means along the two leading directions."""
    if model.p < 2:
        raise ConfigError(f"embedding export needs p >= 2, model has p={model.p}")
    Z = project(model, np.asarray(X, dtype=np.float64))[:2]
    rows = [{"kind": "frame", "pose": l, "dim1": float(z[0]), "dim2": float(z[1])} for l, z in zip(labels, Z.T)]
    for pose, mu in zip(model.pose_alphabet, model.class_means):
        rows.append({"kind": "mean", "pose": pose, "dim1": float(mu[0]), "dim2": float(mu[1])})
    return rows
