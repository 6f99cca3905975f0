"""Command-line interface.

Commands: ``train``, ``eval``, ``sweep``, ``export-embedding``,
``gen-synthetic``. Command-line flags override fields of the ``--config``
JSON document; the effective configuration is echoed into every output.

Exit codes: 0 success, 1 validation/config error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import json
import logging
import sys
import time
from argparse import ArgumentParser
from pathlib import Path

from . import pipeline, serialization
from .dataset import DatasetManifest, SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from .errors import ConfigError, RoweisposesError
from .pipeline import CORNER_GRID, TABLE_GRID, RunConfig

log = logging.getLogger("roweisposes")

OUTPUT_SCHEMA_VERSION = 1

# flag dest -> RunConfig field
_OVERRIDES = {
    "manifest": "manifest", "r1": "r1", "r2": "r2", "dims": "dims", "kernel": "kernel",
    "gamma": "gamma", "eps": "eps", "states": "n_states", "seed": "seed", "criterion": "criterion",
    "window_size": "window_size", "min_keep": "min_keep_per_window", "threshold": "distance_threshold",
    "quantile": "threshold_quantile", "max_iter": "max_iter", "tol": "tol", "out": "out",
}


def _add_common(p: ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--manifest", help="dataset manifest (data paths are relative to it)")
    p.add_argument("--r1", type=float, help="first Roweis factor in [0, 1]")
    p.add_argument("--r2", type=float, help="second Roweis factor in [0, 1]")
    p.add_argument("--dims", type=int, help="subspace dimensionality p (default: poses - 1)")
    p.add_argument("--kernel", choices=["delta", "linear", "rbf"])
    p.add_argument("--gamma", type=float, help="rbf label-kernel bandwidth")
    p.add_argument("--eps", type=float, help="ridge for R2 when it is singular")
    p.add_argument("--states", type=int, help="hidden states per action HMM")
    p.add_argument("--seed", type=int)
    p.add_argument("--criterion", choices=["viterbi", "forward"])
    p.add_argument("--window-size", type=int)
    p.add_argument("--min-keep", type=int, help="frames kept per window at minimum")
    p.add_argument("--threshold", type=float, help="absolute distance threshold (default: calibrated)")
    p.add_argument("--quantile", type=float, help="calibration quantile of exemplar distances")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--out", help="output directory")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="roweisposes", description="RDA pose subspaces + HMMs for skeletal action recognition")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the pose subspace and action HMMs on a whole dataset")
    _add_common(p)

    p = sub.add_parser("eval", help="leave-one-person-out evaluation")
    _add_common(p)

    p = sub.add_parser("sweep", help="evaluate a grid of Roweis factors")
    _add_common(p)
    p.add_argument("--grid", help="points as 'r1,r2;r1,r2;...' (default: the nine-point table grid)")
    p.add_argument("--corners", action="store_true", help="only the four corner cases")

    p = sub.add_parser("export-embedding", help="2-D coordinates of pose exemplars and class means")
    _add_common(p)
    p.add_argument("--model", type=Path, help="rda_model.json to use (default: fit one from the config)")

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset in the interchange format")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--actions", type=int, default=5)
    p.add_argument("--poses-per-action", type=int, default=3)
    p.add_argument("--frames-per-pose", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--poses", type=int, help="size of the pose alphabet")
    p.add_argument("--transition-frames", type=int, default=0)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--seed", type=int, default=7)
    return parser


def resolve_config(args) -> RunConfig:
    """Config file fields, overridden by any flag given on the command line."""
    base = {}
    if getattr(args, "config", None) is not None:
        if not args.config.exists():
            raise ConfigError(f"config file {args.config} does not exist")
        try:
            base = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}:{exc.lineno}: {exc.msg}") from None
        base.pop("schema_version", None)
        if base.get("manifest") and not Path(base["manifest"]).is_absolute():
            base["manifest"] = str(args.config.parent / base["manifest"])
    config = RunConfig.from_dict(base)
    changes = {field: getattr(args, dest) for dest, field in _OVERRIDES.items() if getattr(args, dest, None) is not None}
    return config.replace(**changes)


def _load(config: RunConfig):
    if not config.manifest:
        raise ConfigError("no dataset manifest given (--manifest or the config's 'manifest')")
    path = Path(config.manifest)
    if not path.exists():
        raise ConfigError(f"manifest {path} does not exist")
    manifest = DatasetManifest.load(path)
    pipeline.check_dims(config, manifest)
    sequences, _ = load_dataset(path)
    return sequences, manifest


def _outdir(config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(config: RunConfig) -> dict:
    return {"schema_version": OUTPUT_SCHEMA_VERSION, "kind": "run_config", **config.to_dict()}


def cmd_train(config: RunConfig) -> dict:
    """Fit on every sequence of the dataset and write the model documents."""
    sequences, manifest = _load(config)
    cfg = manifest.preprocess_config()
    prepared = pipeline.prepare(sequences, cfg)
    trained = pipeline.train(prepared, config, manifest.pose_alphabet, cfg.fingerprint())
    out = _outdir(config)
    serialization.save_rda_model(trained.rda, out / "rda_model.json")
    serialization.save_bank(trained.bank, out / "hmm_bank.json")
    serialization.write_json(out / "windowing.json", serialization.windowing_to_dict(trained.windowing))
    serialization.write_json(out / "run_config.json", _echo(config))
    log.info("wrote models to %s", out)
    return {"rda_model": str(out / "rda_model.json"), "hmm_bank": str(out / "hmm_bank.json"),
            "windowing": str(out / "windowing.json")}


def cmd_eval(config: RunConfig) -> pipeline.EvalReport:
    sequences, manifest = _load(config)
    report = pipeline.evaluate(sequences, manifest, config)
    out = _outdir(config)
    serialization.write_json(out / "report.json", report.to_dict())
    (out / "report.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return report


def parse_grid(text: str) -> list:
    points = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        try:
            r1, r2 = (float(v) for v in item.split(","))
        except ValueError:
            raise ConfigError(f"bad grid point {item!r}; expected 'r1,r2'") from None
        points.append((r1, r2))
    if not points:
        raise ConfigError("sweep grid must not be empty")
    return points


def cmd_sweep(config: RunConfig, grid=TABLE_GRID) -> list:
    start = time.perf_counter()
    sequences, manifest = _load(config)
    rows = pipeline.sweep(sequences, manifest, config, grid)
    out = _outdir(config)
    doc = {"schema_version": OUTPUT_SCHEMA_VERSION, "kind": "sweep", "dataset": manifest.name,
           "rows": rows, "config": config.to_dict(), "wall_clock_seconds": time.perf_counter() - start}
    serialization.write_json(out / "sweep.json", doc)
    text = pipeline.sweep_text(rows)
    (out / "sweep.txt").write_text(text)
    print(text, end="")
    return rows


def cmd_export_embedding(config: RunConfig, model_path=None) -> dict:
    sequences, manifest = _load(config)
    cfg = manifest.preprocess_config()
    prepared = pipeline.prepare(sequences, cfg)
    data = pipeline.exemplar_matrix(prepared)
    if model_path is not None:
        model = serialization.load_rda_model(model_path)
        if model.preprocessing_fingerprint and model.preprocessing_fingerprint != cfg.fingerprint():
            raise ConfigError("model was fitted with a different preprocessing configuration")
    else:
        model = pipeline.train_rda(data, config, manifest.pose_alphabet, cfg.fingerprint())
    rows = pipeline.embedding_rows(model, data.X, data.labels)
    doc = {"schema_version": OUTPUT_SCHEMA_VERSION, "kind": "embedding", "dataset": manifest.name,
           "r1": model.factors.r1, "r2": model.factors.r2, "rows": rows}
    out = _outdir(config)
    serialization.write_json(out / "embedding.json", doc)
    return doc


def cmd_gen_synthetic(args) -> DatasetManifest:
    spec = SyntheticSpec(
        n_subjects=args.subjects, n_actions=args.actions, poses_per_action=args.poses_per_action,
        frames_per_pose=args.frames_per_pose, noise_sigma=args.noise, n_poses=args.poses,
        transition_frames=args.transition_frames, repetitions=args.repetitions,
    )
    sequences, manifest = generate_synthetic(spec, args.seed)
    manifest = save_dataset(sequences, manifest, args.out)
    print(f"wrote {len(sequences)} sequences to {args.out}")
    return manifest


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "gen-synthetic":
            cmd_gen_synthetic(args)
            return 0
        config = resolve_config(args)
        if args.command == "train":
            cmd_train(config)
        elif args.command == "eval":
            cmd_eval(config)
        elif args.command == "sweep":
            grid = CORNER_GRID if args.corners else (parse_grid(args.grid) if args.grid else TABLE_GRID)
            cmd_sweep(config, grid)
        elif args.command == "export-embedding":
            cmd_export_embedding(config, args.model)
    except RoweisposesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
