"""Versioned JSON documents for fitted models.

Reals are stored as ``float.hex`` strings so a save/load round-trip is
bit-exact. Matrices are stored row-major with declared dimensions::

    {"rows": 2, "cols": 3, "data": ["0x1.0p+0", ...]}
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .hmm import ActionModelBank, DiscreteHmm
from .pose import WindowingConfig
from .rda import RdaModel, RoweisFactors

SCHEMA_VERSION = 1


def encode_reals(values) -> list:
    return [float(v).hex() for v in np.asarray(values, dtype=np.float64).reshape(-1)]


def decode_reals(items) -> np.ndarray:
    try:
        return np.array([float.fromhex(v) if isinstance(v, str) else float(v) for v in items], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid real value in document: {exc}") from None


def encode_matrix(M) -> dict:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    return {"rows": M.shape[0], "cols": M.shape[1], "data": encode_reals(M)}


def decode_matrix(doc) -> np.ndarray:
    try:
        rows, cols, data = int(doc["rows"]), int(doc["cols"]), doc["data"]
    except (KeyError, TypeError, ValueError):
        raise SchemaError("matrix needs integer 'rows', 'cols' and a 'data' list") from None
    values = decode_reals(data)
    if values.size != rows * cols:
        raise SchemaError(f"matrix declares {rows}x{cols} but holds {values.size} values")
    return values.reshape(rows, cols)


def _check_header(doc: dict, kind: str) -> None:
    if not isinstance(doc, dict):
        raise SchemaError("document must be a JSON object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {doc.get('schema_version')!r}")
    if doc.get("kind") != kind:
        raise SchemaError(f"expected a {kind!r} document, got {doc.get('kind')!r}")


def _opt_real(v):
    return None if v is None else float(v).hex()


def rda_model_to_dict(model: RdaModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "rda_model",
        "p": model.p,
        "d": model.d,
        "factors": {"r1": float(model.factors.r1).hex(), "r2": float(model.factors.r2).hex()},
        "kernel": model.kernel,
        "gamma": _opt_real(model.gamma),
        "ridge": float(model.ridge).hex(),
        "preprocessing_fingerprint": model.preprocessing_fingerprint,
        "pose_alphabet": list(model.pose_alphabet),
        "U": encode_matrix(model.U),
        "eigenvalues": encode_reals(model.eigenvalues),
        "class_means": encode_matrix(model.class_means),
        "train_mean": encode_reals(model.train_mean),
        "input_class_means": encode_matrix(model.input_class_means),
    }


def rda_model_from_dict(doc: dict) -> RdaModel:
    _check_header(doc, "rda_model")
    try:
        U = decode_matrix(doc["U"])
        if U.shape != (int(doc["d"]), int(doc["p"])):
            raise SchemaError(f"U has shape {U.shape}, document declares d={doc['d']}, p={doc['p']}")
        f = doc["factors"]
        return RdaModel(
            U=U,
            eigenvalues=decode_reals(doc["eigenvalues"]),
            pose_alphabet=tuple(doc["pose_alphabet"]),
            class_means=decode_matrix(doc["class_means"]),
            train_mean=decode_reals(doc["train_mean"]),
            input_class_means=decode_matrix(doc["input_class_means"]),
            factors=RoweisFactors(float.fromhex(f["r1"]), float.fromhex(f["r2"])),
            kernel=doc["kernel"],
            gamma=None if doc.get("gamma") is None else float.fromhex(doc["gamma"]),
            ridge=float.fromhex(doc["ridge"]),
            preprocessing_fingerprint=doc.get("preprocessing_fingerprint", ""),
        )
    except KeyError as exc:
        raise SchemaError(f"rda_model document lacks field {exc.args[0]!r}") from None


def hmm_to_dict(hmm: DiscreteHmm) -> dict:
    return {
        "n_states": hmm.n_states,
        "initial": encode_reals(hmm.initial),
        "transition": encode_matrix(hmm.transition),
        "emission": encode_matrix(hmm.emission),
    }


def bank_to_dict(bank: ActionModelBank) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "hmm_bank",
        "alphabet": list(bank.alphabet),
        "models": {a: hmm_to_dict(bank.models[a]) for a in bank.actions},
    }


def bank_from_dict(doc: dict) -> ActionModelBank:
    _check_header(doc, "hmm_bank")
    try:
        alphabet = tuple(doc["alphabet"])
        models = {}
        for action, m in doc["models"].items():
            hmm = DiscreteHmm(
                initial=decode_reals(m["initial"]),
                transition=decode_matrix(m["transition"]),
                emission=decode_matrix(m["emission"]),
                alphabet=alphabet,
            )
            if hmm.n_states != int(m["n_states"]):
                raise SchemaError(f"model {action!r}: n_states does not match its matrices")
            models[action] = hmm
    except (KeyError, AttributeError) as exc:
        raise SchemaError(f"malformed hmm_bank document: {exc!r}") from None
    return ActionModelBank(models, alphabet)


def windowing_to_dict(cfg: WindowingConfig) -> dict:
    th = cfg.distance_threshold
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "windowing",
        "window_size": cfg.window_size,
        "min_keep_per_window": cfg.min_keep_per_window,
        "distance_threshold": {k: float(v).hex() for k, v in th.items()} if isinstance(th, dict) else float(th).hex(),
    }


def windowing_from_dict(doc: dict) -> WindowingConfig:
    _check_header(doc, "windowing")
    th = doc["distance_threshold"]
    th = {k: float.fromhex(v) for k, v in th.items()} if isinstance(th, dict) else float.fromhex(th)
    return WindowingConfig(int(doc["window_size"]), th, int(doc["min_keep_per_window"]))


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}: {exc.msg}") from None


def save_rda_model(model: RdaModel, path) -> None:
    write_json(path, rda_model_to_dict(model))


def load_rda_model(path) -> RdaModel:
    return rda_model_from_dict(read_json(path))


def save_bank(bank: ActionModelBank, path) -> None:
    write_json(path, bank_to_dict(bank))


def load_bank(path) -> ActionModelBank:
    return bank_from_dict(read_json(path))
