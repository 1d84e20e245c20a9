"""Command-line entry point: ``eegconn <command> [--config FILE] [--out DIR] [--seed N]``.

Commands: synth, features, train, cv, render, dump-weights.
Exit codes: 0 success, 2 config error, 3 numeric failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import datetime
import hashlib
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import jsonschema
import numpy as np

from . import dsp
from .connectivity import ConnectivityMatrix, build_ordering, read_matrix_csv
from .corpus import PlantedDesign, planted_corpus
from .eegio import (Coupling, CouplingSpec, FormatError, read_recording, synthesize,
                    write_recording)
from .experiment import extract_features, git_describe, run_cv, shuffle_trial_labels
from .ftns import FEATURE_NAMES, FeatureSet, read_ftns, write_ftns
from .images import kernel_grid, write_pgm
from .nn import NumericError, TrainConfig, model_spec, train
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.weights import dump_first_layer_weights, export_weights

log = logging.getLogger("eegconn")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
LOCK_NAME = ".eegconn.lock"
BAND_NAMES = [b.name for b in dsp.BANDS]


class ConfigError(ValueError):
    pass


_TRAIN = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "batch_size": {"type": "integer", "minimum": 1},
        "learning_rate": {"type": "number", "minimum": 0},
        "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "epochs": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "patience": {"type": ["integer", "null"], "minimum": 1},
        "dtype": {"enum": ["float32", "float64"]},
    },
}

_COUPLING = {
    "type": "object", "additionalProperties": False,
    "required": ["channel_a", "channel_b", "band", "strength"],
    "properties": {
        "channel_a": {"type": "string"}, "channel_b": {"type": "string"},
        "band": {"enum": BAND_NAMES},
        "strength": {"type": "number", "minimum": 0, "maximum": 1},
        "phase_lag": {"type": "number"},
    },
}

_SYNTH = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "design": {"enum": ["planted", "explicit"]},
        "n_trials": {"type": "integer", "minimum": 2},
        "duration_s": {"type": "number", "exclusiveMinimum": 0},
        "band": {"enum": BAND_NAMES},
        "pairs_per_trial": {"type": "integer", "minimum": 1},
        "strength": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1},
                     "minItems": 2, "maxItems": 2},
        "lag": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "noise": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "high_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "subject_id": {"type": "integer"},
        "trials": {"type": "array", "items": {
            "type": "object", "additionalProperties": False,
            "required": ["valence_score"],
            "properties": {
                "couplings": {"type": "array", "items": _COUPLING},
                "noise": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "valence_score": {"type": "number", "minimum": 1, "maximum": 9},
                "duration_s": {"type": "number", "exclusiveMinimum": 0},
            }}},
    },
}

CONFIG_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "inputs": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "manifest": {"type": "string"},
        "features": {"type": "string"},
        "checkpoint": {"type": "string"},
        "feature": {"enum": ["psd", "pcc", "plv", "pli"]},
        "ordering": {"type": "string", "pattern": r"^(dist1|dist2|random:[0-9]+)$"},
        "bands": {"type": "array", "items": {"enum": BAND_NAMES}, "minItems": 1,
                  "uniqueItems": True},
        "model": {"enum": ["cnn2", "cnn5", "cnn10"]},
        "model_options": {
            "type": "object", "additionalProperties": False,
            "properties": {"base_filters": {"type": "integer", "minimum": 1},
                           "dense_units": {"type": "integer", "minimum": 1}}},
        "train": _TRAIN,
        "fold_seed": {"type": "integer", "minimum": 0},
        "n_folds": {"type": "integer", "minimum": 2},
        "granularity": {"enum": ["trial", "segment"]},
        "shuffle_labels": {"type": ["integer", "null"], "minimum": 0},
        "output_dir": {"type": "string"},
        "synth": _SYNTH,
    },
}


# ---------------------------------------------------------------------------
# helpers

def load_config(path, out=None, seed=None) -> dict:
    """Read, validate and apply command-line overrides.  Relative paths resolve
    against the config file's directory."""
    cfg = {}
    base = Path.cwd()
    if path is not None:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        base = Path(path).resolve().parent
    validate_config(cfg)
    cfg = copy.deepcopy(cfg)
    for key in ("manifest", "features", "checkpoint", "output_dir"):
        if key in cfg:
            cfg[key] = str(base / cfg[key])
    if "inputs" in cfg:
        cfg["inputs"] = [str(base / p) for p in cfg["inputs"]]
    if out is not None:
        cfg["output_dir"] = str(Path(out).resolve())
    if seed is not None:
        cfg.setdefault("synth", {})["seed"] = seed
        cfg.setdefault("train", {})["seed"] = seed
        cfg["fold_seed"] = seed
        if cfg.get("ordering", "").startswith("random:"):
            cfg["ordering"] = f"random:{seed}"
    validate_config(cfg)
    return cfg


def validate_config(cfg) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None


def _require(cfg, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"config is missing required key(s): {', '.join(missing)}")


def _out_dir(cfg) -> Path:
    _require(cfg, "output_dir")
    return Path(cfg["output_dir"])


@contextmanager
def output_lock(directory: Path):
    """Exclusive lock file guarding an output directory."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OSError(f"output directory {directory} is locked by {lock}") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield directory
    finally:
        lock.unlink(missing_ok=True)


def _sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _train_config(cfg) -> TrainConfig:
    try:
        return TrainConfig(**cfg.get("train", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config error at train: {exc}") from None


def _model_spec(cfg, input_shape):
    _require(cfg, "model")
    return model_spec(cfg["model"], tuple(input_shape), **cfg.get("model_options", {}))


def _recording_paths(cfg):
    if "inputs" in cfg:
        return [Path(p) for p in cfg["inputs"]]
    _require(cfg, "manifest")
    manifest = Path(cfg["manifest"])
    with open(manifest) as fh:
        entries = json.load(fh)["trials"]
    return [manifest.parent / e["path"] for e in entries]


# ---------------------------------------------------------------------------
# commands

def cmd_synth(cfg) -> dict:
    """Write one EEGB file per trial plus ``manifest.json``."""
    out = _out_dir(cfg)
    s = dict(cfg.get("synth", {}))
    mode = s.pop("design", "planted")
    subject = s.pop("subject_id", 1)
    if mode == "explicit":
        _require(s, "trials")
        duration = s.get("duration_s", 60.0)
        recs = []
        for t, tr in enumerate(s["trials"]):
            try:
                spec = CouplingSpec(tuple(Coupling(**c) for c in tr.get("couplings", [])),
                                    tr.get("noise", s.get("noise", 0.5)),
                                    tr.get("seed", s.get("seed", 0) + t))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"config error at synth/trials/{t}: {exc}") from None
            recs.append(synthesize(spec, tr.get("duration_s", duration), subject_id=subject,
                                   video_id=t + 1, valence_score=tr["valence_score"]))
        design = {"design": "explicit", "trials": s["trials"]}
    else:
        if "trials" in s:
            raise ConfigError("config error at synth: 'trials' needs design 'explicit'")
        for key in ("strength", "lag"):
            if key in s:
                s[key] = tuple(s[key])
        try:
            pd = PlantedDesign(**s)
        except ValueError as exc:
            raise ConfigError(f"config error at synth: {exc}") from None
        recs = planted_corpus(pd, subject_id=subject)
        design = {"design": "planted", **dataclasses.asdict(pd)}
    entries = []
    for rec in recs:
        name = f"s{rec.subject_id:02d}_v{rec.video_id:03d}.eegb"
        write_recording(rec, out / name)
        entries.append({"path": name, "sha256": _sha256(out / name),
                        "subject_id": rec.subject_id, "video_id": rec.video_id,
                        "valence_score": rec.valence_score, "n_samples": rec.n_samples})
    manifest = {"design": design, "trials": entries}
    _write_json(manifest, out / "manifest.json")
    return {"manifest": str(out / "manifest.json"), "n_trials": len(entries),
            "manifest_sha256": _sha256(out / "manifest.json")}


def cmd_features(cfg) -> dict:
    """Segment every recording and write ``features.ftns`` (+ ``features.json``)."""
    out = _out_dir(cfg)
    _require(cfg, "feature")
    feature = cfg["feature"]
    bands = cfg.get("bands", BAND_NAMES)
    ordering = None
    if feature == "psd":
        if "ordering" in cfg:
            log.warning("feature 'psd' ignores the ordering %r", cfg["ordering"])
    else:
        _require(cfg, "ordering")
        ordering = build_ordering(cfg["ordering"])
    sets = []
    for path in _recording_paths(cfg):
        fs = extract_features(read_recording(path), feature, ordering, bands=bands)
        if ordering is not None:
            for b, band in enumerate(bands):
                for i in (0, len(fs) - 1):
                    ConnectivityMatrix(feature, dsp.get_band(band), ordering,
                                       fs.values[i, :, :, b].astype(float)).check()
        sets.append(fs)
    fs = FeatureSet.concat(sets)
    write_ftns(fs, out / "features.ftns")
    meta = {"feature": feature, "ordering": ordering.label if ordering else "none",
            "bands": list(bands), "n_tensors": len(fs), "dims": list(fs.values.shape[1:]),
            "sha256": _sha256(out / "features.ftns")}
    _write_json(meta, out / "features.json")
    return meta


def _load_features(cfg) -> FeatureSet:
    _require(cfg, "features")
    fs = read_ftns(cfg["features"])
    if len(fs) == 0:
        raise ConfigError(f"{cfg['features']} holds no feature tensors")
    if cfg.get("shuffle_labels") is not None:
        fs = shuffle_trial_labels(fs, cfg["shuffle_labels"])
    return fs


def _report_header(cfg, command) -> dict:
    return {"command": command, "config": cfg, "git_describe": git_describe(),
            "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat()}


def cmd_train(cfg) -> dict:
    """Train on every tensor of the feature file; write ``model.cnnm`` and ``train_report.json``."""
    out = _out_dir(cfg)
    fs = _load_features(cfg)
    spec = _model_spec(cfg, fs.values.shape[1:])
    tc = _train_config(cfg)
    res = train(spec, fs.values, fs.labels, tc)
    save_checkpoint(res.model, out / "model.cnnm")
    report = {**_report_header(cfg, "train"),
              "history": [dataclasses.asdict(m) for m in res.history],
              "checkpoint_sha256": _sha256(out / "model.cnnm")}
    _write_json(report, out / "train_report.json")
    return report


def cmd_cv(cfg) -> dict:
    """Cross-validate; write ``cv_report.json`` and one checkpoint per fold."""
    out = _out_dir(cfg)
    fs = _load_features(cfg)
    spec = _model_spec(cfg, fs.values.shape[1:])
    tc = _train_config(cfg)
    rep = run_cv(fs, spec, tc, fold_seed=cfg.get("fold_seed", 0),
                 n_folds=cfg.get("n_folds", 5), granularity=cfg.get("granularity", "trial"),
                 keep_models=True)
    digests = []
    for k, model in enumerate(rep.models):
        path = out / f"fold{k}.cnnm"
        save_checkpoint(model, path)
        digests.append(_sha256(path))
    report = {**_report_header(cfg, "cv"), **rep.to_dict(), "checkpoint_sha256": digests}
    _write_json(report, out / "cv_report.json")
    return report


def cmd_render(args, cfg) -> dict:
    """PGM images of a connectivity/PSD tensor band, a matrix CSV, or first-layer weights."""
    out = Path(cfg.get("output_dir") or args.out or ".")
    if args.input is None:
        raise ConfigError("render needs --input")
    src = Path(args.input)
    stem = src.stem
    if args.kind == "weights":
        model = load_checkpoint(src)
        img = kernel_grid(dump_first_layer_weights(model))
        path = out / f"{stem}_weights.pgm"
    elif src.suffix == ".csv":
        img = read_matrix_csv(src)
        path = out / f"{stem}.pgm"
    else:
        fs = read_ftns(src)
        if not 0 <= args.index < len(fs):
            raise ConfigError(f"--index {args.index} outside 0..{len(fs) - 1}")
        bands = cfg.get("bands", BAND_NAMES)
        if fs.values.shape[-1] != len(bands):
            raise ConfigError("tensor channel count does not match the configured bands")
        if args.band not in bands:
            raise ConfigError(f"band {args.band!r} not among {bands}")
        kind = FEATURE_NAMES[int(fs.feature[args.index])]
        if (args.kind == "topo") != (kind == "psd"):
            raise ConfigError(f"record {args.index} is a {kind} tensor; kind {args.kind!r} does not apply")
        img = fs.values[args.index, :, :, bands.index(args.band)]
        path = out / f"{stem}_{args.kind}_{args.index}_{args.band}.pgm"
    write_pgm(img, path)
    return {"image": str(path), "shape": list(np.shape(img))}


def cmd_dump_weights(args, cfg) -> dict:
    out = Path(cfg.get("output_dir") or args.out or ".")
    src = args.input or cfg.get("checkpoint")
    if src is None:
        raise ConfigError("dump-weights needs --input or a 'checkpoint' config key")
    model = load_checkpoint(src)
    return export_weights(model, str(out / (Path(src).stem + "_layer1")))


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eegconn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("synth", "features", "train", "cv", "render", "dump-weights"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON pipeline config")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="override every seed in the config")
        if name in ("render", "dump-weights"):
            sp.add_argument("--input", help="FTNS, matrix CSV or CNNM file")
        if name == "render":
            sp.add_argument("--kind", choices=("matrix", "topo", "weights"), required=True)
            sp.add_argument("--index", type=int, default=0, help="tensor record index")
            sp.add_argument("--band", default="alpha", choices=BAND_NAMES)
    return p


_COMMANDS = {"synth": cmd_synth, "features": cmd_features, "train": cmd_train, "cv": cmd_cv}


def run(args) -> dict:
    cfg = load_config(args.config, args.out, args.seed)
    if args.command in _COMMANDS:
        directory = _out_dir(cfg)
        with output_lock(directory):
            return _COMMANDS[args.command](cfg)
    directory = Path(cfg.get("output_dir") or args.out or ".")
    with output_lock(directory):
        if args.command == "render":
            return cmd_render(args, cfg)
        return cmd_dump_weights(args, cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = run(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    json.dump(result, sys.stdout, indent=2, sort_keys=True, default=str)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
