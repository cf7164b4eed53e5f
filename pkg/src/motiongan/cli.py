"""Command-line operator surface.

Commands: ``make-data``, ``train``, ``sample``, ``eval``,
``toy-posterior``, ``benchmark``.  Every command reads an optional JSON
config file (``--config``), applies command-line overrides on top, and
echoes the effective merged config next to (and, where the format
allows, inside) each output artifact, so any artifact can be traced
back to the exact settings that produced it.

Config schema (all sections optional)::

    {
      "experiment": "name",          # labels the output directory
      "out_dir":    "runs/name",     # overrides the derived directory
      "seed":       0,               # global fallback seed
      "data":   { DataConfig fields },
      "model":  { ModelConfig overrides },
      "train":  { TrainConfig fields },
      "sample": { label, scale, count, seed, use_ema, steps },
      "eval":   { clips_per_class, scale, seed, use_ema,
                  extractor_seed, extractor_epochs },
      "toy":    { T, kind, to_t, x_t, step_sizes, atoms, weights,
                  points, span },
      "benchmark": { steps_list, count, scale, seed, label, use_ema }
    }

Unknown keys anywhere are rejected.  Relative ``out_dir`` paths resolve
under ``$MOTIONGAN_OUT_ROOT`` (default: the working directory).

Exit codes: 0 success, 2 config error, 3 numeric divergence during
computation, 4 file/integrity error.

Sweep presets on ``train``: ``--preset steps-sweep`` trains and
evaluates one model per step count in {1, 5, 10, 20, 50} and writes
``steps_sweep.csv``; ``--preset geo-sweep`` does the same for the
geometric-loss weight R in {0, 1, 10, 100, 1000} into
``geo_sweep.csv``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from .dataset import DataConfig, Dataset, dataset_read, dataset_write, synth_dataset
from .evaluation import (DeltaPrior, MetricsReport, evaluate,
                         gaussianity_score, grid_true_posterior,
                         train_feature_extractor)
from .networks import ModelConfig
from .persist import IntegrityError, read_container, write_container
from .sampler import SampleRequest, sample, write_positions_csv
from .schedule import Schedule, beta_table
from .tensor import NonFiniteError
from .training import (TrainConfig, load_checkpoint, save_checkpoint, train,
                       write_loss_log)

SAMPLES_MAGIC = b"EMDMGC1"

STEPS_SWEEP = (1, 5, 10, 20, 50)
GEO_SWEEP = (0.0, 1.0, 10.0, 100.0, 1000.0)


class ConfigError(ValueError):
    """Bad config file, unknown key, or invalid field value."""


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

_SECTION_KEYS = {
    "data": {f.name for f in dataclasses.fields(DataConfig)},
    "model": {f.name for f in dataclasses.fields(ModelConfig)},
    "train": {f.name for f in dataclasses.fields(TrainConfig)},
    "sample": {"label", "scale", "count", "seed", "use_ema", "steps"},
    "eval": {"clips_per_class", "scale", "seed", "use_ema",
             "extractor_seed", "extractor_epochs"},
    "toy": {"T", "kind", "to_t", "x_t", "step_sizes", "atoms", "weights",
            "points", "span"},
    "benchmark": {"steps_list", "count", "scale", "seed", "label", "use_ema"},
}
_TOP_KEYS = {"experiment", "out_dir", "seed"} | set(_SECTION_KEYS)


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for section, allowed in _SECTION_KEYS.items():
        sub = cfg.get(section, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"config section '{section}' must be an object")
        extra = set(sub) - allowed
        if extra:
            raise ConfigError(
                f"unknown keys in '{section}': {sorted(extra)}")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        return validate_config(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def merge_config(base: dict, overrides: dict) -> dict:
    """Overlay ``overrides`` onto ``base``, one level of section nesting."""
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict):
            section = dict(merged.get(key, {}))
            section.update(value)
            merged[key] = section
        else:
            merged[key] = value
    return merged


def _effective_config(args, overrides: dict) -> dict:
    base = load_config(args.config) if args.config else {}
    merged = merge_config(base, {k: v for k, v in overrides.items()
                                 if v not in (None, {})})
    merged.setdefault("experiment", "default")
    merged.setdefault("seed", 0)
    return validate_config(merged)


def resolve_out_dir(cfg: dict) -> str:
    root = os.environ.get("MOTIONGAN_OUT_ROOT", ".")
    out = cfg.get("out_dir") or os.path.join("runs", cfg["experiment"])
    out = out if os.path.isabs(out) else os.path.join(root, out)
    os.makedirs(out, exist_ok=True)
    return out


def _echo_config(cfg: dict, out_dir: str, command: str) -> None:
    path = os.path.join(out_dir, f"{command}-config.json")
    with open(path, "w") as fh:
        json.dump(cfg, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _build(cls, section: dict, **defaults):
    merged = {**defaults, **section}
    try:
        return cls(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v
                             for v in row])


# ---------------------------------------------------------------------------
# generated-clip container
# ---------------------------------------------------------------------------

def samples_write(path, frames: np.ndarray, labels, fps: float,
                  config: dict) -> None:
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    header = {
        "config": config,
        "labels": [int(v) for v in labels],
        "fps": float(fps),
        "shape": list(frames.shape),
    }
    write_container(path, SAMPLES_MAGIC, header, frames.tobytes())


def samples_read(path):
    header, payload = read_container(path, SAMPLES_MAGIC)
    shape = tuple(header["shape"])
    frames = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    labels = np.asarray(header["labels"], dtype=np.int64)
    return frames, labels, header


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_make_data(args) -> int:
    cfg = _effective_config(args, {"seed": args.seed})
    data_cfg = _build(DataConfig, cfg.get("data", {}), seed=cfg["seed"])
    out_dir = resolve_out_dir(cfg)
    ds = synth_dataset(data_cfg)
    path = os.path.join(out_dir, "dataset.bin")
    dataset_write(path, ds)
    _echo_config(cfg, out_dir, "make-data")
    print(f"wrote {ds.num_clips} clips ({ds.num_classes} classes) to {path}")
    return 0


def _model_config_for(ds: Dataset, section: dict) -> ModelConfig:
    return _build(ModelConfig, section, N=ds.N, frame_dim=ds.frame_dim,
                  num_classes=ds.num_classes)


def _train_once(ds, cfg, train_section, out_dir, tag=None):
    sub_dir = out_dir if tag is None else os.path.join(out_dir, tag)
    os.makedirs(sub_dir, exist_ok=True)
    train_cfg = _build(TrainConfig, train_section, seed=cfg["seed"])
    model_cfg = _model_config_for(ds, cfg.get("model", {}))
    ckpt, log = train(ds, train_cfg, model_config=model_cfg)
    save_checkpoint(ckpt, os.path.join(sub_dir, "checkpoint.ckpt"))
    write_loss_log(log, os.path.join(sub_dir, "loss_log.csv"))
    return ckpt


def cmd_train(args) -> int:
    cfg = _effective_config(args, {"seed": args.seed,
                                   "train": _train_overrides(args)})
    out_dir = resolve_out_dir(cfg)
    ds = dataset_read(args.dataset or os.path.join(out_dir, "dataset.bin"))
    section = cfg.get("train", {})

    if args.preset is None:
        _train_once(ds, cfg, section, out_dir)
        _echo_config(cfg, out_dir, "train")
        print(f"checkpoint written to {os.path.join(out_dir, 'checkpoint.ckpt')}")
        return 0

    eval_cfg = cfg.get("eval", {})
    extractor = train_feature_extractor(
        ds, seed=eval_cfg.get("extractor_seed", 0),
        epochs=eval_cfg.get("extractor_epochs", 30))
    rows = []
    if args.preset == "steps-sweep":
        sweep = [("T", int(v), f"steps_T{v:02d}") for v in STEPS_SWEEP]
        csv_name = "steps_sweep.csv"
    else:
        sweep = [("R", float(v), f"geo_R{v:g}") for v in GEO_SWEEP]
        csv_name = "geo_sweep.csv"
    for field, value, tag in sweep:
        ckpt = _train_once(ds, cfg, {**section, field: value}, out_dir, tag)
        report = evaluate(
            ckpt, ds, extractor=extractor,
            clips_per_class=eval_cfg.get("clips_per_class", 25),
            scale=eval_cfg.get("scale", 2.5),
            seed=eval_cfg.get("seed", cfg["seed"]),
            use_ema=eval_cfg.get("use_ema", True), config=cfg)
        report.write(os.path.join(out_dir, tag, "metrics.json"))
        rows.append((value, report.fid, report.acc, report.div, report.mm,
                     report.runtime_ms_per_frame))
        print(f"{field}={value:g}: FID {report.fid:.4f} ACC {report.acc:.3f}")
    write_csv(os.path.join(out_dir, csv_name),
              (field, "fid", "acc", "div", "mm", "runtime_ms_per_frame"),
              rows)
    _echo_config(cfg, out_dir, "train")
    return 0


def _train_overrides(args) -> dict:
    out = {}
    if getattr(args, "epochs", None) is not None:
        out["epochs"] = args.epochs
    if getattr(args, "steps", None) is not None:
        out["T"] = args.steps
    if getattr(args, "geo_weight", None) is not None:
        out["R"] = args.geo_weight
    return out


def cmd_sample(args) -> int:
    section = {k: v for k, v in [("label", args.label), ("scale", args.scale),
                                 ("count", args.n), ("seed", args.seed),
                                 ("steps", args.steps_implicit)]
               if v is not None}
    cfg = _effective_config(args, {"sample": section})
    out_dir = resolve_out_dir(cfg)
    ckpt = load_checkpoint(args.checkpoint
                           or os.path.join(out_dir, "checkpoint.ckpt"))
    merged = cfg.get("sample", {})
    request = _build(SampleRequest, merged, seed=cfg["seed"])
    clips, raw, timing = sample(ckpt, request)
    labels = [request.label if request.label is not None else -1] * len(clips)
    samples_path = os.path.join(out_dir, "samples.bin")
    samples_write(samples_path, raw, labels, ckpt.fps, cfg)
    write_positions_csv(clips[0], ckpt.skeleton,
                        os.path.join(out_dir, "sample_positions.csv"))
    _echo_config(cfg, out_dir, "sample")
    print(f"wrote {len(clips)} clips to {samples_path} "
          f"({timing['ms_per_frame']:.2f} ms/frame)")
    return 0


def cmd_eval(args) -> int:
    cfg = _effective_config(args, {})
    out_dir = resolve_out_dir(cfg)
    ds = dataset_read(args.dataset or os.path.join(out_dir, "dataset.bin"))
    ckpt = load_checkpoint(args.checkpoint
                           or os.path.join(out_dir, "checkpoint.ckpt"))
    section = cfg.get("eval", {})
    extractor = train_feature_extractor(
        ds, seed=section.get("extractor_seed", 0),
        epochs=section.get("extractor_epochs", 30))
    report = evaluate(ckpt, ds, extractor=extractor,
                      clips_per_class=section.get("clips_per_class", 50),
                      scale=section.get("scale", 2.5),
                      seed=section.get("seed", cfg["seed"]),
                      use_ema=section.get("use_ema", True), config=cfg)
    path = os.path.join(out_dir, "metrics.json")
    report.write(path)
    _echo_config(cfg, out_dir, "eval")
    print(f"FID {report.fid:.4f} ACC {report.acc:.3f} DIV {report.div:.3f} "
          f"-> {path}")
    return 0


def cmd_toy_posterior(args) -> int:
    cfg = _effective_config(args, {})
    out_dir = resolve_out_dir(cfg)
    section = cfg.get("toy", {})
    T = section.get("T", 1000)
    to_t = section.get("to_t", 200)
    x_t = section.get("x_t", 0.0)
    step_sizes = section.get("step_sizes", [1, 5, 25, 125])
    try:
        schedule = Schedule(kind=section.get("kind", "cosine"),
                            beta=beta_table(T, section.get("kind", "cosine")))
        prior = DeltaPrior(tuple(section.get("atoms", (-1.0, 1.0))),
                           section.get("weights"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = []
    for k in step_sizes:
        gp = grid_true_posterior(prior, schedule, to_t + int(k), to_t, x_t,
                                 points=section.get("points", 2048),
                                 span=section.get("span", 6.0))
        rows.append((int(k), gaussianity_score(gp)))
    path = os.path.join(out_dir, "toy_posterior.csv")
    write_csv(path, ("step_size", "gaussianity"), rows)
    _echo_config(cfg, out_dir, "toy-posterior")
    for k, score in rows:
        print(f"step size {k:4d}: gaussianity {score:.6f}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _effective_config(args, {})
    out_dir = resolve_out_dir(cfg)
    ckpt = load_checkpoint(args.checkpoint
                           or os.path.join(out_dir, "checkpoint.ckpt"))
    section = cfg.get("benchmark", {})
    steps_list = [int(v) for v in section.get("steps_list", STEPS_SWEEP)]
    count = section.get("count", 8)
    base = dict(label=section.get("label", 0),
                scale=section.get("scale", 2.5), count=count,
                seed=section.get("seed", cfg["seed"]),
                use_ema=section.get("use_ema", True))
    sample(ckpt, SampleRequest(**{**base, "count": 1, "steps": 1}))  # warm-up
    rows = []
    for steps in steps_list:
        _, _, timing = sample(ckpt, SampleRequest(**base, steps=steps))
        rows.append((steps, timing["ms_per_frame"], timing["total_s"]))
        print(f"T={steps:3d}: {timing['ms_per_frame']:.2f} ms/frame")
    path = os.path.join(out_dir, "benchmark.csv")
    write_csv(path, ("steps", "ms_per_frame", "total_s"), rows)
    by_steps = {s: ms for s, ms, _ in rows}
    if 10 in by_steps and 50 in by_steps:
        print(f"runtime(T=50)/runtime(T=10) = {by_steps[50] / by_steps[10]:.2f}")
    _echo_config(cfg, out_dir, "benchmark")
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motiongan",
        description="Few-step denoising-GAN motion synthesis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="global seed override")

    p = sub.add_parser("make-data", help="generate the synthetic dataset")
    common(p)

    p = sub.add_parser("train", help="train a model on a dataset file")
    common(p)
    p.add_argument("--dataset", help="dataset file (default: <out>/dataset.bin)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps", type=int, help="denoising step count T")
    p.add_argument("--geo-weight", type=float,
                   help="geometric loss weight R")
    p.add_argument("--preset", choices=("steps-sweep", "geo-sweep"))

    p = sub.add_parser("sample", help="generate clips from a checkpoint")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--label", type=int)
    p.add_argument("--scale", type=float)
    p.add_argument("--n", type=int, help="number of clips")
    p.add_argument("--steps-implicit", type=int,
                   help="sample with this step count instead of the "
                        "trained schedule")

    p = sub.add_parser("eval", help="score a checkpoint against a dataset")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--dataset")

    p = sub.add_parser("toy-posterior",
                       help="tabulate posterior gaussianity vs step size")
    common(p)

    p = sub.add_parser("benchmark", help="time sampling across step counts")
    common(p)
    p.add_argument("--checkpoint")
    return parser


_HANDLERS = {
    "make-data": cmd_make_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "toy-posterior": cmd_toy_posterior,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonFiniteError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return 3
    except (IntegrityError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
