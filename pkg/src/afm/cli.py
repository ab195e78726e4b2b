"""Command-line surface: train, sweep, noise-ratio, dump-features, verify.

Config files are flat key=value text ('#' comments allowed); unknown keys
are rejected. CSV output uses '.' decimals and LF line endings.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields

import numpy as np

from . import tensor as T
from .data import (NoisyDataset, generate, inject_noise, load_dataset,
                   one_hot, save_dataset)
from .errors import ConfigError, NumericError
from .grouping import attend, pure_noisy_group_ratio, sample_groups
from .mixing import interpolate
from .training import (TrainConfig, load_state, save_state, train)
from .verify import run_all

DATA_KEYS = {
    "data_kind": ("blobs", str),
    "data_classes": (3, int),
    "data_per_class_train": (1000, int),
    "data_per_class_test": (250, int),
    "data_d0": (32, int),
    "data_separation": (4.0, float),
    "data_seed": (0, int),
    "noise_model": ("symmetric", str),
    "noise_rate": (0.4, float),
    "noise_seed": (0, int),
}

_BOOL = {"true": True, "false": False, "1": True, "0": False}


def _parse_value(name, raw, kind):
    try:
        if kind is bool:
            return _BOOL[raw.strip().lower()]
        if kind is tuple:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return kind(raw)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r}") from exc


def _train_key_types():
    out = {}
    for f in fields(TrainConfig):
        default = getattr(TrainConfig, f.name, None)
        if f.name == "hidden":
            out["hidden"] = tuple
        elif f.name in ("m", "intra_ratio"):
            out[f.name] = float if f.name == "intra_ratio" else int
        elif isinstance(default, bool):
            out[f.name] = bool
        elif isinstance(default, int):
            out[f.name] = int
        elif isinstance(default, float):
            out[f.name] = float
        else:
            out[f.name] = str
    return out


TRAIN_KEY_TYPES = _train_key_types()
# 'lambda' is accepted as the user-facing spelling of the trade-off weight
KEY_ALIASES = {"lambda": "lam"}


def parse_config(path) -> tuple[TrainConfig, dict]:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    train_kwargs: dict = {}
    data_spec = {k: v for k, (v, _) in DATA_KEYS.items()}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            key = KEY_ALIASES.get(key, key)
            if key in DATA_KEYS:
                data_spec[key] = _parse_value(key, raw, DATA_KEYS[key][1])
            elif key in TRAIN_KEY_TYPES:
                train_kwargs[key] = _parse_value(key, raw, TRAIN_KEY_TYPES[key])
            else:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
    config = TrainConfig(**train_kwargs)
    config.validate()
    return config, data_spec


def build_dataset(spec: dict) -> NoisyDataset:
    ds = generate(spec["data_kind"], spec["data_classes"],
                  spec["data_per_class_train"], spec["data_per_class_test"],
                  spec["data_d0"], spec["data_separation"], spec["data_seed"])
    if spec["noise_rate"] > 0:
        ds = inject_noise(ds, spec["noise_model"], spec["noise_rate"],
                          spec["noise_seed"])
    return ds


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    try:
        config, data_spec = parse_config(args.config)
        dataset = build_dataset(data_spec)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    try:
        state, log = train(dataset, config)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    log.to_csv(os.path.join(args.out, "metrics.csv"))
    save_state(os.path.join(args.out, "checkpoint.bin"), state)
    save_dataset(os.path.join(args.out, "dataset.bin"), dataset)
    return 0


AXES = ("lambda", "group-size", "interaction", "intra-inter-ratio", "data-fraction")


def _apply_axis(config: TrainConfig, axis: str, value):
    import copy
    cfg = copy.deepcopy(config)
    if axis == "lambda":
        cfg.lam = float(value)
    elif axis == "group-size":
        cfg.k = int(value)
    elif axis == "interaction":
        cfg.interaction = str(value)
    elif axis == "intra-inter-ratio":
        cfg.ratio_policy = "fixed-ratio"
        cfg.intra_ratio = float(value)
    elif axis == "data-fraction":
        cfg.data_fraction = float(value)
    else:
        raise ConfigError(f"axis must be one of {AXES}")
    return cfg


def _sweep_worker(job):
    config, data_spec, axis, value, seed, run_dir = job
    cfg = _apply_axis(config, axis, value)
    cfg.seed = int(seed)
    cfg.validate()
    dataset = build_dataset(data_spec)
    _, log = train(dataset, cfg)
    os.makedirs(run_dir, exist_ok=True)
    log.to_csv(os.path.join(run_dir, "metrics.csv"))
    return value, seed, log.final("test_acc")


def cmd_sweep(args) -> int:
    try:
        config, data_spec = parse_config(args.config)
        if args.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}")
        values = [v.strip() for v in args.values.split(",") if v.strip()]
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        if not values or not seeds or len(set(seeds)) != len(seeds):
            raise ConfigError("need nonempty values and distinct seeds")
        for v in values:  # fail fast on invalid axis values
            _apply_axis(config, args.axis, v).validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)

    jobs = []
    for v in values:
        for s in seeds:
            run_dir = os.path.join(args.out, f"{args.axis}_{v}", f"seed_{s}")
            jobs.append((config, data_spec, args.axis, v, s, run_dir))

    workers = int(os.environ.get("AFM_THREADS", "1"))
    results, failures = {}, []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(job, pool.submit(_sweep_worker, job)) for job in jobs]
            for job, fut in futures:
                try:
                    v, s, acc = fut.result()
                    results.setdefault(v, []).append(acc)
                except Exception as exc:
                    failures.append((job[3], job[4], str(exc)))
    else:
        for job in jobs:
            try:
                v, s, acc = _sweep_worker(job)
                results.setdefault(v, []).append(acc)
            except Exception as exc:
                failures.append((job[3], job[4], str(exc)))

    rows = []
    for v in values:
        accs = results.get(v, [])
        if accs:
            mean = float(np.mean(accs))
            std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
            rows.append([args.axis, v, repr(mean), repr(std), len(accs)])
    _write_csv(os.path.join(args.out, "summary.csv"),
               ["axis", "value", "mean_acc", "std_acc", "n_runs"], rows)
    for v, s, msg in failures:
        print(f"run failed: value={v} seed={s}: {msg}", file=sys.stderr)
    return 1 if failures else 0


def cmd_noise_ratio(args) -> int:
    try:
        ks = [int(v) for v in args.values.split(",") if v.strip()]
        if not ks:
            raise ConfigError("need at least one K value")
        for k in ks:
            pure_noisy_group_ratio(args.n_noisy, args.n_total, k)
        if args.trials < 1:
            raise ConfigError("trials must be >= 1")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    rng = np.random.default_rng(args.seed)
    labels = np.zeros(args.n_total, dtype=np.int64)
    noisy = np.zeros(args.n_total, dtype=bool)
    noisy[:args.n_noisy] = True
    rows = []
    print(f"{'K':>3} {'closed_form':>14} {'empirical':>14} {'abs_diff':>12} {'3sigma':>12} pass")
    for k in ks:
        closed = pure_noisy_group_ratio(args.n_noisy, args.n_total, k)
        groups = sample_groups(labels, args.trials, k, rng=rng)
        freq = float(np.mean([all(noisy[i] for i in g.members) for g in groups]))
        sigma3 = 3.0 * np.sqrt(max(closed * (1 - closed), 1e-300) / args.trials)
        ok = abs(freq - closed) <= sigma3 + 1e-12
        print(f"{k:>3} {closed:>14.8f} {freq:>14.8f} {abs(freq-closed):>12.8f} "
              f"{sigma3:>12.8f} {'yes' if ok else 'NO'}")
        rows.append([k, repr(float(closed)), repr(float(freq)),
                     repr(float(abs(freq - closed))), repr(float(sigma3)),
                     int(ok)])
    if args.out:
        _write_csv(args.out, ["k", "closed_form", "empirical", "abs_diff",
                              "three_sigma", "within_bound"], rows)
    return 0


def cmd_dump_features(args) -> int:
    try:
        model, ga = load_state(args.checkpoint)
        dataset = load_dataset(args.dataset)
        if dataset.input_dim != model.backbone.input_dim:
            raise ConfigError(
                f"dataset width {dataset.input_dim} does not match "
                f"backbone input {model.backbone.input_dim}")
        if args.interpolations > 0 and ga is None:
            raise ConfigError("checkpoint has no attention parameters; "
                              "cannot generate interpolations")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    feats = model.extract_features(T.constant(dataset.features)).values
    d = feats.shape[1]
    header = [f"f{i}" for i in range(d)] + [
        "given_label", "clean_label", "is_noisy", "is_interpolation",
        "attention_weights"]
    rows = []
    for i in range(len(feats)):
        rows.append([repr(float(v)) for v in feats[i]]
                    + [int(dataset.given_labels[i]), int(dataset.clean_labels[i]),
                       int(dataset.noise_mask[i]), 0, ""])

    if args.interpolations > 0:
        rng = np.random.default_rng(args.seed)
        tr = dataset.train_idx
        train_feats = T.constant(feats[tr])
        labels = one_hot(dataset.given_labels[tr], dataset.n_classes)
        groups = sample_groups(dataset.given_labels[tr], args.interpolations,
                               ga.k, rng=rng)
        interp = interpolate(train_feats, labels, attend(train_feats, groups, ga))
        for gi in range(len(groups)):
            w = "|".join(repr(float(v)) for v in interp.weights.values[gi])
            rows.append([repr(float(v)) for v in interp.features.values[gi]]
                        + [-1, -1, 0, 1, w])
    _write_csv(args.out, header, rows)
    return 0


def cmd_verify(args) -> int:
    results = run_all(inject_fault=args.inject_fault)
    failed = [name for name, ok, _ in results if not ok]
    for name, ok, detail in results:
        print(f"[{'pass' if ok else 'FAIL'}] {name}: {detail}")
    print(f"{len(results) - len(failed)}/{len(results)} properties passed")
    if failed:
        print("failing properties: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afm",
        description="Noise-robust training via grouped attentive feature mixup")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="grid sweep over one config axis")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("noise-ratio",
                       help="closed-form vs Monte-Carlo pure-noisy-group ratios")
    p.add_argument("--n-noisy", type=int, required=True)
    p.add_argument("--n-total", type=int, required=True)
    p.add_argument("--values", required=True, help="comma-separated K values")
    p.add_argument("--trials", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_noise_ratio)

    p = sub.add_parser("dump-features",
                       help="dump backbone features and interpolations as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--interpolations", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_dump_features)

    p = sub.add_parser("verify", help="run the property suite")
    p.add_argument("--inject-fault", default=None, choices=[None, "grad-sign"],
                   help="test hook: flip a gradient sign to force a failure")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
