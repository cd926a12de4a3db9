"""Command-line front end: train, generate, eval-parzen, bench, check.

Configuration precedence is flags > config file > built-in defaults. The
config file is flat `key=value` text ('#' starts a comment). Exit codes:
0 success, 1 check/assert failure, 2 usage or IO error, 3 run aborted on a
non-finite loss. SVAE_THREADS bounds worker parallelism where supported.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import data as data_mod
from . import evaluation, selfcheck, training
from .errors import ContractError, FormatError, NumericError, SvaeError
from .models import build_model, default_config, load_checkpoint
from .training import TrainConfig

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NAN_ABORT = 3

DEFAULTS = {
    "variant": "lowrank-mvn",
    "d": 3,
    "n_maps": 64,
    "latent_dim": None,  # variant-dependent when unset
    "dataset": "digits",
    "data_dir": None,
    "out": "svae_out",
    "seed": 0,
    "epochs": 3,
    "batch_size": 64,
    "learning_rate": 1e-3,
    "likelihood_sigma": 1.0,
    "limit": 0,  # 0 = use the full split
    "count": 64,
    "grid_rows": 8,
    "n_samples": 10000,
    "n_generate": 2000,
    "repeats": 2,
    "checkpoint": None,
}

_INT_KEYS = {
    "d", "n_maps", "latent_dim", "seed", "epochs", "batch_size", "limit",
    "count", "grid_rows", "n_samples", "n_generate", "repeats",
}
_FLOAT_KEYS = {"learning_rate", "likelihood_sigma"}


def read_config_file(path) -> dict:
    """Parse flat key=value lines; unknown keys are rejected."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in DEFAULTS:
                raise FormatError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = value.strip()
    return out


def _convert(key, value):
    if value is None or value == "":
        return None
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    return value


def resolve_options(args) -> dict:
    """Merge defaults < config file < explicit flags."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            merged[key] = _convert(key, value)
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = _convert(key, flag)
    return merged


# ---------------------------------------------------------------------------
# dataset plumbing

_MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def load_split(opts, split):
    kind = opts["dataset"]
    data_dir = opts["data_dir"]
    if kind == "digits":
        data_dir = data_dir or os.path.join(opts["out"], "digits-data")
        data_mod.ensure_digits_idx(data_dir)
        images, labels = (os.path.join(data_dir, f) for f in _MNIST_FILES[split])
        ds = data_mod.load_mnist_idx(images, labels, name="digits", split=split)
    elif kind == "mnist":
        if not data_dir:
            raise ContractError("--data-dir is required for --dataset mnist")
        images, labels = (os.path.join(data_dir, f) for f in _MNIST_FILES[split])
        if not os.path.exists(images):
            raise FileNotFoundError(f"MNIST file not found: {images}")
        ds = data_mod.load_mnist_idx(images, labels, name="mnist", split=split)
    elif kind == "cifar10":
        if not data_dir:
            raise ContractError("--data-dir is required for --dataset cifar10")
        ds = data_mod.load_cifar10(data_dir, split=split)
    elif kind == "folder":
        if not data_dir:
            raise ContractError("--data-dir is required for --dataset folder")
        ds = data_mod.load_image_folder(data_dir, split=split)
    else:
        raise ContractError(f"unknown dataset {kind!r}")
    if opts["limit"]:
        ds = ds.subset(min(opts["limit"], len(ds)))
    return ds


def model_config_from(opts, image_shape):
    return default_config(
        opts["variant"],
        image_shape=image_shape,
        d=opts["d"],
        n_maps=opts["n_maps"],
        latent_dim=opts["latent_dim"],
        likelihood_sigma=opts["likelihood_sigma"],
    )


def _config_log_record(opts, cfg):
    return json.dumps(
        {
            "event": "config",
            "variant": cfg.variant.value,
            "d": cfg.d,
            "n_maps": cfg.n_maps,
            "latent_dim": cfg.latent_dim,
            "head_width": cfg.head_width,
            "seed": opts["seed"],
            "epochs": opts["epochs"],
            "batch_size": opts["batch_size"],
            "learning_rate": opts["learning_rate"],
        },
        sort_keys=True,
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args):
    opts = resolve_options(args)
    os.makedirs(opts["out"], exist_ok=True)
    dataset = load_split(opts, "train")
    cfg = model_config_from(opts, dataset.image_shape)
    model = build_model(cfg, seed=opts["seed"])
    print(f"variant={cfg.variant.value} head_width={cfg.head_width} "
          f"parameters={model.n_parameters()}")
    log_path = os.path.join(opts["out"], "run.log")
    with open(log_path, "w") as fh:
        fh.write(_config_log_record(opts, cfg) + "\n")
    train_cfg = TrainConfig(
        epochs=opts["epochs"],
        batch_size=opts["batch_size"],
        learning_rate=opts["learning_rate"],
        seed=opts["seed"],
    )

    def on_epoch_end(epoch, report):
        rng = np.random.default_rng([opts["seed"] & 0xFFFFFFFFFFFFFFFF, 0xA11CE, epoch])
        grid = model.generate(opts["grid_rows"] ** 2, rng)
        path = os.path.join(opts["out"], f"samples_epoch_{epoch + 1:03d}.png")
        data_mod.save_png_grid(grid, rows=opts["grid_rows"], path=path)
        print(
            f"epoch {epoch + 1}: elbo={report.mean_elbo:.4f} "
            f"recon={report.mean_recon:.4f} kl={report.mean_kl:.4f} "
            f"({report.wall_seconds:.2f}s)"
        )

    training.train(
        model,
        dataset,
        train_cfg,
        out_dir=opts["out"],
        log_path=log_path,
        on_epoch_end=on_epoch_end,
    )
    print(f"final checkpoint: {os.path.join(opts['out'], 'svae_final.ckpt')}")
    return EXIT_OK


def cmd_generate(args):
    opts = resolve_options(args)
    if not opts["checkpoint"]:
        raise ContractError("--checkpoint is required for generate")
    model, _, _ = load_checkpoint(opts["checkpoint"])
    count, rows = opts["count"], opts["grid_rows"]
    rng = np.random.default_rng([opts["seed"] & 0xFFFFFFFFFFFFFFFF, 0xBE7C])
    t0 = time.perf_counter()
    images = model.generate(count, rng)
    seconds = time.perf_counter() - t0
    os.makedirs(opts["out"], exist_ok=True)
    per_grid = rows * rows
    n_grids = (count + per_grid - 1) // per_grid
    for g in range(n_grids):
        chunk = images[g * per_grid : (g + 1) * per_grid]
        suffix = "" if n_grids == 1 else f"_{g + 1:03d}"
        path = os.path.join(opts["out"], f"samples{suffix}.png")
        data_mod.save_png_grid(chunk, rows=min(rows, len(chunk)), path=path)
    print(training.format_generation_line(model.config.variant.value, count, seconds))
    return EXIT_OK


def cmd_eval_parzen(args):
    opts = resolve_options(args)
    if not opts["checkpoint"]:
        raise ContractError("--checkpoint is required for eval-parzen")
    model, _, _ = load_checkpoint(opts["checkpoint"])
    test_set = load_split(opts, "test")
    train_set = load_split(opts, "train")
    n_valid = max(1, len(train_set) // 10)
    valid_images = train_set.images[-n_valid:]
    cfg = evaluation.ParzenConfig(
        n_model_samples=opts["n_samples"], n_valid=n_valid, seed=opts["seed"]
    )
    report = evaluation.evaluate_model_parzen(model, test_set.images, valid_images, cfg)
    record = evaluation.report_record(report)
    print(record)
    os.makedirs(opts["out"], exist_ok=True)
    with open(os.path.join(opts["out"], "run.log"), "a") as fh:
        fh.write(record + "\n")
    return EXIT_OK


def cmd_bench(args):
    opts = resolve_options(args)
    dataset = load_split(opts, "train")
    models = {}
    for name in ("original", "naive", "mvn", "lowrank-mvn"):
        cfg = default_config(
            name,
            image_shape=dataset.image_shape,
            d=opts["d"],
            n_maps=opts["n_maps"],
            likelihood_sigma=opts["likelihood_sigma"],
        )
        models[name] = build_model(cfg, seed=opts["seed"])
    cfg = TrainConfig(
        epochs=1,
        batch_size=opts["batch_size"],
        learning_rate=opts["learning_rate"],
        seed=opts["seed"],
    )
    rows = training.bench(
        models, dataset, opts["n_generate"], cfg, repeats=opts["repeats"]
    )
    print(training.format_bench_table(rows))
    return EXIT_OK


def cmd_check(args):
    ok, rows = selfcheck.run_all(inject_gradient_fault=args.inject_gradient_fault)
    width = max(len(name) for name, _, _ in rows)
    for name, passed, detail in rows:
        print(f"{name:<{width}}  {'PASS' if passed else 'FAIL'}  {detail}")
    print(f"{len(rows)} suites, {sum(1 for _, p, _ in rows if p)} passed")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="svae",
        description="Spatial VAEs with matrix-variate normal latent feature maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--dataset", choices=["mnist", "cifar10", "folder", "digits"])
        p.add_argument("--data-dir", dest="data_dir")
        p.add_argument("--limit", type=int, help="use only the first N images")

    def add_model(p):
        p.add_argument(
            "--variant", choices=["original", "naive", "mvn", "lowrank-mvn"]
        )
        p.add_argument("--d", type=int, help="latent feature map side length")
        p.add_argument("--n-maps", dest="n_maps", type=int, help="latent map count")
        p.add_argument("--latent-dim", dest="latent_dim", type=int)
        p.add_argument("--likelihood-sigma", dest="likelihood_sigma", type=float)

    p_train = sub.add_parser("train", help="train a model and write checkpoints")
    add_common(p_train)
    add_model(p_train)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", dest="batch_size", type=int)
    p_train.add_argument("--learning-rate", dest="learning_rate", type=float)
    p_train.add_argument("--grid-rows", dest="grid_rows", type=int)
    p_train.set_defaults(func=cmd_train)

    p_gen = sub.add_parser("generate", help="sample images from a checkpoint")
    add_common(p_gen)
    p_gen.add_argument("--checkpoint")
    p_gen.add_argument("--count", type=int)
    p_gen.add_argument("--grid-rows", dest="grid_rows", type=int)
    p_gen.set_defaults(func=cmd_generate)

    p_eval = sub.add_parser("eval-parzen", help="Parzen-window log-likelihood")
    add_common(p_eval)
    p_eval.add_argument("--checkpoint")
    p_eval.add_argument("--n-samples", dest="n_samples", type=int)
    p_eval.set_defaults(func=cmd_eval_parzen)

    p_bench = sub.add_parser("bench", help="epoch/generation timing across variants")
    add_common(p_bench)
    p_bench.add_argument("--n-maps", dest="n_maps", type=int)
    p_bench.add_argument("--d", type=int)
    p_bench.add_argument("--batch-size", dest="batch_size", type=int)
    p_bench.add_argument("--learning-rate", dest="learning_rate", type=float)
    p_bench.add_argument("--likelihood-sigma", dest="likelihood_sigma", type=float)
    p_bench.add_argument("--n-generate", dest="n_generate", type=int)
    p_bench.add_argument("--repeats", type=int)
    p_bench.set_defaults(func=cmd_bench)

    p_check = sub.add_parser("check", help="run the built-in oracle suites")
    p_check.add_argument(
        "--inject-gradient-fault",
        action="store_true",
        help="negative control: corrupt the gradient suite and expect failure",
    )
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: aborted on non-finite loss: {exc}", file=sys.stderr)
        return EXIT_NAN_ABORT
    except (ContractError, FormatError, SvaeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, NotADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
