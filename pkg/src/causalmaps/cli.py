"""Command-line harness: cmap, factors, train, am.

Every command is deterministic given its config and seed, writes all
outputs atomically (no partial files on failure), and mirrors the
library calls bit-for-bit.

Exit codes: 0 ok, 2 parse/usage error, 3 degenerate input (all-zero
stack), 4 diverged training loss, 5 non-finite gradient during ascent.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import desknet, fileio
from .am import AmConfig, am_run, combined_prior_loss, quadratic_scorer
from .cmap import METHOD_LEHMER, METHOD_MAX, EstimatorConfig, compute_causality_map
from .exceptions import (
    CausalmapsError,
    DivergedLossError,
    NonFiniteGradientError,
    ZeroStackError,
)
from .factors import FactorConfig, extract_factors

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DEGENERATE = 3
EXIT_DIVERGED = 4
EXIT_NONFINITE = 5

_TRAIN_KEYS = {
    "variants", "seeds", "epochs", "batch_size", "learning_rate",
    "n_samples", "split", "method", "lehmer_p", "epsilon",
    "direction", "mode", "cmap_backprop", "save_params",
}

_AM_KEYS = {
    "height", "width", "iterations", "step_size", "jitter_px", "blur_every",
    "clip_lo", "clip_hi", "seed", "prior_stride",
    "lambda_hist", "lambda_noise", "lambda_sym", "lambda_freq",
    "target_histogram", "reference_image", "init_image",
}


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=None,
                        help="override the config seed (train: runs only this seed)")
    shared.add_argument("--out", type=Path, default=Path("."), help="output directory")
    shared.add_argument("--config", type=Path, default=None, help="key=value config file")

    parser = argparse.ArgumentParser(
        prog="causalmaps",
        description="causality-map experiments: maps, factors, desk-scale training, activation maximization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cmap = sub.add_parser("cmap", parents=[shared],
                            help="compute a causality map from a stack CSV")
    p_cmap.add_argument("stack", type=Path, help="input feature-stack CSV")
    p_cmap.add_argument("--method", choices=[METHOD_MAX, METHOD_LEHMER], default=METHOD_MAX)
    p_cmap.add_argument(
        "--p", type=float, default=0.0,
        help="Lehmer exponent; the usual sweep is -100, -2, -1, 0, 1, 100 (any finite real works)",
    )
    p_cmap.add_argument("--epsilon", type=float, default=1e-12)

    p_fac = sub.add_parser("factors", parents=[shared],
                           help="extract causality factors from a map CSV")
    p_fac.add_argument("map", type=Path, help="input causality-map CSV")
    p_fac.add_argument("--direction", choices=["causes", "effects"], default="causes")
    p_fac.add_argument("--mode", choices=["full", "bool"], default="full")

    sub.add_parser("train", parents=[shared],
                   help="train desk-scale variants over seeds (config required)")

    p_am = sub.add_parser("am", parents=[shared],
                          help="run activation maximization (config required)")
    p_am.add_argument("--scorer", default="quadratic-test",
                      help="'quadratic-test' or 'desknet:<params-file>:<class>'")
    return parser


# -- cmap ----------------------------------------------------------------------

def _cmd_cmap(args) -> int:
    stack = fileio.read_stack_csv(args.stack)
    cfg = EstimatorConfig(method=args.method, lehmer_p=args.p, epsilon=args.epsilon)
    cmap = compute_causality_map(stack, cfg)
    lehmer_p = args.p if args.method == METHOD_LEHMER else None
    fileio.write_map_csv(args.out / "cmap.csv", cmap.entries, cmap.method, lehmer_p)
    fileio.write_heatmap_pgm(args.out / "cmap.pgm", cmap.entries)
    return EXIT_OK


# -- factors -------------------------------------------------------------------

def _cmd_factors(args) -> int:
    entries = fileio.read_map_csv(args.map)
    cfg = FactorConfig(direction=args.direction, mode=args.mode)
    factors = extract_factors(entries, cfg)
    fileio.write_factors_csv(args.out / "factors.csv", factors.weights,
                             factors.direction, factors.mode)
    return EXIT_OK


# -- train ---------------------------------------------------------------------

def _parse_bool(value: str, key: str) -> bool:
    lowered = value.lower()
    if lowered in ("on", "true", "1", "yes"):
        return True
    if lowered in ("off", "false", "0", "no"):
        return False
    raise fileio.FileFormatError(f"{key} must be on/off, got {value!r}")


def _train_configs(raw: dict, seed_override):
    variants = [v.strip() for v in raw.get("variants", "baseline").split(",") if v.strip()]
    if seed_override is not None:
        seeds = [seed_override]
    else:
        seeds = [int(s) for s in raw.get("seeds", "0").split(",") if s.strip()]
    split = tuple(float(f) for f in raw.get("split", "0.70,0.15,0.15").split(","))
    base = dict(
        epochs=int(raw.get("epochs", "15")),
        batch_size=int(raw.get("batch_size", "32")),
        learning_rate=float(raw.get("learning_rate", "0.02")),
        n_samples=int(raw.get("n_samples", "3000")),
        split=split,
        estimator=EstimatorConfig(
            method=raw.get("method", METHOD_MAX),
            lehmer_p=float(raw.get("lehmer_p", "0")),
            epsilon=float(raw.get("epsilon", "1e-12")),
        ),
        factor_cfg=FactorConfig(
            direction=raw.get("direction", "causes"),
            mode=raw.get("mode", "full"),
        ),
        cmap_backprop=_parse_bool(raw.get("cmap_backprop", "on"), "cmap_backprop"),
    )
    return [
        desknet.TrainConfig(variant=variant, seed=seed, **base)
        for variant in variants
        for seed in seeds
    ]


def _cmd_train(args) -> int:
    if args.config is None:
        raise fileio.FileFormatError("train requires --config")
    raw = fileio.parse_config(args.config, _TRAIN_KEYS)
    save_params = _parse_bool(raw.get("save_params", "on"), "save_params")
    configs = _train_configs(raw, args.seed)

    runs = []
    for cfg in configs:
        try:
            runs.append((cfg, desknet.train(cfg)))
        except DivergedLossError as exc:
            raise DivergedLossError(
                f"variant {cfg.variant!r} seed {cfg.seed}: {exc}"
            ) from exc

    by_variant: dict[str, list] = {}
    for cfg, result in runs:
        by_variant.setdefault(cfg.variant, []).append(result)
    aggregates = [
        {
            "variant": variant,
            "seeds": [r.seed for r in results],
            "mean_test_accuracy": float(np.mean([r.test_accuracy for r in results])),
            "std_test_accuracy": float(np.std([r.test_accuracy for r in results])),
        }
        for variant, results in by_variant.items()
    ]
    payload = {"runs": [r.to_dict() for _, r in runs], "aggregates": aggregates}
    fileio.atomic_write_text(args.out / "metrics.json",
                             json.dumps(payload, indent=2, sort_keys=True) + "\n")

    lines = ["variant,seed,epoch,train_loss,train_accuracy,val_loss,val_accuracy"]
    for cfg, result in runs:
        for row in result.history:
            lines.append(
                f"{cfg.variant},{cfg.seed},{row['epoch']},"
                + ",".join(
                    fileio.FLOAT_FMT % row[c]
                    for c in ("train_loss", "train_accuracy", "val_loss", "val_accuracy")
                )
            )
    fileio.atomic_write_text(args.out / "history.csv", "\n".join(lines) + "\n")

    if save_params:
        for cfg, result in runs:
            fileio.write_params_txt(
                args.out / f"params_{cfg.variant}_s{cfg.seed}.txt", result.params, cfg
            )
    return EXIT_OK


# -- am --------------------------------------------------------------------------

def _am_config(raw: dict, seed_override) -> AmConfig:
    seed = seed_override if seed_override is not None else int(raw.get("seed", "0"))
    return AmConfig(
        step_size=float(raw.get("step_size", "0.1")),
        iterations=int(raw.get("iterations", "200")),
        jitter_px=int(raw.get("jitter_px", "0")),
        blur_every=int(raw.get("blur_every", "0")),
        clip_lo=float(raw.get("clip_lo", "0")),
        clip_hi=float(raw.get("clip_hi", "1")),
        seed=seed,
        prior_weights=(
            float(raw.get("lambda_hist", "0")),
            float(raw.get("lambda_noise", "0")),
            float(raw.get("lambda_sym", "0")),
            float(raw.get("lambda_freq", "0")),
        ),
        prior_stride=int(raw.get("prior_stride", "1")),
    )


def _make_scorer(spec: str, shape):
    if spec == "quadratic-test":
        return quadratic_scorer(np.full(shape, 0.5))
    if spec.startswith("desknet:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise fileio.FileFormatError(
                f"scorer must be 'desknet:<params-file>:<class>', got {spec!r}"
            )
        params, cfg = fileio.read_params_txt(parts[1])
        class_idx = int(parts[2])
        if shape[:2] != (desknet.IMAGE_SIDE, desknet.IMAGE_SIDE):
            raise fileio.FileFormatError(
                f"desknet scorer needs {desknet.IMAGE_SIDE}x{desknet.IMAGE_SIDE} images, config says {shape[0]}x{shape[1]}"
            )
        return desknet.logit_scorer(params, cfg, class_idx)
    raise fileio.FileFormatError(f"unknown scorer {spec!r}")


def _cmd_am(args) -> int:
    if args.config is None:
        raise fileio.FileFormatError("am requires --config")
    raw = fileio.parse_config(args.config, _AM_KEYS)
    cfg = _am_config(raw, args.seed)
    height = int(raw.get("height", "16"))
    width = int(raw.get("width", "16"))

    if "init_image" in raw:
        init = fileio.read_image(raw["init_image"])
    else:
        rng = np.random.default_rng(cfg.seed)
        init = rng.uniform(cfg.clip_lo, cfg.clip_hi, size=(height, width, 1))

    scorer = _make_scorer(args.scorer, init.shape)

    regularizers = []
    if any(w > 0 for w in cfg.prior_weights):
        target = fileio.read_histogram_csv(raw["target_histogram"]) if "target_histogram" in raw else None
        reference = fileio.read_image(raw["reference_image"]) if "reference_image" in raw else None
        regularizers.append(lambda img: combined_prior_loss(img, cfg, target, reference))

    trace = []
    final = am_run(scorer, init, cfg, regularizers,
                   on_iteration=lambda t, a, r: trace.append((t, a, r)))

    fileio.write_pgm(args.out / "am_image.pgm",
                     fileio.scale_to_gray(final[:, :, 0], cfg.clip_lo, cfg.clip_hi))
    lines = ["iteration,activation,regularizer_total"]
    lines += [f"{t},{fileio.FLOAT_FMT % a},{fileio.FLOAT_FMT % r}" for t, a, r in trace]
    fileio.atomic_write_text(args.out / "am_trace.csv", "\n".join(lines) + "\n")
    return EXIT_OK


_COMMANDS = {"cmap": _cmd_cmap, "factors": _cmd_factors, "train": _cmd_train, "am": _cmd_am}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ZeroStackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DivergedLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NonFiniteGradientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except (fileio.FileFormatError, CausalmapsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
