"""Command-line entry point: ``derainnet {synth,train,derain,eval,bench}``.

Exit status: 0 on success, 1 on a runtime failure, 2 on a usage error.
"""
from __future__ import annotations

import argparse
import logging
import statistics
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, config, numerics
from .dataset import (ImageIOError, PatchDataset, list_images, load_image, read_manifest,
                      save_image, synthesize_dataset)
from .enhance import EnhanceConfig
from .filters import GuidedFilterConfig
from .metrics import SsimConfig, bench_csv, bench_inference, format_bench, ssim
from .network import (NetworkParams, TrainConfig, TrainingDiverged, WeightFileError, init_params,
                      load_params, save_params, smoothed, train)
from .pipeline import as_rgb, derain_image
from .rainsynth import default_variants

log = logging.getLogger("derainnet")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _filter_cfg(cfg) -> GuidedFilterConfig:
    return GuidedFilterConfig(radius=cfg["guided.radius"], epsilon=cfg["guided.epsilon"])


def _enhance_cfg(cfg) -> EnhanceConfig:
    return EnhanceConfig(gamma=cfg["enhance.gamma"], detail_boost=cfg["enhance.detail_boost"],
                         mode=cfg["enhance.mode"], stretch=cfg["enhance.stretch"])


def _ssim_cfg(cfg) -> SsimConfig:
    return SsimConfig(window=cfg["ssim.window"], sigma=cfg["ssim.sigma"],
                      k1=cfg["ssim.k1"], k2=cfg["ssim.k2"])


def _init_from_cfg(cfg) -> NetworkParams:
    return init_params(cfg["net.s1"], cfg["net.s2"], cfg["net.s3"], cfg["net.n1"], cfg["net.n2"],
                       seed=cfg["train.seed"], std=cfg["net.init_std"], scheme=cfg["net.init"])


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args, cfg) -> int:
    grid = default_variants()
    if not 1 <= args.variants <= len(grid):
        raise UsageError(f"--variants must be between 1 and {len(grid)}")
    out = _out_dir(args.out_dir)
    manifest = synthesize_dataset(args.clean_dir, out, grid[:args.variants], seed=args.seed,
                                  one_variant_per_image=args.one_per_image)
    ok = len(manifest.entries) - len(manifest.failures)
    print(f"wrote {ok} rainy images and {out / 'manifest.tsv'}")
    if manifest.failures:
        print(f"{len(manifest.failures)} renderings failed (see manifest)", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    out = _out_dir(args.out_dir)
    params = load_params(args.init_weights) if args.init_weights else _init_from_cfg(cfg)
    tcfg = TrainConfig(learning_rate=cfg["train.learning_rate"], batch_size=cfg["train.batch_size"],
                       steps=cfg["train.steps"], patch_size=cfg["train.patch_size"],
                       rng_seed=cfg["train.seed"], domain=cfg["train.domain"],
                       step_scale=cfg["train.step_scale"])
    tcfg.check_against(params)
    weights = out / "weights.drnw"
    if tcfg.steps == 0:
        save_params(weights, params)
        (out / "loss.csv").write_text("step,loss,smoothed\n")
        print(f"wrote initial weights to {weights}")
        return EXIT_OK
    manifest = read_manifest(args.manifest)
    dataset = PatchDataset(manifest, cfg["train.patches"], tcfg.patch_size,
                           params.output_side(tcfg.patch_size), _filter_cfg(cfg),
                           seed=tcfg.rng_seed, domain=tcfg.domain)
    ckpt_dir = out / "checkpoints"

    def checkpoint(step, p):
        ckpt_dir.mkdir(exist_ok=True)
        save_params(ckpt_dir / f"step_{step:07d}.drnw", p)

    result = train(dataset, tcfg, params, log_every=cfg["train.log_every"],
                   checkpoint=checkpoint, checkpoint_every=cfg["train.checkpoint_every"])
    save_params(weights, result.params)
    window = cfg["train.smoothing_window"]
    curve = [float(v) for v in smoothed(result.losses, window)]
    with open(out / "loss.csv", "w") as fh:
        fh.write("step,loss,smoothed\n")
        for i, (v, s) in enumerate(zip(result.losses, curve), start=1):
            fh.write(f"{i},{v!r},{s!r}\n")
    first = curve[min(window, len(curve)) - 1]  # first full window
    last = curve[-1]
    with open(out / "train_summary.csv", "w") as fh:
        fh.write("key,value\n")
        fh.write(f"domain,{tcfg.domain}\nsteps,{tcfg.steps}\nsmoothing_window,{window}\n")
        fh.write(f"initial_smoothed_loss,{first!r}\nfinal_smoothed_loss,{last!r}\n")
        fh.write(f"final_over_initial,{last / first!r}\n")
    print(f"trained {tcfg.steps} steps; smoothed loss {first:.6g} -> {last:.6g} "
          f"(ratio {last / first:.4f}); weights in {weights}")
    return EXIT_OK


def cmd_derain(args, cfg) -> int:
    params = load_params(args.weights)
    src = Path(args.input)
    files = list_images(src) if src.is_dir() else [src]
    if not files:
        raise UsageError(f"no PNG/PPM images in {src}")
    out = _out_dir(args.out_dir)
    fcfg, ecfg = _filter_cfg(cfg), _enhance_cfg(cfg)
    failures = []
    for f in files:
        try:
            result = derain_image(load_image(f), params, fcfg, ecfg)
            save_image(out / f.name, result)
        except (OSError, ValueError) as exc:
            failures.append((f, exc))
            print(f"error: {f}: {exc}", file=sys.stderr)
    print(f"derained {len(files) - len(failures)}/{len(files)} images into {out}")
    if failures:
        print(f"{len(failures)} failed: " + ", ".join(f.name for f, _ in failures), file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    gt = {p.name: p for p in list_images(args.ground_truth)}
    cand = {p.name: p for p in list_images(args.candidate)}
    names = sorted(gt.keys() & cand.keys())
    for name in sorted(gt.keys() ^ cand.keys()):
        side = "candidate" if name in gt else "ground truth"
        print(f"warning: {name} has no {side} counterpart; excluded", file=sys.stderr)
    if not names:
        print("error: no image pairs to evaluate", file=sys.stderr)
        return EXIT_FAILURE
    scfg = _ssim_cfg(cfg)
    scores = []
    for name in names:
        a, b = as_rgb(load_image(gt[name])), as_rgb(load_image(cand[name]))
        scores.append(ssim(a, b, scfg))
    mean = statistics.fmean(scores)
    std = statistics.pstdev(scores)
    out = _out_dir(args.out_dir)
    with open(out / "ssim.csv", "w") as fh:
        fh.write("image,ssim\n")
        for name, s in zip(names, scores):
            fh.write(f"{name},{s!r}\n")
        fh.write(f"mean,{mean!r}\nstd,{std!r}\n")
    width = max(len(n) for n in names)
    for name, s in zip(names, scores):
        print(f"{name:<{width}}  {s:.4f}")
    print(f"{'mean ± std':<{width}}  {mean:.4f} ± {std:.4f}  ({len(names)} images)")
    return EXIT_OK


def cmd_bench(args, cfg) -> int:
    params = load_params(args.weights) if args.weights else _init_from_cfg(cfg)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    if not sizes:
        raise UsageError("--sizes is empty")
    rows = bench_inference(params, sizes, repeats=args.repeats)
    print(format_bench(rows, cfg["threads"], numerics.current_backend()))
    if args.out_dir:
        (_out_dir(args.out_dir) / "bench.csv").write_text(bench_csv(rows))
    return EXIT_OK


# flag dest -> config key
_OVERRIDES = {
    "steps": "train.steps", "batch_size": "train.batch_size", "lr": "train.learning_rate",
    "patch_size": "train.patch_size", "seed": "train.seed", "domain": "train.domain",
    "patches": "train.patches", "log_every": "train.log_every",
    "checkpoint_every": "train.checkpoint_every", "s1": "net.s1", "s2": "net.s2", "s3": "net.s3",
    "n1": "net.n1", "n2": "net.n2", "init_std": "net.init_std", "init": "net.init",
    "step_scale": "train.step_scale", "enhance": "enhance.mode",
    "gamma": "enhance.gamma", "detail_boost": "enhance.detail_boost",
    "radius": "guided.radius", "epsilon": "guided.epsilon", "threads": "threads",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' config file")
    common.add_argument("--threads", type=int, help="BLAS threads (default 1, fully deterministic)")
    common.add_argument("--radius", type=int, help="guided filter radius")
    common.add_argument("--epsilon", type=float, help="guided filter epsilon")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="derainnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"derainnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="synthesize a rainy dataset")
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variants", type=int, default=14,
                   help="use the first N variants of the 14-variant grid")
    p.add_argument("--one-per-image", action="store_true",
                   help="render only variant k mod N for the k-th image")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train the network")
    p.add_argument("--manifest", help="manifest.tsv (or its directory) from 'synth'")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--init-weights", help="start from this weight file")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--patches", type=int, help="number of patch pairs to draw")
    p.add_argument("--seed", type=int)
    p.add_argument("--domain", choices=("detail", "image"))
    p.add_argument("--log-every", type=int)
    p.add_argument("--checkpoint-every", type=int)
    for name in ("s1", "s2", "s3", "n1", "n2"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--init-std", type=float)
    p.add_argument("--init", choices=("fixed", "fan_in"), help="weight initialization scheme")
    p.add_argument("--step-scale", choices=("per_value", "per_sample"),
                   help="learning rate per output value (default) or on the summed loss")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("derain", parents=[common], help="derain an image or a directory")
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--enhance", choices=("none", "post", "simultaneous"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--detail-boost", type=float)
    p.set_defaults(func=cmd_derain)

    p = sub.add_parser("eval", parents=[common], help="SSIM of candidates against ground truth")
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="time inference at several image sizes")
    p.add_argument("--weights", help="weight file (default: freshly initialized network)")
    p.add_argument("--sizes", default="250,500,750")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out-dir")
    for name in ("s1", "s2", "s3", "n1", "n2"):
        p.add_argument(f"--{name}", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = {}
    for dest, key in _OVERRIDES.items():
        # synth's --seed seeds the rain, not training
        if hasattr(args, dest) and not (dest == "seed" and args.command == "synth"):
            overrides[key] = getattr(args, dest)
    try:
        cfg = config.resolve(args.config, overrides)
        if cfg["threads"] < 1:
            raise config.ConfigError("threads must be >= 1")
        if args.command == "train" and cfg["train.steps"] and not args.manifest:
            raise UsageError("train: --manifest is required unless --steps 0")
    except (config.ConfigError, UsageError) as exc:
        print(f"derainnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    log.info("resolved config (kernels=%s):\n%s", numerics.current_backend(), config.dump(cfg))
    try:
        with threadpool_limits(limits=cfg["threads"]):
            return args.func(args, cfg)
    except UsageError as exc:
        print(f"derainnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"derainnet {args.command}: error: {exc} (lower the learning rate)", file=sys.stderr)
        return EXIT_FAILURE
    except (ImageIOError, WeightFileError, OSError, ValueError) as exc:
        print(f"derainnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
