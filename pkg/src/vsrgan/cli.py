"""``vsrgan`` command-line interface.

Exit codes: 0 success, 1 runtime error, 2 configuration or validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import gradsuite
from .config import RunConfigFile
from .data import (
    build_synthetic_dataset,
    imresize_bicubic,
    load_dataset,
    read_pnm,
    replicate_center,
    rgb_to_luminance,
    write_dataset,
    write_manifest,
    write_pnm,
)
from .data.packed import PatchDataset, manifest_path
from .errors import ConfigError, ShapeError, TrainingAborted, VSRError
from .metrics import EvalReport, feature_distance, psnr, ssim
from .models import (
    Discriminator,
    FeatureNetSpec,
    Generator,
    passthrough_generator,
    zero_parameters,
)
from .tensor_core import set_deterministic
from .training import TrainLog, pretrain, train_gan, transfer_init

log = logging.getLogger("vsrgan")

DATA_ENV = "VSR_DATA_DIR"
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
EVAL_BATCH = 16


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _data_dir():
    return Path(os.environ.get(DATA_ENV, "."))


def _resolve_data(arg, cfg=None, key="train"):
    """Dataset path from the flag, the config's data section or the data directory."""
    if arg:
        path = Path(arg)
    elif cfg is not None and cfg.data.get(key):
        path = Path(cfg.data[key])
    else:
        raise ConfigError("no dataset given (use --data or the config's data section)")
    if not path.is_absolute() and not path.exists():
        path = _data_dir() / path
    return path


def _motion(text):
    try:
        dx, dy = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("motion must be 'dx,dy'") from None
    return dx, dy


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _load_config(path):
    return RunConfigFile.load(path) if path else RunConfigFile()


# ---------------------------------------------------------------- commands


def cmd_synth_data(args):
    out = Path(args.out) if args.out else _data_dir() / "synth.vsrd"
    ds = build_synthetic_dataset(
        seed=args.seed, frames=args.frames, size=args.size, motion=args.motion,
        scale=args.scale, patch=args.patch, stride=args.stride, window=args.window,
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(out, ds)
    params = {"seed": args.seed, "frames": args.frames, "size": args.size,
              "motion": list(args.motion), "scale": args.scale, "patch": args.patch,
              "stride": args.stride, "window": args.window}
    write_manifest(manifest_path(out), ds, out.name, params)
    print(f"{len(ds)} samples -> {out}")
    return EXIT_OK


def cmd_init(args):
    cfg = _load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    if args.kind == "discriminator":
        if args.mode != "seeded":
            raise ConfigError("discriminator supports only --mode seeded")
        net = Discriminator(cfg.discriminator, seed=seed)
    elif args.mode == "passthrough":
        net = passthrough_generator(cfg.generator)
    else:
        net = Generator(cfg.generator, seed=seed)
        if args.mode == "zero":
            zero_parameters(net)
    ckpt_io.save_network(args.out, net, meta={"init": args.mode, "seed": seed})
    print(f"{net.kind} ({args.mode}) -> {args.out}")
    return EXIT_OK


def _load_generator(path, expected=None):
    net, ckpt = ckpt_io.load_network(path)
    if net.kind != "generator":
        raise ConfigError(f"{path} holds a {net.kind}, expected a generator")
    if expected is not None and net.config != expected:
        raise ConfigError(f"{path}: generator config {net.config.to_dict()} "
                          f"differs from run config {expected.to_dict()}")
    return net, ckpt


def _log_path(args):
    return Path(args.log) if args.log else Path(args.out).with_suffix(".log.csv")


def _write_log(path, tlog, args):
    _write_text(path, tlog.to_csv(zero_time=args.deterministic))
    for w in tlog.warnings:
        print(f"warning: {w}", file=sys.stderr)


def _abort(exc):
    where = exc.last_checkpoint or "none written"
    print(f"error: training aborted: {exc}; last good checkpoint: {where}", file=sys.stderr)
    return EXIT_RUNTIME


def cmd_pretrain(args):
    cfg = _load_config(args.config)
    tc = cfg.train
    overrides = {k: v for k, v in (("pretrain_epochs", args.epochs), ("max_steps", args.max_steps))
                 if v is not None}
    if overrides:
        tc = RunConfigFile.from_dict({**cfg.to_dict(), "train": {**cfg.to_dict()["train"],
                                                                  **overrides}}).train
    ds = load_dataset(_resolve_data(args.data, cfg))
    start_epoch, adam_t = 0, 0
    if args.resume:
        gen, ckpt = _load_generator(args.resume, cfg.generator)
        if ckpt.meta.get("phase") != "pretrain":
            raise ConfigError(f"{args.resume} is not a pretraining checkpoint")
        start_epoch, adam_t = ckpt.meta["epoch"] + 1, ckpt.meta["adam_t"]
    elif args.init:
        gen, _ = _load_generator(args.init, cfg.generator)
    else:
        gen = Generator(cfg.generator, seed=cfg.seed)

    ckpt_dir = Path(args.checkpoint_dir) if args.checkpoint_dir else Path(args.out).parent

    def on_epoch_end(epoch, opt):
        if not tc.checkpoint_every or (epoch + 1) % tc.checkpoint_every:
            return None
        path = ckpt_dir / f"pretrain_e{epoch:04d}.vsrc"
        path.parent.mkdir(parents=True, exist_ok=True)
        ckpt_io.save_network(path, gen, with_optimizer=True,
                             meta={"phase": "pretrain", "epoch": epoch, "adam_t": opt.t})
        return str(path)

    try:
        gen, tlog = pretrain(gen, ds, tc, start_epoch, adam_t, on_epoch_end)
    except TrainingAborted as exc:
        return _abort(exc)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    ckpt_io.save_network(args.out, gen, meta={"phase": "pretrain", "steps": adam_t + len(tlog)})
    _write_log(_log_path(args), tlog, args)
    last = f", final mse {tlog.records[-1].loss_pixel:.6g}" if len(tlog) else ""
    print(f"pretrained {len(tlog)} steps{last} -> {args.out}")
    return EXIT_OK


def cmd_train_gan(args):
    cfg = _load_config(args.config)
    tc = cfg.train
    overrides = {k: v for k, v in (("gan_epochs", args.epochs), ("max_steps", args.max_steps),
                                   ("charbonnier_mode", args.mode)) if v is not None}
    if overrides:
        d = cfg.to_dict()
        tc = RunConfigFile.from_dict({**d, "train": {**d["train"], **overrides}}).train
    ds = load_dataset(_resolve_data(args.data, cfg))
    feature_net = ckpt_io.make_feature_net(cfg.feature_net)
    if args.transfer_from:
        gen = transfer_init(args.transfer_from, Generator(cfg.generator, seed=cfg.seed))
        pretrained = True
    elif args.init:
        gen, ckpt = _load_generator(args.init, cfg.generator)
        pretrained = ckpt.meta.get("phase") in ("pretrain", "gan")
    else:
        raise ConfigError("train-gan needs --init or --transfer-from")
    if args.disc_init:
        disc, _ = ckpt_io.load_network(args.disc_init)
        if disc.kind != "discriminator":
            raise ConfigError(f"{args.disc_init} is not a discriminator checkpoint")
    else:
        disc = Discriminator(cfg.discriminator, seed=cfg.seed)

    ckpt_dir = Path(args.checkpoint_dir) if args.checkpoint_dir else Path(args.out).parent

    def on_epoch_end(epoch, opt_g, opt_d):
        if not tc.checkpoint_every or (epoch + 1) % tc.checkpoint_every:
            return None
        path = ckpt_dir / f"gan_e{epoch:04d}_generator.vsrc"
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {"phase": "gan", "epoch": epoch, "adam_t": opt_g.t}
        ckpt_io.save_network(path, gen, with_optimizer=True, meta=meta)
        ckpt_io.save_network(ckpt_dir / f"gan_e{epoch:04d}_discriminator.vsrc", disc,
                             with_optimizer=True, meta={**meta, "adam_t": opt_d.t})
        return str(path)

    try:
        gen, disc, tlog = train_gan(gen, disc, feature_net, ds, tc, pretrained=pretrained,
                                    on_epoch_end=on_epoch_end)
    except TrainingAborted as exc:
        return _abort(exc)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ckpt_io.save_network(out, gen, meta={"phase": "gan", "steps": len(tlog),
                                         "mode": tc.charbonnier_mode})
    disc_out = Path(args.disc_out) if args.disc_out else out.with_name(out.stem + "_disc.vsrc")
    ckpt_io.save_network(disc_out, disc, meta={"phase": "gan", "steps": len(tlog)})
    _write_log(_log_path(args), tlog, args)
    last = f", final L_D {tlog.records[-1].loss_d:.6g}" if len(tlog) else ""
    print(f"adversarial training {len(tlog)} steps{last} -> {out}")
    return EXIT_OK


def _read_frames(directory, scale):
    paths = sorted(p for p in Path(directory).iterdir()
                   if p.suffix.lower() in (".pgm", ".ppm", ".pnm"))
    if len(paths) != 5:
        raise ShapeError(f"expected exactly 5 frames in {directory}, found {len(paths)}")
    frames = []
    for p in paths:
        img = read_pnm(p)
        frames.append(rgb_to_luminance(img) if img.shape[0] == 3 else img)
    if any(f.shape != frames[0].shape for f in frames):
        raise ShapeError(f"frame sizes differ: {[f.shape[1:] for f in frames]}")
    if scale > 1:
        h, w = frames[0].shape[1:]
        frames = [imresize_bicubic(f, h * scale, w * scale) for f in frames]
    return np.stack(frames)[None]


def cmd_infer(args):
    gen, _ = _load_generator(args.checkpoint)
    frames = _read_frames(args.frames, args.scale)
    out = np.clip(gen.forward(frames)[0], 0.0, 1.0)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_pnm(args.out, out, bits=16)
    print(f"{out.shape[1]}x{out.shape[2]} -> {args.out}")
    return EXIT_OK


def evaluate(generator, dataset, feature_net, crop, center_frame_only=False, model="model"):
    """Per-sample PSNR/SSIM/feature distance of clamped generator outputs."""
    if len(dataset) == 0:
        raise ConfigError("empty dataset")
    if center_frame_only:
        samples = [replicate_center(dataset.sample(i)) for i in range(len(dataset))]
        dataset = PatchDataset.from_samples(samples)
    report = EvalReport(model=model, scale=dataset.scale, crop=crop,
                        center_frame_only=center_frame_only)
    for start in range(0, len(dataset), EVAL_BATCH):
        sl = slice(start, start + EVAL_BATCH)
        est = np.clip(generator.forward(dataset.lr[sl]), 0.0, 1.0)
        fd = feature_distance(dataset.hr[sl], est, feature_net)
        for k, (x, xh) in enumerate(zip(dataset.hr[sl], est)):
            report.add(dataset.source_ids[start + k], psnr(x, xh, crop=crop),
                       ssim(x, xh, crop=crop), fd[k])
    return report


def cmd_eval(args):
    gen, _ = _load_generator(args.checkpoint)
    ds = load_dataset(_resolve_data(args.data, key="eval"))
    crop = ds.scale if args.crop is None else args.crop
    feature_net = ckpt_io.make_feature_net(
        FeatureNetSpec(weight_file=args.feature_weights) if args.feature_weights else None
    )
    report = evaluate(gen, ds, feature_net, crop, args.center_frame_only,
                      model=Path(args.checkpoint).name)
    print(report.text(), end="")
    if args.out:
        prefix = Path(args.out)
        _write_text(prefix.with_suffix(".json"), report.to_json())
        _write_text(prefix.with_suffix(".csv"), report.to_csv())
        if not args.no_plot:
            from .plotting import plot_eval_report

            plot_eval_report(report, prefix.with_suffix(".png"))
    return EXIT_OK


def cmd_gradcheck(args):
    try:
        results = gradsuite.run_checks(args.which, seed=args.seed)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    print(gradsuite.format_table(results))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_inspect(args):
    path = Path(args.path)
    head = path.read_bytes()[:4]
    if head == b"VSRD":
        ds = load_dataset(path)
        print(f"dataset {path}: {len(ds)} samples, scale {ds.scale}, patch {ds.patch_size}, "
              f"frames {ds.num_frames}")
        return EXIT_OK
    ckpt = ckpt_io.load(path)
    total = sum(int(np.prod(a.shape)) for a in ckpt.tensors.values())
    info = {
        "kind": ckpt.kind,
        "config": ckpt.config,
        "meta": ckpt.meta,
        "tensors": len(ckpt.tensors),
        "values": total,
        "optimizer_state": ckpt.optimizer is not None,
    }
    print(json.dumps(info, indent=2, sort_keys=True))
    if args.tensors:
        for name, arr in ckpt.tensors.items():
            print(f"  {name:32s} {str(arr.dtype):8s} {tuple(arr.shape)}")
    return EXIT_OK


def cmd_plot(args):
    from .plotting import plot_loss_curves

    labels = args.label or [Path(p).stem for p in args.log]
    if len(labels) != len(args.log):
        raise ConfigError("give one --label per --log")
    logs = {lab: TrainLog.from_csv(Path(p).read_text()) for lab, p in zip(labels, args.log)}
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    plot_loss_curves(logs, args.out, title=args.title)
    print(f"plot -> {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser():
    p = _Parser(prog="vsrgan", description="Video super-resolution with a GAN, on numpy.")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded BLAS and zeroed wall times for byte-stable output")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth-data", help="build a seeded synthetic patch dataset")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--frames", type=int, default=16)
    s.add_argument("--size", type=int, default=72)
    s.add_argument("--motion", type=_motion, default=(1.0, 0.5), help="dx,dy pixels per frame")
    s.add_argument("--scale", type=int, default=2)
    s.add_argument("--patch", type=int, default=36)
    s.add_argument("--stride", type=int, default=36)
    s.add_argument("--window", type=int, default=5)
    s.add_argument("--out", help=f"dataset file (default ${DATA_ENV}/synth.vsrd)")
    s.set_defaults(func=cmd_synth_data)

    s = sub.add_parser("init", help="write an initial network checkpoint")
    s.add_argument("--config")
    s.add_argument("--kind", choices=("generator", "discriminator"), default="generator")
    s.add_argument("--mode", choices=("seeded", "zero", "passthrough"), default="seeded")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("pretrain", help="MSE pretraining of the generator")
    s.add_argument("--config")
    s.add_argument("--data")
    s.add_argument("--init", help="generator checkpoint to start from")
    s.add_argument("--resume", help="periodic pretraining checkpoint to continue from")
    s.add_argument("--epochs", type=int, help="override pretrain_epochs")
    s.add_argument("--max-steps", type=int)
    s.add_argument("--checkpoint-dir")
    s.add_argument("--log", help="TrainLog CSV (default: <out>.log.csv)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("train-gan", help="adversarial training")
    s.add_argument("--config")
    s.add_argument("--data")
    s.add_argument("--init", help="pretrained generator checkpoint")
    s.add_argument("--transfer-from", help="trained generator (e.g. x2) to initialize from")
    s.add_argument("--disc-init", help="discriminator checkpoint")
    s.add_argument("--epochs", type=int, help="override gan_epochs")
    s.add_argument("--max-steps", type=int)
    s.add_argument("--mode", choices=("charbonnier", "l2"), help="override charbonnier_mode")
    s.add_argument("--checkpoint-dir")
    s.add_argument("--log")
    s.add_argument("--out", required=True)
    s.add_argument("--disc-out")
    s.set_defaults(func=cmd_train_gan)

    s = sub.add_parser("infer", help="super-resolve the center of five frames")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--frames", required=True, help="directory with exactly 5 PGM/PPM frames")
    s.add_argument("--scale", type=int, default=1,
                   help="bicubic pre-upsampling factor (1: frames are already at output size)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="PSNR / SSIM / feature distance over a dataset")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data")
    s.add_argument("--crop", type=int, help="border crop in pixels (default: dataset scale)")
    s.add_argument("--center-frame-only", action="store_true")
    s.add_argument("--feature-weights")
    s.add_argument("--out", help="report prefix; writes .json, .csv and .png")
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    s.add_argument("--which", default="all")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("inspect", help="describe a checkpoint or dataset file")
    s.add_argument("path")
    s.add_argument("--tensors", action="store_true")
    s.set_defaults(func=cmd_inspect)

    s = sub.add_parser("plot", help="render TrainLog loss curves to SVG")
    s.add_argument("--log", action="append", required=True)
    s.add_argument("--label", action="append")
    s.add_argument("--title", default="training losses")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    set_deterministic(args.deterministic)
    try:
        return args.func(args)
    except (ConfigError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (VSRError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
