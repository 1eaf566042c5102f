"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or model error.
"""

import argparse
import json
import os
import sys

from . import imageio, setn
from .errors import DotsegError
from .lrp import OutputTarget, explain, heatmap_to_u8
from .losses import FrwConfig, LossWeights
from .network import load_model, new_model, save_model
from .pipeline import (PipelineConfig, dataset_names, evaluate_dirs,
                       generate_labels, infer_image, kfold_split,
                       load_image_nchw, load_samples, postprocess_image,
                       run_infer, run_pipeline, write_synthetic_dataset)
from .postprocess import PostprocessConfig
from .synthetic import SyntheticSpec, generate_synthetic
from .train import train, write_loss_log


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="dotseg", description=__doc__)
    p.add_argument("--config", help="JSON config file (pipeline defaults)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=16)
    s.add_argument("--height", type=int, default=64)
    s.add_argument("--width", type=int, default=64)
    s.add_argument("--cells", type=int, nargs=2, default=(6, 10))
    s.add_argument("--radius", type=float, nargs=2, default=(4.0, 7.0))
    s.add_argument("--clump-fraction", type=float, default=0.0)
    s.add_argument("--small-fraction", type=float, default=0.0)
    s.add_argument("--noise", type=float, default=0.02)

    s = sub.add_parser("labels", help="derive coarse label maps from points")
    s.add_argument("--data", required=True)

    s = sub.add_parser("train", help="train a model on a labelled dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True, help="output model directory")
    s.add_argument("--epochs", type=int, default=200)
    s.add_argument("--depth", type=int, default=4)
    s.add_argument("--width", type=int, default=32)
    s.add_argument("--lr", type=float, default=0.001)
    s.add_argument("--patch", type=int, default=None)
    s.add_argument("--frw", action="store_true", help="enable the re-weighted loss")
    s.add_argument("--frw-layer", default="enc1")
    s.add_argument("--no-augment", action="store_true")

    s = sub.add_parser("infer", help="write *_seg.setn / *_cc.setn maps")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("post", help="probability maps to instance maps")
    s.add_argument("--maps", required=True, help="directory of *_seg/_cc.setn")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=("base", "split", "split_expand"),
                   default="split_expand")

    s = sub.add_parser("explain", help="relevance heatmap for one pixel")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--name", required=True)
    s.add_argument("--row", type=int, required=True)
    s.add_argument("--col", type=int, required=True)
    s.add_argument("--head", choices=("seg", "cc"), default="cc")
    s.add_argument("--stop", default=None, help="trunk layer to stop at")
    s.add_argument("--out", required=True, help="output path prefix")

    s = sub.add_parser("eval", help="score prediction vs ground-truth maps")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--out", default="report.json")

    s = sub.add_parser("pipeline", help="train if needed, then infer+post+eval")
    s.add_argument("--data")
    s.add_argument("--model")
    s.add_argument("--out")
    s.add_argument("--mode", choices=("base", "split", "split_expand"))
    s.add_argument("--epochs", type=int)
    s.add_argument("--depth", type=int)
    s.add_argument("--width", type=int)

    s = sub.add_parser("splits", help="k-fold train/val/test index lists")
    s.add_argument("--count", type=int)
    s.add_argument("--data")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--fold", type=int, default=0)
    return p


def _cmd_synth(args):
    spec = SyntheticSpec(count=args.count, height=args.height,
                         width=args.width, cells=tuple(args.cells),
                         radius=tuple(args.radius),
                         clump_fraction=args.clump_fraction,
                         small_fraction=args.small_fraction,
                         noise=args.noise, seed=args.seed)
    write_synthetic_dataset(generate_synthetic(spec), args.out)
    print(f"wrote {spec.count} images under {args.out}")


def _cmd_labels(args):
    out = generate_labels(args.data, seed=args.seed)
    print(f"wrote label maps under {out}")


def _cmd_train(args):
    samples = load_samples(args.data)
    model = new_model(depth=args.depth, width=args.width, seed=args.seed)
    frw = FrwConfig(layer=args.frw_layer, enabled=args.frw)
    model, log = train(model, samples, epochs=args.epochs, lr=args.lr,
                       loss_weights=LossWeights.defaults(args.frw),
                       frw_cfg=frw, patch_size=args.patch,
                       augment=not args.no_augment, seed=args.seed)
    save_model(model, args.model)
    write_loss_log(os.path.join(args.model, "loss_log.csv"), log)
    last = log[-1] if log else {}
    print(f"saved model to {args.model}; final losses: {last}")


def _cmd_infer(args):
    cfg = PipelineConfig(data_dir=args.data, model_dir=args.model,
                         out_dir=args.out, mode="base")
    names = run_infer(cfg)
    print(f"wrote seg/cc maps for {len(names)} images under {args.out}")


def _cmd_post(args):
    model = load_model(args.model)
    pcfg = _post_config(args)
    names = dataset_names(args.data)
    os.makedirs(os.path.join(args.out, "instances"), exist_ok=True)
    os.makedirs(os.path.join(args.out, "overlays"), exist_ok=True)
    for name in names:
        y_seg = setn.read_setn(os.path.join(args.maps, f"{name}_seg.setn"))
        y_cc = setn.read_setn(os.path.join(args.maps, f"{name}_cc.setn"))
        trace = None
        if args.mode == "split_expand":
            nchw, _ = load_image_nchw(args.data, name)
            _, _, trace = infer_image(model, nchw)
        instances, points, _ = postprocess_image(
            y_seg, y_cc, args.mode, pcfg, model=model, trace=trace)
        imageio.write_instance_map(
            os.path.join(args.out, "instances", f"{name}.png"), instances)
        _, img = load_image_nchw(args.data, name)
        imageio.write_image_rgb(
            os.path.join(args.out, "overlays", f"{name}.png"),
            imageio.overlay_instances(img, instances, points) / 255.0)
    print(f"wrote instance maps for {len(names)} images under {args.out}")


def _cmd_explain(args):
    model = load_model(args.model)
    nchw, _ = load_image_nchw(args.data, args.name)
    _, _, trace = infer_image(model, nchw)
    target = OutputTarget(head=args.head, pixels=[(args.row, args.col)])
    rel = explain(model, trace, target, stop_layer=args.stop)
    if args.stop is None:
        setn.write_setn(args.out + ".setn", rel)
        imageio.write_gray8(args.out + ".png", heatmap_to_u8(rel))
    else:
        setn.write_setn(args.out + ".setn", rel)
    print(f"wrote relevance to {args.out}.setn")


def _cmd_eval(args):
    report = evaluate_dirs(args.pred, args.gt, out_path=args.out)
    print(json.dumps(report["mean"], indent=1))


def _cmd_pipeline(args):
    overrides = {k: v for k, v in (
        ("data_dir", args.data), ("model_dir", args.model),
        ("out_dir", args.out), ("mode", args.mode), ("epochs", args.epochs),
        ("depth", args.depth), ("width", args.width)) if v is not None}
    overrides.setdefault("seed", args.seed)
    overrides.setdefault("threads", args.threads)
    if args.config:
        config = PipelineConfig.from_json(args.config, **overrides)
    else:
        config = PipelineConfig(**overrides)
    if not os.path.exists(os.path.join(config.model_dir, "topology.json")):
        labels_dir = os.path.join(config.data_dir, "labels")
        if not os.path.isdir(labels_dir):
            generate_labels(config.data_dir, seed=config.seed)
        samples = load_samples(config.data_dir)
        model = new_model(depth=config.depth, width=config.width,
                          seed=config.seed)
        model, log = train(model, samples, epochs=config.epochs,
                           loss_weights=config.loss_weights,
                           frw_cfg=config.frw, patch_size=config.patch_size,
                           seed=config.seed)
        save_model(model, config.model_dir)
        write_loss_log(os.path.join(config.model_dir, "loss_log.csv"), log)
    report = run_pipeline(config)
    print(json.dumps(report["mean"], indent=1))


def _cmd_splits(args):
    n = args.count
    names = None
    if args.data:
        names = dataset_names(args.data)
        n = len(names)
    if n is None:
        raise UsageError("splits needs --count or --data")
    train_idx, val_idx, test_idx = kfold_split(n, k=args.k, fold=args.fold,
                                               seed=args.seed)
    out = {"train": train_idx, "val": val_idx, "test": test_idx}
    if names:
        out = {k: [names[i] for i in v] for k, v in out.items()}
    print(json.dumps(out, indent=1))


def _post_config(args):
    if args.config:
        cfg = PipelineConfig.from_json(args.config)
        return cfg.post
    return PostprocessConfig()


_COMMANDS = {
    "synth": _cmd_synth,
    "labels": _cmd_labels,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "post": _cmd_post,
    "explain": _cmd_explain,
    "eval": _cmd_eval,
    "pipeline": _cmd_pipeline,
    "splits": _cmd_splits,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DotsegError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
