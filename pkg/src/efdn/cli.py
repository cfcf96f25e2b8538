"""Command-line interface.

Subcommands: merge, infer, eval, degrade, train-toy, loss, complexity. Every
command exits nonzero with a single-line ``error: ...`` diagnostic on failure,
and output is stable across runs for identical inputs and seed.
"""

import argparse
import os
import sys

import numpy as np

from . import data, report
from .errors import ConfigError, EfdnError, InputError
from .imaging import (bicubic_resize, image_from_tensor, load_png, psnr_y,
                      save_png, ssim_y, tensor_from_image)
from .loss import LossConfig, eg_loss
from .network import (ARCHS, BLOCK_KINDS, NetworkSpec, build_toy_net,
                      count_madds, count_params, init_network, merge_network,
                      network_forward, network_tensor_items)
from .tensor import Tensor
from .train import read_stage_file, train_loop
from .weights import load_weights, save_weights

REFERENCE_NOTE = ("reference figures for this architecture: 276K params / "
                  "14.7G MAdds at 1280x720 (reported values, equality not "
                  "asserted; configuration details differ)")


def _fmt(x: float) -> str:
    return f"{x:.8g}"


def _clamped(t: Tensor) -> Tensor:
    return Tensor(np.clip(t.data, 0.0, 1.0))


def _run_network(lr: Tensor, params) -> Tensor:
    return _clamped(network_forward(lr, params))


def _tensor_param_count(params) -> int:
    return sum(int(np.asarray(v).size) for _, v in network_tensor_items(params))


def cmd_merge(args) -> int:
    params = load_weights(args.in_path)
    before = _tensor_param_count(params)
    merged = merge_network(params)
    after = _tensor_param_count(merged)
    save_weights(args.out, merged)
    print(f"params before merge {before}")
    print(f"params after merge  {after}")
    print(f"wrote {args.out}")
    return 0


def cmd_infer(args) -> int:
    params = load_weights(args.weights)
    r = params.spec.scale
    if args.scale is not None and args.scale != r:
        raise ConfigError(f"--scale {args.scale} does not match weights scale {r}")
    x = tensor_from_image(load_png(args.input))
    y = _run_network(x, params)
    save_png(image_from_tensor(y), args.output)
    print(f"wrote {args.output} ({x.w}x{x.h} -> {y.w}x{y.h}, x{r})")
    return 0


def _matched_names(lr_dir, hr_dir):
    lr_names = data.list_pngs(lr_dir)
    hr_names = data.list_pngs(hr_dir)
    if lr_names != hr_names:
        raise InputError(f"directory listings differ: {lr_dir} vs {hr_dir}")
    return lr_names


def cmd_eval(args) -> int:
    shave = args.scale if args.shave is None else args.shave
    params = load_weights(args.weights) if args.weights else None
    if params is not None and params.spec.scale != args.scale:
        raise ConfigError(f"--scale {args.scale} does not match weights scale "
                          f"{params.spec.scale}")
    rows = []
    for name in _matched_names(args.lr_dir, args.hr_dir):
        lr = tensor_from_image(load_png(os.path.join(args.lr_dir, name)))
        hr = tensor_from_image(load_png(os.path.join(args.hr_dir, name)))
        if params is not None:
            sr = _run_network(lr, params)
        elif (lr.h, lr.w) == (hr.h, hr.w):
            sr = lr
        else:
            sr = _clamped(bicubic_resize(lr, float(args.scale)))
        if (sr.h, sr.w) != (hr.h, hr.w):
            raise InputError(f"{name}: output {sr.w}x{sr.h} does not match "
                             f"reference {hr.w}x{hr.h}")
        rows.append((name, psnr_y(sr, hr, shave), ssim_y(sr, hr, shave)))
    mean_p = sum(r[1] for r in rows) / len(rows)
    mean_s = sum(r[2] for r in rows) / len(rows)

    col = max(len(r[0]) for r in rows + [("mean", 0, 0)])
    print(f"{'image':<{col}}  {'psnr_db':>10}  {'ssim':>8}")
    for name, p, s in rows:
        print(f"{name:<{col}}  {p:>10.4f}  {s:>8.4f}")
    print(f"{'mean':<{col}}  {mean_p:>10.4f}  {mean_s:>8.4f}")
    for name, p, s in rows:
        print(f"METRIC {name} {_fmt(p)} {_fmt(s)}")
    print(f"MEAN {_fmt(mean_p)} {_fmt(mean_s)}")

    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        csv_path = os.path.join(args.out_dir, "metrics.csv")
        png_path = os.path.join(args.out_dir, "metrics.png")
        report.write_metrics_csv(csv_path, rows)
        report.plot_metrics(png_path, rows)
        print(f"wrote {csv_path}")
        print(f"wrote {png_path}")
    return 0


def cmd_degrade(args) -> int:
    names = data.list_pngs(args.hr_dir)
    os.makedirs(args.out_dir, exist_ok=True)
    for name in names:
        hr = tensor_from_image(load_png(os.path.join(args.hr_dir, name)))
        lr = _clamped(data.degrade(hr, args.scale))
        save_png(image_from_tensor(lr), os.path.join(args.out_dir, name))
    print(f"wrote {len(names)} LR images to {args.out_dir} "
          f"(bicubic downscale x{args.scale})")
    return 0


def cmd_train_toy(args) -> int:
    stages = read_stage_file(args.stages)
    rng_data = np.random.default_rng([args.seed, 0])
    rng_init = np.random.default_rng([args.seed, 1])
    rng_train = np.random.default_rng([args.seed, 2])
    if args.data_dir:
        hr_list = [t for _, t in data.load_image_dir(args.data_dir)]
    else:
        hr_list = data.synthetic_hr_crops(args.count, args.size, rng_data)
    pairs = data.make_pairs(hr_list, args.scale)
    net = build_toy_net(args.arch, args.block, rng_init, scale=args.scale)
    trained, records = train_loop(net, pairs, stages, rng_train)
    save_weights(args.out, trained)

    report_dir = args.report_dir or os.path.dirname(os.path.abspath(args.out))
    os.makedirs(report_dir, exist_ok=True)
    csv_path = os.path.join(report_dir, "loss.csv")
    png_path = os.path.join(report_dir, "loss.png")
    report.write_loss_csv(csv_path, records, seed=args.seed)
    report.plot_loss_curves(png_path, {f"{args.arch}/{args.block}": records})

    print(f"seed {args.seed}")
    print(f"net {args.arch} block {args.block} scale x{args.scale} "
          f"pairs {len(pairs)}")
    print(f"steps {len(records)} first_loss {_fmt(records[0].loss)} "
          f"final_loss {_fmt(records[-1].loss)}")
    print(f"wrote {args.out}")
    print(f"wrote {csv_path}")
    print(f"wrote {png_path}")
    return 0


def cmd_loss(args) -> int:
    sr = tensor_from_image(load_png(args.sr))
    hr = tensor_from_image(load_png(args.hr))
    cfg = LossConfig(patch=args.patch, lambda_x=args.lx, lambda_y=args.ly,
                     lambda_l=args.ll)
    total, comps = eg_loss(sr, hr, cfg)
    for key in ("l1", "sobel_x", "sobel_y", "laplacian"):
        print(f"{key:<10} {_fmt(comps[key])}")
    print(f"{'total':<10} {_fmt(total)}")
    return 0


def cmd_complexity(args) -> int:
    spec = NetworkSpec(scale=args.scale, width=args.channels)
    params = merge_network(init_network(spec, np.random.default_rng(0)))
    n_params = count_params(params)
    n_madds = count_madds(params, args.out_height, args.out_width)
    print(f"arch efdn scale x{args.scale} channels {args.channels} "
          f"blocks {spec.blocks}")
    print(f"params {n_params}")
    print(f"madds_{args.out_width}x{args.out_height} {n_madds}")
    print(REFERENCE_NOTE)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="efdn",
        description="Edge-enhanced feature distillation super-resolution: "
                    "train, merge branched blocks into single convolutions, "
                    "and evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("merge", help="fold every branched block into a single "
                                     "3x3 convolution")
    p.add_argument("--in", dest="in_path", required=True, metavar="TRAIN.efdw")
    p.add_argument("--out", required=True, metavar="DEPLOY.efdw")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("infer", help="upscale one PNG")
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--scale", type=int, default=None,
                   help="optional check against the scale stored in the weights")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="PSNR/SSIM of an SR or LR directory "
                                    "against a reference directory")
    p.add_argument("--lr-dir", required=True)
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--shave", type=int, default=None,
                   help="border pixels excluded from metrics (default: scale)")
    p.add_argument("--weights", default=None,
                   help="run the network on --lr-dir first; without this, "
                        "equal-size inputs are compared directly and smaller "
                        "ones are bicubic-upscaled")
    p.add_argument("--out-dir", default=None,
                   help="also write metrics.csv and metrics.png here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("degrade", help="make a bicubic LR set from an HR "
                                       "directory")
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scale", type=int, required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train-toy", help="train a small net on PNGs or "
                                         "procedural crops")
    p.add_argument("--stages", required=True, help="stage config file")
    p.add_argument("--out", required=True, metavar="WEIGHTS.efdw")
    p.add_argument("--data-dir", default=None,
                   help="HR PNG directory (default: procedural crops)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--arch", default="plain_fsrcnn_like",
                   choices=[a for a in ARCHS if a != "efdn"])
    p.add_argument("--block", default="edbb", choices=list(BLOCK_KINDS))
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--count", type=int, default=64,
                   help="number of procedural crops")
    p.add_argument("--size", type=int, default=64,
                   help="procedural crop side (HR pixels)")
    p.add_argument("--report-dir", default=None,
                   help="where loss.csv / loss.png go (default: next to --out)")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("loss", help="print the edge-enhanced loss components "
                                    "between two PNGs")
    p.add_argument("--sr", required=True)
    p.add_argument("--hr", required=True)
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--lx", type=float, default=0.01)
    p.add_argument("--ly", type=float, default=0.01)
    p.add_argument("--ll", type=float, default=0.01)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("complexity", help="parameter and multiply-add counts "
                                          "for the merged network")
    p.add_argument("--channels", type=int, default=48)
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--out-width", type=int, default=1280)
    p.add_argument("--out-height", type=int, default=720)
    p.set_defaults(func=cmd_complexity)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EfdnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
