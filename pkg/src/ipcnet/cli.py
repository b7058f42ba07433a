"""Command-line entry point.

One executable, seven subcommands covering the pipeline:

  gen-data   write a synthetic labeled dataset directory
  sample     convert a mesh file into a point cloud (.pts / .seg)
  train      fit a model, write checkpoint + metrics CSV
  eval       score a checkpoint on a dataset, write predicted labels
  compare    train PointNet and IPC-Net on the same split, side by side
  kernels    per-point activation map + 2D projection CSVs for a kernel
  heatmap    kernel-redundancy matrix (CSV + PGM + ordering)

Every command prints its resolved configuration before doing anything,
writes only under --out, and is bitwise deterministic for a fixed seed.
Exit codes: 0 success, 2 usage errors (bad flags, missing or malformed
inputs), 1 runtime failures.  The environment variable IPCNET_SEED
supplies a default seed when --seed is absent.
"""

import argparse
import logging
import os
import sys
from dataclasses import fields

from . import analysis as an
from . import checkpoint as ckpt
from . import datagen as dg
from . import geometry as geo
from . import training as tr

_CONFIG_KEYS = [f.name for f in fields(tr.TrainConfig)]


def _env_seed():
    value = os.environ.get("IPCNET_SEED")
    if value is None:
        return 0
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"IPCNET_SEED must be an integer, got {value!r}")


def _seed(args):
    return args.seed if args.seed is not None else _env_seed()


def _out_dir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _print_config(pairs):
    print("resolved config:")
    for key, value in pairs:
        print(f"  {key}={value}")


def _resolve_train_config(args):
    mapping = {}
    if getattr(args, "config", None):
        mapping.update(tr.read_config_file(args.config))
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = str(value)
    if "seed" not in mapping:
        mapping["seed"] = str(_env_seed())
    config = tr.TrainConfig.from_mapping(mapping)
    _print_config(line.split("=", 1) for line in config.to_text().splitlines())
    return config


def _add_train_flags(cmd):
    cmd.add_argument("--config", help="flat key=value config file")
    cmd.add_argument("--model", choices=("pointnet", "ipcnet"))
    for key in ("epochs", "batch-size", "seed", "n-points", "transform-stage"):
        cmd.add_argument(f"--{key}", type=int)
    for key in ("learning-rate", "beta1", "beta2", "lambda-reg", "train-fraction"):
        cmd.add_argument(f"--{key}", type=float)
    for key in ("trunk-widths", "head-widths", "tnet-mlp-widths", "tnet-fc-widths"):
        cmd.add_argument(f"--{key}", help="comma-separated layer widths")
    cmd.add_argument("--strict-holdout", action="store_const", const="true",
                     help="keep the final-epoch model instead of the best-test one")


def cmd_gen_data(args):
    if args.family not in dg.FAMILIES:
        raise ValueError(f"unknown family {args.family!r}; "
                         f"choose from {sorted(dg.FAMILIES)}")
    seed = _seed(args)
    _print_config([("family", args.family), ("count", args.count),
                   ("points", args.points), ("seed", seed), ("out", args.out)])
    clouds = dg.gen_dataset(dg.FAMILIES[args.family], args.count, args.points, seed)
    base = dg.save_dataset(_out_dir(args), args.family, clouds)
    print(f"wrote {len(clouds)} clouds to {base}")
    return 0


def cmd_sample(args):
    seed = _seed(args)
    _print_config([("mesh", args.mesh), ("points", args.points), ("seed", seed),
                   ("normalize", args.normalize), ("out", args.out)])
    mesh = geo.load_mesh(args.mesh)
    cloud = geo.sample_surface(mesh, args.points, seed)
    points = geo.unit_sphere_normalize(cloud.points) if args.normalize else cloud.points
    stem = os.path.splitext(os.path.basename(args.mesh))[0]
    out = _out_dir(args)
    pts_path = os.path.join(out, stem + ".pts")
    geo.save_pts(pts_path, points)
    written = [pts_path]
    if mesh.face_labels is not None:
        seg_path = os.path.join(out, stem + ".seg")
        geo.save_seg(seg_path, cloud.labels)
        written.append(seg_path)
    print("wrote " + " ".join(written))
    return 0


def cmd_train(args):
    config = _resolve_train_config(args)
    dataset = dg.load_dataset(args.data)
    run = tr.train(dataset, config)
    out = _out_dir(args)
    metrics = os.path.join(out, "metrics.csv")
    tr.write_metrics_csv(metrics, run)
    run.checkpoint_path = os.path.join(out, "model.ckpt")
    ckpt.save_model(run.checkpoint_path, run.model)
    print(f"best epoch {run.best_epoch}; "
          f"final test accuracy {run.test_accuracy[-1]:.17g}; "
          f"wrote {metrics} and {run.checkpoint_path}")
    return 0


def cmd_eval(args):
    _print_config([("model", args.model), ("data", args.data), ("out", args.out)])
    model = ckpt.load_model(args.model)
    dataset = dg.load_dataset(args.data)
    report = tr.evaluate(model, dataset)
    out = _out_dir(args)
    for i, pred in enumerate(report.predictions):
        geo.save_seg(os.path.join(out, f"pred_{i:04d}.seg"), pred)
    print(f"accuracy {report.accuracy:.17g} miou {report.miou:.17g}")
    return 0


def cmd_compare(args):
    if (args.data is None) == (args.family is None):
        raise ValueError("give exactly one of --data or --family")
    config = _resolve_train_config(args)
    if args.data is not None:
        dataset = dg.load_dataset(args.data)
    else:
        if args.family not in dg.FAMILIES:
            raise ValueError(f"unknown family {args.family!r}; "
                             f"choose from {sorted(dg.FAMILIES)}")
        dataset = dg.gen_dataset(dg.FAMILIES[args.family], args.count,
                                 config.n_points, config.seed)
    result = tr.run_comparison(dataset, config)
    out = _out_dir(args)
    for kind, run in (("pointnet", result.pointnet), ("ipcnet", result.ipcnet)):
        tr.write_metrics_csv(os.path.join(out, f"{kind}_metrics.csv"), run)
        ckpt.save_model(os.path.join(out, f"{kind}.ckpt"), run.model)
    tr.write_comparison_csv(os.path.join(out, "compare.csv"), result)
    print(f"final test accuracy: pointnet {result.pointnet.test_accuracy[-1]:.17g} "
          f"ipcnet {result.ipcnet.test_accuracy[-1]:.17g}")
    print(f"redundancy score: pointnet {result.pointnet_redundancy:.17g} "
          f"ipcnet {result.ipcnet_redundancy:.17g}")
    return 0


def cmd_kernels(args):
    _print_config([("model", args.model), ("cloud", args.cloud),
                   ("layer", args.layer), ("kernels", args.kernels),
                   ("axes", args.axes), ("out", args.out)])
    model = ckpt.load_model(args.model)
    points = geo.load_pts(args.cloud)
    axes = tuple(args.axes.split(","))
    if len(axes) != 2:
        raise ValueError(f"--axes wants two comma-separated names, got {args.axes!r}")
    out = _out_dir(args)
    for text in args.kernels.split(","):
        kernel = int(text)
        amap = an.kernel_activation_map(model, points, args.layer, kernel)
        an.write_activation_csv(
            os.path.join(out, f"activation_{args.layer}_{kernel}.csv"), amap)
        rows = an.field_view_projection(amap, axes)
        an.write_projection_csv(
            os.path.join(out, f"projection_{args.layer}_{kernel}.csv"), rows, axes)
    print(f"wrote activation and projection CSVs for {args.layer} "
          f"kernels {args.kernels} in {out}")
    return 0


def cmd_heatmap(args):
    _print_config([("model", args.model), ("layer", args.layer), ("out", args.out)])
    model = ckpt.load_model(args.model)
    hm = an.redundancy_heatmap(model, args.layer)
    out = _out_dir(args)
    an.write_heatmap_csv(os.path.join(out, f"heatmap_{args.layer}.csv"), hm)
    an.write_order_csv(os.path.join(out, f"order_{args.layer}.csv"), hm)
    an.write_heatmap_pgm(os.path.join(out, f"heatmap_{args.layer}.pgm"), hm)
    print(f"redundancy score {an.redundancy_score(hm):.17g}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ipcnet",
        description="point-cloud part segmentation: data, training, analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    cmd = sub.add_parser("gen-data", help="write a synthetic labeled dataset")
    cmd.add_argument("--family", required=True)
    cmd.add_argument("--count", type=int, required=True)
    cmd.add_argument("--points", type=int, default=2048)
    cmd.add_argument("--seed", type=int)
    cmd.add_argument("--out", required=True)
    cmd.set_defaults(func=cmd_gen_data)

    cmd = sub.add_parser("sample", help="sample a mesh into a point cloud")
    cmd.add_argument("--mesh", required=True)
    cmd.add_argument("--points", type=int, default=2048)
    cmd.add_argument("--seed", type=int)
    cmd.add_argument("--normalize", action="store_true")
    cmd.add_argument("--out", required=True)
    cmd.set_defaults(func=cmd_sample)

    cmd = sub.add_parser("train", help="train one model on a dataset directory")
    cmd.add_argument("--data", required=True)
    cmd.add_argument("--out", required=True)
    _add_train_flags(cmd)
    cmd.set_defaults(func=cmd_train)

    cmd = sub.add_parser("eval", help="score a checkpoint on a dataset")
    cmd.add_argument("--model", required=True)
    cmd.add_argument("--data", required=True)
    cmd.add_argument("--out", required=True)
    cmd.set_defaults(func=cmd_eval)

    cmd = sub.add_parser("compare", help="PointNet vs IPC-Net on one split")
    cmd.add_argument("--data", help="existing dataset directory")
    cmd.add_argument("--family", help="or: generate this family fresh")
    cmd.add_argument("--count", type=int, default=75)
    cmd.add_argument("--out", required=True)
    _add_train_flags(cmd)
    cmd.set_defaults(func=cmd_compare)

    cmd = sub.add_parser("kernels", help="activation map + field-view projection")
    cmd.add_argument("--model", required=True)
    cmd.add_argument("--cloud", required=True, help=".pts file")
    cmd.add_argument("--layer", required=True)
    cmd.add_argument("--kernels", default="0", help="comma-separated kernel indices")
    cmd.add_argument("--axes", default="x,y")
    cmd.add_argument("--out", required=True)
    cmd.set_defaults(func=cmd_kernels)

    cmd = sub.add_parser("heatmap", help="kernel-redundancy heatmap")
    cmd.add_argument("--model", required=True)
    cmd.add_argument("--layer", required=True)
    cmd.add_argument("--out", required=True)
    cmd.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
