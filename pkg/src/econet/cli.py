"""Command-line entry points: benchmark runs, ablations, curve export,
phantom generation and the annotation service."""
from __future__ import annotations

import argparse
import json
import os
import sys

from .volume import PhantomSpec, generate_phantom, save_mask, save_volume


def _cmd_bench_run(args):
    from . import bench
    with open(args.config) as f:
        cfg = bench.BenchConfig.from_json(json.load(f))
    dataset = bench.build_dataset(cfg)
    bench.warmup()
    report = bench.run_comparison(dataset, list(cfg.methods), cfg)
    paths = bench.write_report(report, args.out)
    print(f"wrote {paths['json']}, {paths['csv']}, {paths['curves']}")
    for m, row in report.summary().items():
        d = row["dice"]
        t = row["time"]
        s = row["scribbled_voxels"]
        print(f"{m:>14s}: dice {d[0]:.3f}+-{d[1]:.3f}  time {t[0]:.2f}s  "
              f"scribbles {s[0]:.0f}  failures {row['failures']}")
    return 0


def _cmd_bench_ablation(args):
    from . import bench
    if args.config:
        with open(args.config) as f:
            cfg = bench.BenchConfig.from_json(json.load(f))
    else:
        cfg = bench.BenchConfig(
            phantoms=tuple(bench.default_phantom_dataset(count=args.samples)))
    dataset = bench.build_dataset(cfg)
    if args.axis == "fc_sizes":
        values = [tuple(int(x) for x in v.split("x")) for v in args.values.split(",")]
    else:
        values = [int(v) for v in args.values.split(",")]
    bench.warmup()
    rows = bench.ablation_sweep(args.axis, values, dataset, cfg)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"ablation_{args.axis}.csv")
    bench.write_ablation(rows, path)
    print(f"wrote {path}")
    for r in rows:
        print(f"{args.axis}={r['value']}: dice {r['dice_mean']:.3f}  "
              f"train {r['train_time']:.2f}s  infer {r['infer_time']:.2f}s")
    return 0


def _cmd_bench_curves(args):
    from . import bench
    report = bench.load_report(args.report)
    bench.write_curves(report, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_serve(args):
    import uvicorn
    from .service import create_app
    app = create_app(data_dir=args.data_dir, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _cmd_phantom(args):
    if args.radius:
        rmin, rmax = (float(x) for x in args.radius.split(","))
    else:
        # scale the default lesion size with the volume so it always fits
        rmax = max(4.5, args.dims / 4.0)
        rmin = max(4.0, 0.75 * rmax)
    spec = PhantomSpec(kind=args.kind, dims=(args.dims,) * 3, seed=args.seed,
                       lesion_count=args.lesions, lesion_radius=(rmin, rmax))
    vol, gt = generate_phantom(spec)
    save_volume(vol, args.out)
    print(f"wrote {args.out}")
    if args.gt_out:
        save_mask(gt, args.gt_out)
        print(f"wrote {args.gt_out}")
    return 0


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="econet",
                                description="scribble-driven online segmentation")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="benchmark harness")
    bsub = b.add_subparsers(dest="bench_command", required=True)

    br = bsub.add_parser("run", help="run a method comparison")
    br.add_argument("--config", required=True, help="JSON experiment config")
    br.add_argument("--out", required=True, help="output directory")
    br.set_defaults(func=_cmd_bench_run)

    ba = bsub.add_parser("ablation", help="sweep one architecture axis")
    ba.add_argument("--axis", required=True, choices=["K", "filters", "fc_sizes", "L_num"])
    ba.add_argument("--values", required=True,
                    help="comma-separated values; fc_sizes entries as 32x16")
    ba.add_argument("--config", default=None, help="optional JSON experiment config")
    ba.add_argument("--samples", type=int, default=3,
                    help="phantom count when no config is given")
    ba.add_argument("--out", required=True)
    ba.set_defaults(func=_cmd_bench_ablation)

    bc = bsub.add_parser("curves", help="re-export curves from a report")
    bc.add_argument("--report", required=True, help="path to report.json")
    bc.add_argument("--out", required=True, help="output CSV path")
    bc.set_defaults(func=_cmd_bench_curves)

    s = sub.add_parser("serve", help="run the annotation HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--data-dir", default=None, help="directory for session persistence")
    s.add_argument("--ui-dir", default=None, help="built frontend to mount at /ui")
    s.set_defaults(func=_cmd_serve)

    ph = sub.add_parser("phantom", help="generate a synthetic phantom volume")
    ph.add_argument("--kind", default="texture-ambiguous",
                    choices=["intensity-separable", "texture-ambiguous"])
    ph.add_argument("--dims", type=int, default=64)
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--lesions", type=int, default=3)
    ph.add_argument("--radius", default=None,
                    help="lesion radius range as rmin,rmax (default scales with dims)")
    ph.add_argument("--out", required=True)
    ph.add_argument("--gt-out", default=None)
    ph.set_defaults(func=_cmd_phantom)

    args = p.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
