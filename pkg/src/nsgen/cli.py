"""Command-line entry points: solving, data generation, training, evaluation,
benchmarks and the inference server."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import nsf1
from .grid import BoundarySpec, GridSpec, rasterize_obstacles, shape_from_jsonable
from .physics import LossWeights


def _add_solve(sub):
    p = sub.add_parser("solve", help="run the iterative oracle on one case")
    p.add_argument("--problem", choices=["cavity", "internal"], required=True)
    p.add_argument("--n", type=int, default=32, help="nodes per side (power of two)")
    p.add_argument("--u0", type=float, required=True)
    p.add_argument("--v0", type=float, default=0.0)
    p.add_argument("--lid-start", type=float, default=0.0)
    p.add_argument("--lid-extent", type=float, default=1.0)
    p.add_argument("--shapes", type=Path, help="JSON file with an obstacle shape list")
    p.add_argument("--div-polish", action="store_true",
                   help="divergence-free polish of the converged field")
    p.add_argument("--out", type=Path, required=True)


def _cmd_solve(args):
    from .solver import solve_steady

    grid = GridSpec.square(args.n)
    if args.problem == "cavity":
        bc = BoundarySpec.cavity(args.u0, lid_start=args.lid_start, lid_extent=args.lid_extent)
    else:
        bc = BoundarySpec.internal_flow(args.u0, args.v0)
    shapes = []
    if args.shapes:
        shapes = [shape_from_jsonable(d) for d in json.loads(args.shapes.read_text())]
    mask = rasterize_obstacles(shapes, grid) if shapes else None
    result = solve_steady(bc, mask, grid, div_polish=args.div_polish)
    nsf1.write_field(args.out, result.field.stack(), bc=bc, shapes=shapes)
    print(
        f"steps={result.steps} converged={result.converged} "
        f"delta={result.delta:.3e} div_linf={result.divergence_linf:.3e} -> {args.out}"
    )
    return 0 if result.converged else 3


def _add_gen_data(sub):
    p = sub.add_parser("gen-data", help="generate a training dataset for one stage")
    p.add_argument("--stage", choices=["A0", "A", "B0", "B1", "B2", "B3"], required=True)
    p.add_argument("--n", type=int, default=2048)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)


def _cmd_gen_data(args):
    from .data import generate_stage_dataset

    manifest = generate_stage_dataset(args.stage, args.n, args.seed, args.out)
    print(
        f"stage {args.stage}: {manifest.n} samples ({len(manifest.train_ids)} train / "
        f"{len(manifest.test_ids)} test) -> {args.out}"
    )
    return 0


def _add_train(sub):
    p = sub.add_parser("train", help="train one curriculum stage")
    p.add_argument("--stage", choices=["A0", "A", "B0", "B1", "B2", "B3"], required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--from", dest="source", type=Path, help="source checkpoint")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--base-width", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", type=Path, help="JSON file with fixed loss multipliers")


def _cmd_train(args):
    from .train import StageSpec, train_stage

    weights = None
    if args.weights:
        weights = LossWeights.from_jsonable(json.loads(args.weights.read_text()))
    spec = StageSpec(
        stage=args.stage,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        base_width=args.base_width,
        seed=args.seed,
        source=str(args.source) if args.source else None,
        weights=weights,
    )
    report = train_stage(spec, args.data, args.out)
    print(
        f"stage {args.stage}: {args.epochs} epochs in {report.wall_clock_s:.0f}s; "
        f"final total loss {report.series['total'][-1]:.4e} -> {report.checkpoint}"
    )
    return 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="RMSE report against the converged oracle")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--cases", type=Path, help="JSON case list; stage defaults otherwise")
    p.add_argument("--cache-dir", type=Path, help="oracle truth cache directory")
    p.add_argument("--out", type=Path, required=True)


def _parse_cases(path: Path):
    from .evaluate import EvalCase

    cases = []
    for d in json.loads(path.read_text()):
        if d.get("problem", "cavity") == "cavity":
            bc = BoundarySpec.cavity(
                d["u0"], lid_start=d.get("lid_start", 0.0), lid_extent=d.get("lid_extent", 1.0)
            )
        else:
            bc = BoundarySpec.internal_flow(d["u0"], d.get("v0", 0.0))
        shapes = [shape_from_jsonable(s) for s in d.get("shapes", [])]
        cases.append(EvalCase(d.get("name", f"case{len(cases)}"), bc, shapes))
    return cases


def _cmd_eval(args):
    from .evaluate import TruthCache, evaluate_checkpoint

    cases = _parse_cases(args.cases) if args.cases else None
    cache = TruthCache(cache_dir=args.cache_dir)
    report = evaluate_checkpoint(args.checkpoint, cases, cache)
    args.out.write_text(json.dumps(report, indent=1))
    for row in report["cases"]:
        print(
            f"{row['case']}: rmse=({row['rmse_u']:.4f}, {row['rmse_v']:.4f}, "
            f"{row['rmse_p']:.4f}) prep={row['prep_seconds']:.3f}s"
        )
    return 0


def _add_bench(sub):
    p = sub.add_parser("bench", help="latency / solver-backend benchmarks")
    p.add_argument("--checkpoint", type=Path, help="benchmark forward latency")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--solver", action="store_true", help="compare solver backends")
    p.add_argument("--n", type=int, default=64)


def _cmd_bench(args):
    if args.solver:
        from .solver import BACKEND, benchmark_backends

        out = benchmark_backends(n=args.n, n_steps=200)
        print(f"active backend: {BACKEND}")
        for name in ("native", "numpy"):
            if name in out:
                print(f"  {name:>6}: {out[name] * 1e3:.3f} ms/step")
        if "max_abs_diff" in out:
            print(f"  max |difference| between backends: {out['max_abs_diff']:.2e}")
    if args.checkpoint:
        from .evaluate import benchmark_latency
        from .model import load_checkpoint

        model, meta = load_checkpoint(args.checkpoint)
        stats = benchmark_latency(model, n_runs=args.runs)
        print(
            f"forward @{stats['input_size']}x{stats['input_size']}: "
            f"median {stats['median_ms']:.2f} ms, p95 {stats['p95_ms']:.2f} ms "
            f"({stats['n_runs']} runs, {stats['threads']} threads)"
        )
    if not args.solver and not args.checkpoint:
        print("nothing to benchmark: pass --checkpoint and/or --solver", file=sys.stderr)
        return 2
    return 0


def _add_profiles(sub):
    p = sub.add_parser("profiles", help="export cross-section profiles from an NSF1 field")
    p.add_argument("--field", type=Path, required=True)
    p.add_argument("--lines", default="centerline,outlet")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--contours", type=Path, help="also write contour PNGs with this prefix")


def _cmd_profiles(args):
    from .evaluate import export_contours, export_profiles
    from .grid import FlowField

    channels, bc, shapes = nsf1.read_field(args.field)
    grid = GridSpec.square(channels.shape[-1])
    field = FlowField(
        channels[0].astype(np.float64), channels[1].astype(np.float64),
        channels[2].astype(np.float64), grid,
    )
    export_profiles(field, args.lines.split(","), args.out)
    print(f"profiles -> {args.out}")
    if args.contours:
        mask = rasterize_obstacles(shapes, grid) if shapes else None
        for path in export_contours(field, args.contours, mask=mask):
            print(f"contour -> {path}")
    return 0


def _add_serve(sub):
    p = sub.add_parser("serve", help="run the inference HTTP service")
    p.add_argument("--registry", type=Path, default=os.environ.get("NSGEN_REGISTRY"))
    p.add_argument("--port", type=int, default=int(os.environ.get("NSGEN_PORT", 8089)))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", type=Path, default=os.environ.get("NSGEN_UI_DIR"),
                   help="static UI bundle directory served under /ui")


def _cmd_serve(args):
    import uvicorn

    from .service import ModelRegistry, create_app

    if not args.registry:
        print("serve needs --registry or NSGEN_REGISTRY", file=sys.stderr)
        return 2
    registry = ModelRegistry.from_config(args.registry)
    ui = args.ui
    if ui is None:
        default_ui = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui = default_ui if default_ui.is_dir() else None
    app = create_app(registry, ui_dir=ui)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nsgen")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_solve(sub)
    _add_gen_data(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_bench(sub)
    _add_profiles(sub)
    _add_serve(sub)
    args = parser.parse_args(argv)
    handlers = {
        "solve": _cmd_solve,
        "gen-data": _cmd_gen_data,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "bench": _cmd_bench,
        "profiles": _cmd_profiles,
        "serve": _cmd_serve,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
