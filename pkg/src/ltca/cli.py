"""Command-line entry point: ``ltca {verify,inspect,reach,bench,infer,fixtures}``."""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from pathlib import Path

from . import analysis, bench, fixtures, masks, pipeline, verify
from .masks import GeometrySpec
from .numeric import DegenerateRowError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _geometry(text):
    try:
        return GeometrySpec.parse(text)
    except (ValueError, masks.MaskParamError) as exc:
        raise argparse.ArgumentTypeError(f"geometry must be T,N1,N2 ({exc})")


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("list must not be empty")
    return vals


def _load_specs(path) -> list:
    """A mask JSON file holds one spec or a list of per-layer specs."""
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, list):
        if not doc:
            raise UsageError(f"{path}: empty spec list")
        return [masks.spec_from_dict(d) for d in doc]
    return [masks.spec_from_dict(doc)]


def _emit(doc, out: Path | None, name: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def _sidecar(out: Path | None, args) -> None:
    # timestamps live only here so the primary outputs stay byte-identical
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(out / "run.log", "a") as fh:
        fh.write(f"{stamp} {args.command} {' '.join(sys.argv[1:])}\n")


def cmd_verify(args) -> int:
    if not args.tolerance > 0:
        raise UsageError("--tolerance must be > 0")
    formula = verify.formula_suite(args.formula_trials, args.seed, mutate=args.mutate)
    oracle = verify.oracle_suite(args.oracle_trials, args.seed)
    ok = (
        formula["failures"] == 0
        and oracle["max_layer_deviation"] <= args.tolerance
        and oracle["max_stack_deviation"] <= args.tolerance
    )
    report = {
        "ok": ok,
        "seed": args.seed,
        "tolerance": args.tolerance,
        "mask_formula": {k: v for k, v in formula.items() if k != "seconds"},
        "sparse_vs_dense": {k: v for k, v in oracle.items() if k != "seconds"},
    }
    _emit(report, args.out, "verify.json")
    _sidecar(args.out, args)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_inspect(args) -> int:
    if args.geometry is None or args.mask is None:
        raise UsageError("inspect needs --geometry and --mask")
    specs = _load_specs(args.mask)
    g = args.geometry
    layers = []
    for k, spec in enumerate(specs):
        a = masks.build(spec, g)
        layers.append(
            {
                "layer": k,
                "spec": masks.spec_to_dict(spec),
                "pairs": a.pair_count(),
                "empty_rows": a.empty_rows(),
                "formula_ok": masks.verify_against_formula(a, spec),
            }
        )
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"allow_l{k}.txt").write_text(a.dumps())
            (args.out / f"grid_l{k}.txt").write_text(analysis.ascii_grid(a.dense()) + "\n")
        elif args.grid:
            print(analysis.ascii_grid(a.dense()))
    _emit({"geometry": [g.T, g.N1, g.N2], "layers": layers}, args.out, "inspect.json")
    _sidecar(args.out, args)
    return EXIT_OK if all(l["formula_ok"] for l in layers) else EXIT_FAIL


def cmd_reach(args) -> int:
    if args.geometry is None:
        raise UsageError("reach needs --geometry")
    if args.shift_window is not None:
        specs = masks.shift_window_schedule(args.shift_window, 2)
    elif args.mask is not None:
        specs = _load_specs(args.mask)
    else:
        raise UsageError("reach needs --mask or --shift-window")
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    specs = [analysis.reseed(s, args.seed) for s in specs]
    rep = analysis.reachability(specs, args.geometry, args.k)
    doc = rep.to_dict()
    doc["specs"] = [masks.spec_to_dict(s) for s in specs]
    if args.seeds > 1:
        doc["seed_sweep"] = analysis.seed_sweep(specs, args.geometry, args.k, range(args.seed, args.seed + args.seeds))
    grid = analysis.ascii_grid(rep.per_layer[-1])
    if args.out is None:
        print(f"diameter: {doc['diameter']}")
        print(grid)
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "reach_grid.txt").write_text(f"diameter: {doc['diameter']}\n{grid}\n")
    _emit(doc, args.out, "reach.json")
    _sidecar(args.out, args)
    return EXIT_OK


def cmd_bench(args) -> int:
    geom = args.geometry or GeometrySpec(1, 8, 4)  # T comes from --sweep
    if args.repeats < 5:
        raise UsageError("--repeats must be >= 5")
    rows = bench.sweep(
        args.sweep,
        N1=geom.N1,
        N2=geom.N2,
        D=args.d or 8,
        seed=args.seed,
        repeats=args.repeats,
        rolled=args.rolled,
    )
    text = bench.to_csv(rows)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "bench.csv").write_text(text)
        _sidecar(args.out, args)
    return EXIT_OK


def cmd_infer(args) -> int:
    if args.fixtures is None:
        raise UsageError("infer needs --fixtures DIR (see `ltca fixtures`)")
    if args.out is None:
        raise UsageError("infer needs --out DIR")
    if args.mode not in ("single", "multi"):
        raise UsageError("--mode must be single or multi")
    b = pipeline.load_bundle(Path(args.fixtures) / "manifest.json", args.layers)
    spec = _load_specs(args.mask)[0] if args.mask else None
    cfg = pipeline.with_mask(b.config, spec, args.seed)
    pred = pipeline.run(b, cfg)
    selection = pipeline.write_outputs(pred, args.out, args.mode, args.sigma)
    _sidecar(args.out, args)
    print(json.dumps(selection, sort_keys=True))
    return EXIT_OK


def cmd_fixtures(args) -> int:
    if args.out is None:
        raise UsageError("fixtures needs --out DIR")
    path = fixtures.write_golden(args.out, seed=args.seed if args.seed is not None else 0)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--geometry", type=_geometry, help="T,N1,N2")
    common.add_argument("--d", type=int, default=None, help="feature width D (bench default 8)")
    common.add_argument("--mask", type=Path, help="MaskSpec JSON (object or per-layer list)")
    common.add_argument("--layers", type=Path, help="layer parameter JSON")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--sigma", type=float, default=0.5)
    common.add_argument("--sweep", type=_int_list, default=[32, 64, 128, 256])
    common.add_argument("--out", type=Path)
    common.add_argument("--tolerance", type=float, default=1e-9)

    parser = argparse.ArgumentParser(prog="ltca", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[common], help="mask-formula and sparse/dense oracle suites")
    p.add_argument("--formula-trials", type=int, default=1000)
    p.add_argument("--oracle-trials", type=int, default=200)
    p.add_argument("--mutate", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("inspect", parents=[common], help="realise a mask spec and check it")
    p.add_argument("--grid", action="store_true", help="print the ASCII allow grid")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("reach", parents=[common], help="receptive-field reachability report")
    p.add_argument("--k", type=int, default=2, help="number of stacked layers")
    p.add_argument("--shift-window", type=int, help="use alternating shift windows of this length")
    p.add_argument("--seeds", type=int, default=1, help="aggregate diameters over this many seeds")
    p.set_defaults(func=cmd_reach)

    p = sub.add_parser("bench", parents=[common], help="T-sweep cost benchmark (CSV)")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--rolled", action="store_true", help="add the rolled-key dilated+global path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("infer", parents=[common], help="run the full pipeline on a fixture bundle")
    p.add_argument("--fixtures", type=Path)
    p.add_argument("--mode", default="single")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("fixtures", parents=[common], help="write the golden fixture bundle")
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("verify", "bench", "reach") and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ltca {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ltca {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DegenerateRowError, ValueError, KeyError) as exc:
        print(f"ltca {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
