"""Command-line frontend: generate, enumerate, sample, compare, slice.

Exit codes: 0 on success, 2 for input or usage problems, 3 for numerical
failures inside the LP kernel (including partial enumerations).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .arrangement import SearchOptions
from .deep import enumerate_network
from .lp import EPS_CAP, TAU_INTERIOR, Box, LPNumericalError
from .network import (
    Activation,
    NetworkFormatError,
    load_network,
    random_network,
    save_network,
)
from .sampling import compare, comparison_table_csv, sample_discover
from .slice2d import SliceSpec, slice_svg

WORKERS_ENV = "CPA_ENUM_WORKERS"


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _add_box_flags(p: argparse.ArgumentParser, default: float):
    p.add_argument("--box", type=float, default=default, metavar="HW",
                   help=f"box half-width (default {default:g})")
    p.add_argument("--unbounded", action="store_true",
                   help="drop the box (unbounded input domain)")


def _box_from(args, dim: int) -> Box:
    if getattr(args, "unbounded", False):
        return Box(None, dim)
    return Box(args.box, dim)


def _load_net(path: str):
    return load_network(Path(path).read_text())


def _options(args) -> SearchOptions:
    return SearchOptions(
        tau_interior=getattr(args, "tol_interior", TAU_INTERIOR),
        eps_cap=getattr(args, "eps_cap", EPS_CAP),
        workers=getattr(args, "workers", 1),
    )


def _parse_vector(text: str, dim: int, name: str) -> np.ndarray:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != dim:
        raise ValueError(f"{name} needs {dim} comma-separated values, got {len(parts)}")
    return np.array([float(p) for p in parts])


def cmd_gen(args) -> int:
    widths = [int(w) for w in str(args.widths).replace(" ", "").split(",") if w]
    act = Activation(args.act, args.alpha) if args.act == "leaky_relu" else Activation(args.act)
    net = random_network(args.input_dim, widths, act, args.seed)
    Path(args.output).write_text(save_network(net) + "\n")
    print(f"wrote {args.output}: input_dim={net.input_dim} widths={net.widths} "
          f"activation={args.act} seed={args.seed}")
    return 0


def cmd_enumerate(args) -> int:
    net = _load_net(args.network)
    box = _box_from(args, net.input_dim)
    partition = enumerate_network(net, box, _options(args))
    st = partition.stats
    print(f"regions={st.region_count} lp_calls={st.lp_calls} tree_nodes={st.tree_nodes} "
          f"wall_time={st.wall_time:.3f}s workers={st.worker_count}")
    if args.out:
        Path(args.out).write_text(partition.to_json() + "\n")
        print(f"wrote {args.out}")
    if args.csv:
        Path(args.csv).write_text(partition.to_csv())
        print(f"wrote {args.csv}")
    if partition.failures:
        for f in partition.failures:
            print(f"numerical failure: {f}", file=sys.stderr)
        return 3
    return 0


def cmd_sample(args) -> int:
    net = _load_net(args.network)
    box = _box_from(args, net.input_dim)
    if args.seconds is not None:
        found, curve = sample_discover(net, box, wall_seconds=args.seconds, seed=args.seed)
    else:
        found, curve = sample_discover(net, box, n_samples=args.samples, seed=args.seed)
    print(f"samples={curve.points[-1].samples_drawn if curve.points else 0} "
          f"distinct_regions={len(found)}")
    if args.out:
        Path(args.out).write_text(curve.to_csv())
        print(f"wrote {args.out}")
    return 0


def cmd_compare(args) -> int:
    reports = []
    for path in args.networks:
        net = _load_net(path)
        box = _box_from(args, net.input_dim)
        report, _ = compare(net, box, runs=args.runs, seed=args.seed, options=_options(args))
        reports.append(report)
        print(f"{path}: D={net.input_dim} K={net.widths[0]} "
              f"enum={report.enumeration_count} "
              f"sampled={report.sampling_mean:.1f}+-{report.sampling_std:.1f} "
              f"found={report.percent_found:.1f}%")
    if args.out_csv:
        Path(args.out_csv).write_text(comparison_table_csv(reports))
        print(f"wrote {args.out_csv}")
    if args.out_json:
        doc = [json.loads(r.to_json()) for r in reports]
        Path(args.out_json).write_text(json.dumps(doc, indent=2) + "\n")
        print(f"wrote {args.out_json}")
    return 0


def cmd_slice(args) -> int:
    net = _load_net(args.network)
    D = net.input_dim
    anchor = _parse_vector(args.anchor, D, "--anchor") if args.anchor else np.zeros(D)
    if args.basis_u or args.basis_v:
        if not (args.basis_u and args.basis_v):
            raise ValueError("give both --basis-u and --basis-v or neither")
        u = _parse_vector(args.basis_u, D, "--basis-u")
        v = _parse_vector(args.basis_v, D, "--basis-v")
        basis = np.stack([u, v], axis=1)
    else:
        basis = np.zeros((D, 2))
        basis[0, 0] = 1.0
        basis[1, 1] = 1.0
    spec = SliceSpec(anchor, basis, args.extent, args.resolution)
    svg, partition = slice_svg(net, spec, _options(args))
    Path(args.output).write_text(svg)
    print(f"regions={partition.stats.region_count} wrote {args.output}")
    if partition.failures:
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="linregions",
        description="Exact linear-region enumeration for piecewise-linear networks",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random network JSON file")
    g.add_argument("-D", "--input-dim", type=int, required=True)
    g.add_argument("-w", "--widths", required=True, help="layer widths, e.g. 16 or 8,8")
    g.add_argument("--act", choices=["relu", "leaky_relu", "abs"], default="leaky_relu")
    g.add_argument("--alpha", type=float, default=0.01, help="leaky_relu negative slope")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("enumerate", help="exactly enumerate the partition")
    e.add_argument("network")
    _add_box_flags(e, 1e3)
    e.add_argument("--workers", type=int, default=_default_workers())
    e.add_argument("--tol-interior", type=float, default=TAU_INTERIOR, dest="tol_interior")
    e.add_argument("--eps-cap", type=float, default=EPS_CAP, dest="eps_cap")
    e.add_argument("--out", help="partition JSON path")
    e.add_argument("--csv", help="region list CSV path")
    e.set_defaults(func=cmd_enumerate)

    s = sub.add_parser("sample", help="sampling-based region discovery")
    s.add_argument("network")
    _add_box_flags(s, 10.0)
    grp = s.add_mutually_exclusive_group(required=True)
    grp.add_argument("--samples", type=int, help="sample-count budget")
    grp.add_argument("--seconds", type=float, help="wall-clock budget")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="discovery curve CSV path")
    s.set_defaults(func=cmd_sample)

    c = sub.add_parser("compare", help="enumeration vs sampling at matched wall budgets")
    c.add_argument("networks", nargs="+")
    _add_box_flags(c, 10.0)
    c.add_argument("--runs", type=int, default=5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--workers", type=int, default=_default_workers())
    c.add_argument("--out-csv", dest="out_csv", help="pivot table CSV path")
    c.add_argument("--out-json", dest="out_json", help="report list JSON path")
    c.set_defaults(func=cmd_compare)

    sl = sub.add_parser("slice", help="render a 2D partition slice as SVG")
    sl.add_argument("network")
    sl.add_argument("--anchor", help="comma-separated anchor point (default origin)")
    sl.add_argument("--basis-u", dest="basis_u", help="first basis vector")
    sl.add_argument("--basis-v", dest="basis_v", help="second basis vector")
    sl.add_argument("--extent", type=float, default=5.0)
    sl.add_argument("--resolution", type=int, default=800)
    sl.add_argument("--workers", type=int, default=_default_workers())
    sl.add_argument("-o", "--output", required=True)
    sl.set_defaults(func=cmd_slice)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (NetworkFormatError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LPNumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
