"""Command-line front end: solve, oracle, gen and bench subcommands plus SVG rendering."""

from __future__ import annotations

import argparse
import colorsys
import csv
import json
import logging
import sys
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Sequence

from .baseline import heuristic_solve
from .dissection import EDGES, Shift
from .instance import (
    Instance,
    InstanceError,
    dump_solution,
    generate_instance,
    load_instance,
    store_instance,
)
from .solve import (
    EXACT_MAX_K,
    EXACT_MAX_N,
    Derandomized,
    Fixed,
    RandomShift,
    SolveReport,
    exact_solve,
    ptas_solve,
)

log = logging.getLogger("mmtsp")

EXIT_OK = 0
EXIT_USER = 1
EXIT_INTERNAL = 2

BENCH_DEFAULT_M = 2
BENCH_DEFAULT_R = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; this front end reserves 2 for internal failures."""

    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# SVG


@dataclass(frozen=True)
class RenderSpec:
    show_quadtree: bool = False
    show_portals: bool = False
    width: int = 800
    height: int = 800
    palette: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("canvas width and height must be positive")

    def colors(self, k: int) -> list[str]:
        if self.palette is not None:
            if len(set(self.palette)) < k:
                raise ValueError(f"palette needs {k} distinct colours")
            return list(self.palette[:k])
        out = []
        for h in range(k):
            r, g, b = colorsys.hsv_to_rgb(h / max(k, 1), 0.85, 0.8)
            out.append(f"#{round(r * 255):02x}{round(g * 255):02x}{round(b * 255):02x}")
        return out


def render_svg(inst: Instance, report: SolveReport, spec: RenderSpec = RenderSpec()) -> str:
    """Tours in original coordinates; quadtree and portals mapped back from the grid."""
    tree, p = report.tree, report.perturbed
    overlay = tree is not None and p is not None and (spec.show_quadtree or spec.show_portals)

    def to_orig(gx, gy) -> tuple[float, float]:
        sf = float(p.scale_factor)
        return p.origin[0] + float(gx) * sf, p.origin[1] + float(gy) * sf

    xs = [c[0] for c in inst.cities]
    ys = [c[1] for c in inst.cities]
    if overlay:
        r = tree.root
        (x0, y0), (x1, y1) = to_orig(r.x0, r.y0), to_orig(r.x0 + r.side, r.y0 + r.side)
    else:
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    span = max(x1 - x0, y1 - y0) or 1.0
    pad = 0.03 * span
    x0, y0, span = x0 - pad, y0 - pad, span + 2 * pad
    scale = min(spec.width, spec.height) / span

    def px(x: float, y: float) -> tuple[float, float]:
        return round((x - x0) * scale, 3), round(spec.height - (y - y0) * scale, 3)

    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(spec.width),
        height=str(spec.height),
        viewBox=f"0 0 {spec.width} {spec.height}",
    )
    ET.SubElement(svg, "rect", x="0", y="0", width=str(spec.width), height=str(spec.height), fill="white")
    if overlay and spec.show_quadtree:
        g = ET.SubElement(svg, "g", {"class": "quadtree", "fill": "none", "stroke": "#bbbbbb", "stroke-width": "0.6"})
        for node in tree.nodes():
            ax, ay = px(*to_orig(node.x0, node.y0 + node.side))
            bx, by = px(*to_orig(node.x0 + node.side, node.y0))
            ET.SubElement(g, "rect", x=str(ax), y=str(ay), width=str(round(bx - ax, 3)), height=str(round(by - ay, 3)))
    if overlay and spec.show_portals:
        g = ET.SubElement(svg, "g", {"class": "portals", "fill": "#888888"})
        seen: set[tuple[float, float]] = set()
        for node in tree.nodes():
            for edge in EDGES:
                for gx, gy in node.portals(tree.m, edge):
                    pt = px(*to_orig(gx, gy))
                    if pt not in seen:
                        seen.add(pt)
                        ET.SubElement(g, "circle", cx=str(pt[0]), cy=str(pt[1]), r="1.5")
    colors = spec.colors(inst.k)
    g = ET.SubElement(svg, "g", {"class": "tours", "fill": "none", "stroke-width": "2"})
    for h, tour in enumerate(report.solution.tours):
        pts = " ".join(f"{a},{b}" for a, b in (px(*inst.cities[c]) for c in tour))
        ET.SubElement(g, "polyline", {"points": pts, "stroke": colors[h], "data-salesman": str(h)})
    g = ET.SubElement(svg, "g", {"class": "cities", "fill": "black"})
    for i, (x, y) in enumerate(inst.cities):
        cx, cy = px(x, y)
        attrs = {"cx": str(cx), "cy": str(cy), "r": "5" if i == inst.depot else "3"}
        if i == inst.depot:
            attrs["fill"] = "#d40000"
        ET.SubElement(g, "circle", attrs)
    return ET.tostring(svg, encoding="unicode")


# ---------------------------------------------------------------------------
# subcommands


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _overrides(args: argparse.Namespace):
    if args.m is None and args.r is None:
        if getattr(args, "alpha", None) is not None:
            raise UsageError("--alpha needs --m and --r")
        return None
    if args.m is None or args.r is None:
        raise UsageError("--m and --r must be given together")
    alpha = getattr(args, "alpha", None)
    return (args.m, args.r) if alpha is None else (args.m, args.r, alpha)


def _shift_mode(args: argparse.Namespace):
    if args.stride is not None and not args.derandomize:
        raise UsageError("--stride needs --derandomize")
    if args.derandomize:
        return Derandomized(args.stride)
    if args.shift is not None:
        return Fixed(Shift(*args.shift))
    return RandomShift(args.seed if args.seed is not None else 0)


def _log_levels(report: SolveReport) -> None:
    for row in report.table_stats:
        log.info("level %d: %d squares, %d configurations", row["level"], row["nodes"], row["configs"])


def cmd_solve(args: argparse.Namespace) -> int:
    inst = load_instance(args.input)
    mode = _shift_mode(args)
    report = ptas_solve(inst, args.eps, mode, _overrides(args))
    _log_levels(report)
    _emit(dump_solution(report.solution), args.out)
    if args.svg:
        spec = RenderSpec(show_quadtree=args.show_quadtree, show_portals=args.show_portals)
        with open(args.svg, "w", encoding="utf-8") as fh:
            fh.write(render_svg(inst, report, spec) + "\n")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    inst = load_instance(args.input)
    _emit(dump_solution(exact_solve(inst)), args.out)
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    store_instance(generate_instance(args.n, args.k, args.seed, args.extent), args.out)
    return EXIT_OK


BENCH_COLUMNS = [
    "n", "k", "seed", "eps", "m", "r",
    "ptas_makespan", "oracle_makespan", "baseline_makespan",
    "ptas_ratio", "baseline_ratio",
    "ptas_seconds", "oracle_seconds", "baseline_seconds",
    "dp_attempt", "level_configs",
]  # fmt: skip


def bench_row(n: int, k: int, seed: int, eps: float, m: int, r: int) -> dict:
    inst = generate_instance(n, k, seed)
    t = time.perf_counter()
    rep = ptas_solve(inst, eps, RandomShift(seed), (m, r))
    ptas_s = time.perf_counter() - t
    t = time.perf_counter()
    base = heuristic_solve(inst)
    base_s = time.perf_counter() - t
    row = {
        "n": n, "k": k, "seed": seed, "eps": eps, "m": m, "r": r,
        "ptas_makespan": repr(rep.solution.makespan),
        "oracle_makespan": "", "baseline_makespan": repr(base.makespan),
        "ptas_ratio": "", "baseline_ratio": "",
        "ptas_seconds": f"{ptas_s:.6f}", "oracle_seconds": "", "baseline_seconds": f"{base_s:.6f}",
        "dp_attempt": rep.solution.meta.get("dp_attempt", ""),
        "level_configs": ";".join(str(s["configs"]) for s in rep.table_stats),
    }  # fmt: skip
    if n <= EXACT_MAX_N and k <= EXACT_MAX_K:
        t = time.perf_counter()
        opt = exact_solve(inst).makespan
        row["oracle_seconds"] = f"{time.perf_counter() - t:.6f}"
        row["oracle_makespan"] = repr(opt)
        if opt > 0:
            row["ptas_ratio"] = repr(rep.solution.makespan / opt)
            row["baseline_ratio"] = repr(base.makespan / opt)
    return row


def cmd_bench(args: argparse.Namespace) -> int:
    if args.n_min < 1 or args.n_max < args.n_min:
        raise UsageError("need 1 <= --n-min <= --n-max")
    if args.seeds < 1:
        raise UsageError("--seeds must be positive")
    m = BENCH_DEFAULT_M if args.m is None else args.m
    r = BENCH_DEFAULT_R if args.r is None else args.r
    writer = csv.DictWriter(sys.stdout, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for n in range(args.n_min, args.n_max + 1):
        for seed in range(args.seeds):
            writer.writerow(bench_row(n, args.k, seed, args.eps, m, r))
            sys.stdout.flush()
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmtsp", description="Min-max multiple Euclidean TSP solver.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log one line per quadtree level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="approximate solution via the shifted-quadtree DP")
    s.add_argument("--input", required=True)
    s.add_argument("--eps", type=float, required=True)
    pick = s.add_mutually_exclusive_group()
    pick.add_argument("--seed", type=int)
    pick.add_argument("--shift", type=int, nargs=2, metavar=("A", "B"))
    pick.add_argument("--derandomize", action="store_true")
    s.add_argument("--stride", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--r", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--out")
    s.add_argument("--svg")
    s.add_argument("--show-quadtree", action="store_true")
    s.add_argument("--show-portals", action="store_true")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", help="exact solution for small instances")
    o.add_argument("--input", required=True)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    g = sub.add_parser("gen", help="write a random instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--extent", type=float, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bench", help="CSV comparison of solver, oracle and baseline")
    b.add_argument("--n-min", type=int, required=True)
    b.add_argument("--n-max", type=int, required=True)
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--eps", type=float, required=True)
    b.add_argument("--seeds", type=int, required=True)
    b.add_argument("--m", type=int)
    b.add_argument("--r", type=int)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except AssertionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (UsageError, InstanceError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
