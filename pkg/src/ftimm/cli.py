"""Command-line interface: plan / tune / schedule / run / sweep / report.

Matrices for `run` are generated from the seed with numpy's PCG64
generator (`numpy.random.default_rng`), drawing A, B, then C in that
order, uniform in [-1, 1] as float32 — the seed fully determines them.

Exit codes: 0 success, 1 usage error, 2 verification failure
(`run --check` over tolerance or `schedule --verify` reporting issues).
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from . import __version__
from .blocking import (
    MatrixShape,
    Strategy,
    adjust,
    capacity_check,
    cmr_k_strategy,
    cmr_m_strategy,
    initial_blocks,
    plan_for,
)
from .charts import sweep_svg
from .engine import naive_gemm, run_auto, run_ftimm_k, run_ftimm_m, run_tgemm
from .machine import CONFIG_FORMAT_VERSION, default_ftm7032, load_machine, validate
from .matrixio import MATRIX_FORMAT_VERSION
from .microkernel import (
    estimate_cycles,
    generate_schedule,
    select_tiling,
    verify_schedule,
)
from .perf import SWEEP_PRESETS, estimate_time, preset_shapes, roofline, speedup_table

TRACE_CSV_VERSION = 1

_STRATEGY_FLAGS = {
    "auto": None,
    "tgemm": Strategy.TGEMM,
    "ftimm-m": Strategy.FTIMM_M,
    "ftimm-k": Strategy.FTIMM_K,
}


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_model(args):
    model = load_machine(args.machine) if args.machine else default_ftm7032()
    result = validate(model)
    if not result.ok:
        raise ValueError("invalid machine config: " + "; ".join(result.issues))
    return model


def _gen_matrices(shape: MatrixShape, seed: int):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, (shape.M, shape.K)).astype(np.float32)
    B = rng.uniform(-1.0, 1.0, (shape.K, shape.N)).astype(np.float32)
    C = rng.uniform(-1.0, 1.0, (shape.M, shape.N)).astype(np.float32)
    return A, B, C


def _print_plan(plan, model, as_json):
    if as_json:
        import json

        b, k = plan.blocks, plan.kernel
        print(json.dumps({
            "strategy": plan.strategy.value,
            "num_cores": plan.num_cores,
            "blocks": {f: getattr(b, f) for f in
                       ("m_g", "k_g", "n_g", "m_a", "k_a", "n_a", "m_s")},
            "kernel": {f: getattr(k, f) for f in
                       ("m_s", "n_a", "m_u", "k_u", "v_n")},
        }, indent=2, sort_keys=True))
        return
    b, k = plan.blocks, plan.kernel
    print(f"strategy: {plan.strategy.value}   cores: {plan.num_cores}")
    print(f"blocks:   m_g={b.m_g} k_g={b.k_g} n_g={b.n_g} "
          f"m_a={b.m_a} k_a={b.k_a} n_a={b.n_a} m_s={b.m_s}")
    print(f"kernel:   m_u={k.m_u} k_u={k.k_u} v_n={k.v_n} "
          f"(registers {k.register_use()})")
    rep = capacity_check(plan.strategy, b, model)
    for u in rep.usage:
        cap = u.capacity_bytes or "-"
        print(f"  {u.level:<4} {u.used_bytes:>9} / {cap} bytes "
              f"{'ok' if u.ok else 'OVER'}")


def _cmd_plan(args) -> int:
    model = _load_model(args)
    shape = MatrixShape(args.m, args.n, args.k)
    strategy = _STRATEGY_FLAGS[args.strategy]
    plan = adjust(shape, model) if strategy is None else plan_for(shape, model, strategy)
    _print_plan(plan, model, args.json)
    return 0


def _cmd_tune(args) -> int:
    model = _load_model(args)
    strategy = Strategy.FTIMM_M if args.strategy == "m" else Strategy.FTIMM_K
    blocks = initial_blocks(strategy, model)
    if strategy is Strategy.FTIMM_M:
        fo, fi = cmr_m_strategy(blocks, model.num_cores)
        names = ("f1", "f2")
    else:
        fo, fi = cmr_k_strategy(blocks, model.num_cores)
        names = ("f3", "f4")
    print(f"strategy: {strategy.value}")
    print(f"blocks:   m_g={blocks.m_g} k_g={blocks.k_g} n_g={blocks.n_g} "
          f"m_a={blocks.m_a} k_a={blocks.k_a} n_a={blocks.n_a} m_s={blocks.m_s}")
    print(f"cmr:      {names[0]}={fo:.3f} {names[1]}={fi:.3f}")
    rep = capacity_check(strategy, blocks, model)
    for u in rep.usage:
        print(f"  {u.level:<4} {u.used_bytes:>9} / {u.capacity_bytes} bytes "
              f"{'ok' if u.ok else 'OVER'}")
    return 0


def _cmd_schedule(args) -> int:
    model = _load_model(args)
    spec = select_tiling(args.ms, args.na, model)
    sched = generate_schedule(spec, model)
    est = estimate_cycles(sched, spec, args.ka)
    rows = sched.to_rows()
    header = ["Cycle"] + [str(c) for c in range(1, sched.num_cycles + 1)]
    if args.format == "csv":
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    else:
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        for row in [header] + rows:
            print("  ".join(f"{cell:<{w}}" for cell, w in zip(row, widths)).rstrip())
    eff = est.fmac_efficiency
    print(f"spec: m_u={spec.m_u} k_u={spec.k_u} v_n={spec.v_n}  "
          f"body={sched.num_cycles} cycles  "
          f"fmac_efficiency={eff.numerator}/{eff.denominator} ({float(eff):.3f})  "
          f"total_cycles(k_a={args.ka})={est.total_cycles}")
    if args.verify:
        issues = verify_schedule(sched, spec, model)
        if issues:
            for issue in issues:
                print(f"issue: {issue.kind}: {issue.message}", file=sys.stderr)
            return 2
        print("verify: no issues")
    return 0


def _run_dispatch(strategy, A, B, C, shape, model):
    if strategy is None:
        return run_auto(A, B, C, shape, model, keep_events=True)
    if strategy is Strategy.TGEMM:
        return run_tgemm(A, B, C, shape, model, keep_events=True)
    plan = plan_for(shape, model, strategy)
    runner = run_ftimm_m if strategy is Strategy.FTIMM_M else run_ftimm_k
    return runner(A, B, C, shape, plan, model, keep_events=True)


def _cmd_run(args) -> int:
    model = _load_model(args)
    shape = MatrixShape(args.m, args.n, args.k)
    A, B, C = _gen_matrices(shape, args.seed)
    ref = None
    if args.check:
        ref = naive_gemm(A.copy(), B.copy(), C.copy(), shape)
    out, report = _run_dispatch(_STRATEGY_FLAGS[args.strategy], A, B, C, shape, model)
    est = estimate_time(report, report.plan, model)
    print(f"strategy: {report.strategy.value}   active cores: "
          f"{report.active_cores}/{report.num_cores}")
    print(f"checksum: {report.result_checksum:.17g}")
    print(f"modeled:  {est.overlapped_time_s * 1e3:.6g} ms, "
          f"{est.gflops:.6g} GFlops, efficiency {est.efficiency:.4f}")
    for level in ("GSM", "SM", "AM", "DDR"):
        if level in report.bytes_per_level:
            print(f"  bytes into {level}: {report.bytes_per_level[level]}")
    if args.dump_trace:
        with open(args.dump_trace, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["phase_tag", "core_id", "src", "dst", "bytes",
                             "overlappable"])
            for ev in report.dma_events:
                tag = ":".join(str(p) for p in ev.phase_tag)
                writer.writerow([tag, ev.core_id, ev.src_level, ev.dst_level,
                                 ev.bytes, int(ev.overlappable)])
        print(f"trace: {len(report.dma_events)} events -> {args.dump_trace}")
    if args.check:
        err = float(np.max(np.abs(out - ref) / (1.0 + np.abs(ref))))
        tol = 1e-4 if shape.K > 2**16 else 1e-5
        print(f"check:    max relative error {err:.3e} (tolerance {tol:.0e})")
        if err > tol:
            print("check FAILED", file=sys.stderr)
            return 2
    return 0


def _parse_shapes(text: str):
    shapes = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        dims = part.split(",")
        if len(dims) != 3:
            raise ValueError(f"bad shape {part!r}; expected M,N,K")
        shapes.append(MatrixShape(int(dims[0]), int(dims[1]), int(dims[2])))
    if not shapes:
        raise ValueError("no shapes given")
    return shapes


def _cmd_sweep(args) -> int:
    model = _load_model(args)
    shapes = preset_shapes(args.preset) if args.preset else _parse_shapes(args.shapes)
    rows = speedup_table(shapes, model)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["M", "N", "K", "strategy", "tgemm_gflops_model",
                     "ftimm_gflops_model", "speedup", "roofline",
                     "roofline_fraction"])
    for r in rows:
        writer.writerow([
            r.shape.M, r.shape.N, r.shape.K, r.strategy.value,
            f"{r.tgemm_gflops:.6g}", f"{r.ftimm_gflops:.6g}",
            f"{r.speedup:.6g}", f"{r.roofline_gflops:.6g}",
            f"{r.roofline_fraction:.6g}",
        ])
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {len(rows)} rows -> {args.out}")
    else:
        sys.stdout.write(text)
    if args.svg:
        with open(args.svg, "w", encoding="utf-8") as fh:
            fh.write(sweep_svg(rows))
        print(f"chart -> {args.svg}")
    return 0


def _cmd_report(args) -> int:
    totals: dict[tuple, list[int]] = {}
    with open(args.trace, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (row["src"], row["dst"], row["overlappable"] == "1")
            slot = totals.setdefault(key, [0, 0])
            slot[0] += int(row["bytes"])
            slot[1] += 1
    print(f"{'route':<14} {'overlap':<8} {'events':>8} {'bytes':>14}")
    for (src, dst, ov), (nbytes, count) in sorted(totals.items()):
        print(f"{src + '->' + dst:<14} {'yes' if ov else 'no':<8} "
              f"{count:>8} {nbytes:>14}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="ftimm", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument(
        "--version", action="version",
        version=(f"ftimm {__version__} (machine config v{CONFIG_FORMAT_VERSION}, "
                 f"matrix format v{MATRIX_FORMAT_VERSION}, "
                 f"trace csv v{TRACE_CSV_VERSION})"))
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--machine", metavar="PATH",
                        help="machine config JSON (defaults to FT-m7032)")

    p = sub.add_parser("plan", parents=[common],
                       help="choose strategy and block sizes for a shape")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--strategy", choices=sorted(_STRATEGY_FLAGS), default="auto")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("tune", parents=[common],
                       help="show the CMR-optimal initial blocks")
    p.add_argument("--strategy", choices=["m", "k"], required=True)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("schedule", parents=[common],
                       help="print a generated micro-kernel pipeline")
    p.add_argument("--ms", type=int, required=True)
    p.add_argument("--na", type=int, required=True)
    p.add_argument("--ka", type=int, default=512)
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.add_argument("--verify", action="store_true")
    p.set_defaults(func=_cmd_schedule)

    p = sub.add_parser("run", parents=[common],
                       help="execute a GEMM functionally and report the trace")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--strategy", choices=sorted(_STRATEGY_FLAGS), default="auto")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--check", action="store_true",
                   help="compare against the naive oracle")
    p.add_argument("--dump-trace", metavar="PATH")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", parents=[common],
                       help="model baseline vs adjusted over a shape grid")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=sorted(SWEEP_PRESETS))
    group.add_argument("--shapes", metavar="M,N,K;M,N,K;...")
    p.add_argument("--out", metavar="PATH", help="CSV output (default stdout)")
    p.add_argument("--svg", metavar="PATH")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", parents=[common],
                       help="summarize a dumped trace CSV")
    p.add_argument("--trace", metavar="PATH", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
