"""Command-line front end: analyze, viz, bench, reconcile.

    analyze    classify elements, write the mask file and counts CSV
    viz        draw a variable's criticality map from a prior analysis
    bench      checkpoint a run, fail it, restart, verify bitwise
    reconcile  cross-check the classification against both oracles

Exit codes: 0 success, 1 verification or reconciliation failure,
2 usage error.  The SCRUTINIZE_OUT environment variable overrides
--out when set.
"""

from __future__ import annotations

import argparse
import os
import random
import struct
import sys
from pathlib import Path

from .kernels import (
    KERNEL_IDS,
    UnsupportedClass,
    build_kernel,
    new_run,
    reference_output,
    run_step,
    run_to_completion,
    verify,
)
from .ckpt import (
    CheckpointPolicy,
    restart,
    storage_report,
    write_checkpoint,
)
from .mask import load_mask_file, save_mask_file
from .scrutiny import (
    IterationRange,
    _unit_size,
    analyze,
    criticality_csv,
    oracle_perturbation,
    oracle_read_tracking,
    reconcile,
)
from .viz import BadProjection, VizRequest, render

__all__ = [
    "MissingAnalysis", "MismatchFound", "VizRequest",
    "cmd_analyze", "cmd_viz", "cmd_bench", "cmd_reconcile", "main",
]


class MissingAnalysis(FileNotFoundError):
    """viz needs analysis artifacts that are not in the out directory."""


class MismatchFound(RuntimeError):
    """An oracle disagreed with the derivative classification."""


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_analyze(kernel: str, k_iterations: int, out_dir,
                seed: int = 42):
    """Classify one kernel; emit `<kernel>.scrm` and a counts CSV."""
    spec = build_kernel(kernel)
    report = analyze(spec, k_iterations, seed)
    out = _outdir(out_dir)
    save_mask_file(out / f"{spec.id}.scrm", report.masks())
    (out / f"{spec.id}.criticality.csv").write_text(
        criticality_csv([report]), encoding="utf-8")
    for name, vc in report.per_variable.items():
        pct = f"{100.0 * vc.uncritical_rate:.3g}"
        print(f"{name}: {vc.n_uncritical}/{vc.total} uncritical ({pct}%)")
    return report


def _logical_shape(spec, name):
    decl = spec.var(name)
    if _unit_size(spec) == 2:
        if decl.shape[-1] != 2:
            raise BadProjection(
                f"{spec.id}.{name}: paired variable lacks a trailing"
                " component axis")
        return decl.shape[:-1]
    return decl.shape


_EXT = {"ascii": "txt", "pgm": "pgm", "csv": "csv"}


def cmd_viz(request: VizRequest, out_dir) -> Path:
    """Render one variable's flags from the standing analysis artifacts."""
    spec = build_kernel(request.kernel)
    out = _outdir(out_dir)
    mask_path = out / f"{spec.id}.scrm"
    if not mask_path.exists():
        raise MissingAnalysis(
            f"no {mask_path.name} under {out}; run analyze first")
    masks = {m.name: m for m in load_mask_file(mask_path)}
    if request.variable not in masks:
        raise MissingAnalysis(
            f"analysis of {spec.id} has no variable {request.variable!r}")
    unit = _unit_size(spec)
    flags = masks[request.variable].flags()[::unit]
    shape = _logical_shape(spec, request.variable)
    text = render(flags, shape, request)
    parts = [spec.id, request.variable]
    if request.slice_axis is not None:
        parts.append(f"ax{request.slice_axis}")
    if request.slice_index is not None:
        parts.append(f"s{request.slice_index}")
    path = out / (".".join(parts) + "." + _EXT[request.format])
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")
    return path


def cmd_bench(kernel: str, k_iterations: int, out_dir, seed: int = 42,
              interval: int = 1, versions_kept: int = 2,
              fill: str = "poison") -> int:
    """Checkpoint periodically, fail before the last iteration, restart.

    Prints one storage/verification row; returns 0 when the resumed run
    reproduces the uninterrupted output bitwise and passes the margin
    check, 1 otherwise.
    """
    spec = build_kernel(kernel)
    report = analyze(spec, k_iterations, seed)
    policy = CheckpointPolicy(interval=interval, versions_kept=versions_kept)
    out = _outdir(out_dir)

    run = new_run(spec, seed)
    fail_at = spec.loop_len - 1
    for k in range(fail_at):
        if k % policy.interval == 0:
            write_checkpoint(run, report, policy, out)
        run_step(spec, run)
    # Simulated failure: the partial run is abandoned here.
    resumed = restart(out, spec, fill)
    resumed_at = resumed.iter
    run_to_completion(spec, resumed)
    ref = reference_output(spec, seed)
    bitwise = struct.pack("<d", resumed.output) == struct.pack("<d", ref)
    ok = bitwise and verify(spec, resumed)

    sr = storage_report(spec, report)
    pct = f"{100.0 * sr['saved_fraction']:.3g}"
    state = "OK" if ok else "FAIL"
    print(f"{spec.id}: payload saved {pct}%"
          f" ({sr['optimized_bytes']}/{sr['original_bytes']} bytes),"
          f" failed at {fail_at}, restarted at {resumed_at},"
          f" verified {state}")
    return 0 if ok else 1


def cmd_reconcile(kernel: str, k_iterations: int, seed: int = 42,
                  n_samples: int = 8):
    """Replay both oracles against the classification; raise on mismatch."""
    spec = build_kernel(kernel)
    report = analyze(spec, k_iterations, seed)
    oracle = oracle_read_tracking(spec, k_iterations, seed)

    pools = {True: [], False: []}
    for name in report.per_variable:
        flags = report.unit_flags(name)
        for want in (True, False):
            idx = (flags == want).nonzero()[0]
            if idx.size:
                pools[want].append((name, idx))
    rng = random.Random(seed * 9176 + 77)
    samples = []
    for i in range(n_samples):
        want = (i % 2 == 1)
        cand = pools[want] or pools[not want]
        name, idx = cand[rng.randrange(len(cand))]
        u = int(idx[rng.randrange(idx.size)])
        samples.append(
            (name, u, oracle_perturbation(spec, name, u, seed)))

    result = reconcile(report, oracle, samples)
    never = sum(len(v) for v in oracle.values())
    print(f"{spec.id}: {never} never-read elements, {len(samples)}"
          f" perturbation samples, mismatches: {len(result.mismatches)}")
    for line in result.mismatches:
        print(f"  {line}", file=sys.stderr)
    if not result.ok:
        raise MismatchFound(
            f"{spec.id}: {len(result.mismatches)} oracle mismatches")
    return result


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="scrutinize",
        description="Derivative-based checkpoint slimming for the"
                    " miniature kernel suite.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--kernel", required=True, type=str.upper,
                        choices=list(KERNEL_IDS),
                        help="kernel id (case-insensitive)")
        sp.add_argument("--iters", type=int, default=2,
                        help="iterations to analyze (default 2)")
        sp.add_argument("--seed", type=int, default=42)
        sp.add_argument("--out", default="scrutinize-out",
                        help="artifact directory (SCRUTINIZE_OUT overrides)")

    a = sub.add_parser("analyze", help="classify checkpoint elements")
    common(a)

    v = sub.add_parser("viz", help="draw criticality maps")
    common(v)
    v.add_argument("--variable", required=True)
    v.add_argument("--format", choices=["ascii", "pgm", "csv"],
                   default="ascii")
    v.add_argument("--projection", choices=["slice-stack", "flat-strip"],
                   default="slice-stack")
    v.add_argument("--axis", type=int, default=None)
    v.add_argument("--index", type=int, default=None)

    b = sub.add_parser("bench", help="checkpoint, fail, restart, verify")
    common(b)
    b.add_argument("--interval", type=int, default=1)
    b.add_argument("--versions", type=int, default=2)
    b.add_argument("--fill", choices=["zero", "keep", "poison"],
                   default="poison")

    r = sub.add_parser("reconcile", help="cross-check with the oracles")
    common(r)
    r.add_argument("--samples", type=int, default=8)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = os.environ.get("SCRUTINIZE_OUT") or args.out
    try:
        if args.command == "analyze":
            cmd_analyze(args.kernel, args.iters, out, args.seed)
            return 0
        if args.command == "viz":
            req = VizRequest(
                kernel=args.kernel,
                variable=args.variable,
                projection=args.projection,
                slice_axis=args.axis,
                slice_index=args.index,
                format=args.format,
            )
            cmd_viz(req, out)
            return 0
        if args.command == "bench":
            return cmd_bench(args.kernel, args.iters, out, args.seed,
                             args.interval, args.versions, args.fill)
        if args.command == "reconcile":
            cmd_reconcile(args.kernel, args.iters, args.seed, args.samples)
            return 0
        raise AssertionError(args.command)
    except MismatchFound as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (MissingAnalysis, BadProjection, IterationRange,
            UnsupportedClass, KeyError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
