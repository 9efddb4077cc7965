"""Miniature kernel suite: eight fixed-shape iterative workloads.

Each kernel pairs a deterministic seeded initial state with a small
verified time-stepping loop.  `build_kernel` returns the static layout,
`new_run` seeds a fresh run, `run_step` advances one iteration (on a
tape when one is supplied), and `verify` margin-checks a completed run
against the memoized clean reference for its seed.
"""

from .base import (FLOAT_OPS, IDX_W, INIT_HI, INIT_LO, LOG_SHIFT, FloatOps,
                   IterationOverflow, KernelRun, KernelSpec, ScalarDecl,
                   TapeOps, UnsupportedClass, Variable, VarDecl, mix64,
                   new_run, reference_output, restore, run_step,
                   run_to_completion, seeded_u64, seeded_unit, snapshot,
                   verify, weight_table)
from .cg import CGKernel
from .ep import EPKernel
from .ft import FTKernel
from .grids import BTKernel, SPKernel
from .isort import ISKernel
from .lu import LUKernel
from .mg import MGKernel

_IMPLS = (BTKernel(), SPKernel(), CGKernel(), MGKernel(),
          LUKernel(), FTKernel(), EPKernel(), ISKernel())

_SPECS = {impl.id: impl.make_spec() for impl in _IMPLS}

KERNEL_IDS = tuple(_SPECS)


def build_kernel(kernel_id: str, klass: str = "S") -> KernelSpec:
    """Static spec for one kernel id (any case); S-class shapes only."""
    if klass != "S":
        raise UnsupportedClass(f"no shapes defined for class {klass!r}")
    key = str(kernel_id).upper()
    try:
        return _SPECS[key]
    except KeyError:
        raise KeyError(
            f"unknown kernel {kernel_id!r}; known: {', '.join(KERNEL_IDS)}"
        ) from None


__all__ = [
    "FLOAT_OPS", "FloatOps", "IDX_W", "INIT_HI", "INIT_LO", "LOG_SHIFT",
    "IterationOverflow", "KERNEL_IDS", "KernelRun", "KernelSpec",
    "ScalarDecl", "TapeOps", "UnsupportedClass", "VarDecl", "Variable",
    "build_kernel", "mix64", "new_run", "reference_output", "restore",
    "run_step", "run_to_completion", "seeded_u64", "seeded_unit", "snapshot",
    "verify", "weight_table",
]
