"""Checkpoint-variable criticality analysis via reverse-mode AD.

A tape engine (`adtape`) differentiates early iterations of each
miniature kernel (`kernels`) to find state elements with exactly-zero
influence on the verified output (`scrutiny`); the critical/uncritical
split is stored as run-length masks (`mask`) that drive a selective
checkpoint/restart library (`ckpt`) and a small CLI (`cli`).
"""

from .adtape import DomainError, DualRef, Tape, UnknownNode, gradient
from .mask import (
    BadMagic,
    BadVersion,
    CriticalityMask,
    LengthMismatch,
    MaskFormatError,
    NonMonotonicRuns,
    TruncatedFile,
    decode,
    encode,
    from_flags,
    gather,
    load_mask_file,
    save_mask_file,
    scatter,
)
from .kernels import (
    KERNEL_IDS,
    IterationOverflow,
    KernelRun,
    KernelSpec,
    UnsupportedClass,
    build_kernel,
    new_run,
    reference_output,
    run_step,
    run_to_completion,
    verify,
)
from .scrutiny import (
    CriticalityReport,
    ImpactVector,
    IterationProbe,
    IterationRange,
    NoFloatSurface,
    ReconcileResult,
    VariableCriticality,
    analyze,
    criticality_csv,
    oracle_perturbation,
    oracle_read_tracking,
    reconcile,
)
from .ckpt import (
    CheckpointBundle,
    CheckpointPolicy,
    CorruptBundle,
    FaultSummary,
    IoError,
    MaskKernelMismatch,
    NoCheckpoint,
    fault_injection_trial,
    read_bundle,
    restart,
    storage_report,
    write_checkpoint,
)
from .viz import VizRequest, render

__version__ = "0.1.0"

__all__ = [
    "DomainError", "DualRef", "Tape", "UnknownNode", "gradient",
    "BadMagic", "BadVersion", "CriticalityMask", "LengthMismatch",
    "MaskFormatError", "NonMonotonicRuns", "TruncatedFile",
    "decode", "encode", "from_flags", "gather", "load_mask_file",
    "save_mask_file", "scatter",
    "KERNEL_IDS", "IterationOverflow", "KernelRun", "KernelSpec",
    "UnsupportedClass", "build_kernel", "new_run", "reference_output",
    "run_step", "run_to_completion", "verify",
    "CriticalityReport", "ImpactVector", "IterationProbe",
    "IterationRange", "NoFloatSurface", "ReconcileResult",
    "VariableCriticality", "analyze", "criticality_csv",
    "oracle_perturbation", "oracle_read_tracking", "reconcile",
    "CheckpointBundle", "CheckpointPolicy", "CorruptBundle",
    "FaultSummary", "IoError", "MaskKernelMismatch", "NoCheckpoint",
    "fault_injection_trial", "read_bundle", "restart", "storage_report",
    "write_checkpoint",
    "VizRequest", "render",
    "__version__",
]
