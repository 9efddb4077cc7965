"""Element criticality analysis for checkpoint variables.

An element of a checkpoint variable is *uncritical* when the verified
output carries exactly zero derivative with respect to it, established by
recording K early iterations (update plus verification) on a tape and
reading the adjoint of every lifted element.  Zero here means bitwise
0.0: an element is only dropped when no computational path reaches the
output at all, so the split is a structural fact of the access pattern,
not a threshold call.

Two oracles cross-check the tape: a read-tracking pass that wraps every
variable and records which indices the same iterations actually touch,
and a perturbation probe that bumps one element before the first
iteration and reruns to completion.  `reconcile` compares their verdicts
with the derivative classification.

Complex-paired variables (FT's layouts) are classified per pair: a pair
is uncritical only when both the real and imaginary slots carry zero
derivative, and reported counts are in pairs while the stored mask spans
the underlying reals.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .adtape import Tape, gradient
from .mask import CriticalityMask, from_flags
from .kernels import (
    FLOAT_OPS,
    KernelSpec,
    TapeOps,
    new_run,
    reference_output,
    run_step,
    run_to_completion,
)

DEFAULT_SEED = 42


class IterationRange(ValueError):
    """Requested analysis depth is outside [1, loop_len]."""


class NoFloatSurface(RuntimeError):
    """The kernel exposes no float elements to differentiate (IS)."""


def _unit_size(spec: KernelSpec) -> int:
    # FT state is complex pairs laid out as adjacent reals; one logical
    # element spans two slots and is kept or dropped as a whole.
    return 2 if spec.id == "FT" else 1


@dataclass(frozen=True)
class ImpactVector:
    """Per-slot derivative magnitudes, max-|.| across analyzed iterations."""

    variable: str
    derivs: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "derivs", np.asarray(self.derivs, dtype=np.float64))


@dataclass(frozen=True)
class VariableCriticality:
    """Classification of one variable.

    Counts are in logical element units (a complex pair counts once);
    the mask always spans the raw flat storage so it can gather and
    scatter checkpoint payloads directly.
    """

    mask: CriticalityMask
    unit_size: int
    n_critical: int
    n_uncritical: int
    uncritical_rate: float

    @property
    def total(self) -> int:
        return self.n_critical + self.n_uncritical


@dataclass(frozen=True)
class CriticalityReport:
    kernel: str
    seed: int
    iterations_analyzed: int
    analyzed: bool
    per_variable: dict[str, VariableCriticality]
    critical_scalars: tuple[str, ...]
    impacts: dict[str, ImpactVector]

    def unit_flags(self, name: str) -> np.ndarray:
        """Per-element critical flags (pairs collapsed to one entry)."""
        vc = self.per_variable[name]
        f = vc.mask.flags()
        return f[:: vc.unit_size].copy()

    def masks(self) -> list[CriticalityMask]:
        return [vc.mask for vc in self.per_variable.values()]


def _classify(name, total_units, unit, crit_units):
    n_crit = int(np.count_nonzero(crit_units))
    n_unc = total_units - n_crit
    real_flags = np.repeat(crit_units, unit) if unit > 1 else crit_units
    return VariableCriticality(
        mask=from_flags(name, real_flags),
        unit_size=unit,
        n_critical=n_crit,
        n_uncritical=n_unc,
        uncritical_rate=n_unc / total_units,
    )


def _all_critical_report(spec, k_iterations, seed):
    unit = _unit_size(spec)
    per = {}
    for d in spec.checkpoint_vars:
        per[d.name] = _classify(
            d.name, d.total // unit, unit,
            np.ones(d.total // unit, dtype=bool))
    return CriticalityReport(
        kernel=spec.id,
        seed=seed,
        iterations_analyzed=k_iterations,
        analyzed=False,
        per_variable=per,
        critical_scalars=_scalar_names(spec),
        impacts={},
    )


def _scalar_names(spec) -> tuple[str, ...]:
    return (spec.loop_index_name,) + tuple(s.name for s in spec.scalars)


def _taped_iteration(spec, run):
    """Record one update+verification; return per-variable adjoint arrays.

    The run itself is left untouched: elements are lifted into fresh leaf
    lists and the step mutates only those.
    """
    impl = spec.impl
    tape = Tape()
    ops = TapeOps(tape)
    lifted = {}
    ids = []
    spans = []
    pos = 0
    for name, var in run.state.items():
        if var.kind != "f8":
            raise NoFloatSurface(
                f"{spec.id}.{name} holds {var.kind}, not differentiable")
        duals = [ops.lift(v) for v in var.data]
        lifted[name] = duals
        ids.extend(d.node for d in duals)
        spans.append((name, pos, pos + len(duals)))
        pos += len(duals)
    sc = dict(run.scalars)
    impl.step(lifted, sc, run.iter, run.seed, ops)
    sc[spec.loop_index_name] = run.iter + 1
    out = impl.verify_out(lifted, sc, ops)
    g = np.asarray(gradient(tape, out, ids), dtype=np.float64)
    return {name: g[a:b] for name, a, b in spans}, out.value


def analyze(spec: KernelSpec, k_iterations: int,
            seed: int = DEFAULT_SEED) -> CriticalityReport:
    """Classify every checkpoint element over the first K iterations.

    Flags accumulate by union, so deeper analysis can only move elements
    from uncritical to critical.  Kernels without an analyzable float
    surface come back all-critical by fiat.
    """
    if not 1 <= k_iterations <= spec.loop_len:
        raise IterationRange(
            f"{spec.id}: k_iterations {k_iterations} outside"
            f" [1, {spec.loop_len}]")
    if not spec.analyzed:
        return _all_critical_report(spec, k_iterations, seed)

    run = new_run(spec, seed)
    crit = {d.name: np.zeros(d.total, dtype=bool) for d in spec.checkpoint_vars}
    imax = {d.name: np.zeros(d.total) for d in spec.checkpoint_vars}
    for _ in range(k_iterations):
        grads, _ = _taped_iteration(spec, run)
        for name, g in grads.items():
            crit[name] |= g != 0.0
            np.maximum(imax[name], np.abs(g), out=imax[name])
        run_step(spec, run)

    unit = _unit_size(spec)
    per = {}
    for d in spec.checkpoint_vars:
        cf = crit[d.name]
        if unit > 1:
            cf = cf[0::2] | cf[1::2]
        per[d.name] = _classify(d.name, d.total // unit, unit, cf)
    return CriticalityReport(
        kernel=spec.id,
        seed=seed,
        iterations_analyzed=k_iterations,
        analyzed=True,
        per_variable=per,
        critical_scalars=_scalar_names(spec),
        impacts={name: ImpactVector(name, v) for name, v in imax.items()},
    )


class _TrackedList:
    """List proxy that records which indices are read."""

    __slots__ = ("_d", "_reads")

    def __init__(self, data, reads):
        self._d = data
        self._reads = reads

    def __len__(self):
        return len(self._d)

    def __getitem__(self, i):
        if type(i) is slice:
            self._reads.update(range(*i.indices(len(self._d))))
        else:
            if i < 0:
                i += len(self._d)
            self._reads.add(i)
        return self._d[i]

    def __iter__(self):
        self._reads.update(range(len(self._d)))
        return iter(self._d)

    def __setitem__(self, i, v):
        self._d[i] = v


def oracle_read_tracking(spec: KernelSpec, k_iterations: int,
                         seed: int = DEFAULT_SEED) -> dict[str, frozenset]:
    """Never-read element indices over the same window analysis sees.

    Wraps every variable in a read-recording proxy, runs K updates each
    followed by the verification read, and returns per variable the set
    of element indices (pair indices for paired variables) no iteration
    touched.
    """
    if not 1 <= k_iterations <= spec.loop_len:
        raise IterationRange(
            f"{spec.id}: k_iterations {k_iterations} outside"
            f" [1, {spec.loop_len}]")
    impl = spec.impl
    run = new_run(spec, seed)
    reads = {name: set() for name in run.state}
    for _ in range(k_iterations):
        wrapped = {name: _TrackedList(var.data, reads[name])
                   for name, var in run.state.items()}
        sc = dict(run.scalars)
        impl.step(wrapped, sc, run.iter, run.seed, FLOAT_OPS)
        run.iter += 1
        run.scalars[spec.loop_index_name] = run.iter
        sc[spec.loop_index_name] = run.iter
        impl.verify_out(wrapped, sc, FLOAT_OPS)

    unit = _unit_size(spec)
    never = {}
    for d in spec.checkpoint_vars:
        got = reads[d.name]
        if unit > 1:
            never[d.name] = frozenset(
                p for p in range(d.total // 2)
                if 2 * p not in got and 2 * p + 1 not in got)
        else:
            never[d.name] = frozenset(set(range(d.total)) - got)
    return never


def _bits(x: float) -> bytes:
    return struct.pack("<d", x)


def oracle_perturbation(spec: KernelSpec, variable: str, element_index: int,
                        seed: int = DEFAULT_SEED) -> str:
    """Bump one element before iteration 0 and compare final outputs.

    Returns "no_effect" when the completed run's output is bitwise equal
    to the unperturbed reference, "effect" otherwise.  Paired variables
    take pair indices and both slots are bumped; integer variables are
    bumped by 1.
    """
    ref = reference_output(spec, seed)
    run = new_run(spec, seed)
    var = run.state[variable]
    unit = _unit_size(spec) if var.kind == "f8" else 1
    n_units = var.total // unit
    if not 0 <= element_index < n_units:
        raise IndexError(
            f"{spec.id}.{variable}[{element_index}] outside [0, {n_units})")
    if var.kind == "f8":
        for r in range(unit):
            var.data[element_index * unit + r] += 1.0
    else:
        var.data[element_index] += 1
    run_to_completion(spec, run)
    same = _bits(run.output) == _bits(ref)
    return "no_effect" if same else "effect"


@dataclass(frozen=True)
class ReconcileResult:
    ok: bool
    mismatches: tuple[str, ...]


def reconcile(report: CriticalityReport, read_oracle: dict,
              perturbation_samples) -> ReconcileResult:
    """Check oracle verdicts against the derivative classification.

    Never-read elements must be classified uncritical (the converse is
    allowed in general, though these kernels achieve equality), and every
    perturbation sample must land on the side its flag predicts.
    `perturbation_samples` is an iterable of (variable, element_index,
    outcome) triples with outcome in {"effect", "no_effect"}.
    """
    bad = []
    flags = {}
    for name, never in read_oracle.items():
        f = flags.setdefault(name, report.unit_flags(name))
        for idx in sorted(never):
            if f[idx]:
                bad.append(f"{name}[{idx}]: never read but critical")
    for name, idx, outcome in perturbation_samples:
        f = flags.setdefault(name, report.unit_flags(name))
        expect = "effect" if f[idx] else "no_effect"
        if outcome != expect:
            side = "critical" if f[idx] else "uncritical"
            bad.append(f"{name}[{idx}]: {side} but perturbation saw {outcome}")
    return ReconcileResult(ok=not bad, mismatches=tuple(bad))


class IterationProbe:
    """Gradient and pointwise evaluation of one iteration's output scalar.

    Fixes the state reached after `iteration` plain updates, then exposes
    f(state + bumps) = verify(step(state + bumps)) and its tape gradient,
    for derivative spot checks against finite differences.
    """

    def __init__(self, spec: KernelSpec, iteration: int,
                 seed: int = DEFAULT_SEED):
        if not 0 <= iteration < spec.loop_len:
            raise IterationRange(
                f"{spec.id}: iteration {iteration} outside"
                f" [0, {spec.loop_len})")
        self.spec = spec
        self.iteration = iteration
        run = new_run(spec, seed)
        for _ in range(iteration):
            run_step(spec, run)
        self._run = run
        self._grads = None

    def gradient(self) -> dict[str, np.ndarray]:
        if self._grads is None:
            self._grads, _ = _taped_iteration(self.spec, self._run)
        return self._grads

    def element(self, name: str, slot: int) -> float:
        """Current value of one raw slot at this probe's iteration."""
        return self._run.state[name].data[slot]

    def value(self, bumps=()) -> float:
        """Evaluate the iteration's output with per-slot deltas applied."""
        spec = self.spec
        run = self._run
        st = {name: list(var.data) for name, var in run.state.items()}
        for name, slot, delta in bumps:
            st[name][slot] += delta
        sc = dict(run.scalars)
        spec.impl.step(st, sc, run.iter, run.seed, FLOAT_OPS)
        sc[spec.loop_index_name] = run.iter + 1
        return spec.impl.verify_out(st, sc, FLOAT_OPS)


def criticality_csv(reports) -> str:
    """Counts table as CSV, one row per variable, rates to 3 figures."""
    lines = ["kernel,variable,total,critical,uncritical,uncritical_rate"]
    for rep in reports:
        for name, vc in rep.per_variable.items():
            lines.append(
                f"{rep.kernel},{name},{vc.total},{vc.n_critical},"
                f"{vc.n_uncritical},{vc.uncritical_rate:.3g}")
    return "\n".join(lines) + "\n"
