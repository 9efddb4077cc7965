"""Shared machinery for the miniature kernel suite.

Each kernel is a fixed-shape state (checkpoint variables plus a few
scalars), a deterministic per-iteration update, and a scalar verification
reduction.  One generic code path runs the update over plain floats, tape
refs, or read-tracking wrappers alike; kernels may add a plain-float fast
path, which tests hold to bitwise agreement with the generic one.

Verification reductions are sums of w * ln(x + 2^-10) terms accumulated
with math.fsum in plain mode.  The log keeps every element's derivative
near unit scale while the total stays small, so central differences at
the mandated step h = 1e-6*max(1,|x|) can resolve each gradient to better
than 1e-6 relative — a sum of squares over 5e5 elements cannot do that in
f64.  The shift keeps a zeroed or poisoned element inside the domain
instead of crashing the run it is meant to fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from ..adtape import DualRef, Tape

LOG_SHIFT = 0.0009765625  # 2^-10, exactly representable
IDX_W = 0.0078125         # 2^-7, loop-index coupling weight
INIT_LO = 0.575           # initial data range centers E[ln x] near zero,
INIT_HI = 1.5             # keeping verification sums small (see above)

_M64 = (1 << 64) - 1


class IterationOverflow(RuntimeError):
    """run_step called on a run that already finished its loop."""


class UnsupportedClass(ValueError):
    """Only the S problem class has defined shapes."""


def mix64(z: int) -> int:
    """splitmix64 finalizer; the only randomness source in the suite."""
    z = (z + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def seeded_u64(seed: int, salt: int, idx: int) -> int:
    return mix64(mix64(seed ^ (salt * 0x9E3779B97F4A7C15)) ^ idx)


def seeded_unit(seed: int, salt: int, idx: int) -> float:
    """Deterministic float in [INIT_LO, INIT_HI)."""
    u = seeded_u64(seed, salt, idx) >> 11  # 53 bits
    return INIT_LO + (INIT_HI - INIT_LO) * (u / 9007199254740992.0)


def init_values(seed: int, salt: int, n: int) -> list[float]:
    return [seeded_unit(seed, salt, i) for i in range(n)]


def weight_table(n: int, salt: int) -> list[float]:
    """Fixed per-position weights in [1, 2); part of the kernel definition."""
    return [1.0 + ((i * 2654435761 + salt * 40503) & 63) * 0.015625
            for i in range(n)]


class FloatOps:
    """Plain-f64 arithmetic; `acc` is exactly rounded (see module docstring)."""

    tape = None
    lift = staticmethod(lambda v: v)
    ln = staticmethod(lambda x: math.log(x))
    sqrt = staticmethod(lambda x: math.sqrt(x))
    exp = staticmethod(lambda x: math.exp(x))

    @staticmethod
    def fmax(a, b):
        return a if a >= b else b

    @staticmethod
    def acc(terms):
        return math.fsum(terms)


FLOAT_OPS = FloatOps()


class TapeOps:
    """Same surface, but every float op lands on the tape."""

    def __init__(self, tape: Tape):
        self.tape = tape
        self.lift = tape.leaf

    @staticmethod
    def ln(x):
        return x.ln() if type(x) is DualRef else math.log(x)

    @staticmethod
    def sqrt(x):
        return x.sqrt() if type(x) is DualRef else math.sqrt(x)

    @staticmethod
    def exp(x):
        return x.exp() if type(x) is DualRef else math.exp(x)

    @staticmethod
    def fmax(a, b):
        if type(a) is DualRef and type(b) is DualRef:
            return a.fmax(b)
        va = a.value if type(a) is DualRef else a
        vb = b.value if type(b) is DualRef else b
        return a if va >= vb else b

    @staticmethod
    def acc(terms):
        # sequential left fold; the tape orders adjoint flow, not fsum
        it = iter(terms)
        try:
            out = next(it)
        except StopIteration:
            return 0.0
        for t in it:
            out = out + t
        return out


@dataclass(frozen=True)
class VarDecl:
    """Static description of one checkpoint variable."""

    name: str
    shape: tuple[int, ...]
    role: str            # input-state | residual | accumulator | index-table
    kind: str = "f8"     # f8 floats or i8 exact integers
    salt: int = 0

    @property
    def total(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n


@dataclass(frozen=True)
class ScalarDecl:
    name: str
    kind: str            # int | float
    init: float = 0.0


@dataclass
class Variable:
    """One runtime checkpoint variable: declaration plus flat data."""

    name: str
    shape: tuple[int, ...]
    role: str
    kind: str
    data: list

    @property
    def total(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n


@dataclass(frozen=True)
class KernelSpec:
    """Identity and static layout of one kernel."""

    id: str
    loop_len: int
    loop_index_name: str
    checkpoint_vars: tuple[VarDecl, ...]
    scalars: tuple[ScalarDecl, ...]
    analyzed: bool       # False: no float element surface, all-critical by fiat
    impl: object = field(repr=False, compare=False, default=None)

    def var(self, name: str) -> VarDecl:
        for v in self.checkpoint_vars:
            if v.name == name:
                return v
        raise KeyError(name)


@dataclass
class KernelRun:
    """Mutable run state: variables, scalars, progress, final output."""

    spec: KernelSpec
    seed: int
    state: dict[str, Variable]
    scalars: dict[str, float]
    iter: int = 0
    output: Optional[float] = None

    def data(self) -> dict[str, list]:
        return {name: v.data for name, v in self.state.items()}


class KernelImpl:
    """Behavior of one kernel; subclasses fill in the hooks."""

    id: str = ""
    loop_len: int = 0
    index_name: str = "it"
    analyzed: bool = True

    def var_decls(self) -> tuple[VarDecl, ...]:
        raise NotImplementedError

    def scalar_decls(self) -> tuple[ScalarDecl, ...]:
        return ()

    def init_var(self, decl: VarDecl, seed: int) -> list:
        return init_values(seed, decl.salt, decl.total)

    # hooks: st maps variable name -> flat list, sc maps scalar name -> value
    def step(self, st, sc, it, seed, ops) -> None:
        raise NotImplementedError

    def step_fast(self, st, sc, it, seed) -> None:
        self.step(st, sc, it, seed, FLOAT_OPS)

    def verify_out(self, st, sc, ops):
        raise NotImplementedError

    def verify_fast(self, st, sc) -> float:
        return self.verify_out(st, sc, FLOAT_OPS)

    def make_spec(self) -> KernelSpec:
        return KernelSpec(
            id=self.id,
            loop_len=self.loop_len,
            loop_index_name=self.index_name,
            checkpoint_vars=tuple(self.var_decls()),
            scalars=tuple(self.scalar_decls()),
            analyzed=self.analyzed,
            impl=self,
        )


def new_run(spec: KernelSpec, seed: int) -> KernelRun:
    impl = spec.impl
    state = {
        d.name: Variable(d.name, d.shape, d.role, d.kind, impl.init_var(d, seed))
        for d in spec.checkpoint_vars
    }
    scalars = {spec.loop_index_name: 0}
    for s in spec.scalars:
        scalars[s.name] = s.init
    return KernelRun(spec=spec, seed=seed, state=state, scalars=scalars)


def run_step(spec: KernelSpec, run: KernelRun, tape: Optional[Tape] = None) -> KernelRun:
    """Advance one iteration; with a tape, every float op is recorded."""
    if run.iter >= spec.loop_len:
        raise IterationOverflow(
            f"{spec.id}: iteration {run.iter} is past loop_len {spec.loop_len}")
    st = run.data()
    if tape is None:
        spec.impl.step_fast(st, run.scalars, run.iter, run.seed)
    else:
        ops = TapeOps(tape)
        lifted = {
            name: ([ops.lift(v) for v in data] if run.state[name].kind == "f8"
                   else data)
            for name, data in st.items()
        }
        sc = dict(run.scalars)
        spec.impl.step(lifted, sc, run.iter, run.seed, ops)
        for name, data in lifted.items():
            if run.state[name].kind == "f8":
                run.state[name].data = [
                    d.value if type(d) is DualRef else d for d in data]
        for key, v in sc.items():
            run.scalars[key] = v.value if type(v) is DualRef else v
    run.iter += 1
    run.scalars[spec.loop_index_name] = run.iter
    if run.iter == spec.loop_len:
        run.output = spec.impl.verify_fast(run.data(), run.scalars)
    return run


def run_to_completion(spec: KernelSpec, run: KernelRun) -> KernelRun:
    while run.iter < spec.loop_len:
        run_step(spec, run)
    return run


_REFERENCE_CACHE: dict[tuple[str, int], float] = {}


def reference_output(spec: KernelSpec, seed: int) -> float:
    """Final output of an uninterrupted run; memoized per (kernel, seed)."""
    key = (spec.id, seed)
    if key not in _REFERENCE_CACHE:
        run = run_to_completion(spec, new_run(spec, seed))
        _REFERENCE_CACHE[key] = run.output
    return _REFERENCE_CACHE[key]


def verify(spec: KernelSpec, run: KernelRun) -> bool:
    """Margin check of a completed run against the seeded reference."""
    if run.output is None:
        raise ValueError(f"{spec.id}: run has not completed its loop")
    ref = reference_output(spec, run.seed)
    err = abs(run.output - ref)
    if math.isnan(err):
        return False  # NaN output: a dropped element was read (poison tripwire)
    return err <= 1e-8 * max(1.0, abs(ref))


def snapshot(run: KernelRun):
    return (run.iter,
            {name: list(v.data) for name, v in run.state.items()},
            dict(run.scalars),
            run.output)


def restore(run: KernelRun, snap) -> KernelRun:
    it, data, scalars, output = snap
    run.iter = it
    for name, values in data.items():
        run.state[name].data = list(values)
    run.scalars = dict(scalars)
    run.output = output
    return run
