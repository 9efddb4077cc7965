"""Selective checkpoint and restart driven by criticality masks.

A bundle holds one run's restart data: a manifest (kernel, iteration,
seed, creation ordinal, per-variable payload layout), every scalar in
full, and per variable only the elements the mask marks critical, packed
in run order as little-endian 8-byte values.  The run-length mask lives
next to the bundles as one standing `<kernel>.scrm` file per analysis,
not inside each bundle.

On disk a bundle is `<kernel>.<iteration>.ckpt`: a u32 length prefix,
the manifest as compact UTF-8 JSON, the scalar section, then the payload,
with the section offsets recorded in the manifest.  Restart picks the
newest bundle by creation ordinal, scatters the payload through the mask
(dropped float positions fill with 0.0, NaN poison, or the freshly
seeded values, by policy), and the resumed run must replay to a final
output bitwise equal to an uninterrupted one.
"""

from __future__ import annotations

import json
import math
import os
import random
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mask import CriticalityMask, encode, gather, load_mask_file, scatter
from .scrutiny import CriticalityReport, _unit_size
from .kernels import (
    KernelRun,
    KernelSpec,
    new_run,
    reference_output,
    restore,
    run_step,
    run_to_completion,
    snapshot,
)


class IoError(RuntimeError):
    """Filesystem-level failure while writing or reading bundles."""


class NoCheckpoint(FileNotFoundError):
    """The directory holds no bundle for the requested kernel."""


class CorruptBundle(ValueError):
    """Manifest and payload disagree, or the bundle cannot be parsed."""


class MaskKernelMismatch(ValueError):
    """Mask, report, or bundle belongs to a different kernel or layout."""


_LEN = struct.Struct("<I")
_SCALAR_N = struct.Struct("<I")
_SCALAR_HDR = struct.Struct("<HB")
_F64 = struct.Struct("<d")
_I64 = struct.Struct("<q")

LOCK_NAME = ".scrutinize.lock"


@dataclass(frozen=True)
class CheckpointPolicy:
    """How often to checkpoint and how many bundles to keep."""

    interval: int = 1
    versions_kept: int = 2

    def __post_init__(self):
        if self.interval < 1:
            raise ValueError(f"interval {self.interval} must be >= 1")
        if self.versions_kept < 1:
            raise ValueError(
                f"versions_kept {self.versions_kept} must be >= 1")


@dataclass(frozen=True)
class CheckpointBundle:
    """One decoded bundle: manifest dict, mask bytes, raw sections."""

    manifest: dict
    mask_file: bytes
    scalar_section: bytes
    payload: bytes


def _scalar_section(scalars: dict) -> bytes:
    out = [_SCALAR_N.pack(len(scalars))]
    for name, value in scalars.items():
        nb = name.encode("utf-8")
        if isinstance(value, bool):
            raise TypeError(f"scalar {name} is a bool")
        if isinstance(value, int):
            out.append(_SCALAR_HDR.pack(len(nb), 0) + nb + _I64.pack(value))
        else:
            out.append(_SCALAR_HDR.pack(len(nb), 1) + nb
                       + _F64.pack(float(value)))
    return b"".join(out)


def _parse_scalars(buf: bytes) -> dict:
    try:
        (n,) = _SCALAR_N.unpack_from(buf, 0)
        pos = _SCALAR_N.size
        out = {}
        for _ in range(n):
            ln, kind = _SCALAR_HDR.unpack_from(buf, pos)
            pos += _SCALAR_HDR.size
            name = buf[pos:pos + ln].decode("utf-8")
            pos += ln
            if kind == 0:
                (val,) = _I64.unpack_from(buf, pos)
            elif kind == 1:
                (val,) = _F64.unpack_from(buf, pos)
            else:
                raise ValueError(f"scalar kind {kind}")
            pos += 8
            out[name] = val
        if pos != len(buf):
            raise ValueError("trailing bytes in scalar section")
        return out
    except (struct.error, UnicodeDecodeError, ValueError) as e:
        raise CorruptBundle(f"bad scalar section: {e}") from e


def _pack_var(var, msk: CriticalityMask) -> bytes:
    if var.kind == "f8":
        return gather(msk, var.data).tobytes()
    flags = msk.flags()
    vals = np.asarray(var.data, dtype=np.int64)[flags]
    return vals.astype("<i8").tobytes()


def _bundle_name(kernel: str, iteration: int) -> str:
    return f"{kernel}.{iteration}.ckpt"


def _read_manifest(path: Path) -> dict:
    try:
        with open(path, "rb") as f:
            head = f.read(_LEN.size)
            if len(head) < _LEN.size:
                raise CorruptBundle(f"{path.name}: shorter than its prefix")
            (n,) = _LEN.unpack(head)
            raw = f.read(n)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if len(raw) < n:
        raise CorruptBundle(f"{path.name}: manifest truncated")
    try:
        man = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptBundle(f"{path.name}: manifest not parseable") from e
    for key in ("kernel", "iteration", "seed", "ordinal", "vars",
                "scalar_offset", "payload_offset", "payload_bytes"):
        if key not in man:
            raise CorruptBundle(f"{path.name}: manifest lacks {key!r}")
    return man


def _kernel_bundles(directory: Path, kernel: str):
    """(ordinal, path, manifest) for every bundle of `kernel`, unsorted."""
    out = []
    for p in directory.glob(f"{kernel}.*.ckpt"):
        man = _read_manifest(p)
        if man["kernel"] != kernel:
            raise MaskKernelMismatch(
                f"{p.name} claims kernel {man['kernel']!r}")
        out.append((int(man["ordinal"]), p, man))
    return out


class _DirLock:
    """Advisory single-writer lock: an O_EXCL marker file."""

    def __init__(self, directory: Path):
        self.path = directory / LOCK_NAME
        self._fd = None

    def __enter__(self):
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            os.write(self._fd, str(os.getpid()).encode())
        except FileExistsError as e:
            raise IoError(f"another writer holds {self.path}") from e
        except OSError as e:
            raise IoError(f"cannot lock {self.path}: {e}") from e
        return self

    def __exit__(self, *exc):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
            try:
                os.unlink(self.path)
            except OSError:
                pass
        return False


def write_checkpoint(run: KernelRun, report: CriticalityReport,
                     policy: CheckpointPolicy, directory) -> str:
    """Persist the run's critical elements; returns the bundle path.

    Also writes the standing `<kernel>.scrm` mask file when missing or
    stale, and drops the oldest bundles beyond `policy.versions_kept`.
    """
    spec = run.spec
    if report.kernel != spec.id:
        raise MaskKernelMismatch(
            f"report is for {report.kernel}, run is {spec.id}")
    if report.seed != run.seed:
        raise MaskKernelMismatch(
            f"report analyzed seed {report.seed}, run uses {run.seed}")
    if not 0 <= run.iter <= spec.loop_len:
        raise ValueError(f"iteration {run.iter} outside [0, {spec.loop_len}]")
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {directory}: {e}") from e

    with _DirLock(directory):
        existing = _kernel_bundles(directory, spec.id)
        ordinal = 1 + max((o for o, _, _ in existing), default=-1)

        chunks = []
        vars_meta = []
        pos = 0
        for name, vc in report.per_variable.items():
            blob = _pack_var(run.state[name], vc.mask)
            vars_meta.append(
                {"name": name, "count": vc.mask.n_critical, "offset": pos})
            chunks.append(blob)
            pos += len(blob)
        payload = b"".join(chunks)
        scal = _scalar_section(run.scalars)

        man = {
            "kernel": spec.id,
            "iteration": run.iter,
            "seed": run.seed,
            "ordinal": ordinal,
            "vars": vars_meta,
            "payload_bytes": len(payload),
        }
        # Offsets depend on the manifest's own length: fix them by
        # iterating until the encoding is stable (two passes suffice
        # unless a width digit rolls over).
        man["scalar_offset"] = 0
        man["payload_offset"] = 0
        for _ in range(4):
            raw = json.dumps(man, sort_keys=True,
                             separators=(",", ":")).encode("utf-8")
            so = _LEN.size + len(raw)
            po = so + len(scal)
            if man["scalar_offset"] == so and man["payload_offset"] == po:
                break
            man["scalar_offset"] = so
            man["payload_offset"] = po
        else:
            raise RuntimeError("manifest offsets failed to stabilize")

        mask_bytes = encode(report.masks())
        mask_path = directory / f"{spec.id}.scrm"
        path = directory / _bundle_name(spec.id, run.iter)
        try:
            if (not mask_path.exists()
                    or mask_path.read_bytes() != mask_bytes):
                mask_path.write_bytes(mask_bytes)
            tmp = path.with_suffix(".ckpt.tmp")
            with open(tmp, "wb") as f:
                f.write(_LEN.pack(len(raw)))
                f.write(raw)
                f.write(scal)
                f.write(payload)
            os.replace(tmp, path)
        except OSError as e:
            raise IoError(f"cannot write {path}: {e}") from e

        keep = sorted(existing, key=lambda t: t[0], reverse=True)
        for _, old, _ in keep[policy.versions_kept - 1:]:
            if old != path:
                try:
                    old.unlink()
                except OSError as e:
                    raise IoError(f"cannot rotate {old}: {e}") from e
    return str(path)


def read_bundle(path) -> CheckpointBundle:
    """Decode one bundle file plus its standing mask file."""
    path = Path(path)
    man = _read_manifest(path)
    try:
        blob = path.read_bytes()
        mask_file = (path.parent / f"{man['kernel']}.scrm").read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    so, po = man["scalar_offset"], man["payload_offset"]
    if not (_LEN.size <= so <= po <= len(blob)):
        raise CorruptBundle(f"{path.name}: section offsets out of order")
    payload = blob[po:]
    if len(payload) != man["payload_bytes"]:
        raise CorruptBundle(
            f"{path.name}: payload holds {len(payload)} bytes,"
            f" manifest says {man['payload_bytes']}")
    return CheckpointBundle(
        manifest=man,
        mask_file=mask_file,
        scalar_section=blob[so:po],
        payload=payload,
    )


def _masks_for(spec: KernelSpec, directory: Path) -> dict[str, CriticalityMask]:
    mask_path = directory / f"{spec.id}.scrm"
    if not mask_path.exists():
        raise NoCheckpoint(f"no mask file {mask_path}")
    masks = {m.name: m for m in load_mask_file(mask_path)}
    for d in spec.checkpoint_vars:
        m = masks.get(d.name)
        if m is None:
            raise MaskKernelMismatch(
                f"{spec.id}.scrm lacks variable {d.name!r}")
        if m.total != d.total:
            raise MaskKernelMismatch(
                f"{spec.id}.{d.name}: mask spans {m.total}, variable"
                f" holds {d.total}")
    return masks


def restart(directory, spec: KernelSpec, fill_policy: str = "poison",
            ) -> KernelRun:
    """Resume from the newest bundle; replay must match bitwise.

    Critical elements come from the payload; dropped float positions are
    zeroed, NaN-poisoned, or left at their freshly seeded values
    according to `fill_policy` ("zero" | "poison" | "keep").  Integer
    variables are always saved whole, so fill never applies to them.
    """
    directory = Path(directory)
    if fill_policy not in ("zero", "keep", "poison"):
        raise ValueError(f"unknown fill policy {fill_policy!r}")
    if not directory.is_dir():
        raise NoCheckpoint(f"{directory} is not a directory")
    found = _kernel_bundles(directory, spec.id)
    if not found:
        raise NoCheckpoint(f"no {spec.id} bundle under {directory}")
    found.sort(key=lambda t: t[0])
    _, path, man = found[-1]
    masks = _masks_for(spec, directory)
    bundle = read_bundle(path)

    if not 0 <= man["iteration"] <= spec.loop_len:
        raise CorruptBundle(
            f"{path.name}: iteration {man['iteration']} outside"
            f" [0, {spec.loop_len}]")
    meta = {v["name"]: v for v in man["vars"]}
    if set(meta) != {d.name for d in spec.checkpoint_vars}:
        raise MaskKernelMismatch(
            f"{path.name}: variables {sorted(meta)} do not match {spec.id}")

    run = new_run(spec, int(man["seed"]))
    payload = bundle.payload
    for d in spec.checkpoint_vars:
        msk = masks[d.name]
        ent = meta[d.name]
        if ent["count"] != msk.n_critical:
            raise CorruptBundle(
                f"{path.name}: {d.name} stores {ent['count']} elements,"
                f" mask keeps {msk.n_critical}")
        a = ent["offset"]
        b = a + 8 * ent["count"]
        if b > len(payload):
            raise CorruptBundle(
                f"{path.name}: {d.name} payload overruns the bundle")
        raw = payload[a:b]
        var = run.state[d.name]
        if var.kind == "f8":
            packed = np.frombuffer(raw, dtype="<f8")
            out = scatter(msk, packed, out=var.data, fill=fill_policy)
            var.data = out.tolist()
        else:
            vals = np.frombuffer(raw, dtype="<i8")
            if msk.n_critical != msk.total:
                raise CorruptBundle(
                    f"{path.name}: integer variable {d.name} stored"
                    " partially")
            var.data = [int(v) for v in vals]

    run.scalars = _parse_scalars(bundle.scalar_section)
    for s in spec.scalars:
        if s.name not in run.scalars:
            raise CorruptBundle(f"{path.name}: scalar {s.name!r} missing")
    if spec.loop_index_name not in run.scalars:
        raise CorruptBundle(
            f"{path.name}: loop index {spec.loop_index_name!r} missing")
    run.iter = int(man["iteration"])
    run.output = None
    if run.iter == spec.loop_len:
        run.output = spec.impl.verify_fast(run.data(), run.scalars)
    return run


def storage_report(spec: KernelSpec, report: CriticalityReport) -> dict:
    """Bytes with and without the mask, and the payload saving fraction.

    `saved_fraction` is computed on variable payloads alone; the byte
    totals additionally count the scalar section both sides and the
    standing mask file amortized over one checkpoint per iteration.
    """
    if report.kernel != spec.id:
        raise MaskKernelMismatch(
            f"report is for {report.kernel}, spec is {spec.id}")
    full = sum(d.total for d in spec.checkpoint_vars) * 8
    kept = sum(vc.mask.n_critical for vc in report.per_variable.values()) * 8
    run = new_run(spec, report.seed)
    scal = len(_scalar_section(run.scalars))
    aux = math.ceil(len(encode(report.masks())) / max(1, spec.loop_len))
    return {
        "original_bytes": full + scal,
        "optimized_bytes": kept + scal + aux,
        "saved_fraction": 1.0 - kept / full,
    }


@dataclass(frozen=True)
class FaultSummary:
    """Outcome of a corruption campaign against one element class."""

    kernel: str
    target: str
    trials: int
    passed: int
    failed: int
    skipped: bool
    failures: tuple[str, ...] = ()


_FLOAT_CORRUPTION = 1.0e9   # far outside every kernel's working range
_INT_CORRUPTION = 1 << 30


def fault_injection_trial(spec: KernelSpec, report: CriticalityReport,
                          target: str, n_trials: int,
                          rng_seed: int = 2026) -> FaultSummary:
    """Corrupt random elements of one class mid-run and grade the output.

    Each trial restores a clean state at a random iteration, overwrites
    one randomly chosen element of the target class with an out-of-range
    constant, runs to completion, and compares the output bitwise with
    the uninterrupted reference.  "uncritical_random" trials pass when
    the output is untouched, "critical_random" trials pass when it
    differs.  A kernel with no elements in the class skips.
    """
    if target not in ("uncritical_random", "critical_random"):
        raise ValueError(f"unknown target {target!r}")
    if report.kernel != spec.id:
        raise MaskKernelMismatch(
            f"report is for {report.kernel}, spec is {spec.id}")
    want_critical = target == "critical_random"

    pools = []
    for name, vc in report.per_variable.items():
        flags = report.unit_flags(name)
        units = np.flatnonzero(flags if want_critical else ~flags)
        if units.size:
            pools.append((name, vc.unit_size, units))
    if not pools:
        return FaultSummary(spec.id, target, 0, 0, 0, True)

    ref = struct.pack("<d", reference_output(spec, report.seed))
    run = new_run(spec, report.seed)
    snaps = []
    for _ in range(spec.loop_len):
        snaps.append(snapshot(run))
        run_step(spec, run)

    weights = [p[2].size for p in pools]
    rng = random.Random(rng_seed)
    passed = failed = 0
    failures = []
    for _ in range(n_trials):
        name, unit, units = rng.choices(pools, weights=weights)[0]
        u = int(units[rng.randrange(units.size)])
        it = rng.randrange(spec.loop_len)
        restore(run, snaps[it])
        var = run.state[name]
        if var.kind == "f8":
            for slot in range(u * unit, (u + 1) * unit):
                var.data[slot] = _FLOAT_CORRUPTION
        else:
            var.data[u] = _INT_CORRUPTION
        run_to_completion(spec, run)
        changed = struct.pack("<d", run.output) != ref
        if changed == want_critical:
            passed += 1
        else:
            failed += 1
            if len(failures) < 8:
                failures.append(f"{name}[{u}] at iteration {it}")
    return FaultSummary(spec.id, target, n_trials, passed, failed, False,
                        tuple(failures))
