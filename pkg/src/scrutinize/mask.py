"""Run-length criticality masks and the .scrm auxiliary-file format.

A mask partitions one flat checkpoint variable into critical elements
(saved) and uncritical elements (dropped), stored as maximal half-open
[start, end) runs of critical indices.  The on-disk container is:

    magic "SCRM" | version u32 = 1 | var_count u32
    per variable:
        name_len u16 | name UTF-8 | total u64 | run_count u64
        run_count x (start u64, end u64)

All integers little-endian.  Runs must be strictly ascending, non-empty,
non-adjacent (they are maximal) and end within [0, total].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SCRM"
VERSION = 1

_HEAD = struct.Struct("<4sI")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_RUN = struct.Struct("<QQ")


class MaskFormatError(ValueError):
    """Base for malformed .scrm content."""


class BadMagic(MaskFormatError):
    pass


class BadVersion(MaskFormatError):
    pass


class TruncatedFile(MaskFormatError):
    pass


class NonMonotonicRuns(MaskFormatError):
    """Runs empty, overlapping, adjacent, out of order, or out of bounds."""


class LengthMismatch(ValueError):
    """An array handed to gather/scatter has the wrong length."""


@dataclass(frozen=True)
class CriticalityMask:
    """Critical/uncritical split of one flat variable of `total` elements."""

    name: str
    total: int
    runs: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        prev_end = None
        for s, e in self.runs:
            if not 0 <= s < e <= self.total:
                raise NonMonotonicRuns(f"run ({s}, {e}) outside [0, {self.total}]")
            if prev_end is not None and s <= prev_end:
                # equality would mean two runs that should have been merged
                raise NonMonotonicRuns(f"run ({s}, {e}) not past {prev_end}")
            prev_end = e

    @property
    def n_critical(self) -> int:
        return sum(e - s for s, e in self.runs)

    @property
    def n_uncritical(self) -> int:
        return self.total - self.n_critical

    @property
    def saved_fraction(self) -> float:
        """Payload bytes dropped over payload bytes of the full variable."""
        return self.n_uncritical / self.total if self.total else 0.0

    def flags(self) -> np.ndarray:
        """Expand back to a boolean array, True = critical."""
        out = np.zeros(self.total, dtype=bool)
        for s, e in self.runs:
            out[s:e] = True
        return out


def from_flags(name: str, flags) -> CriticalityMask:
    """Build a mask of maximal runs from per-element criticality flags."""
    f = np.asarray(flags, dtype=bool)
    if f.ndim != 1:
        raise ValueError("flags must be one-dimensional")
    edges = np.flatnonzero(f[1:] != f[:-1]) + 1
    bounds = np.concatenate(([0], edges, [f.size]))
    runs = tuple(
        (int(bounds[i]), int(bounds[i + 1]))
        for i in range(len(bounds) - 1)
        if f.size and f[bounds[i]]
    )
    return CriticalityMask(name, int(f.size), runs)


def gather(msk: CriticalityMask, data) -> np.ndarray:
    """Pack the critical elements of `data` in run order."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.shape != (msk.total,):
        raise LengthMismatch(
            f"data length {arr.shape} != mask total {msk.total}")
    if not msk.runs:
        return np.empty(0, dtype=np.float64)
    return np.concatenate([arr[s:e] for s, e in msk.runs])


def scatter(msk: CriticalityMask, packed, out=None, fill: str = "poison") -> np.ndarray:
    """Unpack critical elements; uncritical positions follow `fill`.

    fill "zero" writes 0.0, "poison" writes NaN (a read of a dropped
    element then taints the output — the misclassification tripwire), and
    "keep" leaves whatever `out` already holds, so it requires `out`.
    """
    packed = np.asarray(packed, dtype=np.float64)
    if packed.shape != (msk.n_critical,):
        raise LengthMismatch(
            f"packed length {packed.shape} != critical count {msk.n_critical}")
    if fill == "keep":
        if out is None:
            raise ValueError("fill='keep' needs an existing array")
        res = np.array(out, dtype=np.float64, copy=True)
        if res.shape != (msk.total,):
            raise LengthMismatch(
                f"out length {res.shape} != mask total {msk.total}")
    elif fill == "zero":
        res = np.zeros(msk.total, dtype=np.float64)
    elif fill == "poison":
        res = np.full(msk.total, np.nan, dtype=np.float64)
    else:
        raise ValueError(f"unknown fill policy {fill!r}")
    pos = 0
    for s, e in msk.runs:
        res[s:e] = packed[pos:pos + (e - s)]
        pos += e - s
    return res


def encode(masks) -> bytes:
    """Serialize masks into one .scrm byte string."""
    parts = [_HEAD.pack(MAGIC, VERSION), _U32.pack(len(masks))]
    for m in masks:
        name = m.name.encode("utf-8")
        parts.append(_U16.pack(len(name)))
        parts.append(name)
        parts.append(_U64.pack(m.total))
        parts.append(_U64.pack(len(m.runs)))
        for s, e in m.runs:
            parts.append(_RUN.pack(s, e))
    return b"".join(parts)


class _Cursor:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, st: struct.Struct):
        end = self.pos + st.size
        if end > len(self.buf):
            raise TruncatedFile(
                f"needed {st.size} bytes at offset {self.pos}, file ends at "
                f"{len(self.buf)}")
        vals = st.unpack_from(self.buf, self.pos)
        self.pos = end
        return vals

    def take_bytes(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            raise TruncatedFile(
                f"needed {n} bytes at offset {self.pos}, file ends at "
                f"{len(self.buf)}")
        out = self.buf[self.pos:end]
        self.pos = end
        return out


def decode(buf: bytes) -> list[CriticalityMask]:
    """Parse one .scrm byte string, validating structure and run order."""
    cur = _Cursor(buf)
    magic, version = cur.take(_HEAD)
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise BadVersion(f"unsupported mask file version {version}")
    (var_count,) = cur.take(_U32)
    masks = []
    for _ in range(var_count):
        (name_len,) = cur.take(_U16)
        name = cur.take_bytes(name_len).decode("utf-8")
        (total,) = cur.take(_U64)
        (run_count,) = cur.take(_U64)
        runs = tuple(cur.take(_RUN) for _ in range(run_count))
        masks.append(CriticalityMask(name, total, runs))
    if cur.pos != len(buf):
        raise MaskFormatError(
            f"{len(buf) - cur.pos} trailing bytes after the last variable")
    return masks


def save_mask_file(path, masks) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(masks))


def load_mask_file(path) -> list[CriticalityMask]:
    with open(path, "rb") as fh:
        return decode(fh.read())
