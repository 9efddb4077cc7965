"""Renderers for criticality maps.

A variable's per-element critical flags are drawn either as a flat strip
(1D variables, 80 cells per row) or as a stack of 2D slices taken from
the element grid.  Three formats share one geometry:

    ascii   '#' critical, '.' uncritical; slices separated by one blank line
    pgm     P2 graymap, critical 64, uncritical 255; slices stacked vertically
    csv     "index,flag" rows over the selected cells; flag 1 means critical

Indices in CSV output are the element's flat index in the full variable,
so a sliced view still names the real elements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

STRIP_WIDTH = 80
PGM_CRITICAL = 64
PGM_UNCRITICAL = 255


@dataclass(frozen=True)
class VizRequest:
    """What to draw: one variable's flags, projected and formatted."""

    kernel: str
    variable: str
    projection: str = "slice-stack"      # slice-stack | flat-strip
    slice_axis: Optional[int] = None
    slice_index: Optional[int] = None
    format: str = "ascii"                # ascii | pgm | csv


class BadProjection(ValueError):
    """The request does not reduce the variable to drawable 2D maps."""


def _project(flags: np.ndarray, shape, req: VizRequest):
    """Returns (maps, indexes): stacked 2D bool maps plus flat indexes."""
    arr = flags.reshape(shape)
    idx = np.arange(arr.size).reshape(shape)
    if req.projection == "flat-strip":
        return [arr.reshape(-1)], [idx.reshape(-1)]
    if req.projection != "slice-stack":
        raise BadProjection(f"unknown projection {req.projection!r}")
    if req.slice_axis is not None:
        ax = req.slice_axis
        if not -arr.ndim <= ax < arr.ndim:
            raise BadProjection(
                f"axis {ax} outside the {arr.ndim}-D element grid")
        if req.slice_index is not None:
            if not 0 <= req.slice_index < arr.shape[ax]:
                raise BadProjection(
                    f"index {req.slice_index} outside axis {ax} of size"
                    f" {arr.shape[ax]}")
            arr = np.take(arr, req.slice_index, axis=ax)
            idx = np.take(idx, req.slice_index, axis=ax)
        else:
            arr = np.moveaxis(arr, ax, 0)
            idx = np.moveaxis(idx, ax, 0)
    if arr.ndim == 1:
        return [arr], [idx]
    if arr.ndim == 2:
        return [arr], [idx]
    if arr.ndim == 3:
        return list(arr), list(idx)
    raise BadProjection(
        f"{arr.ndim}-D view needs --axis/--index to reach 2D maps")


def _rows(m: np.ndarray):
    return m.reshape(1, -1) if m.ndim == 1 else m


def _strip_rows(flat: np.ndarray):
    """Chunk a 1D flag row into strip lines of STRIP_WIDTH cells."""
    for a in range(0, flat.size, STRIP_WIDTH):
        yield flat[a:a + STRIP_WIDTH]


def render_ascii(flags, shape, req: VizRequest) -> str:
    maps, _ = _project(flags, shape, req)
    blocks = []
    for m in maps:
        if m.ndim == 1:
            lines = ["".join("#" if c else "." for c in row)
                     for row in _strip_rows(m)]
        else:
            lines = ["".join("#" if c else "." for c in row) for row in m]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def render_pgm(flags, shape, req: VizRequest) -> str:
    maps, _ = _project(flags, shape, req)
    rows = []
    for m in maps:
        if m.ndim == 1:
            for row in _strip_rows(m):
                if row.size < STRIP_WIDTH:
                    pad = np.zeros(STRIP_WIDTH, dtype=bool)
                    pad[:row.size] = row
                    row = pad
                rows.append(row)
        else:
            rows.extend(m)
    width = len(rows[0])
    body = "\n".join(
        " ".join(str(PGM_CRITICAL if c else PGM_UNCRITICAL) for c in row)
        for row in rows)
    return f"P2\n{width} {len(rows)}\n255\n{body}\n"


def render_csv(flags, shape, req: VizRequest) -> str:
    maps, idxs = _project(flags, shape, req)
    lines = ["index,flag"]
    for m, ix in zip(maps, idxs):
        for gi, c in zip(ix.reshape(-1), m.reshape(-1)):
            lines.append(f"{gi},{int(c)}")
    return "\n".join(lines) + "\n"


_RENDERERS = {"ascii": render_ascii, "pgm": render_pgm, "csv": render_csv}


def render(flags: np.ndarray, shape, req: VizRequest) -> str:
    try:
        fn = _RENDERERS[req.format]
    except KeyError:
        raise BadProjection(f"unknown format {req.format!r}") from None
    return fn(np.asarray(flags, dtype=bool), tuple(shape), req)
