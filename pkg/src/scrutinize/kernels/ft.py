"""Spectral-evolution kernel: complex planes with running checksums.

y has shape (64, 64, 65, 2): 64x64 pencils of 65 complex points stored
as interleaved (re, im) reals, row-major.  Only the first 64 points of
each pencil participate; the spare top layer at third-index 64 pads the
transform length and is never touched.  The live pairs are therefore
strided: within each pencil, 64 consecutive pairs followed by one dead
pair.

Each iteration applies a fixed positive 2x2 mixing to every live pair
(a mild rotation-with-decay), then samples 1024 pairs on a fixed
odd-stride orbit and folds their weighted sums into one of six re/im
checksum slots of sums, selected by iteration index mod 6.  Slots
beyond the loop range are still read by verification, which folds in
every live real plus all checksums.
"""

from __future__ import annotations

from .base import (IDX_W, LOG_SHIFT, KernelImpl, VarDecl, weight_table)

SHAPE = (64, 64, 65, 2)
TOTAL = 64 * 64 * 65 * 2      # 532480 reals
PAIRS = 64 * 64 * 65          # 266240 dcomplex elements
LIVE_PAIRS = 64 * 64 * 64     # 262144
NSUMS = 12


class FTKernel(KernelImpl):
    id = "FT"
    loop_len = 4
    index_name = "kt"

    _SALT_Y = 0x71
    _SALT_S = 0x73

    def __init__(self):
        # live pair flats: every pencil keeps 64 of its 65 points
        self._live = [(row * 65 + k) * 2
                      for row in range(64 * 64) for k in range(64)]
        # 9973 is odd, hence invertible mod 2^18: all 1024 samples distinct
        self._samp = [self._live[(j * 9973 + 17) % LIVE_PAIRS]
                      for j in range(1024)]
        self._ws = weight_table(1024, 0x79)
        wy = weight_table(TOTAL, self._SALT_Y)
        self._vw_y = [wy[t] for t in self._live]      # weight of the re slot
        self._vw_y1 = [wy[t + 1] for t in self._live]  # and of the im slot
        self._vw_s = weight_table(NSUMS, self._SALT_S)

    def var_decls(self):
        return (VarDecl("y", SHAPE, "input-state", salt=self._SALT_Y),
                VarDecl("sums", (6, 2), "accumulator", salt=self._SALT_S))

    def step(self, st, sc, it, seed, ops):
        y = st["y"]
        live = self._live
        new_re = [0.93 * y[t] + 0.055 * y[t + 1] for t in live]
        new_im = [0.94 * y[t + 1] + 0.045 * y[t] for t in live]
        for t, vr, vi in zip(live, new_re, new_im):
            y[t] = vr
            y[t + 1] = vi
        cre = ops.acc([y[s] * w for s, w in zip(self._samp, self._ws)])
        cim = ops.acc([y[s + 1] * w for s, w in zip(self._samp, self._ws)])
        sums = st["sums"]
        b = 2 * (it % 6)
        sums[b] = sums[b] + cre * 0.001
        sums[b + 1] = sums[b + 1] + cim * 0.001

    def verify_out(self, st, sc, ops):
        y = st["y"]
        sums = st["sums"]
        c = LOG_SHIFT
        kt = sc[self.index_name]
        # Constant baseline per term keeps the half-million-term sum small
        # enough that its rounding stays below finite-difference resolution.
        # Derivatives are unaffected.
        by = 0.0036 - 0.0122 * kt
        terms = []
        for t, wr, wi in zip(self._live, self._vw_y, self._vw_y1):
            terms.append((ops.ln(y[t] + c) - by) * wr)
            terms.append((ops.ln(y[t + 1] + c) - by) * wi)
        terms += [ops.ln(sums[i] + c) * w
                  for i, w in enumerate(self._vw_s)]
        return ops.acc(terms) + IDX_W * kt
