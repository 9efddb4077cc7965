"""Embarrassingly-parallel Gaussian-tally kernel.

No array element carries differentiable state between iterations in any
interesting way: each iteration draws 64 fresh uniform pairs from a
counter-based stream keyed by (seed, iteration, counter), converts the
accepted ones to Gaussian deviates, accumulates their sums into two
scalars, and bumps one of ten magnitude-bin counters.  Replay after a
restart needs no generator state - the stream is a pure function of its
key - and every bin is folded into verification, so the whole q table
is live on every iteration.
"""

from __future__ import annotations

import math

from .base import (IDX_W, LOG_SHIFT, KernelImpl, ScalarDecl, VarDecl,
                   seeded_u64, weight_table)

NPAIRS = 64
NBINS = 10
_SALT_PAIR = 0x8085


class EPKernel(KernelImpl):
    id = "EP"
    loop_len = 10
    index_name = "k"
    analyzed = False   # no per-element float state worth scrutinizing

    _SALT_Q = 0x83

    def __init__(self):
        self._vw = weight_table(NBINS, self._SALT_Q)

    def var_decls(self):
        return (VarDecl("q", (NBINS,), "accumulator", salt=self._SALT_Q),)

    def scalar_decls(self):
        return (ScalarDecl("sx", "float", 0.0),
                ScalarDecl("sy", "float", 0.0))

    def step(self, st, sc, it, seed, ops):
        q = st["q"]
        sx = sc["sx"]
        sy = sc["sy"]
        salt = _SALT_PAIR ^ ((it + 1) * 0x9E3779B9)
        for j in range(NPAIRS):
            u1 = seeded_u64(seed, salt, 2 * j) / 18446744073709551616.0
            u2 = seeded_u64(seed, salt, 2 * j + 1) / 18446744073709551616.0
            gx = 2.0 * u1 - 1.0
            gy = 2.0 * u2 - 1.0
            t = gx * gx + gy * gy
            if not 1e-12 < t < 0.999:
                continue
            f = math.sqrt(-2.0 * math.log(t) / t)
            gx *= f
            gy *= f
            sx += 0.05 * gx
            sy += 0.05 * gy
            b = int(gx if gx >= -gx else -gx)
            by = int(gy if gy >= -gy else -gy)
            if by > b:
                b = by
            if b > 9:
                b = 9
            q[b] = q[b] + 1.0
        sc["sx"] = sx
        sc["sy"] = sy

    def verify_out(self, st, sc, ops):
        q = st["q"]
        c = LOG_SHIFT
        terms = [ops.ln(q[i] + c) * w for i, w in enumerate(self._vw)]
        terms.append(ops.ln(sc["sx"] * sc["sx"] * 0.05 + 1.0) * 0.7)
        terms.append(ops.ln(sc["sy"] * sc["sy"] * 0.05 + 1.0) * 0.9)
        return ops.acc(terms) + IDX_W * sc[self.index_name]
