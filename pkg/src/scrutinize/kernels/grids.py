"""Box-stencil pair: two structured-grid solvers over a padded 5-field box.

State is one variable u of shape (12, 13, 13, 5): 12 planes in k, padded to
13 in j and i, 5 field components.  Each iteration runs a Jacobi sweep over
the interior (k,j,i in 1..10) with a 7-point neighbor stencil plus a cyclic
component coupling.  The pad planes j==12 and i==12 exist only to square the
allocation; nothing ever reads them, so per (k,j) row the live span is a
single 60-real run (12 i-positions x 5 components).

The two instances differ in their mixing constants and in how components
couple (+1 vs +2 cyclic shift), mirroring how the two originals share one
access pattern with different physics.
"""

from __future__ import annotations

from .base import (IDX_W, LOG_SHIFT, KernelImpl, VarDecl, weight_table)

_NK, _NJ, _NI, _NM = 12, 13, 13, 5
_DK, _DJ, _DI = _NJ * _NI * _NM, _NI * _NM, _NM
TOTAL = _NK * _NJ * _NI * _NM  # 10140


def flat(k: int, j: int, i: int, m: int) -> int:
    return ((k * _NJ + j) * _NI + i) * _NM + m


class BoxStencilKernel(KernelImpl):
    loop_len = 8
    index_name = "step"

    # subclass constants
    A = 0.0
    B = 0.0
    CN = ()        # 6 neighbor weights + 1 cyclic weight
    MSHIFT = 1
    SALT = 0

    def __init__(self):
        cyc = self.MSHIFT
        self._idx = [flat(k, j, i, m)
                     for k in range(1, 11) for j in range(1, 11)
                     for i in range(1, 11) for m in range(_NM)]
        self._idxm = [flat(k, j, i, (m + cyc) % _NM)
                      for k in range(1, 11) for j in range(1, 11)
                      for i in range(1, 11) for m in range(_NM)]
        self._vidx = [flat(k, j, i, m)
                      for k in range(12) for j in range(12)
                      for i in range(12) for m in range(_NM)]
        wt = weight_table(TOTAL, self.SALT)
        self._vw = [wt[t] for t in self._vidx]

    def var_decls(self):
        return (VarDecl("u", (_NK, _NJ, _NI, _NM), "input-state",
                        salt=self.SALT),)

    def step(self, st, sc, it, seed, ops):
        u = st["u"]
        a, b = self.A, self.B
        c0, c1, c2, c3, c4, c5, c6 = self.CN
        dk, dj, di = _DK, _DJ, _DI
        new = [a * u[t] + b * (c0 * u[t - dk] + c1 * u[t + dk]
                               + c2 * u[t - dj] + c3 * u[t + dj]
                               + c4 * u[t - di] + c5 * u[t + di]
                               + c6 * u[tm])
               for t, tm in zip(self._idx, self._idxm)]
        for t, v in zip(self._idx, new):
            u[t] = v

    def verify_out(self, st, sc, ops):
        u = st["u"]
        terms = [ops.ln(u[t] + LOG_SHIFT) * w
                 for t, w in zip(self._vidx, self._vw)]
        return ops.acc(terms) + IDX_W * sc[self.index_name]


class BTKernel(BoxStencilKernel):
    id = "BT"
    A = 0.86
    B = 0.02
    CN = (1.05, 0.95, 1.1, 0.9, 1.15, 0.85, 0.75)
    MSHIFT = 1
    SALT = 0x17


class SPKernel(BoxStencilKernel):
    id = "SP"
    A = 0.82
    B = 0.025
    CN = (0.9, 1.1, 0.95, 1.05, 0.8, 1.2, 0.7)
    MSHIFT = 2
    SALT = 0x23
