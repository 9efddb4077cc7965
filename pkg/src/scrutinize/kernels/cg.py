"""Conjugate-gradient inner solve over a fixed sparse SPD operator.

The variable x holds 1400 live reals plus 2 alignment slots that no
phase touches.  Each outer iteration seeds the solver with the current
x, runs three CG steps against a fixed symmetric diagonally-dominant
matrix (ring links i<->i+1 and long links i<->i+37, negative
off-diagonals), then writes back a normalized square of the solution:

    x'[i] = (z[i]^2 + 1/4) / (mean(z^2) + 1/4)

The square keeps x' strictly positive whatever sign z takes, and the
normalization pins its scale, so repeated iterations neither decay nor
blow up.  The final residual norm is kept as a scalar and folded into
the verification output.

The matrix is part of the kernel definition (fixed internal salt), not
of the seeded data, so access structure never depends on the seed.
"""

from __future__ import annotations

from .base import (IDX_W, LOG_SHIFT, KernelImpl, ScalarDecl, VarDecl,
                   mix64, weight_table)

NA = 1400
TOTAL = 1402
_MSALT = 0xA11CE


def _matrix():
    """Diag and the two symmetric link-weight tables."""
    def h(tag, i):
        return (mix64((tag << 32) ^ mix64(_MSALT ^ i)) >> 11) / 9007199254740992.0

    diag = [2.6 + 0.4 * h(1, i) for i in range(NA)]
    ring = [0.15 + 0.1 * h(2, i) for i in range(NA)]   # i <-> (i+1) % NA
    far = [0.05 + 0.05 * h(3, i) for i in range(NA)]   # i <-> (i+37) % NA
    return diag, ring, far


class CGKernel(KernelImpl):
    id = "CG"
    loop_len = 10
    index_name = "it"

    _SALT_X = 0x47

    def __init__(self):
        diag, ring, far = _matrix()
        # per-row view: 4 neighbor columns with shared edge weights
        self._rows = [
            (diag[i],
             ring[i], (i + 1) % NA,
             ring[(i - 1) % NA], (i - 1) % NA,
             far[i], (i + 37) % NA,
             far[(i - 37) % NA], (i - 37) % NA)
            for i in range(NA)
        ]
        self._vw = weight_table(TOTAL, self._SALT_X)[:NA]

    def var_decls(self):
        return (VarDecl("x", (TOTAL,), "input-state", salt=self._SALT_X),)

    def scalar_decls(self):
        return (ScalarDecl("rnorm2", "float", 0.0),)

    def _matvec(self, p):
        return [d * p[i]
                - (w1 * p[c1] + w2 * p[c2] + w3 * p[c3] + w4 * p[c4])
                for i, (d, w1, c1, w2, c2, w3, c3, w4, c4)
                in enumerate(self._rows)]

    def step(self, st, sc, it, seed, ops):
        x = st["x"]
        r = [x[i] for i in range(NA)]   # x reads stay inside [0, NA)
        p = list(r)
        z = None
        rho = ops.acc([ri * ri for ri in r])
        for _ in range(3):
            q = self._matvec(p)
            pq = ops.acc([pi * qi for pi, qi in zip(p, q)])
            alpha = rho / pq
            if z is None:
                z = [alpha * pi for pi in p]
            else:
                z = [zi + alpha * pi for zi, pi in zip(z, p)]
            r = [ri - alpha * qi for ri, qi in zip(r, q)]
            rho2 = ops.acc([ri * ri for ri in r])
            beta = rho2 / rho
            rho = rho2
            p = [ri + beta * pi for ri, pi in zip(r, p)]
        m2 = ops.acc([zi * zi for zi in z]) * (1.0 / NA)
        s = 1.0 / (m2 + 0.25)
        # Damped writeback.  z carries no usable sign, so it enters through
        # its square, normalized by the mean square to stay bounded.  The
        # 0.7 leak keeps each element's own derivative near 0.7 even where
        # z_i crosses zero, and the small z weight bounds how much rounding
        # of the shared reductions (alpha, beta, s) can bleed into every
        # element at once — both needed for finite-difference checks of the
        # per-element gradients to resolve at h ~ 1e-6.
        for i in range(NA):
            x[i] = 0.7 * x[i] + 0.05 * ((z[i] * z[i] + 0.25) * s)
        sc["rnorm2"] = rho

    def verify_out(self, st, sc, ops):
        x = st["x"]
        c = LOG_SHIFT
        terms = [ops.ln(x[i] + c) * w for i, w in enumerate(self._vw)]
        terms.append(ops.ln(sc["rnorm2"] * 0.00390625 + 1.0) * 0.5)
        return ops.acc(terms) + IDX_W * sc[self.index_name]
