"""Integer bucket-sort kernel: exact arithmetic, no float surface.

key_array holds 65536 integer keys (14-bit initially, drifting upward
by a small bounded per-position addend each iteration); bucket_ptrs is
a 512-entry running bucket occupancy table.  Each iteration histograms
the keys by their 512-way bucket, advances the pointers, performs a
stable counting sort, then order-checks a stride of key pairs to tally
a passed-verification counter.

Every quantity is an exact integer well below 2^53, so the verification
output - a weighted integer checksum cast to float - is exact, and a
replay either matches bitwise or differs, never drifts.  There is no
differentiable state: criticality is total by construction.
"""

from __future__ import annotations

from .base import KernelImpl, ScalarDecl, VarDecl, seeded_u64

NKEYS = 65536
NBUCKETS = 512
_SALT_K = 0x91
_SALT_B = 0x97


class ISKernel(KernelImpl):
    id = "IS"
    loop_len = 6
    index_name = "it"
    analyzed = False   # integer kernel: nothing to differentiate

    def var_decls(self):
        return (VarDecl("key_array", (NKEYS,), "input-state", kind="i8",
                        salt=_SALT_K),
                VarDecl("bucket_ptrs", (NBUCKETS,), "accumulator", kind="i8",
                        salt=_SALT_B))

    def scalar_decls(self):
        return (ScalarDecl("passed_verification", "int", 0),)

    def init_var(self, decl, seed):
        if decl.name == "key_array":
            return [seeded_u64(seed, decl.salt, e) & 0x3FFF
                    for e in range(NKEYS)]
        return [seeded_u64(seed, decl.salt, b) & 0xFF
                for b in range(NBUCKETS)]

    def step(self, st, sc, it, seed, ops):
        keys = st["key_array"]
        bp = st["bucket_ptrs"]
        hist = [0] * NBUCKETS
        for e in range(NKEYS):
            hist[(keys[e] >> 5) & 511] += 1
        for b in range(NBUCKETS):
            bp[b] = bp[b] + hist[b]
        pos = [0] * NBUCKETS
        s = 0
        for b in range(NBUCKETS):
            pos[b] = s
            s += hist[b]
        out = [0] * NKEYS
        base = (it * 2654435761) & 0xFFFFFFFF
        for e in range(NKEYS):
            k = keys[e]
            b = (k >> 5) & 511
            out[pos[b]] = k + ((base + e * 40503) & 0x3FF)
            pos[b] += 1
        keys[:] = out
        ok = 1
        for t in range(0, NKEYS - 256, 256):
            if ((keys[t] >> 5) & 511) > ((keys[t + 256] >> 5) & 511):
                ok = 0
                break
        sc["passed_verification"] = sc["passed_verification"] + ok

    def verify_out(self, st, sc, ops):
        keys = st["key_array"]
        bp = st["bucket_ptrs"]
        chk1 = 0
        for e in range(NKEYS):
            chk1 += keys[e] * (1 + (e & 63))
        chk2 = 0
        for b in range(NBUCKETS):
            chk2 += bp[b] * (1 + (b & 31))
        total = (chk1 * 3 + chk2 * 5
                 + sc["passed_verification"] * 7 + sc[self.index_name] * 11)
        return float(total)  # exact: total stays far below 2^53
