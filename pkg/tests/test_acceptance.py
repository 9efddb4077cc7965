"""Acceptance gate: one test per criterion, at its stated tolerance.

Each test prints a `criterion N:` detail line per sub-check and a final
`ACCEPTANCE N PASS` line; a failed assertion leaves the criterion marked
FAILED by pytest itself.
"""

import math
import random
import struct
import time
from pathlib import Path

import numpy as np
import pytest

from scrutinize.ckpt import (
    CheckpointPolicy,
    fault_injection_trial,
    restart,
    storage_report,
    write_checkpoint,
)
from scrutinize.kernels import (
    build_kernel,
    new_run,
    restore,
    run_to_completion,
    verify,
)
from scrutinize.mask import decode, encode, from_flags, gather, scatter
from scrutinize.scrutiny import (
    IterationProbe,
    NoFloatSurface,
    analyze,
    criticality_csv,
)
from scrutinize.viz import VizRequest, render

KIDS = ("BT", "SP", "CG", "MG", "LU", "FT", "EP", "IS")
GOLDENS = Path(__file__).parent / "goldens"

# Frozen per-variable classification: total units, uncritical units.
TABLE = {
    ("BT", "u"): (10140, 1500),
    ("SP", "u"): (10140, 1500),
    ("MG", "u"): (46480, 7176),
    ("CG", "x"): (1402, 2),
    ("LU", "rho_i"): (2028, 300),
    ("LU", "qs"): (2028, 300),
    ("LU", "rsd"): (10140, 1500),
    ("LU", "u"): (10140, 1628),
    ("FT", "y"): (266240, 4096),
}


def bits(x):
    return struct.pack("<d", x)


def test_criterion_1_classification_counts(suite):
    """Exact uncritical/total counts for every listed variable, computed
    fresh for all eight kernels in under 60 seconds, deterministically."""
    t0 = time.perf_counter()
    for kid in KIDS:
        suite.reports[kid] = analyze(build_kernel(kid), 2)
    elapsed = time.perf_counter() - t0

    for (kid, var), (total, unc) in sorted(TABLE.items()):
        vc = suite.reports[kid].per_variable[var]
        assert (vc.total, vc.n_uncritical) == (total, unc), (kid, var)
        print(f"criterion 1: {kid} {var} {vc.n_uncritical}/{vc.total}"
              " uncritical — exact")

    # The residual grid has no normative count; it must match its own
    # read-tracking oracle exactly instead.
    mg_flags = suite.reports["MG"].unit_flags("r")
    mg_unc = set(np.flatnonzero(~mg_flags).tolist())
    assert mg_unc == set(suite.oracle("MG")["r"])
    print(f"criterion 1: MG r {len(mg_unc)}/46480 uncritical —"
          " equals its read oracle")

    again = analyze(build_kernel("BT"), 2)
    assert np.array_equal(again.unit_flags("u"),
                          suite.reports["BT"].unit_flags("u"))
    print(f"criterion 1: repeat analysis identical; all 8 kernels"
          f" in {elapsed:.1f}s (budget 60s)")
    assert elapsed < 60.0
    print("ACCEPTANCE 1 PASS — classification counts exact,"
          f" {elapsed:.1f}s < 60s")


# Listed payload-saving targets, percent; MG is held to +-1 point while
# its residual's uncritical rate sits inside the 22.4-22.7% band.
SAVINGS = {"BT": 14.8, "SP": 14.8, "MG": 19.1, "CG": 0.1,
           "LU": 15.7, "FT": 1.5}


def test_criterion_2_storage_savings(suite):
    best = 0.0
    for kid in KIDS:
        sr = storage_report(suite.specs[kid], suite.report(kid))
        pct = 100.0 * sr["saved_fraction"]
        best = max(best, pct)
        if kid not in SAVINGS:
            print(f"criterion 2: {kid} saves {pct:.2f}% (no target)")
            continue
        target = SAVINGS[kid]
        if kid == "MG":
            r = suite.report("MG").per_variable["r"].uncritical_rate
            assert 0.224 <= r <= 0.227, "residual rate left the band"
            tol = 1.0
            print(f"criterion 2: MG saves {pct:.2f}% vs {target}%"
                  f" (+-{tol}; r rate {100 * r:.2f}% in band)")
        else:
            tol = 0.5
            print(f"criterion 2: {kid} saves {pct:.2f}% vs {target}%"
                  f" (+-{tol})")
        assert abs(pct - target) <= tol, (kid, pct, target)
    assert best >= 14.8
    print(f"ACCEPTANCE 2 PASS — payload savings on target,"
          f" max {best:.2f}% >= 14.8%")


def test_criterion_3_restart_transparency(suite, tmp_path):
    cases = 0
    t0 = time.perf_counter()
    for kid in KIDS:
        spec = suite.specs[kid]
        report = suite.report(kid)
        snaps = suite.snaps(kid)
        ref = bits(suite.reference(kid))
        for b in (0, spec.loop_len // 2, spec.loop_len - 1):
            where = tmp_path / kid / str(b)
            run = restore(new_run(spec, 42), snaps[b])
            write_checkpoint(run, report, CheckpointPolicy(), where)
            for fill in ("zero", "keep", "poison"):
                resumed = restart(where, spec, fill_policy=fill)
                assert resumed.iter == b
                run_to_completion(spec, resumed)
                assert bits(resumed.output) == ref, (kid, b, fill)
                assert verify(spec, resumed)
                cases += 1
        print(f"criterion 3: {kid} 9/9 restart cases bitwise-equal")
    elapsed = time.perf_counter() - t0
    assert cases == 72
    assert elapsed < 120.0
    print(f"ACCEPTANCE 3 PASS — 72/72 restarts bitwise,"
          f" {elapsed:.1f}s < 120s")


def test_criterion_4_fault_injection(suite):
    for kid in KIDS:
        spec = suite.specs[kid]
        report = suite.report(kid)
        for target in ("uncritical_random", "critical_random"):
            out = fault_injection_trial(spec, report, target, 100)
            if out.skipped:
                assert kid in ("EP", "IS") and target == "uncritical_random"
                print(f"criterion 4: {kid} {target} skipped (class empty)")
                continue
            assert out.trials == 100
            assert out.failed == 0, out.failures
            assert out.passed == 100
            print(f"criterion 4: {kid} {target} 100/100 passed")
    print("ACCEPTANCE 4 PASS — all corruptions graded correctly,"
          " zero exceptions")


def _fd_pools(probe):
    """(variable, slot, gradient) candidates with nonzero derivative."""
    pools = []
    for name, g in probe.gradient().items():
        idx = np.flatnonzero(g)
        if idx.size:
            pools.append((name, idx, g))
    return pools


def test_criterion_5_derivative_validity(suite):
    worst_overall = 0.0
    for kid in KIDS:
        if kid == "IS":
            with pytest.raises(NoFloatSurface):
                IterationProbe(suite.specs[kid], 0).gradient()
            print("criterion 5: IS has no float surface (by design)")
            continue
        spec = suite.specs[kid]
        rng = random.Random(hash(kid) & 0xFFFF)
        worst = 0.0
        checked = 0
        seen = set()
        for j in (0, 1):
            probe = IterationProbe(spec, j)
            pools = _fd_pools(probe)
            weights = [p[1].size for p in pools]
            for _ in range(50):
                name, idx, g = rng.choices(pools, weights=weights)[0]
                slot = int(idx[rng.randrange(idx.size)])
                x0 = probe.element(name, slot)
                h = 1e-6 * max(1.0, abs(x0))
                fd = (probe.value([(name, slot, h)])
                      - probe.value([(name, slot, -h)])) / (2.0 * h)
                rel = abs(fd - g[slot]) / abs(g[slot])
                assert rel < 1e-6, (kid, name, slot, j, rel)
                worst = max(worst, rel)
                checked += 1
                seen.add((j, name, slot))
        assert checked >= 100
        worst_overall = max(worst_overall, worst)
        print(f"criterion 5: {kid} {checked} samples"
              f" ({len(seen)} distinct), worst rel {worst:.2e}")

        # Exact set equality between the zero-derivative and never-read
        # classifications, per variable.
        never = suite.oracle(kid)
        if suite.report(kid).analyzed:
            for name, never_set in never.items():
                flags = suite.report(kid).unit_flags(name)
                zero_set = set(np.flatnonzero(~flags).tolist())
                assert zero_set == set(never_set), (kid, name)
        else:
            # No per-element analysis: the oracle must confirm that
            # nothing is ever left unread, matching all-critical.
            assert all(not s for s in never.values()), kid
        print(f"criterion 5: {kid} zero-derivative set == never-read set")
    print(f"ACCEPTANCE 5 PASS — finite differences agree"
          f" (worst rel {worst_overall:.2e} < 1e-6), oracle sets equal")


def test_criterion_6_mask_roundtrips():
    rng = random.Random(20260819)
    roundtrips = 0

    def check(masks):
        nonlocal roundtrips
        back = decode(encode(masks))
        assert len(back) == len(masks)
        for a, b in zip(masks, back):
            assert (a.name, a.total, a.runs) == (b.name, b.total, b.runs)
        roundtrips += len(masks)

    check([from_flags("empty", np.zeros(64, dtype=bool))])
    check([from_flags("full", np.ones(64, dtype=bool))])
    check([from_flags("none", np.zeros(0, dtype=bool))])
    for pos in (0, 31, 63):
        f = np.zeros(64, dtype=bool)
        f[pos] = True
        check([from_flags(f"single{pos}", f)])
    while roundtrips < 1000:
        batch = []
        for v in range(rng.randrange(1, 5)):
            total = rng.randrange(1, 400)
            p = rng.choice((0.02, 0.3, 0.5, 0.7, 0.98))
            flags = np.array([rng.random() < p for _ in range(total)])
            batch.append(from_flags(f"v{v}", flags))
        check(batch)
    print(f"criterion 6: {roundtrips} encode/decode identities"
          " (empty, full, single-element included)")

    specials = (0.0, -0.0, 1e-300, -1e300, math.pi, 2.0 ** 53)
    pairs = 0
    for i in range(1000):
        total = rng.randrange(1, 300)
        flags = np.array([rng.random() < 0.4 for _ in range(total)])
        data = [rng.choice(specials) if rng.random() < 0.1
                else rng.uniform(-1e9, 1e9) for _ in range(total)]
        msk = from_flags("d", flags)
        packed = gather(msk, data)
        fill = ("zero", "poison", "keep")[i % 3]
        base = [rng.uniform(-1, 1) for _ in range(total)]
        out = scatter(msk, packed, out=base if fill == "keep" else None,
                      fill=fill)
        for pos in np.flatnonzero(flags).tolist():
            assert bits(out[pos]) == bits(data[pos])
        pairs += 1
    assert pairs >= 1000
    print(f"criterion 6: {pairs} gather/scatter pairs identical on"
          " critical indices")
    print("ACCEPTANCE 6 PASS — mask format roundtrips exact")


FIGURES = (
    ("bt_u_m0.txt", "BT", "u", "slice-stack", 3, 0),
    ("mg_u_strip.txt", "MG", "u", "flat-strip", None, None),
    ("cg_x_strip.txt", "CG", "x", "flat-strip", None, None),
    ("lu_u_m4.txt", "LU", "u", "slice-stack", 3, 4),
    ("ft_y_k64.txt", "FT", "y", "slice-stack", 2, 64),
    ("ft_y_k0.txt", "FT", "y", "slice-stack", 2, 0),
)


def test_criterion_7_figure_goldens(suite):
    for fname, kid, var, proj, ax, sidx in FIGURES:
        spec = suite.specs[kid]
        shape = spec.var(var).shape
        if kid == "FT":
            shape = shape[:-1]
        req = VizRequest(kernel=kid, variable=var, projection=proj,
                         slice_axis=ax, slice_index=sidx, format="ascii")
        text = render(suite.report(kid).unit_flags(var), shape, req)
        golden = (GOLDENS / fname).read_bytes()
        assert text.encode("utf-8") == golden, fname
        print(f"criterion 7: {fname} byte-identical ({len(golden)} bytes)")
    table = criticality_csv([suite.report(k) for k in KIDS])
    golden = (GOLDENS / "table1.csv").read_bytes()
    assert table.encode("utf-8") == golden
    print(f"criterion 7: table1.csv byte-identical ({len(golden)} bytes)")
    print("ACCEPTANCE 7 PASS — all committed goldens reproduced")
