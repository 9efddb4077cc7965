"""Kernel suite behavior: shapes, determinism, replay, taped equivalence."""

import math
import struct

import pytest
from hypothesis import given, strategies as st

from scrutinize.adtape import Tape
from scrutinize.scrutiny import oracle_read_tracking
from scrutinize.kernels import (
    FLOAT_OPS,
    IterationOverflow,
    UnsupportedClass,
    build_kernel,
    new_run,
    reference_output,
    restore,
    run_step,
    run_to_completion,
    snapshot,
    verify,
)

KIDS = ("BT", "SP", "CG", "MG", "LU", "FT", "EP", "IS")


def bits(x):
    return struct.pack("<d", x)


# Element totals of every checkpoint variable, by kernel.
TOTALS = {
    "BT": {"u": 10140},
    "SP": {"u": 10140},
    "CG": {"x": 1402},
    "MG": {"u": 46480, "r": 46480},
    "LU": {"u": 10140, "rsd": 10140, "rho_i": 2028, "qs": 2028},
    "FT": {"y": 532480, "sums": 12},   # raw f64 slots; pairs are halved
    "EP": {"q": 10},
    "IS": {"key_array": 65536, "bucket_ptrs": 512},
}

SHAPES = {
    ("BT", "u"): (12, 13, 13, 5),
    ("SP", "u"): (12, 13, 13, 5),
    ("CG", "x"): (1402,),
    ("MG", "u"): (46480,),
    ("MG", "r"): (46480,),
    ("LU", "u"): (12, 13, 13, 5),
    ("LU", "rsd"): (12, 13, 13, 5),
    ("LU", "rho_i"): (12, 13, 13),
    ("LU", "qs"): (12, 13, 13),
    ("FT", "y"): (64, 64, 65, 2),
    ("FT", "sums"): (6, 2),
    ("EP", "q"): (10,),
    ("IS", "key_array"): (65536,),
    ("IS", "bucket_ptrs"): (512,),
}


@pytest.mark.parametrize("kid", KIDS)
def test_shape_fidelity(kid):
    spec = build_kernel(kid)
    got = {d.name: d.total for d in spec.checkpoint_vars}
    assert got == TOTALS[kid]
    for d in spec.checkpoint_vars:
        assert d.shape == SHAPES[(kid, d.name)]
        prod = 1
        for s in d.shape:
            prod *= s
        assert prod == d.total
    run = new_run(spec, 3)
    for d in spec.checkpoint_vars:
        assert len(run.state[d.name].data) == d.total


@pytest.mark.parametrize("kid", KIDS)
def test_roles_and_kinds(kid):
    spec = build_kernel(kid)
    for d in spec.checkpoint_vars:
        assert d.role in ("input-state", "residual", "accumulator")
        assert d.kind in ("f8", "i8")
    assert spec.loop_len >= 4
    assert spec.loop_index_name


def test_build_kernel_ids():
    assert build_kernel("bt").id == "BT"
    assert build_kernel("Ft").id == "FT"
    with pytest.raises(KeyError):
        build_kernel("XX")
    with pytest.raises(UnsupportedClass):
        build_kernel("BT", "A")


@pytest.mark.parametrize("kid", KIDS)
def test_determinism_and_replay(kid, suite):
    spec = suite.specs[kid]
    ref = suite.reference(kid)
    again = run_to_completion(spec, new_run(spec, 42)).output
    assert bits(again) == bits(ref)
    other = run_to_completion(spec, new_run(spec, 43)).output
    assert bits(other) != bits(ref)
    # replay from a mid-run snapshot reproduces the tail bitwise
    mid = spec.loop_len // 2
    run = new_run(spec, 42)
    for _ in range(mid):
        run_step(spec, run)
    snap = snapshot(run)
    out1 = run_to_completion(spec, run).output
    out2 = run_to_completion(spec, restore(run, snap)).output
    assert bits(out1) == bits(out2) == bits(ref)


def _one_taped_vs_plain(spec):
    a = new_run(spec, 42)
    b = new_run(spec, 42)
    run_step(spec, a)
    run_step(spec, b, tape=Tape())
    return a, b


@pytest.mark.parametrize("kid", ("BT", "SP", "MG", "EP", "IS"))
def test_taped_step_matches_plain_bitwise(kid, suite):
    """Without reductions in the update, taping reproduces plain state
    bitwise: the tape replays the same float ops in the same order."""
    a, b = _one_taped_vs_plain(suite.specs[kid])
    for name in a.state:
        da, db = a.state[name].data, b.state[name].data
        if a.state[name].kind == "f8":
            assert all(bits(x) == bits(y) for x, y in zip(da, db))
        else:
            assert da == db
    assert a.scalars == b.scalars


@pytest.mark.parametrize("kid", ("CG", "LU", "FT"))
def test_taped_step_matches_plain_closely(kid, suite):
    """Updates with accumulations differ only by the exactly-rounded sum
    versus the tape's sequential fold: last-ulp-scale noise, nothing more."""
    a, b = _one_taped_vs_plain(suite.specs[kid])
    for name in a.state:
        for x, y in zip(a.state[name].data, b.state[name].data):
            assert x == pytest.approx(y, rel=1e-11, abs=1e-300)
    for key in a.scalars:
        assert a.scalars[key] == pytest.approx(b.scalars[key], rel=1e-11)


@pytest.mark.parametrize("kid", KIDS)
def test_fast_paths_are_bitwise_generic(kid, suite):
    """The documented contract: the plain-float fast paths agree with the
    generic operator-form bodies bit for bit."""
    spec = suite.specs[kid]
    impl = spec.impl
    a = new_run(spec, 42)
    b = new_run(spec, 42)
    for k in range(spec.loop_len):
        impl.step_fast(a.data(), a.scalars, k, 42)
        a.scalars[spec.loop_index_name] = k + 1
        impl.step(b.data(), b.scalars, k, 42, FLOAT_OPS)
        b.scalars[spec.loop_index_name] = k + 1
    va = impl.verify_fast(a.data(), a.scalars)
    vb = impl.verify_out(b.data(), b.scalars, FLOAT_OPS)
    assert bits(va) == bits(vb)
    for name in a.state:
        da, db = a.state[name].data, b.state[name].data
        if a.state[name].kind == "f8":
            assert all(bits(x) == bits(y) for x, y in zip(da, db))
        else:
            assert da == db


@pytest.mark.parametrize("kid", KIDS)
def test_iteration_overflow(kid, suite):
    spec = suite.specs[kid]
    run = run_to_completion(spec, new_run(spec, 42))
    with pytest.raises(IterationOverflow):
        run_step(spec, run)


@pytest.mark.parametrize("kid", KIDS)
def test_verify_margin(kid, suite):
    spec = suite.specs[kid]
    run = run_to_completion(spec, new_run(spec, 42))
    assert verify(spec, run)
    ref = run.output
    run.output = ref + max(1.0, abs(ref)) * 1e-6
    assert not verify(spec, run)
    run.output = float("nan")
    assert not verify(spec, run)   # poison tripwire
    run.output = ref
    assert verify(spec, run)


def test_verify_requires_completion():
    spec = build_kernel("BT")
    with pytest.raises(ValueError):
        verify(spec, new_run(spec, 42))


@pytest.mark.parametrize("kid", ("BT", "CG", "MG", "EP"))
def test_read_set_stable_across_iterations(kid):
    """Never-read sets do not depend on how many iterations are tracked."""
    spec = build_kernel(kid)
    first = oracle_read_tracking(spec, 1)
    for k in (2, spec.loop_len):
        assert oracle_read_tracking(spec, k) == first


@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_bt_output_seed_deterministic(seed):
    spec = build_kernel("BT")
    a = run_to_completion(spec, new_run(spec, seed)).output
    b = run_to_completion(spec, new_run(spec, seed)).output
    assert bits(a) == bits(b)
    assert math.isfinite(a)


def test_reference_output_memoized():
    spec = build_kernel("EP")
    assert reference_output(spec, 42) is reference_output(spec, 42) or \
        bits(reference_output(spec, 42)) == bits(reference_output(spec, 42))
