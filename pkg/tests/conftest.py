"""Session-wide caches: analyses and snapshots are expensive, compute once."""

import pytest
from hypothesis import settings

from scrutinize.kernels import (
    build_kernel,
    new_run,
    reference_output,
    run_step,
    snapshot,
)
from scrutinize.scrutiny import analyze, oracle_read_tracking

settings.register_profile("suite", derandomize=True, max_examples=25,
                          deadline=None)
settings.load_profile("suite")

KIDS = ("BT", "SP", "CG", "MG", "LU", "FT", "EP", "IS")
SEED = 42
K_ITER = 2


class Suite:
    """Lazily computed per-kernel artifacts shared across the session."""

    def __init__(self):
        self.specs = {k: build_kernel(k) for k in KIDS}
        self.reports = {}
        self._oracles = {}
        self._snaps = {}

    def report(self, kid):
        if kid not in self.reports:
            self.reports[kid] = analyze(self.specs[kid], K_ITER, SEED)
        return self.reports[kid]

    def oracle(self, kid):
        if kid not in self._oracles:
            self._oracles[kid] = oracle_read_tracking(
                self.specs[kid], K_ITER, SEED)
        return self._oracles[kid]

    def snaps(self, kid):
        """Clean snapshots at every iteration boundary, reference last."""
        if kid not in self._snaps:
            spec = self.specs[kid]
            run = new_run(spec, SEED)
            boundary = []
            for _ in range(spec.loop_len):
                boundary.append(snapshot(run))
                run_step(spec, run)
            self._snaps[kid] = boundary
        return self._snaps[kid]

    def reference(self, kid):
        return reference_output(self.specs[kid], SEED)


@pytest.fixture(scope="session")
def suite():
    return Suite()
