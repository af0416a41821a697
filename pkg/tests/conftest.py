import functools

import pytest

from snaqsim.circuit import emit_text, lower
from snaqsim.geometry import assign_waves, make_patch
from snaqsim.params import NoiseParams
from snaqsim.schedule import build_memory_experiment


@functools.lru_cache(maxsize=None)
def memory_schedule(d, basis="Z", rho=1, rounds=None, mode="non_pipelined"):
    patch = make_patch(d)
    return build_memory_experiment(patch, rounds or d, basis, assign_waves(patch, rho),
                                   mode=mode)


def memory_circuit(d, basis="Z", rho=1, noise=None, rounds=None, mode="non_pipelined"):
    return lower(memory_schedule(d, basis, rho, rounds, mode), noise or NoiseParams())


def to_stim(circuit):
    stim = pytest.importorskip("stim")
    return stim.Circuit(emit_text(circuit))


UNIFORM = NoiseParams(1e-3, 1e-4, 1e-3)


ACCEPTANCE: dict[int, str] = {}


def report(n, ok, detail):
    ACCEPTANCE[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, detail


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
