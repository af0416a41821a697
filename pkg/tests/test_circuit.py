import pytest
from hypothesis import given, settings, strategies as st

from snaqsim.circuit import (
    CircuitError, ParseError, count_resources, emit_text, lower, noise_mass, parse_text,
)
from snaqsim.params import NoiseParams

from conftest import UNIFORM, memory_circuit, memory_schedule, to_stim


def expected_mass(schedule, noise):
    # per-instruction probabilities, read straight off the schedule
    total = 0.0
    for ins in schedule.instructions:
        n = len(ins.qubits)
        if ins.kind in ("INIT", "MEASURE"):
            total += n * noise.p_g
        elif ins.kind == "CNOT":
            total += noise.p_g
        elif ins.kind == "H":
            total += n * noise.p_g / 10
        elif ins.kind == "SHUTTLE":
            total += n * ins.m * noise.p_sh
        elif ins.kind == "IDLE" and ins.duration > 0:
            total += n * (1 - (1 - noise.p_id) ** (ins.duration / 1000))
    return total


@pytest.mark.parametrize("basis", ["X", "Z"])
def test_text_round_trip(basis):
    c = memory_circuit(3, basis, noise=UNIFORM)
    assert parse_text(emit_text(c)) == c


@pytest.mark.parametrize("d,basis", [(3, "X"), (3, "Z"), (5, "X"), (5, "Z")])
def test_stim_accepts_and_agrees_on_distance(d, basis):
    c = to_stim(memory_circuit(d, basis, noise=UNIFORM))
    assert c.num_detectors == memory_circuit(d, basis).n_detectors
    err = c.shortest_graphlike_error(ignore_ungraphlike_errors=False)
    assert len(err) == d


def test_stim_sees_no_nondeterminism():
    c = to_stim(memory_circuit(5, "X"))
    c.detector_error_model()   # raises on a nondeterministic detector


def test_noise_mass_matches_schedule():
    noise = NoiseParams(1e-3, 1e-5, 1e-4)
    s = memory_schedule(5)
    assert noise_mass(lower(s, noise)) == pytest.approx(expected_mass(s, noise), rel=1e-9)


def test_noise_channels():
    c = memory_circuit(3, noise=NoiseParams(1e-3, 0, 0))
    names = {o.name: o.args for o in c.ops if o.args and o.name != "OBSERVABLE_INCLUDE"}
    assert names["DEPOLARIZE2"] == (1e-3,)
    assert names["X_ERROR"] == (1e-3,)
    assert names["DEPOLARIZE1"] == (1e-4,)
    # measurement flips come right before the readout, reset flips right after
    for a, b in zip(c.ops, c.ops[1:]):
        if b.name == "M":
            assert a.name == "X_ERROR" and a.targets == b.targets
        if a.name == "R":
            assert b.name == "X_ERROR" and b.targets == a.targets


@settings(max_examples=50)
@given(st.floats(1e-6, 0.2), st.floats(1, 5000), st.floats(0.01, 0.99))
def test_idle_composes(p, t, frac):
    n = NoiseParams(p_id=p)
    a, b = n.idle_probability(t * frac), n.idle_probability(t * (1 - frac))
    # survival probabilities multiply
    whole = n.idle_probability(t)
    assert 1 - whole == pytest.approx((1 - a) * (1 - b), abs=1e-12)


def test_linear_idle_flag():
    assert NoiseParams(p_id=1e-3, linear_idle=True).idle_probability(2000) == pytest.approx(2e-3)
    assert NoiseParams(p_id=1e-3).idle_probability(2000) == pytest.approx(1 - 0.999 ** 2)


def test_resources():
    r = count_resources(memory_circuit(3))
    assert r["qubits"] == 9 + 8
    assert r["measurements"] == 3 * 8 + 9
    assert r["cnots"] == 3 * 24


@pytest.mark.parametrize("text,line,col", [
    ("H 0\nFOO 1\n", 2, 1),
    ("CX 0 1 2\n", 1, 1),
    ("X_ERROR(1.5) 0\n", 1, 1),
    ("M 0\nDETECTOR rec[-2]\n", 2, 10),
    ("H 0 q\n", 1, 5),
])
def test_parse_errors_locate(text, line, col):
    with pytest.raises(ParseError) as e:
        parse_text(text)
    assert (e.value.line, e.value.col) == (line, col)


def test_shuttle_probability_guard():
    with pytest.raises(CircuitError):
        lower(memory_schedule(3), NoiseParams(p_sh=0.2))
