import json

import numpy as np
import pytest

from snaqsim.distill import (
    estimate_15to1, layer_hops, load_circuit, table2, to_csv, to_json, volume_reduction,
)

# reference cells (time in us, volume in qubit*s)
REFERENCE = {
    ("2xN", 7): (156.2, 0.152), ("2xN", 15): (346.3, 1.555),
    ("SpinBus", 7): (109.2, 0.159), ("SpinBus", 15): (234.0, 1.576),
    ("SNAQ", 7): (40.6, 0.063), ("SNAQ", 15): (91.5, 0.658),
}


@pytest.mark.parametrize("arch,d", sorted(REFERENCE))
def test_table_cells(arch, d):
    plan = estimate_15to1(arch, d)
    t, v = REFERENCE[(arch, d)]
    tol = 0.1 if arch == "SNAQ" else 0.02
    assert plan.time_ns / 1000 == pytest.approx(t, rel=tol)
    assert plan.volume_qubit_s == pytest.approx(v, rel=tol)


@pytest.mark.parametrize("arch", ["2xN", "SpinBus", "SNAQ"])
def test_volume_identity(arch):
    for d in (7, 15):
        p = estimate_15to1(arch, d)
        assert p.volume_qubit_s == pytest.approx(p.patches * (2 * d * d - 1) * p.time_ns * 1e-9,
                                                 rel=1e-12)


def test_se_per_tcnot():
    p = estimate_15to1("SNAQ", 7)
    assert (p.tcnot_layers, p.se_rounds) == (5, 4)
    assert p.se_per_tcnot == pytest.approx(0.8)
    assert sum(p.breakdown.values()) == pytest.approx(p.time_ns)


@pytest.mark.parametrize("d,lo,hi", [(7, 0.55, 0.63), (15, 0.54, 0.61)])
def test_volume_reduction_window(d, lo, hi):
    snaq = estimate_15to1("SNAQ", d)
    for base in ("2xN", "SpinBus"):
        r = volume_reduction(snaq, estimate_15to1(base, d))
        assert lo <= r <= hi


def test_volume_reduction_edge_cases():
    p = estimate_15to1("SNAQ", 7)
    assert volume_reduction(p, p) == 0
    with pytest.raises(ValueError):
        volume_reduction(p, estimate_15to1("2xN", 15))


def test_bad_inputs():
    for d in (2, 6):
        with pytest.raises(ValueError):
            estimate_15to1("SNAQ", d)
    with pytest.raises(ValueError):
        estimate_15to1("SNAQ", 7, rho=0)
    with pytest.raises(ValueError):
        estimate_15to1("Ring", 7)


def x_span(circ):
    """Rows: X-type stabilizers of the final state, as GF(2) vectors over patches."""
    n = circ["n_logical"]
    rows = [np.eye(n, dtype=np.uint8)[q] for q in circ["plus_sources"]]
    for layer in circ["layers"]:
        for c, t in layer:
            for r in rows:
                r[t] ^= r[c]
    return np.array(rows)


def rank2(m):
    m = m.copy() % 2
    r = 0
    for col in range(m.shape[1]):
        piv = [i for i in range(r, len(m)) if m[i, col]]
        if not piv:
            continue
        m[[r, piv[0]]] = m[[piv[0], r]]
        for i in range(len(m)):
            if i != r and m[i, col]:
                m[i] ^= m[r]
        r += 1
    return r


def test_encoding_circuit_prepares_the_code():
    circ = load_circuit()
    n = circ["n_logical"]
    want = []
    for b in (1, 2, 4, 8):
        v = np.zeros(n, dtype=np.uint8)
        for j in range(1, 16):
            if j & b:
                v[j - 1] = 1
        want.append(v)
    logical = np.ones(n, dtype=np.uint8)   # all fifteen plus the output patch
    want.append(logical)
    got = x_span(circ)
    assert rank2(got) == rank2(np.array(want)) == 5
    assert rank2(np.vstack([got, want])) == 5


def test_layers_are_parallel_and_local():
    circ = load_circuit()
    for layer in circ["layers"]:
        used = [q for pair in layer for q in pair]
        assert len(used) == len(set(used))
    hops = layer_hops(circ, 7)
    assert all(h % 8 == 0 and h > 0 for h in hops)


def test_circuit_file_validation(tmp_path):
    circ = load_circuit()
    circ["layers"][0].append([0, 5])
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(circ))
    with pytest.raises(ValueError):
        load_circuit(path)


def test_table_serializers():
    rows = table2()
    assert len(rows) == 6
    assert to_csv(rows).count("\n") == 7
    assert json.loads(to_json(rows))[0]["arch"] == "2xN"
