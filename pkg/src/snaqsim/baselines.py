"""Memory circuits for the 2xN and SpinBus baselines.

Both baselines read every ancilla in parallel, so a round is the textbook
rotated-code round: reset, four CNOT slots, readout.  Architecture enters
through shuttling before each CNOT slot and through data idling for the
round duration given by the latency model.

- SpinBus: every ancilla crosses one unit-cell side (50 hops) per slot.
- 2xN: the shuttling rail moves ``b d / t_shuttle`` hops per round, split
  evenly over the four slots.
"""

from __future__ import annotations

import math

from .circuit import StabilizerCircuit, _noise
from .geometry import rotated_stabilizers
from .params import NoiseParams, TimingParams
from .schedule import CORNER_ORDER
from .timing import TWO_BY_N, LatencyModel, se_round_time

__all__ = ["BASELINE_ARCHS", "hops_per_slot", "baseline_memory_circuit"]

BASELINE_ARCHS = ("2xN", "SpinBus")
SPINBUS_CELL_HOPS = 50


def hops_per_slot(arch: str, d: int, timing: TimingParams | None = None) -> int:
    tm = timing or TimingParams()
    if arch == "SpinBus":
        return SPINBUS_CELL_HOPS
    if arch == "2xN":
        return max(1, math.ceil(TWO_BY_N[1] * d / tm.t_shuttle / 4))
    raise ValueError(f"unknown baseline {arch!r}")


def baseline_memory_circuit(arch: str, d: int, rounds: int, basis: str,
                            noise: NoiseParams | None = None,
                            timing: TimingParams | None = None) -> StabilizerCircuit:
    """``rounds`` SE rounds between transversal data preparation and readout."""
    if arch not in BASELINE_ARCHS:
        raise ValueError(f"unknown baseline {arch!r}")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if basis not in ("X", "Z"):
        raise ValueError(f"basis must be X or Z, got {basis!r}")
    if d < 3 or d % 2 == 0:
        raise ValueError(f"distance must be odd and >= 3, got {d}")
    noise = noise or NoiseParams()
    tm = timing or TimingParams()
    stabs = rotated_stabilizers(d)
    n_data = d * d
    anc = [n_data + s.id for s in stabs]
    xs = [n_data + s.id for s in stabs if s.kind == "X"]
    data = list(range(n_data))
    period = se_round_time(LatencyModel(arch, timing=tm), d)
    busy = 4 * tm.t_cnot
    idle = noise.idle_probability(max(period - busy, 0.0))
    p_sh = noise.shuttle_probability(hops_per_slot(arch, d, tm))
    p = noise.p_g
    c = StabilizerCircuit(n_qubits=n_data + len(stabs), duration_ns=rounds * period)

    c.append("R", data)
    _noise(c, "X_ERROR", data, p)
    if basis == "X":
        c.append("H", data)
        _noise(c, "DEPOLARIZE1", data, p / 10)
    last: dict[int, int] = {}
    for _ in range(rounds):
        c.append("R", anc)
        _noise(c, "X_ERROR", anc, p)
        c.append("H", xs)
        _noise(c, "DEPOLARIZE1", xs, p / 10)
        for slot in range(5):
            pairs = []
            for s in stabs:
                label = CORNER_ORDER[s.kind][slot]
                q = s.corner(label) if label else None
                if q is None:
                    continue
                a = n_data + s.id
                pairs += [a, q] if s.kind == "X" else [q, a]
            if not pairs:
                continue
            _noise(c, "DEPOLARIZE1", anc, p_sh)
            c.append("CX", pairs)
            _noise(c, "DEPOLARIZE2", pairs, p)
        c.append("H", xs)
        _noise(c, "DEPOLARIZE1", xs, p / 10)
        _noise(c, "DEPOLARIZE1", data, idle)
        _noise(c, "X_ERROR", anc, p)
        m0 = c.n_measurements
        c.append("M", anc)
        for s in stabs:
            mi = m0 + s.id
            if s.id in last:
                c.append("DETECTOR", (last[s.id], mi))
            elif s.kind == basis:
                c.append("DETECTOR", (mi,))
            last[s.id] = mi
    if basis == "X":
        c.append("H", data)
        _noise(c, "DEPOLARIZE1", data, p / 10)
    _noise(c, "X_ERROR", data, p)
    m0 = c.n_measurements
    c.append("M", data)
    for s in stabs:
        if s.kind == basis:
            c.append("DETECTOR", tuple(m0 + q for q in s.data) + (last[s.id],))
    logical = range(d) if basis == "Z" else range(0, n_data, d)
    c.append("OBSERVABLE_INCLUDE", tuple(m0 + q for q in logical), (0,))
    return c

