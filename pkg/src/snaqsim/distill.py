"""Resource estimates for 15-to-1 magic-state distillation.

SNAQ runs the encoding circuit as parallel transversal CNOT layers on a 2 x 8
patch grid with SE rounds interleaved.  The 2xN and SpinBus baselines run
lattice-surgery compilations measured in SE rounds.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources

from .geometry import as_density
from .params import TimingParams
from .timing import LatencyModel, se_round_time, tcnot_time

__all__ = [
    "DistillationPlan", "load_circuit", "layer_hops", "estimate_15to1", "volume_reduction",
    "table2", "to_csv", "to_json",
]

BASELINES = {"2xN": (10, 12), "SpinBus": (15, 6)}   # patches, SE rounds per unit of d


@dataclass(frozen=True)
class DistillationPlan:
    arch: str
    d: int
    rho: float
    patches: int
    tcnot_layers: int
    se_rounds: int
    time_ns: float
    physical_qubits: int
    volume_qubit_s: float
    breakdown: dict = field(default_factory=dict)

    @property
    def se_per_tcnot(self) -> float:
        return self.se_rounds / self.tcnot_layers if self.tcnot_layers else math.inf

    def to_dict(self) -> dict:
        return asdict(self)


def load_circuit(path=None) -> dict:
    """The packaged 15-to-1 layer list, or one supplied at ``path``."""
    if path is None:
        text = resources.files("snaqsim").joinpath("data/distill_15to1.json").read_text()
    else:
        with open(path) as f:
            text = f.read()
    circ = json.loads(text)
    n = circ["n_logical"]
    for k, layer in enumerate(circ["layers"]):
        used = [q for pair in layer for q in pair]
        if len(used) != len(set(used)):
            raise ValueError(f"layer {k} uses a patch twice")
        if any(not 0 <= q < n for q in used):
            raise ValueError(f"layer {k} names a patch outside 0..{n - 1}")
    if len(circ["positions"]) != n:
        raise ValueError("one grid slot per logical qubit is required")
    return circ


def layer_hops(circ: dict, d: int) -> list[int]:
    """Longest patch-to-patch shuttle per layer, in dots (slots are d+1 dots apart)."""
    pos = circ["positions"]
    out = []
    for layer in circ["layers"]:
        slots = max(abs(pos[a][0] - pos[b][0]) + abs(pos[a][1] - pos[b][1]) for a, b in layer)
        out.append(slots * (d + 1))
    return out


def _snaq(d: int, rho, tm: TimingParams, circ: dict) -> DistillationPlan:
    model = LatencyModel("SNAQ", timing=tm)
    ports = math.ceil(2 * as_density(rho) * (d + 1))
    # both columns' data share one side's ports, as their ancillas do
    data_waves = math.ceil(2 * d * d / ports)
    rounds = len(circ["se_after_layers"])
    # two columns make each round twice as slow as a single column's
    se = 2 * se_round_time(model, d, rho, "non_pipelined")
    hops = layer_hops(circ, d)
    parts = {
        "logical_init": data_waves * (tm.t_init + tm.t_shuttle),
        "tcnot_layers": sum(tcnot_time(d, rho, m - d, timing=tm) for m in hops),
        "se_rounds": rounds * se,
        "t_injection": tm.t_init,
        "fold_s": 2 * d * tm.t_shuttle + tm.t_cnot,
        "logical_measurement": data_waves * (tm.t_meas + tm.t_shuttle),
    }
    return _plan("SNAQ", d, rho, circ["n_logical"], len(circ["layers"]), rounds, parts)


def _plan(arch, d, rho, patches, layers, rounds, parts) -> DistillationPlan:
    t = sum(parts.values())
    q = patches * (2 * d * d - 1)
    return DistillationPlan(arch, d, float(as_density(rho)), patches, layers, rounds, t, q,
                            q * t * 1e-9, parts)


def estimate_15to1(arch: str, d: int, rho=1, timing: TimingParams | None = None,
                   circuit: dict | None = None) -> DistillationPlan:
    if d < 3 or d % 2 == 0:
        raise ValueError(f"distance must be odd and >= 3, got {d}")
    if as_density(rho) <= 0:
        raise ValueError("readout density must be positive")
    tm = timing or TimingParams()
    if arch == "SNAQ":
        return _snaq(d, rho, tm, circuit or load_circuit())
    if arch not in BASELINES:
        raise ValueError(f"unknown architecture {arch!r}")
    patches, per_d = BASELINES[arch]
    rounds = per_d * d
    t = rounds * se_round_time(LatencyModel(arch, timing=tm), d)
    return _plan(arch, d, rho, patches, 0, rounds, {"se_rounds": t})


def volume_reduction(plan: DistillationPlan, baseline: DistillationPlan) -> float:
    if plan.d != baseline.d:
        raise ValueError("volume reduction compares plans at the same distance")
    return 1.0 - plan.volume_qubit_s / baseline.volume_qubit_s


def table2(ds=(7, 15), rho=1, timing: TimingParams | None = None) -> list[dict]:
    rows = []
    for arch in ("2xN", "SpinBus", "SNAQ"):
        for d in ds:
            p = estimate_15to1(arch, d, rho, timing)
            rows.append({"arch": arch, "d": d, "rho": p.rho, "patches": p.patches,
                         "se_rounds": p.se_rounds, "tcnot_layers": p.tcnot_layers,
                         "time_us": p.time_ns / 1000, "volume_qubit_s": p.volume_qubit_s})
    return rows


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def to_json(rows: list[dict]) -> str:
    return json.dumps(rows, indent=2)
