"""Closed-form latency models for SE rounds, lattice surgery and transversal CNOT.

SNAQ round times are composed from the wave count, the init and readout
latencies, the CNOT phase and a routing term counted in shuttle hops.  The
routing term's coefficients are calibrated against the constructive schedules
of :mod:`snaqsim.schedule` (see :func:`calibrate_routing`).  The 2xN and
SpinBus baselines are linear and constant per-round models pinned to reference
aggregate latencies.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .geometry import as_density, n_waves
from .params import TimingParams
from .schedule import MODES

__all__ = [
    "ARCHS", "LatencyModel", "SNAQ_ROUTING", "LS_ROUTING", "cnot_phase", "mode_waves",
    "ls_waves", "se_round_time", "ls_time", "tcnot_time", "clock_speed_comparison",
    "latency_table", "to_csv", "constructive_period", "calibrate_routing",
]

ARCHS = ("SNAQ", "2xN", "SpinBus")

# Routing hops per round, (c1, c2, c3) in c1*d + c2*[n_w > 1]*d^2 + c3*(n_w - 1)*d^2.
# Least squares (relative, nonnegative) against constructive round periods for
# d in 3..11, rho in {1, 2}; max deviation 0.75 %.
SNAQ_ROUTING = {
    "non_pipelined": (5.175, 0.946, 0.035),
    "pipelined": (3.749, 1.221, 0.372),
    "both_edges": (3.646, 0.583, 0.063),
    "two_column": (6.849, 1.528, 0.0),
}

# Lattice surgery: floor hops per merged row and extra hops per (d * s).
LS_ROUTING = (7.0, 2.6)

# Per-round baselines in ns: 2xN t = a + b*d solved from its d=7 and d=15
# distillation latencies (156.2 us over 84 rounds, 346.3 us over 180 rounds);
# SpinBus a constant 2.6 us.
_A_2XN_7 = 156_200.0 / 84
_A_2XN_15 = 346_300.0 / 180
TWO_BY_N = (_A_2XN_7 - 7 * (_A_2XN_15 - _A_2XN_7) / 8, (_A_2XN_15 - _A_2XN_7) / 8)
SPINBUS = 2600.0


@dataclass(frozen=True)
class LatencyModel:
    arch: str = "SNAQ"
    constants: dict = field(default_factory=dict)
    timing: TimingParams = field(default_factory=TimingParams)

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if not self.constants:
            object.__setattr__(self, "constants", default_constants(self.arch))
        for k, v in self.constants.items():
            vals = v if isinstance(v, tuple) else (v,)
            if any(x < 0 for x in vals) or not any(x > 0 for x in vals):
                raise ValueError(f"calibration constant {k} must be positive")


def default_constants(arch: str) -> dict:
    if arch == "SNAQ":
        return {**{f"route_{m}": c for m, c in SNAQ_ROUTING.items()}, "route_ls": LS_ROUTING}
    if arch == "2xN":
        return {"a": TWO_BY_N[0], "b": TWO_BY_N[1]}
    return {"c": SPINBUS}


def _model(arch_or_model) -> LatencyModel:
    if isinstance(arch_or_model, LatencyModel):
        return arch_or_model
    return LatencyModel(arch_or_model)


def cnot_phase(tm: TimingParams) -> float:
    """Two Hadamard layers, five CNOT slots and three hops between slot positions."""
    return 2 * tm.t_h + 5 * tm.t_cnot + 3 * tm.t_shuttle


def mode_waves(d: int, rho, mode: str) -> int:
    """Serialized waves per round for a mode (both edges halve, two columns double)."""
    if mode == "both_edges":
        return n_waves(d, 2 * as_density(rho))
    if mode == "two_column":
        return 2 * n_waves(d, rho)
    if mode in ("non_pipelined", "pipelined"):
        return n_waves(d, rho)
    raise ValueError(f"unknown mode {mode!r}")


def _hops(coef, d: int, nw: int) -> float:
    c1, c2, c3 = coef
    return c1 * d + c2 * min(nw - 1, 1) * d * d + c3 * (nw - 1) * d * d


def _snaq_round(m: LatencyModel, d: int, rho, mode: str) -> float:
    tm = m.timing
    hop = tm.t_shuttle * tm.c_route
    if mode == "pipelined":
        nw = mode_waves(d, rho, mode)
        serial = _snaq_round(m, d, rho, "non_pipelined")
        # init of the next round overlaps readout of this one; never slower than serial
        piped = max(nw * (tm.t_init + tm.t_shuttle),
                    cnot_phase(tm) + hop * _hops(m.constants["route_pipelined"], d, nw))
        return min(piped, serial)
    nw = mode_waves(d, rho, mode)
    return (nw * (tm.t_init + tm.t_meas + tm.t_shuttle) + cnot_phase(tm)
            + hop * _hops(m.constants[f"route_{mode}"], d, nw))


def se_round_time(arch, d: int, rho=1, mode: str = "non_pipelined") -> float:
    """Duration of one SE round in ns."""
    m = _model(arch)
    if d < 2:
        raise ValueError(f"distance must be >= 2, got {d}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if m.arch == "2xN":
        return m.constants["a"] + m.constants["b"] * d
    if m.arch == "SpinBus":
        return m.constants["c"]
    return _snaq_round(m, d, rho, mode)


def ls_waves(d: int, rho, separation_s: int) -> int:
    """Waves of the merged two-column band: two d x (d+s) rectangles sharing ports."""
    h = d + separation_s
    ports = math.ceil(2 * as_density(rho) * (h + 1))
    return math.ceil((2 * (d * h - 1)) / ports)


def ls_time(arch, d: int, rho=1, separation_s: int = 0) -> float:
    """Merge-split latency: d rounds of the merged patch."""
    m = _model(arch)
    if separation_s < 0:
        raise ValueError("separation must be nonnegative")
    if m.arch != "SNAQ":
        return d * se_round_time(m, d, rho)
    tm = m.timing
    hop = tm.t_shuttle * tm.c_route
    per_row, per_cell = m.constants["route_ls"]
    nw = ls_waves(d, rho, separation_s)
    period = max(nw * (tm.t_init + tm.t_shuttle),
                 cnot_phase(tm) + hop * per_row * (d + separation_s))
    period += hop * per_cell * d * separation_s
    return d * period


def tcnot_time(d: int, rho=1, separation_s: int = 0, include_half_se: bool = False,
               timing: TimingParams | None = None) -> float:
    """Shuttle out, one CNOT layer, shuttle back; optionally plus half a both-edges round."""
    if separation_s < 0:
        raise ValueError("separation must be nonnegative")
    tm = timing or TimingParams()
    t = 2 * (separation_s + d) * tm.c_route * tm.t_shuttle + tm.t_cnot
    if include_half_se:
        t += se_round_time(LatencyModel("SNAQ", timing=tm), d, rho, "both_edges") / 2
    return t


def clock_speed_comparison(fits: dict, target_p_L: float, rho=1,
                           timing: TimingParams | None = None) -> dict:
    """Operation latency at each architecture's required distance, and speedups.

    ``fits`` maps architecture tag to a fitted scaling model.  SNAQ runs
    tCNOT plus half a both-edges round; baselines run a lattice-surgery
    merge-split.  Speedups are baseline latency over SNAQ latency.
    """
    from .analytics import required_distance

    tm = timing or TimingParams()
    if "SNAQ" not in fits:
        raise ValueError("clock speed comparison needs a SNAQ fit")
    rows = {}
    for arch, fit in fits.items():
        d = required_distance(fit, target_p_L)
        if arch == "SNAQ":
            t = tcnot_time(d, rho, 0, include_half_se=True, timing=tm)
            op = "tcnot_half_se"
        else:
            t = ls_time(LatencyModel(arch, timing=tm), d, rho)
            op = "lattice_surgery"
        rows[arch] = {"d": d, "operation": op, "time_ns": t}
    snaq = rows["SNAQ"]["time_ns"]
    speedups = {a: r["time_ns"] / snaq for a, r in rows.items() if a != "SNAQ"}
    return {"target_p_L": target_p_L, "rho": float(as_density(rho)), "archs": rows,
            "speedup": speedups}


def latency_table(ds, rhos=(1,), separations=(0,), timing: TimingParams | None = None) -> list[dict]:
    """One row per (d, rho, s) with every latency the models provide."""
    tm = timing or TimingParams()
    snaq = LatencyModel("SNAQ", timing=tm)
    out = []
    for d in ds:
        for rho in rhos:
            for s in separations:
                row = {"d": d, "rho": float(as_density(rho)), "s": s}
                for mode in MODES:
                    row[f"se_{mode}_ns"] = se_round_time(snaq, d, rho, mode)
                row["ls_snaq_ns"] = ls_time(snaq, d, rho, s)
                row["ls_2xN_ns"] = ls_time(LatencyModel("2xN", timing=tm), d)
                row["ls_spinbus_ns"] = ls_time(LatencyModel("SpinBus", timing=tm), d)
                row["tcnot_ns"] = tcnot_time(d, rho, s, False, tm)
                row["tcnot_half_se_ns"] = tcnot_time(d, rho, s, True, tm)
                out.append(row)
    return out


def to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def constructive_period(d: int, rho, mode: str, timing: TimingParams | None = None,
                        rounds: int = 4) -> float:
    """Steady-state round period of the dot-level schedule."""
    from .geometry import assign_waves, make_patch
    from .schedule import build_se_round

    patch = make_patch(d)
    s = build_se_round(patch, assign_waves(patch, rho), timing, mode, rounds)
    return s.round_period()


def calibrate_routing(ds=(3, 5, 7, 9, 11), rhos=(1, 2), timing: TimingParams | None = None,
                      modes=MODES) -> dict:
    """Refit the routing coefficients against constructive schedules.

    Returns ``{mode: (c1, c2, c3)}``.  Pipelined points limited by init
    throughput carry no routing information and are skipped.
    """
    import numpy as np
    from scipy.optimize import nnls

    tm = timing or TimingParams()
    hop = tm.t_shuttle * tm.c_route
    out = {}
    for mode in modes:
        feats, ys, ws = [], [], []
        for d in ds:
            for rho in rhos:
                period = constructive_period(d, rho, mode, tm)
                nw = mode_waves(d, rho, mode)
                if mode == "pipelined":
                    if period <= nw * (tm.t_init + tm.t_shuttle) + 2 * hop:
                        continue
                    base = cnot_phase(tm)
                else:
                    base = nw * (tm.t_init + tm.t_meas + tm.t_shuttle) + cnot_phase(tm)
                feats.append([d, min(nw - 1, 1) * d * d, (nw - 1) * d * d])
                ys.append((period - base) / hop)
                ws.append(1.0 / period)
        x = np.array(feats, float) * np.array(ws)[:, None]
        coef, _ = nnls(x, np.array(ys) * np.array(ws))
        out[mode] = tuple(round(float(c), 3) for c in coef)
    return out
