"""Noisy stabilizer circuits lowered from timed schedules, and their text form.

The text form is a subset of the stim circuit language, so emitted circuits can
be fed to external samplers for cross-checks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .params import NoiseParams, TimingParams
from .schedule import KIND_ORDER, SyndromeSchedule

__all__ = [
    "CircuitError", "ParseError", "Op", "StabilizerCircuit", "NoiseParams", "TimingParams",
    "lower", "emit_text", "parse_text", "count_resources", "noise_mass",
]

GATES = ("R", "RX", "H", "CX", "M", "MX")
NOISE = ("X_ERROR", "DEPOLARIZE1", "DEPOLARIZE2")
ANNOTATIONS = ("QUBIT_COORDS", "DETECTOR", "OBSERVABLE_INCLUDE", "TICK")
NAMES = GATES + NOISE + ANNOTATIONS


class CircuitError(ValueError):
    """Malformed schedule or circuit."""


class ParseError(CircuitError):
    def __init__(self, line: int, col: int, msg: str):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Op:
    """One instruction.

    For DETECTOR and OBSERVABLE_INCLUDE the targets are absolute measurement
    indices; the text form writes them as ``rec[-k]`` lookbacks.
    """

    name: str
    targets: tuple[int, ...] = ()
    args: tuple[float, ...] = ()


@dataclass
class StabilizerCircuit:
    n_qubits: int = 0
    ops: list[Op] = field(default_factory=list)
    duration_ns: float = 0.0

    @property
    def n_measurements(self) -> int:
        return sum(len(o.targets) for o in self.ops if o.name in ("M", "MX"))

    @property
    def detectors(self) -> list[tuple[int, ...]]:
        return [o.targets for o in self.ops if o.name == "DETECTOR"]

    @property
    def observables(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {}
        for o in self.ops:
            if o.name == "OBSERVABLE_INCLUDE":
                out.setdefault(int(o.args[0]), []).extend(o.targets)
        return {k: tuple(v) for k, v in sorted(out.items())}

    @property
    def n_detectors(self) -> int:
        return sum(1 for o in self.ops if o.name == "DETECTOR")

    @property
    def n_observables(self) -> int:
        obs = self.observables
        return max(obs) + 1 if obs else 0

    def append(self, name: str, targets=(), args=()) -> None:
        self.ops.append(Op(name, tuple(targets), tuple(float(a) for a in args)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, StabilizerCircuit):
            return NotImplemented
        return self.n_qubits == other.n_qubits and self.ops == other.ops


# --------------------------------------------------------------------------
# lowering


def _noise(c: StabilizerCircuit, name: str, targets, p: float) -> None:
    # stored at the precision the text form carries, so round trips are exact
    if p > 0:
        c.append(name, targets, (float(f"{p:.12g}"),))


def lower(schedule: SyndromeSchedule, noise: NoiseParams | None = None) -> StabilizerCircuit:
    """Translate a timed schedule into a noisy circuit with detectors.

    Detectors compare each stabilizer with its previous measurement; in the
    first round only stabilizers of the prepared basis are compared against
    their deterministic value.  Memory schedules also close every stabilizer
    of the prepared basis against the final data readout and record the
    logical observable.
    """
    noise = noise or NoiseParams()
    meta = schedule.meta
    n = schedule.n_qubits
    c = StabilizerCircuit(n_qubits=n, duration_ns=float(schedule.makespan))
    p_g = noise.p_g
    items = meta.get("items", [])
    basis = meta.get("basis")
    prepared = basis or "Z"
    last: dict[int, int] = {}
    data_meas: dict[int, int] = {}
    ins = sorted(schedule.instructions, key=lambda i: (i.start, KIND_ORDER[i.kind]))
    for i in ins:
        for q in i.qubits:
            if not 0 <= q < n:
                raise CircuitError(f"{i.kind} at {i.start} ns addresses qubit {q} of {n}")
        k = i.kind
        if k == "INIT":
            c.append("R", i.qubits)
            _noise(c, "X_ERROR", i.qubits, p_g)
        elif k == "MEASURE":
            _noise(c, "X_ERROR", i.qubits, p_g)
            mi = c.n_measurements
            c.append("M", i.qubits)
            if len(i.qubits) != 1 or not i.tag:
                raise CircuitError(f"MEASURE at {i.start} ns has no round tag")
            if i.tag[0] == "anc":
                _, r, idx = i.tag
                if not 0 <= idx < len(items):
                    raise CircuitError(f"MEASURE tag names stabilizer {idx} of {len(items)}")
                prev = last.get(idx)
                if prev is not None:
                    c.append("DETECTOR", (prev, mi))
                elif items[idx][0] == prepared:
                    c.append("DETECTOR", (mi,))
                last[idx] = mi
            elif i.tag[0] == "data":
                data_meas[i.tag[1]] = mi
            else:
                raise CircuitError(f"unknown MEASURE tag {i.tag!r}")
        elif k == "CNOT":
            if len(i.qubits) != 2:
                raise CircuitError(f"CNOT at {i.start} ns needs two qubits")
            c.append("CX", i.qubits)
            _noise(c, "DEPOLARIZE2", i.qubits, p_g)
        elif k == "H":
            c.append("H", i.qubits)
            _noise(c, "DEPOLARIZE1", i.qubits, p_g / 10)
        elif k == "SHUTTLE":
            try:
                p = noise.shuttle_probability(i.m)
            except ValueError as e:
                raise CircuitError(str(e)) from None
            _noise(c, "DEPOLARIZE1", i.qubits, p)
        elif k == "IDLE":
            _noise(c, "DEPOLARIZE1", i.qubits, noise.idle_probability(i.duration))
        else:
            raise CircuitError(f"{k} has no Clifford lowering")
    if data_meas and basis is not None:
        for idx, (kind, support) in enumerate(items):
            if kind != basis or idx not in last:
                continue
            try:
                recs = [data_meas[q] for q in support]
            except KeyError as e:
                raise CircuitError(f"data qubit {e.args[0]} was never read out") from None
            c.append("DETECTOR", tuple(recs) + (last[idx],))
        obs = meta.get("observable", [])
        try:
            c.append("OBSERVABLE_INCLUDE", tuple(data_meas[q] for q in obs), (0,))
        except KeyError as e:
            raise CircuitError(f"observable qubit {e.args[0]} was never read out") from None
    return c


# --------------------------------------------------------------------------
# text form


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def emit_text(circuit: StabilizerCircuit) -> str:
    lines = [f"# qubits={circuit.n_qubits} duration_ns={_fmt(circuit.duration_ns)}"]
    seen = 0
    for o in circuit.ops:
        head = o.name
        if o.args:
            head += "(" + ", ".join(_fmt(a) for a in o.args) + ")"
        if o.name in ("DETECTOR", "OBSERVABLE_INCLUDE"):
            body = [f"rec[{t - seen}]" for t in o.targets]
        else:
            body = [str(t) for t in o.targets]
        if o.name in ("M", "MX"):
            seen += len(o.targets)
        lines.append(" ".join([head] + body))
    return "\n".join(lines) + "\n"


_LINE = re.compile(r"\s*([A-Za-z_][A-Za-z_0-9]*)\s*(?:\(([^)]*)\))?")
_HEADER = re.compile(r"#\s*qubits=(\d+)\s+duration_ns=(\S+)")
_REC = re.compile(r"rec\[(-\d+)\]$")
_NOISE_MAX = {"X_ERROR": 1.0, "DEPOLARIZE1": 1.0, "DEPOLARIZE2": 1.0}


def parse_text(text: str) -> StabilizerCircuit:
    c = StabilizerCircuit()
    declared = None
    seen = 0
    top = -1
    for ln, raw in enumerate(text.splitlines(), start=1):
        h = _HEADER.match(raw.strip())
        if h:
            declared = int(h.group(1))
            c.duration_ns = float(h.group(2))
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _LINE.match(line)
        if not m:
            col = len(line) - len(line.lstrip()) + 1
            raise ParseError(ln, col, "expected an instruction name")
        name = m.group(1)
        if name not in NAMES:
            raise ParseError(ln, m.start(1) + 1, f"unknown instruction {name!r}")
        args: tuple[float, ...] = ()
        if m.group(2) is not None:
            try:
                args = tuple(float(a) for a in m.group(2).split(",") if a.strip())
            except ValueError:
                raise ParseError(ln, m.start(2) + 1, f"bad argument list {m.group(2)!r}") from None
        targets = []
        pos = m.end()
        for tok in re.finditer(r"\S+", line[pos:]):
            col = pos + tok.start() + 1
            s = tok.group(0)
            r = _REC.match(s)
            if r:
                if name not in ("DETECTOR", "OBSERVABLE_INCLUDE"):
                    raise ParseError(ln, col, f"{name} cannot take a measurement record")
                k = int(r.group(1))
                if -k > seen:
                    raise ParseError(ln, col, f"{s} looks back past the {seen} measurements so far")
                targets.append(seen + k)
            elif s.isdigit():
                if name in ("DETECTOR", "OBSERVABLE_INCLUDE"):
                    raise ParseError(ln, col, f"{name} targets must be rec[-k]")
                targets.append(int(s))
            else:
                raise ParseError(ln, col, f"bad target {s!r}")
        _check(name, args, targets, ln, m.start(1) + 1)
        if name in ("M", "MX"):
            seen += len(targets)
        if name not in ("DETECTOR", "OBSERVABLE_INCLUDE") and targets:
            top = max(top, max(targets))
        c.ops.append(Op(name, tuple(targets), args))
    c.n_qubits = declared if declared is not None else top + 1
    if top >= c.n_qubits:
        raise CircuitError(f"qubit {top} exceeds declared count {c.n_qubits}")
    return c


def _check(name, args, targets, ln, col) -> None:
    if name in NOISE:
        if len(args) != 1:
            raise ParseError(ln, col, f"{name} takes one probability")
        p = args[0]
        if not 0.0 <= p <= _NOISE_MAX[name]:
            raise ParseError(ln, col, f"probability {_fmt(p)} is outside [0, 1]")
    elif name == "OBSERVABLE_INCLUDE":
        if len(args) != 1 or args[0] < 0 or args[0] != int(args[0]):
            raise ParseError(ln, col, "OBSERVABLE_INCLUDE takes one non-negative index")
    elif name in GATES or name == "TICK":
        if args:
            raise ParseError(ln, col, f"{name} takes no arguments")
    if name in ("CX", "DEPOLARIZE2") and len(targets) % 2:
        raise ParseError(ln, col, f"{name} needs an even number of targets")
    if name == "TICK" and targets:
        raise ParseError(ln, col, "TICK takes no targets")


# --------------------------------------------------------------------------
# accounting


def count_resources(circuit: StabilizerCircuit) -> dict:
    used: set[int] = set()
    cnots = meas = 0
    for o in circuit.ops:
        if o.name in GATES or o.name in NOISE:
            used.update(o.targets)
        if o.name == "CX":
            cnots += len(o.targets) // 2
        elif o.name in ("M", "MX"):
            meas += len(o.targets)
    return {"qubits": len(used), "cnots": cnots, "measurements": meas,
            "duration_ns": circuit.duration_ns}


def noise_mass(circuit: StabilizerCircuit) -> float:
    """Sum of channel probabilities, one term per channel application."""
    total = 0.0
    for o in circuit.ops:
        if o.name in NOISE:
            per = 2 if o.name == "DEPOLARIZE2" else 1
            total += o.args[0] * (len(o.targets) // per)
    return total
