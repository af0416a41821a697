"""Timed instruction streams for syndrome extraction on a readout-serialized array.

Ancillas are reset at edge ports, shuttled through channel rows to their park
dots, run five CNOT slots in lockstep, and leave through the opposite edge to
be measured.  Movement is resolved by a tick-level router: an agent advances
one dot per ``t_shuttle`` only into a dot that was empty at the start of the
tick, which leaves one free dot between consecutive movers.

Port sites and their two staging dots sit off the array and are named
``("site", side, k)``, ``("stage", side, k)`` and ``("queue", side, k)``; the
queue dot is the one that touches the lane.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .geometry import CodePatch, GeometryError, WaveAssignment, make_patch, split_waves
from .params import TimingParams

KINDS = ("INIT", "MEASURE", "CNOT", "H", "SHUTTLE", "IDLE", "T_INJECT", "S_FOLD")
MODES = ("non_pipelined", "pipelined", "both_edges", "two_column")

# Lockstep park position and plaquette corner for each of the five CNOT slots.
# The last two gates of an X check lie along a data row and those of a Z check
# along a data column, so a hook error is perpendicular to the logical
# operator of its own type.
SLOT_POSITIONS = ("L", "L", "R", "L", "R")
CORNER_ORDER = {"X": ("NW", None, "NE", "SW", "SE"), "Z": ("NW", "SW", "NE", None, "SE")}

EPS = 1e-9


class ScheduleError(RuntimeError):
    """Raised when a schedule cannot be built (routing failure, bad input)."""


@dataclass(frozen=True)
class TimedInstruction:
    kind: str
    qubits: tuple[int, ...]
    start: float
    duration: float
    path: tuple = ()
    tag: tuple = ()
    m: int = 0
    abstract: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScheduleError(f"unknown instruction kind {self.kind!r}")
        if self.duration < 0 or (self.duration == 0 and self.kind != "IDLE"):
            raise ScheduleError(f"{self.kind} needs a positive duration, got {self.duration}")
        if self.kind == "SHUTTLE" and self.m < 1:
            raise ScheduleError("SHUTTLE needs at least one hop")

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def site(self):
        return self.path[-1] if self.path else None

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "qubits": list(self.qubits),
             "start_ns": self.start, "duration_ns": self.duration}
        if self.kind == "SHUTTLE":
            d["m"] = self.m
        if self.path:
            d["path"] = [list(p) for p in self.path]
        if self.tag:
            d["tag"] = list(self.tag)
        return d


@dataclass(frozen=True)
class SyndromeSchedule:
    instructions: tuple[TimedInstruction, ...]
    rounds: int
    waves: dict
    makespan: float
    mode: str
    timing: TimingParams
    n_qubits: int
    meta: dict = field(default_factory=dict)

    def count(self, kind: str) -> int:
        return sum(1 for ins in self.instructions if ins.kind == kind)

    def of_kind(self, kind: str) -> list[TimedInstruction]:
        return [ins for ins in self.instructions if ins.kind == kind]

    def idle_by_qubit(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for ins in self.instructions:
            if ins.kind == "IDLE":
                out[ins.qubits[0]] = out.get(ins.qubits[0], 0.0) + ins.duration
        return out

    def round_period(self) -> float:
        """Mean spacing of CNOT-phase starts, i.e. the steady-state round period."""
        starts = self.meta.get("cnot_start", [])
        if len(starts) < 2:
            return self.makespan
        tail = starts[-3:] if len(starts) > 3 else starts
        return (tail[-1] - tail[0]) / (len(tail) - 1)

    def to_events(self) -> list[dict]:
        return [ins.to_dict() for ins in self.instructions]

    def to_json(self) -> str:
        return json.dumps({"mode": self.mode, "rounds": self.rounds,
                           "makespan_ns": self.makespan, "events": self.to_events()})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "qubits", "start_ns", "end_ns"])
        for ins in self.instructions:
            w.writerow([ins.kind, " ".join(map(str, ins.qubits)), f"{ins.start:g}", f"{ins.end:g}"])
        return buf.getvalue()


# --------------------------------------------------------------------------
# band: patches sharing a stretch of rows and the edge ports beside it


@dataclass
class _Band:
    patches: list[CodePatch]
    n_ports: int

    def __post_init__(self):
        p0 = self.patches[0]
        self.r0 = p0.origin[0]
        self.height = p0.height
        self.left = min(p.left_lane for p in self.patches)
        self.right = max(p.right_lane for p in self.patches)
        self.items = [(pi, s) for pi, p in enumerate(self.patches) for s in p.stabilizers]
        self.data = [(pi, q) for pi, p in enumerate(self.patches) for q in range(p.n_data)]
        span = 2 * (self.height + 1)
        self.port_rows = [self.r0 + (2 * k + 1) * span // (2 * self.n_ports)
                          for k in range(self.n_ports)]

    def lane(self, side: str) -> int:
        return self.left if side == "left" else self.right

    def park(self, pi: int, stab, position: str):
        return self.patches[pi].park(stab, position)


def _line(a: int, b: int) -> list[int]:
    step = 1 if b >= a else -1
    return list(range(a, b + step, step))


# off-array dots between a port site and its lane, site side first
STAGING = ("stage", "queue")


def _enter_path(band: _Band, side: str, k: int, target) -> list:
    lane = band.lane(side)
    pr = band.port_rows[k]
    tr, tc = target
    path = [("site", side, k)] + [(name, side, k) for name in STAGING]
    path += [(r, lane) for r in _line(pr, tr)]
    path += [(tr, c) for c in _line(lane, tc)[1:]]
    return path


def _exit_path(band: _Band, side: str, k: int, source) -> list:
    lane = band.lane(side)
    pr = band.port_rows[k]
    sr, sc = source
    path = [(sr, c) for c in _line(sc, lane)]
    path += [(r, lane) for r in _line(sr, pr)[1:]]
    path += [(name, side, k) for name in reversed(STAGING)] + [("site", side, k)]
    return path


def _plan(entries: list, n_ports: int) -> tuple[list[tuple], int]:
    """Chunk ordered ``(key, row, colkey)`` entries into balanced waves.

    Returns ``(key, wave, port)`` triples and the wave count.  Within a wave
    ports are matched in row order.
    """
    if not entries:
        return [], 0
    nw = math.ceil(len(entries) / n_ports)
    out, pos = [], 0
    for w, size in enumerate(split_waves(len(entries), nw)):
        chunk = sorted(entries[pos:pos + size], key=lambda e: (e[1], e[2]))
        pos += size
        if size == n_ports:
            ports = list(range(n_ports))
        else:
            ports = sorted({(2 * j + 1) * n_ports // (2 * size) for j in range(size)})
        out.extend((e[0], w, p) for e, p in zip(chunk, ports))
    return out, nw


def _wave_assignment(plan: list[tuple], nw: int, n_ports: int, index) -> WaveAssignment:
    wave_of = {index(key): w for key, w, _ in plan}
    port_of = {index(key): p for key, _, p in plan}
    ports_of: dict[int, list[int]] = {w: [] for w in range(nw)}
    for _, w, p in plan:
        ports_of[w].append(p)
    return WaveAssignment(nw, wave_of, ports_of, port_of, n_ports)


# --------------------------------------------------------------------------
# tick-level router and event loop


class _Mover:
    __slots__ = ("qid", "path", "i", "gate", "gate_at", "on_arrive", "run_from",
                 "run_start", "last_end", "tag")

    def __init__(self, qid, path, on_arrive, gate, gate_at, tag):
        self.qid = qid
        self.path = path
        self.i = 0
        self.gate = gate
        self.gate_at = gate_at
        self.on_arrive = on_arrive
        self.run_from = None
        self.run_start = None
        self.last_end = None
        self.tag = tag


class _Port:
    def __init__(self, side: str, k: int):
        self.side = side
        self.k = k
        self.site = ("site", side, k)
        self.queue = ("queue", side, k)
        self.jobs: deque = deque()
        self.initializing = False


class _Sim:
    def __init__(self, timing: TimingParams):
        self.tm = timing
        self.tick = timing.t_shuttle
        self.t = 0.0
        self.occ: dict = {}
        self.pos: dict = {}
        self.movers: list[_Mover] = []
        self.events: list = []
        self.seq = 0
        self.waiters: list = []
        self.out: list[TimedInstruction] = []
        self.ports: dict = {}

    # bookkeeping -----------------------------------------------------------
    def at(self, time: float, fn: Callable[[], None]) -> None:
        self.seq += 1
        heapq.heappush(self.events, (time, self.seq, fn))

    def when(self, pred: Callable[[], bool], fn: Callable[[], None]) -> None:
        self.waiters.append((pred, fn))

    def emit(self, kind, qubits, start, duration, path=(), tag=(), m=0) -> None:
        self.out.append(TimedInstruction(kind, tuple(qubits), start, duration,
                                         tuple(path), tuple(tag), m))

    def place(self, qid: int, dot) -> None:
        if dot in self.occ:
            raise ScheduleError(f"dot {dot} already holds qubit {self.occ[dot]}")
        self.occ[dot] = qid
        self.pos[qid] = dot

    def remove(self, qid: int) -> None:
        dot = self.pos.pop(qid)
        del self.occ[dot]

    def port(self, side: str, k: int) -> _Port:
        key = (side, k)
        if key not in self.ports:
            self.ports[key] = _Port(side, k)
        return self.ports[key]

    def add_mover(self, qid, path, on_arrive=None, gate=None, gate_at=0, tag=None):
        if self.pos.get(qid) != path[0]:
            raise ScheduleError(f"qubit {qid} is not at the start of its path")
        if len(path) == 1:
            if on_arrive:
                self.at(self.t, on_arrive)
            return
        self.movers.append(_Mover(qid, path, on_arrive, gate, gate_at, tag))

    # ports -------------------------------------------------------------------
    def submit(self, side, k, qid, path, on_arrive=None, gate=None, gate_at=len(STAGING),
               after_init=None, not_before=0.0, on_start=None):
        """Queue an initialization job at a port; the qubit then follows ``path``."""
        p = self.port(side, k)
        p.jobs.append((qid, path, on_arrive, gate, gate_at, after_init, not_before, on_start))
        self.at(max(self.t, not_before), lambda: self._try_port(p))

    def _try_port(self, p: _Port) -> None:
        if p.initializing or p.site in self.occ or not p.jobs:
            return
        qid, path, on_arrive, gate, gate_at, after_init, not_before, on_start = p.jobs[0]
        if not_before > self.t + EPS:
            self.at(not_before, lambda: self._try_port(p))
            return
        p.jobs.popleft()
        if on_start is not None:
            on_start()
        p.initializing = True
        self.place(qid, p.site)
        start = self.t
        self.emit("INIT", [qid], start, self.tm.t_init, [p.site])
        ready = start + self.tm.t_init
        if after_init is not None:
            ready = after_init(qid, ready, p.site)

        def launch():
            p.initializing = False
            self.add_mover(qid, path, on_arrive, gate, gate_at)
            self.at(self.t, lambda: self._try_port(p))

        self.at(ready, launch)

    # main loop -----------------------------------------------------------------
    def _fire(self) -> None:
        while True:
            fired = False
            while self.events and self.events[0][0] <= self.t + EPS:
                _, _, fn = heapq.heappop(self.events)
                fn()
                fired = True
            if self.waiters:
                pending = self.waiters
                self.waiters = []
                for pred, fn in pending:
                    if pred():
                        fn()
                        fired = True
                    else:
                        self.waiters.append((pred, fn))
            if not fired:
                return

    def _close_run(self, mv: _Mover) -> None:
        if mv.run_start is None:
            return
        hops = mv.i - mv.run_from
        self.emit("SHUTTLE", [mv.qid], mv.run_start, hops * self.tick,
                  mv.path[mv.run_from:mv.i + 1], m=hops)
        mv.run_start = None

    def _step(self) -> bool:
        occ = self.occ
        cands = []
        for mv in self.movers:
            if mv.gate is not None and mv.i == mv.gate_at and not mv.gate():
                continue
            nxt = mv.path[mv.i + 1]
            if nxt in occ:
                continue
            cands.append((-(len(mv.path) - mv.i), mv.qid, mv))
        if not cands:
            return False
        cands.sort(key=lambda c: (c[0], c[1]))
        claimed = set()
        moved = []
        for _, _, mv in cands:
            nxt = mv.path[mv.i + 1]
            if nxt in claimed:
                continue
            claimed.add(nxt)
            moved.append(mv)
        t = self.t
        for mv in moved:
            cur = mv.path[mv.i]
            del occ[cur]
            if len(cur) == 3 and cur[0] == "site":
                p = self.ports[(cur[1], cur[2])]
                self.at(t + self.tick, lambda p=p: self._try_port(p))
        for mv in moved:
            nxt = mv.path[mv.i + 1]
            occ[nxt] = mv.qid
            self.pos[mv.qid] = nxt
            if mv.run_start is not None and abs(mv.last_end - t) > EPS:
                self._close_run(mv)
            if mv.run_start is None:
                mv.run_start = t
                mv.run_from = mv.i
            mv.i += 1
            mv.last_end = t + self.tick
            if mv.i == len(mv.path) - 1:
                self._close_run(mv)
                if mv.on_arrive is not None:
                    self.at(t + self.tick, mv.on_arrive)
        done = {id(mv) for mv in moved if mv.i == len(mv.path) - 1}
        if done:
            self.movers = [mv for mv in self.movers if id(mv) not in done]
        # runs broken by a wait are closed lazily; close them now if the mover stalled
        moved_ids = {id(mv) for mv in moved}
        for mv in self.movers:
            if mv.run_start is not None and id(mv) not in moved_ids:
                self._close_run(mv)
        return True

    def run(self) -> None:
        while True:
            self._fire()
            if self.movers and self._step():
                self.t += self.tick
                continue
            for mv in self.movers:
                self._close_run(mv)
            if self.events:
                self.t = max(self.t, self.events[0][0])
                continue
            if self.movers or self.waiters:
                raise ScheduleError(self._deadlock_message())
            return

    def _deadlock_message(self) -> str:
        if not self.movers:
            return "schedule stalled: a phase never became ready"
        blocked = [mv for mv in self.movers if mv.path[mv.i + 1] in self.occ]
        if not blocked:
            mv = self.movers[0]
            return f"schedule stalled: qubit {mv.qid} waits at {mv.path[mv.i]} for a release"
        mv = blocked[0]
        nxt = mv.path[mv.i + 1]
        where = mv.path[mv.i]
        if isinstance(nxt, tuple) and len(nxt) == 2:
            kind = "channel row" if nxt[0] == where[0] else "lane column"
            idx = nxt[0] if kind == "channel row" else nxt[1]
            return (f"routing failure: qubit {mv.qid} blocked at {where} in {kind} {idx} "
                    f"(next dot {nxt} held by qubit {self.occ.get(nxt)})")
        return f"routing failure: qubit {mv.qid} blocked at {where} before {nxt}"


# --------------------------------------------------------------------------
# experiment construction


def _off_array(dot) -> bool:
    return dot is None or len(dot) == 3


class _Experiment:
    def __init__(self, band: _Band, timing: TimingParams, mode: str, rounds: int,
                 basis: str | None, data_phase: bool):
        if mode not in MODES:
            raise ScheduleError(f"unknown mode {mode!r}")
        self.band = band
        self.tm = timing
        self.mode = mode
        self.rounds = rounds
        self.basis = basis
        self.data_phase = data_phase
        self.sim = _Sim(timing)
        self.pipelined = mode == "pipelined"
        self.n_data = len(band.data)
        self.n_items = len(band.items)
        self.n_sets = min(rounds, 3) if self.pipelined else 1
        self.n_qubits = self.n_data + self.n_sets * self.n_items
        self.data_dot = {}
        for qid, (pi, q) in enumerate(band.data):
            self.data_dot[qid] = band.patches[pi].data_sites[q]
        self.data_qid = {key: qid for qid, key in enumerate(band.data)}
        self.cnot_start: list[float] = []
        self.round_agents: dict[int, list[int]] = {}
        self.wave_members: dict = {}
        self.arrived: dict = {}
        self.reached: set = set()
        self.parked: set = set()
        self.expected_order: dict = {}
        self.waves: dict = {}
        self._plans()

    # planning ----------------------------------------------------------------
    def _side_of_col(self, col: int) -> str:
        if self.mode != "both_edges":
            return "left"
        return "left" if 2 * col < self.band.left + self.band.right else "right"

    def _plans(self) -> None:
        b = self.band
        enter = {"left": [], "right": []}
        leave = {"left": [], "right": []}
        self.item_side = []
        for idx, (pi, s) in enumerate(b.items):
            lr, lc = b.park(pi, s, "L")
            rr, rc = b.park(pi, s, "R")
            side = self._side_of_col(lc)
            self.item_side.append(side)
            if side == "left":
                enter["left"].append(((lc == b.left, lr, -lc), (idx, lr, -lc)))
            else:
                enter["right"].append(((False, lr, lc), (idx, lr, lc)))
            out = "right" if self.mode != "both_edges" else side
            if out == "right":
                leave["right"].append(((rc != b.right, rr, -rc), (idx, rr, -rc)))
            else:
                leave["left"].append(((False, rr, rc), (idx, rr, rc)))
        self.enter_plan, self.exit_plan = {}, {}
        for side in ("left", "right"):
            for store, src, name in ((self.enter_plan, enter, "enter"),
                                     (self.exit_plan, leave, "exit")):
                entries = [e for _, e in sorted(src[side], key=lambda t: t[0])]
                if not entries:
                    continue
                plan, nw = _plan(entries, b.n_ports)
                store[side] = plan
                self.waves[f"{name}_{side}"] = _wave_assignment(plan, nw, b.n_ports, lambda k: k)
        if self.data_phase:
            din = {"left": [], "right": []}
            dout = {"left": [], "right": []}
            for qid in range(self.n_data):
                r, c = self.data_dot[qid]
                side = "left" if 2 * c < b.left + b.right else "right"
                if side == "left":
                    din[side].append(((r, -c), (qid, r, -c)))
                    dout[side].append(((r, c), (qid, r, c)))
                else:
                    din[side].append(((r, c), (qid, r, c)))
                    dout[side].append(((r, -c), (qid, r, -c)))
            self.data_in, self.data_out = {}, {}
            for side in ("left", "right"):
                for store, src, name in ((self.data_in, din, "data_in"),
                                         (self.data_out, dout, "data_out")):
                    entries = [e for _, e in sorted(src[side], key=lambda t: t[0])]
                    if entries:
                        plan, nw = _plan(entries, b.n_ports)
                        store[side] = plan
                        self.waves[f"{name}_{side}"] = _wave_assignment(
                            plan, nw, b.n_ports, lambda k: k)

    @staticmethod
    def _entry_order(plan, side, targets):
        """Entries sorted farthest-first within each row."""
        sign = -1 if side == "left" else 1
        return sorted(plan, key=lambda e: (targets[e[0]][0], sign * targets[e[0]][1]))

    def anc_qid(self, r: int, idx: int) -> int:
        return self.n_data + ((r - 1) % self.n_sets) * self.n_items + idx

    # gates -------------------------------------------------------------------
    def _register(self, phase, side, w, qid) -> None:
        self.wave_members.setdefault((phase, side, w), []).append(qid)

    def _arrived_gate(self, phase, side, w) -> Callable[[], bool] | None:
        if w == 0:
            return None
        key = (phase, side, w - 1)
        need = len(self.wave_members[key])
        return lambda: self.arrived.get(key, 0) >= need

    def _lane_gate(self, q, w, spans, parkers) -> Callable[[], bool] | None:
        """Hold a qubit until earlier-wave traffic heading the other way along its
        lane stretch has turned off the lane.  Lane parkers are skipped: they
        wait for their crossers instead."""
        _, a0, a1 = spans[q]
        lo, hi = min(a0, a1), max(a0, a1)
        d = (a1 > a0) - (a1 < a0)
        block = []
        for o, (wo, b0, b1) in spans.items():
            if wo >= w or o in parkers:
                continue
            e = (b1 > b0) - (b1 < b0)
            if d and e == d:
                continue
            if min(b0, b1) <= hi and lo <= max(b0, b1):
                block.append((o, b1))
        if not block:
            return None
        pos = self.sim.pos

        def gate():
            for o, row in block:
                p = pos.get(o)
                if p is None or len(p) == 3 or p[0] != row:
                    return False
            return True

        return gate

    def _reached_gate(self, phase, side, w, queue_dot) -> Callable[[], bool]:
        occ = self.sim.occ
        pos = self.sim.pos
        key = (phase, side, w - 1)

        def gate():
            if queue_dot in occ:
                return False
            if w == 0 or key in self.reached:
                return True
            if all(_off_array(pos.get(q)) for q in self.wave_members[key]):
                self.reached.add(key)
                return True
            return False

        return gate

    def _row_clear_gate(self, r: int, row: int, col: int) -> Callable[[], bool] | None:
        """Previous-round agents in ``row`` at or left of ``col`` must have moved on."""
        if not self.pipelined or r == 1:
            return None
        prev = [q for q, rr in self.prev_rows(r - 1) if rr == row]
        pos = self.sim.pos
        exit_lane = self.band.right

        def gate():
            for q in prev:
                p = pos.get(q)
                if p is not None and len(p) == 2 and p[1] != exit_lane and (
                        p[0] != row or p[1] <= col):
                    return False
            return True

        return gate

    def _ahead_gate(self, ahead: list[int], row: int, lane: int, my_port: int,
                    port_row: dict[int, int]) -> Callable[[], bool] | None:
        """Wait until agents bound farther along the same row have turned into it.

        An agent that came from a port on the same side of the row and nearer to
        it is already ahead in the lane once it has left its queue, and the lane
        keeps order.
        """
        if not ahead:
            return None
        pos = self.sim.pos
        convoy = {q for q in ahead
                  if (port_row[q] - row) * (my_port - row) > 0
                  and abs(port_row[q] - row) <= abs(my_port - row)}

        def gate():
            for q in ahead:
                p = pos.get(q)
                if p is None or len(p) == 3:
                    return False
                if q in convoy:
                    continue
                if p[0] != row or p[1] == lane:
                    return False
            return True

        return gate

    def _crossing_gate(self, r, q, row, side, plan) -> Callable[[], bool] | None:
        """A qubit parking in the lane waits for everyone whose lane run crosses its dot."""
        b = self.band
        cross = []
        for idx, _, k in plan:
            other = self.anc_qid(r, idx)
            if other == q:
                continue
            pr = b.port_rows[k]
            tr = b.park(*b.items[idx], "L")[0]
            if min(pr, tr) <= row <= max(pr, tr):
                cross.append(other)
        if not cross:
            return None
        parked = self.parked
        return lambda: all((r, o) in parked for o in cross)

    @staticmethod
    def _ahead_lists(targets: list[tuple[int, tuple[int, int]]]) -> dict[int, list[int]]:
        """For entries given in entry order, list earlier entries sharing the target row."""
        seen: dict[int, list[int]] = {}
        out = {}
        for q, (row, _) in targets:
            out[q] = list(seen.get(row, []))
            seen.setdefault(row, []).append(q)
        return out

    def prev_rows(self, r: int):
        b = self.band
        for idx, (pi, s) in enumerate(b.items):
            yield self.anc_qid(r, idx), b.park(pi, s, "L")[0]

    # data phases -------------------------------------------------------------
    def start(self) -> None:
        if not self.data_phase:
            for qid, dot in self.data_dot.items():
                self.sim.place(qid, dot)
            self.start_round(1)
            return
        total = self.n_data
        count = [0]

        def arrived(phase, side, w):
            def fn():
                self.arrived[(phase, side, w)] = self.arrived.get((phase, side, w), 0) + 1
                count[0] += 1
                if count[0] == total:
                    self.start_round(1)
            return fn

        after = None
        if self.basis == "X":
            def after(qid, ready, site):
                self.sim.emit("H", [qid], ready, self.tm.t_h, [site])
                return ready + self.tm.t_h
        for side, plan in self.data_in.items():
            for qid, w, k in sorted(plan, key=lambda e: e[1]):
                self._register("din", side, w, qid)
            ordered = sorted(plan, key=lambda e: (e[1], e[2]))
            port_row = {qid: self.band.port_rows[k] for qid, _, k in plan}
            ahead = self._ahead_lists([(qid, self.data_dot[qid]) for qid, _, _ in
                                       self._entry_order(plan, side, self.data_dot)])
            for qid, w, k in ordered:
                path = _enter_path(self.band, side, k, self.data_dot[qid])
                gate = _both(self._arrived_gate("din", side, w),
                             self._ahead_gate(ahead[qid], self.data_dot[qid][0],
                                              self.band.lane(side), self.band.port_rows[k],
                                              port_row))
                self.sim.submit(side, k, qid, path, arrived("din", side, w), gate,
                                after_init=after)

    def finish(self) -> None:
        if not self.data_phase:
            return
        t0 = self.sim.t
        ready = t0
        if self.basis == "X":
            for qid in range(self.n_data):
                self.sim.emit("H", [qid], t0, self.tm.t_h, [self.data_dot[qid]])
            ready = t0 + self.tm.t_h

        def launch():
            for side, plan in self.data_out.items():
                for qid, w, k in sorted(plan, key=lambda e: e[1]):
                    self._register("dout", side, w, qid)
                for qid, w, k in sorted(plan, key=lambda e: e[1]):
                    path = _exit_path(self.band, side, k, self.data_dot[qid])
                    gate = self._reached_gate("dout", side, w, ("queue", side, k))
                    self.sim.add_mover(qid, path, self._measure_fn(qid, side, k, ("data", qid)),
                                       gate, 0)

        self.sim.at(ready, launch)

    def _measure_fn(self, qid, side, k, tag, done=None):
        sim = self.sim

        def fn():
            t = sim.t
            site = ("site", side, k)
            sim.emit("MEASURE", [qid], t, self.tm.t_meas, [site], tag)

            def release():
                sim.remove(qid)
                sim._try_port(sim.port(side, k))
                if done is not None:
                    done()

            sim.at(t + self.tm.t_meas, release)

        return fn

    # syndrome-extraction rounds -------------------------------------------------
    def start_round(self, r: int) -> None:
        b = self.band
        phase = ("enter", r)
        agents = [self.anc_qid(r, idx) for idx in range(self.n_items)]
        self.round_agents[r] = agents
        parked = [0]

        def on_park(side, w, q):
            def fn():
                self.parked.add((r, q))
                key = (phase, side, w)
                self.arrived[key] = self.arrived.get(key, 0) + 1
                parked[0] += 1
                if parked[0] == self.n_items:
                    self._all_parked(r)
            return fn

        started = [0]

        def on_start():
            # pipelined rounds queue the next round's resets right behind this one
            started[0] += 1
            if started[0] == self.n_items and self.pipelined and r < self.rounds:
                old = self.round_agents.get(r + 1 - self.n_sets, [])
                pos = self.sim.pos
                self.sim.when(lambda: all(q not in pos for q in old),
                              lambda: self.start_round(r + 1))

        for side, plan in self.enter_plan.items():
            for idx, w, k in plan:
                self._register(phase, side, w, self.anc_qid(r, idx))
        for side, plan in self.enter_plan.items():
            targets = {self.anc_qid(r, idx): b.park(*b.items[idx], "L") for idx, _, _ in plan}
            order = self._entry_order([(self.anc_qid(r, i), w, k) for i, w, k in plan],
                                      side, targets)
            ahead = self._ahead_lists([(q, targets[q]) for q, _, _ in order])
            port_row = {self.anc_qid(r, i): b.port_rows[k] for i, _, k in plan}
            spans = {self.anc_qid(r, i): (w, b.port_rows[k], targets[self.anc_qid(r, i)][0])
                     for i, w, k in plan}
            parkers = {q for q, t in targets.items() if t[1] == b.lane(side)}
            for idx, w, k in sorted(plan, key=lambda e: (e[1], e[2])):
                pi, s = b.items[idx]
                q = self.anc_qid(r, idx)
                target = targets[q]
                path = _enter_path(b, side, k, target)
                g1 = self._lane_gate(q, w, spans, parkers)
                g2 = self._row_clear_gate(r, target[0], target[1])
                g3 = self._ahead_gate(ahead[q], target[0], b.lane(side),
                                      b.port_rows[k], port_row)
                if target[1] == b.lane(side):
                    g3 = self._crossing_gate(r, q, target[0], side, plan)
                gate = _both(_both(g1, g2), g3)
                self.sim.submit(side, k, q, path, on_park(side, w, q), gate,
                                on_start=on_start)

    def _all_parked(self, r: int) -> None:
        prev = self.round_agents.get(r - 1, []) if self.pipelined else []
        pos = self.sim.pos

        def ready():
            return all(_off_array(pos.get(q)) for q in prev)

        self.sim.when(ready, lambda: self._cnot_phase(r))

    def _cnot_phase(self, r: int) -> None:
        b, sim, tm = self.band, self.sim, self.tm
        t0 = sim.t
        self.cnot_start.append(t0)
        anc = []
        for idx, (pi, s) in enumerate(b.items):
            q = self.anc_qid(r, idx)
            anc.append((q, pi, s, b.park(pi, s, "L"), b.park(pi, s, "R")))
        for q, pi, s, dl, dr in anc:
            if dr not in sim.occ:
                sim.occ[dr] = -1
        for q, pi, s, dl, dr in anc:
            if s.kind == "X":
                sim.emit("H", [q], t0, tm.t_h, [dl])
        c = t0 + tm.t_h
        where = "L"
        for slot in range(5):
            want = SLOT_POSITIONS[slot]
            if want != where:
                for q, pi, s, dl, dr in anc:
                    a, z = (dl, dr) if want == "R" else (dr, dl)
                    sim.emit("SHUTTLE", [q], c, self.tick, [a, z], m=1)
                c += self.tick
                where = want
            for q, pi, s, dl, dr in anc:
                corner = CORNER_ORDER[s.kind][slot]
                dq = s.corner(corner) if corner else None
                if dq is None:
                    continue
                data = self.data_qid[(pi, dq)]
                pair = [q, data] if s.kind == "X" else [data, q]
                sim.emit("CNOT", pair, c, tm.t_cnot)
            c += tm.t_cnot
        for q, pi, s, dl, dr in anc:
            if s.kind == "X":
                sim.emit("H", [q], c, tm.t_h, [dr])
        c += tm.t_h

        def end():
            for q, pi, s, dl, dr in anc:
                if sim.occ.get(dl) == q:
                    del sim.occ[dl]
            for q, pi, s, dl, dr in anc:
                sim.occ[dr] = q
                sim.pos[q] = dr
            self._launch_exits(r)

        sim.at(c, end)

    @property
    def tick(self) -> float:
        return self.tm.t_shuttle

    def _launch_exits(self, r: int) -> None:
        b = self.band
        phase = ("exit", r)
        left = [self.n_items]

        def done():
            left[0] -= 1
            if left[0] == 0:
                self._round_done(r)

        for side, plan in self.exit_plan.items():
            for idx, w, k in plan:
                self._register(phase, side, w, self.anc_qid(r, idx))
        for side, plan in self.exit_plan.items():
            for idx, w, k in sorted(plan, key=lambda e: e[1]):
                pi, s = b.items[idx]
                q = self.anc_qid(r, idx)
                path = _exit_path(b, side, k, b.park(pi, s, "R"))
                gate = self._reached_gate(phase, side, w, ("queue", side, k))
                tag = ("anc", r, idx)
                self.sim.add_mover(q, path, self._measure_fn(q, side, k, tag, done), gate, 0)

    def _round_done(self, r: int) -> None:
        if r == self.rounds:
            self.finish()
        elif not self.pipelined:
            self.start_round(r + 1)

    # assembly --------------------------------------------------------------------
    def build(self) -> SyndromeSchedule:
        self.start()
        self.sim.run()
        home = {} if self.data_phase else dict(self.data_dot)
        ins = _fill_idle(self.sim.out, home)
        makespan = max((i.end for i in ins), default=0.0)
        b = self.band
        items = []
        for pi, s in b.items:
            items.append((s.kind, [self.data_qid[(pi, q)] for q in s.data]))
        meta = {
            "ports_per_side": {"left": b.n_ports, "right": b.n_ports},
            "items": items,
            "cnot_start": list(self.cnot_start),
            "basis": self.basis,
            "n_data": self.n_data,
            "home": home,
            "data_phase": self.data_phase,
            "order": self._expected_orders(),
        }
        if self.basis is not None:
            p0 = b.patches[0]
            d = p0.distance
            if self.basis == "Z":
                support = [self.data_qid[(0, j)] for j in range(d)]
            else:
                support = [self.data_qid[(0, i * d)] for i in range(p0.height)]
            meta["observable"] = support
        return SyndromeSchedule(tuple(ins), self.rounds, dict(self.waves), makespan,
                                self.mode, self.tm, self.n_qubits, meta)

    def _expected_orders(self) -> list[list[int]]:
        out = []
        for pi, s in self.band.items:
            seq = []
            for slot in range(5):
                corner = CORNER_ORDER[s.kind][slot]
                dq = s.corner(corner) if corner else None
                if dq is not None:
                    seq.append(self.data_qid[(pi, dq)])
            out.append(seq)
        return out


def _both(g1, g2):
    if g1 is None:
        return g2
    if g2 is None:
        return g1
    return lambda: g1() and g2()


def _fill_idle(instructions: list[TimedInstruction], home: dict | None = None
               ) -> list[TimedInstruction]:
    """Materialize an IDLE for every gap of at least 1 ns in each qubit's timeline."""
    home = home or {}
    by_q: dict[int, list[TimedInstruction]] = {}
    for ins in instructions:
        for q in ins.qubits:
            by_q.setdefault(q, []).append(ins)
    out = list(instructions)
    for q, lst in by_q.items():
        lst.sort(key=lambda i: (i.start, i.end))
        cursor = lst[0].end
        site = lst[0].site if lst[0].site is not None else home.get(q)
        for ins in lst[1:]:
            if ins.start - cursor >= 1.0 - EPS:
                out.append(TimedInstruction("IDLE", (q,), cursor, ins.start - cursor,
                                            (site,) if site is not None else ()))
            if ins.end > cursor:
                cursor = ins.end
                site = ins.site if ins.site is not None else site
    out.sort(key=lambda i: (i.start, KIND_ORDER[i.kind]))
    return out


KIND_ORDER = {"INIT": 0, "IDLE": 1, "SHUTTLE": 2, "H": 3, "CNOT": 4, "T_INJECT": 5,
              "S_FOLD": 6, "MEASURE": 7}


# --------------------------------------------------------------------------
# public builders


def _n_ports(waves) -> int:
    if isinstance(waves, WaveAssignment):
        return waves.ports_per_side
    return int(waves)


def _band_for(patch: CodePatch, waves, mode: str) -> _Band:
    patches = [patch]
    if mode == "two_column":
        d = patch.distance
        twin = make_patch(d, (patch.origin[0], patch.origin[1] + d + 1), patch.height, 1)
        patches.append(twin)
    return _Band(patches, _n_ports(waves))


def build_se_round(patch: CodePatch, waves, timing: TimingParams | None = None,
                   mode: str = "non_pipelined", rounds: int = 1) -> SyndromeSchedule:
    """Syndrome-extraction rounds on a patch whose data qubits are already in place.

    ``waves`` is the patch's :class:`WaveAssignment` (only its port count is
    used; the band planner regroups ancillas per side and mode).  With
    ``mode="two_column"`` a congruent patch is placed in the second column
    and both share the ports.
    """
    if rounds < 1:
        raise ScheduleError(f"rounds must be >= 1, got {rounds}")
    timing = timing or TimingParams()
    band = _band_for(patch, waves, mode)
    return _Experiment(band, timing, mode, rounds, None, False).build()


def build_memory_experiment(patch: CodePatch, rounds: int, basis: str, waves,
                            timing: TimingParams | None = None,
                            mode: str = "non_pipelined") -> SyndromeSchedule:
    """Serialized data initialization, ``rounds`` SE rounds, serialized data readout."""
    if rounds < 1:
        raise ScheduleError(f"rounds must be >= 1, got {rounds}")
    if basis not in ("X", "Z"):
        raise ScheduleError(f"basis must be X or Z, got {basis!r}")
    if mode == "two_column":
        raise ScheduleError("memory experiments run on a single patch")
    timing = timing or TimingParams()
    band = _band_for(patch, waves, mode)
    return _Experiment(band, timing, mode, rounds, basis, True).build()


def ls_ports(d: int, separation: int, rho) -> int:
    """Ports per side beside a lattice-surgery band of ``d + separation`` data rows."""
    from .geometry import as_density
    return math.ceil(2 * as_density(rho) * (d + separation + 1))


def build_lattice_surgery(patch_a: CodePatch, patch_b: CodePatch, separation_s: int, waves,
                          timing: TimingParams | None = None, rounds: int | None = None,
                          rho=None) -> SyndromeSchedule:
    """Merge-split as ``d`` pipelined rounds over a two-column band.

    The band holds one column per patch, each stretched to ``d + s`` data rows
    so the routing rows between the patches are stabilized too.
    """
    if patch_a.distance != patch_b.distance:
        raise ScheduleError("lattice surgery needs congruent patches")
    if patch_a.column_slot == patch_b.column_slot:
        raise ScheduleError("lattice surgery requires two-column layout")
    if separation_s < 0:
        raise ScheduleError("separation must be nonnegative")
    timing = timing or TimingParams()
    d = patch_a.distance
    h = d + separation_s
    r0 = min(patch_a.origin[0], patch_b.origin[0])
    if rho is not None:
        n_ports = ls_ports(d, separation_s, rho)
    else:
        n_ports = math.ceil(_n_ports(waves) * (h + 1) / (d + 1))
    band = _Band([make_patch(d, (r0, 0), h, 0), make_patch(d, (r0, d + 1), h, 1)], n_ports)
    return _Experiment(band, timing, "pipelined", rounds or d, None, False).build()


def tcnot_hops(d: int, separation_s: int, timing: TimingParams) -> int:
    return max(1, round((separation_s + d) * timing.c_route))


def build_tcnot(patch_a: CodePatch, patch_b: CodePatch, separation_s: int,
                timing: TimingParams | None = None, one_way: bool = False) -> SyndromeSchedule:
    """Transversal CNOT: every data qubit of A travels to its partner in B and back.

    Shuttles are recorded with their hop count but without dot-level paths:
    the two patches' data blocks cannot interleave inside one column, so the
    transit is accounted for in time and noise only.
    """
    if patch_a.distance != patch_b.distance or patch_a.height != patch_b.height:
        raise ScheduleError("transversal CNOT needs congruent patches")
    if separation_s < 0:
        raise ScheduleError("separation must be nonnegative")
    timing = timing or TimingParams()
    n = patch_a.n_data
    m = tcnot_hops(patch_a.distance, separation_s, timing)
    if n > patch_a.distance * patch_a.height:
        raise ScheduleError("channel capacity exceeded")
    ins = []
    t_go = m * timing.t_shuttle
    for q in range(n):
        a, b = q, n + q
        src, (r, c) = patch_a.data_sites[q], patch_b.data_sites[q]
        dst = (r - 1, c)  # channel dot beside the partner
        ins.append(TimedInstruction("SHUTTLE", (a,), 0.0, t_go, (src, dst), m=m, abstract=True))
        ins.append(TimedInstruction("CNOT", (a, b), t_go, timing.t_cnot, abstract=True))
        if not one_way:
            ins.append(TimedInstruction("SHUTTLE", (a,), t_go + timing.t_cnot, t_go,
                                        (dst, src), m=m, abstract=True))
    home = {q: patch_a.data_sites[q] for q in range(n)}
    home.update({n + q: patch_b.data_sites[q] for q in range(n)})
    ins = _fill_idle(ins, home)
    makespan = max(i.end for i in ins)
    meta = {"ports_per_side": {}, "items": [], "cnot_start": [], "order": [], "home": home,
            "n_data": 2 * n, "separation": separation_s, "hops": m}
    return SyndromeSchedule(tuple(ins), 0, {}, makespan, "tcnot", timing, 2 * n, meta)


# --------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    collisions: list = field(default_factory=list)
    capacity: list = field(default_factory=list)
    order: list = field(default_factory=list)
    lifecycle: list = field(default_factory=list)
    timing: list = field(default_factory=list)
    idle_ns: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not (self.collisions or self.capacity or self.order or self.lifecycle
                    or self.timing)

    def summary(self) -> str:
        return (f"collisions={len(self.collisions)} capacity={len(self.capacity)} "
                f"order={len(self.order)} lifecycle={len(self.lifecycle)} "
                f"timing={len(self.timing)}")


def _occupancy(schedule: SyndromeSchedule, report: ValidationReport) -> dict:
    by_q: dict[int, list[TimedInstruction]] = {}
    for ins in schedule.instructions:
        for q in ins.qubits:
            by_q.setdefault(q, []).append(ins)
    spans: dict = {}
    home = schedule.meta.get("home", {})

    def add(dot, q, a, b):
        if dot is not None and b - a > EPS:
            spans.setdefault(dot, []).append((a, b, q))

    for q, lst in by_q.items():
        lst.sort(key=lambda i: (i.start, KIND_ORDER[i.kind]))
        first = lst[0]
        cur = first.path[0] if first.path else home.get(q)
        since = first.start
        end = since
        for ins in lst:
            end = max(end, ins.end)
            if ins.kind == "INIT":
                if cur is not None and since < ins.start:
                    add(cur, q, since, ins.start)
                cur, since = ins.path[0], ins.start
                continue
            if ins.kind == "MEASURE":
                add(cur, q, since, ins.end)
                cur, since = None, ins.end
                continue
            if ins.kind != "SHUTTLE":
                continue
            if ins.abstract:
                add(cur, q, since, ins.start)
                cur, since = ins.path[-1], ins.end
                continue
            if cur is not None and ins.path[0] != cur:
                report.collisions.append(("teleport", q, ins.start, cur, ins.path[0]))
            step = ins.duration / ins.m
            add(ins.path[0], q, since, ins.start + step)
            for k in range(1, ins.m):
                add(ins.path[k], q, ins.start + k * step, ins.start + (k + 1) * step)
            cur, since = ins.path[-1], ins.end
        add(cur, q, since, end)
    return spans


def validate(schedule: SyndromeSchedule) -> ValidationReport:
    """Check collision freedom, port capacity, CNOT order and per-round lifecycle."""
    rep = ValidationReport()
    tm = schedule.timing
    for ins in schedule.instructions:
        if ins.kind == "SHUTTLE" and abs(ins.duration - ins.m * tm.t_shuttle) > 1e-6:
            rep.timing.append(("shuttle-duration", ins.qubits, ins.start))
    spans = _occupancy(schedule, rep)
    for dot, lst in spans.items():
        lst.sort()
        last_end, last_q = -math.inf, None
        for a, b, q in lst:
            if a < last_end - EPS and q != last_q:
                rep.collisions.append((dot, last_q, q, a))
            if b > last_end:
                last_end, last_q = b, q
    ports = schedule.meta.get("ports_per_side", {})
    for side in ("left", "right"):
        cap = ports.get(side)
        if cap is None:
            continue
        evs = []
        for ins in schedule.instructions:
            if ins.kind in ("INIT", "MEASURE") and ins.path and len(ins.path[0]) == 3:
                _, s, k = ins.path[0]
                if s != side:
                    continue
                if k >= cap:
                    rep.capacity.append(("port-index", side, k, ins.start))
                evs.append((ins.start, 1))
                evs.append((ins.end, -1))
        evs.sort()
        live = 0
        for t, dv in evs:
            live += dv
            if live > cap:
                rep.capacity.append(("simultaneous", side, live, t))
    _check_rounds(schedule, rep)
    rep.idle_ns = schedule.idle_by_qubit()
    return rep


def _check_rounds(schedule: SyndromeSchedule, rep: ValidationReport) -> None:
    order = schedule.meta.get("order", [])
    if not order:
        return
    by_q: dict[int, list[TimedInstruction]] = {}
    for ins in schedule.instructions:
        if ins.kind in ("INIT", "MEASURE", "CNOT"):
            for q in ins.qubits:
                by_q.setdefault(q, []).append(ins)
    n_data = schedule.meta.get("n_data", 0)
    seen = set()
    for q, lst in by_q.items():
        if q < n_data:
            continue
        lst.sort(key=lambda i: i.start)
        partners, inits = [], 0
        for ins in lst:
            if ins.kind == "INIT":
                inits += 1
                partners = []
            elif ins.kind == "CNOT":
                partners.append(ins.qubits[1] if ins.qubits[0] == q else ins.qubits[0])
            elif ins.kind == "MEASURE":
                _, r, idx = ins.tag
                if inits != 1:
                    rep.lifecycle.append(("init-count", q, r, idx))
                inits = 0
                if (r, idx) in seen:
                    rep.lifecycle.append(("measured-twice", r, idx))
                seen.add((r, idx))
                if partners != order[idx]:
                    rep.order.append((r, idx, partners, order[idx]))
    for r in range(1, schedule.rounds + 1):
        for idx in range(len(order)):
            if (r, idx) not in seen:
                rep.lifecycle.append(("unmeasured", r, idx))
