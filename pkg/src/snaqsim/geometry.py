"""Dot-array geometry, surface-code patch embedding and ancilla wave assignment.

Coordinates are ``(row, col)`` with row 0 at the top-left of the array.  The
fixed-width axis runs along columns; readout ports sit on the left and right
edges and are indexed by row.  A patch of distance ``d`` occupies ``2(d+1)``
dot rows: channel rows (ancilla lanes) on even offsets, data rows on odd
offsets, and one spare row before the next patch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

# Corner labels of a plaquette, in (vertical, horizontal) form.
CORNERS = ("NW", "NE", "SW", "SE")


class GeometryError(ValueError):
    """Raised for infeasible array or patch configurations."""


def as_density(rho) -> Fraction:
    """Coerce a readout density to an exact rational."""
    if isinstance(rho, Fraction):
        return rho
    if isinstance(rho, float):
        return Fraction(rho).limit_denominator(10**6)
    return Fraction(rho)


def ports_per_side(d: int, rho, height: int | None = None) -> int:
    """Integer count of readout ports on one side of a patch band.

    ``height`` is the number of data rows of the band (``d`` for a square patch).
    """
    rho = as_density(rho)
    h = d if height is None else height
    return math.floor(2 * rho * (h + 1))


def wave_count(n_ancillas: int, ports: Fraction | int) -> int:
    return math.ceil(Fraction(n_ancillas) / Fraction(ports))


def n_waves(d: int, rho) -> int:
    """Number of serialized ancilla waves for a distance-``d`` patch."""
    rho = as_density(rho)
    if rho <= 0:
        raise GeometryError(f"readout density must be positive, got {rho}")
    return wave_count(d * d - 1, 2 * rho * (d + 1))


@dataclass(frozen=True)
class DotArray:
    width: int
    length: int
    readout_density: Fraction
    port_positions: tuple[tuple[str, int], ...]

    def ports_on(self, side: str) -> list[int]:
        return [row for s, row in self.port_positions if s == side]

    def ports_adjacent(self, d: int) -> int:
        return ports_per_side(d, self.readout_density)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "length": self.length,
            "readout_density": str(self.readout_density),
            "port_positions": [list(p) for p in self.port_positions],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DotArray":
        return cls(
            width=int(data["width"]),
            length=int(data["length"]),
            readout_density=Fraction(data["readout_density"]),
            port_positions=tuple((str(s), int(r)) for s, r in data["port_positions"]),
        )


def build_array(width: int, length: int, rho) -> DotArray:
    """Build a fixed-width array with ports spread uniformly along both edges.

    A density above one places several ports on the same row; port ids are the
    index into ``port_positions``.
    """
    rho = as_density(rho)
    if rho <= 0:
        raise GeometryError(f"readout density must be positive, got {rho}")
    if width < 5:
        raise GeometryError(f"width {width} cannot host a distance-3 patch (need >= 5)")
    if length < width:
        raise GeometryError(f"length {length} is shorter than width {width}")
    n = math.floor(rho * length)
    rows = [min(length - 1, math.floor((k + Fraction(1, 2)) / rho)) for k in range(n)]
    ports = tuple(("left", r) for r in rows) + tuple(("right", r) for r in rows)
    return DotArray(width, length, rho, ports)


def max_distance(width: int, columns: int = 1) -> int:
    """Largest odd-agnostic distance embeddable across ``width`` dots."""
    if columns not in (1, 2):
        raise GeometryError(f"columns must be 1 or 2, got {columns}")
    if width < 5:
        raise GeometryError(f"width {width} is too small for any patch")
    if columns == 1:
        return width - 2
    dmax = (width - 3) // 2
    if dmax < 3:
        raise GeometryError(f"width {width} is too small for a two-column layout")
    return dmax


@dataclass(frozen=True)
class Stabilizer:
    """One plaquette check.

    ``gi``/``gj`` index the gap between data rows ``gi-1, gi`` and data
    columns ``gj-1, gj``; ``corners`` maps corner labels to data indices.
    """

    id: int
    kind: str
    gi: int
    gj: int
    corners: tuple[tuple[str, int], ...]

    @property
    def data(self) -> tuple[int, ...]:
        return tuple(q for _, q in self.corners)

    @property
    def weight(self) -> int:
        return len(self.corners)

    def corner(self, label: str) -> int | None:
        for c, q in self.corners:
            if c == label:
                return q
        return None


def rotated_stabilizers(d: int, h: int | None = None) -> list[Stabilizer]:
    """Stabilizers of a rotated surface code ``d`` columns wide, ``h`` rows tall.

    X checks live on the top and bottom boundaries, Z checks on the left and
    right, so a full data row is a Z logical and a full data column an X
    logical.  Ordering is by (gi, gj).
    """
    h = d if h is None else h
    out: list[Stabilizer] = []
    for gi in range(h + 1):
        for gj in range(d + 1):
            kind = "X" if (gi + gj) % 2 == 0 else "Z"
            top_bottom = gi in (0, h)
            left_right = gj in (0, d)
            if top_bottom and left_right:
                continue
            if top_bottom and kind != "X":
                continue
            if left_right and kind != "Z":
                continue
            corners = []
            for label, (i, j) in zip(
                CORNERS, ((gi - 1, gj - 1), (gi - 1, gj), (gi, gj - 1), (gi, gj))
            ):
                if 0 <= i < h and 0 <= j < d:
                    corners.append((label, i * d + j))
            out.append(Stabilizer(len(out), kind, gi, gj, tuple(corners)))
    return out


@dataclass(frozen=True)
class CodePatch:
    distance: int
    origin: tuple[int, int]
    data_sites: tuple[tuple[int, int], ...]
    stabilizers: tuple[Stabilizer, ...]
    channel_rows: tuple[int, ...]
    height: int = 0
    column_slot: int = 0

    def __post_init__(self):
        if self.height == 0:
            object.__setattr__(self, "height", self.distance)

    @property
    def n_data(self) -> int:
        return len(self.data_sites)

    @property
    def n_stabilizers(self) -> int:
        return len(self.stabilizers)

    @property
    def left_lane(self) -> int:
        return self.origin[1]

    @property
    def right_lane(self) -> int:
        return self.origin[1] + self.distance + 1

    @property
    def row_span(self) -> tuple[int, int]:
        """First row and one-past-last row of the band this patch owns."""
        r0 = self.origin[0]
        return r0, r0 + 2 * (self.height + 1)

    def park(self, stab: Stabilizer, position: str = "L") -> tuple[int, int]:
        """Dot where the ancilla of ``stab`` sits at lockstep position L or R."""
        r0, c0 = self.origin
        return (r0 + 2 * stab.gi, c0 + stab.gj + (1 if position == "R" else 0))

    def count_by_kind(self) -> dict[str, int]:
        out = {"X": 0, "Z": 0}
        for s in self.stabilizers:
            out[s.kind] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "distance": self.distance,
            "height": self.height,
            "origin": list(self.origin),
            "column_slot": self.column_slot,
            "data_sites": [list(s) for s in self.data_sites],
            "channel_rows": list(self.channel_rows),
            "stabilizers": [
                {"id": s.id, "kind": s.kind, "gi": s.gi, "gj": s.gj,
                 "corners": [[c, q] for c, q in s.corners]}
                for s in self.stabilizers
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CodePatch":
        stabs = tuple(
            Stabilizer(int(s["id"]), s["kind"], int(s["gi"]), int(s["gj"]),
                       tuple((c, int(q)) for c, q in s["corners"]))
            for s in data["stabilizers"]
        )
        return cls(
            distance=int(data["distance"]),
            origin=tuple(data["origin"]),
            data_sites=tuple(tuple(s) for s in data["data_sites"]),
            stabilizers=stabs,
            channel_rows=tuple(data["channel_rows"]),
            height=int(data.get("height", data["distance"])),
            column_slot=int(data.get("column_slot", 0)),
        )


def make_patch(d: int, origin: tuple[int, int] = (0, 0), height: int | None = None,
               column_slot: int = 0) -> CodePatch:
    if d < 3 or d % 2 == 0:
        raise GeometryError(f"distance must be odd and >= 3, got {d}")
    h = d if height is None else height
    if h < 1:
        raise GeometryError(f"patch height must be positive, got {h}")
    r0, c0 = origin
    data = tuple((r0 + 2 * i + 1, c0 + 1 + j) for i in range(h) for j in range(d))
    channels = tuple(r0 + 2 * gi for gi in range(h + 1))
    return CodePatch(d, (r0, c0), data, tuple(rotated_stabilizers(d, h)), channels,
                     h, column_slot)


def embed_patch(array: DotArray, d: int, column_slot: int = 0, row_slot: int = 0,
                columns: int | None = None,
                occupied: Iterable[tuple[int, int]] = ()) -> CodePatch:
    """Place a distance-``d`` patch in the given column and row slot.

    ``columns`` defaults to 2 when ``column_slot`` is 1.  In a two-column
    layout the two patches share the middle lane.
    """
    if column_slot not in (0, 1):
        raise GeometryError(f"column slot must be 0 or 1, got {column_slot}")
    columns = (2 if column_slot == 1 else 1) if columns is None else columns
    bound = max_distance(array.width, columns)
    if d > bound:
        kind = "w-2" if columns == 1 else "floor((w-3)/2)"
        raise GeometryError(
            f"distance {d} exceeds the {kind} bound of {bound} for width {array.width}"
        )
    if (column_slot, row_slot) in set(occupied):
        raise GeometryError(f"slot ({column_slot}, {row_slot}) is already occupied")
    r0 = row_slot * 2 * (d + 1)
    if r0 + 2 * d + 1 > array.length:
        raise GeometryError(f"row slot {row_slot} does not fit in length {array.length}")
    return make_patch(d, (r0, column_slot * (d + 1)), column_slot=column_slot)


def merged_patch(d: int, separation: int, origin: tuple[int, int] = (0, 0)) -> CodePatch:
    """Patch formed by merging two distance-``d`` patches ``separation`` data rows apart."""
    if separation < 0:
        raise GeometryError("separation must be nonnegative")
    return make_patch(d, origin, height=2 * d + separation)


@dataclass(frozen=True)
class WaveAssignment:
    n_waves: int
    wave_of_ancilla: dict[int, int]
    ports_of_wave: dict[int, list[int]]
    port_of_ancilla: dict[int, int] = field(default_factory=dict)
    ports_per_side: int = 0

    def members(self, wave: int) -> list[int]:
        return [a for a, w in self.wave_of_ancilla.items() if w == wave]

    def to_dict(self) -> dict:
        return {
            "n_waves": self.n_waves,
            "ports_per_side": self.ports_per_side,
            "wave_of_ancilla": {str(k): v for k, v in self.wave_of_ancilla.items()},
            "port_of_ancilla": {str(k): v for k, v in self.port_of_ancilla.items()},
            "ports_of_wave": {str(k): v for k, v in self.ports_of_wave.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WaveAssignment":
        return cls(
            n_waves=int(data["n_waves"]),
            wave_of_ancilla={int(k): int(v) for k, v in data["wave_of_ancilla"].items()},
            ports_of_wave={int(k): list(v) for k, v in data["ports_of_wave"].items()},
            port_of_ancilla={int(k): int(v) for k, v in data["port_of_ancilla"].items()},
            ports_per_side=int(data.get("ports_per_side", 0)),
        )


def band_port_rows(r0: int, height: int, n_ports: int) -> list[int]:
    """Rows of ``n_ports`` ports spread uniformly over a band of ``height`` data rows."""
    span = 2 * (height + 1)
    return [r0 + (2 * k + 1) * span // (2 * n_ports) for k in range(n_ports)]


def _order_key(patch: CodePatch, s: Stabilizer, entering: bool):
    # ancillas parking in a lane column go last when entering, so they never
    # block the lane for others
    in_lane = s.gj == 0 if entering else s.gj == patch.distance
    row = patch.origin[0] + 2 * s.gi
    col = patch.origin[1] + s.gj
    return (in_lane if entering else not in_lane, row, -col, s.kind != "X")


def ancilla_order(patches: list[CodePatch], entering: bool = True) -> list[tuple[int, int]]:
    """Row-proximity order over several patches sharing a band.

    Returns ``(patch index, stabilizer id)`` pairs.  Within a channel row the
    far column comes first so nobody passes a parked ancilla.
    """
    keyed = []
    for pi, p in enumerate(patches):
        for s in p.stabilizers:
            k = _order_key(p, s, entering)
            keyed.append((k[0], k[1], k[2], k[3], pi, s.id))
    keyed.sort()
    return [(k[4], k[5]) for k in keyed]


def split_waves(n_items: int, n_waves_: int) -> list[int]:
    """Balanced wave sizes (differ by at most one), earliest waves largest."""
    base, extra = divmod(n_items, n_waves_)
    return [base + (1 if w < extra else 0) for w in range(n_waves_)]


def assign_waves(patch: CodePatch, rho, entering: bool = True) -> WaveAssignment:
    """Group ancillas into serialized waves by row proximity to the ports."""
    rho = as_density(rho)
    if rho <= 0:
        raise GeometryError(f"readout density must be positive, got {rho}")
    n = patch.n_stabilizers
    nw = wave_count(n, 2 * rho * (patch.height + 1))
    sizes = split_waves(n, nw)
    capacity = max(sizes)
    order = ancilla_order([patch], entering)
    wave_of: dict[int, int] = {}
    port_of: dict[int, int] = {}
    ports_of: dict[int, list[int]] = {}
    pos = 0
    for w, size in enumerate(sizes):
        chunk = order[pos:pos + size]
        pos += size
        # within a wave, ports are matched in row order so lane paths never cross
        chunk.sort(key=lambda item: _row_col(patch, item[1], entering))
        # monotone matching of ancilla rows to port rows keeps lane paths uncrossed
        chosen = _monotone_ports(size, capacity)
        ports_of[w] = chosen
        for (_, sid), port in zip(chunk, chosen):
            wave_of[sid] = w
            port_of[sid] = port
    return WaveAssignment(nw, wave_of, ports_of, port_of, capacity)


def _row_col(patch: CodePatch, sid: int, entering: bool):
    s = patch.stabilizers[sid]
    return (patch.origin[0] + 2 * s.gi, -s.gj)


def _monotone_ports(size: int, capacity: int) -> list[int]:
    if size == capacity:
        return list(range(capacity))
    return sorted({(2 * k + 1) * capacity // (2 * size) for k in range(size)})


def save_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj.to_dict(), fh, indent=2, sort_keys=True)
