"""Bit-packed Pauli-frame sampling and detector error model extraction.

Frames hold one bit per shot, 64 shots to a machine word.  Only circuits
whose detectors and observables are deterministic without noise are
supported; their sampled values are then the parity of the frame flips.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .circuit import StabilizerCircuit

__all__ = [
    "EngineError", "FrameSampler", "DetectorSamples", "DetectorErrorModel",
    "compile", "sample", "extract_dem", "sample_dem", "xor_prob",
]

SHARD = 1 << 16  # shots per independently seeded shard
_GATES = {"R", "RX", "H", "CX", "M", "MX"}
_NOISE = {"X_ERROR", "DEPOLARIZE1", "DEPOLARIZE2"}
# (x, z) bit pairs for the 15 nontrivial two-qubit Paulis, index 1..15
_PAULI2 = np.array([[(v >> 3) & 1, (v >> 2) & 1, (v >> 1) & 1, v & 1] for v in range(16)],
                   dtype=np.uint8)


class EngineError(ValueError):
    pass


@dataclass(frozen=True)
class FrameSampler:
    n_qubits: int
    n_measurements: int
    n_detectors: int
    n_observables: int
    program: tuple  # (opcode, a, b, probs) with index arrays
    detectors: tuple[tuple[int, ...], ...]
    observables: tuple[tuple[int, ...], ...]


@dataclass
class DetectorSamples:
    detectors: np.ndarray  # bool, shots x detectors
    observables: np.ndarray  # bool, shots x observables

    @property
    def shots(self) -> int:
        return self.detectors.shape[0]

    def to_packed(self) -> bytes:
        """Shots-major rows, each padded to whole little-endian 64-bit words."""
        n = self.detectors.shape[1]
        words = max(1, -(-n // 64))
        bits = np.zeros((self.shots, words * 64), dtype=np.uint8)
        bits[:, :n] = self.detectors
        return np.packbits(bits, axis=1, bitorder="little").tobytes()

    def to_text(self) -> str:
        return "".join("".join("1" if b else "0" for b in row) + "\n" for row in self.detectors)


# --------------------------------------------------------------------------
# compilation


def _fuse(ops):
    """Merge runs of same-name operations acting on disjoint qubits."""
    out = []
    cur = None
    used: set[int] = set()
    for o in ops:
        t = o.targets
        if cur is not None and cur[0] == o.name and not used.intersection(t):
            cur[1].extend(t)
            if o.name in _NOISE:
                cur[2].extend([o.args[0]] * (len(t) // (2 if o.name == "DEPOLARIZE2" else 1)))
            used.update(t)
        else:
            if cur is not None:
                out.append(cur)
            probs = []
            if o.name in _NOISE:
                probs = [o.args[0]] * (len(t) // (2 if o.name == "DEPOLARIZE2" else 1))
            cur = [o.name, list(t), probs]
            used = set(t)
    if cur is not None:
        out.append(cur)
    return out


def compile(circuit: StabilizerCircuit) -> FrameSampler:  # noqa: A001 - mirrors the ecosystem verb
    ops = [o for o in circuit.ops if o.name in _GATES or o.name in _NOISE]
    for o in ops:
        if o.targets and max(o.targets) >= circuit.n_qubits:
            raise EngineError(f"{o.name} targets qubit {max(o.targets)} of {circuit.n_qubits}")
    n_meas = circuit.n_measurements
    dets = tuple(circuit.detectors)
    obs_map = circuit.observables
    n_obs = max(obs_map) + 1 if obs_map else 0
    obs = tuple(obs_map.get(k, ()) for k in range(n_obs))
    for kind, group in (("detector", dets), ("observable", obs)):
        for i, recs in enumerate(group):
            for m in recs:
                if not 0 <= m < n_meas:
                    raise EngineError(f"{kind} {i} references measurement {m} of {n_meas}")
    program = []
    for name, targets, probs in _fuse(ops):
        t = np.asarray(targets, dtype=np.intp)
        if name in ("CX", "DEPOLARIZE2"):
            a, b = t[0::2], t[1::2]
        else:
            a, b = t, None
        program.append((name, a, b, np.asarray(probs, dtype=float)))
    return FrameSampler(circuit.n_qubits, n_meas, len(dets), n_obs, tuple(program), dets, obs)


# --------------------------------------------------------------------------
# sampling


def _hits(rng: np.random.Generator, probs: np.ndarray, shots: int):
    """Exact Bernoulli hits per row as (row, shot) index arrays."""
    counts = rng.binomial(shots, probs)
    rows, cols = [], []
    for r in np.flatnonzero(counts):
        c = int(counts[r])
        if c == shots:
            pos = np.arange(shots)
        else:
            pos = rng.choice(shots, c, replace=False)
        rows.append(np.full(c, r, dtype=np.intp))
        cols.append(pos)
    if not rows:
        e = np.empty(0, dtype=np.intp)
        return e, e
    return np.concatenate(rows), np.concatenate(cols)


def _flip(frame: np.ndarray, qubits: np.ndarray, shots: np.ndarray) -> None:
    if qubits.size:
        w = frame.shape[1]
        bits = np.left_shift(np.uint64(1), (shots & 63).astype(np.uint64))
        np.bitwise_xor.at(frame.reshape(-1), qubits * w + (shots >> 6), bits)


def _run_shard(sampler: FrameSampler, shots: int, rng: np.random.Generator):
    w = -(-shots // 64)
    x = np.zeros((sampler.n_qubits, w), dtype=np.uint64)
    z = np.zeros_like(x)
    rec = np.zeros((sampler.n_measurements, w), dtype=np.uint64)
    mi = 0
    for name, a, b, probs in sampler.program:
        if name == "CX":
            x[b] ^= x[a]
            z[a] ^= z[b]
        elif name == "H":
            tmp = x[a].copy()
            x[a] = z[a]
            z[a] = tmp
        elif name in ("R", "RX"):
            x[a] = 0
            z[a] = 0
        elif name == "M":
            rec[mi:mi + a.size] = x[a]
            mi += a.size
        elif name == "MX":
            rec[mi:mi + a.size] = z[a]
            mi += a.size
        elif name == "X_ERROR":
            r, s = _hits(rng, probs, shots)
            _flip(x, a[r], s)
        elif name == "DEPOLARIZE1":
            r, s = _hits(rng, probs, shots)
            p = rng.integers(1, 4, r.size)  # 1=X 2=Y 3=Z
            q = a[r]
            mx, mz = p <= 2, p >= 2
            _flip(x, q[mx], s[mx])
            _flip(z, q[mz], s[mz])
        elif name == "DEPOLARIZE2":
            r, s = _hits(rng, probs, shots)
            bits = _PAULI2[rng.integers(1, 16, r.size)]
            qa, qb = a[r], b[r]
            for col, frame, q in ((0, x, qa), (1, z, qa), (2, x, qb), (3, z, qb)):
                m = bits[:, col].astype(bool)
                _flip(frame, q[m], s[m])
    return _parities(rec, sampler.detectors, w), _parities(rec, sampler.observables, w)


def _parities(rec: np.ndarray, groups, w: int) -> np.ndarray:
    out = np.zeros((len(groups), w), dtype=np.uint64)
    for i, recs in enumerate(groups):
        if recs:
            out[i] = np.bitwise_xor.reduce(rec[list(recs)], axis=0)
    return out


def _unpack(words: np.ndarray, shots: int) -> np.ndarray:
    if words.shape[0] == 0:
        return np.zeros((shots, 0), dtype=bool)
    b = np.unpackbits(words.view(np.uint8), axis=1, bitorder="little")
    return b[:, :shots].T.astype(bool)


def _threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("SNAQSIM_THREADS", "1") or 1)
    return max(1, threads)


def sample(sampler: FrameSampler, shots: int, seed: int = 0,
           threads: int | None = None) -> DetectorSamples:
    """Sample detector and observable bits.

    Shots are cut into fixed shards with seeds spawned from ``seed``, so the
    result does not depend on the number of worker threads.
    """
    if shots < 1:
        raise EngineError("shots must be at least 1")
    sizes = [SHARD] * (shots // SHARD) + ([shots % SHARD] if shots % SHARD else [])
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(i):
        d, o = _run_shard(sampler, sizes[i], np.random.default_rng(seqs[i]))
        return _unpack(d, sizes[i]), _unpack(o, sizes[i])

    n = _threads(threads)
    if n == 1 or len(sizes) == 1:
        parts = [run(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(n) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    return DetectorSamples(np.concatenate([p[0] for p in parts]),
                           np.concatenate([p[1] for p in parts]))


# --------------------------------------------------------------------------
# detector error model


def xor_prob(p1: float, p2: float) -> float:
    """Probability that exactly one of two independent events fires."""
    return p1 * (1 - p2) + p2 * (1 - p1)


@dataclass
class DetectorErrorModel:
    n_detectors: int
    n_observables: int
    mechanisms: list[tuple[float, tuple[int, ...], tuple[int, ...]]] = field(default_factory=list)
    coords: dict[int, tuple[float, ...]] = field(default_factory=dict)

    def to_text(self) -> str:
        """Stim-style listing, one ``error(p) D.. L..`` line per mechanism."""
        lines = []
        for p, dets, obs in self.mechanisms:
            targets = [f"D{d}" for d in dets] + [f"L{o}" for o in obs]
            lines.append(f"error({p:.12g}) " + " ".join(targets))
        return "\n".join(lines) + ("\n" if lines else "")

    def signature_map(self) -> dict[tuple, float]:
        return {(dets, obs): p for p, dets, obs in self.mechanisms}


def _independent(p: float, n: int) -> float:
    """Probability ``q`` for each of the ``n - 1`` independent Pauli channels
    whose composition is depolarizing noise of strength ``p``.

    Solves ``(1 - 2q)^(n/2) = 1 - n p / (n - 1)``.
    """
    return 0.5 - 0.5 * (1 - n * p / (n - 1)) ** (2 / n)


def _bits(v: int) -> tuple[int, ...]:
    out = []
    while v:
        low = v & -v
        out.append(low.bit_length() - 1)
        v ^= low
    return tuple(out)


def extract_dem(circuit: StabilizerCircuit) -> DetectorErrorModel:
    """Exact flip signature of every Pauli component of every noise channel.

    Sensitivities are propagated backwards: ``sx[q]`` is the set of detectors
    and observables (as a bitmask, observables above the detectors) that an X
    error on ``q`` at the current point would flip.
    """
    dets = circuit.detectors
    obs = circuit.observables
    nd = len(dets)
    n_obs = max(obs) + 1 if obs else 0
    n_meas = circuit.n_measurements
    flips = [0] * n_meas
    for i, recs in enumerate(dets):
        for m in recs:
            if not 0 <= m < n_meas:
                raise EngineError(f"detector {i} references measurement {m} of {n_meas}")
            flips[m] ^= 1 << i
    for k, recs in obs.items():
        for m in recs:
            flips[m] ^= 1 << (nd + k)
    n = circuit.n_qubits
    sx = [0] * n
    sz = [0] * n
    mi = n_meas
    acc: dict[int, float] = {}

    def add(mask: int, p: float) -> None:
        if mask:
            acc[mask] = xor_prob(acc[mask], p) if mask in acc else p

    for o in reversed(circuit.ops):
        name, t = o.name, o.targets
        if name == "M":
            for q in reversed(t):
                mi -= 1
                sx[q] ^= flips[mi]
        elif name == "MX":
            for q in reversed(t):
                mi -= 1
                sz[q] ^= flips[mi]
        elif name in ("R", "RX"):
            for q in t:
                sx[q] = sz[q] = 0
        elif name == "H":
            for q in t:
                sx[q], sz[q] = sz[q], sx[q]
        elif name == "CX":
            for j in range(len(t) - 2, -1, -2):
                c, u = t[j], t[j + 1]
                sx[c] ^= sx[u]
                sz[u] ^= sz[c]
        elif name == "X_ERROR":
            for q in t:
                add(sx[q], o.args[0])
        elif name == "DEPOLARIZE1":
            p = _independent(o.args[0], 4)
            for q in t:
                add(sx[q], p)
                add(sx[q] ^ sz[q], p)
                add(sz[q], p)
        elif name == "DEPOLARIZE2":
            p = _independent(o.args[0], 16)
            for j in range(0, len(t), 2):
                a, b = t[j], t[j + 1]
                pa = (0, sx[a], sx[a] ^ sz[a], sz[a])
                pb = (0, sx[b], sx[b] ^ sz[b], sz[b])
                for u in range(4):
                    for v in range(4):
                        if u or v:
                            add(pa[u] ^ pb[v], p)
    low = (1 << nd) - 1
    mechs = []
    for mask, p in acc.items():
        if p > 0:
            mechs.append((p, _bits(mask & low), tuple(b - nd for b in _bits(mask >> nd << nd))))
    mechs.sort(key=lambda m: (m[1], m[2]))
    return DetectorErrorModel(nd, n_obs, mechs)


def sample_dem(dem: DetectorErrorModel, shots: int, seed: int = 0) -> DetectorSamples:
    """Sample detector and observable bits directly from the mechanisms."""
    rng = np.random.default_rng(seed)
    det = np.zeros((shots, dem.n_detectors), dtype=bool)
    obs = np.zeros((shots, dem.n_observables), dtype=bool)
    for p, ds, os_ in dem.mechanisms:
        hit = rng.random(shots) < p
        idx = np.flatnonzero(hit)
        if idx.size:
            for dd in ds:
                det[idx, dd] ^= True
            for oo in os_:
                obs[idx, oo] ^= True
    return DetectorSamples(det, obs)
