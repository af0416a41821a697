"""Distance-scaling fits, extrapolation, analytic tCNOT/LS error models and cost metrics.

The scaling model is ``p_L(d) = A (alpha + beta d + gamma n_w(rho, d))^((d+1)/2)``.
Fits run in log space with a multi-start Nelder-Mead simplex.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from .geometry import as_density, n_waves

__all__ = [
    "ARCHS", "FitError", "ErrorFloorError", "FitParams", "AnalyticTcnotModel", "scaling_model",
    "fit_scaling", "extrapolate", "required_distance", "analytic_ls_error",
    "analytic_tcnot_error", "fit_tcnot_model", "tcnot_range", "cost_metrics", "save_fit",
    "load_fit", "sweep_csv",
]

ARCHS = ("SNAQ", "2xN", "SpinBus")
QUBIT_AREA_UM2 = 0.01
READOUT_AREA_UM2 = 1.0
SPINBUS_CELL_HOPS = 50
FREE = {"SNAQ": (True, True, True), "2xN": (True, True, False), "SpinBus": (True, False, False)}


class FitError(RuntimeError):
    """Fit did not converge; ``best`` holds the best parameters found."""

    def __init__(self, msg: str, best=None):
        super().__init__(msg)
        self.best = best


class ErrorFloorError(ValueError):
    """Target logical error rate lies below the model's floor."""

    def __init__(self, msg: str, term: str):
        super().__init__(msg)
        self.term = term


@dataclass(frozen=True)
class FitParams:
    A: float
    alpha: float
    beta: float = 0.0
    gamma: float = 0.0
    arch: str = "SNAQ"
    rho: float | None = None
    residual: float = 0.0
    data_hash: str = ""

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if not self.A > 0:
            raise ValueError("A must be positive")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("alpha, beta, gamma must be nonnegative")
        if self.arch == "2xN" and self.gamma != 0:
            raise ValueError("2xN fits fix gamma = 0")
        if self.arch == "SpinBus" and (self.beta != 0 or self.gamma != 0):
            raise ValueError("SpinBus fits fix beta = gamma = 0")

    def waves(self, d: int) -> int:
        if self.gamma == 0:
            return 0
        return n_waves(d, self.rho if self.rho is not None else 1)

    def base(self, d: int) -> float:
        return self.alpha + self.beta * d + self.gamma * self.waves(d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rho"] = None if self.rho is None else float(self.rho)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "FitParams":
        keys = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in keys})


@dataclass(frozen=True)
class AnalyticTcnotModel:
    """``p_L = A (B (s + d) + C)^((d+1)/2)``."""

    A: float
    B: float
    C: float

    def __post_init__(self):
        if not (self.A > 0 and self.C > 0 and self.B >= 0):
            raise ValueError("tCNOT model needs A, C > 0 and B >= 0")


def scaling_model(d, A, alpha, beta, gamma, rho=1):
    nw = n_waves(d, rho) if gamma else 0
    return A * (alpha + beta * d + gamma * nw) ** ((d + 1) / 2)


# --------------------------------------------------------------------------
# fitting


def _points(points):
    """Normalise ``(d, p_L[, ci])`` tuples; ci is a (low, high) pair or a width."""
    ds, ps, ws = [], [], []
    for pt in points:
        d, p = int(pt[0]), float(pt[1])
        ci = pt[2] if len(pt) > 2 else None
        if not 0 < p < 1:
            raise ValueError(f"p_L={p} at d={d} is outside (0, 1)")
        sigma = None
        if ci is not None:
            if isinstance(ci, (tuple, list)):
                lo, hi = float(ci[0]), float(ci[1])
                if lo > 0 and hi > lo:
                    sigma = (math.log(hi) - math.log(lo)) / (2 * 1.96)
            elif ci > 0:
                sigma = float(ci) / p / (2 * 1.96)
        ds.append(d)
        ps.append(p)
        ws.append(1.0 if sigma is None else 1.0 / sigma)
    w = np.array(ws)
    return np.array(ds), np.log(np.array(ps)), w / w.max()


def data_hash(points) -> str:
    blob = json.dumps([[float(x) if not isinstance(x, (tuple, list)) else list(map(float, x))
                        for x in pt] for pt in points], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _multistart(objective, x0s, budget: int):
    opts = {"xatol": 1e-12, "fatol": 1e-26, "maxiter": budget, "maxfev": budget,
            "adaptive": True}
    best = None
    for x0 in x0s:
        r = minimize(objective, x0, method="Nelder-Mead", options=opts)
        if best is None or r.fun < best.fun:
            best = r
    # restart the simplex at the best optimum until it stops moving
    for _ in range(20):
        r = minimize(objective, best.x, method="Nelder-Mead", options=opts)
        if r.fun >= best.fun * (1 - 1e-9):
            break
        best = r
    return best


def fit_scaling(points, rho=None, arch: str = "SNAQ", starts: int = 16, seed: int = 0,
                budget: int = 20000) -> FitParams:
    """Least squares in log p_L, weighted by the inverse log-CI width.

    ``points`` are ``(d, p_L)`` or ``(d, p_L, ci)`` with ``ci`` a (low, high)
    interval or a width.  2xN fixes gamma = 0 and SpinBus beta = gamma = 0.
    """
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}")
    if starts < 16:
        raise ValueError("at least 16 starts are required")
    points = list(points)
    ds, logp, w = _points(points)
    if len(set(ds.tolist())) < 3:
        raise ValueError("fitting needs at least three distinct distances")
    free = FREE[arch]
    rho_q = as_density(rho if rho is not None else 1)
    nw = np.array([n_waves(int(d), rho_q) for d in ds]) if free[2] else np.zeros(len(ds))
    k = (ds + 1) / 2

    def unpack(x):
        it = iter(x[1:])
        a, b, g = (abs(next(it)) if f else 0.0 for f in free)
        return x[0], a, b, g

    def objective(x):
        la, a, b, g = unpack(x)
        base = a + b * ds + g * nw
        if np.any(base <= 0):
            return 1e30
        r = w * (la + k * np.log(base) - logp)
        return float(r @ r)

    rng = np.random.default_rng(seed)
    x0s = []
    for _ in range(starts):
        x = [rng.uniform(-6, 1), 10 ** rng.uniform(-3, -0.3)]
        x += [10 ** rng.uniform(-5, -1) for f in free[1:] if f]
        x0s.append(np.array(x))
    best = _multistart(objective, x0s, budget)
    la, a, b, g = unpack(best.x)
    if not np.isfinite(best.fun) or best.fun >= 1e30:
        raise FitError("scaling fit found no feasible point", best=best.x)
    if not best.success and best.nit >= budget:
        raise FitError(f"scaling fit did not converge in {budget} iterations", best=best.x)
    return FitParams(A=math.exp(la), alpha=float(a), beta=float(b), gamma=float(g), arch=arch,
                     rho=float(rho_q) if arch == "SNAQ" else (None if rho is None else float(rho)),
                     residual=math.sqrt(float(best.fun)), data_hash=data_hash(points))


def extrapolate(fit: FitParams, d: int) -> float:
    return fit.A * fit.base(d) ** ((d + 1) / 2)


def required_distance(fit: FitParams, target_p_L: float, d_max: int = 100_001) -> int:
    """Smallest odd d >= 3 with extrapolate(fit, d) <= target.

    The base is nondecreasing in d, so once it reaches 1 the logical error
    rate can no longer fall and the target is unreachable.
    """
    if not 0 < target_p_L < 1:
        raise ValueError("target must lie in (0, 1)")
    d = 3
    while d <= d_max:
        if extrapolate(fit, d) <= target_p_L:
            return d
        base = fit.base(d)
        if base >= 1:
            terms = {"alpha": fit.alpha, "beta*d": fit.beta * d, "gamma*n_w": fit.gamma * fit.waves(d)}
            term = max(terms, key=terms.get)
            raise ErrorFloorError(
                f"error floor: base {base:.4g} >= 1 at d={d} before reaching p_L={target_p_L:g}; "
                f"dominated by {term}", term)
        d += 2
    raise ErrorFloorError(f"p_L={target_p_L:g} not reached by d={d_max}", "alpha")


# --------------------------------------------------------------------------
# analytic LS and tCNOT error models


def analytic_ls_error(s: float, d: int, p_L1: float, p_L_idle: float) -> float:
    """Merge-split error growing linearly with the merged volume."""
    if s < 1:
        raise ValueError("separation must be >= 1")
    return (s + d) * d * d / (4 * d ** 3) * p_L1 + p_L_idle


def analytic_tcnot_error(model: AnalyticTcnotModel, s: float, d: int) -> float:
    return model.A * (model.B * (s + d) + model.C) ** ((d + 1) / 2)


def fit_tcnot_model(points, starts: int = 16, seed: int = 0, budget: int = 20000) -> AnalyticTcnotModel:
    """Fit ``(s, d, p_L[, ci])`` points in log space."""
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("fitting needs at least three points")
    s = np.array([float(p[0]) for p in pts])
    _, logp, w = _points([(p[1], p[2]) + tuple(p[3:]) for p in pts])
    ds = np.array([int(p[1]) for p in pts])
    k = (ds + 1) / 2

    def objective(x):
        b, c = abs(x[1]), abs(x[2])
        base = b * (s + ds) + c
        if np.any(base <= 0):
            return 1e30
        r = w * (x[0] + k * np.log(base) - logp)
        return float(r @ r)

    rng = np.random.default_rng(seed)
    x0s = [np.array([rng.uniform(-6, 1), 10 ** rng.uniform(-7, -2), 10 ** rng.uniform(-3, -0.5)])
           for _ in range(max(starts, 16))]
    best = _multistart(objective, x0s, budget)
    if not np.isfinite(best.fun) or best.fun >= 1e30:
        raise FitError("tCNOT fit found no feasible point", best=best.x)
    return AnalyticTcnotModel(A=math.exp(best.x[0]), B=float(abs(best.x[1])), C=float(abs(best.x[2])))


def tcnot_range(model: AnalyticTcnotModel, d: int, ratios, ref_ratio: float = 100.0,
                tolerance: float = 0.1) -> list[float]:
    """Largest separation at which tCNOT error stays within ``tolerance`` of s = 0.

    The model's shuttle term B is rescaled by ``ref_ratio / ratio`` for each
    p_g/p_sh ratio (B tracks p_sh; C tracks the gate and idle terms).
    """
    k = (d + 1) / 2
    grow = (1 + tolerance) ** (1 / k) - 1
    out = []
    for r in ratios:
        if r <= 0:
            raise ValueError("ratios must be positive")
        b = model.B * ref_ratio / r
        out.append(math.inf if b == 0 else grow * (d + model.C / b))
    return out


# --------------------------------------------------------------------------
# cost metrics


def cost_metrics(arch: str, d: int, rho=1) -> dict:
    """Readout count, component area and physical qubits per logical qubit.

    Areas cover qubits and readout components only (no interconnect).  SNAQ
    counts ports on both patch edges; SpinBus one readout per data cell plus
    the shuttling channels around it; 2xN one readout per physical qubit.
    """
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}")
    if d < 2:
        raise ValueError("distance must be >= 2")
    qubits = 2 * d * d - 1
    if arch == "SNAQ":
        readouts = 2 * math.ceil(2 * as_density(rho) * (d + 1))
        area = qubits * QUBIT_AREA_UM2 + readouts * READOUT_AREA_UM2
    elif arch == "2xN":
        readouts = qubits
        area = qubits * QUBIT_AREA_UM2 + readouts * READOUT_AREA_UM2
    else:
        readouts = d * d
        channel_dots = 2 * SPINBUS_CELL_HOPS * readouts
        area = readouts * READOUT_AREA_UM2 + channel_dots * QUBIT_AREA_UM2
    return {"arch": arch, "d": d, "readout_count": readouts,
            "readout_area_um2": readouts * READOUT_AREA_UM2,
            "chip_area_um2": area, "physical_qubits": qubits}


# --------------------------------------------------------------------------
# persistence


def save_fit(fit: FitParams, path) -> None:
    with open(path, "w") as f:
        json.dump(fit.to_dict(), f, indent=2, sort_keys=True)


def load_fit(path) -> FitParams:
    with open(path) as f:
        return FitParams.from_dict(json.load(f))


def sweep_csv(rows) -> str:
    """CSV of (d, p_L, ci_low, ci_high) rows given as dicts or tuples."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["d", "p_L", "ci_low", "ci_high"])
    for r in rows:
        if isinstance(r, dict):
            r = (r["d"], r["p_L"], r["ci_low"], r["ci_high"])
        w.writerow(r)
    return buf.getvalue()
