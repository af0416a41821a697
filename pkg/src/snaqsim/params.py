"""Hardware timing and noise parameter records."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class TimingParams:
    """Operation latencies in nanoseconds."""

    t_exchange: float = 10.0
    t_cnot: float = 200.0
    t_h: float = 30.0
    t_shuttle: float = 2.0
    t_init: float = 500.0
    t_meas: float = 500.0
    c_route: float = 1.0
    buffer_factor: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be strictly positive")

    def with_overrides(self, **kw) -> "TimingParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class NoiseParams:
    """Error probabilities: gate/readout, per shuttle hop, per microsecond idle."""

    p_g: float = 0.0
    p_sh: float = 0.0
    p_id: float = 0.0
    linear_idle: bool = False

    def __post_init__(self):
        for name in ("p_g", "p_sh", "p_id"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name}={v} is outside [0, 1)")

    def idle_probability(self, duration_ns: float) -> float:
        if duration_ns <= 0 or self.p_id == 0:
            return 0.0
        if self.linear_idle:
            return min(self.p_id * duration_ns / 1000.0, 0.75)
        return 1.0 - (1.0 - self.p_id) ** (duration_ns / 1000.0)

    def shuttle_probability(self, hops: int) -> float:
        p = hops * self.p_sh
        if p >= 1.0:
            raise ValueError(f"shuttle of {hops} hops gives probability {p} >= 1")
        return p

    def to_dict(self) -> dict:
        return asdict(self)
