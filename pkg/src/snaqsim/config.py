"""Experiment configuration: TOML text in, frozen record out."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, fields, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .params import NoiseParams, TimingParams

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "task_seed"]

ARCHS = ("SNAQ", "2xN", "SpinBus")


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    arch: str = "SNAQ"
    distances: tuple[int, ...] = (3, 5, 7)
    rho: float = 1.0
    noise: NoiseParams = field(default_factory=NoiseParams)
    timing: TimingParams = field(default_factory=TimingParams)
    shots: int = 10_000
    seed: int = 0
    mode: str = "non_pipelined"
    rounds: int | None = None
    bases: tuple[str, ...] = ("X", "Z")
    decoder: str = "uf"
    threads: int | None = None
    out: str = "out"
    target_p_L: float = 1e-6
    separations: tuple[int, ...] = (0,)
    fits: tuple[str, ...] = ()

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"arch must be one of {', '.join(ARCHS)}, got {self.arch!r}")
        if not self.distances:
            raise ConfigError("distances must not be empty")
        if self.shots < 1:
            raise ConfigError(f"shots must be >= 1, got {self.shots}")
        if self.rho <= 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if self.decoder not in ("uf", "mwpm"):
            raise ConfigError(f"decoder must be uf or mwpm, got {self.decoder!r}")
        if any(b not in ("X", "Z") for b in self.bases):
            raise ConfigError(f"bases must be X and/or Z, got {self.bases!r}")

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    def digest(self) -> str:
        """Stable hash of everything but output location."""
        d = self.to_dict()
        d.pop("out")
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


_TOP = {f.name for f in fields(ExperimentConfig)} - {"noise", "timing"}
_TUPLES = {"distances", "bases", "separations", "fits"}


def _line_of(text: str, key: str) -> int | None:
    for n, raw in enumerate(text.splitlines(), start=1):
        if re.match(rf"\s*{re.escape(key)}\s*=", raw):
            return n
    return None


def _table_line(text: str, key: str) -> int | None:
    for n, raw in enumerate(text.splitlines(), start=1):
        if re.match(rf"\s*\[{re.escape(key)}\]", raw):
            return n
    return None


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        m = re.search(r"line (\d+)", str(e))
        raise ConfigError(f"bad config: {e}", int(m.group(1)) if m else None) from None
    kw = {}
    for key, val in raw.items():
        if key in ("noise", "timing"):
            if not isinstance(val, dict):
                raise ConfigError(f"[{key}] must be a table", _line_of(text, key))
            cls = NoiseParams if key == "noise" else TimingParams
            known = {f.name for f in fields(cls)}
            for k in val:
                if k not in known:
                    raise ConfigError(f"unknown {key} key {k!r}", _line_of(text, k))
            try:
                kw[key] = cls(**val)
            except (TypeError, ValueError) as e:
                bad = re.match(r"(\w+)", str(e))
                line = _line_of(text, bad.group(1)) if bad else None
                raise ConfigError(f"[{key}]: {e}", line or _table_line(text, key)) from None
        elif key in _TOP:
            kw[key] = tuple(val) if key in _TUPLES and isinstance(val, list) else val
        else:
            raise ConfigError(f"unknown key {key!r}", _line_of(text, key))
    try:
        return ExperimentConfig(**kw)
    except ConfigError as e:
        bad = re.match(r"(\w+)", str(e))
        raise ConfigError(str(e), _line_of(text, bad.group(1)) if bad else None) from None
    except TypeError as e:
        raise ConfigError(str(e)) from None


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return parse_config(f.read())


def task_seed(master: int, *task) -> int:
    """Per-task seed from a stable hash of the master seed and a task id."""
    blob = json.dumps([master, *task], sort_keys=True, default=str).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")
