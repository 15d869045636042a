"""Scalar sequences indexed by the iteration counter ``k >= 0``.

Schedules are pure functions of ``k``; nothing is cached between calls, so a
schedule can be shared by any number of concurrent runs.

Kinds:

* ``constant``        ``c``
* ``harmonic-power``  ``c / (1 + a * k**p)``
* ``power-growth``    ``base + a * k**p``
* ``geometric``       ``c * ratio**k``
* ``table``           hand-written values; past the end, hold the last value
                      (``tail="hold"``) or return 0 (``tail="zero"``)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import ConfigurationError

KINDS = ("constant", "harmonic-power", "power-growth", "geometric", "table")


@dataclass(frozen=True)
class Schedule:
    kind: str
    c: float = 1.0
    a: float = 0.01
    p: float = 1.0
    base: float = 1.0
    ratio: float = 1.0
    table: tuple[float, ...] = field(default=(), repr=False)
    tail: str = "hold"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "table":
            if not self.table:
                raise ConfigurationError("table schedule needs at least one value")
            if self.tail not in ("hold", "zero"):
                raise ConfigurationError(f"table tail must be 'hold' or 'zero', got {self.tail!r}")
            vals = self.table
        elif self.kind == "constant":
            vals = (self.c,)
        elif self.kind == "harmonic-power":
            vals = (self.c, self.a)
        elif self.kind == "power-growth":
            vals = (self.base, self.a)
        else:
            vals = (self.c, self.ratio)
        for v in vals:
            if not math.isfinite(v) or v < 0:
                raise ConfigurationError(f"{self.kind} schedule parameters must be finite and >= 0, got {v}")

    def __call__(self, k: int) -> float:
        if k < 0:
            raise ValueError(f"iteration index must be >= 0, got {k}")
        kind = self.kind
        if kind == "constant":
            return float(self.c)
        if kind == "harmonic-power":
            return self.c / (1.0 + self.a * float(k) ** self.p)
        if kind == "power-growth":
            return self.base + self.a * float(k) ** self.p
        if kind == "geometric":
            try:
                return self.c * self.ratio ** k
            except OverflowError:
                return math.inf
        if k < len(self.table):
            return float(self.table[k])
        return float(self.table[-1]) if self.tail == "hold" else 0.0

    def values(self, ks) -> np.ndarray:
        """Vectorized evaluation over an integer array of iteration indices."""
        ks = np.asarray(ks)
        if np.any(ks < 0):
            raise ValueError("iteration indices must be >= 0")
        kf = ks.astype(float)
        if self.kind == "constant":
            return np.full(ks.shape, float(self.c))
        if self.kind == "harmonic-power":
            return self.c / (1.0 + self.a * kf ** self.p)
        if self.kind == "power-growth":
            return self.base + self.a * kf ** self.p
        if self.kind == "geometric":
            with np.errstate(under="ignore", over="ignore"):
                return self.c * np.power(float(self.ratio), kf)
        table = np.asarray(self.table, dtype=float)
        fill = table[-1] if self.tail == "hold" else 0.0
        out = np.full(ks.shape, fill)
        inside = ks < len(table)
        out[inside] = table[ks[inside]]
        return out

    def to_spec(self) -> dict[str, Any]:
        spec: dict[str, Any] = {"kind": self.kind}
        if self.kind == "constant":
            spec["c"] = self.c
        elif self.kind == "harmonic-power":
            spec.update(c=self.c, a=self.a, p=self.p)
        elif self.kind == "power-growth":
            spec.update(base=self.base, a=self.a, p=self.p)
        elif self.kind == "geometric":
            spec.update(c=self.c, ratio=self.ratio)
        else:
            spec.update(table=list(self.table), tail=self.tail)
        return spec

    @classmethod
    def from_spec(cls, spec: "Mapping[str, Any] | float | Schedule") -> "Schedule":
        """Parse ``{"kind": ..., <params>}``; a bare number means a constant."""
        if isinstance(spec, Schedule):
            return spec
        if isinstance(spec, (int, float)):
            return constant(float(spec))
        spec = dict(spec)
        kind = spec.pop("kind", None)
        if kind is None:
            raise ConfigurationError(f"schedule spec {spec} has no 'kind'")
        allowed = {"c", "a", "p", "base", "ratio", "table", "tail"}
        extra = set(spec) - allowed
        if extra:
            raise ConfigurationError(f"unknown schedule parameters {sorted(extra)} for kind {kind!r}")
        if "table" in spec:
            spec["table"] = tuple(float(v) for v in spec["table"])
        return cls(kind=kind, **{k: (v if k in ("table", "tail") else float(v)) for k, v in spec.items()})


def constant(c: float) -> Schedule:
    return Schedule("constant", c=c)


def harmonic_power(c: float = 1.0, p: float = 1.0, a: float = 0.01) -> Schedule:
    return Schedule("harmonic-power", c=c, a=a, p=p)


def power_growth(base: float = 1.0, a: float = 0.01, p: float = 0.3) -> Schedule:
    return Schedule("power-growth", base=base, a=a, p=p)


def geometric(ratio: float, c: float = 1.0) -> Schedule:
    return Schedule("geometric", c=c, ratio=ratio)


def table(values, tail: str = "hold") -> Schedule:
    return Schedule("table", table=tuple(float(v) for v in values), tail=tail)


ZERO = constant(0.0)

PRESETS = ("paper-alg3", "paper-pdop", "dgd-plain")


def preset(name: str, nu: float = 1.0) -> tuple[Schedule, Schedule, Schedule]:
    """Return ``(stepsize, attenuation, noise_scale)`` for a named preset.

    ``nu`` only matters for ``dgd-plain``, whose noise scale is a constant.
    """
    if name == "paper-alg3":
        return harmonic_power(1.0, 1.0), harmonic_power(1.0, 0.9), power_growth(1.0, 0.01, 0.3)
    if name == "paper-pdop":
        return geometric(0.95), constant(1.0), geometric(0.98)
    if name == "dgd-plain":
        return harmonic_power(1.0, 1.0), constant(1.0), constant(nu)
    raise ConfigurationError(f"unknown schedule preset {name!r}; expected one of {PRESETS}")
