"""Dynamic average consensus with persistent privacy noise.

:func:`run_alg1` tracks the average of time-varying reference signals with a
decaying weakening factor on the noisy consensus term. :func:`run_alg2` is
the constrained variant whose iterates are projected onto a convex set; its
limit need not be the average reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .graph import WeightedGraph
from .observation import ObservationLog
from .rng import Streams, as_streams
from .schedules import Schedule, harmonic_power, ZERO


# -- reference signals ------------------------------------------------------

@dataclass(frozen=True)
class ReferenceSignal:
    """Per-agent reference ``r_i^k``; :meth:`__call__` returns an ``(m, d)`` array.

    kinds and parameters (arrays of shape ``(m, d)`` or ``(m,)``):

    * ``constant``: ``value``
    * ``ramp``: ``value + slope * k``
    * ``sinusoid``: ``value + amplitude * sin(omega * k + phase)``
    * ``table``: ``values`` of shape ``(K, m, d)``; held constant past the end
    """

    kind: str
    value: np.ndarray | None = None
    slope: np.ndarray | None = None
    amplitude: np.ndarray | None = None
    omega: float = 0.0
    phase: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "ramp", "sinusoid", "table"):
            raise ConfigurationError(f"unknown reference kind {self.kind!r}")
        for name in ("value", "slope", "amplitude", "phase"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                object.__setattr__(self, name, arr[:, None] if arr.ndim == 1 else arr)
        if self.kind == "table":
            vals = np.asarray(self.values, dtype=float)
            object.__setattr__(self, "values", vals[:, :, None] if vals.ndim == 2 else vals)
        elif self.value is None:
            raise ConfigurationError(f"{self.kind} reference needs 'value'")

    @property
    def m(self) -> int:
        return (self.values.shape[1] if self.kind == "table" else self.value.shape[0])

    @property
    def dim(self) -> int:
        return (self.values.shape[2] if self.kind == "table" else self.value.shape[1])

    def __call__(self, k: int) -> np.ndarray:
        if self.kind == "constant":
            return self.value
        if self.kind == "ramp":
            return self.value + self.slope * k
        if self.kind == "sinusoid":
            phase = 0.0 if self.phase is None else self.phase
            return self.value + self.amplitude * np.sin(self.omega * k + phase)
        return self.values[min(k, len(self.values) - 1)]

    def average(self, k: int) -> np.ndarray:
        return self(k).mean(axis=0)


def constant_reference(values) -> ReferenceSignal:
    return ReferenceSignal("constant", value=np.asarray(values, dtype=float))


# -- convex sets ------------------------------------------------------------

class ConvexSet:
    """Nonempty closed convex set with a closed-form Euclidean projection.

    :meth:`project` guarantees ``contains(project(y))`` exactly, nudging the
    result inward by a few ulps when rounding would land it outside.
    """

    kind = ""

    def project(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, y: np.ndarray) -> bool:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, dim: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Box(ConvexSet):
    lo: float | np.ndarray
    hi: float | np.ndarray
    kind = "box"

    def __post_init__(self):
        if np.any(np.asarray(self.lo) > np.asarray(self.hi)):
            raise ConfigurationError("box needs lo <= hi")

    def project(self, y):
        return np.clip(np.asarray(y, dtype=float), self.lo, self.hi)

    def contains(self, y):
        y = np.asarray(y)
        return bool(np.all(y >= self.lo) and np.all(y <= self.hi))

    def sample(self, rng, dim):
        lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (dim,))
        hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (dim,))
        return rng.uniform(lo, hi)


@dataclass(frozen=True)
class Ball(ConvexSet):
    center: float | np.ndarray
    radius: float
    kind = "ball"

    def __post_init__(self):
        if not self.radius >= 0:
            raise ConfigurationError("ball radius must be >= 0")

    def project(self, y):
        y = np.asarray(y, dtype=float)
        c = np.broadcast_to(np.asarray(self.center, dtype=float), y.shape)
        d = y - c
        norm = np.linalg.norm(d)
        if norm <= self.radius:
            return y.copy()
        p = c + d * (self.radius / norm)
        shrink = 1.0
        while not self.contains(p):
            shrink -= 4 * np.finfo(float).eps
            p = c + d * (self.radius * shrink / norm)
        return p

    def contains(self, y):
        y = np.asarray(y, dtype=float)
        c = np.broadcast_to(np.asarray(self.center, dtype=float), y.shape)
        return bool(np.linalg.norm(y - c) <= self.radius)

    def sample(self, rng, dim):
        # uniform in the ball, capped at unit scale for very large radii
        r = min(self.radius, 1.0)
        direction = rng.normal(size=dim)
        direction /= np.linalg.norm(direction) or 1.0
        c = np.broadcast_to(np.asarray(self.center, dtype=float), (dim,))
        return self.project(c + direction * r * rng.random() ** (1.0 / dim))


@dataclass(frozen=True)
class Halfspace(ConvexSet):
    """``{y : normal . y <= offset}``."""

    normal: np.ndarray
    offset: float
    kind = "halfspace"

    def __post_init__(self):
        a = np.asarray(self.normal, dtype=float)
        if not np.any(a):
            raise ConfigurationError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", a)

    def project(self, y):
        y = np.asarray(y, dtype=float)
        a = self.normal
        viol = a @ y - self.offset
        if viol <= 0:
            return y.copy()
        p = y - (viol / (a @ a)) * a
        step = np.finfo(float).eps * max(1.0, abs(self.offset), float(np.abs(p).max()))
        while not self.contains(p):
            p = p - step * a / np.linalg.norm(a)
            step *= 2
        return p

    def contains(self, y):
        return bool(self.normal @ np.asarray(y, dtype=float) <= self.offset)

    def sample(self, rng, dim):
        return self.project(rng.normal(size=dim))


def project(X: ConvexSet, y) -> np.ndarray:
    return X.project(y)


def convex_set_from_spec(spec: dict) -> ConvexSet:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "box":
        return Box(np.asarray(spec["lo"], dtype=float), np.asarray(spec["hi"], dtype=float))
    if kind == "ball":
        return Ball(np.asarray(spec.get("center", 0.0), dtype=float), float(spec["radius"]))
    if kind == "halfspace":
        return Halfspace(np.asarray(spec["normal"], dtype=float), float(spec["offset"]))
    raise ConfigurationError(f"unsupported convex set kind {kind!r}")


# -- noise ------------------------------------------------------------------

def draw_noise(rng: np.random.Generator, kind: str, scale: float, shape) -> np.ndarray:
    """Zero-mean noise; ``scale`` is the Laplace scale or Gaussian std."""
    if scale <= 0:
        return np.zeros(shape)
    if kind == "laplace":
        return rng.laplace(0.0, scale, size=shape)
    if kind == "gaussian":
        return rng.normal(0.0, scale, size=shape)
    raise ConfigurationError(f"unknown noise kind {kind!r}")


def _messages(x, rng, kind, scale, m, per_edge):
    """``received[i, j]``: noisy copy of ``x_j`` delivered to agent i."""
    if per_edge:
        return x[None, :, :] + draw_noise(rng, kind, scale, (m,) + x.shape)
    noisy = x + draw_noise(rng, kind, scale, x.shape)
    return np.broadcast_to(noisy[None, :, :], (m,) + x.shape)


def _log_messages(log, g, k, received):
    for (i, j) in sorted(g.weights):
        log.record_plain(k, j, i, received[i, j])


def _symmetric_matrix(g: WeightedGraph, k: int) -> np.ndarray:
    L = g.matrix(k)
    if g.directed or not np.array_equal(L, L.T):
        raise ConfigurationError(f"dynamic consensus needs symmetric weights (violated at k={k})")
    return L


@dataclass
class DynamicRun:
    trajectory: np.ndarray        # (steps + 1, m, d)
    reference_average: np.ndarray  # (steps + 1, d)
    errors: np.ndarray            # (steps + 1,) max_i ||x_i^k - r_bar^k||
    log: ObservationLog | None

    @property
    def final(self) -> np.ndarray:
        return self.trajectory[-1]


def _tracking_error(x, r_bar):
    return float(np.max(np.linalg.norm(x - r_bar[None, :], axis=1)))


DEFAULT_CHI = harmonic_power(1.0, 0.9)
DEFAULT_ALPHA = harmonic_power(1.0, 1.0)


def run_alg1(
    g: WeightedGraph,
    ref: ReferenceSignal,
    steps: int,
    chi: Schedule = DEFAULT_CHI,
    alpha: Schedule = DEFAULT_ALPHA,
    nu: Schedule = ZERO,
    seed: int | Streams = 0,
    noise: str = "laplace",
    per_edge: bool = False,
    log: ObservationLog | None = None,
) -> DynamicRun:
    """Robust differentially-private dynamic average consensus.

    Starting from ``x_i^0 = r_i^0``, every agent broadcasts ``x_j^k + zeta_j^k``
    and updates

        x_i^{k+1} = r_i^{k+1} + (1 - alpha^k)(x_i^k - r_i^k)
                    + chi^k * sum_j L_ij (x_j^k + zeta_j^k - x_i^k)

    which is the textbook form regrouped so that ``x^k = r^k`` propagates
    exactly in floating point when the consensus term vanishes.
    """
    if ref.m != g.m:
        raise ConfigurationError(f"reference has {ref.m} agents, graph has {g.m}")
    rng = as_streams(seed).numpy("noise")
    r = np.array(ref(0), dtype=float)
    x = r.copy()
    traj, rbar, errs = [x.copy()], [r.mean(axis=0)], [_tracking_error(x, r.mean(axis=0))]
    for k in range(steps):
        L = _symmetric_matrix(g, k)
        received = _messages(x, rng, noise, nu(k), g.m, per_edge)
        if log is not None:
            _log_messages(log, g, k, received)
        coupling = (L[:, :, None] * (received - x[:, None, :])).sum(axis=1)
        r_next = np.asarray(ref(k + 1), dtype=float)
        x = r_next + (1.0 - alpha(k)) * (x - r) + chi(k) * coupling
        if not np.all(np.isfinite(x)):
            raise ConfigurationError(f"iterates diverged at k={k + 1}; reduce chi or the weights")
        r = r_next
        traj.append(x.copy())
        rbar.append(r.mean(axis=0))
        errs.append(_tracking_error(x, rbar[-1]))
    return DynamicRun(np.stack(traj), np.stack(rbar), np.asarray(errs), log)


def run_alg2(
    g: WeightedGraph,
    ref: ReferenceSignal,
    X: ConvexSet,
    steps: int,
    chi: Schedule = DEFAULT_CHI,
    gamma: Schedule = DEFAULT_ALPHA,
    nu: Schedule = ZERO,
    seed: int | Streams = 0,
    noise: str = "laplace",
    per_edge: bool = False,
    x0: Sequence | None = None,
    log: ObservationLog | None = None,
) -> DynamicRun:
    """Projected dynamic consensus: ``x <- Pi_X[x + chi * coupling + gamma * r]``."""
    if not isinstance(X, ConvexSet):
        raise ConfigurationError(f"unsupported constraint set {X!r}")
    if ref.m != g.m:
        raise ConfigurationError(f"reference has {ref.m} agents, graph has {g.m}")
    streams = as_streams(seed)
    rng = streams.numpy("noise")
    if x0 is None:
        init_rng = streams.numpy("init")
        x = np.stack([X.sample(init_rng, ref.dim) for _ in range(g.m)])
    else:
        x = np.asarray(x0, dtype=float).reshape(g.m, ref.dim)
        x = np.stack([X.project(row) for row in x])
    r_bar = ref.average(0)
    traj, rbar, errs = [x.copy()], [r_bar], [_tracking_error(x, r_bar)]
    for k in range(steps):
        L = _symmetric_matrix(g, k)
        received = _messages(x, rng, noise, nu(k), g.m, per_edge)
        if log is not None:
            _log_messages(log, g, k, received)
        coupling = (L[:, :, None] * (received - x[:, None, :])).sum(axis=1)
        y = x + chi(k) * coupling + gamma(k) * np.asarray(ref(k), dtype=float)
        x = np.stack([X.project(row) for row in y])
        r_bar = ref.average(k + 1)
        traj.append(x.copy())
        rbar.append(r_bar)
        errs.append(_tracking_error(x, r_bar))
    return DynamicRun(np.stack(traj), np.stack(rbar), np.asarray(errs), log)
