"""Local objective functions ``f_i`` and closed-form / numerical minimizers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError


class LocalObjective:
    kind = ""
    dim: int

    def value(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticAnchor(LocalObjective):
    """``(curvature / 2) * ||theta - anchor||^2``.

    ``curvature=1`` is the rendezvous cost; ``curvature=2`` gives
    ``||theta - anchor||^2``, whose network minimizer is the plain average.
    """

    anchor: np.ndarray
    curvature: float = 1.0
    kind = "quadratic-anchor"

    def __post_init__(self):
        object.__setattr__(self, "anchor", np.atleast_1d(np.asarray(self.anchor, dtype=float)))

    @property
    def dim(self) -> int:
        return self.anchor.shape[0]

    def value(self, theta):
        d = np.asarray(theta, dtype=float) - self.anchor
        return 0.5 * self.curvature * float(d @ d)

    def gradient(self, theta):
        return self.curvature * (np.asarray(theta, dtype=float) - self.anchor)


@dataclass(frozen=True)
class GeneralQuadratic(LocalObjective):
    """``0.5 * theta' A theta + b' theta`` with ``A`` symmetric PSD."""

    A: np.ndarray
    b: np.ndarray
    kind = "general-quadratic"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        return float(0.5 * theta @ self.A @ theta + self.b @ theta)

    def gradient(self, theta):
        return self.A @ np.asarray(theta, dtype=float) + self.b


@dataclass(frozen=True)
class LogisticTable(LocalObjective):
    """Regularized logistic loss on a private table of ``(features, +-1 labels)``."""

    features: np.ndarray
    labels: np.ndarray
    reg: float = 0.01
    kind = "logistic-on-table"

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        margins = self.labels * (self.features @ theta)
        return float(np.mean(np.logaddexp(0.0, -margins)) + 0.5 * self.reg * theta @ theta)

    def gradient(self, theta):
        theta = np.asarray(theta, dtype=float)
        margins = self.labels * (self.features @ theta)
        # d/dz log(1 + e^-z) = -sigmoid(-z)
        weights = -self.labels * 0.5 * (1.0 - np.tanh(0.5 * margins))
        return self.features.T @ weights / len(self.labels) + self.reg * theta


def logistic_surrogate(m: int = 5, samples: int = 100, dim: int = 3, seed: int = 0,
                       reg: float = 0.01) -> list[LogisticTable]:
    """Small synthetic binary classification split across ``m`` agents.

    The last feature is a constant bias column. Each agent's features are
    shifted differently so the local minimizers disagree.
    """
    rng = np.random.default_rng(seed)
    w_true = rng.normal(size=dim) * 2.0
    out = []
    for i in range(m):
        X = rng.normal(loc=rng.normal(scale=0.5, size=dim), size=(samples, dim))
        X[:, -1] = 1.0
        y = np.where(X @ w_true + rng.logistic(size=samples) > 0, 1.0, -1.0)
        out.append(LogisticTable(X, y, reg))
    return out


def network_value(objectives: Sequence[LocalObjective], theta) -> float:
    """``F(theta) = (1/m) sum_i f_i(theta)``."""
    return float(np.mean([f.value(theta) for f in objectives]))


def network_gradient(objectives: Sequence[LocalObjective], theta) -> np.ndarray:
    return np.mean([f.gradient(theta) for f in objectives], axis=0)


def minimizer(objectives: Sequence[LocalObjective]) -> np.ndarray:
    """Unique minimizer of ``F``: closed form for quadratics, BFGS otherwise."""
    if all(isinstance(f, QuadraticAnchor) for f in objectives):
        c = np.array([f.curvature for f in objectives])
        P = np.stack([f.anchor for f in objectives])
        return (c[:, None] * P).sum(axis=0) / c.sum()
    if all(isinstance(f, (QuadraticAnchor, GeneralQuadratic)) for f in objectives):
        d = objectives[0].dim
        A = np.zeros((d, d))
        b = np.zeros(d)
        for f in objectives:
            if isinstance(f, QuadraticAnchor):
                A += f.curvature * np.eye(d)
                b -= f.curvature * f.anchor
            else:
                A += f.A
                b += f.b
        return np.linalg.solve(A, -b)
    d = objectives[0].dim
    res = minimize(lambda t: network_value(objectives, t), np.zeros(d),
                   jac=lambda t: network_gradient(objectives, t), method="BFGS",
                   options={"gtol": 1e-12, "maxiter": 10_000})
    return res.x


def gradient_check(f: LocalObjective, points, h: float = 1e-6) -> float:
    """Worst relative error between ``f.gradient`` and central differences."""
    worst = 0.0
    for theta in points:
        theta = np.asarray(theta, dtype=float)
        fd = np.empty_like(theta)
        for j in range(theta.size):
            e = np.zeros_like(theta)
            e[j] = h
            fd[j] = (f.value(theta + e) - f.value(theta - e)) / (2 * h)
        g = f.gradient(theta)
        worst = max(worst, float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8)))
    return worst


def objectives_from_spec(spec: dict, m: int) -> list[LocalObjective]:
    spec = dict(spec)
    kind = spec.get("kind")
    if kind == "quadratic-anchor":
        anchors = np.asarray(spec["anchors"], dtype=float)
        if anchors.ndim == 1:
            anchors = anchors[:, None]
        if len(anchors) != m:
            raise ConfigurationError(f"objective.anchors has {len(anchors)} entries for {m} agents")
        return [QuadraticAnchor(a, float(spec.get("curvature", 1.0))) for a in anchors]
    if kind == "logistic":
        return logistic_surrogate(m, int(spec.get("samples", 100)), int(spec.get("dim", 3)),
                                  int(spec.get("data_seed", 0)), float(spec.get("reg", 0.01)))
    raise ConfigurationError(f"unknown objective kind {kind!r}")
