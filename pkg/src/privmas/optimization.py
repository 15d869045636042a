"""Distributed optimization of ``F = (1/m) sum_i f_i`` under privacy noise.

Three steppers share the same message pattern (every agent sends one noisy
copy of its iterate per round to its out-neighbors):

* :func:`step_alg3`: attenuated coupling, ``x_i + gamma^k sum_j L_ij
  (y_j - x_i) - lambda^k grad f_i(x_i)``; the noise enters scaled by
  ``gamma^k``, which decays faster than the noise scale grows.
* :func:`step_dgd`: classic weighted averaging of the noisy iterates.
* :func:`run_pdop_baseline`: DGD with geometrically decaying stepsize and noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, NumericalError
from .graph import WeightedGraph, circle
from .objectives import LocalObjective, QuadraticAnchor, minimizer, network_value
from .observation import ObservationLog
from .rng import Streams, as_streams
from .schedules import ZERO, Schedule, constant, geometric, harmonic_power, preset


@dataclass(frozen=True)
class OptimizerState:
    x: np.ndarray   # (m, d)
    k: int = 0


def _gradients(objectives: Sequence[LocalObjective], x: np.ndarray, k: int) -> np.ndarray:
    grads = np.empty_like(x)
    for i, f in enumerate(objectives):
        g = f.gradient(x[i])
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient at agent {i}, iteration {k}")
        grads[i] = g
    return grads


def _noisy_broadcast(x, nu_k, rng, g, k, log):
    noise = rng.laplace(0.0, nu_k, size=x.shape) if nu_k > 0 else np.zeros_like(x)
    y = x + noise
    if log is not None:
        for (i, j) in sorted(g.weights):
            log.record_plain(k, j, i, y[j])
    return y


def _check(x, k):
    if not np.all(np.isfinite(x)):
        bad = int(np.argwhere(~np.isfinite(x))[0][0])
        raise NumericalError(f"non-finite iterate at agent {bad}, iteration {k}")


def step_alg3(
    state: OptimizerState,
    g: WeightedGraph,
    objectives: Sequence[LocalObjective],
    stepsize: Schedule,
    attenuation: Schedule,
    nu: Schedule,
    rng: np.random.Generator,
    log: ObservationLog | None = None,
) -> OptimizerState:
    k = state.k
    x = state.x
    grads = _gradients(objectives, x, k)
    y = _noisy_broadcast(x, nu(k), rng, g, k, log)
    L = g.matrix(k)
    coupling = L @ y - L.sum(axis=1)[:, None] * x
    x_next = x + attenuation(k) * coupling - stepsize(k) * grads
    _check(x_next, k + 1)
    return OptimizerState(x_next, k + 1)


def step_dgd(
    state: OptimizerState,
    g: WeightedGraph,
    objectives: Sequence[LocalObjective],
    stepsize: Schedule,
    nu: Schedule,
    rng: np.random.Generator,
    log: ObservationLog | None = None,
) -> OptimizerState:
    """``x_i <- w_ii x_i + sum_{j != i} w_ij y_j - lambda^k grad f_i(x_i)``, ``w_ii = 1 - sum_j w_ij``.

    An agent's own iterate enters without noise.
    """
    k = state.k
    x = state.x
    grads = _gradients(objectives, x, k)
    y = _noisy_broadcast(x, nu(k), rng, g, k, log)
    W = g.matrix(k)
    self_weight = 1.0 - W.sum(axis=1)
    x_next = self_weight[:, None] * x + W @ y - stepsize(k) * grads
    _check(x_next, k + 1)
    return OptimizerState(x_next, k + 1)


@dataclass
class OptimizationRun:
    protocol: str
    trajectory: np.ndarray               # (recorded, m, d)
    recorded_k: np.ndarray               # iteration index of each trajectory row
    log: ObservationLog | None
    schedules: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.trajectory[-1]

    def distance_to(self, theta_star) -> np.ndarray:
        """``(recorded, m)`` distances ``||x_i^k - theta*||``."""
        return np.linalg.norm(self.trajectory - np.asarray(theta_star)[None, None, :], axis=2)

    def optimality_gap(self, objectives, f_star: float) -> float:
        """Mean over agents of ``F(x_i^K) - F*`` at the last iterate."""
        return float(np.mean([network_value(objectives, xi) - f_star for xi in self.final]))


def initial_iterates(m: int, dim: int, streams: Streams) -> np.ndarray:
    return streams.numpy("init").uniform(-1.0, 1.0, size=(m, dim))


def _run(protocol, stepper, g, objectives, steps, seed, x0, k0, log, record_every, schedules):
    streams = as_streams(seed)
    m = g.m
    if len(objectives) != m:
        raise ConfigurationError(f"{len(objectives)} objectives for {m} agents")
    dim = objectives[0].dim
    x = initial_iterates(m, dim, streams) if x0 is None else np.array(x0, dtype=float).reshape(m, dim)
    rng = streams.numpy("noise")
    state = OptimizerState(x, k0)
    rows, ks = [x.copy()], [k0]
    for t in range(steps):
        state = stepper(state, rng, log)
        if (t + 1) % record_every == 0 or t + 1 == steps:
            rows.append(state.x.copy())
            ks.append(state.k)
    return OptimizationRun(protocol, np.stack(rows), np.asarray(ks), log, schedules)


def run_alg3(
    g: WeightedGraph,
    objectives: Sequence[LocalObjective],
    steps: int,
    stepsize: Schedule | None = None,
    attenuation: Schedule | None = None,
    nu: Schedule | None = None,
    seed: int | Streams = 0,
    x0=None,
    k0: int = 0,
    log: ObservationLog | None = None,
    record_every: int = 1,
) -> OptimizationRun:
    """Run the attenuated-noise optimizer; schedules default to the ``paper-alg3`` preset.

    ``k0`` shifts the iteration index at which schedules are first evaluated.
    """
    lam, gam, nu_default = preset("paper-alg3")
    stepsize = stepsize or lam
    attenuation = attenuation or gam
    nu = nu if nu is not None else nu_default

    def stepper(state, rng, log):
        return step_alg3(state, g, objectives, stepsize, attenuation, nu, rng, log)

    return _run("alg3", stepper, g, objectives, steps, seed, x0, k0, log, record_every,
                {"stepsize": stepsize, "attenuation": attenuation, "nu": nu})


def run_dgd(
    g: WeightedGraph,
    objectives: Sequence[LocalObjective],
    steps: int,
    stepsize: Schedule | None = None,
    nu: Schedule = ZERO,
    seed: int | Streams = 0,
    x0=None,
    k0: int = 0,
    log: ObservationLog | None = None,
    record_every: int = 1,
    protocol: str = "dgd",
) -> OptimizationRun:
    stepsize = stepsize or harmonic_power(1.0, 1.0)

    def stepper(state, rng, log):
        return step_dgd(state, g, objectives, stepsize, nu, rng, log)

    return _run(protocol, stepper, g, objectives, steps, seed, x0, k0, log, record_every,
                {"stepsize": stepsize, "attenuation": constant(1.0), "nu": nu})


def run_pdop_baseline(
    g: WeightedGraph,
    objectives: Sequence[LocalObjective],
    steps: int,
    stepsize: Schedule | None = None,
    nu: Schedule | None = None,
    seed: int | Streams = 0,
    x0=None,
    k0: int = 0,
    log: ObservationLog | None = None,
    record_every: int = 1,
) -> OptimizationRun:
    """DGD with ``lambda^k = 0.95^k`` and noise scale ``0.98^k`` unless overridden.

    Geometric stepsizes sum to a finite total, so on weakly curved objectives
    the iterates stall short of the optimum.
    """
    return run_dgd(g, objectives, steps, stepsize or geometric(0.95),
                   nu if nu is not None else geometric(0.98), seed, x0, k0, log, record_every,
                   protocol="pdop")


PROTOCOLS = {"alg3": run_alg3, "dgd": run_dgd, "pdop": run_pdop_baseline}


@dataclass
class RendezvousSummary:
    protocol: str
    optimum: np.ndarray
    final_distances: dict[int, np.ndarray]       # seed -> (m,) distances
    attacks: dict[int, list] = field(default_factory=dict)
    runs: dict[int, OptimizationRun] = field(default_factory=dict)

    def max_final_distance(self) -> float:
        return max(float(d.max()) for d in self.final_distances.values())


def rendezvous_experiment(
    positions,
    protocol: str = "alg3",
    seeds: Sequence[int] = (0,),
    steps: int = 40_000,
    g: WeightedGraph | None = None,
    stepsize: Schedule | None = None,
    attenuation: Schedule | None = None,
    nu: Schedule | None = None,
    attack: bool = True,
    keep_runs: bool = False,
) -> RendezvousSummary:
    """Agents at private positions agree on the point minimizing ``sum ||x - p_i||^2 / 2``.

    Defaults are noise-free with ``lambda^k = 1/(1+k)`` and unit attenuation on
    a circle graph. With ``attack=True`` an eavesdropper on every link tries to
    recover the positions from the message log.
    """
    P = np.asarray(positions, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    m = len(P)
    if m < 2:
        raise ConfigurationError("rendezvous needs at least two agents")
    g = g or circle(m, 0.45)
    objectives = [QuadraticAnchor(p) for p in P]
    theta_star = minimizer(objectives)
    stepsize = stepsize or harmonic_power(1.0, 1.0, a=1.0)
    nu = nu if nu is not None else ZERO
    summary = RendezvousSummary(protocol, theta_star, {})
    for seed in seeds:
        log = ObservationLog() if attack else None
        if protocol == "alg3":
            run = run_alg3(g, objectives, steps, stepsize, attenuation or constant(1.0), nu, seed, log=log)
        elif protocol in ("dgd", "pdop"):
            run = PROTOCOLS[protocol](g, objectives, steps, stepsize, nu, seed, log=log)
        else:
            raise ConfigurationError(f"unknown optimization protocol {protocol!r}")
        summary.final_distances[seed] = np.linalg.norm(run.final - theta_star[None, :], axis=1)
        if attack:
            from .adversary import AdversaryView, attack_gradient_anchors
            # a short prefix of the log is enough for the linear attack
            report = attack_gradient_anchors(AdversaryView.from_run(run), log.restrict(max_k=min(steps, 30) - 1),
                                             g, curvature=1.0, truth=P)
            summary.attacks[seed] = [report]
        if keep_runs:
            summary.runs[seed] = run
    return summary
