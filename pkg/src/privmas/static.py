"""Static average consensus engines.

* :func:`step_plain` / :func:`run_plain`: the classic update
  ``x_i <- x_i + eps * sum_j L_ij (x_j - x_i)``.
* :func:`run_decomposed`: each agent splits its value into a visible
  substate alpha and a hidden substate beta coupled only to its own alpha.
* :func:`run_secure_edge`: every edge weight is the product of two private
  factors, applied inside Paillier ciphertexts.
* :func:`step_dp_static`: plain consensus on Laplace-noised messages.

Rounds are synchronous; all agents update from the previous snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import paillier
from .errors import ConfigurationError, ConvergencePreconditionError
from .graph import DEFAULT_ETA, WeightedGraph, is_connected, max_degree
from .observation import CIPHERTEXT, Message, ObservationLog
from .rng import Streams, as_streams
from .schedules import Schedule


@dataclass(frozen=True)
class ConsensusState:
    x: np.ndarray
    eps: float
    k: int = 0


def check_stepsize(eps: float, delta: int) -> None:
    upper = 1.0 / delta if delta > 0 else np.inf
    if not 0 < eps <= upper:
        raise ConfigurationError(f"stepsize eps={eps} outside (0, 1/Delta] with Delta={delta}")


def _interaction(L: np.ndarray, received: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``sum_j L_ij (received_ij - x_i)``; ``received[i, j]`` is what i got from j."""
    diff = received - x[:, None, ...]
    if x.ndim == 1:
        return (L * diff).sum(axis=1)
    return (L[:, :, None] * diff).sum(axis=1)


def _log_broadcast(log: ObservationLog, g: WeightedGraph, k: int, messages: np.ndarray) -> None:
    # messages[i, j]: value j sent to i
    for (i, j) in sorted(g.weights):
        log.record_plain(k, j, i, messages[i, j])


def step_plain(state: ConsensusState, g: WeightedGraph, log: ObservationLog | None = None) -> ConsensusState:
    """One synchronous round of plain consensus."""
    check_stepsize(state.eps, max_degree(g))
    x = np.asarray(state.x, dtype=float)
    received = np.broadcast_to(x[None, ...], (g.m,) + x.shape)
    if log is not None:
        _log_broadcast(log, g, state.k, received)
    x_next = x + state.eps * _interaction(g.matrix(state.k), received, x)
    return ConsensusState(x_next, state.eps, state.k + 1)


def step_dp_static(
    state: ConsensusState,
    g: WeightedGraph,
    nu: Schedule,
    rng: np.random.Generator,
    log: ObservationLog | None = None,
) -> ConsensusState:
    """Plain consensus where every link carries ``x_j + Laplace(nu(k))``.

    Noise is drawn fresh per directed edge. With ``nu == 0`` the result equals
    :func:`step_plain` bit for bit.
    """
    check_stepsize(state.eps, max_degree(g))
    x = np.asarray(state.x, dtype=float)
    scale = nu(state.k)
    noise = rng.laplace(0.0, scale, size=(g.m,) + x.shape) if scale > 0 else np.zeros((g.m,) + x.shape)
    received = x[None, ...] + noise
    if log is not None:
        _log_broadcast(log, g, state.k, received)
    x_next = x + state.eps * _interaction(g.matrix(state.k), received, x)
    return ConsensusState(x_next, state.eps, state.k + 1)


@dataclass
class ConsensusRun:
    trajectory: np.ndarray           # (steps + 1, m[, d])
    log: ObservationLog | None
    converged_at: int | None = None

    @property
    def final(self) -> np.ndarray:
        return self.trajectory[-1]


def run_plain(
    g: WeightedGraph,
    x0,
    eps: float,
    steps: int,
    tol: float | None = None,
    log: ObservationLog | None = None,
) -> ConsensusRun:
    """Iterate :func:`step_plain`; stop early once within ``tol`` of the initial mean."""
    state = ConsensusState(np.array(x0, dtype=float), eps)
    target = state.x.mean(axis=0)
    traj = [state.x]
    converged = None
    for _ in range(steps):
        if tol is not None and np.max(np.abs(state.x - target)) < tol:
            converged = state.k
            break
        state = step_plain(state, g, log)
        traj.append(state.x)
    if converged is None and tol is not None and np.max(np.abs(state.x - target)) < tol:
        converged = state.k
    return ConsensusRun(np.stack(traj), log, converged)


def run_dp_static(
    g: WeightedGraph,
    x0,
    eps: float,
    nu: Schedule,
    steps: int,
    seed: int | Streams = 0,
    log: ObservationLog | None = None,
) -> ConsensusRun:
    rng = as_streams(seed).numpy("noise")
    state = ConsensusState(np.array(x0, dtype=float), eps)
    traj = [state.x]
    for _ in range(steps):
        state = step_dp_static(state, g, nu, rng, log)
        traj.append(state.x)
    return ConsensusRun(np.stack(traj), log)


# -- state decomposition ----------------------------------------------------

@dataclass(frozen=True)
class InternalWeights:
    """How each agent draws its private alpha-beta coupling ``a_i[k]``.

    By default a fresh uniform value in ``[low, high)`` every iteration.
    ``freeze_after=K0`` keeps the value constant from iteration ``K0`` on;
    ``pinned`` replaces the random draws by a constant. ``public`` marks the
    weights as known to adversaries (a deliberately broken configuration used
    as a negative control).
    """

    low: float = 0.1
    high: float = 0.9
    freeze_after: int | None = None
    pinned: float | None = None
    public: bool = False

    def validate(self, eta: float = DEFAULT_ETA) -> None:
        lo, hi = (self.pinned, self.pinned) if self.pinned is not None else (self.low, self.high)
        if not (eta <= lo <= hi < 1):
            raise ConfigurationError(f"internal weights must satisfy {eta} <= low <= high < 1, got [{lo}, {hi}]")
        if self.freeze_after is not None and self.freeze_after < 0:
            raise ConfigurationError("freeze_after must be >= 0")

    def table(self, m: int, steps: int, rng: np.random.Generator) -> np.ndarray:
        """``(max(steps, 1), m)`` array of weights indexed by ``[k, agent]``."""
        rows = max(steps, 1)
        if self.pinned is not None:
            return np.full((rows, m), float(self.pinned))
        tab = rng.uniform(self.low, self.high, size=(rows, m))
        if self.freeze_after is not None and self.freeze_after < rows:
            tab[self.freeze_after:] = tab[self.freeze_after]
        return tab


@dataclass
class DecomposedRun:
    alpha: np.ndarray                # (steps + 1, m)
    beta: np.ndarray                 # (steps + 1, m)
    internal: np.ndarray             # (steps, m) private couplings
    log: ObservationLog | None
    config: InternalWeights = field(default_factory=InternalWeights)
    eps: float = 0.0

    @property
    def substates(self) -> np.ndarray:
        """``(steps + 1, 2m)``: alphas then betas, matching :func:`augmented_graph`."""
        return np.concatenate([self.alpha, self.beta], axis=1)


def augmented_graph(g: WeightedGraph, internal: np.ndarray) -> WeightedGraph:
    """Explicit 2m-node graph: node i is alpha_i, node m+i is beta_i."""
    m = g.m
    weights: dict = dict(g.weights)
    last = internal.shape[0] - 1
    for i in range(m):
        def w(k, i=i):
            return float(internal[min(k, last), i])
        weights[(i, m + i)] = w
        weights[(m + i, i)] = w
    return WeightedGraph(2 * m, weights, directed=False, name=f"augmented({g.name})")


def run_decomposed(
    g: WeightedGraph,
    x0,
    eps: float,
    steps: int,
    internal: InternalWeights = InternalWeights(),
    seed: int | Streams = 0,
    radius: float = 1.0,
    alpha0=None,
    log: ObservationLog | None = None,
) -> DecomposedRun:
    """State-decomposition consensus; only alpha substates ever leave an agent.

    ``alpha_i[0]`` is uniform on ``[x_i[0] - radius, x_i[0] + radius]`` unless
    given, and ``beta_i[0] = 2 x_i[0] - alpha_i[0]``.
    """
    if g.directed:
        raise ConfigurationError("state decomposition needs an undirected graph")
    if not is_connected(g):
        raise ConvergencePreconditionError("state decomposition needs a connected graph")
    internal.validate()
    m = g.m
    check_stepsize(eps, max_degree(g) + 1)
    streams = as_streams(seed)
    x0 = np.asarray(x0, dtype=float)
    if alpha0 is None:
        alpha0 = x0 + streams.numpy("init").uniform(-radius, radius, size=m)
    alpha = np.array(alpha0, dtype=float)
    beta = 2.0 * x0 - alpha
    tab = internal.table(m, steps, streams.numpy("internal"))
    nbrs = [g.in_neighbors(i) for i in range(m)]

    alphas, betas = [alpha.copy()], [beta.copy()]
    for k in range(steps):
        L = g.matrix(k)
        if log is not None:
            for i in range(m):
                for j in nbrs[i]:
                    log.record_plain(k, j, i, alpha[j])
        new_alpha = np.empty(m)
        new_beta = np.empty(m)
        for i in range(m):
            acc = 0.0
            for j in nbrs[i]:
                acc += L[i, j] * (alpha[j] - alpha[i])
            a = tab[k, i]
            new_alpha[i] = alpha[i] + eps * (acc + a * (beta[i] - alpha[i]))
            new_beta[i] = beta[i] + eps * a * (alpha[i] - beta[i])
        alpha, beta = new_alpha, new_beta
        alphas.append(alpha.copy())
        betas.append(beta.copy())
    return DecomposedRun(np.stack(alphas), np.stack(betas), tab[:steps], log, internal, eps)


# -- weight decomposition over Paillier -------------------------------------

@dataclass(frozen=True)
class SecureEdgeConfig:
    """Parameters of the encrypted weight-decomposition protocol.

    Each agent draws its own factor per link and iteration uniformly from
    ``factor_range``; the effective weight is the product of both endpoints'
    factors. ``pinned`` fixes every factor (a float, or a mapping from the
    ordered pair ``(holder, peer)`` to a float). ``leak_factors`` marks the
    factors as known to adversaries (negative control).
    """

    key_bits: int = paillier.DEFAULT_KEY_BITS
    frac_bits: int = 32
    factor_range: tuple[float, float] = (0.45, 0.89)
    pinned: float | Mapping | None = None
    leak_factors: bool = False
    eta: float = DEFAULT_ETA

    def validate(self) -> None:
        lo, hi = self.factor_range
        if self.pinned is None and not (0 < lo <= hi and lo * lo >= self.eta and hi * hi < 1):
            raise ConfigurationError(
                f"factor range {self.factor_range} must give products inside [{self.eta}, 1)")


@dataclass
class SecureEdgeRun:
    trajectory: np.ndarray                       # (steps + 1, m)
    log: ObservationLog | None
    keys: list[paillier.KeyPair]
    factors: dict[tuple[int, int], np.ndarray]   # (holder, peer) -> per-k factor
    config: SecureEdgeConfig
    eps: float

    @property
    def final(self) -> np.ndarray:
        return self.trajectory[-1]

    def effective_weight(self, i: int, j: int, k: int) -> float:
        return float(self.factors[(i, j)][k] * self.factors[(j, i)][k])


def _draw_factors(g: WeightedGraph, cfg: SecureEdgeConfig, steps: int, rng: np.random.Generator):
    out = {}
    for (i, j) in sorted(g.weights):
        if cfg.pinned is None:
            out[(i, j)] = rng.uniform(*cfg.factor_range, size=steps)
        else:
            val = cfg.pinned[(i, j)] if isinstance(cfg.pinned, Mapping) else cfg.pinned
            out[(i, j)] = np.full(steps, float(val))
    return out


def run_secure_edge(
    g: WeightedGraph,
    x0,
    eps: float,
    steps: int,
    config: SecureEdgeConfig = SecureEdgeConfig(),
    seed: int | Streams = 0,
    log: ObservationLog | None = None,
    keys: list[paillier.KeyPair] | None = None,
) -> SecureEdgeRun:
    """Consensus whose interaction terms are computed in ciphertext.

    Per link (i <- j) and iteration: i sends ``Enc_i(-x_i)``; j adds its own
    encrypted ``x_j`` and scales by its factor ``a_ji``, returning
    ``Enc_i(a_ji (x_j - x_i))``; i decrypts and multiplies by its factor
    ``a_ij``. The graph's own weights are ignored: the effective weight is
    ``a_ij * a_ji``.
    """
    if g.directed:
        raise ConfigurationError("weight decomposition needs an undirected graph")
    config.validate()
    check_stepsize(eps, max_degree(g))
    x = np.asarray(x0, dtype=float).copy()
    if x.ndim != 1:
        raise ConfigurationError("secure-edge consensus supports scalar states only")
    m = g.m
    streams = as_streams(seed)
    if keys is None:
        keys = [paillier.keygen(config.key_bits, streams.python("keygen", i)) for i in range(m)]
    codecs = [paillier.FixedPointCodec(kp.public.n, config.frac_bits) for kp in keys]
    crypto_rng = [streams.python("crypto", i) for i in range(m)]
    factors = _draw_factors(g, config, steps, streams.numpy("factors"))
    edges = sorted(g.weights)

    traj = [x.copy()]
    for k in range(steps):
        terms = np.zeros(m)
        for (i, j) in edges:
            pk_i, codec_i = keys[i].public, codecs[i]
            fp = pk_i.fingerprint.hex()
            request = paillier.encrypt(pk_i, codec_i.encode(-x[i]), crypto_rng[i])
            if log is not None:
                log.append(Message(k, i, j, CIPHERTEXT, request.to_bytes(pk_i), "request", fp))
            # agent j, working under i's public key
            own = paillier.encrypt(pk_i, codec_i.encode(x[j]), crypto_rng[j])
            diff = paillier.hom_add(pk_i, request, own)
            response = paillier.hom_scale(pk_i, diff, codec_i.encode(factors[(j, i)][k]))
            if log is not None:
                log.append(Message(k, j, i, CIPHERTEXT, response.to_bytes(pk_i), "response", fp))
            # agent i
            partial = codec_i.decode(paillier.decrypt(keys[i].secret, response), depth=2)
            terms[i] += factors[(i, j)][k] * partial
        x = x + eps * terms
        traj.append(x.copy())
    return SecureEdgeRun(np.stack(traj), log, keys, factors, config, eps)
