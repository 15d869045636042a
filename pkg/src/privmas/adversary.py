"""Adversary models and linear-algebraic inference attacks.

Every attack writes the protocol's update rules as a linear system whose
unknowns are the quantities the adversary cannot see, substitutes what it
did see, and asks whether the target (an initial value, an objective
parameter) is pinned down. Targets that move along the nullspace of the
system are reported as ambiguous together with the dimension of the
consistent solution set.

Products of an unknown private multiplier and another unknown are only
linear when the multiplier is known or constant over several equations.
A multiplier that is fresh in every equation makes that equation carry no
point information; such equations are dropped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Hashable, Iterable, Mapping, Sequence

import numpy as np

from . import paillier
from .errors import ConfigurationError
from .graph import WeightedGraph
from .observation import CIPHERTEXT, PLAINTEXT, ObservationLog

EXACT = "exact-recovery"
AMBIGUOUS = "ambiguous"
FAILED = "failed"

EAVESDROPPER = "eavesdropper"
HBC = "honest-but-curious"

RANK_RTOL = 1e-9
IDENT_TOL = 1e-8
CONSISTENCY_TOL = 1e-7
TRUTH_TOL = 1e-6


# -- views ------------------------------------------------------------------

@dataclass(frozen=True)
class AdversaryView:
    """What one adversary knows besides the messages it captures.

    ``public`` holds protocol configuration that everybody knows (pinned or
    leaked weights, stepsizes, codec parameters). ``private`` is an
    honest-but-curious agent's own internal data (states, keys, factors) and
    is always empty for an eavesdropper.
    """

    kind: str
    agent: int | None = None
    edges: frozenset | None = None
    private: Mapping[str, Any] = field(default_factory=dict)
    public: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == EAVESDROPPER:
            if self.private:
                raise ConfigurationError("an eavesdropper holds no internal state or keys")
            if self.agent is not None:
                raise ConfigurationError("an eavesdropper is not an agent")
        elif self.kind == HBC:
            if self.agent is None:
                raise ConfigurationError("an honest-but-curious view needs an agent")
        else:
            raise ConfigurationError(f"unknown adversary kind {self.kind!r}")

    @classmethod
    def eavesdropper(cls, edges: Iterable | None = None, public: Mapping | None = None) -> "AdversaryView":
        tapped = None if edges is None else frozenset(tuple(e) for e in edges)
        return cls(EAVESDROPPER, None, tapped, {}, dict(public or {}))

    @classmethod
    def hbc(cls, agent: int, private: Mapping | None = None, public: Mapping | None = None) -> "AdversaryView":
        return cls(HBC, agent, None, dict(private or {}), dict(public or {}))

    def observe(self, log: ObservationLog) -> ObservationLog:
        """The part of ``log`` this adversary captures."""
        if self.kind == EAVESDROPPER:
            if self.edges is None:
                return ObservationLog(list(log))
            return log.restrict(edges=self.edges)
        i = self.agent
        return ObservationLog(m for m in log if m.receiver == i or m.sender == i)

    @classmethod
    def from_run(cls, run, kind: str = EAVESDROPPER, agent: int | None = None, edges=None) -> "AdversaryView":
        """Build a view from a finished run, pulling in exactly the knowledge
        its configuration makes public and, for an agent, that agent's own data."""
        from .optimization import OptimizationRun
        from .static import ConsensusRun, DecomposedRun, SecureEdgeRun

        public: dict[str, Any] = {}
        private: dict[str, Any] = {}
        if isinstance(run, ConsensusRun):
            if agent is not None:
                private["states"] = run.trajectory[:, agent]
        elif isinstance(run, DecomposedRun):
            cfg = run.config
            if cfg.public or cfg.pinned is not None:
                public["internal"] = run.internal
            if cfg.freeze_after is not None:
                public["freeze_after"] = cfg.freeze_after
            if agent is not None:
                private["alpha"] = run.alpha[:, agent]
                private["beta"] = run.beta[:, agent]
                private["internal"] = run.internal[:, agent]
        elif isinstance(run, SecureEdgeRun):
            public["frac_bits"] = run.config.frac_bits
            if run.config.leak_factors or run.config.pinned is not None:
                public["factors"] = run.factors
            if agent is not None:
                private["states"] = run.trajectory[:, agent]
                private["secret_key"] = run.keys[agent].secret
                private["factors"] = {k: v for k, v in run.factors.items() if k[0] == agent}
        elif isinstance(run, OptimizationRun):
            public["schedules"] = run.schedules
            public["protocol"] = run.protocol
            if agent is not None:
                private["states"] = run.trajectory[:, agent]
        else:
            raise ConfigurationError(f"no adversary knowledge model for {type(run).__name__}")
        if kind == EAVESDROPPER:
            return cls.eavesdropper(edges, public)
        if agent is None:
            raise ConfigurationError("an honest-but-curious view needs an agent")
        return cls.hbc(agent, private, public)


# -- reports ----------------------------------------------------------------

@dataclass
class AttackReport:
    target: str
    agents: list[int]
    outcome: str
    values: list = field(default_factory=list)       # per agent; None where not identified
    ambiguity_dim: int = 0
    residual: float = 0.0
    diagnostic: str = ""

    @property
    def exact(self) -> bool:
        return self.outcome == EXACT

    def verify(self, truth, tol: float = TRUTH_TOL) -> bool:
        """True when every reconstructed value is within ``tol`` of ``truth[agent]``."""
        if not self.exact:
            return False
        for a, v in zip(self.agents, self.values):
            if v is None or np.max(np.abs(np.asarray(v) - np.asarray(truth[a]))) > tol:
                return False
        return True

    def to_record(self) -> dict:
        return {
            "target": self.target,
            "agents": list(self.agents),
            "outcome": self.outcome,
            "values": [None if v is None else np.asarray(v).tolist() for v in self.values],
            "ambiguity_dim": int(self.ambiguity_dim),
            "residual": float(self.residual),
            "diagnostic": self.diagnostic,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def from_record(cls, rec: Mapping) -> "AttackReport":
        return cls(rec["target"], list(rec["agents"]), rec["outcome"], list(rec["values"]),
                   int(rec["ambiguity_dim"]), float(rec["residual"]), rec.get("diagnostic", ""))


def _failed(target: str, agents, why: str) -> AttackReport:
    return AttackReport(target, list(agents), FAILED, [None] * len(agents), 0, float("nan"), why)


def _sound(report: AttackReport, truth) -> AttackReport:
    """Never let an exact-recovery claim stand when ground truth disagrees."""
    if truth is None or not report.exact or report.verify(truth):
        return report
    return replace(report, outcome=FAILED,
                   diagnostic="reconstruction disagrees with ground truth beyond 1e-6")


# -- linear system ----------------------------------------------------------

class LinearSystem:
    """Equations ``sum coef * var = rhs`` over hashable variable names.

    Variables with a known value are substituted at solve time; every other
    variable mentioned in an equation or a target is an unknown. Right-hand
    sides are vectors of length ``dim`` (one independent system per
    coordinate sharing the same coefficient matrix).
    """

    def __init__(self, dim: int = 1):
        self.dim = dim
        self.known: dict[Hashable, np.ndarray] = {}
        self._rows: list[tuple[dict, np.ndarray]] = []

    def know(self, var: Hashable, value) -> None:
        self.known[var] = np.broadcast_to(np.atleast_1d(np.asarray(value, dtype=float)), (self.dim,)).copy()

    def is_known(self, var: Hashable) -> bool:
        return var in self.known

    def add(self, coeffs: Mapping[Hashable, float], rhs=0.0) -> None:
        r = np.broadcast_to(np.atleast_1d(np.asarray(rhs, dtype=float)), (self.dim,)).copy()
        self._rows.append((dict(coeffs), r))

    def __len__(self) -> int:
        return len(self._rows)

    def solve(self, targets: Sequence[Mapping[Hashable, float]] = ()) -> "Solution":
        index: dict[Hashable, int] = {}
        for coeffs, _ in self._rows:
            for v in coeffs:
                if v not in self.known and v not in index:
                    index[v] = len(index)
        for t in targets:
            for v in t:
                if v not in self.known and v not in index:
                    index[v] = len(index)
        n = len(index)
        A = np.zeros((len(self._rows), n))
        b = np.zeros((len(self._rows), self.dim))
        for r, (coeffs, rhs) in enumerate(self._rows):
            b[r] = rhs
            for v, c in coeffs.items():
                if v in self.known:
                    b[r] -= c * self.known[v]
                else:
                    A[r, index[v]] += c
        if n == 0 or len(self._rows) == 0:
            x = np.zeros((n, self.dim))
            null = np.eye(n)
            rank = 0
        else:
            U, s, Vt = np.linalg.svd(A, full_matrices=True)
            rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
            x = Vt[:rank].T @ ((U[:, :rank].T @ b) / s[:rank, None])
            null = Vt[rank:].T
        resid = A @ x - b if len(self._rows) else np.zeros((0, self.dim))
        scale = 1.0 + (np.max(np.abs(b)) if b.size else 0.0)
        residual = float(np.max(np.abs(resid)) / scale) if resid.size else 0.0
        return Solution(self, index, x, null, rank, residual)


@dataclass
class Solution:
    system: LinearSystem
    index: dict
    x: np.ndarray
    null: np.ndarray
    rank: int
    residual: float

    def _vector(self, coeffs: Mapping) -> tuple[np.ndarray, np.ndarray]:
        t = np.zeros(len(self.index))
        const = np.zeros(self.system.dim)
        for v, c in coeffs.items():
            if v in self.system.known:
                const += c * self.system.known[v]
            else:
                t[self.index[v]] += c
        return t, const

    def value(self, coeffs: Mapping) -> np.ndarray:
        t, const = self._vector(coeffs)
        return const + t @ self.x

    def identifiable(self, coeffs: Mapping) -> bool:
        t, _ = self._vector(coeffs)
        if not t.any():
            return True
        return float(np.linalg.norm(self.null.T @ t)) <= IDENT_TOL * float(np.linalg.norm(t))

    def ambiguity(self, targets: Sequence[Mapping]) -> int:
        """Dimension of the set of target values consistent with the observations."""
        if not targets or self.null.shape[1] == 0:
            return 0
        T = np.stack([self._vector(t)[0] for t in targets], axis=1)
        M = self.null.T @ T
        if not M.size:
            return 0
        s = np.linalg.svd(M, compute_uv=False)
        return int(np.sum(s > IDENT_TOL * max(1.0, float(np.linalg.norm(T, 2)))))


def _report(target: str, agents, sol: Solution, exprs, extra: str = "") -> AttackReport:
    if sol.residual > CONSISTENCY_TOL:
        return AttackReport(target, list(agents), FAILED, [None] * len(agents), 0, sol.residual,
                            "observations inconsistent with the assumed protocol model")
    values, ok = [], []
    for e in exprs:
        ident = sol.identifiable(e)
        ok.append(ident)
        if ident:
            v = sol.value(e)
            values.append(float(v[0]) if v.size == 1 else v.tolist())
        else:
            values.append(None)
    dim = sol.ambiguity(exprs)
    if all(ok):
        return AttackReport(target, list(agents), EXACT, values, 0, sol.residual, extra)
    n_free = len(ok) - sum(ok)
    diag = f"{n_free} of {len(ok)} targets not identified; solution set dimension {dim}"
    return AttackReport(target, list(agents), AMBIGUOUS, values, max(dim, 1), sol.residual,
                        (extra + "; " if extra else "") + diag)


def _rounds(log: ObservationLog, max_rounds: int) -> list[int]:
    ks = log.iterations[:max_rounds]
    # only a gap-free prefix gives usable dynamics equations
    out = []
    for k in ks:
        if out and k != out[-1] + 1:
            break
        out.append(k)
    return out


def _dim_of(log: ObservationLog) -> int:
    for m in log:
        if m.kind == PLAINTEXT:
            return int(np.atleast_1d(np.asarray(m.payload)).size)
    return 1


def _default_targets(view: AdversaryView, g: WeightedGraph, neighbors_only: bool = False) -> list[int]:
    if view.kind == HBC:
        i = view.agent
        if neighbors_only:
            return sorted(set(g.in_neighbors(i)) | set(g.out_neighbors(i)))
        return [j for j in range(g.m) if j != i]
    return list(range(g.m))


# -- plain consensus --------------------------------------------------------

def attack_plain_consensus(
    view: AdversaryView,
    log: ObservationLog,
    g: WeightedGraph,
    eps: float,
    targets: Sequence[int] | None = None,
    max_rounds: int = 50,
    truth=None,
) -> AttackReport:
    """Recover initial values from a plain-consensus log.

    Unknowns are the states ``x_j[k]`` the adversary did not see; each
    round of the public update rule ties them to what it did see.
    """
    targets = list(_default_targets(view, g) if targets is None else targets)
    seen = view.observe(log)
    if len(seen) == 0:
        return _failed("initial-value", targets, "empty log")
    if 0 not in seen.iterations:
        return _failed("initial-value", targets, "log does not contain round k=0")
    rounds = _rounds(seen, max_rounds)
    sys = LinearSystem(_dim_of(seen))
    for (j, k), val in seen.plaintext_by_sender().items():
        if k in rounds:
            sys.know(("x", j, k), val)
    if view.kind == HBC and "states" in view.private:
        own = np.asarray(view.private["states"])
        for k in rounds:
            if k < len(own):
                sys.know(("x", view.agent, k), own[k])
    for k in rounds[:-1]:
        L = g.matrix(k)
        for j in range(g.m):
            coeffs = {("x", j, k + 1): 1.0, ("x", j, k): -1.0}
            for l in g.in_neighbors(j):
                coeffs[("x", l, k)] = coeffs.get(("x", l, k), 0.0) - eps * L[j, l]
                coeffs[("x", j, k)] += eps * L[j, l]
            sys.add(coeffs)
    exprs = [{("x", j, rounds[0]): 1.0} for j in targets]
    return _sound(_report("initial-value", targets, sys.solve(exprs), exprs), truth)


# -- state decomposition ----------------------------------------------------

def attack_decomposed(
    view: AdversaryView,
    log: ObservationLog,
    g: WeightedGraph,
    eps: float,
    targets: Sequence[int] | None = None,
    max_rounds: int = 40,
    truth=None,
) -> AttackReport:
    """Recover ``x_j[0] = (alpha_j[0] + beta_j[0]) / 2`` from visible alpha messages.

    The coupling ``u_j[k] = a_j[k] (beta_j[k] - alpha_j[k])`` is a linear
    unknown; it becomes informative about beta only when the internal
    weight is known (public or the agent's own) or constant over a tail.
    """
    targets = list(_default_targets(view, g) if targets is None else targets)
    seen = view.observe(log)
    if len(seen) == 0:
        return _failed("initial-value", targets, "empty log")
    if 0 not in seen.iterations:
        return _failed("initial-value", targets, "log does not contain round k=0")
    rounds = _rounds(seen, max_rounds)
    m = g.m
    internal = view.public.get("internal")
    freeze = view.public.get("freeze_after")

    def build(frozen_u: dict | None = None) -> LinearSystem:
        sys = LinearSystem(_dim_of(seen))
        for (j, k), val in seen.plaintext_by_sender().items():
            if k in rounds:
                sys.know(("alpha", j, k), val)
        known_a: dict[tuple[int, int], float] = {}
        if internal is not None:
            tab = np.asarray(internal)
            for k in rounds[:-1]:
                if k < len(tab):
                    for j in range(m):
                        known_a[(j, k)] = float(tab[k, j])
        if view.kind == HBC:
            i = view.agent
            for name in ("alpha", "beta"):
                if name in view.private:
                    arr = np.asarray(view.private[name])
                    for k in rounds:
                        if k < len(arr):
                            sys.know((name, i, k), arr[k])
            if "internal" in view.private:
                arr = np.asarray(view.private["internal"])
                for k in rounds[:-1]:
                    if k < len(arr):
                        known_a[(i, k)] = float(arr[k])
        for k in rounds[:-1]:
            L = g.matrix(k)
            for j in range(m):
                a_eq = {("alpha", j, k + 1): 1.0, ("alpha", j, k): -1.0, ("u", j, k): -eps}
                for l in g.in_neighbors(j):
                    a_eq[("alpha", l, k)] = a_eq.get(("alpha", l, k), 0.0) - eps * L[j, l]
                    a_eq[("alpha", j, k)] += eps * L[j, l]
                sys.add(a_eq)
                sys.add({("beta", j, k + 1): 1.0, ("beta", j, k): -1.0, ("u", j, k): eps})
                if (j, k) in known_a:
                    sys.add({("beta", j, k): 1.0, ("alpha", j, k): -1.0, ("u", j, k): -1.0 / known_a[(j, k)]})
                elif frozen_u is not None and (j, k) in frozen_u:
                    # beta - alpha = c_j * u with one unknown c_j = 1/a_j over the frozen tail
                    sys.add({("beta", j, k): 1.0, ("alpha", j, k): -1.0, ("c", j): -frozen_u[(j, k)]})
        return sys

    exprs = [{("alpha", j, rounds[0]): 0.5, ("beta", j, rounds[0]): 0.5} for j in targets]
    sys = build()
    sol = sys.solve(exprs)
    note = ""
    if freeze is not None and sys.dim == 1:
        frozen_u = {}
        for k in rounds[:-1]:
            if k < freeze:
                continue
            for j in range(m):
                e = {("u", j, k): 1.0}
                if sol.identifiable(e):
                    frozen_u[(j, k)] = float(sol.value(e)[0])
        if frozen_u:
            sys = build(frozen_u)
            sol = sys.solve(exprs)
            note = f"exploited constant internal weights from k={freeze}"
    return _sound(_report("initial-value", targets, sol, exprs, note), truth)


# -- weight decomposition over Paillier -------------------------------------

def attack_secure_edge(
    view: AdversaryView,
    log: ObservationLog,
    g: WeightedGraph,
    eps: float,
    targets: Sequence[int] | None = None,
    max_rounds: int = 100,
    truth=None,
) -> AttackReport:
    """Attack the encrypted weight-decomposition protocol.

    An eavesdropper only captures ciphertexts. An agent decrypts the
    responses addressed to it, ``p_ij[k] = a_ji[k] (x_j[k] - x_i[k])``; the
    peer's factor is fresh every round, so these equations pin nothing down
    unless the factors are known. Flows on links not incident to the agent
    are unknown and enter as free antisymmetric unknowns.
    """
    targets = list(_default_targets(view, g, neighbors_only=True) if targets is None else targets)
    seen = view.observe(log)
    if len(seen) == 0:
        return _failed("initial-value", targets, "empty log")
    if view.kind == EAVESDROPPER or "secret_key" not in view.private:
        if all(m.kind == CIPHERTEXT for m in seen):
            return _failed("initial-value", targets, "ciphertext-only view: no plaintext equations")
    if view.kind != HBC:
        return _failed("initial-value", targets, "no decryptable messages in view")
    i = view.agent
    sk: paillier.SecretKey = view.private["secret_key"]
    codec = paillier.FixedPointCodec(sk.public.n, int(view.public.get("frac_bits", 32)))
    fp = sk.public.fingerprint
    rounds = _rounds(seen, max_rounds)
    partial: dict[tuple[int, int], float] = {}
    for msg in seen:
        if msg.receiver == i and msg.tag == "response" and msg.k in rounds:
            c = paillier.Ciphertext.from_bytes(msg.payload)
            if c.fingerprint != fp:
                continue
            partial[(msg.sender, msg.k)] = codec.decode(paillier.decrypt(sk, c), depth=2)
    own_factors = view.private.get("factors", {})
    leaked = view.public.get("factors")

    sys = LinearSystem(1)
    states = np.asarray(view.private.get("states", []))
    for k in rounds:
        if k < len(states):
            sys.know(("x", i, k), states[k])
    m = g.m
    nbr_i = set(g.in_neighbors(i))
    for k in rounds[:-1]:
        # own update is fully known: acts as a consistency check
        if all((j, k) in partial and (i, j) in own_factors for j in nbr_i):
            rhs = sum(eps * own_factors[(i, j)][k] * partial[(j, k)] for j in nbr_i)
            sys.add({("x", i, k + 1): 1.0, ("x", i, k): -1.0}, rhs)
        for j in range(m):
            if j == i:
                continue
            eq = {("x", j, k + 1): 1.0, ("x", j, k): -1.0}
            rhs = 0.0
            for l in g.in_neighbors(j):
                if l == i:
                    # w_ji (x_i - x_j) = -a_ij p_ij, known to i
                    if (j, k) not in partial or (i, j) not in own_factors:
                        eq[("flow", min(i, j), max(i, j), k)] = -eps * (1 if j < i else -1)
                        continue
                    rhs += -eps * own_factors[(i, j)][k] * partial[(j, k)]
                else:
                    sign = 1.0 if j < l else -1.0
                    eq[("flow", min(j, l), max(j, l), k)] = -eps * sign
            sys.add(eq, rhs)
        if leaked is not None:
            for j in nbr_i:
                if (j, k) in partial:
                    a_ji = float(leaked[(j, i)][k])
                    sys.add({("x", j, k): 1.0, ("x", i, k): -1.0}, partial[(j, k)] / a_ji)
    exprs = [{("x", j, rounds[0]): 1.0} for j in targets]
    note = "factors leaked" if leaked is not None else ""
    return _sound(_report("initial-value", targets, sys.solve(exprs), exprs, note), truth)


# -- gradient parameters ----------------------------------------------------

def attack_gradient_anchors(
    view: AdversaryView,
    log: ObservationLog,
    g: WeightedGraph,
    schedules: Mapping | None = None,
    protocol: str | None = None,
    curvature: float = 1.0,
    targets: Sequence[int] | None = None,
    max_rounds: int = 30,
    truth=None,
) -> AttackReport:
    """Recover private anchors ``p_j`` of ``f_j = (c/2)||x - p_j||^2`` from
    optimizer messages.

    The adversary knows the public schedules and the curvature. When the
    noise schedule is identically zero over the observed rounds, messages
    equal iterates and one round of the update solves for ``p_j``; with noise
    every iterate is a fresh unknown.
    """
    schedules = dict(schedules or view.public.get("schedules", {}))
    protocol = protocol or view.public.get("protocol", "alg3")
    if protocol not in ("alg3", "dgd", "pdop"):
        raise ConfigurationError(f"no gradient attack model for protocol {protocol!r}")
    targets = list(_default_targets(view, g) if targets is None else targets)
    seen = view.observe(log)
    if len(seen) == 0:
        return _failed("gradient-parameter", targets, "empty log")
    rounds = _rounds(seen, max_rounds)
    if len(rounds) < 2:
        return _failed("gradient-parameter", targets, "need at least two consecutive rounds")
    lam, nu = schedules["stepsize"], schedules["nu"]
    gam = schedules.get("attenuation")
    noise_free = all(nu(k) == 0 for k in rounds)
    sys = LinearSystem(_dim_of(seen))

    def y(j, k):
        return ("x", j, k) if noise_free else ("y", j, k)

    for (j, k), val in seen.plaintext_by_sender().items():
        if k in rounds:
            sys.know(y(j, k), val)
    if view.kind == HBC:
        states = np.asarray(view.private.get("states", []))
        start = rounds[0]
        for k in rounds:
            if k - start < len(states):
                sys.know(("x", view.agent, k), states[k - start])
        if "anchor" in view.private:
            sys.know(("p", view.agent), view.private["anchor"])
    for k in rounds[:-1]:
        W = g.matrix(k)
        lk = lam(k)
        for j in range(g.m):
            eq = {("x", j, k + 1): 1.0}
            own = -1.0 + lk * curvature
            if protocol == "alg3":
                gk = gam(k)
                for l in g.in_neighbors(j):
                    eq[y(l, k)] = eq.get(y(l, k), 0.0) - gk * W[j, l]
                    own += gk * W[j, l]
            else:
                own += W[j].sum()
                for l in g.in_neighbors(j):
                    eq[y(l, k)] = eq.get(y(l, k), 0.0) - W[j, l]
            eq[("x", j, k)] = eq.get(("x", j, k), 0.0) + own
            eq[("p", j)] = -lk * curvature
            sys.add(eq)
    exprs = [{("p", j): 1.0} for j in targets]
    note = "noise-free schedule" if noise_free else "noisy messages"
    return _sound(_report("gradient-parameter", targets, sys.solve(exprs), exprs, note), truth)


ATTACKS = {
    "plain": attack_plain_consensus,
    "decomposed": attack_decomposed,
    "secure-edge": attack_secure_edge,
    "alg3": attack_gradient_anchors,
    "dgd": attack_gradient_anchors,
    "pdop": attack_gradient_anchors,
}
