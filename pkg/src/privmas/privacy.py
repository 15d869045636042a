"""Differential-privacy bookkeeping.

:func:`dp_budget` is a deliberately loose accountant: each round is a
Laplace release with sensitivity ``s_k`` and scale ``nu_k``, and rounds
compose sequentially, so ``eps_hat(K) = sum_{k<K} s_k / nu_k``. It is an
upper bound, not a tight analysis of any particular protocol.

:func:`empirical_dp_check` estimates the likelihood ratio of binned
observations under two adjacent inputs by Monte Carlo, with simultaneous
Wilson intervals.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import ConfigurationError
from .schedules import Schedule


@dataclass(frozen=True)
class PrivacyLedger:
    """Per-round sensitivity and noise scale, starting at iteration ``start``."""

    sensitivity: np.ndarray
    nu: np.ndarray
    delta_adj: float = 1.0
    start: int = 0

    def __post_init__(self):
        s = np.asarray(self.sensitivity, dtype=float)
        n = np.asarray(self.nu, dtype=float)
        if s.shape != n.shape or s.ndim != 1:
            raise ConfigurationError("sensitivity and nu must be 1-D arrays of equal length")
        if np.any(s < 0) or np.any(n < 0):
            raise ConfigurationError("sensitivity and noise scale must be nonnegative")
        object.__setattr__(self, "sensitivity", s)
        object.__setattr__(self, "nu", n)

    @property
    def horizon(self) -> int:
        return len(self.nu)

    @property
    def summands(self) -> np.ndarray:
        """``s_k / nu_k``; zero when nothing is revealed, ``inf`` without noise."""
        out = np.zeros_like(self.nu)
        leak = self.sensitivity > 0
        noisy = self.nu > 0
        out[leak & noisy] = self.sensitivity[leak & noisy] / self.nu[leak & noisy]
        out[leak & ~noisy] = np.inf
        return out

    @property
    def cumulative(self) -> np.ndarray:
        """``eps_hat`` after each round."""
        return np.cumsum(self.summands)

    @property
    def infinite(self) -> bool:
        return bool(np.any((self.sensitivity > 0) & (self.nu == 0)))

    def epsilon(self, K: int | None = None) -> float:
        """Budget after the first ``K`` rounds of this ledger (all rounds by default)."""
        K = self.horizon if K is None else K
        if not 0 <= K <= self.horizon:
            raise ValueError(f"K={K} outside [0, {self.horizon}]")
        return float(self.cumulative[K - 1]) if K else 0.0

    def window(self, lo: int, hi: int) -> "PrivacyLedger":
        """Rounds ``lo <= k < hi`` (relative to this ledger) as their own ledger."""
        return PrivacyLedger(self.sensitivity[lo:hi], self.nu[lo:hi], self.delta_adj, self.start + lo)

    def extend(self, other: "PrivacyLedger") -> "PrivacyLedger":
        """Sequential composition with the rounds that follow."""
        if other.start != self.start + self.horizon:
            raise ConfigurationError(f"ledger starting at {other.start} does not continue one ending at "
                                     f"{self.start + self.horizon}")
        return PrivacyLedger(np.concatenate([self.sensitivity, other.sensitivity]),
                             np.concatenate([self.nu, other.nu]), self.delta_adj, self.start)

    def to_rows(self) -> list[dict]:
        return [{"k": self.start + t, "sensitivity": float(s), "nu": float(n), "eps_hat": float(c)}
                for t, (s, n, c) in enumerate(zip(self.sensitivity, self.nu, self.cumulative))]


def _as_values(f, ks: np.ndarray) -> np.ndarray:
    if isinstance(f, Schedule):
        return f.values(ks)
    if callable(f):
        return np.array([float(f(int(k))) for k in ks])
    return np.full(ks.shape, float(f))


def dp_budget(
    nu: Schedule | Callable[[int], float] | float,
    horizon: int,
    sensitivity: Schedule | Callable[[int], float] | float | None = None,
    delta_adj: float = 1.0,
    start: int = 0,
) -> PrivacyLedger:
    """Ledger for rounds ``start <= k < start + horizon``.

    Without an explicit ``sensitivity`` every round is charged ``delta_adj``,
    the cap on how far two adjacent initial values may differ.
    """
    if horizon < 0:
        raise ConfigurationError("horizon must be nonnegative")
    if delta_adj < 0:
        raise ConfigurationError("delta_adj must be nonnegative")
    ks = np.arange(start, start + horizon)
    s = np.full(ks.shape, float(delta_adj)) if sensitivity is None else _as_values(sensitivity, ks)
    return PrivacyLedger(s, _as_values(nu, ks), delta_adj, start)


def attenuated_sensitivity(attenuation: Schedule, delta_adj: float = 1.0) -> Callable[[int], float]:
    """``s_k = delta_adj * gamma^k`` for protocols that scale every message's
    effect by an attenuation factor."""
    return lambda k: delta_adj * attenuation(k)


# -- empirical check --------------------------------------------------------

def wilson_interval(successes: np.ndarray, n: int, z: float) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(successes, dtype=float) / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return np.clip(center - half, 0.0, 1.0), np.clip(center + half, 0.0, 1.0)


def _log_ratio(a: float, b: float) -> float:
    if a == 0 and b == 0:
        return float("nan")
    if b == 0:
        return math.inf
    if a == 0:
        return -math.inf
    return math.log(a / b)


@dataclass
class PredicateRow:
    predicate: str
    p_hat: float
    p_hat_prime: float
    log_ratio: float          # ln(p_hat / p_hat_prime)
    ci_low: float             # simultaneous bounds on ln(p / p')
    ci_high: float


@dataclass
class DPCheckReport:
    claimed_eps: float
    trials: int
    confidence: float
    rows: list[PredicateRow]
    max_log_ratio: float            # max over predicates and both directions of |point estimate|
    max_log_ratio_ci: tuple[float, float]
    violation: bool
    skipped: list[str] = field(default_factory=list)

    def write_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["predicate", "p_hat", "p_hat_prime", "log_ratio", "ci_low", "ci_high"])
        for r in self.rows:
            w.writerow([r.predicate, repr(r.p_hat), repr(r.p_hat_prime), repr(r.log_ratio),
                        repr(r.ci_low), repr(r.ci_high)])


def _safe_log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def empirical_dp_check(
    runner: Callable[[np.ndarray, np.random.Generator, int], np.ndarray],
    P,
    P_prime,
    bins: Sequence[float],
    trials: int,
    claimed_eps: float,
    seed: int = 0,
    confidence: float = 0.95,
) -> DPCheckReport:
    """Compare binned observation frequencies under adjacent inputs.

    ``runner(inputs, rng, n)`` returns ``n`` scalar observations. Predicates
    are the intervals between consecutive ``bins`` plus both tails. Wilson
    intervals use a Bonferroni level shared by every predicate and both
    ratio directions; a violation is flagged only when the largest lower
    bound on a log ratio exceeds ``claimed_eps``.
    """
    if trials < 1:
        raise ConfigurationError("trials must be positive")
    edges = np.asarray(sorted(bins), dtype=float)
    if edges.size < 1:
        raise ConfigurationError("need at least one bin edge")
    rng_p, rng_q = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    obs_p = np.asarray(runner(np.asarray(P, dtype=float), rng_p, trials), dtype=float)
    obs_q = np.asarray(runner(np.asarray(P_prime, dtype=float), rng_q, trials), dtype=float)
    n_cells = edges.size + 1
    cnt_p = np.bincount(np.searchsorted(edges, obs_p, side="right"), minlength=n_cells)
    cnt_q = np.bincount(np.searchsorted(edges, obs_q, side="right"), minlength=n_cells)
    alpha = 1.0 - confidence
    z = float(norm.ppf(1.0 - alpha / (2 * 2 * n_cells)))
    lo_p, hi_p = wilson_interval(cnt_p, trials, z)
    lo_q, hi_q = wilson_interval(cnt_q, trials, z)
    labels = [f"(-inf,{edges[0]:g})"] + [f"[{a:g},{b:g})" for a, b in zip(edges[:-1], edges[1:])] + \
             [f"[{edges[-1]:g},inf)"]

    rows, skipped = [], []
    best_point, best_lo, best_hi = 0.0, -math.inf, -math.inf
    for c in range(n_cells):
        if cnt_p[c] == 0 and cnt_q[c] == 0:
            skipped.append(f"{labels[c]}: no observations under either input")
            continue
        ph, qh = cnt_p[c] / trials, cnt_q[c] / trials
        lr = _log_ratio(ph, qh)
        low = float(_safe_log(lo_p[c]) - _safe_log(hi_q[c]))
        high = float(_safe_log(hi_p[c]) - _safe_log(lo_q[c])) if lo_q[c] > 0 else math.inf
        rows.append(PredicateRow(labels[c], float(ph), float(qh), lr, low, high))
        # the reverse direction ln(p'/p) has bounds (-high, -low)
        best_point = max(best_point, abs(lr))
        best_lo = max(best_lo, low, -high)
        best_hi = max(best_hi, high, -low)
    return DPCheckReport(claimed_eps, trials, confidence, rows, best_point, (best_lo, best_hi),
                         bool(best_lo > claimed_eps), skipped)


def laplace_release(nu: float, target: int = 0) -> Callable:
    """Runner releasing ``inputs[target] + Laplace(nu)`` once; ``nu = 0`` is deterministic."""
    def run(inputs, rng, n):
        base = float(np.atleast_1d(inputs)[target])
        if nu == 0:
            return np.full(n, base)
        return base + rng.laplace(0.0, nu, size=n)
    return run
