"""Config-driven experiment execution.

A YAML config describes one protocol on one graph; every seed is one cell.
A cell produces a trajectory CSV, an NDJSON observation log, attack
reports and a row of the run summary. Each file starts with the config
hash, the seed and the package version so results can be traced back.

Example config::

    name: plain_two_agent
    protocol: plain
    graph: {preset: path, m: 2, weight: 0.5}
    eps: 0.5
    x0: [1.0, 3.0]
    steps: 60
    seeds: [0]
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .adversary import ATTACKS, AdversaryView, attack_gradient_anchors
from .dynamic import ReferenceSignal, convex_set_from_spec, run_alg1, run_alg2
from .errors import ConfigurationError, ConvergencePreconditionError
from .graph import GRAPH_PRESETS, WeightedGraph, is_connected, max_degree
from .objectives import QuadraticAnchor, minimizer, network_value, objectives_from_spec
from .observation import ObservationLog
from .optimization import run_alg3, run_dgd, run_pdop_baseline
from .privacy import attenuated_sensitivity, dp_budget
from .schedules import ZERO, Schedule, harmonic_power, preset
from .static import (InternalWeights, SecureEdgeConfig, check_stepsize, run_decomposed,
                     run_dp_static, run_plain, run_secure_edge)

OUTPUT_ENV = "PRIVMAS_OUTPUT_DIR"
CONSENSUS = ("plain", "dp-static", "decomposed", "secure-edge")
DYNAMIC = ("alg1", "alg2")
OPTIMIZATION = ("alg3", "dgd", "pdop")
PROTOCOLS = CONSENSUS + DYNAMIC + OPTIMIZATION
NON_SEMANTIC = ("output_dir", "tolerance", "seeds", "workers")


@dataclass
class ExperimentConfig:
    protocol: str
    graph: dict
    steps: int
    name: str = "experiment"
    seeds: list[int] = field(default_factory=lambda: [0])
    eps: float | None = None
    x0: list | None = None
    schedules: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    objective: dict | None = None
    reference: dict | None = None
    constraint: dict | None = None
    decomposition: dict = field(default_factory=dict)
    secure_edge: dict = field(default_factory=dict)
    adversary: list = field(default_factory=list)
    delta_adj: float = 1.0
    k0: int = 0
    record_every: int = 1
    write_logs: bool = True
    tolerance: float = 1e-4
    output_dir: str = "results"
    workers: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a mapping")
        known = set(cls.__dataclass_fields__)
        extra = set(raw) - known
        if extra:
            raise ConfigurationError(f"unknown config field(s): {', '.join(sorted(extra))}")
        for req in ("protocol", "graph", "steps"):
            if req not in raw:
                raise ConfigurationError(f"missing required field '{req}'")
        cfg = cls(**copy.deepcopy(raw))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        with open(path) as fh:
            raw = yaml.safe_load(fh)
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def config_hash(self) -> str:
        """Hash of every field that can influence a trajectory."""
        sem = {k: v for k, v in self.to_dict().items() if k not in NON_SEMANTIC}
        blob = json.dumps(sem, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir) / self.name

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigurationError(f"protocol: unknown {self.protocol!r}; expected one of {PROTOCOLS}")
        if not isinstance(self.steps, int) or self.steps < 0:
            raise ConfigurationError(f"steps: must be a nonnegative integer, got {self.steps!r}")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ConfigurationError("seeds: must be a non-empty list of integers")
        if self.record_every < 1:
            raise ConfigurationError("record_every: must be >= 1")
        if self.workers < 1:
            raise ConfigurationError("workers: must be >= 1")
        g = self.build_graph()
        if not is_connected(g):
            raise ConvergencePreconditionError(f"graph: {g.name or 'graph'} is not connected")
        m = g.m
        if self.protocol in CONSENSUS:
            if self.eps is None:
                raise ConfigurationError("eps: consensus protocols need a stepsize")
            delta = max_degree(g) + (1 if self.protocol == "decomposed" else 0)
            try:
                check_stepsize(float(self.eps), delta)
            except ConfigurationError as exc:
                raise ConfigurationError(f"eps: {exc}") from None
            if self.x0 is None or len(self.x0) != m:
                raise ConfigurationError(f"x0: need one initial value per agent ({m})")
        sched = self.build_schedules()
        for key, s in sched.items():
            vals = s.values(np.arange(min(self.steps, 1000) + 1) + self.k0)
            if key == "nu":
                if np.any(vals < 0):
                    raise ConfigurationError("schedules.nu: noise scale must be nonnegative")
            elif np.any(vals < 0) or (key != "stepsize" and np.any(vals <= 0)):
                raise ConfigurationError(f"schedules.{key}: must be positive")
        if self.protocol in DYNAMIC:
            if self.reference is None:
                raise ConfigurationError("reference: dynamic consensus needs a reference signal")
            if self.protocol == "alg2" and self.constraint is None:
                raise ConfigurationError("constraint: projected consensus needs a constraint set")
            self.build_reference(m)
            if self.constraint is not None:
                convex_set_from_spec(self.constraint)
        if self.protocol in OPTIMIZATION:
            if self.objective is None:
                raise ConfigurationError("objective: optimization protocols need an objective")
            objectives_from_spec(self.objective, m)
        if self.protocol == "decomposed":
            self.internal_weights().validate()
        if self.protocol == "secure-edge":
            self.secure_edge_config().validate()
        for i, spec in enumerate(self.adversary):
            kind = spec.get("kind")
            if kind not in ("eavesdropper", "hbc"):
                raise ConfigurationError(f"adversary[{i}].kind: expected 'eavesdropper' or 'hbc', got {kind!r}")
            if kind == "hbc" and not 0 <= int(spec.get("agent", -1)) < m:
                raise ConfigurationError(f"adversary[{i}].agent: must name an agent in 0..{m - 1}")
            if self.protocol not in ATTACKS:
                raise ConfigurationError(f"adversary[{i}]: no attack model for protocol {self.protocol!r}")
            if self.protocol in OPTIMIZATION and (self.objective or {}).get("kind") != "quadratic-anchor":
                raise ConfigurationError(f"adversary[{i}]: gradient attacks need quadratic-anchor objectives")

    # -- builders -----------------------------------------------------------

    def build_graph(self) -> WeightedGraph:
        spec = dict(self.graph or {})
        weight = spec.get("weight", 0.5)
        if "preset" in spec:
            name = spec["preset"]
            if name not in GRAPH_PRESETS:
                raise ConfigurationError(f"graph.preset: unknown {name!r}; expected one of {sorted(GRAPH_PRESETS)}")
            if name == "fig4-five-agent":
                return GRAPH_PRESETS[name](weight=weight)
            if "m" not in spec:
                raise ConfigurationError("graph.m: preset graphs need a node count")
            return GRAPH_PRESETS[name](int(spec["m"]), weight)
        if "edges" not in spec or "m" not in spec:
            raise ConfigurationError("graph: give either 'preset' or both 'm' and 'edges'")
        try:
            edges = [tuple(int(v) for v in e) for e in spec["edges"]]
        except (TypeError, ValueError):
            raise ConfigurationError("graph.edges: must be a list of [i, j] pairs") from None
        for e in edges:
            if len(e) != 2:
                raise ConfigurationError(f"graph.edges: {list(e)} is not an [i, j] pair")
        try:
            return WeightedGraph.from_edges(int(spec["m"]), edges, weight,
                                            directed=bool(spec.get("directed", False)),
                                            name=spec.get("name", "custom"))
        except ConfigurationError as exc:
            raise ConfigurationError(f"graph.edges: {exc}") from None

    def build_schedules(self) -> dict[str, Schedule]:
        spec = dict(self.schedules or {})
        out: dict[str, Schedule] = {}
        if "preset" in spec:
            lam, gam, nu = preset(spec.pop("preset"), float(spec.pop("preset_nu", 1.0)))
            out.update(stepsize=lam, attenuation=gam, nu=nu)
        for key, val in spec.items():
            if key not in ("stepsize", "attenuation", "nu", "chi", "alpha", "gamma"):
                raise ConfigurationError(f"schedules.{key}: unknown schedule name")
            try:
                out[key] = Schedule.from_spec(val)
            except (ConfigurationError, TypeError, ValueError) as exc:
                raise ConfigurationError(f"schedules.{key}: {exc}") from None
        return out

    def build_reference(self, m: int) -> ReferenceSignal:
        spec = dict(self.reference)
        kind = spec.pop("kind", "constant")
        ref = ReferenceSignal(kind, **spec)
        if ref.m != m:
            raise ConfigurationError(f"reference: {ref.m} agents for a {m}-agent graph")
        return ref

    def internal_weights(self) -> InternalWeights:
        spec = {k: v for k, v in self.decomposition.items() if k != "radius"}
        return InternalWeights(**spec)

    def secure_edge_config(self) -> SecureEdgeConfig:
        spec = dict(self.secure_edge)
        if "factor_range" in spec:
            spec["factor_range"] = tuple(spec["factor_range"])
        return SecureEdgeConfig(**spec)


# -- execution --------------------------------------------------------------

@dataclass
class CellResult:
    seed: int
    columns: list[str]
    rows: list[tuple]                 # (k, agent, *values, error[, objective])
    final_error: float
    converged_at: int | None
    eps_hat: float | None
    attacks: list[dict]
    log: ObservationLog | None
    wall_clock: float = 0.0
    final_gap: float | None = None    # mean over agents of F(x_i) - F*, optimization only


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _consensus_rows(traj: np.ndarray, target: np.ndarray, names: list[str] | None = None):
    """traj: (K+1, m) or (K+1, m, d) of per-agent values."""
    t = traj if traj.ndim == 3 else traj[:, :, None]
    rows = []
    errs = np.abs(t - target).max(axis=2)
    for k in range(t.shape[0]):
        for i in range(t.shape[1]):
            rows.append((k, i, *t[k, i], errs[k, i]))
    cols = names or (["x"] if t.shape[2] == 1 else [f"x{c}" for c in range(t.shape[2])])
    return cols, rows, errs.max(axis=1)


def _first_below(ks, errs, tol) -> int | None:
    below = np.nonzero(np.asarray(errs) < tol)[0]
    return int(ks[below[0]]) if below.size else None


def _run_attacks(cfg: ExperimentConfig, g, run, log, eps, truth, objectives=None) -> list[dict]:
    reports = []
    attack = ATTACKS[cfg.protocol]
    for spec in cfg.adversary:
        if spec["kind"] == "eavesdropper":
            view = AdversaryView.from_run(run, "eavesdropper", edges=spec.get("edges"))
        else:
            view = AdversaryView.from_run(run, "honest-but-curious", agent=int(spec["agent"]))
        targets = spec.get("targets")
        if cfg.protocol in OPTIMIZATION:
            if view.kind != "eavesdropper":
                view = AdversaryView.hbc(view.agent, {**view.private, "anchor": objectives[view.agent].anchor},
                                         view.public)
            rep = attack_gradient_anchors(view, log, g, curvature=objectives[0].curvature,
                                          targets=targets, truth=truth)
        else:
            rep = attack(view, log, g, eps, targets=targets, truth=truth)
        rec = rep.to_record()
        rec["adversary"] = dict(spec)
        reports.append(rec)
    return reports


def run_cell(cfg: ExperimentConfig, seed: int) -> CellResult:
    """Execute one (config, seed) cell deterministically."""
    t0 = time.perf_counter()
    g = cfg.build_graph()
    sched = cfg.build_schedules()
    need_log = cfg.write_logs or bool(cfg.adversary)
    log = ObservationLog() if need_log else None
    proto = cfg.protocol
    eps_hat = None
    final_gap = None
    attacks: list[dict] = []
    tol = cfg.tolerance

    if proto in CONSENSUS:
        x0 = np.asarray(cfg.x0, dtype=float)
        eps = float(cfg.eps)
        target = x0.mean(axis=0)
        if proto == "plain":
            run = run_plain(g, x0, eps, cfg.steps, log=log)
            traj = run.trajectory
            eps_hat = dp_budget(ZERO, cfg.steps, delta_adj=cfg.delta_adj).epsilon()
            cols, rows, errs = _consensus_rows(traj, target)
        elif proto == "dp-static":
            nu = sched.get("nu", ZERO)
            run = run_dp_static(g, x0, eps, nu, cfg.steps, seed, log)
            eps_hat = dp_budget(nu, cfg.steps, delta_adj=cfg.delta_adj).epsilon()
            cols, rows, errs = _consensus_rows(run.trajectory, target)
        elif proto == "decomposed":
            run = run_decomposed(g, x0, eps, cfg.steps, cfg.internal_weights(), seed,
                                 float(cfg.decomposition.get("radius", 1.0)), log=log)
            both = np.stack([run.alpha, run.beta], axis=2)
            cols, rows, errs = _consensus_rows(both, target, ["alpha", "beta"])
        else:
            run = run_secure_edge(g, x0, eps, cfg.steps, cfg.secure_edge_config(), seed, log)
            cols, rows, errs = _consensus_rows(run.trajectory, target)
        ks = np.arange(len(errs))
        if cfg.adversary:
            attacks = _run_attacks(cfg, g, run, log, eps, x0)
    elif proto in DYNAMIC:
        ref = cfg.build_reference(g.m)
        chi = sched.get("chi", sched.get("attenuation", harmonic_power(1.0, 0.9)))
        nu = sched.get("nu", ZERO)
        noise = cfg.noise.get("kind", "laplace")
        per_edge = bool(cfg.noise.get("per_edge", False))
        if proto == "alg1":
            run = run_alg1(g, ref, cfg.steps, chi, sched.get("alpha", harmonic_power(1.0, 1.0)), nu,
                           seed, noise, per_edge, log)
        else:
            run = run_alg2(g, ref, convex_set_from_spec(cfg.constraint), cfg.steps, chi,
                           sched.get("gamma", harmonic_power(1.0, 1.0)), nu, seed, noise, per_edge, log=log)
        t = run.trajectory
        rbar = run.reference_average
        rows = []
        for k in range(t.shape[0]):
            for i in range(t.shape[1]):
                for c in range(t.shape[2]):
                    rows.append((k, i, c, t[k, i, c], rbar[k, c], abs(t[k, i, c] - rbar[k, c])))
        cols = ["dim", "x", "r_bar", "abs_err"]
        errs = run.errors
        ks = np.arange(len(errs))
        eps_hat = dp_budget(nu, cfg.steps, attenuated_sensitivity(chi, cfg.delta_adj), cfg.delta_adj).epsilon()
    else:
        objectives = objectives_from_spec(cfg.objective, g.m)
        theta = minimizer(objectives)
        f_star = network_value(objectives, theta)
        common = dict(seed=seed, k0=cfg.k0, log=log, record_every=cfg.record_every)
        if proto == "alg3":
            run = run_alg3(g, objectives, cfg.steps, sched.get("stepsize"), sched.get("attenuation"),
                           sched.get("nu"), **common)
            s = attenuated_sensitivity(run.schedules["attenuation"], cfg.delta_adj)
        elif proto == "dgd":
            run = run_dgd(g, objectives, cfg.steps, sched.get("stepsize"), sched.get("nu", ZERO), **common)
            s = None
        else:
            run = run_pdop_baseline(g, objectives, cfg.steps, sched.get("stepsize"), sched.get("nu"), **common)
            s = None
        eps_hat = dp_budget(run.schedules["nu"], cfg.steps, s, cfg.delta_adj, cfg.k0).epsilon()
        dist = run.distance_to(theta)
        rows = []
        for r, k in enumerate(run.recorded_k):
            fbar = network_value(objectives, run.trajectory[r].mean(axis=0)) - f_star
            for i in range(g.m):
                rows.append((int(k), i, *run.trajectory[r, i], dist[r, i], fbar))
        d = run.trajectory.shape[2]
        cols = (["x"] if d == 1 else [f"x{c}" for c in range(d)])
        cols = cols + ["error", "objective_gap"]
        errs = dist.max(axis=1)
        ks = run.recorded_k
        if cfg.adversary:
            truth = np.stack([f.anchor for f in objectives]) if isinstance(objectives[0], QuadraticAnchor) else None
            attacks = _run_attacks(cfg, g, run, log, None, truth, objectives)
        final_gap = run.optimality_gap(objectives, f_star)
    if "error" not in cols and proto not in DYNAMIC:
        cols = cols + ["error"]
    return CellResult(seed, cols, rows, float(errs[-1]), _first_below(ks, errs, tol),
                      None if eps_hat is None else float(eps_hat), attacks,
                      log if cfg.write_logs else None, time.perf_counter() - t0, final_gap)


def header_lines(cfg: ExperimentConfig, seed: int | None) -> list[str]:
    lines = [f"# config_hash={cfg.config_hash}"]
    if seed is not None:
        lines.append(f"# seed={seed}")
    lines.append(f"# version={__version__}")
    return lines


def render_trajectory(cfg: ExperimentConfig, cell: CellResult) -> str:
    buf = io.StringIO()
    for line in header_lines(cfg, cell.seed):
        buf.write(line + "\n")
    buf.write(",".join(["k", "agent"] + cell.columns) + "\n")
    for row in cell.rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_cell(cfg: ExperimentConfig, cell: CellResult, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / f"trajectory_seed{cell.seed}.csv", render_trajectory(cfg, cell))
    head = {"header": True, "config_hash": cfg.config_hash, "seed": cell.seed, "version": __version__}
    if cell.log is not None:
        buf = io.StringIO()
        buf.write(json.dumps(head) + "\n")
        cell.log.dump(buf)
        _atomic_write(out / f"log_seed{cell.seed}.ndjson", buf.getvalue())
    if cell.attacks:
        _atomic_write(out / f"attacks_seed{cell.seed}.json",
                      json.dumps({**head, "reports": cell.attacks}, indent=2, sort_keys=True))
    return summary_row(cfg, cell)


def summary_row(cfg: ExperimentConfig, cell: CellResult) -> dict:
    return {
        "protocol": cfg.protocol,
        "seed": cell.seed,
        "final_error": cell.final_error,
        "final_gap": cell.final_gap,
        "converged_at": cell.converged_at,
        "eps_hat": cell.eps_hat,
        "attacks": ";".join(a["outcome"] for a in cell.attacks),
        "wall_clock": round(cell.wall_clock, 6),
    }


def _cell_job(args):
    raw, seed, out = args
    cfg = ExperimentConfig.from_dict(raw)
    cell = run_cell(cfg, seed)
    return write_cell(cfg, cell, Path(out))


@dataclass
class RunSummary:
    name: str
    protocol: str
    config_hash: str
    rows: list[dict]

    @property
    def final_errors(self) -> np.ndarray:
        return np.array([r["final_error"] for r in self.rows], dtype=float)

    def aggregate(self) -> dict:
        e = self.final_errors
        eps = [r["eps_hat"] for r in self.rows if r["eps_hat"] is not None]
        gaps = [r["final_gap"] for r in self.rows if r["final_gap"] is not None]
        return {
            "median_final_error": float(np.median(e)),
            "median_final_gap": float(np.median(gaps)) if gaps else None,
            "mean_final_error": float(np.mean(e)),
            "std_final_error": float(np.std(e)),
            "eps_hat": float(np.median(eps)) if eps else None,
            "seeds": len(e),
        }


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunSummary:
    out = cfg.resolved_output_dir()
    if write:
        jobs = [(cfg.to_dict(), s, str(out)) for s in cfg.seeds]
        if cfg.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                rows = list(pool.map(_cell_job, jobs))
        else:
            rows = [_cell_job(j) for j in jobs]
    else:
        rows = [summary_row(cfg, run_cell(cfg, s)) for s in cfg.seeds]
    summary = RunSummary(cfg.name, cfg.protocol, cfg.config_hash, rows)
    if write:
        write_summary(cfg, summary, out)
    return summary


SUMMARY_FIELDS = ["protocol", "seed", "final_error", "final_gap", "converged_at", "eps_hat", "attacks", "wall_clock"]


def write_summary(cfg: ExperimentConfig, summary: RunSummary, out: Path) -> None:
    buf = io.StringIO()
    for line in header_lines(cfg, None):
        buf.write(line + "\n")
    w = csv.DictWriter(buf, SUMMARY_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in summary.rows:
        w.writerow({k: ("" if r[k] is None else r[k]) for k in SUMMARY_FIELDS})
    _atomic_write(out / "summary.csv", buf.getvalue())
    doc = {"config_hash": cfg.config_hash, "version": __version__, "name": cfg.name,
           "protocol": cfg.protocol, "cells": summary.rows, "aggregate": summary.aggregate()}
    _atomic_write(out / "summary.json", json.dumps(doc, indent=2, sort_keys=True))


# -- compare / trace-verify -------------------------------------------------

COMPARE_FIELDS = ["name", "protocol", "seeds", "median_final_error", "mean_final_error",
                  "std_final_error", "median_final_gap", "eps_hat"]


def compare(configs: list[ExperimentConfig]) -> tuple[list[dict], list[dict]]:
    """Per-protocol aggregate rows and per-seed rows for configs sharing graph and objective."""
    if len(configs) < 2:
        raise ConfigurationError("compare needs at least two configs")
    ref = configs[0]
    for c in configs[1:]:
        if c.graph != ref.graph:
            raise ConfigurationError(f"config {c.name!r} uses a different graph than {ref.name!r}")
        if c.objective != ref.objective or c.reference != ref.reference:
            raise ConfigurationError(f"config {c.name!r} uses a different objective than {ref.name!r}")
    table, per_seed = [], []
    for c in configs:
        s = run_experiment(c, write=False)
        table.append({"name": c.name, "protocol": c.protocol, **s.aggregate()})
        for r in s.rows:
            per_seed.append({"name": c.name, "protocol": c.protocol, "seed": r["seed"],
                             "final_error": r["final_error"], "final_gap": r["final_gap"],
                             "eps_hat": r["eps_hat"]})
    return table, per_seed


def _data_rows(text: str) -> list[str]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return lines[1:]  # drop the column header


def trace_verify(golden: str | os.PathLike, cfg: ExperimentConfig, seed: int) -> tuple[bool, str]:
    """Re-run ``(cfg, seed)`` and compare trajectory rows with ``golden`` bit for bit."""
    expected = _data_rows(Path(golden).read_text())
    actual = _data_rows(render_trajectory(cfg, run_cell(cfg, seed)))
    for exp, act in zip(expected, actual):
        if exp != act:
            k, agent = exp.split(",")[:2]
            return False, f"trajectories diverge at k={k}, agent={agent}"
    if len(expected) != len(actual):
        n = min(len(expected), len(actual))
        where = (expected if len(expected) > n else actual)[n].split(",")[:2]
        return False, f"trajectory lengths differ ({len(expected)} vs {len(actual)} rows) from k={where[0]}, agent={where[1]}"
    return True, f"{len(expected)} rows identical"


def shipped_configs() -> list[Path]:
    return sorted((Path(__file__).parent / "configs").glob("*.yaml"))
