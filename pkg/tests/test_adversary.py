import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from privmas.adversary import (AMBIGUOUS, EXACT, FAILED, AdversaryView, AttackReport, LinearSystem,
                               attack_decomposed, attack_gradient_anchors, attack_plain_consensus,
                               attack_secure_edge)
from privmas.errors import ConfigurationError
from privmas.graph import circle, complete, max_degree, path
from privmas.objectives import QuadraticAnchor
from privmas.observation import ObservationLog
from privmas.optimization import run_alg3, run_dgd
from privmas.schedules import ZERO, constant, harmonic_power
from privmas.static import InternalWeights, SecureEdgeConfig, run_decomposed, run_plain, run_secure_edge


def plain_run(g, x0, eps, steps=30):
    log = ObservationLog()
    return run_plain(g, x0, eps, steps, log=log), log


class TestViews:
    def test_eavesdropper_holds_no_secrets(self):
        with pytest.raises(ConfigurationError):
            AdversaryView("eavesdropper", private={"secret_key": 1})
        with pytest.raises(ConfigurationError):
            AdversaryView("eavesdropper", agent=0)
        with pytest.raises(ConfigurationError):
            AdversaryView("honest-but-curious")
        with pytest.raises(ConfigurationError):
            AdversaryView("insider")

    def test_eavesdropper_from_secure_run_has_no_key(self, keys512):
        run = run_secure_edge(path(2), [1.0, 3.0], 1.0, 2, SecureEdgeConfig(key_bits=512), log=ObservationLog(),
                              keys=keys512)
        view = AdversaryView.from_run(run)
        assert view.private == {} and "factors" not in view.public
        hbc = AdversaryView.from_run(run, "honest-but-curious", agent=0)
        assert hbc.private["secret_key"] is keys512[0].secret
        assert set(hbc.private["factors"]) == {(0, 1)}

    def test_decomposed_views_hide_beta(self):
        run = run_decomposed(circle(4, 0.3), [1, 2, 3, 4], 0.3, 5, seed=0)
        assert not AdversaryView.from_run(run).private
        assert "internal" not in AdversaryView.from_run(run).public
        hbc = AdversaryView.from_run(run, "honest-but-curious", agent=2)
        np.testing.assert_array_equal(hbc.private["beta"], run.beta[:, 2])

    def test_hbc_sees_only_incident_messages(self):
        _, log = plain_run(circle(5), [1, 2, 3, 4, 5], 0.5, 3)
        seen = AdversaryView.hbc(1).observe(log)
        assert len(seen) > 0
        assert all(1 in (m.sender, m.receiver) for m in seen)

    def test_tapped_edges(self):
        _, log = plain_run(circle(5), [1, 2, 3, 4, 5], 0.5, 3)
        seen = AdversaryView.eavesdropper(edges=[(0, 1)]).observe(log)
        assert {(m.sender, m.receiver) for m in seen} == {(0, 1)}


class TestLinearSystem:
    def test_determined(self):
        s = LinearSystem()
        s.add({"a": 1.0, "b": 1.0}, 3.0)
        s.add({"a": 1.0, "b": -1.0}, 1.0)
        sol = s.solve()
        assert sol.identifiable({"a": 1.0}) and sol.value({"a": 1.0})[0] == pytest.approx(2.0)

    def test_underdetermined_direction(self):
        s = LinearSystem()
        s.add({"a": 1.0, "b": 1.0}, 3.0)
        sol = s.solve()
        assert not sol.identifiable({"a": 1.0})
        assert sol.identifiable({"a": 1.0, "b": 1.0})
        assert sol.ambiguity([{"a": 1.0}, {"b": 1.0}]) == 1

    def test_known_substitution(self):
        s = LinearSystem()
        s.know("a", 5.0)
        s.add({"a": 2.0, "b": 1.0}, 1.0)
        assert s.solve().value({"b": 1.0})[0] == pytest.approx(-9.0)

    @given(st.integers(2, 6), st.integers(0, 10_000))
    @settings(max_examples=25)
    def test_matches_lstsq_on_random_full_rank(self, n, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(n + 2, n))
        x = rng.normal(size=n)
        s = LinearSystem()
        for row, rhs in zip(A, A @ x):
            s.add({i: c for i, c in enumerate(row)}, rhs)
        sol = s.solve()
        for i in range(n):
            assert sol.value({i: 1.0})[0] == pytest.approx(x[i], abs=1e-8)


class TestPlain:
    def test_eavesdropper_circle(self):
        run, log = plain_run(circle(5), [1, 2, 3, 4, 5], 0.5)
        rep = attack_plain_consensus(AdversaryView.eavesdropper(), log, circle(5), 0.5, truth=run.trajectory[0])
        assert rep.outcome == EXACT
        np.testing.assert_allclose(np.ravel(rep.values), [1, 2, 3, 4, 5])

    def test_hbc_middle_of_path_recovers_everyone(self):
        g = path(3, 0.3)
        run, log = plain_run(g, [7.0, -1.0, 2.5], 0.5)
        view = AdversaryView.from_run(run, "honest-but-curious", agent=1)
        rep = attack_plain_consensus(view, log, g, 0.5, truth=run.trajectory[0])
        assert rep.outcome == EXACT and rep.agents == [0, 2]

    def test_hbc_end_of_path_uses_history(self):
        g = path(4, 0.3)
        run, log = plain_run(g, [1.0, 5.0, -2.0, 3.0], 0.5)
        rep = attack_plain_consensus(AdversaryView.from_run(run, "honest-but-curious", agent=0), log, g, 0.5,
                                     truth=run.trajectory[0])
        assert rep.outcome == EXACT and rep.verify(run.trajectory[0])

    def test_empty_log(self):
        rep = attack_plain_consensus(AdversaryView.eavesdropper(), ObservationLog(), circle(3), 0.5)
        assert rep.outcome == FAILED and "empty" in rep.diagnostic

    def test_missing_first_round(self):
        _, log = plain_run(circle(3), [1, 2, 3], 0.5, 5)
        late = ObservationLog(m for m in log if m.k > 0)
        assert attack_plain_consensus(AdversaryView.eavesdropper(), late, circle(3), 0.5).outcome == FAILED

    def test_wrong_truth_downgrades(self):
        run, log = plain_run(circle(4), [1, 2, 3, 4], 0.5)
        rep = attack_plain_consensus(AdversaryView.eavesdropper(), log, circle(4), 0.5, truth=[1, 2, 3, 5])
        assert rep.outcome == FAILED and "ground truth" in rep.diagnostic


class TestDecomposed:
    def run(self, internal=InternalWeights(), steps=40, seed=0, x0=(1, 2, 3, 4, 5)):
        log = ObservationLog()
        run = run_decomposed(circle(len(x0), 0.3), list(x0), 0.3, steps, internal=internal, seed=seed, log=log)
        return run, log

    def test_single_target_is_ambiguous(self):
        run, log = self.run()
        rep = attack_decomposed(AdversaryView.from_run(run), log, circle(5, 0.3), 0.3, targets=[2],
                                truth=[1, 2, 3, 4, 5])
        assert rep.outcome == AMBIGUOUS and rep.ambiguity_dim >= 1

    def test_hbc_is_ambiguous(self):
        run, log = self.run()
        view = AdversaryView.from_run(run, "honest-but-curious", agent=0)
        rep = attack_decomposed(view, log, circle(5, 0.3), 0.3, truth=[1, 2, 3, 4, 5])
        assert rep.outcome == AMBIGUOUS and rep.ambiguity_dim >= 1

    def test_pinned_weight_is_exact(self):
        run, log = self.run(InternalWeights(pinned=0.5))
        rep = attack_decomposed(AdversaryView.from_run(run), log, circle(5, 0.3), 0.3, truth=[1, 2, 3, 4, 5])
        assert rep.outcome == EXACT

    def test_public_frozen_weights_are_exact(self):
        run, log = self.run(InternalWeights(freeze_after=5))
        rep = attack_decomposed(AdversaryView.from_run(run), log, circle(5, 0.3), 0.3, truth=[1, 2, 3, 4, 5])
        assert rep.outcome == EXACT

    def test_first_round_only(self):
        run, log = self.run(steps=1)
        rep = attack_decomposed(AdversaryView.from_run(run), log.restrict(max_k=0), circle(5, 0.3), 0.3)
        assert rep.outcome == AMBIGUOUS


class TestSecureEdge:
    def run(self, keys, leak=False, steps=100):
        log = ObservationLog()
        cfg = SecureEdgeConfig(key_bits=512, leak_factors=leak)
        return run_secure_edge(path(2), [1.0, 3.0], 1.0, steps, cfg, seed=1, log=log, keys=keys), log

    def test_eavesdropper_fails(self, keys512):
        run, log = self.run(keys512, steps=3)
        rep = attack_secure_edge(AdversaryView.from_run(run), log, path(2), 1.0)
        assert rep.outcome == FAILED and "ciphertext" in rep.diagnostic

    def test_hbc_ambiguous(self, keys512):
        run, log = self.run(keys512)
        view = AdversaryView.from_run(run, "honest-but-curious", agent=0)
        rep = attack_secure_edge(view, log, path(2), 1.0, truth=run.trajectory[0])
        assert rep.outcome == AMBIGUOUS and rep.ambiguity_dim >= 1

    def test_leaked_factors_exact(self, keys512):
        run, log = self.run(keys512, leak=True, steps=10)
        view = AdversaryView.from_run(run, "honest-but-curious", agent=0)
        rep = attack_secure_edge(view, log, path(2), 1.0, truth=run.trajectory[0])
        assert rep.outcome == EXACT


class TestGradients:
    P = np.array([[1.0], [2.0], [3.0], [4.0], [5.0]])

    def attack(self, run, log, **kw):
        return attack_gradient_anchors(AdversaryView.from_run(run), log.restrict(max_k=20), circle(5, 0.45),
                                       truth=self.P, **kw)

    def test_noise_free_alg3_exact(self):
        log = ObservationLog()
        objs = [QuadraticAnchor(p) for p in self.P]
        run = run_alg3(circle(5, 0.45), objs, 25, harmonic_power(1, 1, a=1), constant(1.0), ZERO, log=log)
        assert self.attack(run, log).outcome == EXACT

    def test_noise_free_dgd_exact(self):
        log = ObservationLog()
        run = run_dgd(circle(5, 0.45), [QuadraticAnchor(p) for p in self.P], 25, log=log)
        assert self.attack(run, log).outcome == EXACT

    def test_noisy_alg3_ambiguous(self):
        log = ObservationLog()
        run = run_alg3(circle(5, 0.45), [QuadraticAnchor(p) for p in self.P], 25, log=log)
        rep = self.attack(run, log)
        assert rep.outcome == AMBIGUOUS and rep.ambiguity_dim >= 1

    def test_unknown_protocol(self):
        with pytest.raises(ConfigurationError):
            attack_gradient_anchors(AdversaryView.eavesdropper(), ObservationLog(), circle(3),
                                    schedules={}, protocol="admm")


@pytest.mark.parametrize("seed", range(10))
def test_exact_reports_are_sound(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 7))
    g = [circle, path, complete][seed % 3](m, 0.3)
    x0 = rng.normal(size=m)
    eps = 1.0 / max_degree(g)
    run, log = plain_run(g, x0, eps)
    for view in [AdversaryView.eavesdropper()] + [AdversaryView.from_run(run, "honest-but-curious", agent=a)
                                                  for a in range(m)]:
        rep = attack_plain_consensus(view, log, g, eps, truth=x0)
        if rep.exact:
            assert rep.verify(x0)


def test_report_roundtrip():
    rep = AttackReport("initial-value", [0, 1], AMBIGUOUS, [None, [2.0]], 1, 1e-12, "note")
    back = AttackReport.from_record(json.loads(rep.to_json()))
    assert back == rep
