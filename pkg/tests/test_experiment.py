import numpy as np
import pytest

from morilab.experiment import (Scenario, ScenarioConfig, build_families,
                                histogram, records_from_csv, records_to_csv,
                                run_scenario, summarize, trial_seed)
from morilab.fitting import ModelClass

FAST_DECAY = dict(scenario=Scenario.DECAY, d=200, n_trials=6, dt=0.05,
                  t_max=12.0, n_star=10, workers=1, base_seed=3)


class TestHistogram:
    def test_two_values_one_bin(self):
        h = histogram([1e-4, 3e-4], 5e-4)
        assert h.counts.tolist() == [2]
        assert h.edges.tolist() == [0.0, 5e-4]

    def test_counts_sum_to_input_size(self):
        rng = np.random.default_rng(0)
        vals = rng.exponential(0.01, 500)
        h = histogram(vals, 5e-4)
        assert h.counts.sum() == 500

    def test_left_closed_bins(self):
        h = histogram([0.0, 5e-4, 9.99e-4], 5e-4)
        assert h.counts.tolist() == [1, 2]

    def test_validation(self):
        with pytest.raises(ValueError):
            histogram([0.1], 0.0)
        with pytest.raises(ValueError):
            histogram([-0.1], 1e-3)


class TestScenarioConfig:
    def test_desk_defaults(self):
        cfg = ScenarioConfig.preset(Scenario.DECAY)
        assert (cfg.d, cfg.n_trials, cfg.dt) == (2000, 200, 0.02)
        assert cfg.n_f == 666
        assert cfg.strength == 0.5
        assert cfg.bin_width == 5e-4

    def test_paper_profile(self):
        cfg = ScenarioConfig.preset(Scenario.DECAY, "paper")
        assert (cfg.d, cfg.n_f, cfg.n_trials) == (10000, 3333, 1000)
        assert cfg.strength == 0.5

    def test_oscillation_defaults(self):
        cfg = ScenarioConfig.preset(Scenario.OSCILLATION)
        assert cfg.strength == 0.1
        assert cfg.t_max == 30.0

    def test_pathological_defaults(self):
        cfg = ScenarioConfig.preset(Scenario.PATHOLOGICAL_DECAY)
        assert cfg.n_f == cfg.d
        assert cfg.bin_width == 5e-3
        assert cfg.strength == 0.5

    def test_validation(self):
        with pytest.raises(ValueError):
            ScenarioConfig(Scenario.DECAY, strength=-0.5)
        with pytest.raises(ValueError):
            ScenarioConfig(Scenario.DECAY, n_trials=0)
        with pytest.raises(ValueError):
            ScenarioConfig(Scenario.DECAY, d=100, n_f=200)

    def test_scenario_from_string(self):
        cfg = ScenarioConfig(scenario="decay", d=100, n_star=5)
        assert cfg.scenario is Scenario.DECAY


class TestBuildFamilies:
    def test_decay_families(self):
        fams = build_families(ScenarioConfig(**FAST_DECAY))
        assert [f.name for f in fams] == ["g", "e"]
        assert fams[0].model_class is ModelClass.GAUSS
        assert fams[1].model_class is ModelClass.EXP
        assert fams[0].chain.d == 200

    def test_oscillation_families(self):
        cfg = ScenarioConfig(scenario=Scenario.OSCILLATION, d=300, n_trials=2,
                             workers=1)
        fams = build_families(cfg)
        assert [f.name for f in fams] == ["gdo", "edo"]
        assert fams[1].chain.b[0] == 2.0
        assert fams[1].chain.b[1] == 1.6
        # shared asymptote: both tails run parallel
        tail_g = np.diff(fams[0].chain.b)[-20:]
        tail_e = np.diff(fams[1].chain.b)[-20:]
        assert np.allclose(tail_g, tail_e, atol=1e-10)

    def test_oscillation_designs_reproduce_reported_fits(self):
        from morilab.chain import propagate
        from morilab.design import q_ratio
        from morilab.fitting import detect_equilibration, fit
        cfg = ScenarioConfig.preset(Scenario.OSCILLATION, n_trials=1)
        gdo, edo = build_families(cfg)
        assert abs(q_ratio(gdo.chain, edo.chain) - 1.0) < 1e-3

        c_edo = propagate(edo.chain, dt=cfg.dt, t_max=cfg.t_max)
        n_eq, _ = detect_equilibration(c_edo)
        r = fit(c_edo, edo.model_class, n_eq)
        # the educated-guess head yields a clean damped oscillation
        assert r.model.a == pytest.approx(1.045, abs=0.05)
        assert r.model.mu == pytest.approx(0.57, abs=0.06)
        assert r.model.omega == pytest.approx(2.19, abs=0.1)
        assert r.model.phi == pytest.approx(0.32, abs=0.15)
        assert r.epsilon < 5e-3

        c_gdo = propagate(gdo.chain, dt=cfg.dt, t_max=cfg.t_max)
        n_eq_g, _ = detect_equilibration(c_gdo)
        r_g = fit(c_gdo, gdo.model_class, n_eq_g)
        # within-class target: A exp(-t^2/8) cos(2t) recovered almost exactly
        assert r_g.model.mu == pytest.approx(0.125, abs=2e-3)
        assert r_g.model.omega == pytest.approx(2.0, abs=2e-3)
        assert r_g.epsilon < 2e-3


class TestTrialSeed:
    def test_deterministic_and_distinct(self):
        s = trial_seed(0, 0, 0)
        assert trial_seed(0, 0, 0) == s
        assert trial_seed(0, 0, 1) != s
        assert trial_seed(0, 1, 0) != s
        assert trial_seed(1, 0, 0) != s


class TestWorkerCount:
    def test_env_caps_workers(self, monkeypatch):
        from morilab.experiment import worker_count
        cfg = ScenarioConfig(**FAST_DECAY)
        monkeypatch.setattr(cfg, "workers", None)
        monkeypatch.setenv("MORILAB_THREADS", "3")
        assert worker_count(cfg) == 3
        monkeypatch.delenv("MORILAB_THREADS")
        assert worker_count(cfg) >= 1

    def test_explicit_workers_win(self, monkeypatch):
        from morilab.experiment import worker_count
        monkeypatch.setenv("MORILAB_THREADS", "5")
        cfg = ScenarioConfig(**{**FAST_DECAY, "workers": 2})
        assert worker_count(cfg) == 2


class TestRunScenario:
    def test_zero_strength_degeneracy(self):
        cfg = ScenarioConfig(**{**FAST_DECAY, "strength": 0.0, "n_trials": 3})
        records, summary = run_scenario(cfg)
        for r in records:
            assert r.sigma == 0.0
            assert r.epsilon == pytest.approx(r.eps0, abs=1e-12)
            assert r.clamp_count == 0

    def test_reproducible_and_order_independent(self):
        cfg1 = ScenarioConfig(**FAST_DECAY)
        records1, _ = run_scenario(cfg1)
        cfg2 = ScenarioConfig(**FAST_DECAY)
        records2, _ = run_scenario(cfg2)
        assert records1 == records2

    def test_worker_count_invariance(self):
        serial = ScenarioConfig(**FAST_DECAY)
        records_serial, _ = run_scenario(serial)
        parallel = ScenarioConfig(**{**FAST_DECAY, "workers": 2})
        records_parallel, _ = run_scenario(parallel)
        assert records_serial == records_parallel

    def test_diagonal_edge_every_trial(self):
        cfg = ScenarioConfig(**{**FAST_DECAY, "n_trials": 10})
        records, _ = run_scenario(cfg)
        for r in records:
            assert r.epsilon <= r.sigma + r.eps0 + 1e-9

    def test_sigma_monotone_in_strength(self):
        means = []
        errs = []
        for lam in (0.0, 0.1, 0.25, 0.5):
            cfg = ScenarioConfig(**{**FAST_DECAY, "strength": lam,
                                    "n_trials": 30})
            records, _ = run_scenario(cfg)
            sig = np.array([r.sigma for r in records if r.family == "e"])
            means.append(sig.mean())
            errs.append(sig.std(ddof=1) / np.sqrt(sig.size) if lam else 0.0)
        for i in range(3):
            assert means[i + 1] >= means[i] - 3 * (errs[i] + errs[i + 1])

    def test_summary_consistency(self):
        cfg = ScenarioConfig(**FAST_DECAY)
        records, summary = run_scenario(cfg)
        for name, fam in summary.families.items():
            eps = [r.epsilon for r in records if r.family == name and r.valid]
            assert fam.mean_epsilon == pytest.approx(np.mean(eps), rel=1e-12)
            assert fam.histogram.counts.sum() == fam.n_valid


class TestSummarize:
    def test_empty_family_omitted(self):
        cfg = ScenarioConfig(**FAST_DECAY)
        records, _ = run_scenario(cfg)
        only_e = [r for r in records if r.family == "e"]
        summary = summarize(only_e, 5e-4)
        assert set(summary.families) == {"e"}

    def test_scatter_pairs(self):
        cfg = ScenarioConfig(**FAST_DECAY)
        records, summary = run_scenario(cfg)
        pairs = summary.scatter(records, "g")
        assert pairs.shape == (cfg.n_trials, 2)


class TestRecordsCsv:
    def test_roundtrip(self, tmp_path):
        cfg = ScenarioConfig(**FAST_DECAY)
        records, _ = run_scenario(cfg)
        path = tmp_path / "records.csv"
        records_to_csv(records, path)
        assert records_from_csv(path) == records

    def test_byte_identical_across_runs(self, tmp_path):
        records1, _ = run_scenario(ScenarioConfig(**FAST_DECAY))
        records2, _ = run_scenario(ScenarioConfig(**FAST_DECAY))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        records_to_csv(records1, p1)
        records_to_csv(records2, p2)
        assert p1.read_bytes() == p2.read_bytes()
