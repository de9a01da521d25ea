import json
import os

import numpy as np
import pytest

from morilab import cli
from morilab.chain import CorrelationSeries, LanczosChain, PropagationError
from morilab.cli import ConfigError, main, parse_config, parse_target
from morilab.experiment import Scenario


class TestParseTarget:
    def test_gdo_target(self):
        c = parse_target("exp(-t^2/8)*cos(2t)")
        assert c.gauss_rate == pytest.approx(-0.125)
        assert c.exp_rate == 0.0
        assert c.cos_freq == 2.0

    def test_plain_exponential(self):
        c = parse_target("exp(-0.24*t)")
        assert c.exp_rate == pytest.approx(-0.24)
        assert c.gauss_rate == 0.0

    def test_mixed_product(self):
        c = parse_target("exp(-t)*exp(-0.5*t^2)")
        assert c.exp_rate == -1.0
        assert c.gauss_rate == -0.5

    def test_spaces_tolerated(self):
        c = parse_target("exp(-t^2 / 8) * cos(2 t)")
        assert c.gauss_rate == pytest.approx(-0.125)

    def test_bad_factor_rejected(self):
        with pytest.raises(ConfigError):
            parse_target("sinh(t)")
        with pytest.raises(ConfigError):
            parse_target("exp(-t^3)")

    def test_growing_target_rejected(self):
        with pytest.raises(ConfigError):
            parse_target("exp(t)")

    def test_double_cosine_rejected(self):
        with pytest.raises(ConfigError):
            parse_target("cos(t)*cos(2t)")


class TestParseConfig:
    def test_flags_only_desk_default(self):
        cfg = parse_config(None, {"scenario": "decay"})
        assert cfg.d == 2000 and cfg.n_trials == 200
        assert cfg.strength == 0.5

    def test_paper_profile(self):
        cfg = parse_config(None, {"scenario": "decay", "profile": "paper"})
        assert (cfg.d, cfg.n_f, cfg.n_trials) == (10000, 3333, 1000)
        assert cfg.strength == 0.5

    def test_negative_strength_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(None, {"scenario": "decay", "strength": -1.0})

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"scenario": "decay", "bogus_key": 1}))
        with pytest.raises(ConfigError, match="bogus_key"):
            parse_config(str(path), {})

    def test_missing_scenario(self):
        with pytest.raises(ConfigError, match="scenario"):
            parse_config(None, {})

    def test_manifest_accepted(self, tmp_path):
        manifest = {"tool": "morilab",
                    "config": {"scenario": "decay", "d": 256, "n_star": 5,
                               "n_trials": 2}}
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps(manifest))
        cfg = parse_config(str(path), {})
        assert cfg.d == 256 and cfg.n_trials == 2

    def test_flag_overrides_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"scenario": "decay", "d": 256,
                                    "n_star": 5}))
        cfg = parse_config(str(path), {"d": 512})
        assert cfg.d == 512


class TestSubcommands:
    def test_design_propagate_fit_loop(self, tmp_path):
        chain_csv = tmp_path / "chain.csv"
        assert main(["design", "--family", "exponential", "--nstar", "10",
                     "--d", "300", "--out", str(chain_csv)]) == 0
        chain = LanczosChain.from_csv(chain_csv)
        assert chain.d == 300
        series_csv = tmp_path / "series.csv"
        assert main(["propagate", "--chain", str(chain_csv), "--dt", "0.05",
                     "--tmax", "15", "--out", str(series_csv)]) == 0
        fit_json = tmp_path / "fit.json"
        assert main(["fit", "--series", str(series_csv), "--model", "exp",
                     "--out", str(fit_json)]) == 0
        result = json.loads(fit_json.read_text())
        assert result["model"] == "exp"
        assert result["mu"] > 0

    def test_design_gaussian_values(self, tmp_path):
        out = tmp_path / "g.csv"
        main(["design", "--family", "gaussian", "--nstar", "4", "--d", "10",
              "--out", str(out)])
        chain = LanczosChain.from_csv(out)
        assert chain.b[3] == 2.0
        assert chain.b[4] == 2.25

    def test_reverse_with_continuation(self, tmp_path):
        coeffs = tmp_path / "b.csv"
        chain_out = tmp_path / "chain.csv"
        code = main(["reverse", "--target", "exp(-t^2/8)*cos(2t)",
                     "--nmax", "50", "--out", str(coeffs),
                     "--continue-to", "400", "--chain-out", str(chain_out)])
        assert code == 0
        rows = coeffs.read_text().strip().splitlines()
        assert rows[0] == "n,b,achieved_flag"
        assert len(rows) == 51  # 50 coefficients
        assert os.path.exists(str(coeffs) + ".meta.json")
        chain = LanczosChain.from_csv(chain_out)
        assert chain.d == 400

    def test_perturb_deterministic(self, tmp_path):
        chain_csv = tmp_path / "chain.csv"
        main(["design", "--family", "gaussian", "--nstar", "5", "--d", "120",
              "--out", str(chain_csv)])
        out1, out2 = tmp_path / "p1.csv", tmp_path / "p2.csv"
        for out in (out1, out2):
            assert main(["perturb", "--chain", str(chain_csv), "--lambda",
                         "0.5", "--seed", "9", "--out", str(out)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        pert = LanczosChain.from_csv(out1)
        base = LanczosChain.from_csv(chain_csv)
        assert not np.array_equal(pert.b, base.b)

    def test_missing_chain_file_exit_2(self, tmp_path):
        code = main(["propagate", "--chain", str(tmp_path / "nope.csv"),
                     "--tmax", "5", "--out", str(tmp_path / "o.csv")])
        assert code == 2

    def test_numeric_failure_exit_3(self, monkeypatch, tmp_path):
        chain_csv = tmp_path / "chain.csv"
        main(["design", "--family", "gaussian", "--nstar", "5", "--d", "60",
              "--out", str(chain_csv)])
        def boom(*a, **k):
            raise PropagationError("norm drift 1e-3; shrink dt")
        monkeypatch.setattr(cli, "propagate", boom)
        code = main(["propagate", "--chain", str(chain_csv), "--tmax", "5",
                     "--out", str(tmp_path / "o.csv")])
        assert code == 3


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["run", "--scenario", "decay", "--d", "150", "--trials", "4",
                 "--dt", "0.05", "--tmax", "10", "--nstar", "8",
                 "--workers", "1", "--out", str(out)])
    assert code == 0
    return out


class TestRunCommand:
    def test_outputs_present(self, tiny_run):
        expected = {"records.csv", "summary.json", "histogram.csv",
                    "scatter.csv", "manifest.json", "curves.csv",
                    "histogram.svg", "scatter.svg", "chains.svg",
                    "unperturbed.svg", "exemplar_g.svg", "exemplar_e.svg",
                    "chain_g.csv", "chain_e.csv", "unperturbed_g.csv",
                    "unperturbed_e.csv"}
        assert expected <= set(os.listdir(tiny_run))

    def test_manifest_digests_match(self, tiny_run):
        manifest = json.loads((tiny_run / "manifest.json").read_text())
        assert manifest["tool"] == "morilab"
        for name, digest in manifest["outputs"].items():
            assert cli._sha256(tiny_run / name) == digest

    def test_replay_from_manifest(self, tiny_run, tmp_path):
        out2 = tmp_path / "replay"
        code = main(["run", "--config", str(tiny_run / "manifest.json"),
                     "--out", str(out2)])
        assert code == 0
        assert (out2 / "records.csv").read_bytes() == \
            (tiny_run / "records.csv").read_bytes()

    def test_plot_rerender_byte_identical(self, tiny_run):
        svgs = [n for n in os.listdir(tiny_run) if n.endswith(".svg")]
        before = {n: (tiny_run / n).read_bytes() for n in svgs}
        assert main(["plot", "--from", str(tiny_run)]) == 0
        for n in svgs:
            assert (tiny_run / n).read_bytes() == before[n]

    def test_summary_contents(self, tiny_run):
        summary = json.loads((tiny_run / "summary.json").read_text())
        assert set(summary["families"]) == {"g", "e"}
        assert summary["config"]["scenario"] == "decay"
        assert "unperturbed" in summary

    def test_flat_file_headers(self, tiny_run):
        hist = (tiny_run / "histogram.csv").read_text().splitlines()
        assert hist[0] == "bin_left,bin_right,family,count"
        scat = (tiny_run / "scatter.csv").read_text().splitlines()
        assert scat[0] == "family,sigma,epsilon"
        curves = (tiny_run / "curves.csv").read_text().splitlines()
        assert curves[0] == "family,trial,t,C,fit"

    def test_scenario_flag_required_without_config(self):
        assert main(["run", "--out", "/tmp/should-not-exist-xyz"]) == 2


class TestPlotCommand:
    def test_empty_dir_is_config_error(self, tmp_path):
        assert main(["plot", "--from", str(tmp_path)]) == 2
