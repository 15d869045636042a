import csv
import json
import subprocess
import sys

import pytest
import yaml

from privmas.cli import main
from privmas.errors import ConfigurationError
from privmas.harness import OUTPUT_ENV, ExperimentConfig, run_cell, run_experiment, shipped_configs

PLAIN = {"name": "pair", "protocol": "plain", "graph": {"preset": "path", "m": 2, "weight": 0.5},
         "eps": 1.0, "x0": [1.0, 3.0], "steps": 20, "seeds": [0], "adversary": [{"kind": "eavesdropper"}]}

DP = {"name": "dp", "protocol": "dp-static", "graph": {"preset": "circle", "m": 4, "weight": 0.3}, "eps": 0.5,
      "x0": [1.0, 2.0, 3.0, 4.0], "steps": 50, "seeds": [0, 1, 2], "schedules": {"nu": 0.5}}


def write(tmp_path, raw, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return str(p)


@pytest.fixture(autouse=True)
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "out"))
    return tmp_path / "out"


def data_rows(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


class TestRun:
    def test_two_agent_plain(self, tmp_path, outdir, capsys):
        assert main(["run", write(tmp_path, PLAIN)]) == 0
        rows = list(csv.DictReader(data_rows(outdir / "pair" / "trajectory_seed0.csv")))
        last = [r for r in rows if r["k"] == "20"]
        assert [float(r["x"]) for r in last] == [2.0, 2.0]
        summary = json.loads((outdir / "pair" / "summary.json").read_text())
        assert summary["cells"][0]["attacks"] == "exact-recovery"
        assert "pair" in capsys.readouterr().out

    def test_headers_in_every_file(self, tmp_path, outdir):
        main(["run", write(tmp_path, PLAIN)])
        cfg = ExperimentConfig.from_dict(PLAIN)
        for f in (outdir / "pair").iterdir():
            text = f.read_text()
            assert cfg.config_hash in text and "0.1.0" in text, f.name

    def test_log_header_then_messages(self, tmp_path, outdir):
        main(["run", write(tmp_path, PLAIN)])
        lines = (outdir / "pair" / "log_seed0.ndjson").read_text().splitlines()
        assert json.loads(lines[0])["header"] is True
        assert len(lines) == 1 + 20 * 2

    def test_seed_override_and_workers(self, tmp_path, outdir):
        assert main(["run", write(tmp_path, DP), "--seeds", "3,4", "--workers", "2"]) == 0
        names = sorted(p.name for p in (outdir / "dp").glob("trajectory_*.csv"))
        assert names == ["trajectory_seed3.csv", "trajectory_seed4.csv"]

    def test_pool_matches_serial(self, tmp_path, outdir):
        serial = run_experiment(ExperimentConfig.from_dict({**DP, "name": "a"}))
        pooled = run_experiment(ExperimentConfig.from_dict({**DP, "name": "b", "workers": 3}))
        for s in DP["seeds"]:
            # headers differ through the config name, data rows must not
            assert data_rows(outdir / "a" / f"trajectory_seed{s}.csv") == \
                data_rows(outdir / "b" / f"trajectory_seed{s}.csv")
        assert [r["final_error"] for r in serial.rows] == [r["final_error"] for r in pooled.rows]

    def test_deterministic_bytes(self, tmp_path, outdir, monkeypatch):
        main(["run", write(tmp_path, DP)])
        first = (outdir / "dp" / "trajectory_seed1.csv").read_bytes()
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "again"))
        main(["run", write(tmp_path, DP)])
        assert (tmp_path / "again" / "dp" / "trajectory_seed1.csv").read_bytes() == first

    def test_env_overrides_output_dir(self, tmp_path, outdir):
        main(["run", write(tmp_path, {**PLAIN, "output_dir": str(tmp_path / "ignored")})])
        assert (outdir / "pair").is_dir() and not (tmp_path / "ignored").exists()


class TestInvalid:
    @pytest.mark.parametrize("patch, needle", [
        ({"graph": {"edges": [[0, 1], [1, 5]], "m": 3}}, "(1, 5)"),
        ({"protocol": "gossip"}, "protocol"),
        ({"eps": 2.0}, "eps"),
        ({"steps": -1}, "steps"),
        ({"colour": "red"}, "colour"),
        ({"x0": [1.0]}, "x0"),
    ])
    def test_nonzero_exit_names_field(self, tmp_path, capsys, patch, needle):
        assert main(["run", write(tmp_path, {**PLAIN, **patch})]) == 2
        assert needle in capsys.readouterr().err

    def test_missing_file(self, capsys):
        assert main(["run", "/nonexistent.yaml"]) == 2

    def test_not_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("protocol: [unclosed")
        assert main(["run", str(p)]) == 2

    def test_disconnected_graph(self, tmp_path, capsys):
        raw = {**PLAIN, "graph": {"edges": [[0, 1], [2, 3]], "m": 4}, "x0": [1, 2, 3, 4], "eps": 0.5}
        assert main(["run", write(tmp_path, raw)]) == 2
        assert "graph" in capsys.readouterr().err


class TestCompare:
    def test_single_config_rejected(self, tmp_path):
        assert main(["compare", write(tmp_path, DP)]) == 2

    def test_graph_mismatch_rejected(self, tmp_path):
        other = {**DP, "graph": {"preset": "path", "m": 4, "weight": 0.3}}
        assert main(["compare", write(tmp_path, DP, "a.yaml"), write(tmp_path, other, "b.yaml")]) == 2

    def test_identical_configs_identical_rows(self, tmp_path):
        out = tmp_path / "table.csv"
        per = tmp_path / "per.csv"
        a, b = write(tmp_path, DP, "a.yaml"), write(tmp_path, DP, "b.yaml")
        assert main(["compare", a, b, "--out", str(out), "--per-seed", str(per)]) == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 2
        strip = [{k: v for k, v in r.items() if "wall" not in k} for r in rows]
        assert strip[0] == strip[1]
        assert len(list(csv.DictReader(per.open()))) == 6


class TestTraceVerify:
    def golden(self, tmp_path, outdir):
        cfg = write(tmp_path, DP)
        main(["run", cfg])
        return cfg, str(outdir / "dp" / "trajectory_seed1.csv")

    def test_fresh_golden_passes(self, tmp_path, outdir, capsys):
        cfg, gold = self.golden(tmp_path, outdir)
        assert main(["trace-verify", gold, cfg, "--seed", "1"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_other_seed_fails_at_first_noise(self, tmp_path, outdir, capsys):
        cfg, gold = self.golden(tmp_path, outdir)
        assert main(["trace-verify", gold, cfg, "--seed", "2"]) == 1
        assert "k=1" in capsys.readouterr().out

    def test_tolerance_change_still_passes(self, tmp_path, outdir):
        _, gold = self.golden(tmp_path, outdir)
        cfg = write(tmp_path, {**DP, "tolerance": 0.123}, "tol.yaml")
        assert main(["trace-verify", gold, cfg, "--seed", "1"]) == 0

    def test_missing_golden(self, tmp_path):
        assert main(["trace-verify", str(tmp_path / "nope.csv"), write(tmp_path, DP)]) == 2


def test_list_presets(capsys):
    assert main(["list-presets"]) == 0
    out = capsys.readouterr().out
    assert "fig4" in out and "paper-alg3" in out and "rendezvous.yaml" in out


@pytest.mark.parametrize("path", shipped_configs(), ids=lambda p: p.stem)
def test_shipped_configs_validate_and_start(path):
    raw = yaml.safe_load(path.read_text())
    cfg = ExperimentConfig.from_dict({**raw, "steps": min(raw["steps"], 5), "record_every": 1})
    cell = run_cell(cfg, cfg.seeds[0])
    assert cell.rows


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "privmas", "list-presets"], capture_output=True, text=True)
    assert res.returncode == 0 and "graphs:" in res.stdout


def test_from_dict_requires_fields():
    with pytest.raises(ConfigurationError, match="steps"):
        ExperimentConfig.from_dict({"protocol": "plain", "graph": {"preset": "path", "m": 2}})
