"""CLI subcommands: outputs, manifests, reproducibility, error paths."""

import json
import shutil
import subprocess

import pytest

from tcsmfd.cli import _parse_taus, main


@pytest.fixture(scope="module")
def scenario_file(tmp_path_factory):
    """A small generated scenario shared by the command tests."""
    out = tmp_path_factory.mktemp("gen")
    rc = main([
        "generate", "--preset", "small", "--n-groups", "6",
        "--total-travelers", "900", "--seed", "3", "-o", str(out),
    ])
    assert rc == 0
    return out / "scenario.json"


def read_json(path):
    return json.loads(path.read_text())


class TestParseTaus:
    def test_range_form(self):
        assert _parse_taus("100:200:50") == [100.0, 150.0]

    def test_comma_form(self):
        assert _parse_taus("100,150.5") == [100.0, 150.5]

    def test_single(self):
        assert _parse_taus("240") == [240.0]

    def test_bad_range(self):
        with pytest.raises(ValueError):
            _parse_taus("100:200")


class TestGenerate:
    def test_outputs(self, scenario_file):
        assert scenario_file.exists()
        man = read_json(scenario_file.parent / "manifest.json")
        assert man["command"] == "generate"
        assert man["seed"] == 3
        assert man["options"]["n_groups"] == 6
        data = read_json(scenario_file)
        assert len(data["groups"]) == 6

    def test_unknown_preset_exits_2(self, tmp_path, capsys):
        rc = main(["generate", "--preset", "nope", "-o", str(tmp_path)])
        assert rc == 2
        assert "error:" in capsys.readouterr().err


class TestEquilibrium:
    def test_run_and_payload(self, scenario_file, tmp_path):
        rc = main([
            "equilibrium", "--scenario", str(scenario_file), "-o", str(tmp_path),
        ])
        assert rc == 0
        eq = read_json(tmp_path / "equilibrium.json")
        assert eq["converged"]
        assert len(eq["x"]) == 6
        assert eq["p"] >= 0.0
        assert eq["iterations"] == len(eq["j_trace"])
        assert "ttt_h" in eq and "emission_t" in eq
        man = read_json(tmp_path / "manifest.json")
        assert man["params"]["tau"] == 200.0
        assert man["inputs"]["scenario_sha256"]

    def test_no_tcs_price_zero(self, scenario_file, tmp_path):
        rc = main([
            "equilibrium", "--scenario", str(scenario_file), "-o", str(tmp_path),
            "--no-tcs",
        ])
        assert rc == 0
        eq = read_json(tmp_path / "equilibrium.json")
        assert eq["p"] == 0.0
        assert eq["tcs"] is False

    def test_reruns_byte_identical(self, scenario_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            rc = main([
                "equilibrium", "--scenario", str(scenario_file), "-o", str(out),
                "--tau", "220", "--eps", "const:0.25",
            ])
            assert rc == 0
        for name in ("equilibrium.json", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_param_overrides_recorded(self, scenario_file, tmp_path):
        rc = main([
            "equilibrium", "--scenario", str(scenario_file), "-o", str(tmp_path),
            "--tau", "250", "--alpha-eur-per-h", "14.4", "--eps", "inv",
        ])
        assert rc == 0
        man = read_json(tmp_path / "manifest.json")
        assert man["params"]["tau"] == 250.0
        assert man["params"]["alpha"] == pytest.approx(14.4 / 3600.0)
        assert man["params"]["eps_schedule"] == "inverse"

    def test_invalid_params_exit_2(self, scenario_file, tmp_path, capsys):
        rc = main([
            "equilibrium", "--scenario", str(scenario_file), "-o", str(tmp_path),
            "--tau", "50",   # below the default allowance
        ])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_scenario_exits_2(self, tmp_path, capsys):
        rc = main([
            "equilibrium", "--scenario", str(tmp_path / "nope.json"),
            "-o", str(tmp_path),
        ])
        assert rc == 2
        capsys.readouterr()


class TestMsa:
    def test_run(self, scenario_file, tmp_path):
        rc = main([
            "msa", "--scenario", str(scenario_file), "-o", str(tmp_path),
            "--price", "0.004", "--iters", "30",
        ])
        assert rc == 0
        msa = read_json(tmp_path / "msa.json")
        assert msa["iterations"] == 30
        assert isinstance(msa["cap_violated"], bool)
        assert len(msa["residual_trace"]) == 30


class TestSweep:
    def test_outputs(self, scenario_file, tmp_path):
        rc = main([
            "sweep", "--scenario", str(scenario_file), "-o", str(tmp_path),
            "--taus", "180,260",
        ])
        assert rc == 0
        for name in ("sweep.csv", "ttt_vs_tau.csv", "emission_vs_tau.csv",
                     "pareto_ttt_vs_emission.csv", "manifest.json"):
            assert (tmp_path / name).exists()
        lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
        assert lines[0].startswith("tau_credits,price_eur_per_credit")
        assert len(lines) == 3
        man = read_json(tmp_path / "manifest.json")
        assert man["options"]["taus"] == [180.0, 260.0]

    def test_bad_taus_exit_2(self, scenario_file, tmp_path, capsys):
        rc = main([
            "sweep", "--scenario", str(scenario_file), "-o", str(tmp_path),
            "--taus", "50,260",   # below kappa
        ])
        assert rc == 2
        capsys.readouterr()


class TestOptimize:
    def test_run(self, scenario_file, tmp_path):
        rc = main([
            "optimize", "--scenario", str(scenario_file), "-o", str(tmp_path),
            "--objective", "ttt", "--lo", "100", "--hi", "132",
        ])
        assert rc == 0
        res = read_json(tmp_path / "optimize.json")
        assert 100 <= res["tau_star"] <= 132
        assert res["n_solves"] <= 6   # ceil(log2(32)) + 1
        trace = (tmp_path / "dichotomy_trace.csv").read_text().strip().splitlines()
        assert trace[0].startswith("tau_credits,lo,hi")
        assert len(trace) >= 2


class TestUniqueness:
    def test_run(self, scenario_file, tmp_path):
        rc = main([
            "uniqueness", "--scenario", str(scenario_file), "-o", str(tmp_path),
            "--samples", "12",
        ])
        assert rc == 0
        rep = read_json(tmp_path / "uniqueness.json")
        assert rep["n_samples"] == 12
        assert rep["n_pairs"] == 66
        assert (tmp_path / "dot_histogram.csv").exists()


class TestStability:
    def test_run(self, scenario_file, tmp_path):
        rc = main([
            "stability", "--scenario", str(scenario_file), "-o", str(tmp_path),
            "--taus", "200,240",
        ])
        assert rc == 0
        lines = (tmp_path / "stability.csv").read_text().strip().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("tau_credits,")


class TestGains:
    def test_run(self, scenario_file, tmp_path):
        rc = main([
            "gains", "--scenario", str(scenario_file), "-o", str(tmp_path),
        ])
        assert rc == 0
        summary = read_json(tmp_path / "gains_summary.json")
        assert 0.0 <= summary["winners_fraction"] <= 1.0
        lines = (tmp_path / "gains.csv").read_text().strip().splitlines()
        assert len(lines) == 7   # header + 6 groups


def test_console_script_installed():
    exe = shutil.which("tcsmfd")
    assert exe, "console script should be on PATH after editable install"
    out = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "equilibrium" in out.stdout
