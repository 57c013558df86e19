import json
import math
import re

import pytest

from trendlab import cli
from trendlab.errors import ConvergenceError

from conftest import ACRYLAMIDE_CSV, FLUTRIMAZOLE_CSV, OROBANCHE_CSV

FLAT_2X2 = "dose,events,trials\n0,2,10\n1,2,10\n"


@pytest.fixture
def acry_csv(tmp_path):
    p = tmp_path / "acrylamide.csv"
    p.write_text(ACRYLAMIDE_CSV)
    return str(p)


@pytest.fixture
def flat_csv(tmp_path):
    p = tmp_path / "twobytwo.csv"
    p.write_text(FLAT_2X2)
    return str(p)


def run_cli(capsys, *argv):
    code = cli.run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCaTestCommand:
    def test_flat_table(self, capsys, flat_csv):
        code, out, _ = run_cli(capsys, "catest", "--input", flat_csv,
                               "--alternative", "greater", "--format", "json")
        assert code == 0
        doc = json.loads(out)
        assert doc["command"] == "catest"
        assert doc["statistic"] == pytest.approx(0.0, abs=1e-12)
        assert doc["p_value"] == pytest.approx(0.5, abs=1e-12)

    def test_text_format(self, capsys, flat_csv):
        code, out, _ = run_cli(capsys, "catest", "--input", flat_csv)
        assert code == 0
        assert "p-value" in out


class TestTrendCommand:
    def test_json_reproduces_reference_best(self, capsys, acry_csv):
        code, out, _ = run_cli(capsys, "trend", "--input", acry_csv, "--link", "logit",
                               "--scaling", "ari,ord,log", "--alternative", "greater",
                               "--pseudo-count", "0.5", "--format", "json")
        assert code == 0
        doc = json.loads(out)
        assert len(doc["components"]) == 3
        assert doc["best"] == "ord"
        assert doc["seed"] == 20240101
        assert doc["N"] == 5 and doc["M"] == 3
        assert "warnings" in doc and "config" in doc

    def test_byte_identical_reruns(self, capsys, acry_csv):
        args = ("trend", "--input", acry_csv, "--format", "json")
        _, out1, _ = run_cli(capsys, *args)
        _, out2, _ = run_cli(capsys, *args)
        assert out1 == out2

    def test_text_and_json_numbers_agree(self, capsys, acry_csv):
        args = ("trend", "--input", acry_csv)
        _, text, _ = run_cli(capsys, *args, "--format", "text")
        _, js, _ = run_cli(capsys, *args, "--format", "json")
        doc = json.loads(js)
        for comp in doc["components"]:
            row = next(l for l in text.splitlines() if l.startswith(comp["label"] + " "))
            nums = row.split()
            assert float(nums[1]) == pytest.approx(comp["estimate_link_scale"], abs=1e-12)
            assert float(nums[2]) == pytest.approx(comp["estimate_effect_scale"], abs=1e-12)
            assert float(nums[3]) == pytest.approx(comp["statistic"], abs=1e-12)
            # p-values are displayed at 5 decimals in the text report
            assert float(nums[4]) == pytest.approx(round(comp["raw_p"], 5), abs=1e-12)
            assert float(nums[5]) == pytest.approx(round(comp["adjusted_p"], 5), abs=1e-12)

    def test_csv_format(self, capsys, acry_csv):
        code, out, _ = run_cli(capsys, "trend", "--input", acry_csv, "--format", "csv")
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0].startswith("label,effect_size,metameter")
        assert len(lines) == 4
        first = lines[1].split(",")
        assert first[0] == "ari"
        assert math.isfinite(float(first[3]))

    def test_output_file(self, capsys, acry_csv, tmp_path):
        dest = tmp_path / "report.json"
        code, out, _ = run_cli(capsys, "trend", "--input", acry_csv,
                               "--format", "json", "--output", str(dest))
        assert code == 0
        assert out == ""
        assert json.loads(dest.read_text())["command"] == "trend"

    def test_seed_env_override(self, capsys, acry_csv, monkeypatch):
        monkeypatch.setenv("TRENDLAB_SEED", "555")
        _, out, _ = run_cli(capsys, "trend", "--input", acry_csv, "--format", "json")
        assert json.loads(out)["seed"] == 555
        # explicit flag wins over the environment
        _, out, _ = run_cli(capsys, "trend", "--input", acry_csv, "--format", "json",
                            "--seed", "777")
        assert json.loads(out)["seed"] == 777


class TestLinksCommand:
    def test_nine_components(self, capsys, acry_csv):
        code, out, _ = run_cli(capsys, "links", "--input", acry_csv,
                               "--link", "logit,identity,log",
                               "--scaling", "ari,ord,log", "--format", "json")
        assert code == 0
        doc = json.loads(out)
        assert len(doc["components"]) == 9
        assert doc["best"].startswith("RD:")


class TestJointCommand:
    def test_runs_on_plateau_table(self, capsys, tmp_path):
        p = tmp_path / "flutri.csv"
        p.write_text(FLUTRIMAZOLE_CSV)
        code, out, _ = run_cli(capsys, "joint", "--input", str(p), "--format", "json",
                               "--pseudo-count", "0")
        assert code == 0
        doc = json.loads(out)
        assert len(doc["components"]) == 6
        assert doc["influence_unit"] == "cell"


class TestOverdispCommand:
    def test_runs_on_replicated_table(self, capsys, tmp_path):
        p = tmp_path / "orobanche.csv"
        p.write_text(OROBANCHE_CSV)
        code, out, _ = run_cli(capsys, "overdisp", "--input", str(p),
                               "--alternative", "less", "--format", "json")
        assert code == 0
        doc = json.loads(out)
        assert doc["best"] == "ari"
        assert doc["dispersion"] > 1.0
        assert any(c["dispersion"] is not None for c in doc["components"])


class TestErrorPaths:
    def test_missing_file(self, capsys):
        code, _, err = run_cli(capsys, "trend", "--input", "/nonexistent.csv")
        assert code == 2
        assert "cannot read" in err

    def test_validation_error(self, capsys, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("dose,events,trials\n0,11,10\n1,2,10\n")
        code, _, err = run_cli(capsys, "trend", "--input", str(p))
        assert code == 2
        assert "exceed" in err

    def test_unknown_flag(self, capsys, acry_csv):
        code = cli.run(["trend", "--input", acry_csv, "--frobnicate"])
        assert code == 2

    def test_bad_level(self, capsys, acry_csv):
        code, _, err = run_cli(capsys, "trend", "--input", acry_csv, "--level", "0.4")
        assert code == 2

    def test_log_scaling_without_positive_doses(self, capsys, tmp_path):
        p = tmp_path / "one_pos.csv"
        p.write_text("dose,events,trials\n0,1,10\n1,2,10\n")
        code, _, err = run_cli(capsys, "trend", "--input", str(p), "--scaling", "log")
        assert code == 2
        assert "positive" in err

    def test_numerical_failure_exit_code(self, capsys, acry_csv, monkeypatch):
        def boom(*a, **k):
            raise ConvergenceError("forced failure")
        monkeypatch.setattr(cli, "tukey_trend_test", boom)
        code, _, err = run_cli(capsys, "trend", "--input", acry_csv)
        assert code == 3
        assert "forced failure" in err

    def test_fixed_zero_dose_policy_requires_value(self, capsys, acry_csv):
        code, _, err = run_cli(capsys, "trend", "--input", acry_csv,
                               "--zero-dose-policy", "fixed")
        assert code == 2

    def test_fixed_zero_dose_policy_applies(self, capsys, acry_csv):
        code, out, _ = run_cli(capsys, "trend", "--input", acry_csv, "--format", "json",
                               "--zero-dose-policy", "fixed", "--zero-dose-value", "0.01")
        assert code == 0
        doc = json.loads(out)
        assert doc["config"]["zero-dose-value"] == 0.01


class TestJsonShape:
    def test_infinite_bounds_serialize_as_null(self, capsys, acry_csv):
        _, out, _ = run_cli(capsys, "trend", "--input", acry_csv, "--format", "json")
        doc = json.loads(out)
        assert doc["components"][0]["sci_upper_link"] is None
        assert doc["components"][0]["sci_lower_link"] is not None

    def test_seventeen_significant_digits(self, capsys, acry_csv):
        _, out, _ = run_cli(capsys, "trend", "--input", acry_csv, "--format", "json")
        m = re.search(r'"estimate_link_scale": ([-0-9.e+]+)', out)
        assert m is not None
        digits = re.sub(r"[-.e+]", "", m.group(1)).lstrip("0")
        assert len(digits) >= 15
