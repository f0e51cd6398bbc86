"""Command-line interface: exit codes, output formats, sidecar files."""

import json
import math

import numpy as np
import pytest

from resilmip.cli import EXIT_ERROR, EXIT_OK, EXIT_UNKNOWN, EXIT_VIOLATED, build_parser, main
from resilmip.mipmodel import parse_mps
from resilmip.network import save_network
from resilmip.oracle import enumerate_mip
from resilmip import zoo


class TestEval:
    def test_probability_head_point(self, capsys):
        assert main(["eval", "--net", "identity3", "--input", "-1, 2, 3"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "0.0132129" in out and "0.265388" in out and "0.721399" in out
        assert "class    3" in out

    def test_input_from_json_file(self, tmp_path, capsys):
        f = tmp_path / "point.json"
        f.write_text("[1.0, 0.0]")
        assert main(["eval", "--net", "two_class_linear", "--input", str(f)]) == EXIT_OK
        assert "class    1" in capsys.readouterr().out

    def test_input_from_plain_text_file(self, tmp_path, capsys):
        f = tmp_path / "point.txt"
        f.write_text("0.2 0.9\n")
        assert main(["eval", "--net", "two_class_linear", "--input", str(f)]) == EXIT_OK
        assert "class    2" in capsys.readouterr().out

    def test_network_from_file(self, tmp_path, capsys):
        p = tmp_path / "net.json"
        save_network(zoo.two_class_linear(), p)
        assert main(["eval", "--net", str(p), "--input", "1,0"]) == EXIT_OK

    def test_wrong_dimension_is_a_runtime_error(self, capsys):
        assert main(["eval", "--net", "identity3", "--input", "1,2"]) == EXIT_ERROR
        assert "error:" in capsys.readouterr().err

    def test_unknown_network_is_a_runtime_error(self, capsys):
        assert main(["eval", "--net", "no_such_net", "--input", "1"]) == EXIT_ERROR
        err = capsys.readouterr().err
        assert "no_such_net" in err


class TestBounds:
    def test_dump_to_stdout(self, capsys):
        assert main(["bounds", "--net", "relu_mixed_phases"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "active" in out and "undecided" in out

    def test_dump_to_file_with_lookback(self, tmp_path, capsys):
        f = tmp_path / "bounds.tsv"
        assert main(["bounds", "--net", "lookback_chain", "--lookback",
                     "--out", str(f)]) == EXIT_OK
        text = f.read_text()
        assert "-1" in text  # the window-tightened lower bound
        assert f"wrote {f}" in capsys.readouterr().out


class TestVerify:
    def test_robust_exits_zero(self, capsys):
        code = main(["verify", "--net", "two_class_linear",
                     "--input", "1,0", "--delta", "0.9"])
        assert code == EXIT_OK
        assert "ROBUST" in capsys.readouterr().out

    def test_violated_exits_ten_and_writes_the_witness(self, tmp_path, capsys):
        w = tmp_path / "witness.json"
        code = main(["verify", "--net", "two_class_linear",
                     "--input", "1,0", "--delta", "1.1",
                     "--witness-out", str(w)])
        assert code == EXIT_VIOLATED
        assert "VIOLATED" in capsys.readouterr().out
        doc = json.loads(w.read_text())
        eps = np.array(doc["eps"], dtype=np.float64)
        assert float(np.abs(eps).sum()) <= 1.1 + 1e-6

    def test_unverifiable_slack_exits_twenty(self, capsys):
        code = main(["verify", "--net", "atan_narrow",
                     "--input", "1.0", "--delta", "0.998"])
        assert code == EXIT_UNKNOWN
        assert "envelope" in capsys.readouterr().out

    def test_json_sidecar(self, tmp_path):
        j = tmp_path / "res.json"
        main(["verify", "--net", "two_class_linear", "--input", "1,0",
              "--delta", "0.5", "--json-out", str(j)])
        doc = json.loads(j.read_text())
        assert doc["verdict"] == "ROBUST"
        assert doc["class"] == 1


class TestPhi:
    def test_exact_bound_exits_zero(self, capsys):
        code = main(["phi", "--net", "two_class_linear", "--class", "1",
                     "--alpha", str(math.e)])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "phi      1" in out
        assert "exact    yes" in out

    def test_vacuous_alpha_prints_the_note(self, capsys):
        code = main(["phi", "--net", "two_class_linear", "--class", "1",
                     "--alpha", "8.0"])
        assert code == EXIT_OK  # settled exactly, just infinite
        out = capsys.readouterr().out
        assert "phi      inf" in out
        assert "infeasible at alpha=8" in out

    def test_solver_limit_exits_twenty_with_partial_output(self, tmp_path, capsys):
        j = tmp_path / "phi.json"
        code = main(["phi", "--net", "relu_mixed_phases", "--class", "1",
                     "--alpha", str(math.e), "--time-limit", "0",
                     "--json-out", str(j)])
        assert code == EXIT_UNKNOWN
        assert "exact    no" in capsys.readouterr().out
        doc = json.loads(j.read_text())  # partial results still written
        assert doc["status"] == "limit"
        assert doc["exact"] is False

    def test_json_payload_round_trips(self, tmp_path):
        j = tmp_path / "phi.json"
        main(["phi", "--net", "two_class_linear", "--class", "1",
              "--alpha", str(math.e), "--json-out", str(j)])
        doc = json.loads(j.read_text())
        assert doc["phi"] == pytest.approx(1.0, abs=1e-7)
        assert doc["exact"] is True
        assert doc["anchor"] == pytest.approx([1.0, 0.0], abs=1e-6)


class TestXiAndMaxAlpha:
    def test_xi_table(self, capsys):
        code = main(["xi", "--net", "three_class_linear", "--alpha", str(math.e)])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "xi       1" in out
        assert "excluded 3" in out
        assert "phi[1]" in out and "phi[3] inf" in out

    def test_max_alpha(self, capsys):
        code = main(["max-alpha", "--net", "two_class_linear", "--class", "1"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "alpha    2.71828" in out
        assert "log      1" in out


class TestExport:
    def test_written_model_is_parseable_and_solves(self, tmp_path, capsys):
        f = tmp_path / "query.mps"
        code = main(["export", "--net", "two_class_linear", "--class", "1",
                     "--alpha", str(math.e), "--out", str(f)])
        assert code == EXIT_OK
        assert "rows" in capsys.readouterr().out
        model = parse_mps(f.read_text())
        ref = enumerate_mip(model)  # one selector binary: cheap to exhaust
        assert ref.status == "optimal"
        assert ref.objective == pytest.approx(1.0, abs=1e-7)

    def test_robustness_export_needs_an_anchor(self, tmp_path, capsys):
        f = tmp_path / "q.mps"
        code = main(["export", "--net", "two_class_linear", "--class", "1",
                     "--query", "robustness", "--out", str(f)])
        assert code == EXIT_ERROR
        assert "--input" in capsys.readouterr().err
        code = main(["export", "--net", "two_class_linear", "--class", "1",
                     "--query", "robustness", "--input", "1,0",
                     "--delta", "0.5", "--out", str(f)])
        assert code == EXIT_OK
        assert f.exists()

    def test_max_alpha_export(self, tmp_path):
        f = tmp_path / "ma.mps"
        assert main(["export", "--net", "atan_wide", "--class", "1",
                     "--query", "max-alpha", "--out", str(f)]) == EXIT_OK
        model = parse_mps(f.read_text())
        assert model.binary_ids  # region gates survive the round trip


class TestUsage:
    def test_missing_required_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as e:
            main(["phi", "--class", "1"])  # no --net
        assert e.value.code == 2

    def test_unknown_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as e:
            main(["frobnicate"])
        assert e.value.code == 2

    def test_worker_default_comes_from_the_environment(self, monkeypatch):
        monkeypatch.setenv("RESILMIP_WORKERS", "3")
        args = build_parser().parse_args(["phi", "--net", "x", "--class", "1"])
        assert args.workers == 3
        monkeypatch.setenv("RESILMIP_WORKERS", "not-a-number")
        args = build_parser().parse_args(["phi", "--net", "x", "--class", "1"])
        assert args.workers == 1

    def test_short_k_alias(self):
        args = build_parser().parse_args(
            ["verify", "--net", "x", "--input", "0", "--delta", "1", "-k", "2"])
        assert args.k == 2
