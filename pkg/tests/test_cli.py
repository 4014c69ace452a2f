import csv
import subprocess
import sys

import numpy as np
import pytest

from matchlab.cli import main
from matchlab.config import (ExperimentConfig, default_config_text,
                             parse_config_text, resolved_strong_sigma)
from matchlab.trainer import ConfigError

TINY = """
# small but complete experiment
classes = 3
input_dim = 6
class_separation = 2.5
labels_per_class = 4
unlabeled_per_class = 20
val_size = 30
test_size = 30
epochs = 2
batch_size = 6
algorithms = supervised_only,multimatch
seeds = 0,1
"""


class TestConfigParsing:
    def test_defaults_match_published_values(self):
        cfg = ExperimentConfig()
        assert cfg.model_num_heads == 3
        assert cfg.plwm_w_d == 3.0
        assert cfg.apm_percentile == 5.0
        assert cfg.apm_gamma_min == 0.0
        assert cfg.w_u == 1.0
        assert cfg.mu == 1

    def test_unknown_key_named_with_line(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("epochs = 3\nw_x = 2\n")
        assert "w_x" in str(err.value)
        assert "line 2" in str(err.value)

    def test_comments_and_blank_lines(self):
        cfg = parse_config_text("# comment\n\nepochs = 7  # trailing\n")
        assert cfg.epochs == 7

    def test_overrides_win(self):
        cfg = parse_config_text("epochs = 7\n", overrides=["epochs=9"])
        assert cfg.epochs == 9

    def test_bad_override_format(self):
        with pytest.raises(ConfigError):
            parse_config_text("", overrides=["epochs"])

    def test_gamma_min_minus_inf(self):
        cfg = parse_config_text("apm.gamma_min = -inf\n")
        assert cfg.apm_gamma_min == float("-inf")

    def test_auto_strong_sigma(self):
        cfg = parse_config_text("class_separation = 4.0\ninput_dim = 4\nclasses = 4\n"
                                "val_size = 400\ntest_size = 1000\n")
        assert resolved_strong_sigma(cfg) == pytest.approx(0.5 * 4.0 / 2.0)

    def test_default_config_text_parses(self):
        cfg = parse_config_text(default_config_text())
        assert cfg == ExperimentConfig()


class TestRunCommand:
    def test_defaults_only_config_completes(self, tmp_path):
        # an empty config file runs entirely on documented defaults
        cfg_path = tmp_path / "empty.cfg"
        cfg_path.write_text("# all defaults\n")
        code = main(["run", "--config", str(cfg_path),
                     "--set", f"output_dir={tmp_path / 'out'}",
                     "--set", "epochs=3"])
        assert code == 0
        out = tmp_path / "out"
        for name in ("per_epoch.csv", "results.csv", "ranks.csv",
                     "maskrate_default.svg", "impurity_default.svg"):
            assert (out / name).exists()

    def test_smoke_emits_all_file_types(self, tmp_path):
        cfg_path = tmp_path / "exp.cfg"
        cfg_path.write_text(TINY + f"output_dir = {tmp_path / 'out'}\n")
        code = main(["run", "--config", str(cfg_path)])
        assert code == 0
        out = tmp_path / "out"
        assert (out / "per_epoch.csv").exists()
        assert (out / "results.csv").exists()
        assert (out / "ranks.csv").exists()
        assert (out / "maskrate_default.svg").exists()
        assert (out / "impurity_default.svg").exists()

    def test_seed_list_rows(self, tmp_path):
        cfg_path = tmp_path / "exp.cfg"
        cfg_path.write_text(TINY + f"output_dir = {tmp_path / 'out'}\n")
        assert main(["run", "--config", str(cfg_path),
                     "--set", "algorithms=supervised_only",
                     "--set", "seeds=1,2,3"]) == 0
        with open(tmp_path / "out" / "results.csv") as fh:
            rows = list(csv.reader(fh))[1:]
        assert len(rows) == 3
        assert {r[2] for r in rows} == {"1", "2", "3"}

    def test_unknown_key_rejected_with_exit_1(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.cfg"
        cfg_path.write_text("w_x = 2\n")
        assert main(["run", "--config", str(cfg_path)]) == 1
        assert "w_x" in capsys.readouterr().err

    def test_missing_config_file(self, capsys):
        assert main(["run", "--config", "/nonexistent/x.cfg"]) == 1

    def test_invalid_value_combination_exit_1(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.cfg"
        cfg_path.write_text("mu = 0\n")
        assert main(["run", "--config", str(cfg_path)]) == 1
        assert "mu" in capsys.readouterr().err

    def test_bad_activation_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.cfg"
        cfg_path.write_text("model.activation = gelu\n")
        assert main(["run", "--config", str(cfg_path)]) == 1
        assert "gelu" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergent_run_recorded_exit_2(self, tmp_path, capsys):
        cfg_path = tmp_path / "exp.cfg"
        cfg_path.write_text(TINY + f"output_dir = {tmp_path / 'out'}\n")
        code = main(["run", "--config", str(cfg_path),
                     "--set", "algorithms=supervised_only,multimatch",
                     "--set", "seeds=0", "--set", "opt.lr=1e18"])
        assert code == 2
        assert "run failed" in capsys.readouterr().err

    def test_gamma_trace_emission(self, tmp_path):
        cfg_path = tmp_path / "exp.cfg"
        cfg_path.write_text(TINY + f"output_dir = {tmp_path / 'out'}\n"
                            "emit.gamma_trace = true\nalgorithms = multimatch\nseeds = 0\n")
        assert main(["run", "--config", str(cfg_path)]) == 0
        traces = list((tmp_path / "out").glob("gamma_trace_*.csv"))
        assert traces

    def test_decision_trace_emission(self, tmp_path):
        cfg_path = tmp_path / "exp.cfg"
        cfg_path.write_text(TINY + f"output_dir = {tmp_path / 'out'}\n"
                            "emit.decision_trace = true\nalgorithms = multimatch\nseeds = 0\n")
        assert main(["run", "--config", str(cfg_path)]) == 0
        trace = tmp_path / "out" / "decision_trace_multimatch_default_s0.csv"
        with open(trace) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "head", "sample_id", "category", "weight",
                           "pseudo_label", "true_label"]
        assert len(rows) > 1

    def test_checkpoint_emission(self, tmp_path):
        cfg_path = tmp_path / "exp.cfg"
        cfg_path.write_text(TINY + f"output_dir = {tmp_path / 'out'}\n"
                            "checkpoint.every = 1\nalgorithms = multimatch\nseeds = 0\n")
        assert main(["run", "--config", str(cfg_path)]) == 0
        assert (tmp_path / "out" / "checkpoint_multimatch_default_s0_epoch1.npz").exists()
        assert (tmp_path / "out" / "checkpoint_multimatch_default_s0_epoch2.npz").exists()


class TestRankCommand:
    def _write_results(self, path, rows):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["algorithm", "setup", "seed", "final_test_error"])
            writer.writerows(rows)

    def test_single_setup_equals_per_setup_ranks(self, tmp_path):
        res = tmp_path / "results.csv"
        self._write_results(res, [["A", "x", 0, 0.1], ["B", "x", 0, 0.2]])
        out = tmp_path / "ranked"
        assert main(["rank", "--inputs", str(res), "--out", str(out)]) == 0
        with open(out / "ranks.csv") as fh:
            rows = {r[0]: r for r in list(csv.reader(fh))[1:]}
        assert float(rows["A"][1]) == 1.0
        assert float(rows["B"][1]) == 2.0

    def test_merge_two_setups_hand_oracle(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        self._write_results(a, [["A", "x", 0, 1.0], ["B", "x", 0, 2.0], ["C", "x", 0, 3.0]])
        self._write_results(b, [["A", "y", 0, 3.0], ["B", "y", 0, 1.0], ["C", "y", 0, 2.0]])
        out = tmp_path / "ranked"
        assert main(["rank", "--inputs", str(a), str(b), "--out", str(out)]) == 0
        with open(out / "ranks.csv") as fh:
            rows = {r[0]: float(r[1]) for r in list(csv.reader(fh))[1:]}
        assert rows == {"A": 2.0, "B": 1.5, "C": 2.5}

    def test_idempotent(self, tmp_path):
        res = tmp_path / "results.csv"
        self._write_results(res, [["A", "x", 0, 0.1], ["B", "x", 0, 0.2]])
        out = tmp_path / "ranked"
        assert main(["rank", "--inputs", str(res), "--out", str(out)]) == 0
        first = (out / "ranks.csv").read_bytes()
        assert main(["rank", "--inputs", str(res), "--out", str(out)]) == 0
        assert (out / "ranks.csv").read_bytes() == first

    def test_mismatched_algorithm_sets_error(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        self._write_results(a, [["A", "x", 0, 1.0], ["B", "x", 0, 2.0]])
        self._write_results(b, [["A", "y", 0, 3.0]])
        assert main(["rank", "--inputs", str(a), str(b), "--out", str(tmp_path / "o")]) == 1


class TestByteDeterminism:
    def test_two_processes_identical_bytes(self, tmp_path):
        cfg_path = tmp_path / "exp.cfg"
        cfg_path.write_text(TINY)
        outs = []
        for name in ("out_a", "out_b"):
            out = tmp_path / name
            proc = subprocess.run(
                [sys.executable, "-m", "matchlab.cli", "run", "--config", str(cfg_path),
                 "--set", f"output_dir={out}", "--set", "algorithms=multimatch",
                 "--set", "seeds=0"],
                capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outs.append(out)
        for name in ("per_epoch.csv", "results.csv", "ranks.csv",
                     "maskrate_default.svg", "impurity_default.svg"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


class TestJobs:
    def test_parallel_equals_serial(self, tmp_path):
        cfg_path = tmp_path / "exp.cfg"
        cfg_path.write_text(TINY)
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        assert main(["run", "--config", str(cfg_path),
                     "--set", f"output_dir={serial}"]) == 0
        assert main(["run", "--config", str(cfg_path),
                     "--set", f"output_dir={parallel}", "--jobs", "2"]) == 0
        assert (serial / "results.csv").read_bytes() == (parallel / "results.csv").read_bytes()
