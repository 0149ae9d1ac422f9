"""Harness: confusion matrices, reports, experiment protocol, emission, CLI."""

import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from seabedbench.bench import (
    BenchError,
    ConfusionMatrix,
    Report,
    confusion,
    emit_report,
    run_experiment,
    snr_sweep,
)
from seabedbench.cli import main as cli_main
from seabedbench.environments import parse_config_text, with_seed

TINY_LOWFREQ = """
[experiment]
pipeline = lowfreq
master_seed = 11
output_dir = {out}

[data]
train_count_per_class = 20
test_count_per_class = 8
test_sets = 1,2
train_snr_db = 18
test_snr_db = 18
noise_realizations = 2

[classifiers]
use = mfp,nc,lr
"""


def tiny_config(tmp_path, text=TINY_LOWFREQ, **kwargs):
    return parse_config_text(text.format(out=tmp_path / "out"), **kwargs)


class TestConfusion:
    def test_all_correct_is_diagonal(self):
        cm = confusion([0, 1, 2, 3, 1], [0, 1, 2, 3, 1])
        assert np.array_equal(cm.counts, np.diag([1, 2, 1, 1]))
        assert cm.accuracy == 1.0

    def test_constant_prediction_single_column(self):
        cm = confusion([0, 1, 2, 3], [0, 0, 0, 0])
        assert np.array_equal(cm.counts.sum(axis=0), [4, 0, 0, 0])

    def test_hand_built_case(self):
        true = [0, 0, 1, 1, 2, 3, 3, 3]
        pred = [0, 1, 1, 1, 3, 3, 2, 3]
        cm = confusion(true, pred)
        expected = np.zeros((4, 4), dtype=int)
        expected[0, 0] = 1; expected[0, 1] = 1
        expected[1, 1] = 2
        expected[2, 3] = 1
        expected[3, 3] = 2; expected[3, 2] = 1
        assert np.array_equal(cm.counts, expected)
        assert cm.accuracy == pytest.approx(5 / 8)

    def test_row_sums_match_per_class_counts(self):
        rng = np.random.default_rng(0)
        true = rng.integers(0, 4, 200)
        pred = rng.integers(0, 4, 200)
        cm = confusion(true, pred)
        assert np.array_equal(cm.counts.sum(axis=1), np.bincount(true, minlength=4))
        rates = cm.row_rates()
        assert np.allclose(rates.sum(axis=1), 1.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion([0, 1], [0])


@pytest.mark.slow
class TestRunExperiment:
    @pytest.fixture(scope="class")
    def run(self, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("bench")
        config = tiny_config(tmp)
        return config, run_experiment(config)

    def test_all_classifiers_above_chance(self, run):
        _, report = run
        for name, entry in report.classifiers.items():
            assert entry["accuracy_mean"] >= 0.25, name

    def test_confusion_row_sums(self, run):
        config, report = run
        expected = config.test_count_per_class * config.noise_realizations
        for entry in report.classifiers.values():
            for counts in entry["per_set"].values():
                assert np.asarray(counts).sum(axis=1).tolist() == [expected] * 4

    def test_payload_round_trip_recomputes_accuracy(self, run):
        _, report = run
        back = Report.from_json(report.payload())
        for name in report.classifiers:
            assert back.classifiers[name]["accuracy_mean"] == pytest.approx(
                report.classifiers[name]["accuracy_mean"])

    def test_determinism_byte_identical(self, run, tmp_path):
        config, report = run
        again = run_experiment(config)   # cached datasets, deterministic fits
        assert again.payload() == report.payload()

    def test_determinism_across_worker_count(self, run):
        from dataclasses import replace
        config, report = run
        again = run_experiment(replace(config, workers=2))
        assert again.payload() == report.payload()

    def test_reseeded_run_differs(self, run, tmp_path):
        config, report = run
        other = run_experiment(with_seed(config, 999))
        assert other.payload() != report.payload()

    def test_training_set_overlap_rejected(self, tmp_path):
        config = tiny_config(tmp_path)
        object.__setattr__(config, "test_sets", (1, 2))
        bad = with_seed(config, 1)
        # sets are ids 1..10 so 'training' can never collide; simulate misuse
        from dataclasses import replace
        with pytest.raises(Exception):
            run_experiment(replace(bad, test_sets=(77,)))

    def test_mfp_perfect_on_noise_free_training_environments(self):
        from seabedbench.classifiers import fit, predict_dataset
        from seabedbench.datasets import generate_lowfreq_dataset
        clean = generate_lowfreq_dataset("training", 3, None, master_seed=0)
        model, _ = fit("mfp", clean)
        assert np.array_equal(predict_dataset(model, clean), clean.labels)


@pytest.mark.slow
class TestSnrSweep:
    def test_high_snr_approaches_noise_free(self, tmp_path):
        config = tiny_config(tmp_path, TINY_LOWFREQ.replace("use = mfp,nc,lr", "use = mfp,nc"))
        report = snr_sweep(config, [100.0])
        noise_free = snr_sweep(config, [None])
        for row, row0 in zip(report.snr_table, noise_free.snr_table):
            assert abs(row["mean_accuracy"] - row0["mean_accuracy"]) <= 0.01

    def test_heavy_noise_approaches_chance(self, tmp_path):
        text = TINY_LOWFREQ.replace("test_count_per_class = 8", "test_count_per_class = 25")
        text = text.replace("test_sets = 1,2", "test_sets = 1,2,3,4,5")
        text = text.replace("use = mfp,nc,lr", "use = mfp,nc")
        config = tiny_config(tmp_path, text)
        report = snr_sweep(config, [-20.0])
        for row in report.snr_table:
            assert row["mean_accuracy"] == pytest.approx(0.25, abs=0.10)


class TestEmitReport:
    def _fake_report(self):
        counts = [[10, 2, 0, 0], [1, 11, 0, 0], [0, 0, 12, 0], [0, 0, 3, 9]]
        return Report(
            config_echo={"pipeline": "lowfreq"},
            master_seed=3,
            classifiers={"nc": {"hyper": {}, "per_set": {"1": counts},
                                "accuracy_mean": 42 / 48}},
            snr_table=[{"classifier": "nc", "snr_db": s, "mean_accuracy": a}
                       for s, a in ((0.0, 0.3), (9.0, 0.6), (18.0, 0.9))],
            loss_history_files={},
        )

    def test_csv_round_trip(self, tmp_path):
        report = self._fake_report()
        emit_report(report, tmp_path)
        lines = (tmp_path / "confusion_nc_set1.csv").read_text().strip().splitlines()
        rows = [list(map(int, line.split(",")[1:])) for line in lines[1:]]
        assert rows == report.classifiers["nc"]["per_set"]["1"]

    def test_svg_parses_and_has_lines(self, tmp_path):
        report = self._fake_report()
        emit_report(report, tmp_path)
        sweep = ET.parse(tmp_path / "accuracy_vs_snr.svg").getroot()
        assert sweep.tag.endswith("svg")
        polylines = [el for el in sweep.iter() if el.tag.endswith("polyline")]
        assert len(polylines) == 1
        heat = ET.parse(tmp_path / "confusion_nc.svg").getroot()
        rects = [el for el in heat.iter() if el.tag.endswith("rect")]
        assert len(rects) == 17   # 16 cells + background

    def test_file_count(self, tmp_path):
        written = emit_report(self._fake_report(), tmp_path)
        names = {p.name for p in written}
        assert {"report.json", "timings.json", "confusion_nc_set1.csv",
                "snr_sweep.csv", "accuracy_vs_snr.svg", "confusion_nc.svg"} <= names


CLI_CONFIG = """
[experiment]
pipeline = lowfreq
master_seed = 5
output_dir = {out}

[data]
train_count_per_class = 10
test_count_per_class = 4
test_sets = 1
train_snr_db = 18
test_snr_db = 18
noise_realizations = 1

[classifiers]
use = mfp,nc
"""


@pytest.mark.slow
class TestCli:
    def test_catalog_dump(self, capsys):
        assert cli_main(["catalog", "dump"]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "pipeline,set,class,parameter,value"
        assert "lowfreq,1,clay,sediment_speed_m_s,1517" in out

    def test_modes_solve(self, capsys):
        assert cli_main(["modes", "solve", "--class", "clay", "--env", "training"]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "mode,re_k_per_m,im_k_per_m,phase_speed_m_s"
        assert len(out.splitlines()) > 10

    def test_gen_train_predict_cycle(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(CLI_CONFIG.format(out=tmp_path / "out"))
        data_dir = tmp_path / "data"
        assert cli_main(["gen", "lowfreq", "--config", str(cfg), "--out", str(data_dir)]) == 0
        assert (data_dir / "training.sbds").exists()
        assert (data_dir / "test_1.sbds").exists()
        model_path = tmp_path / "nc.npz"
        assert cli_main(["train", "--variant", "nc", "--data", str(data_dir),
                         "--out", str(model_path)]) == 0
        assert model_path.exists()
        assert cli_main(["predict", "--model", str(model_path),
                         "--data", str(data_dir / "test_1.sbds"),
                         "--out", str(tmp_path / "pred.csv")]) == 0
        lines = (tmp_path / "pred.csv").read_text().strip().splitlines()
        assert lines[0] == "index,true_label,predicted"
        assert len(lines) == 17

    def test_bench_run_and_exit_codes(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(CLI_CONFIG.format(out=tmp_path / "out"))
        assert cli_main(["bench", "run", "--config", str(cfg)]) == 0
        assert (tmp_path / "out" / "report.json").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(CLI_CONFIG.format(out=tmp_path).replace("test_sets = 1", "test_sets = 42"))
        assert cli_main(["bench", "run", "--config", str(cfg)]) == 2

    def test_generation_error_exit_code(self, tmp_path):
        template = tmp_path / "bad_template.cfg"
        template.write_text("""[template]
top_speed = 1500
top_density = 1500
top_thickness = 0.02
bottom_speed = 5250
bottom_density = 2700
rms_height = 0.02
corr_length = 0.1
seed = 1
""")
        code = cli_main(["scatter", "solve", "--template", str(template),
                         "--out", str(tmp_path / "f.sbf"), "--npw", "8"])
        assert code == 3

    def test_training_error_exit_code(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(CLI_CONFIG.format(out=tmp_path / "out")
                       + "\n[classifier.lr]\nlearning_rate = 1e308\n")
        data_dir = tmp_path / "data"
        assert cli_main(["gen", "lowfreq", "--config", str(cfg), "--out", str(data_dir)]) == 0
        code = cli_main(["train", "--variant", "lr", "--data", str(data_dir),
                         "--out", str(tmp_path / "m.npz"), "--config", str(cfg)])
        assert code == 4

    def test_scatter_solve_and_backscatter_csv(self, tmp_path, capsys):
        template = tmp_path / "template.cfg"
        template.write_text("""[template]
top_speed = 1650
top_density = 1900
top_thickness = 0.5
bottom_speed = 5250
bottom_density = 2700
rms_height = 0.005
corr_length = 0.02
seed = 3
""")
        out = tmp_path / "field.sbf"
        csv = tmp_path / "signal.csv"
        assert cli_main(["scatter", "solve", "--template", str(template),
                         "--out", str(out), "--npw", "8",
                         "--backscatter-csv", str(csv), "--n-points", "16"]) == 0
        assert out.exists()
        assert len(csv.read_text().strip().splitlines()) == 17
        from seabedbench.scattering import FieldSolution
        solution = FieldSolution.load(out)
        assert solution.values.shape[0] == solution.x.size
