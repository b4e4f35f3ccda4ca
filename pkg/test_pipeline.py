"""
Сквозные тесты пайплайна IFCDA

Синтетические домены пишутся на диск, читаются загрузчиком и проходят
полный цикл: граф -> распространение -> фильтр -> проекции -> метрики -> отчёт.
"""

import numpy as np
import pandas as pd
import pytest

from src.cli import main
from src.pipeline import (
    AdaptationConfig,
    compute_metrics,
    load_features,
    predict_hard,
    run_ifcda,
)
from src.pipeline.dataset import SyntheticSpec, make_synthetic, save_features
from src.pipeline.experiment import ExperimentRunner, load_experiment_config, run_experiment
from src.presets import PRESETS, get_preset

SPEC = SyntheticSpec(
    class_count=3,
    dimension=6,
    source_samples_per_class=20,
    target_samples_per_class=20,
    cluster_spread=3.0,
    seed=7,
)


@pytest.fixture
def domain_files(tmp_path):
    source, target = make_synthetic(SPEC)
    save_features(source, tmp_path / "source.csv")
    save_features(target, tmp_path / "target.csv")
    save_features(source, tmp_path / "source.bin", "raw")
    save_features(target, tmp_path / "target.bin", "raw")
    return source, target


def test_components_in_sequence(domain_files, tmp_path):
    source = load_features(tmp_path / "source.csv")
    target = load_features(tmp_path / "target.csv")
    assert source.size == 60 and source.dimension == 6

    cfg = AdaptationConfig(k=3, p=8, T=2, gamma=0.1, beta=1.0, lambda_=0.1, delta=1.0)
    result = run_ifcda(source, target, cfg)
    predictions = predict_hard(result.target_labels, "csda")
    report = compute_metrics(predictions, target.labels, 3, "csda")

    assert predictions.shape == (60,)
    assert set(np.unique(predictions)) <= {1, 2, 3}
    assert 0.0 <= report.accuracy <= 1.0
    assert result.stats["eigensolves"] == 2


def test_csv_and_raw_inputs_agree(domain_files, tmp_path, settings):
    common = "k = 3\np = 8\nT = 1\nstandardize = false\n"
    csv_cfg = tmp_path / "csv.cfg"
    csv_cfg.write_text("name = csv\nsource = source.csv\ntarget = target.csv\n" + common)
    raw_cfg = tmp_path / "raw.cfg"
    raw_cfg.write_text("name = raw\nformat = raw\nsource = source.bin\ntarget = target.bin\n" + common)

    from_csv = run_experiment(csv_cfg, settings).records[0]
    from_raw = run_experiment(raw_cfg, settings).records[0]
    np.testing.assert_array_equal(from_csv.predictions, from_raw.predictions)
    assert from_csv.report.accuracy == from_raw.report.accuracy


def test_neighbour_sweep_over_n(tmp_path, settings):
    cfg_path = tmp_path / "n.cfg"
    cfg_path.write_text(
        "name = nsweep\nk = 2\np = 6\nT = 1\n"
        "synthetic.class_count = 3\nsynthetic.dimension = 4\n"
        "synthetic.source_samples_per_class = 10\nsynthetic.target_samples_per_class = 10\n"
        "sweep.N = 1, 2, 3, 4, 5, 6, 7, 8, 9, all\n"
    )
    outcome = run_experiment(cfg_path, settings)

    frame = pd.read_csv(settings.app.out_dir / "nsweep_sweep_N.csv", dtype={"N": str})
    assert list(frame["N"]) == ["1", "2", "3", "4", "5", "6", "7", "8", "9", "all"]
    assert frame["accuracy"].between(0.0, 1.0).all()
    assert len(outcome.records) == 10


def test_label_mode_sweep(tmp_path, settings):
    cfg_path = tmp_path / "modes.cfg"
    cfg_path.write_text(
        "name = modes\nk = 3\np = 8\nT = 2\n"
        "synthetic.class_count = 3\nsynthetic.dimension = 6\nsynthetic.seed = 11\n"
        "synthetic.source_samples_per_class = 15\nsynthetic.target_samples_per_class = 15\n"
    )
    cfg = load_experiment_config(cfg_path)
    table = ExperimentRunner(settings).sweep("label_mode", ["filtered", "soft", "hard"], cfg)

    assert [r.adaptation.label_mode for r in table.records] == ["filtered", "soft", "hard"]
    hard = table.records[2].result.target_labels.probs
    assert set(np.unique(hard)) <= {0.0, 1.0}


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_are_valid_configs(name):
    params = get_preset(name)
    cfg = AdaptationConfig(**params)
    assert cfg.T == 5 and cfg.p == 20 and cfg.N == 3 and cfg.tau == 0.8
    assert cfg.tied == (cfg.scenario == "osda")


def test_open_set_run_through_cli(tmp_path, monkeypatch):
    monkeypatch.setenv("IFCDA_PROGRESS", "false")
    cfg_path = tmp_path / "osda.cfg"
    cfg_path.write_text(
        "name = osda\nscenario = osda\nalpha_set = 0.95\nk = 3\np = 8\nT = 2\n"
        "synthetic.class_count = 3\nsynthetic.novel_class_count = 1\nsynthetic.dimension = 6\n"
        "synthetic.source_samples_per_class = 15\nsynthetic.target_samples_per_class = 15\n"
    )
    out = tmp_path / "out"
    assert main(["run", str(cfg_path), "--out", str(out), "--seed", "3"]) == 0

    report = (out / "osda" / "report.txt").read_text()
    fields = dict(line.split(" = ", 1) for line in report.splitlines()[1:])
    assert fields["param.seed"] == "3"
    assert fields["param.tied"] == "true"
    assert fields["n_target"] == "60"
    os_, os_star, unk = (float(fields[key]) for key in ("OS", "OS_star", "UNK"))
    assert os_ == pytest.approx((3 * os_star + unk) / 4, abs=1e-9)

    predictions = pd.read_csv(out / "osda" / "predictions.csv")
    assert predictions["predicted"].between(1, 4).all()


def test_repeated_cli_runs_are_identical(tmp_path, monkeypatch):
    monkeypatch.setenv("IFCDA_PROGRESS", "false")
    cfg_path = tmp_path / "det.cfg"
    cfg_path.write_text(
        "name = det\nk = 2\np = 6\nT = 2\n"
        "synthetic.class_count = 2\nsynthetic.dimension = 5\n"
        "synthetic.source_samples_per_class = 12\nsynthetic.target_samples_per_class = 12\n"
    )
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg_path), "--out", str(first)]) == 0
    assert main(["run", str(cfg_path), "--out", str(second)]) == 0
    for artifact in ("report.txt", "trajectory.csv", "predictions.csv"):
        assert (first / "det" / artifact).read_bytes() == (second / "det" / artifact).read_bytes()
