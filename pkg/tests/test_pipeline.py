import json
import os

import numpy as np
import pytest

from affectfusion import cli, pipeline, study
from affectfusion.config import PipelineConfig, StudyConfig

SMALL = {"study": {"n_subjects": 3, "trials_per_class": 1, "trial_s": 60.0, "resting_s": 60.0},
         "model": {"n_permutations": 200, "random_draws": 5}}


def small_config(**changes):
    return PipelineConfig().replace(**SMALL).replace(**changes)


def tree(root):
    out = {}
    for base, _, files in os.walk(root):
        for f in files:
            path = os.path.join(base, f)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    pipeline.run_pipeline(small_config(), out_dir=out)
    return out


def test_study_is_deterministic():
    cfg = StudyConfig(n_subjects=2, trials_per_class=1, trial_s=40.0, resting_s=40.0)
    a, ta = study.generate_study(cfg, seed=3)
    b, tb = study.generate_study(cfg, seed=3)
    assert ta == tb
    for sa, sb in zip(a, b):
        for x, y in zip(sa.trials, sb.trials):
            assert x.valence_label == y.valence_label
            for k in x.traces:
                assert np.array_equal(x.traces[k].samples, y.traces[k].samples, equal_nan=True)
    c, _ = study.generate_study(cfg, seed=4)
    assert not np.array_equal(c[0].trials[0].traces["ecg"].samples,
                              a[0].trials[0].traces["ecg"].samples)


def test_study_layout():
    cfg = StudyConfig(n_subjects=2, trials_per_class=2, trial_s=40.0, resting_s=35.0)
    sessions, truth = study.generate_study(cfg, seed=0)
    assert [s.subject_id for s in sessions] == ["s01", "s02"]
    s = sessions[0]
    assert sorted(t.valence_label for t in s.trials) == ["negative"] * 2 + ["positive"] * 2
    assert all(t.resting is s.trials[0].resting for t in s.trials)
    assert s.trials[0].resting["eda"].duration_s == pytest.approx(35.0)
    assert set(s.trials[0].traces) == {"ecg", "eda", "resp", "landmarks"}
    assert set(truth["s01"]["trials"]) == {t.stimulus_id for t in s.trials}


def test_renewal_times_rate():
    rng = np.random.default_rng(0)
    t = study.renewal_times(60_000.0, 3.0, study.EVENT_SHAPE, rng)
    assert np.all(np.diff(t) > 0) and t[0] >= 0 and t[-1] < 60_000.0
    assert len(t) / 1000.0 == pytest.approx(3.0, rel=0.05)


def test_arousal_kernel_peak():
    u = np.linspace(-5, 200, 20_001)
    k = study.arousal_kernel(u)
    assert k.max() == pytest.approx(1.0, abs=1e-6)
    assert np.all(k[u <= 0] == 0)


def test_stage_outputs(artifacts):
    for stage in pipeline.STAGES[1:]:
        meta = json.loads((artifacts / stage / pipeline.STAGE_FILE).read_text())
        assert meta["stage"] == stage
    text = (artifacts / "report" / "classify.txt").read_text()
    for name in ("Face", "Head", "ECG", "EDA", "Resp", "Facial", "Physio", "Fusion", "Random"):
        assert name in text
    header = (artifacts / "report" / "regress.tsv").read_text().splitlines()[1]
    assert header.split("\t") == ["Modality", "RMSE", "MAE"]
    rows = (artifacts / "metrics" / "metrics.csv").read_text().splitlines()
    # 3 subjects x (2 trials + rest) x (5 modalities + joint)
    assert sum(1 for r in rows if not r.startswith("#")) == 1 + 3 * 3 * 6


def test_rerun_uses_cache(artifacts):
    logs = []
    pipeline.run_pipeline(small_config(), out_dir=artifacts, log=logs.append)
    assert logs == [f"{s}: cached" for s in pipeline.STAGES]


def test_model_change_reruns_only_downstream(tmp_path, artifacts):
    import shutil
    out = tmp_path / "copy"
    shutil.copytree(artifacts, out)
    logs = []
    pipeline.run_pipeline(small_config(model={"svm_C": 2.0}), out_dir=out, log=logs.append)
    assert logs[:5] == [f"{s}: cached" for s in pipeline.STAGES[:5]]
    assert logs[5:] == ["train: running", "report: running"]


def test_byte_identical_rerun(tmp_path, artifacts):
    pipeline.run_pipeline(small_config(), out_dir=tmp_path / "again")
    a, b = tree(artifacts), tree(tmp_path / "again")
    assert a.keys() == b.keys()
    assert all(a[k] == b[k] for k in a)


def test_external_data(tmp_path, artifacts):
    out = tmp_path / "ext"
    pipeline.run_pipeline(small_config(), data_root=artifacts / "data", out_dir=out,
                          until="featurize")
    assert (out / "featurize" / "s01").is_dir()
    assert not (out / "data").exists()


def test_unknown_stage(tmp_path):
    with pytest.raises(ValueError):
        pipeline.run_pipeline(small_config(), out_dir=tmp_path, until="dance")


def test_rest_names():
    names = pipeline.rest_names(["a", "b", "a"])
    assert len(set(names.values())) == 2


# --- cli -------------------------------------------------------------------

def write_config(tmp_path, data):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_cli_synth_then_cached(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL)
    out = str(tmp_path / "art")
    assert cli.main(["synth", "--config", cfg, "--out", out, "--quiet"]) == 0
    assert os.path.exists(os.path.join(out, "data", "s01", "manifest.json"))
    assert cli.main(["synth", "--config", cfg, "--out", out]) == 0
    assert "synth: cached" in capsys.readouterr().err


def test_cli_bad_config(tmp_path, capsys):
    cfg = write_config(tmp_path, {"embedding": {"m": 0}})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path)]) == cli.EXIT_CODES["config"]
    assert "embedding.m" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 3


def test_cli_missing_data(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    code = cli.main(["facefit", "--data", str(empty), "--out", str(tmp_path / "o"), "--quiet"])
    assert code in (cli.EXIT_CODES["ingest"], cli.EXIT_CODES["facefit"])


def test_cli_corrupt_file_exit_code(tmp_path, artifacts, capsys):
    import shutil
    data = tmp_path / "data"
    shutil.copytree(artifacts / "data", data)
    (data / "s02" / "v1_eda.csv").write_text("time_s,eda\n0,abc\n")
    code = cli.main(["featurize", "--data", str(data), "--out", str(tmp_path / "o"), "--quiet"])
    assert code == cli.EXIT_CODES["ingest"]
    err = capsys.readouterr().err
    assert "s02" in err and "v1_eda.csv" in err


def test_cli_usage_errors():
    with pytest.raises(SystemExit) as exc:
        cli.main(["fly"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        cli.main(["run", "--jobs", "0"])
