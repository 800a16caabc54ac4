import csv
import os

import pytest

from svcascade import cli
from svcascade.config import parse_config
from svcascade.errors import ValidationError
from svcascade.triage import TriagePolicy


def write_config(path, workdir, **overrides):
    """A deliberately tiny experiment so the whole pipeline runs in seconds."""
    values = {
        "paths.corpus_dir": os.path.join(workdir, "corpus"),
        "paths.checkpoint_dir": os.path.join(workdir, "checkpoints"),
        "paths.score_dir": os.path.join(workdir, "scores"),
        "paths.report_dir": os.path.join(workdir, "reports"),
        "corpus.languages": "2",
        "corpus.speakers_per_language": "5",
        "corpus.utterances_per_speaker": "5",
        "corpus.keyword_frames": "8",
        "corpus.query_frames": "16",
        "corpus.utterance_noise_scale": "0.5",
        "trials.targets": "40",
        "trials.nontargets": "40",
        "train.td.steps": "40",
        "train.ti.steps": "40",
        "fusion.grid_step": "0.25",
        "triage.band_step": "0.5",
    }
    values.update(overrides)
    with open(path, "w") as f:
        f.write("# desk-scale smoke experiment\n")
        for k, v in values.items():
            f.write(f"{k} = {v}\n")
    return path


def test_defaults_from_empty_file(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("# nothing here\n\n")
    cfg = parse_config(str(path))
    assert cfg.corpus_spec.languages == 4
    assert cfg.corpus_spec.feature_dim == 16
    assert cfg.td_network.cells == 16 and cfg.ti_network.cells == 32
    assert cfg.td_train.seed == 1 and cfg.ti_train.seed == 2
    assert cfg.triage_lower == 0.23 and cfg.triage_upper == 0.65
    assert cfg.triage_alpha == "sweep" and cfg.fixed_alpha() is None
    assert cfg.priors == [0.0, 0.5, 1.0]
    assert cfg.keyword_seconds == 0.7 and cfg.query_seconds == 3.0
    # the defaults form a valid triage policy once an alpha is known
    TriagePolicy(cfg.triage_lower, cfg.triage_upper,
                 cli.FusionWeight(0.5)).validate()


def test_seed_override_shifts_all_seeds(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("")
    cfg = parse_config(str(path), seed_override=42)
    assert cfg.corpus_spec.seed == 42
    assert cfg.trial_seed == 142
    assert cfg.td_train.seed == 43
    assert cfg.ti_train.seed == 44


def test_fixed_alpha_parsed(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("triage.alpha = 0.3\n")
    assert parse_config(str(path)).fixed_alpha().alpha == 0.3
    path.write_text("triage.alpha = nonsense\n")
    with pytest.raises(ValidationError, match="triage.alpha"):
        parse_config(str(path))


def test_band_order_validated(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("triage.lower = 0.8\ntriage.upper = 0.2\n")
    with pytest.raises(ValidationError, match="lower"):
        parse_config(str(path))


def test_unknown_key_reports_line_number(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("corpus.languages = 2\ncorpus.bogus = 1\n")
    with pytest.raises(ValidationError, match=r"c.cfg:2.*bogus"):
        parse_config(str(path))


def test_duplicate_key_reports_line_number(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("corpus.seed = 1\n\ncorpus.seed = 2\n")
    with pytest.raises(ValidationError, match=r"c.cfg:3.*duplicate"):
        parse_config(str(path))


def test_bad_value_names_key(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("corpus.languages = 0\n")
    with pytest.raises(ValidationError, match="corpus.languages"):
        parse_config(str(path))


def test_missing_config_file():
    assert cli.run("gen-data", "/nonexistent/x.cfg") == 1


def test_dependency_errors_in_order(tmp_path, capsys):
    cfg_path = write_config(tmp_path / "exp.cfg", str(tmp_path))
    for command, missing in (("train", "gen-data"), ("score", "gen-data"),
                             ("fuse-sweep", "score"), ("triage-apply", "score"),
                             ("report", "score")):
        assert cli.run(command, str(cfg_path)) == 2
        assert missing in capsys.readouterr().err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    workdir = str(tmp_path_factory.mktemp("pipeline"))
    cfg_path = write_config(os.path.join(workdir, "exp.cfg"), workdir)
    for command in ("gen-data", "train", "score", "fuse-sweep",
                    "triage-sweep", "triage-apply", "eval", "report"):
        assert cli.main([command, "--config", cfg_path]) == 0
    return workdir


def test_pipeline_artifacts_exist(pipeline):
    expected = [
        "corpus/corpus.meta", "corpus/trials.tsv", "corpus/trials_lang0.tsv",
        "corpus/trials_lang1.tsv", "checkpoints/td.ckpt", "checkpoints/ti.ckpt",
        "checkpoints/loss_td.csv", "checkpoints/loss_ti.csv",
        "scores/scores.tsv", "scores/triaged.tsv", "reports/fusion_sweep.csv",
        "reports/heatmap.csv", "reports/prior_curve.csv", "reports/eval.csv",
        "reports/report.txt",
    ]
    for rel in expected:
        assert os.path.exists(os.path.join(pipeline, rel)), rel


def test_report_fields(pipeline):
    text = open(os.path.join(pipeline, "reports/report.txt")).read()
    fields = dict(line.split("=") for line in text.strip().splitlines())
    for key in ("eer_td", "eer_ti", "alpha", "eer_fused", "band_lower",
                "band_upper", "eer", "trigger_rate",
                "expected_latency_seconds", "expected_flops"):
        assert key in fields, key
    rate = float(fields["trigger_rate"])
    assert 0.0 <= rate <= 1.0
    assert float(fields["expected_latency_seconds"]) == pytest.approx(
        0.7 + rate * 3.0, abs=1e-6)
    assert float(fields["eer"]) <= float(fields["eer_td"]) + 1e-9


def test_eval_csv_has_both_systems(pipeline):
    with open(os.path.join(pipeline, "reports/eval.csv"), newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["system", "eer_percent", "threshold", "targets", "nontargets"]
    assert [r[0] for r in rows[1:]] == ["td", "ti"]
    assert rows[1][3] == "80" and rows[1][4] == "80"  # pooled over 2 languages


def test_triaged_tsv_shape(pipeline):
    lines = open(os.path.join(pipeline, "scores/triaged.tsv")).read().splitlines()
    assert len(lines) == 160
    for line in lines:
        parts = line.split("\t")
        assert len(parts) == 5 and parts[4] in ("0", "1")


def test_gen_data_idempotent(pipeline, tmp_path):
    src = os.path.join(pipeline, "corpus")
    before = {f: open(os.path.join(src, f), "rb").read() for f in os.listdir(src)}
    cfg_path = write_config(tmp_path / "again.cfg", pipeline)
    assert cli.run("gen-data", str(cfg_path)) == 0
    after = {f: open(os.path.join(src, f), "rb").read() for f in os.listdir(src)}
    assert before == after


def test_xeval_matrix(tmp_path):
    workdir = str(tmp_path)
    cfg_path = write_config(os.path.join(workdir, "exp.cfg"), workdir,
                            **{"train.td.steps": "20", "train.ti.steps": "20"})
    assert cli.run("gen-data", cfg_path) == 0
    assert cli.run("xeval", cfg_path) == 0
    with open(os.path.join(workdir, "reports/xeval_matrix.csv"), newline="") as f:
        rows = list(csv.reader(f))
    assert len(rows) == 1 + 2 * 2 * 2  # (2 mono models x 2 langs) x 2 systems
    for lang in (0, 1):
        assert os.path.exists(os.path.join(workdir, f"checkpoints/td_mono{lang}.ckpt"))
        assert os.path.exists(os.path.join(workdir, f"checkpoints/ti_mono{lang}.ckpt"))
