import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svcascade.errors import ValidationError
from svcascade.metrics import compute_eer
from svcascade.scoring import (
    aggregate_enrollment, cosine_score, load_scores, save_scores, score_trials)
from svcascade.synthcorpus import split_trials


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def test_aggregate_single_embedding_is_identity():
    e = unit([3.0, 4.0])
    assert np.allclose(aggregate_enrollment([e]), e)


def test_aggregate_two_axes_gives_diagonal():
    out = aggregate_enrollment([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    assert np.allclose(out, [1 / np.sqrt(2), 1 / np.sqrt(2)])


def test_aggregate_rejects_cancellation():
    e = unit([1.0, 2.0, -1.0])
    with pytest.raises(ValidationError, match="degenerate"):
        aggregate_enrollment([e, -e])


def test_aggregate_rejects_non_unit_input():
    with pytest.raises(ValidationError, match="unit-norm"):
        aggregate_enrollment([np.array([2.0, 0.0])])
    with pytest.raises(ValidationError):
        aggregate_enrollment([])


def test_aggregate_order_invariant():
    rng = np.random.default_rng(0)
    embs = [unit(rng.standard_normal(8)) for _ in range(5)]
    a = aggregate_enrollment(embs)
    b = aggregate_enrollment(embs[::-1])
    assert np.allclose(a, b, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6))
def test_aggregate_output_is_unit_norm(seed, count):
    rng = np.random.default_rng(seed)
    embs = [unit(rng.standard_normal(5)) for _ in range(count)]
    out = aggregate_enrollment(embs)
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)


def test_cosine_hand_case():
    a = np.array([0.6, 0.8])
    b = np.array([1.0, 0.0])
    assert cosine_score(a, b) == pytest.approx(0.6, abs=1e-12)


def test_cosine_symmetric_and_bounded():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = unit(rng.standard_normal(6))
        b = unit(rng.standard_normal(6))
        s = cosine_score(a, b)
        assert s == pytest.approx(cosine_score(b, a), abs=1e-15)
        assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12
    assert cosine_score(a, a) == pytest.approx(1.0, abs=1e-12)
    assert cosine_score(a, -a) == pytest.approx(-1.0, abs=1e-12)


def test_cosine_rejects_unnormalized():
    with pytest.raises(ValidationError):
        cosine_score(np.array([1.0, 1.0]), np.array([1.0, 0.0]))


def test_score_trials_order_and_labels(small_corpus, trained_models, scored_trials):
    trials = split_trials(small_corpus, 200, 200, 3, seed=11)
    assert [s.trial for s in scored_trials] == list(trials.trials)
    for s in scored_trials:
        assert -1.0 <= s.td_score <= 1.0
        assert -1.0 <= s.ti_score <= 1.0


def test_score_trials_ti_optional(small_corpus, trained_models):
    trials = split_trials(small_corpus, 20, 20, 3, seed=13)
    scored = score_trials(trained_models["td"], None, small_corpus, trials)
    assert all(s.ti_score is None for s in scored)


def test_trained_models_separate_speakers(scored_trials):
    td_tgt = [s.td_score for s in scored_trials if s.trial.is_target]
    td_non = [s.td_score for s in scored_trials if not s.trial.is_target]
    assert np.mean(td_tgt) > np.mean(td_non) + 0.2
    assert compute_eer(td_tgt, td_non).eer < 0.15
    ti_tgt = [s.ti_score for s in scored_trials if s.trial.is_target]
    ti_non = [s.ti_score for s in scored_trials if not s.trial.is_target]
    assert compute_eer(ti_tgt, ti_non).eer < 0.15


def test_scores_tsv_roundtrip(tmp_path, scored_trials):
    path = tmp_path / "scores.tsv"
    save_scores(str(path), scored_trials[:50])
    loaded = load_scores(str(path))
    assert len(loaded) == 50
    for a, b in zip(loaded, scored_trials):
        assert a.trial.is_target == b.trial.is_target
        assert a.td_score == pytest.approx(b.td_score, abs=1e-9)
        assert a.ti_score == pytest.approx(b.ti_score, abs=1e-9)


def test_scores_tsv_na_for_missing_ti(tmp_path, small_corpus, trained_models):
    trials = split_trials(small_corpus, 5, 5, 3, seed=17)
    scored = score_trials(trained_models["td"], None, small_corpus, trials)
    path = tmp_path / "scores.tsv"
    save_scores(str(path), scored)
    assert all(line.endswith("\tNA") for line in path.read_text().splitlines())
    assert all(s.ti_score is None for s in load_scores(str(path)))


def test_load_scores_rejects_malformed(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("a\tb\tmaybe\t0.5\t0.5\n")
    with pytest.raises(ValidationError, match="bad.tsv:1"):
        load_scores(str(path))
