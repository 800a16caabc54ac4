"""Enrollment aggregation and cosine trial scoring.

TD scores come from keyword segments only; TI scores from the keyword and
query segments concatenated (keyword first).  Enrollment embeddings are
averaged per speaker and renormalized; a zero-mean enrollment is an error
rather than a silent fallback.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dvector
from .errors import ValidationError
from .synthcorpus import Corpus, Trial, TrialList

NORM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    td_embedding: np.ndarray
    ti_embedding: np.ndarray
    enrollment_utterance_ids: tuple[str, ...]


@dataclass(frozen=True)
class ScoredTrial:
    trial: Trial
    td_score: float
    ti_score: float | None = None


def _check_unit(vec: np.ndarray, what: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(vec)
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise ValidationError(f"{what} must be unit-norm (norm={norm!r})")
    return vec


def aggregate_enrollment(embeddings) -> np.ndarray:
    """L2-normalized arithmetic mean of unit-norm enrollment embeddings."""
    if len(embeddings) == 0:
        raise ValidationError("enrollment needs at least one embedding")
    vecs = [_check_unit(e, "enrollment embedding") for e in embeddings]
    mean = np.mean(vecs, axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-10:
        raise ValidationError("degenerate enrollment: embeddings cancel to the zero vector")
    return mean / norm


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    a = _check_unit(a, "embedding")
    b = _check_unit(b, "embedding")
    return float(a @ b)


def _ti_frames(utt) -> np.ndarray:
    return np.concatenate([utt.keyword, utt.query], axis=0)


def score_trials(td_params: dvector.Parameters, ti_params: dvector.Parameters | None,
                 corpus: Corpus, trials: TrialList) -> list[ScoredTrial]:
    """Scores every trial; TI scores are omitted when ti_params is None.

    Embeddings are computed once per utterance and enrollment profiles once
    per (speaker, enrollment set); output order matches trial order.
    """
    td_cache: dict[str, np.ndarray] = {}
    ti_cache: dict[str, np.ndarray] = {}
    profile_cache: dict[tuple, tuple[np.ndarray, np.ndarray | None]] = {}

    def td_embed(uid: str) -> np.ndarray:
        if uid not in td_cache:
            td_cache[uid] = dvector.forward_embedding(td_params, corpus.get(uid).keyword)
        return td_cache[uid]

    def ti_embed(uid: str) -> np.ndarray:
        if uid not in ti_cache:
            ti_cache[uid] = dvector.forward_embedding(ti_params, _ti_frames(corpus.get(uid)))
        return ti_cache[uid]

    scored: list[ScoredTrial] = []
    for trial in trials:
        key = (trial.enroll_speaker_id, trial.enroll_utterance_ids)
        if key not in profile_cache:
            td_profile = aggregate_enrollment([td_embed(u) for u in trial.enroll_utterance_ids])
            ti_profile = None
            if ti_params is not None:
                ti_profile = aggregate_enrollment([ti_embed(u) for u in trial.enroll_utterance_ids])
            profile_cache[key] = (td_profile, ti_profile)
        td_profile, ti_profile = profile_cache[key]
        td = cosine_score(td_profile, td_embed(trial.test_utterance_id))
        ti = None
        if ti_profile is not None:
            ti = cosine_score(ti_profile, ti_embed(trial.test_utterance_id))
        scored.append(ScoredTrial(trial=trial, td_score=td, ti_score=ti))
    return scored


def save_scores(path: str, scored: list[ScoredTrial]) -> None:
    """TSV: enroll_speaker, test_utt, label, td_score, ti_score with fixed
    9-decimal formatting for bit-reproducible reports."""
    with open(path, "w") as f:
        for s in scored:
            label = "tgt" if s.trial.is_target else "non"
            ti = "%.9f" % s.ti_score if s.ti_score is not None else "NA"
            f.write(f"{s.trial.enroll_speaker_id}\t{s.trial.test_utterance_id}\t"
                    f"{label}\t{'%.9f' % s.td_score}\t{ti}\n")


def load_scores(path: str) -> list[ScoredTrial]:
    scored = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5 or parts[2] not in ("tgt", "non"):
                raise ValidationError(f"{path}:{lineno}: malformed score line")
            trial = Trial(parts[0], (), parts[1], parts[2] == "tgt")
            ti = None if parts[4] == "NA" else float(parts[4])
            scored.append(ScoredTrial(trial=trial, td_score=float(parts[3]), ti_score=ti))
    return scored
