"""Deterministic synthetic multilingual corpus of keyword+query feature sequences.

Generative model: each language gets an isotropic Gaussian shift vector, each
speaker a Gaussian voice vector centered on its language shift, and each frame
is voice vector + sinusoidal content trajectory + white noise.  Keyword
segments share one sinusoid bank across all speakers (per-utterance random
phase); query segments draw per-utterance random frequencies.  Cycle counts
are integers, so the content sums to zero over a segment and the mean frame
of a noise-free utterance is exactly the speaker voice vector.

All randomness comes from numpy's PCG64 generator seeded explicitly; draw
order is fixed (languages, then speakers, then utterances) so equal
(spec, seed) reproduces equal bytes.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ValidationError

CONTENT_AMPLITUDE = 1.0


@dataclass(frozen=True)
class CorpusSpec:
    languages: int = 4
    speakers_per_language: int = 8
    utterances_per_speaker: int = 6
    keyword_frames: int = 10
    query_frames: int = 30
    feature_dim: int = 16
    language_shift_scale: float = 1.0
    speaker_scale: float = 1.0
    utterance_noise_scale: float = 0.3
    seed: int = 0
    # language id -> utterances per speaker, to mimic uneven per-language data
    utterance_overrides: dict[int, int] = field(default_factory=dict)

    def validate(self) -> None:
        counts = {
            "languages": self.languages,
            "speakers_per_language": self.speakers_per_language,
            "utterances_per_speaker": self.utterances_per_speaker,
            "keyword_frames": self.keyword_frames,
            "query_frames": self.query_frames,
            "feature_dim": self.feature_dim,
        }
        for name, value in counts.items():
            if int(value) != value or value < 1:
                raise ValidationError(f"corpus spec: {name} must be a count >= 1, got {value}")
        scales = {
            "language_shift_scale": self.language_shift_scale,
            "speaker_scale": self.speaker_scale,
            "utterance_noise_scale": self.utterance_noise_scale,
        }
        for name, value in scales.items():
            if not np.isfinite(value) or value < 0:
                raise ValidationError(f"corpus spec: {name} must be a nonnegative real, got {value}")
        for lang, count in self.utterance_overrides.items():
            if lang < 0 or lang >= self.languages:
                raise ValidationError(f"corpus spec: override for unknown language {lang}")
            if count < 1:
                raise ValidationError(f"corpus spec: override count for language {lang} must be >= 1")

    def utterances_for(self, language: int) -> int:
        return self.utterance_overrides.get(language, self.utterances_per_speaker)


@dataclass(frozen=True)
class Utterance:
    utterance_id: str
    speaker_id: str
    language_id: int
    keyword: np.ndarray  # (keyword_frames, feature_dim) float32
    query: np.ndarray  # (query_frames, feature_dim) float32


@dataclass
class Corpus:
    spec: CorpusSpec
    utterances: list[Utterance]
    # speaker_id -> raw voice vector; diagnostic only, not persisted
    voice_vectors: dict[str, np.ndarray] | None = None

    def __post_init__(self) -> None:
        self._by_id = {u.utterance_id: u for u in self.utterances}

    def get(self, utterance_id: str) -> Utterance:
        try:
            return self._by_id[utterance_id]
        except KeyError:
            raise ValidationError(f"unknown utterance id {utterance_id!r}") from None

    def speakers(self) -> list[str]:
        seen: dict[str, None] = {}
        for u in self.utterances:
            seen.setdefault(u.speaker_id, None)
        return list(seen)

    def by_speaker(self) -> dict[str, list[Utterance]]:
        out: dict[str, list[Utterance]] = {}
        for u in self.utterances:
            out.setdefault(u.speaker_id, []).append(u)
        return out

    def languages(self) -> list[int]:
        return sorted({u.language_id for u in self.utterances})


@dataclass(frozen=True)
class Trial:
    enroll_speaker_id: str
    enroll_utterance_ids: tuple[str, ...]
    test_utterance_id: str
    is_target: bool


@dataclass
class TrialList:
    trials: list[Trial]

    def __iter__(self):
        return iter(self.trials)

    def __len__(self) -> int:
        return len(self.trials)


def speaker_id(language: int, speaker: int) -> str:
    return f"l{language}s{speaker}"


def utterance_id(language: int, speaker: int, utterance: int) -> str:
    return f"l{language}s{speaker}u{utterance}"


def _segment(rng: np.random.Generator, voice: np.ndarray, frames: int, dim: int,
             cycles: np.ndarray, noise_scale: float) -> np.ndarray:
    phases = rng.uniform(0.0, 2.0 * np.pi, size=dim)
    t = np.arange(frames)[:, None]
    content = CONTENT_AMPLITUDE * np.sin(2.0 * np.pi * cycles[None, :] * t / frames + phases[None, :])
    noise = rng.standard_normal((frames, dim)) * noise_scale
    return (voice[None, :] + content + noise).astype(np.float32)


def _keyword_cycles(frames: int, dim: int) -> np.ndarray:
    # shared bank: dimension d runs 1 + (d mod floor(frames/2)) full cycles
    kmax = max(1, frames // 2)
    return 1.0 + (np.arange(dim) % kmax)


def generate_corpus(spec: CorpusSpec) -> Corpus:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    dim = spec.feature_dim
    kw_cycles = _keyword_cycles(spec.keyword_frames, dim)
    q_kmax = max(2, spec.query_frames // 2)

    utterances: list[Utterance] = []
    voices: dict[str, np.ndarray] = {}
    for lang in range(spec.languages):
        shift = rng.standard_normal(dim) * spec.language_shift_scale
        n_utts = spec.utterances_for(lang)
        for spk in range(spec.speakers_per_language):
            voice = shift + rng.standard_normal(dim) * spec.speaker_scale
            sid = speaker_id(lang, spk)
            voices[sid] = voice
            for utt in range(n_utts):
                keyword = _segment(rng, voice, spec.keyword_frames, dim,
                                   kw_cycles, spec.utterance_noise_scale)
                q_cycles = rng.integers(1, q_kmax, size=dim).astype(float)
                query = _segment(rng, voice, spec.query_frames, dim,
                                 q_cycles, spec.utterance_noise_scale)
                utterances.append(Utterance(
                    utterance_id=utterance_id(lang, spk, utt),
                    speaker_id=sid,
                    language_id=lang,
                    keyword=keyword,
                    query=query,
                ))
    return Corpus(spec=spec, utterances=utterances, voice_vectors=voices)


def split_trials(corpus: Corpus, target_trials: int, nontarget_trials: int,
                 enroll_utterances_per_speaker: int, seed: int,
                 languages: list[int] | None = None) -> TrialList:
    """Draw trial lists with per-speaker enrollment sets disjoint from test pools.

    Enrollment utterances are chosen once per speaker; trials pair them with
    test utterances uniformly at random (with replacement across trials).
    Restricting `languages` keeps both sides of every trial inside that set.
    """
    if target_trials < 0 or nontarget_trials < 0:
        raise ValidationError("trial counts must be nonnegative")
    if enroll_utterances_per_speaker < 1:
        raise ValidationError("enroll_utterances_per_speaker must be >= 1")

    by_speaker = corpus.by_speaker()
    if languages is not None:
        allowed = set(languages)
        by_speaker = {s: us for s, us in by_speaker.items() if us[0].language_id in allowed}

    need = enroll_utterances_per_speaker + 1
    short = {s: len(us) for s, us in by_speaker.items() if len(us) < need}
    if short:
        worst = min(short, key=short.get)
        raise CapacityError(
            f"speaker {worst} has {short[worst]} utterances but enrollment of "
            f"{enroll_utterances_per_speaker} plus at least one test utterance needs {need}")
    speakers = sorted(by_speaker)
    if not speakers:
        raise CapacityError("corpus supplies no speakers for the requested languages")
    if nontarget_trials > 0 and len(speakers) < 2:
        raise CapacityError(f"nontarget trials need >= 2 speakers, corpus has {len(speakers)}")

    rng = np.random.default_rng(seed)
    enroll: dict[str, tuple[str, ...]] = {}
    test_pool: dict[str, list[str]] = {}
    for s in speakers:
        ids = [u.utterance_id for u in by_speaker[s]]
        chosen = rng.choice(len(ids), size=enroll_utterances_per_speaker, replace=False)
        chosen_set = set(int(i) for i in chosen)
        enroll[s] = tuple(ids[i] for i in sorted(chosen_set))
        test_pool[s] = [ids[i] for i in range(len(ids)) if i not in chosen_set]

    trials: list[Trial] = []
    for _ in range(target_trials):
        s = speakers[rng.integers(len(speakers))]
        test = test_pool[s][rng.integers(len(test_pool[s]))]
        trials.append(Trial(s, enroll[s], test, True))
    for _ in range(nontarget_trials):
        i = int(rng.integers(len(speakers)))
        j = int(rng.integers(len(speakers) - 1))
        if j >= i:
            j += 1
        s, other = speakers[i], speakers[j]
        test = test_pool[other][rng.integers(len(test_pool[other]))]
        trials.append(Trial(s, enroll[s], test, False))
    return TrialList(trials)


# --- persistence ------------------------------------------------------------

def write_feature_file(path: str, frames: np.ndarray) -> None:
    """Binary layout: two 32-bit little-endian ints (rows, cols), then
    row-major 32-bit little-endian floats."""
    arr = np.ascontiguousarray(frames, dtype="<f4")
    if arr.ndim != 2:
        raise ValidationError(f"feature array must be 2-D, got shape {arr.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack("<ii", arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes())


def read_feature_file(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(8)
        if len(header) != 8:
            raise ValidationError(f"truncated feature file {path}")
        rows, cols = struct.unpack("<ii", header)
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != rows * cols:
        raise ValidationError(f"feature file {path}: expected {rows * cols} values, got {data.size}")
    return data.reshape(rows, cols).astype(np.float32)


def save_corpus(corpus: Corpus, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    spec = corpus.spec
    lines = [
        f"languages={spec.languages}",
        f"speakers_per_language={spec.speakers_per_language}",
        f"utterances_per_speaker={spec.utterances_per_speaker}",
        f"keyword_frames={spec.keyword_frames}",
        f"query_frames={spec.query_frames}",
        f"feature_dim={spec.feature_dim}",
        f"language_shift_scale={spec.language_shift_scale!r}",
        f"speaker_scale={spec.speaker_scale!r}",
        f"utterance_noise_scale={spec.utterance_noise_scale!r}",
        f"seed={spec.seed}",
    ]
    for lang in sorted(spec.utterance_overrides):
        lines.append(f"override_{lang}={spec.utterance_overrides[lang]}")
    lines.append(f"num_utterances={len(corpus.utterances)}")
    with open(os.path.join(directory, "corpus.meta"), "w") as f:
        f.write("\n".join(lines) + "\n")
    for u in corpus.utterances:
        write_feature_file(os.path.join(directory, f"{u.utterance_id}.kw.feat"), u.keyword)
        write_feature_file(os.path.join(directory, f"{u.utterance_id}.q.feat"), u.query)


def load_corpus(directory: str) -> Corpus:
    meta_path = os.path.join(directory, "corpus.meta")
    if not os.path.exists(meta_path):
        raise ValidationError(f"no corpus.meta in {directory}")
    kv: dict[str, str] = {}
    with open(meta_path) as f:
        for line in f:
            line = line.strip()
            if line:
                key, _, value = line.partition("=")
                kv[key] = value
    overrides = {int(k[len("override_"):]): int(v)
                 for k, v in kv.items() if k.startswith("override_")}
    spec = CorpusSpec(
        languages=int(kv["languages"]),
        speakers_per_language=int(kv["speakers_per_language"]),
        utterances_per_speaker=int(kv["utterances_per_speaker"]),
        keyword_frames=int(kv["keyword_frames"]),
        query_frames=int(kv["query_frames"]),
        feature_dim=int(kv["feature_dim"]),
        language_shift_scale=float(kv["language_shift_scale"]),
        speaker_scale=float(kv["speaker_scale"]),
        utterance_noise_scale=float(kv["utterance_noise_scale"]),
        seed=int(kv["seed"]),
        utterance_overrides=overrides,
    )
    utterances = []
    for lang in range(spec.languages):
        for spk in range(spec.speakers_per_language):
            for utt in range(spec.utterances_for(lang)):
                uid = utterance_id(lang, spk, utt)
                utterances.append(Utterance(
                    utterance_id=uid,
                    speaker_id=speaker_id(lang, spk),
                    language_id=lang,
                    keyword=read_feature_file(os.path.join(directory, f"{uid}.kw.feat")),
                    query=read_feature_file(os.path.join(directory, f"{uid}.q.feat")),
                ))
    return Corpus(spec=spec, utterances=utterances)


def save_trials(trials: TrialList, path: str) -> None:
    with open(path, "w") as f:
        for t in trials:
            label = "tgt" if t.is_target else "non"
            f.write(f"{t.enroll_speaker_id}\t{','.join(t.enroll_utterance_ids)}\t"
                    f"{t.test_utterance_id}\t{label}\n")


def load_trials(path: str) -> TrialList:
    trials = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4 or parts[3] not in ("tgt", "non"):
                raise ValidationError(f"{path}:{lineno}: malformed trial line")
            trials.append(Trial(parts[0], tuple(parts[1].split(",")), parts[2], parts[3] == "tgt"))
    return TrialList(trials)
