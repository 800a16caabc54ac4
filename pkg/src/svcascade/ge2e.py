"""Generalized end-to-end training: batch similarity matrix against speaker
centroids (leave-one-out for the positive term), softmax and contrast losses,
exact reverse-mode gradients through the network, and a weighted-language
batch sampler for multilingual training.

Losses are summed over the N*M utterances of a batch.  The similarity scale
is kept strictly positive by projecting it to a small floor after each
update.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import dvector
from .errors import CapacityError, NumericError, ValidationError
from .synthcorpus import Corpus

SOFTMAX = "softmax"
CONTRAST = "contrast"
LOSS_KINDS = (SOFTMAX, CONTRAST)

SEGMENT_KEYWORD = "keyword"
SEGMENT_KEYWORD_QUERY = "keyword+query"
SEGMENTS = (SEGMENT_KEYWORD, SEGMENT_KEYWORD_QUERY)

SCALE_FLOOR = 1e-3


@dataclass(frozen=True)
class TrainConfig:
    batch_n: int = 4
    batch_m: int = 3
    steps: int = 200
    learning_rate: float = 0.01
    clip_norm: float = 3.0
    loss_kind: str = SOFTMAX
    language_weights: dict[int, float] = field(default_factory=dict)
    seed: int = 0

    def validate(self) -> None:
        if self.batch_n < 2 or self.batch_m < 2:
            raise ValidationError(
                f"batch needs >= 2 speakers and >= 2 utterances each, "
                f"got N={self.batch_n} M={self.batch_m}")
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if not self.clip_norm > 0:
            raise ValidationError("clip_norm must be positive")
        if self.loss_kind not in LOSS_KINDS:
            raise ValidationError(f"loss_kind must be one of {LOSS_KINDS}")
        if not self.language_weights:
            raise ValidationError("language_weights must not be empty")
        if any(w < 0 for w in self.language_weights.values()):
            raise ValidationError("language weights must be nonnegative")
        if all(w == 0 for w in self.language_weights.values()):
            raise ValidationError("language weights must not all be zero")


def _check_batch_shape(shape: tuple[int, ...]) -> None:
    if len(shape) < 2 or shape[0] < 2 or shape[1] < 2:
        raise ValidationError(
            f"GE2E batch needs N >= 2 speakers and M >= 2 utterances, got shape {shape}")


def _centroids(embeddings: np.ndarray):
    """Full unit centroids per speaker plus leave-one-out unit centroids
    per utterance.  Returns (chat, mu_norm, chat_loo, mu_loo_norm)."""
    n, m, _ = embeddings.shape
    sums = embeddings.sum(axis=1)  # (N, d)
    mu = sums / m
    mu_norm = np.linalg.norm(mu, axis=1, keepdims=True)
    mu_loo = (sums[:, None, :] - embeddings) / (m - 1)  # (N, M, d)
    loo_norm = np.linalg.norm(mu_loo, axis=2, keepdims=True)
    if np.any(mu_norm == 0.0) or np.any(loo_norm == 0.0):
        raise NumericError("zero-norm speaker centroid")
    return mu / mu_norm, mu_norm, mu_loo / loo_norm, loo_norm


def similarity_matrix(embeddings: np.ndarray, w: float, b: float) -> np.ndarray:
    """S[j, i, k] = w * cos(e_ji, c_k) + b, with the leave-one-out centroid
    when k is the utterance's own speaker."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    _check_batch_shape(embeddings.shape)
    if not w > 0:
        raise ValidationError(f"similarity scale must be positive, got {w}")
    norms = np.linalg.norm(embeddings, axis=2)
    if np.any(np.abs(norms - 1.0) > 1e-4):
        raise ValidationError("similarity_matrix expects unit-norm embeddings")
    n = embeddings.shape[0]
    chat, _, chat_loo, _ = _centroids(embeddings)
    cos = np.einsum("jmd,kd->jmk", embeddings, chat)
    cos[np.arange(n), :, np.arange(n)] = np.sum(embeddings * chat_loo, axis=2)
    return w * cos + b


def ge2e_loss(similarities: np.ndarray, kind: str, labels: np.ndarray | None = None) -> float:
    """Summed loss over all utterances.  `labels` gives the true speaker
    column per row of the batch; defaults to the identity (row j is speaker j)."""
    S = np.asarray(similarities, dtype=np.float64)
    _check_batch_shape(S.shape)
    if kind not in LOSS_KINDS:
        raise ValidationError(f"unknown loss kind {kind!r}")
    n, m, k = S.shape
    if labels is None:
        labels = np.arange(n)
    labels = np.asarray(labels)
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise ValidationError("labels must index a speaker column per batch row")
    pos = S[np.arange(n), :, labels]  # (N, M)
    if kind == SOFTMAX:
        mx = S.max(axis=2)
        lse = mx + np.log(np.sum(np.exp(S - mx[:, :, None]), axis=2))
        return float(np.sum(lse - pos))
    sig = _sigmoid(S)
    masked = sig.copy()
    masked[np.arange(n), :, labels] = -np.inf
    return float(np.sum(1.0 - _sigmoid(pos) + masked.max(axis=2)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _loss_and_embedding_grads(embeddings: np.ndarray, w: float, b: float, kind: str):
    """Loss plus exact gradients w.r.t. embeddings and the (w, b) scalars,
    including the centroid paths."""
    E = np.asarray(embeddings, dtype=np.float64)
    _check_batch_shape(E.shape)
    n, m, d = E.shape
    chat, mu_norm, chat_loo, loo_norm = _centroids(E)
    cos = np.einsum("jmd,kd->jmk", E, chat)
    diag = np.arange(n)
    cos[diag, :, diag] = np.sum(E * chat_loo, axis=2)
    S = w * cos + b

    if kind == SOFTMAX:
        mx = S.max(axis=2)
        ex = np.exp(S - mx[:, :, None])
        soft = ex / ex.sum(axis=2, keepdims=True)
        loss = float(np.sum(mx + np.log(ex.sum(axis=2)) - S[diag, :, diag]))
        dS = soft.copy()
        dS[diag, :, diag] -= 1.0
    elif kind == CONTRAST:
        sig = _sigmoid(S)
        pos_sig = sig[diag, :, diag]
        masked = sig.copy()
        masked[diag, :, diag] = -np.inf
        kstar = masked.argmax(axis=2)  # (N, M), first max on ties
        max_sig = np.take_along_axis(sig, kstar[:, :, None], axis=2)[:, :, 0]
        loss = float(np.sum(1.0 - pos_sig + max_sig))
        dS = np.zeros_like(S)
        dS[diag, :, diag] = -pos_sig * (1.0 - pos_sig)
        j_idx, i_idx = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
        dS[j_idx, i_idx, kstar] += max_sig * (1.0 - max_sig)
    else:
        raise ValidationError(f"unknown loss kind {kind!r}")

    dw = float(np.sum(dS * cos))
    db = float(np.sum(dS))
    dcos = w * dS

    dcos_diag = dcos[diag, :, diag]  # (N, M)
    dcos_off = dcos.copy()
    dcos_off[diag, :, diag] = 0.0

    # direct dependence of cos on e_ji
    dE = np.einsum("jmk,kd->jmd", dcos_off, chat)
    dE += dcos_diag[:, :, None] * chat_loo

    # through full centroids (used by other speakers' rows)
    dchat = np.einsum("jmk,jmd->kd", dcos_off, E)
    dmu = (dchat - chat * np.sum(chat * dchat, axis=1, keepdims=True)) / mu_norm
    dE += dmu[:, None, :] / m

    # through leave-one-out centroids (spread to the speaker's other utterances)
    dchat_loo = dcos_diag[:, :, None] * E
    dmu_loo = (dchat_loo - chat_loo * np.sum(chat_loo * dchat_loo, axis=2, keepdims=True)) / loo_norm
    totals = dmu_loo.sum(axis=1, keepdims=True)
    dE += (totals - dmu_loo) / (m - 1)

    return loss, dE, dw, db


def batch_loss(params: dvector.Parameters, batch_frames: np.ndarray, kind: str) -> float:
    """Forward-only GE2E loss for a (N, M, T, D) batch of feature sequences."""
    n, m = batch_frames.shape[0], batch_frames.shape[1]
    flat = batch_frames.reshape(n * m, batch_frames.shape[2], batch_frames.shape[3])
    emb, _ = dvector.forward_batch(params, flat)
    E = emb.reshape(n, m, -1)
    S = similarity_matrix(E, float(params["ge2e/scale"]), float(params["ge2e/offset"]))
    return ge2e_loss(S, kind)


def backward(params: dvector.Parameters, batch_frames: np.ndarray,
             kind: str) -> tuple[float, dvector.Parameters]:
    """Loss and exact gradients w.r.t. every parameter (including the GE2E
    scale and offset) for one batch."""
    batch_frames = np.asarray(batch_frames, dtype=np.float64)
    if batch_frames.ndim != 4:
        raise ValidationError(f"batch must be (N, M, T, D), got shape {batch_frames.shape}")
    _check_batch_shape(batch_frames.shape)
    n, m, t, d = batch_frames.shape
    emb, cache = dvector.forward_batch(params, batch_frames.reshape(n * m, t, d),
                                       want_cache=True)
    E = emb.reshape(n, m, -1)
    loss, dE, dw, db = _loss_and_embedding_grads(
        E, float(params["ge2e/scale"]), float(params["ge2e/offset"]), kind)
    if not np.isfinite(loss):
        raise NumericError("non-finite GE2E loss")
    grads = dvector.backward_batch(params, cache, dE.reshape(n * m, -1))
    grads["ge2e/scale"] = np.array(dw)
    grads["ge2e/offset"] = np.array(db)
    return loss, grads


def gradient_check(params: dvector.Parameters, batch_frames: np.ndarray, kind: str,
                   epsilon: float = 1e-4, sample_count: int = 200, seed: int = 0) -> float:
    """Max relative error between analytic gradients and central finite
    differences on randomly sampled parameter coordinates."""
    if not (0 < epsilon <= 1e-2):
        raise ValidationError(f"epsilon must be in (0, 1e-2], got {epsilon}")
    if sample_count < 1:
        raise ValidationError("sample_count must be >= 1")
    _, grads = backward(params, batch_frames, kind)
    names = dvector.param_names(params.spec)
    sizes = [int(np.asarray(params[n]).size) for n in names]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    coords = rng.choice(total, size=min(sample_count, total), replace=False)

    offsets = np.cumsum([0] + sizes)
    work = params.copy()
    max_rel = 0.0
    for flat_idx in coords:
        block = int(np.searchsorted(offsets, flat_idx, side="right")) - 1
        name = names[block]
        local = int(flat_idx - offsets[block])
        arr = work[name].reshape(-1) if work[name].ndim else None
        if arr is None:  # 0-d scalar parameter
            orig = float(work[name])
            work[name] = np.array(orig + epsilon)
            lp = batch_loss(work, batch_frames, kind)
            work[name] = np.array(orig - epsilon)
            lm = batch_loss(work, batch_frames, kind)
            work[name] = np.array(orig)
        else:
            orig = arr[local]
            arr[local] = orig + epsilon
            lp = batch_loss(work, batch_frames, kind)
            arr[local] = orig - epsilon
            lm = batch_loss(work, batch_frames, kind)
            arr[local] = orig
        numeric = (lp - lm) / (2.0 * epsilon)
        analytic = float(np.asarray(grads[name]).reshape(-1)[local]) \
            if grads[name].ndim else float(grads[name])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        max_rel = max(max_rel, rel)
    return max_rel


def _batch_frames(utts, segment: str) -> np.ndarray:
    if segment == SEGMENT_KEYWORD:
        seqs = [[u.keyword for u in row] for row in utts]
    elif segment == SEGMENT_KEYWORD_QUERY:
        seqs = [[np.concatenate([u.keyword, u.query], axis=0) for u in row] for row in utts]
    else:
        raise ValidationError(f"unknown segment {segment!r}; use one of {SEGMENTS}")
    return np.asarray(seqs, dtype=np.float64)


def train(corpus: Corpus, spec: dvector.NetworkSpec, cfg: TrainConfig,
          segment: str) -> tuple[dvector.Parameters, list[tuple[int, float, int]]]:
    """SGD with global-norm clipping over language-sampled GE2E batches.

    Each step samples a language proportional to its weight, then batch_n
    speakers of that language and batch_m utterances each, all without
    replacement inside the batch.  Returns (parameters, loss trace), where
    the trace rows are (step, loss, language).
    """
    cfg.validate()
    spec.validate()
    if segment not in SEGMENTS:
        raise ValidationError(f"unknown segment {segment!r}; use one of {SEGMENTS}")
    if spec.input_dim != corpus.spec.feature_dim:
        raise ValidationError(
            f"network input_dim {spec.input_dim} != corpus feature_dim "
            f"{corpus.spec.feature_dim}")

    by_speaker = corpus.by_speaker()
    by_language: dict[int, list[list]] = {}
    for sid, utts in by_speaker.items():
        if len(utts) >= cfg.batch_m:
            by_language.setdefault(utts[0].language_id, []).append(utts)
    langs = sorted(l for l, w in cfg.language_weights.items() if w > 0)
    for lang in langs:
        available = len(by_language.get(lang, []))
        if available < cfg.batch_n:
            raise CapacityError(
                f"language {lang} supplies {available} speakers with >= {cfg.batch_m} "
                f"utterances; batches need {cfg.batch_n}")
    weights = np.array([cfg.language_weights[l] for l in langs], dtype=float)
    weights = weights / weights.sum()

    rng = np.random.default_rng(cfg.seed)
    params = dvector.init_network(spec, cfg.seed)
    trace: list[tuple[int, float, int]] = []
    for step in range(cfg.steps):
        lang = langs[int(rng.choice(len(langs), p=weights))]
        speakers = by_language[lang]
        spk_idx = rng.choice(len(speakers), size=cfg.batch_n, replace=False)
        rows = []
        for si in spk_idx:
            utts = speakers[int(si)]
            utt_idx = rng.choice(len(utts), size=cfg.batch_m, replace=False)
            rows.append([utts[int(ui)] for ui in utt_idx])
        frames = _batch_frames(rows, segment)
        loss, grads = backward(params, frames, cfg.loss_kind)
        norm = dvector.global_norm(grads)
        scale = cfg.clip_norm / norm if norm > cfg.clip_norm else 1.0
        for name in params.values:
            params.values[name] = params.values[name] - cfg.learning_rate * scale * grads[name]
        if float(params["ge2e/scale"]) < SCALE_FLOOR:
            params["ge2e/scale"] = np.array(SCALE_FLOOR)
        trace.append((step, loss, lang))
    return params, trace


def save_loss_trace(path: str, trace: list[tuple[int, float, int]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "loss", "language"])
        for step, loss, lang in trace:
            writer.writerow([step, "%.9f" % loss, lang])
