import numpy as np
import pytest

from svcascade import dvector, ge2e, metrics, scoring, synthcorpus


@pytest.fixture(scope="session")
def small_corpus():
    spec = synthcorpus.CorpusSpec(
        languages=4, speakers_per_language=10, utterances_per_speaker=8,
        keyword_frames=10, query_frames=30, feature_dim=16,
        utterance_noise_scale=0.5, seed=7)
    return synthcorpus.generate_corpus(spec)


@pytest.fixture(scope="session")
def trained_models(small_corpus):
    weights = {lang: 1.0 for lang in range(4)}
    td_cfg = ge2e.TrainConfig(batch_n=4, batch_m=3, steps=400,
                              language_weights=weights, seed=3)
    ti_cfg = ge2e.TrainConfig(batch_n=4, batch_m=3, steps=400,
                              language_weights=weights, seed=4)
    td, _ = ge2e.train(small_corpus, dvector.TD_SMALL, td_cfg, ge2e.SEGMENT_KEYWORD)
    ti, _ = ge2e.train(small_corpus, dvector.TI_SMALL, ti_cfg, ge2e.SEGMENT_KEYWORD_QUERY)
    return {"td": td, "ti": ti}


@pytest.fixture(scope="session")
def scored_trials(small_corpus, trained_models):
    trials = synthcorpus.split_trials(small_corpus, 200, 200, 3, seed=11)
    return scoring.score_trials(trained_models["td"], trained_models["ti"],
                                small_corpus, trials)


def ti_only_eer(params, corpus, trials) -> float:
    """TI-system EER for a trial list: embeddings on keyword+query, enrollment
    averaging, cosine scoring."""
    cache = {}

    def embed(uid):
        if uid not in cache:
            u = corpus.get(uid)
            cache[uid] = dvector.forward_embedding(
                params, np.concatenate([u.keyword, u.query]))
        return cache[uid]

    profiles = {}
    tgt, non = [], []
    for t in trials:
        key = (t.enroll_speaker_id, t.enroll_utterance_ids)
        if key not in profiles:
            profiles[key] = scoring.aggregate_enrollment(
                [embed(u) for u in t.enroll_utterance_ids])
        score = scoring.cosine_score(profiles[key], embed(t.test_utterance_id))
        (tgt if t.is_target else non).append(score)
    return metrics.compute_eer(tgt, non).eer


@pytest.fixture(scope="session")
def multilingual_runs():
    """The held-out-language experiment: 5 languages, TI models trained on
    the first 4 (pooled) and on each single language (monolingual), per-seed
    EERs on every language.  Shared by the cross-lingual pattern test and the
    multilingual-generalization acceptance criterion."""
    num_languages, held_out = 5, 4
    seeds = range(5)
    runs = []
    for seed in seeds:
        spec = synthcorpus.CorpusSpec(
            languages=num_languages, speakers_per_language=10,
            utterances_per_speaker=8, keyword_frames=10, query_frames=30,
            feature_dim=16, utterance_noise_scale=0.6,
            language_shift_scale=1.2, speaker_scale=1.0, seed=seed)
        corpus = synthcorpus.generate_corpus(spec)
        trials = {lang: synthcorpus.split_trials(
            corpus, 150, 150, 3, seed=50 + seed * 10 + lang, languages=[lang])
            for lang in range(num_languages)}

        pooled_cfg = ge2e.TrainConfig(
            batch_n=4, batch_m=3, steps=500,
            language_weights={lang: 1.0 for lang in range(4)}, seed=seed * 100)
        pooled, _ = ge2e.train(corpus, dvector.TI_SMALL, pooled_cfg,
                               ge2e.SEGMENT_KEYWORD_QUERY)
        run = {"seed": seed,
               "pooled_unseen": ti_only_eer(pooled, corpus, trials[held_out]),
               "pooled_seen": {}, "mono_matched": {}, "mono_unseen": {}}
        for lang in range(4):
            mono_cfg = ge2e.TrainConfig(
                batch_n=4, batch_m=3, steps=500,
                language_weights={lang: 1.0}, seed=seed * 100 + 1 + lang)
            mono, _ = ge2e.train(corpus, dvector.TI_SMALL, mono_cfg,
                                 ge2e.SEGMENT_KEYWORD_QUERY)
            run["pooled_seen"][lang] = ti_only_eer(pooled, corpus, trials[lang])
            run["mono_matched"][lang] = ti_only_eer(mono, corpus, trials[lang])
            run["mono_unseen"][lang] = ti_only_eer(mono, corpus, trials[held_out])
        runs.append(run)
    return runs
