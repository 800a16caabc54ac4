"""Command-line entry point wiring the pipeline:
gen-data -> train -> score -> fuse-sweep -> triage-sweep / triage-apply
-> eval / xeval -> report.

Every command reads one config file and writes only its documented
artifacts; re-running with unchanged inputs rewrites identical bytes.
Exit codes: 0 ok, 1 validation, 2 missing prerequisite, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

from . import dvector, fusion, ge2e, metrics, scoring, synthcorpus, triage
from .config import ExperimentConfig, parse_config
from .errors import DependencyError, ToolError
from .fusion import FusionWeight

COMMANDS = ("gen-data", "train", "score", "fuse-sweep", "triage-sweep",
            "triage-apply", "eval", "xeval", "report")


def _require(path: str, producer: str) -> str:
    if not os.path.exists(path):
        raise DependencyError(f"missing {path}; run `svcascade {producer}` first")
    return path


def _trials_path(cfg: ExperimentConfig, language: int | None = None) -> str:
    name = "trials.tsv" if language is None else f"trials_lang{language}.tsv"
    return os.path.join(cfg.corpus_dir, name)


def _ckpt_path(cfg: ExperimentConfig, name: str) -> str:
    return os.path.join(cfg.checkpoint_dir, f"{name}.ckpt")


def _scores_path(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.score_dir, "scores.tsv")


def _load_corpus(cfg: ExperimentConfig) -> synthcorpus.Corpus:
    _require(os.path.join(cfg.corpus_dir, "corpus.meta"), "gen-data")
    return synthcorpus.load_corpus(cfg.corpus_dir)


def cmd_gen_data(cfg: ExperimentConfig) -> None:
    corpus = synthcorpus.generate_corpus(cfg.corpus_spec)
    synthcorpus.save_corpus(corpus, cfg.corpus_dir)
    pooled: list[synthcorpus.Trial] = []
    for lang in range(cfg.corpus_spec.languages):
        trials = synthcorpus.split_trials(
            corpus, cfg.trial_targets, cfg.trial_nontargets,
            cfg.enroll_per_speaker, seed=cfg.trial_seed + lang, languages=[lang])
        synthcorpus.save_trials(trials, _trials_path(cfg, lang))
        pooled.extend(trials.trials)
    synthcorpus.save_trials(synthcorpus.TrialList(pooled), _trials_path(cfg))


def cmd_train(cfg: ExperimentConfig) -> None:
    corpus = _load_corpus(cfg)
    os.makedirs(cfg.checkpoint_dir, exist_ok=True)
    for name, spec, train_cfg, segment in (
            ("td", cfg.td_network, cfg.td_train, ge2e.SEGMENT_KEYWORD),
            ("ti", cfg.ti_network, cfg.ti_train, ge2e.SEGMENT_KEYWORD_QUERY)):
        params, trace = ge2e.train(corpus, spec, train_cfg, segment)
        dvector.save_checkpoint(_ckpt_path(cfg, name), params)
        ge2e.save_loss_trace(os.path.join(cfg.checkpoint_dir, f"loss_{name}.csv"), trace)


def cmd_score(cfg: ExperimentConfig) -> None:
    corpus = _load_corpus(cfg)
    trials = synthcorpus.load_trials(_require(_trials_path(cfg), "gen-data"))
    td_params = dvector.load_checkpoint(_require(_ckpt_path(cfg, "td"), "train"))
    ti_params = dvector.load_checkpoint(_require(_ckpt_path(cfg, "ti"), "train"))
    os.makedirs(cfg.score_dir, exist_ok=True)
    scored = scoring.score_trials(td_params, ti_params, corpus, trials)
    scoring.save_scores(_scores_path(cfg), scored)


def cmd_fuse_sweep(cfg: ExperimentConfig) -> None:
    scored = scoring.load_scores(_require(_scores_path(cfg), "score"))
    result = fusion.sweep_fusion_weight(scored, cfg.fusion_grid_step)
    os.makedirs(cfg.report_dir, exist_ok=True)
    fusion.save_sweep_csv(os.path.join(cfg.report_dir, "fusion_sweep.csv"), result)


def _resolve_alpha(cfg: ExperimentConfig) -> FusionWeight:
    fixed = cfg.fixed_alpha()
    if fixed is not None:
        return fixed
    sweep_path = os.path.join(cfg.report_dir, "fusion_sweep.csv")
    if not os.path.exists(sweep_path):
        raise DependencyError(
            f"triage.alpha=sweep needs {sweep_path}; run `svcascade fuse-sweep` first")
    return FusionWeight(fusion.load_sweep_csv(sweep_path).alpha_star)


def cmd_triage_sweep(cfg: ExperimentConfig) -> None:
    scored = scoring.load_scores(_require(_scores_path(cfg), "score"))
    alpha = _resolve_alpha(cfg)
    os.makedirs(cfg.report_dir, exist_ok=True)
    cells = triage.sweep_bands(scored, cfg.band_min, cfg.band_max, cfg.band_step, alpha)
    triage.save_heatmap_csv(os.path.join(cfg.report_dir, "heatmap.csv"), cells)
    points = triage.prior_sensitivity_curve(
        scored, cfg.band_min, cfg.band_max, cfg.band_step, alpha, cfg.priors)
    triage.save_prior_curve_csv(os.path.join(cfg.report_dir, "prior_curve.csv"), points)


def cmd_triage_apply(cfg: ExperimentConfig) -> None:
    scored = scoring.load_scores(_require(_scores_path(cfg), "score"))
    policy = triage.TriagePolicy(cfg.triage_lower, cfg.triage_upper, _resolve_alpha(cfg))
    triaged = triage.apply_triage(scored, policy)
    os.makedirs(cfg.score_dir, exist_ok=True)
    with open(os.path.join(cfg.score_dir, "triaged.tsv"), "w") as f:
        for t in triaged:
            label = "tgt" if t.trial.is_target else "non"
            f.write(f"{t.trial.enroll_speaker_id}\t{t.trial.test_utterance_id}\t"
                    f"{label}\t{'%.9f' % t.final_score}\t{int(t.triggered)}\n")


def cmd_eval(cfg: ExperimentConfig) -> None:
    scored = scoring.load_scores(_require(_scores_path(cfg), "score"))
    tgt = [s for s in scored if s.trial.is_target]
    non = [s for s in scored if not s.trial.is_target]
    os.makedirs(cfg.report_dir, exist_ok=True)
    with open(os.path.join(cfg.report_dir, "eval.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["system", "eer_percent", "threshold", "targets", "nontargets"])
        for system in ("td", "ti"):
            pick = (lambda s: s.td_score) if system == "td" else (lambda s: s.ti_score)
            if any(pick(s) is None for s in scored):
                continue
            r = metrics.compute_eer([pick(s) for s in tgt], [pick(s) for s in non])
            writer.writerow([system, "%.2f" % (100.0 * r.eer), "%.9f" % r.eer_threshold,
                             r.num_targets, r.num_nontargets])


def cmd_xeval(cfg: ExperimentConfig) -> None:
    """Trains monolingual TD/TI models per language and writes the full
    cross-language EER matrix."""
    corpus = _load_corpus(cfg)
    os.makedirs(cfg.checkpoint_dir, exist_ok=True)
    os.makedirs(cfg.report_dir, exist_ok=True)
    models = []
    for lang in cfg.xeval_languages:
        mono_td = replace(cfg.td_train, language_weights={lang: 1.0},
                          seed=cfg.td_train.seed + 1000 + lang)
        mono_ti = replace(cfg.ti_train, language_weights={lang: 1.0},
                          seed=cfg.ti_train.seed + 2000 + lang)
        td_path = _ckpt_path(cfg, f"td_mono{lang}")
        ti_path = _ckpt_path(cfg, f"ti_mono{lang}")
        td_params, _ = ge2e.train(corpus, cfg.td_network, mono_td, ge2e.SEGMENT_KEYWORD)
        ti_params, _ = ge2e.train(corpus, cfg.ti_network, mono_ti, ge2e.SEGMENT_KEYWORD_QUERY)
        dvector.save_checkpoint(td_path, td_params)
        dvector.save_checkpoint(ti_path, ti_params)
        models.append((f"mono{lang}", lang, td_params, ti_params))
    eval_sets = []
    for lang in cfg.xeval_languages:
        trials = synthcorpus.load_trials(_require(_trials_path(cfg, lang), "gen-data"))
        eval_sets.append((lang, corpus, trials))
    cells = metrics.cross_eval_matrix(models, eval_sets, scoring.score_trials)
    metrics.save_matrix_csv(os.path.join(cfg.report_dir, "xeval_matrix.csv"), cells)


def cmd_report(cfg: ExperimentConfig) -> None:
    scored = scoring.load_scores(_require(_scores_path(cfg), "score"))
    sweep = fusion.load_sweep_csv(
        _require(os.path.join(cfg.report_dir, "fusion_sweep.csv"), "fuse-sweep"))
    heatmap_path = _require(os.path.join(cfg.report_dir, "heatmap.csv"), "triage-sweep")

    tgt = [s for s in scored if s.trial.is_target]
    non = [s for s in scored if not s.trial.is_target]
    td_eer = metrics.compute_eer([s.td_score for s in tgt], [s.td_score for s in non]).eer
    ti_eer = metrics.compute_eer([s.ti_score for s in tgt], [s.ti_score for s in non]).eer

    best = None
    with open(heatmap_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != ["lower", "upper", "eer", "trigger_rate"]:
            raise DependencyError(f"{heatmap_path} is not a heat map; run `svcascade triage-sweep`")
        for row in reader:
            lower, upper, eer, rate = (float(v) for v in row)
            key = (eer, rate, lower, upper)
            if best is None or key < best:
                best = key
    if best is None:
        raise DependencyError(f"{heatmap_path} is empty; run `svcascade triage-sweep`")
    best_eer, best_rate, best_lower, best_upper = best[0], best[1], best[2], best[3]

    kw = cfg.corpus_spec.keyword_frames
    total = kw + cfg.corpus_spec.query_frames
    cost = triage.CostModel(
        keyword_seconds=cfg.keyword_seconds, query_seconds=cfg.query_seconds,
        td_flops=dvector.flops_per_utterance(cfg.td_network, kw),
        ti_flops=dvector.flops_per_utterance(cfg.ti_network, total))

    lines = [
        "eer_td=%.9f" % td_eer,
        "eer_ti=%.9f" % ti_eer,
        "alpha=%.6f" % sweep.alpha_star,
        "eer_fused=%.9f" % sweep.eer_at_alpha_star,
        "band_lower=%.6f" % best_lower,
        "band_upper=%.6f" % best_upper,
        "eer=%.9f" % best_eer,
        "trigger_rate=%.9f" % best_rate,
        "expected_latency_seconds=%.9f" % triage.expected_latency(best_rate, cost),
        "expected_flops=%.1f" % triage.expected_flops(best_rate, cost),
    ]
    os.makedirs(cfg.report_dir, exist_ok=True)
    with open(os.path.join(cfg.report_dir, "report.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "score": cmd_score,
    "fuse-sweep": cmd_fuse_sweep,
    "triage-sweep": cmd_triage_sweep,
    "triage-apply": cmd_triage_apply,
    "eval": cmd_eval,
    "xeval": cmd_xeval,
    "report": cmd_report,
}


def run(command: str, config_path: str, seed: int | None = None) -> int:
    try:
        cfg = parse_config(config_path, seed_override=seed)
        HANDLERS[command](cfg)
    except ToolError as exc:
        print(f"svcascade {command}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="svcascade",
        description="speaker-verification cascade experiments on a synthetic corpus")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="experiment config file")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the experiment seeds")
    args = parser.parse_args(argv)
    return run(args.command, args.config, args.seed)


if __name__ == "__main__":
    sys.exit(main())
