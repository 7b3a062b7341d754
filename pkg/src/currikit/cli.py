"""Command-line orchestration of the two-stage pipeline.

Stage 1 (``teacher``) trains a scoring model on the train split and turns
its per-epoch behavior into difficulty statistics (or produces cross-review
/ heuristic scores). Stage 2 (``student``) trains a fresh model under a
chosen scheduler and evaluates its best checkpoint on every test split.
``sweep`` automates the grid, ``compare`` runs the significance and
time-ratio report, plus utilities: ``synth``, ``datamap``, ``correlate``.

All artifacts live under a run directory given with --out; every command
snapshots its config there first, and re-running with the same config and
seeds reproduces artifacts byte for byte.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import sys
from pathlib import Path

from . import analysis, curricula, difficulty, dynamics, trainer
from .corpus import (
    DEFAULT_HASH_DIM,
    Corpus,
    SynthSpec,
    generate_synthetic,
    load_jsonl,
    load_label_map,
    save_jsonl,
    save_label_map,
)

SCHEDULERS = (
    "random",
    "cr_anneal",
    "corr_anneal",
    "conf_comp",
    "corr+var_anneal",
    "conf+var_comp",
    "length",
    "rarity",
    "ppl",
)
TD_SCHEDULERS = {"corr_anneal", "conf_comp", "corr+var_anneal", "conf+var_comp"}
ANNEAL_SCHEDULERS = {"cr_anneal", "corr_anneal", "corr+var_anneal"}
HEURISTICS = ("length", "rarity", "ppl")

TEACHER_METRICS = ("dynamics", "cross-review", "length", "rarity", "ppl")

EVAL_SPLITS = ("validation", "test_id", "test_ood", "test_transfer")


class ValidationError(Exception):
    """Bad config or bad command usage; maps to exit code 1."""


# --- config -----------------------------------------------------------------


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
    validate_config(config)
    return config


def validate_config(config: dict) -> None:
    if not isinstance(config, dict):
        raise ValidationError("config must be a JSON object")
    has_data = "data" in config
    has_synth = "synth" in config
    if has_data == has_synth:
        raise ValidationError("config needs exactly one of 'data' or 'synth'")
    if has_data:
        data = config["data"]
        for fld in ("train", "validation"):
            if fld not in data:
                raise ValidationError(f"data.{fld} is required")
    else:
        try:
            SynthSpec(**config["synth"])
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"synth: {exc}") from None
    try:
        _train_config(config, seed=0)
    except ValueError as exc:
        raise ValidationError(f"train: {exc}") from None
    seeds = config.get("seeds", [1, 2, 3])
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) for s in seeds
    ):
        raise ValidationError("seeds must be a nonempty list of integers")
    if len(set(seeds)) != len(seeds):
        raise ValidationError("seeds must be distinct")
    hidden = config.get("model", {}).get("hidden_size", 0)
    if not isinstance(hidden, int) or hidden < 0:
        raise ValidationError("model.hidden_size must be a nonnegative integer")
    curr = config.get("curriculum", {})
    c0 = curr.get("c0", 0.01)
    if not 0.0 < c0 <= 1.0:
        raise ValidationError("curriculum.c0 must be in (0, 1]")
    if curr.get("ngram_order", 2) not in (1, 2):
        raise ValidationError("curriculum.ngram_order must be 1 or 2")
    if curr.get("add_k", 1.0) <= 0:
        raise ValidationError("curriculum.add_k must be > 0")


def _train_config(config: dict, seed: int, epochs_override: int | None = None):
    section = dict(config.get("train", {}))
    if epochs_override is not None:
        section["epochs"] = epochs_override
    section["seed"] = seed
    allowed = {"epochs", "batch_size", "learning_rate", "weight_decay",
               "grad_clip", "eval_per_epoch", "seed"}
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown train field(s): {sorted(unknown)}")
    return trainer.TrainConfig(**section)


def _seeds(config: dict) -> list[int]:
    return list(config.get("seeds", [1, 2, 3]))


def _teacher_seed(config: dict) -> int:
    return int(config.get("teacher_seed", _seeds(config)[0]))


def _hidden_size(config: dict) -> int:
    return int(config.get("model", {}).get("hidden_size", 0))


def resolve_corpora(config: dict) -> dict[str, Corpus]:
    """Load or (deterministically) regenerate every configured split.

    The label map is fixed by the train split and all other splits must
    conform to it.
    """
    if "synth" in config:
        train, val, test_id, test_ood = generate_synthetic(SynthSpec(**config["synth"]))
        return {"train": train, "validation": val,
                "test_id": test_id, "test_ood": test_ood}
    data = config["data"]
    dim = int(data.get("hash_dim", DEFAULT_HASH_DIM))
    label_map = load_label_map(data["label_map"]) if data.get("label_map") else None
    train = load_jsonl(data["train"], "train", dim=dim, label_map=label_map)
    fixed = {name: i for i, name in enumerate(train.label_names)}
    corpora = {"train": train}
    for split in EVAL_SPLITS:
        if data.get(split):
            corpora[split] = load_jsonl(data[split], split, dim=dim, label_map=fixed)
    return corpora


def snapshot_config(config: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    snap = out_dir / "config.json"
    text = json.dumps(config, indent=2, sort_keys=True) + "\n"
    if snap.exists():
        if snap.read_text(encoding="utf-8") != text:
            raise ValidationError(
                f"{snap} already holds a different config; use a fresh --out directory"
            )
        return  # identical snapshot already in place; don't rewrite
    snap.write_text(text, encoding="utf-8")


# --- stage 1: teacher / scoring ----------------------------------------------


def cmd_teacher(config: dict, out_dir: Path, metric: str = "dynamics",
                teacher_epochs: int | None = None) -> Path:
    """Produce a difficulty artifact under <out>/teacher/.

    dynamics -> probes + td_stats; cross-review -> fold-vote scores;
    length/rarity/ppl -> heuristic scores. Returns the artifact path.
    """
    if metric not in TEACHER_METRICS:
        raise ValidationError(f"unknown metric {metric!r}; choose from {TEACHER_METRICS}")
    snapshot_config(config, out_dir)
    corpora = resolve_corpora(config)
    teacher_dir = out_dir / "teacher"
    teacher_dir.mkdir(parents=True, exist_ok=True)
    train_corpus = corpora["train"]

    if metric == "dynamics":
        cfg = _train_config(config, seed=_teacher_seed(config),
                            epochs_override=teacher_epochs)
        sampler = curricula.RandomSampler(train_corpus, cfg.batch_size, seed=cfg.seed)
        params, runlog, probes = trainer.train(
            train_corpus, corpora["validation"], cfg, sampler,
            hidden_size=_hidden_size(config), collect_probes=True,
        )
        trainer.write_runlog(runlog, teacher_dir / "runlog.jsonl")
        trainer.write_probes(probes, teacher_dir / "probes.jsonl")
        stats = dynamics.compute_all(probes)
        out_path = teacher_dir / "td_stats.jsonl"
        dynamics.write_td_stats(stats, out_path)
        _write_json(teacher_dir / "meta.json",
                    {"metric": "dynamics", "epochs": cfg.epochs, "seed": cfg.seed,
                     "hidden_size": _hidden_size(config)})
        return out_path

    if metric == "cross-review":
        cr = config.get("cross_review", {})
        cr_cfg = difficulty.CrossReviewConfig(
            num_subsets=int(cr.get("num_subsets", 10)),
            seed=int(cr.get("seed", _teacher_seed(config))),
            train=_train_config(config, seed=_teacher_seed(config),
                                epochs_override=teacher_epochs),
        )
        scores = difficulty.cross_review(train_corpus, cr_cfg)
        out_path = teacher_dir / "scores_cross_review.jsonl"
        difficulty.write_scores(scores, out_path,
                                extra_header={"num_subsets": cr_cfg.num_subsets})
        return out_path

    if metric == "length":
        scores = difficulty.length_metric(train_corpus)
    elif metric == "rarity":
        scores = difficulty.rarity_metric(train_corpus)
    else:
        curr = config.get("curriculum", {})
        scores = difficulty.perplexity_metric(
            train_corpus,
            order=int(curr.get("ngram_order", 2)),
            add_k=float(curr.get("add_k", 1.0)),
        )
    out_path = teacher_dir / f"scores_{metric}.jsonl"
    difficulty.write_scores(scores, out_path)
    return out_path


# --- stage 2: student ---------------------------------------------------------


def _default_scores_path(out_dir: Path, scheduler: str) -> Path | None:
    if scheduler == "random":
        return None
    if scheduler in TD_SCHEDULERS:
        return out_dir / "teacher" / "td_stats.jsonl"
    if scheduler == "cr_anneal":
        return out_dir / "teacher" / "scores_cross_review.jsonl"
    return out_dir / "teacher" / f"scores_{scheduler}.jsonl"


def _read_scoring_input(path: Path):
    """Returns ("td", stats_dict) or ("scores", DifficultyScores, header)."""
    if not path.exists():
        raise ValidationError(f"scores file not found: {path} (run the teacher first)")
    with path.open("r", encoding="utf-8") as fh:
        first = json.loads(fh.readline())
    if "confidence" in first:
        return ("td", dynamics.read_td_stats(path), None)
    if "metric_name" in first:
        return ("scores", difficulty.read_scores(path), first)
    raise ValidationError(f"{path}: neither a dynamics-stats nor a scores file")


def _teacher_epochs_hint(out_dir: Path, scores: difficulty.DifficultyScores) -> int:
    meta = out_dir / "teacher" / "meta.json"
    if meta.exists():
        with meta.open("r", encoding="utf-8") as fh:
            return int(json.load(fh)["epochs"])
    return max(1, int(max(scores.scores.values())))


def _competence_duration(config: dict, seed: int, total_steps: int) -> int:
    curr = config.get("curriculum", {})
    if curr.get("duration"):
        return int(curr["duration"])
    if curr.get("baseline_dir"):
        summary_path = Path(curr["baseline_dir"]) / "summary.json"
        if not summary_path.exists():
            raise ValidationError(f"curriculum.baseline_dir: {summary_path} not found")
        with summary_path.open("r", encoding="utf-8") as fh:
            summary = json.load(fh)
        best_steps = summary.get("best_steps", {})
        if str(seed) not in best_steps:
            raise ValidationError(
                f"curriculum.baseline_dir has no run for seed {seed}"
            )
        return max(1, round(0.9 * int(best_steps[str(seed)])))
    return max(1, round(0.9 * total_steps))


def _build_sampler(scheduler: str, scoring, config: dict, seed: int,
                   train_corpus: Corpus, batch_size: int, steps_per_epoch: int,
                   total_steps: int, out_dir: Path):
    """Sampler plus its auditable plan for one student run."""
    ids = train_corpus.ids()
    if scheduler == "random":
        return curricula.RandomSampler(train_corpus, batch_size, seed=seed), None

    kind = scoring[0]
    weighted = scheduler in ("corr+var_anneal", "conf+var_comp")
    variability = None

    if kind == "td":
        stats = scoring[1]
        base_metric = "correctness" if scheduler in ANNEAL_SCHEDULERS else "confidence"
        if scheduler == "cr_anneal":
            raise ValidationError(
                "cr_anneal needs a cross-review scores file, not dynamics stats"
            )
        scores = difficulty.from_td(stats, base_metric, expected_ids=ids)
        variability = {eid: stats[eid].variability for eid in scores.scores}
    else:
        scores, header = scoring[1], scoring[2]
        missing = [eid for eid in ids if eid not in scores.scores]
        if missing:
            raise ValidationError(f"scores file lacks example {missing[0]!r}")
        scores = difficulty.DifficultyScores(
            metric_name=scores.metric_name,
            scores={eid: scores.scores[eid] for eid in ids},
            higher_is_easier=scores.higher_is_easier,
        )
        if weighted:
            raise ValidationError(
                f"scheduler {scheduler} needs variability from dynamics stats; "
                f"got a plain {scores.metric_name!r} scores file"
            )

    if scheduler in ANNEAL_SCHEDULERS:
        if kind == "scores" and scoring[2] and "num_subsets" in scoring[2]:
            carry_epochs = int(scoring[2]["num_subsets"]) - 1  # votes in [0, N-1]
        else:
            carry_epochs = _teacher_epochs_hint(out_dir, scores)
        plan = curricula.build_annealing_plan(
            scores, carry_epochs,
            variability=variability, variability_weighted=weighted,
        )
        sampler = curricula.AnnealingSampler(plan, batch_size, seed=seed)
        return sampler, plan

    duration = _competence_duration(config, seed, total_steps)
    plan = curricula.build_competence_plan(
        scores,
        c0=float(config.get("curriculum", {}).get("c0", 0.01)),
        duration=duration,
        variability=variability,
        variability_weighted=weighted,
        form=str(config.get("curriculum", {}).get("competence_form", "sqrt")),
    )
    sampler = curricula.CompetenceSampler(plan, batch_size, steps_per_epoch, seed=seed)
    return sampler, plan


def _run_student_seed(config: dict, corpora: dict[str, Corpus], scheduler: str,
                      scoring, seed: int, out_dir: Path, seed_dir: Path) -> dict:
    train_corpus = corpora["train"]
    cfg = _train_config(config, seed=seed)
    steps_per_epoch = math.ceil(train_corpus.size / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    sampler, plan = _build_sampler(
        scheduler, scoring, config, seed, train_corpus, cfg.batch_size,
        steps_per_epoch, total_steps, out_dir,
    )
    params, runlog, _ = trainer.train(
        train_corpus, corpora["validation"], cfg, sampler,
        hidden_size=_hidden_size(config), collect_probes=False,
    )
    seed_dir.mkdir(parents=True, exist_ok=True)
    trainer.write_runlog(runlog, seed_dir / "runlog.jsonl")
    summary = curricula.plan_summary(plan)
    summary.update({"scheduler_name": scheduler, "seed": seed})
    _write_json(seed_dir / "plan.json", summary)

    metrics = {"scheduler": scheduler, "seed": seed,
               "best_step": runlog.best_step, "total_steps": total_steps,
               "accuracy": {}}
    for split in EVAL_SPLITS:
        if split not in corpora:
            continue
        corpus = corpora[split]
        pred = trainer.predict(params, corpus)
        labels = corpus.labels()
        metrics["accuracy"][split] = float((pred == labels).mean())
        with (seed_dir / f"outcomes_{split}.jsonl").open("w", encoding="utf-8") as fh:
            for i, ex in enumerate(corpus.examples):
                fh.write(json.dumps(
                    {"example_id": ex.id, "correct": bool(pred[i] == labels[i])}
                ) + "\n")
    _write_json(seed_dir / "metrics.json", metrics)
    return metrics


def cmd_student(config: dict, out_dir: Path, scheduler: str,
                scores_path: Path | None = None,
                corpora: dict[str, Corpus] | None = None) -> dict:
    """Train one student per seed under ``scheduler`` and summarize.

    All schedulers consume exactly epochs * ceil(N / batch_size) optimizer
    steps, so time budgets match across a sweep. ``corpora`` lets callers
    (sweep) share already-resolved splits.
    """
    if scheduler not in SCHEDULERS:
        raise ValidationError(f"unknown scheduler {scheduler!r}; choose from {SCHEDULERS}")
    snapshot_config(config, out_dir)
    if corpora is None:
        corpora = resolve_corpora(config)

    if scheduler == "random":
        if scores_path is not None:
            print("warning: scheduler 'random' ignores the scores file",
                  file=sys.stderr)
        scoring = None
    else:
        path = scores_path or _default_scores_path(out_dir, scheduler)
        scoring = _read_scoring_input(path)
        if scoring[0] == "td" and scheduler in HEURISTICS:
            raise ValidationError(
                f"scheduler {scheduler!r} needs a {scheduler!r} scores file, "
                "not dynamics stats"
            )
        if scoring[0] == "scores":
            expected = {"cr_anneal": "cross_review", "length": "length",
                        "rarity": "rarity", "ppl": "ppl"}.get(scheduler)
            if expected and scoring[1].metric_name != expected:
                print(
                    f"warning: scheduler {scheduler!r} usually reads "
                    f"{expected!r} scores, got {scoring[1].metric_name!r}",
                    file=sys.stderr,
                )

    sched_dir = out_dir / "students" / scheduler
    per_seed = {}
    for seed in _seeds(config):
        per_seed[seed] = _run_student_seed(
            config, corpora, scheduler, scoring, seed,
            out_dir, sched_dir / f"seed_{seed}",
        )
    summary = _summarize_student(scheduler, per_seed)
    _write_json(sched_dir / "summary.json", summary)
    return summary


def _summarize_student(scheduler: str, per_seed: dict[int, dict]) -> dict:
    seeds = sorted(per_seed)
    splits = sorted(per_seed[seeds[0]]["accuracy"])
    accuracy = {}
    for split in splits:
        vals = [per_seed[s]["accuracy"][split] for s in seeds]
        mean = sum(vals) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / len(vals)
        accuracy[split] = {
            "mean": mean,
            "std": math.sqrt(var),
            "per_seed": {str(s): per_seed[s]["accuracy"][split] for s in seeds},
        }
    return {
        "scheduler": scheduler,
        "seeds": seeds,
        "splits": splits,
        "accuracy": accuracy,
        "best_steps": {str(s): per_seed[s]["best_step"] for s in seeds},
        "total_steps": {str(s): per_seed[s]["total_steps"] for s in seeds},
    }


# --- compare ------------------------------------------------------------------


def _load_student_dir(path: Path) -> dict:
    summary_path = path / "summary.json"
    if not summary_path.exists():
        raise ValidationError(f"{path} is not a completed student run directory")
    with summary_path.open("r", encoding="utf-8") as fh:
        return json.load(fh)


def _pooled_outcomes(path: Path, seeds: list[int], split: str) -> dict:
    pooled = {}
    for seed in seeds:
        f = path / f"seed_{seed}" / f"outcomes_{split}.jsonl"
        with f.open("r", encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                pooled[(rec["example_id"], seed)] = bool(rec["correct"])
    return pooled


def cmd_compare(dir_a: Path, dir_b: Path, rounds: int = 10000,
                seed: int = 0, out_prefix: Path | None = None) -> dict:
    """Per split: accuracies, AR-test p-value over pooled (example, seed)
    units, plus the time ratio best_step(a)/best_step(b) aggregated over
    seeds. Emits JSON and a plain-text table."""
    sum_a = _load_student_dir(dir_a)
    sum_b = _load_student_dir(dir_b)
    if sum_a["seeds"] != sum_b["seeds"]:
        raise ValidationError(
            f"seed lists differ: {sum_a['seeds']} vs {sum_b['seeds']}"
        )
    if sum_a["splits"] != sum_b["splits"]:
        raise ValidationError(
            f"evaluated splits differ: {sum_a['splits']} vs {sum_b['splits']}"
        )
    seeds = sum_a["seeds"]
    ratios = analysis.aggregate_time_ratios(
        [trainer.RunLog([], sum_a["best_steps"][str(s)], 0.0) for s in seeds],
        [trainer.RunLog([], sum_b["best_steps"][str(s)], 0.0) for s in seeds],
    )
    report = {
        "a": {"path": str(dir_a), "scheduler": sum_a["scheduler"]},
        "b": {"path": str(dir_b), "scheduler": sum_b["scheduler"]},
        "seeds": seeds,
        "time_ratio": ratios,
        "splits": {},
    }
    for split in sum_a["splits"]:
        pooled_a = _pooled_outcomes(dir_a, seeds, split)
        pooled_b = _pooled_outcomes(dir_b, seeds, split)
        p = analysis.approx_randomization(pooled_a, pooled_b, rounds=rounds, seed=seed)
        report["splits"][split] = {
            "acc_a": sum_a["accuracy"][split],
            "acc_b": sum_b["accuracy"][split],
            "p_value": p,
        }

    table = _compare_table(report)
    print(table)
    if out_prefix is not None:
        _write_json(Path(str(out_prefix) + ".json"), report)
        Path(str(out_prefix) + ".txt").write_text(table + "\n", encoding="utf-8")
    return report


def _compare_table(report: dict) -> str:
    header = f"{'split':<14} {'acc_a':>15} {'acc_b':>15} {'p':>8} " \
             f"{'ratio_mean':>11} {'ratio_min':>10}"
    lines = [
        f"A = {report['a']['scheduler']} ({report['a']['path']})",
        f"B = {report['b']['scheduler']} ({report['b']['path']})",
        header,
        "-" * len(header),
    ]
    rm = report["time_ratio"]["mean"]
    rmin = report["time_ratio"]["min"]
    for split, row in report["splits"].items():
        a = row["acc_a"]
        b = row["acc_b"]
        lines.append(
            f"{split:<14} {a['mean']:.4f}±{a['std']:.4f} "
            f"{b['mean']:.4f}±{b['std']:.4f} {row['p_value']:>8.4f} "
            f"{rm:>11.2f} {rmin:>10.2f}"
        )
    return "\n".join(lines)


# --- sweep ---------------------------------------------------------------------


def cmd_sweep(config: dict, out_dir: Path, schedulers: list[str],
              workers: int = 1, rounds: int = 10000) -> dict:
    """Teacher once, every scheduler per seed, then compare all against the
    random and cr_anneal baselines (when listed). Completed cells found in
    the run directory are skipped."""
    for s in schedulers:
        if s not in SCHEDULERS:
            raise ValidationError(f"unknown scheduler {s!r} in sweep list")
    snapshot_config(config, out_dir)
    corpora = resolve_corpora(config)
    for corpus in corpora.values():
        corpus.feature_matrix()  # prebuild: shared read-only across workers

    if TD_SCHEDULERS & set(schedulers):
        if not (out_dir / "teacher" / "td_stats.jsonl").exists():
            cmd_teacher(config, out_dir, metric="dynamics")
    if "cr_anneal" in schedulers:
        if not (out_dir / "teacher" / "scores_cross_review.jsonl").exists():
            cmd_teacher(config, out_dir, metric="cross-review")
    for h in HEURISTICS:
        if h in schedulers and not (out_dir / "teacher" / f"scores_{h}.jsonl").exists():
            cmd_teacher(config, out_dir, metric=h)

    todo = [s for s in schedulers
            if not (out_dir / "students" / s / "summary.json").exists()]
    if workers > 1 and len(todo) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(cmd_student, config, out_dir, s, None, corpora): s
                for s in todo
            }
            for fut in concurrent.futures.as_completed(futures):
                fut.result()
    else:
        for s in todo:
            cmd_student(config, out_dir, s, corpora=corpora)

    baselines = [b for b in ("random", "cr_anneal") if b in schedulers]
    compare_dir = out_dir / "compare"
    rows = []
    for s in schedulers:
        summary = _load_student_dir(out_dir / "students" / s)
        row = {"scheduler": s, "accuracy": summary["accuracy"]}
        for b in baselines:
            if b == s:
                continue
            report = cmd_compare(
                out_dir / "students" / s, out_dir / "students" / b,
                rounds=rounds,
                out_prefix=compare_dir / f"{s}_vs_{b}",
            )
            row[f"vs_{b}"] = {
                "time_ratio": report["time_ratio"],
                "p_values": {split: r["p_value"]
                             for split, r in report["splits"].items()},
            }
        rows.append(row)
    matrix = {"schedulers": schedulers, "rows": rows}
    _write_json(out_dir / "sweep_summary.json", matrix)
    (out_dir / "sweep_summary.txt").write_text(_sweep_table(matrix) + "\n",
                                               encoding="utf-8")
    return matrix


def _sweep_table(matrix: dict) -> str:
    rows = matrix["rows"]
    splits = sorted({s for row in rows for s in row["accuracy"]})
    header = f"{'scheduler':<18}" + "".join(f"{s:>22}" for s in splits)
    lines = [header, "-" * len(header)]
    for row in rows:
        cells = []
        for s in splits:
            acc = row["accuracy"].get(s)
            cells.append(
                f"{acc['mean']:.4f}±{acc['std']:.4f}" if acc else "-"
            )
        lines.append(f"{row['scheduler']:<18}" + "".join(f"{c:>22}" for c in cells))
    return "\n".join(lines)


# --- utilities ------------------------------------------------------------------


def cmd_synth(config: dict, out_dir: Path) -> list[Path]:
    if "synth" not in config:
        raise ValidationError("synth command needs a 'synth' section in the config")
    snapshot_config(config, out_dir)
    corpora = resolve_corpora(config)
    data_dir = out_dir / "data"
    written = []
    for split, corpus in corpora.items():
        path = data_dir / f"{split}.jsonl"
        save_jsonl(corpus, path, include_features=True)
        written.append(path)
    save_label_map(corpora["train"], data_dir / "label_map.json")
    written.append(data_dir / "label_map.json")
    return written


def cmd_datamap(out_dir: Path, stats_path: Path | None = None) -> tuple[Path, Path]:
    path = stats_path or out_dir / "teacher" / "td_stats.jsonl"
    if not path.exists():
        raise ValidationError(f"dynamics stats not found: {path} (run the teacher first)")
    stats = dynamics.read_td_stats(path)
    return analysis.datamap_export(stats, out_dir)


def cmd_correlate(config: dict, out_dir: Path) -> analysis.CorrelationMatrix:
    """Spearman matrix between every available difficulty metric: the three
    dynamics statistics, the heuristics (computed on the fly) and
    cross-review votes when present in the run directory."""
    snapshot_config(config, out_dir)
    stats_path = out_dir / "teacher" / "td_stats.jsonl"
    if not stats_path.exists():
        raise ValidationError(
            f"dynamics stats not found: {stats_path} (run the teacher first)"
        )
    stats = dynamics.read_td_stats(stats_path)
    corpora = resolve_corpora(config)
    train_corpus = corpora["train"]
    curr = config.get("curriculum", {})
    metric_scores = {
        "confidence": {eid: s.confidence for eid, s in stats.items()},
        "correctness": {eid: float(s.correctness) for eid, s in stats.items()},
        "variability": {eid: s.variability for eid, s in stats.items()},
        "length": difficulty.length_metric(train_corpus).scores,
        "rarity": difficulty.rarity_metric(train_corpus).scores,
        "ppl": difficulty.perplexity_metric(
            train_corpus,
            order=int(curr.get("ngram_order", 2)),
            add_k=float(curr.get("add_k", 1.0)),
        ).scores,
    }
    cr_path = out_dir / "teacher" / "scores_cross_review.jsonl"
    if cr_path.exists():
        metric_scores["cross_review"] = difficulty.read_scores(cr_path).scores
    matrix = analysis.correlation_matrix(metric_scores)
    analysis.write_correlations(matrix, out_dir / "correlations.json")
    return matrix


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# --- entry point -----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="currikit",
                     description="curriculum training pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, needs_config=True, needs_out=True):
        p = sub.add_parser(name, help=help_text)
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config JSON")
        if needs_out:
            p.add_argument("--out", required=True, help="run directory")
        return p

    add("synth", "generate synthetic corpora as JSONL files")

    p = add("teacher", "stage 1: score the training data")
    p.add_argument("--metric", default="dynamics", choices=TEACHER_METRICS)
    p.add_argument("--teacher-epochs", type=int, default=None,
                   help="train the scoring model for fewer epochs")

    p = add("student", "stage 2: train under a scheduler and evaluate")
    p.add_argument("--scheduler", required=True, choices=SCHEDULERS)
    p.add_argument("--scores", default=None,
                   help="scores file (default: resolved from the run directory)")

    p = add("sweep", "teacher once, then every scheduler, then comparisons")
    p.add_argument("--schedulers", required=True,
                   help="comma-separated scheduler list")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--rounds", type=int, default=10000)

    p = add("compare", "significance & time-ratio report for two runs",
            needs_config=False, needs_out=False)
    p.add_argument("--a", required=True, help="student run directory A")
    p.add_argument("--b", required=True, help="student run directory B")
    p.add_argument("--rounds", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output file prefix")

    p = add("datamap", "export the confidence/variability scatter",
            needs_config=False)
    p.add_argument("--stats", default=None, help="dynamics stats file")

    add("correlate", "Spearman matrix between difficulty metrics")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "synth":
            cmd_synth(load_config(args.config), Path(args.out))
        elif args.command == "teacher":
            cmd_teacher(load_config(args.config), Path(args.out),
                        metric=args.metric, teacher_epochs=args.teacher_epochs)
        elif args.command == "student":
            cmd_student(load_config(args.config), Path(args.out), args.scheduler,
                        scores_path=Path(args.scores) if args.scores else None)
        elif args.command == "sweep":
            schedulers = [s.strip() for s in args.schedulers.split(",") if s.strip()]
            cmd_sweep(load_config(args.config), Path(args.out), schedulers,
                      workers=args.workers, rounds=args.rounds)
        elif args.command == "compare":
            cmd_compare(Path(args.a), Path(args.b), rounds=args.rounds,
                        seed=args.seed,
                        out_prefix=Path(args.out) if args.out else None)
        elif args.command == "datamap":
            cmd_datamap(Path(args.out),
                        stats_path=Path(args.stats) if args.stats else None)
        elif args.command == "correlate":
            cmd_correlate(load_config(args.config), Path(args.out))
    except (ValidationError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
