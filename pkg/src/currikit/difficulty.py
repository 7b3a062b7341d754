"""Difficulty scoring.

Every source of example difficulty produces the same DifficultyScores
shape: training-dynamics statistics, Cross-Review fold teachers, and the
task-agnostic heuristics (length, word rarity, n-gram perplexity).
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import Corpus, tokenize
from .dynamics import TDStats
from .trainer import TrainConfig, predict, train

TD_METRICS = ("confidence", "correctness", "variability")


@dataclass
class DifficultyScores:
    metric_name: str
    scores: dict[str, float]
    higher_is_easier: bool

    def order_easiest_first(self) -> list[str]:
        sign = -1.0 if self.higher_is_easier else 1.0
        return sorted(self.scores, key=lambda eid: (sign * self.scores[eid], eid))


@dataclass
class CrossReviewConfig:
    num_subsets: int = 10
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.num_subsets < 2:
            raise ValueError("num_subsets must be >= 2")


def from_td(
    stats: dict[str, TDStats],
    which: str,
    expected_ids: list[str] | None = None,
) -> DifficultyScores:
    """One of the three dynamics statistics as a difficulty metric.

    Confidence and correctness order easiest-first by high value;
    variability is the auxiliary uncertainty signal (higher = harder).
    """
    if which not in TD_METRICS:
        raise ValueError(f"unknown dynamics metric {which!r}; pick one of {TD_METRICS}")
    if expected_ids is not None:
        for eid in expected_ids:
            if eid not in stats:
                raise ValueError(f"no dynamics statistics for example {eid!r}")
        wanted = set(expected_ids)
        items = {eid: stats[eid] for eid in stats if eid in wanted}
    else:
        items = stats
    return DifficultyScores(
        metric_name=which,
        scores={eid: float(getattr(s, which)) for eid, s in items.items()},
        higher_is_easier=which in ("confidence", "correctness"),
    )


def partition_subsets(ids: list[str], num_subsets: int, seed: int) -> list[list[str]]:
    """Seeded random partition into near-equal subsets; sizes differ by at
    most one, remainder going to the lowest-indexed subsets."""
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    base, extra = divmod(len(ids), num_subsets)
    folds, start = [], 0
    for k in range(num_subsets):
        size = base + (1 if k < extra else 0)
        folds.append(order[start:start + size])
        start += size
    return folds


def cross_review(
    corpus: Corpus, config: CrossReviewConfig, return_folds: bool = False
):
    """Fold-teacher difficulty: train one teacher per subset on that subset
    only, then score every example by the number of correct classifications
    among the teachers from the N-1 *other* subsets.

    With ``return_folds`` the fold partition is returned too (leakage
    audits).
    """
    if config.num_subsets > corpus.size:
        raise ValueError("num_subsets exceeds the train set size")
    folds = partition_subsets(corpus.ids(), config.num_subsets, config.seed)
    min_fold = min(len(f) for f in folds)
    if min_fold < config.train.batch_size:
        raise ValueError(
            f"subset of size {min_fold} is smaller than one batch "
            f"({config.train.batch_size}); use a smaller num_subsets"
        )

    from .curricula import RandomSampler  # runtime import avoids a cycle

    fold_of = {eid: k for k, fold in enumerate(folds) for eid in fold}
    counts = Counter()
    labels = corpus.labels()
    for k, fold in enumerate(folds):
        fold_corpus = corpus.subset(set(fold))
        cfg = replace(config.train, seed=config.train.seed + k)
        sampler = RandomSampler(fold_corpus.ids(), cfg.batch_size, seed=cfg.seed)
        params, _, _ = train(fold_corpus, None, cfg, sampler, collect_probes=False)
        pred = predict(params, corpus)
        for i, ex in enumerate(corpus.examples):
            if fold_of[ex.id] != k and pred[i] == labels[i]:
                counts[ex.id] += 1

    scores = {eid: float(counts.get(eid, 0)) for eid in corpus.ids()}
    result = DifficultyScores(metric_name="cross_review", scores=scores,
                              higher_is_easier=True)
    return (result, folds) if return_folds else result


# --- task-agnostic heuristics ----------------------------------------------


def _segment_tokens(ex) -> tuple[list[str], list[str]]:
    return tokenize(ex.text_a), tokenize(ex.text_b) if ex.text_b else []


def length_metric(corpus: Corpus) -> DifficultyScores:
    """Token count of the entire input (both segments); longer = harder."""
    scores = {ex.id: float(len(ex.tokens)) for ex in corpus.examples}
    return DifficultyScores(metric_name="length", scores=scores, higher_is_easier=False)


def _train_token_counts(train_corpus: Corpus) -> tuple[Counter, int]:
    counts = Counter()
    for ex in train_corpus.examples:
        counts.update(ex.tokens)
    return counts, sum(counts.values())


def rarity_metric(corpus: Corpus, train_corpus: Corpus | None = None) -> DifficultyScores:
    """Negated log-frequency sum over the input's tokens; rarer words push
    the score up. Frequencies come from the train split; a token unseen in
    training falls back to 1/(total + V + 1)."""
    ref = train_corpus if train_corpus is not None else corpus
    counts, total = _train_token_counts(ref)
    vocab = len(counts)
    unseen = 1.0 / (total + vocab + 1)

    def score(ex) -> float:
        s = 0.0
        for tok in ex.tokens:
            f = counts[tok] / total if counts[tok] else unseen
            s -= math.log(f)
        return s

    return DifficultyScores(
        metric_name="rarity",
        scores={ex.id: score(ex) for ex in corpus.examples},
        higher_is_easier=False,
    )


_BOS = "<s>"


class NGramModel:
    """Add-k smoothed unigram/bigram LM over train tokens, per segment."""

    def __init__(self, train_corpus: Corpus, order: int = 2, add_k: float = 1.0):
        if order not in (1, 2):
            raise ValueError(f"n-gram order must be 1 or 2, got {order}")
        if add_k <= 0:
            raise ValueError("add_k must be > 0")
        self.order = order
        self.add_k = add_k
        self.unigram = Counter()
        self.bigram = Counter()
        self.context = Counter()
        for ex in train_corpus.examples:
            for segment in _segment_tokens(ex):
                if not segment:
                    continue
                self.unigram.update(segment)
                prev = _BOS
                for tok in segment:
                    self.bigram[(prev, tok)] += 1
                    self.context[prev] += 1
                    prev = tok
        self.total = sum(self.unigram.values())
        self.vocab_size = len(self.unigram)

    def log_prob(self, token: str, prev: str) -> float:
        v = self.vocab_size
        if self.order == 1:
            num = self.unigram[token] + self.add_k
            den = self.total + self.add_k * v
        else:
            num = self.bigram[(prev, token)] + self.add_k
            den = self.context[prev] + self.add_k * v
        return math.log(num / den)

    def segment_perplexity(self, segment: list[str]) -> float:
        """exp(mean negative log-probability); empty segments contribute 0."""
        if not segment:
            return 0.0
        nll = 0.0
        prev = _BOS
        for tok in segment:
            nll -= self.log_prob(tok, prev)
            prev = tok
        return math.exp(nll / len(segment))


def perplexity_metric(
    corpus: Corpus,
    order: int = 2,
    add_k: float = 1.0,
    train_corpus: Corpus | None = None,
) -> DifficultyScores:
    """Sum of per-segment n-gram perplexities; high perplexity = harder."""
    ref = train_corpus if train_corpus is not None else corpus
    lm = NGramModel(ref, order=order, add_k=add_k)
    scores = {}
    for ex in corpus.examples:
        seg_a, seg_b = _segment_tokens(ex)
        score = lm.segment_perplexity(seg_a)
        if seg_b:
            score += lm.segment_perplexity(seg_b)
        scores[ex.id] = score
    return DifficultyScores(metric_name="ppl", scores=scores, higher_is_easier=False)


# --- on-disk format ---------------------------------------------------------


def write_scores(
    scores: DifficultyScores, path: str | Path, extra_header: dict | None = None
) -> None:
    """Header record {metric_name, higher_is_easier, ...} followed by one
    {example_id, score} record per example."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"metric_name": scores.metric_name,
              "higher_is_easier": scores.higher_is_easier}
    if extra_header:
        header.update(extra_header)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for eid in scores.scores:
            fh.write(json.dumps({"example_id": eid, "score": scores.scores[eid]}) + "\n")


def read_scores_header(path: str | Path) -> dict:
    with Path(path).open("r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
    if "metric_name" not in header:
        raise ValueError(f"{path}: not a difficulty-scores file (missing header)")
    return header


def read_scores(path: str | Path) -> DifficultyScores:
    header = read_scores_header(path)
    scores: dict[str, float] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            rec = json.loads(line)
            scores[rec["example_id"]] = float(rec["score"])
    return DifficultyScores(
        metric_name=str(header["metric_name"]),
        scores=scores,
        higher_is_easier=bool(header["higher_is_easier"]),
    )
