"""Curriculum schedulers behind the trainer's sampler contract.

Two families plus the random baseline:

* annealing: discrete buckets of equal integer difficulty score, trained
  easiest-first for one epoch each, carrying a fresh 1/(E+1) sample of every
  earlier bucket along; optionally ordering each stage by variability.
* competence: a monotone pacing function admits a growing easiest-first
  prefix of the train set; batches are drawn from the admitted pool with
  replacement, uniformly or proportionally to variability.

Every scheduler falls back to plain seeded-shuffle epochs over the full
train set once its curriculum phase ends.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .corpus import Corpus
    from .difficulty import DifficultyScores

VARIABILITY_EPS = 1e-6


def competence(t: float, c0: float, duration: float) -> float:
    """Square-root pacing: the fraction of easiest data admitted at step t.

    c(0) = c0 and c(t >= duration) = 1, both exact; strictly increasing in
    between.
    """
    if t <= 0:
        return c0
    if t >= duration:
        return 1.0
    return min(1.0, math.sqrt(t * (1.0 - c0 * c0) / duration + c0 * c0))


def linear_competence(t: float, c0: float, duration: float) -> float:
    """Linear pacing alternative with the same endpoints."""
    if t <= 0:
        return c0
    if t >= duration:
        return 1.0
    return min(1.0, c0 + t * (1.0 - c0) / duration)


_COMPETENCE_FORMS = {"sqrt": competence, "linear": linear_competence}


def _weighted_order(rng: np.random.Generator, ids: list[str],
                    weights: np.ndarray) -> list[str]:
    # Weighted shuffle (Efraimidis-Spirakis): sorting by log(u)/w descending
    # is equivalent to sequential weighted draws without replacement.
    u = rng.random(len(ids))
    keys = np.log(u) / weights
    return [ids[i] for i in np.argsort(-keys, kind="stable")]


class _EpochShuffler:
    """Fresh seeded shuffle per epoch, consumed without replacement."""

    def __init__(self, ids: list[str], batch_size: int, rng: np.random.Generator):
        self.ids = list(ids)
        self.batch_size = batch_size
        self.rng = rng
        self._queue: list[str] = []

    def next_batch(self) -> list[str]:
        if not self._queue:
            perm = self.rng.permutation(len(self.ids))
            self._queue = [self.ids[i] for i in perm]
        batch = self._queue[: self.batch_size]
        del self._queue[: self.batch_size]
        return batch


class RandomSampler:
    """Baseline: shuffle-epochs over the whole train set."""

    def __init__(self, corpus_or_ids, batch_size: int, seed: int = 0):
        ids = corpus_or_ids.ids() if hasattr(corpus_or_ids, "ids") else list(corpus_or_ids)
        if not ids:
            raise ValueError("no examples to sample from")
        self.batch_size = batch_size
        self._shuffler = _EpochShuffler(ids, batch_size, np.random.default_rng(seed))
        self._n = len(ids)

    @property
    def phase(self) -> str:
        return "post-curriculum"

    def epoch_length(self) -> int:
        return math.ceil(self._n / self.batch_size)

    def next_batch(self, step: int) -> list[str]:
        return self._shuffler.next_batch()


@dataclass
class AnnealingPlan:
    buckets: list[list[str]]  # easiest-first; each bucket sorted by id
    num_epochs: int           # carryover fraction is 1/(num_epochs + 1)
    variability_weighted: bool = False
    weights: dict[str, float] | None = None

    @property
    def num_buckets(self) -> int:
        return len(self.buckets)


def build_annealing_plan(
    scores: "DifficultyScores",
    num_epochs: int,
    variability: dict[str, float] | None = None,
    variability_weighted: bool = False,
) -> AnnealingPlan:
    """Group examples by identical integer score into easiest-first buckets.

    Only integer-valued metrics (correctness, cross-review votes) can be
    bucketed this way; continuous metrics belong to the competence
    scheduler.
    """
    for eid, s in scores.scores.items():
        if not float(s).is_integer():
            raise ValueError(
                f"score {s} for {eid!r} is not an integer; use the "
                "competence scheduler for continuous metrics"
            )
    by_value: dict[int, list[str]] = {}
    for eid, s in scores.scores.items():
        by_value.setdefault(int(s), []).append(eid)
    values = sorted(by_value, reverse=scores.higher_is_easier)
    buckets = [sorted(by_value[v]) for v in values]
    if variability_weighted and variability is None:
        raise ValueError("variability weights required for weighted annealing")
    return AnnealingPlan(
        buckets=buckets,
        num_epochs=num_epochs,
        variability_weighted=variability_weighted,
        weights=dict(variability) if variability else None,
    )


def annealing_stage_pool_sizes(plan: AnnealingPlan) -> list[int]:
    """Deterministic pool size per stage:
    |d_k| + sum over j<k of floor(|d_j| / (E+1))."""
    denom = plan.num_epochs + 1
    sizes = []
    carry = 0
    for k, bucket in enumerate(plan.buckets):
        sizes.append(len(bucket) + carry)
        carry += len(bucket) // denom
    return sizes


class AnnealingSampler:
    """Stage k serves bucket d_k plus a fresh uniform carryover sample of
    floor(|d_j|/(E+1)) ids from each earlier bucket, shuffled once and
    consumed without replacement (weighted by variability when asked);
    after the last stage, plain shuffle-epochs over everything.
    """

    def __init__(self, plan: AnnealingPlan, batch_size: int, seed: int = 0):
        if batch_size <= 0:
            raise ValueError("batch_size must be positive")
        for k, size in enumerate(annealing_stage_pool_sizes(plan)):
            if batch_size > size:
                raise ValueError(
                    f"batch_size {batch_size} exceeds the stage-{k + 1} pool "
                    f"size {size}"
                )
        self.plan = plan
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self._all_ids = [eid for bucket in plan.buckets for eid in bucket]
        self._stage = 0
        self._queue: list[str] = []
        self._post: _EpochShuffler | None = None
        self.stage_log: list[list[str]] = []  # pool actually built per stage

    @property
    def phase(self) -> str:
        return "post-curriculum" if self._post is not None else "curriculum"

    def epoch_length(self) -> int:
        return math.ceil(len(self._all_ids) / self.batch_size)

    def _enter_next_stage(self) -> None:
        k = self._stage  # 0-based index of the stage being entered
        denom = self.plan.num_epochs + 1
        pool = list(self.plan.buckets[k])
        for j in range(k):
            take = len(self.plan.buckets[j]) // denom
            if take > 0:
                picks = self.rng.choice(len(self.plan.buckets[j]), size=take,
                                        replace=False)
                pool.extend(self.plan.buckets[j][i] for i in sorted(int(p) for p in picks))
        if self.plan.variability_weighted:
            weights = np.array(
                [self.plan.weights.get(eid, 0.0) + VARIABILITY_EPS for eid in pool]
            )
            ordered = _weighted_order(self.rng, pool, weights)
        else:
            perm = self.rng.permutation(len(pool))
            ordered = [pool[i] for i in perm]
        self.stage_log.append(list(pool))
        self._queue = ordered
        self._stage += 1

    def next_batch(self, step: int) -> list[str]:
        if self._post is not None:
            return self._post.next_batch()
        if not self._queue:
            if self._stage < self.plan.num_buckets:
                self._enter_next_stage()
            else:
                self._post = _EpochShuffler(self._all_ids, self.batch_size, self.rng)
                return self._post.next_batch()
        batch = self._queue[: self.batch_size]
        del self._queue[: self.batch_size]
        return batch


@dataclass
class CompetencePlan:
    # ordering is easiest-first; ties broken by ascending variability, then id
    ordering: list[str]
    c0: float = 0.01
    duration: int = 1
    variability_weighted: bool = False
    weights: dict[str, float] | None = None
    form: str = "sqrt"

    def __post_init__(self):
        if not 0.0 < self.c0 <= 1.0:
            raise ValueError("c0 must be in (0, 1]")
        if self.duration <= 0:
            raise ValueError("duration must be a positive step count")
        if self.form not in _COMPETENCE_FORMS:
            raise ValueError(f"unknown competence form {self.form!r}")


def build_competence_plan(
    scores: "DifficultyScores",
    c0: float,
    duration: int,
    variability: dict[str, float] | None = None,
    variability_weighted: bool = False,
    form: str = "sqrt",
) -> CompetencePlan:
    sign = -1.0 if scores.higher_is_easier else 1.0
    var = variability or {}
    ordering = sorted(
        scores.scores,
        key=lambda eid: (sign * scores.scores[eid], var.get(eid, 0.0), eid),
    )
    if variability_weighted and variability is None:
        raise ValueError("variability weights required for weighted competence")
    return CompetencePlan(
        ordering=ordering,
        c0=c0,
        duration=duration,
        variability_weighted=variability_weighted,
        weights=dict(variability) if variability else None,
        form=form,
    )


class CompetenceSampler:
    """At step t the first ceil(c(t) * N) ids of the easiest-first ordering
    are available; batches are drawn from them with replacement (uniformly,
    or proportionally to variability + eps). Past the duration, uniform
    shuffle-epochs over the full set."""

    def __init__(self, plan: CompetencePlan, batch_size: int,
                 steps_per_epoch: int, seed: int = 0):
        if batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if steps_per_epoch <= 0:
            raise ValueError("steps_per_epoch must be positive")
        self.plan = plan
        self.batch_size = batch_size
        self.steps_per_epoch = steps_per_epoch
        self.rng = np.random.default_rng(seed)
        self._n = len(plan.ordering)
        self._pacing = _COMPETENCE_FORMS[plan.form]
        if plan.variability_weighted:
            self._weights = np.array(
                [plan.weights.get(eid, 0.0) + VARIABILITY_EPS for eid in plan.ordering]
            )
        else:
            self._weights = None
        self._post: _EpochShuffler | None = None

    @property
    def phase(self) -> str:
        return "post-curriculum" if self._post is not None else "curriculum"

    def epoch_length(self) -> int:
        return self.steps_per_epoch

    def available_count(self, step: int) -> int:
        c = self._pacing(step, self.plan.c0, self.plan.duration)
        return min(self._n, max(1, math.ceil(c * self._n)))

    def next_batch(self, step: int) -> list[str]:
        if step > self.plan.duration:
            if self._post is None:
                self._post = _EpochShuffler(
                    list(self.plan.ordering), self.batch_size, self.rng
                )
            return self._post.next_batch()
        m = self.available_count(step)
        if self._weights is not None:
            p = self._weights[:m] / self._weights[:m].sum()
            picks = self.rng.choice(m, size=self.batch_size, replace=True, p=p)
        else:
            picks = self.rng.integers(0, m, size=self.batch_size)
        return [self.plan.ordering[int(i)] for i in picks]


def plan_summary(plan) -> dict:
    """Audit-friendly JSON view of a plan (bucket sizes / pacing knobs and
    an ordering digest)."""
    if plan is None:
        return {"scheduler": "random"}
    if isinstance(plan, AnnealingPlan):
        ids = [eid for bucket in plan.buckets for eid in bucket]
        return {
            "scheduler": "annealing",
            "bucket_sizes": [len(b) for b in plan.buckets],
            "carryover_denominator": plan.num_epochs + 1,
            "variability_weighted": plan.variability_weighted,
            "ordering_digest": _digest(ids),
        }
    if isinstance(plan, CompetencePlan):
        return {
            "scheduler": "competence",
            "size": len(plan.ordering),
            "c0": plan.c0,
            "duration": plan.duration,
            "form": plan.form,
            "variability_weighted": plan.variability_weighted,
            "ordering_digest": _digest(plan.ordering),
        }
    raise TypeError(f"not a plan: {type(plan).__name__}")


def _digest(ids: list[str]) -> str:
    h = hashlib.sha256()
    for eid in ids:
        h.update(eid.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()
