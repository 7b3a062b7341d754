"""Training-dynamics statistics.

Converts per-epoch probes into the three per-example statistics used as
difficulty measures: confidence (mean gold-label probability), correctness
(number of epochs classified correctly) and variability (population
standard deviation of the gold-label probability).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .trainer import EpochProbe


@dataclass
class DynamicsTrace:
    example_id: str
    probs: list[float]
    corrects: list[bool]


@dataclass
class TDStats:
    example_id: str
    confidence: float
    correctness: int
    variability: float


def confidence(trace: DynamicsTrace) -> float:
    """Mean gold-label probability across epochs."""
    if not trace.probs:
        raise ValueError(f"empty trace for {trace.example_id!r}")
    return sum(trace.probs) / len(trace.probs)


def correctness(trace: DynamicsTrace) -> int:
    """Number of epochs the example was classified correctly."""
    if not trace.corrects:
        raise ValueError(f"empty trace for {trace.example_id!r}")
    return sum(1 for c in trace.corrects if c)


def variability(trace: DynamicsTrace) -> float:
    """Population standard deviation (divide by E) of the gold-label
    probability across epochs. Exactly 0 for a constant trace."""
    if not trace.probs:
        raise ValueError(f"empty trace for {trace.example_id!r}")
    if all(p == trace.probs[0] for p in trace.probs):
        return 0.0
    mu = confidence(trace)
    return math.sqrt(sum((p - mu) ** 2 for p in trace.probs) / len(trace.probs))


def stats_for(trace: DynamicsTrace) -> TDStats:
    return TDStats(
        example_id=trace.example_id,
        confidence=confidence(trace),
        correctness=correctness(trace),
        variability=variability(trace),
    )


def compute_all(probes: list[EpochProbe]) -> dict[str, TDStats]:
    """One TDStats per example; every probe must cover the identical id set."""
    if not probes:
        raise ValueError("no probes given")
    base_ids = set(probes[0].gold_prob)
    for probe in probes[1:]:
        diff = base_ids.symmetric_difference(probe.gold_prob)
        if diff:
            raise ValueError(
                f"probe for epoch {probe.epoch} disagrees on example id "
                f"{min(diff)!r}"
            )
    out: dict[str, TDStats] = {}
    for eid in probes[0].gold_prob:
        trace = DynamicsTrace(
            example_id=eid,
            probs=[p.gold_prob[eid] for p in probes],
            corrects=[p.correct[eid] for p in probes],
        )
        out[eid] = stats_for(trace)
    return out


def write_td_stats(stats: dict[str, TDStats], path: str | Path) -> None:
    """JSONL {example_id, confidence, correctness, variability}; the Stage-1
    to Stage-2 hand-off artifact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for eid in stats:
            s = stats[eid]
            fh.write(json.dumps(
                {"example_id": s.example_id, "confidence": s.confidence,
                 "correctness": s.correctness, "variability": s.variability}
            ) + "\n")


def read_td_stats(path: str | Path) -> dict[str, TDStats]:
    out: dict[str, TDStats] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            out[rec["example_id"]] = TDStats(
                example_id=rec["example_id"],
                confidence=float(rec["confidence"]),
                correctness=int(rec["correctness"]),
                variability=float(rec["variability"]),
            )
    return out
