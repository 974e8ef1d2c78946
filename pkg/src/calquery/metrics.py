"""Per-query answer-set metrics shared by calibration and benchmarking.

Both sides must score answers identically (the calibrated risk is the
mean of exactly this loss), so this is the only implementation.
Abstentions (empty answer sets) score zero recall and zero precision.
"""

from __future__ import annotations

from typing import AbstractSet


def recall(answers: AbstractSet[int], truth: AbstractSet[int]) -> float:
    if not truth:
        return 1.0
    if not answers:
        return 0.0
    return len(answers & truth) / len(truth)


def fnr_loss(answers: AbstractSet[int], truth: AbstractSet[int]) -> float:
    """False-negative-rate loss: 1 - recall."""
    return 1.0 - recall(answers, truth)


def precision(answers: AbstractSet[int], truth: AbstractSet[int]) -> float:
    if not answers:
        return 0.0
    return len(answers & truth) / len(answers)
