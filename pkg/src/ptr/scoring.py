"""Turn per-mask probability vectors into class scores, losses, predictions.

The joint score of a class is the product over mask positions of the
probability its phrase receives there.  Scores are deliberately *not*
renormalized over the class set: the sum over classes is bounded by 1 (each
class owns a distinct phrase tuple) but usually below it, because phrase
tuples that name no class also carry mass.  :meth:`ClassScores.normalized`
exists for reporting only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .compiler import PromptSchema, render
from .data import Instance

LOG_CLAMP = 1e-12
SUM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class MaskDistributions:
    """One probability vector per mask position, vector j over vocabulary j."""

    per_position: tuple[np.ndarray, ...]

    def __post_init__(self):
        for j, vec in enumerate(self.per_position):
            if vec.ndim != 1 or len(vec) == 0:
                raise ValueError(f"position {j}: expected a non-empty vector")
            if np.any(vec < 0):
                raise ValueError(f"position {j}: negative probability")
            total = float(vec.sum())
            if abs(total - 1.0) > SUM_TOL:
                raise ValueError(f"position {j}: probabilities sum to {total}, not 1")

    def __len__(self) -> int:
        return len(self.per_position)


@dataclass(frozen=True)
class ClassScores:
    """Joint per-class probabilities and the argmax class."""

    scores: dict[str, float]
    predicted: str

    def normalized(self) -> dict[str, float]:
        """Scores rescaled to sum to 1; for reporting, never for training."""
        total = sum(self.scores.values())
        if total <= 0.0:
            n = len(self.scores)
            return {cls: 1.0 / n for cls in self.scores}
        return {cls: v / total for cls, v in self.scores.items()}


def _check_shapes(dists: MaskDistributions, schema: PromptSchema) -> None:
    if len(dists) != schema.n_masks:
        raise ValueError(
            f"got {len(dists)} mask distributions for a {schema.n_masks}-mask schema"
        )
    for j, vec in enumerate(dists.per_position):
        if len(vec) != len(schema.mask_vocabs[j]):
            raise ValueError(
                f"position {j}: vector length {len(vec)} != vocabulary size "
                f"{len(schema.mask_vocabs[j])}"
            )


def joint_class_distribution(dists: MaskDistributions, schema: PromptSchema) -> ClassScores:
    """Product of per-position phrase probabilities, one score per class.

    Ties at the argmax resolve to the earliest class in schema order.
    """
    _check_shapes(dists, schema)
    scores: dict[str, float] = {}
    best_cls = schema.classes[0]
    best = -1.0
    for cls in schema.classes:
        p = 1.0
        for j, idx in enumerate(schema.verbalizer[cls]):
            p *= float(dists.per_position[j][idx])
        scores[cls] = p
        if p > best:
            best = p
            best_cls = cls
    return ClassScores(scores, best_cls)


def nll_loss(dists_batch: Sequence[MaskDistributions], gold: Sequence[str],
             schema: PromptSchema) -> float:
    """Mean negative log joint probability of the gold phrase tuples.

    Equals the sum over mask positions of per-position cross-entropies,
    averaged over the batch.  Probabilities are clamped at 1e-12 before the
    log so untrained models yield large finite losses instead of infinities.
    """
    if len(dists_batch) == 0:
        raise ValueError("empty batch")
    if len(dists_batch) != len(gold):
        raise ValueError(f"{len(dists_batch)} distributions vs {len(gold)} gold labels")
    total = 0.0
    for dists, cls in zip(dists_batch, gold):
        _check_shapes(dists, schema)
        if cls not in schema.verbalizer:
            raise ValueError(f"gold label {cls!r} is not a schema class")
        for j, idx in enumerate(schema.verbalizer[cls]):
            total -= float(np.log(max(float(dists.per_position[j][idx]), LOG_CLAMP)))
    return total / len(dists_batch)


def predict(model, schema: PromptSchema, instance: Instance) -> str:
    """Argmax class for one instance under a trained (or fresh) model."""
    rendered = render(schema, instance)
    dists = model.mask_distributions(schema, rendered)
    return joint_class_distribution(dists, schema).predicted


def predict_many(model, schema: PromptSchema, instances: Sequence[Instance]) -> list[str]:
    return [predict(model, schema, inst) for inst in instances]
