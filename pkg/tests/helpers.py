"""Shared test utilities: random schema/distribution generators and oracles."""

import itertools

import numpy as np

from ptr.compiler import PromptSchema
from ptr.rules import TemplateElement
from ptr.scoring import MaskDistributions


def random_schema(rng: np.random.Generator, max_masks: int = 4) -> PromptSchema:
    """A random well-formed schema: injective verbalizer, 1..max_masks masks."""
    n_masks = int(rng.integers(1, max_masks + 1))
    sizes = [int(rng.integers(2, 7)) for _ in range(n_masks)]
    vocabs = tuple(
        tuple(f"w{j}_{i}" for i in range(size)) for j, size in enumerate(sizes)
    )
    all_tuples = list(itertools.product(*(range(s) for s in sizes)))
    rng.shuffle(all_tuples)
    n_classes = int(rng.integers(1, min(len(all_tuples), 6) + 1))
    classes = tuple(f"c{i}" for i in range(n_classes))
    verbalizer = {cls: tuple(all_tuples[i]) for i, cls in enumerate(classes)}
    elements = [TemplateElement.text()]
    for _ in range(n_masks):
        elements.append(TemplateElement.mask())
    return PromptSchema(
        elements=tuple(elements),
        n_masks=n_masks,
        mask_vocabs=vocabs,
        verbalizer=verbalizer,
        classes=classes,
        learnable_count=0,
    )


def random_distributions(rng: np.random.Generator, schema: PromptSchema) -> MaskDistributions:
    vecs = []
    for vocab_j in schema.mask_vocabs:
        raw = rng.random(len(vocab_j)) + 1e-3
        vecs.append(raw / raw.sum())
    return MaskDistributions(tuple(vecs))


def fd_max_rel_error(model, batch, objective, cands, n_coords: int, step: float,
                     seed: int) -> float:
    """Central finite differences vs analytic gradients on sampled coordinates.

    Independent of the backward pass: only the loss-forward path is called.
    Relative error uses max(|fd|, |analytic|, 1e-8) in the denominator.
    """
    _, grads = model.loss_and_grads(batch, objective, cands)
    rng = np.random.default_rng(seed)
    names = sorted(model.params)
    sizes = np.array([model.params[n].size for n in names], dtype=float)
    worst = 0.0
    for _ in range(n_coords):
        name = names[int(rng.choice(len(names), p=sizes / sizes.sum()))]
        arr = model.params[name]
        idx = np.unravel_index(int(rng.integers(arr.size)), arr.shape)
        orig = arr[idx]
        arr[idx] = orig + step
        plus = model.loss_only(batch, objective, cands)
        arr[idx] = orig - step
        minus = model.loss_only(batch, objective, cands)
        arr[idx] = orig
        fd = (plus - minus) / (2.0 * step)
        an = grads[name][idx]
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
    return worst


def brute_force_scores(dists: MaskDistributions, schema: PromptSchema):
    """Enumerate every phrase tuple and multiply probabilities directly.

    Returns (per-class scores, total mass over all tuples, argmax class with
    first-class-wins tie-break).
    """
    sizes = [len(v) for v in schema.mask_vocabs]
    total = 0.0
    tuple_mass: dict[tuple, float] = {}
    for combo in itertools.product(*(range(s) for s in sizes)):
        p = 1.0
        for j, idx in enumerate(combo):
            p *= float(dists.per_position[j][idx])
        tuple_mass[combo] = p
        total += p
    scores = {cls: tuple_mass[schema.verbalizer[cls]] for cls in schema.classes}
    best_cls = schema.classes[0]
    best = -1.0
    for cls in schema.classes:
        if scores[cls] > best:
            best = scores[cls]
            best_cls = cls
    return scores, total, best_cls
