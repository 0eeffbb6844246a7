"""Training loop, checkpoint selection, and the few-shot sampling protocol.

Training is single-threaded and fully deterministic: given the same config,
seed, and data, histories and best-model parameters repeat bit for bit in
double precision.  Each epoch reshuffles with a NumPy PCG64 stream seeded
once from the config seed; batches are taken in order without dropping the
remainder.  Dev micro-F1 (negative class excluded when one is named) is
evaluated after every epoch and the checkpoint with the best score wins,
earliest epoch on ties.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .compiler import PromptSchema, render
from .data import Dataset, Instance
from .errors import DataError
from .metrics import micro_f1
from .model import OBJECTIVES, PTR_OBJECTIVE, EncodedExample, TinyMLM
from .optim import AdamState, adam_step, lr_at
from .rng import SplitMix64, fold_string
from .scoring import MaskDistributions, joint_class_distribution

DEFAULT_FEWSHOT_SEEDS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer schedule and batching knobs.

    Desk-scale defaults; the bundled paper profile raises batch size to 64
    and drops the learning rate to 3e-5.
    """

    learning_rate: float = 1e-3
    warmup_fraction: float = 0.10
    weight_decay: float = 1e-2
    epochs: int = 5
    batch_size: int = 16
    seed: int = 1
    objective: str = PTR_OBJECTIVE

    def __post_init__(self):
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError(f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")


@dataclass(frozen=True)
class FewShotConfig:
    k: int = 8
    seeds: tuple[int, ...] = DEFAULT_FEWSHOT_SEEDS

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")


class StepRecord(NamedTuple):
    step: int
    lr: float
    loss: float


@dataclass
class TrainResult:
    model: TinyMLM
    history: list[StepRecord]
    epoch_dev_f1: list[float]
    best_epoch: int
    dev_missing: bool = False


def prepare_examples(model: TinyMLM, schema: PromptSchema, dataset: Dataset,
                     objective: str) -> list[EncodedExample]:
    """Render and index a dataset once, up front."""
    class_index = {cls: i for i, cls in enumerate(schema.classes)}
    out: list[EncodedExample] = []
    for inst in dataset:
        if inst.label not in class_index:
            raise DataError(f"instance {inst.id!r} has label {inst.label!r} "
                            f"outside the schema classes")
        if objective == PTR_OBJECTIVE:
            rendered = render(schema, inst)
            ids = model.frame_ids(rendered.tokens)
            out.append(EncodedExample(
                ids=ids,
                instance_id=inst.id,
                mask_positions=tuple(p + 1 for p in rendered.mask_positions),
                mask_targets=schema.verbalizer[inst.label],
            ))
        else:
            ids = model.frame_ids(inst.tokens)
            out.append(EncodedExample(
                ids=ids, instance_id=inst.id, gold_class=class_index[inst.label],
            ))
    return out


def _predict_example(model: TinyMLM, schema: PromptSchema, example: EncodedExample,
                     candidate_ids, objective: str) -> str:
    hidden, _ = model._forward_ids(example.ids)
    if objective == PTR_OBJECTIVE:
        vecs = tuple(
            model.mask_distribution(hidden[pos], candidate_ids[j])
            for j, pos in enumerate(example.mask_positions)
        )
        return joint_class_distribution(MaskDistributions(vecs), schema).predicted
    probs = model.cls_head(hidden[0])
    return schema.classes[int(np.argmax(probs))]


def evaluate_dataset(model: TinyMLM, schema: PromptSchema, dataset: Dataset,
                     objective: str = PTR_OBJECTIVE,
                     negative_class: str | None = None):
    """Micro-F1 report for a dataset under either objective."""
    examples = prepare_examples(model, schema, dataset, objective)
    cands = model.candidate_ids(schema) if objective == PTR_OBJECTIVE else None
    preds = [_predict_example(model, schema, ex, cands, objective) for ex in examples]
    golds = [inst.label for inst in dataset]
    return micro_f1(preds, golds, negative_class), preds


def train(model: TinyMLM, schema: PromptSchema, train_set: Dataset, dev_set: Dataset,
          cfg: TrainConfig, negative_class: str | None = None) -> TrainResult:
    """Optimize a copy of ``model``; returns the best-on-dev checkpoint.

    Never mutates its inputs.  With an empty dev set the final checkpoint is
    returned and flagged via ``dev_missing``.
    """
    if len(train_set) == 0:
        raise DataError("empty training set")
    work = model.copy()
    examples = prepare_examples(work, schema, train_set, cfg.objective)
    cands = work.candidate_ids(schema) if cfg.objective == PTR_OBJECTIVE else None
    dev_examples = prepare_examples(work, schema, dev_set, cfg.objective)
    dev_golds = [inst.label for inst in dev_set]

    n_batches = (len(examples) + cfg.batch_size - 1) // cfg.batch_size
    total_steps = cfg.epochs * n_batches
    history: list[StepRecord] = []
    epoch_dev_f1: list[float] = []
    if cfg.epochs == 0:
        return TrainResult(work, history, epoch_dev_f1, best_epoch=0,
                           dev_missing=not dev_examples)

    state = AdamState.for_params(work.params)
    shuffler = np.random.default_rng(np.random.PCG64(cfg.seed))
    best_f1 = -1.0
    best_epoch = 0
    best_params: dict[str, np.ndarray] | None = None
    step = 0
    for epoch in range(cfg.epochs):
        order = shuffler.permutation(len(examples))
        for b in range(n_batches):
            batch = [examples[i] for i in order[b * cfg.batch_size : (b + 1) * cfg.batch_size]]
            loss, grads = work.loss_and_grads(batch, cfg.objective, cands)
            step += 1
            lr = lr_at(step, total_steps, cfg.learning_rate, cfg.warmup_fraction)
            adam_step(work.params, grads, state, lr, cfg.weight_decay)
            history.append(StepRecord(step, lr, loss))
        if dev_examples:
            preds = [_predict_example(work, schema, ex, cands, cfg.objective)
                     for ex in dev_examples]
            f1 = micro_f1(preds, dev_golds, negative_class).micro_f1
            epoch_dev_f1.append(f1)
            if f1 > best_f1:
                best_f1 = f1
                best_epoch = epoch + 1
                best_params = {k: v.copy() for k, v in work.params.items()}

    if best_params is not None:
        best = TinyMLM(work.config, work.vocab, best_params)
        return TrainResult(best, history, epoch_dev_f1, best_epoch)
    return TrainResult(work, history, epoch_dev_f1, best_epoch=cfg.epochs,
                       dev_missing=True)


# ---------------------------------------------------------------------------
# few-shot sampling
# ---------------------------------------------------------------------------


class FewShotSample(NamedTuple):
    train: Dataset
    dev: Dataset
    shortfall: dict[str, int]  # class -> instances available below the 2K ask


def few_shot_sample(dataset: Dataset, k: int, seed: int) -> FewShotSample:
    """Draw K train + K dev instances per class, disjoint, reproducibly.

    Algorithm (frozen so subsets are portable across implementations): for
    each class in sorted order, collect its instances in dataset order, run a
    partial Fisher-Yates shuffle driven by splitmix64 seeded with
    ``fold_string(seed, class_name)``, then take the first K for train and
    the next K for dev.  Classes with fewer than 2K instances contribute what
    they have (train side first) and are flagged.
    """
    groups = dataset.by_class()
    train_rows: list[Instance] = []
    dev_rows: list[Instance] = []
    shortfall: dict[str, int] = {}
    for cls in sorted(groups):
        rows = list(groups[cls])
        rng = SplitMix64(fold_string(seed, cls))
        rng.shuffle_prefix(rows, min(2 * k, len(rows)))
        take_train = min(k, len(rows))
        take_dev = min(k, len(rows) - take_train)
        train_rows.extend(rows[:take_train])
        dev_rows.extend(rows[take_train : take_train + take_dev])
        if len(rows) < 2 * k:
            shortfall[cls] = len(rows)
    return FewShotSample(
        Dataset(tuple(train_rows), dataset.classes, f"{dataset.split}-k{k}-s{seed}-train"),
        Dataset(tuple(dev_rows), dataset.classes, f"{dataset.split}-k{k}-s{seed}-dev"),
        shortfall,
    )


# ---------------------------------------------------------------------------
# history file
# ---------------------------------------------------------------------------


def history_csv(history: Sequence[StepRecord]) -> str:
    """Byte-stable CSV (step, lr, loss) with full-precision floats."""
    lines = ["step,lr,loss"]
    for rec in history:
        lines.append(f"{rec.step},{rec.lr!r},{rec.loss!r}")
    return "\n".join(lines) + "\n"
