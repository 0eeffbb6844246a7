"""Micro-averaged F1 with negative-class exclusion, plus the few-shot sweep.

Scoring convention (the usual one for relation classification): predicting
the negative class is abstention, so it never counts as a true or false
positive; a missed non-negative gold is a false negative.  Reports carry the
all-classes-pooled variant alongside, but the negative-excluded figure is the
primary metric everywhere (dev selection, sweeps, CLI output).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DataError


@dataclass(frozen=True)
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass(frozen=True)
class EvalReport:
    micro_precision: float
    micro_recall: float
    micro_f1: float
    micro_precision_all: float
    micro_recall_all: float
    micro_f1_all: float
    per_class: dict[str, ClassCounts]
    n_instances: int
    negative_class: str | None


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp > 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def micro_f1(preds: Sequence[str], golds: Sequence[str],
             negative_class: str | None = None) -> EvalReport:
    """Pooled precision/recall/F1 over all non-negative classes."""
    if len(preds) != len(golds):
        raise DataError(f"{len(preds)} predictions vs {len(golds)} gold labels")
    if not preds:
        raise DataError("empty evaluation input")
    counts: dict[str, dict[str, int]] = {}

    def bucket(cls: str) -> dict[str, int]:
        return counts.setdefault(cls, {"tp": 0, "fp": 0, "fn": 0})

    for pred, gold in zip(preds, golds):
        if pred == gold:
            bucket(gold)["tp"] += 1
        else:
            bucket(pred)["fp"] += 1
            bucket(gold)["fn"] += 1

    def pooled(exclude: str | None) -> tuple[float, float, float]:
        tp = sum(c["tp"] for cls, c in counts.items() if cls != exclude)
        fp = sum(c["fp"] for cls, c in counts.items() if cls != exclude)
        fn = sum(c["fn"] for cls, c in counts.items() if cls != exclude)
        return _prf(tp, fp, fn)

    p, r, f1 = pooled(negative_class)
    pa, ra, f1a = pooled(None)
    per_class = {cls: ClassCounts(c["tp"], c["fp"], c["fn"]) for cls, c in sorted(counts.items())}
    return EvalReport(p, r, f1, pa, ra, f1a, per_class, len(preds), negative_class)


# ---------------------------------------------------------------------------
# few-shot sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepCell:
    mean: float
    std: float
    values: tuple[float, ...]
    errors: tuple[str, ...] = ()


@dataclass(frozen=True)
class SweepTable:
    """Rows are methods, columns are K values; cells aggregate seeds."""

    ks: tuple[int, ...]
    methods: tuple[str, ...]
    cells: dict[tuple[str, int], SweepCell]

    def row_mean(self, method: str) -> float:
        means = [self.cells[(method, k)].mean for k in self.ks]
        return sum(means) / len(means) if means else 0.0


def _aggregate(values: list[float], errors: list[str]) -> SweepCell:
    if not values:
        return SweepCell(0.0, 0.0, (), tuple(errors))
    mean = sum(values) / len(values)
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
    return SweepCell(mean, std, tuple(values), tuple(errors))


def sweep_fewshot(spec, pool: "Dataset", test_set: "Dataset", model_config,
                  ks: Sequence[int], seeds: Sequence[int], train_cfg,
                  methods: Sequence[str] = ("ptr", "cls-baseline"),
                  negative_class: str | None = None,
                  model_seed: int = 0) -> SweepTable:
    """Sample-train-evaluate every (method, K, seed) cell.

    Per-cell failures are recorded in the cell and the sweep continues.
    Results are independent of cell execution order: every cell re-samples
    and re-initializes from its own seeds.
    """
    from dataclasses import replace

    from .compiler import compile_spec
    from .model import TinyMLM
    from .training import evaluate_dataset, few_shot_sample, train
    from .vocab import Vocab

    schema = compile_spec(spec)
    vocab = Vocab.build(schema, [pool.token_set(), test_set.token_set()])
    cells: dict[tuple[str, int], SweepCell] = {}
    for method in methods:
        for k in ks:
            values: list[float] = []
            errors: list[str] = []
            for seed in seeds:
                try:
                    sample = few_shot_sample(pool, k, seed)
                    cfg = replace(train_cfg, seed=seed, objective=method)
                    model = TinyMLM.init(model_config, vocab, model_seed + seed)
                    result = train(model, schema, sample.train, sample.dev, cfg,
                                   negative_class)
                    report, _ = evaluate_dataset(result.model, schema, test_set,
                                                 method, negative_class)
                    values.append(report.micro_f1)
                except Exception as exc:  # cell isolation is the contract
                    errors.append(f"seed {seed}: {exc}")
            cells[(method, k)] = _aggregate(values, errors)
    return SweepTable(tuple(ks), tuple(methods), cells)


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _pct(value: float) -> str:
    return f"{100.0 * value:.1f}"


def format_report_csv(report: EvalReport) -> str:
    """Single-row CSV; percentages with one decimal, LF endings."""
    header = "n,precision,recall,f1,precision_all,recall_all,f1_all"
    row = ",".join([
        str(report.n_instances),
        _pct(report.micro_precision), _pct(report.micro_recall), _pct(report.micro_f1),
        _pct(report.micro_precision_all), _pct(report.micro_recall_all),
        _pct(report.micro_f1_all),
    ])
    return header + "\n" + row + "\n"


def format_sweep_csv(table: SweepTable) -> str:
    """Method rows, one column per K plus the cross-K mean."""
    header = "method," + ",".join(str(k) for k in table.ks) + ",Mean"
    lines = [header]
    for method in table.methods:
        cols = [_pct(table.cells[(method, k)].mean) for k in table.ks]
        lines.append(",".join([method, *cols, _pct(table.row_mean(method))]))
    return "\n".join(lines) + "\n"


def format_sweep_detail_csv(table: SweepTable) -> str:
    """Per-cell detail: mean, std, and every seed value."""
    lines = ["method,k,mean,std,values,errors"]
    for method in table.methods:
        for k in table.ks:
            cell = table.cells[(method, k)]
            values = ";".join(_pct(v) for v in cell.values)
            errors = ";".join(cell.errors).replace(",", " ")
            lines.append(f"{method},{k},{_pct(cell.mean)},{_pct(cell.std)},{values},{errors}")
    return "\n".join(lines) + "\n"
