"""Acceptance criteria for the whole package.

Each test exercises one numbered criterion end to end at its stated tolerance
and prints one pass line (run with ``pytest tests/test_acceptance.py -v -s``
to see them).  Quantitative targets run on the bundled synthetic task at desk
scale; the full-scale figures from the large-encoder experiments are out of
scope by design.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from ptr import (
    ModelConfig,
    TinyMLM,
    TrainConfig,
    Vocab,
    compile_spec,
    generate_synthetic,
    joint_class_distribution,
    render,
    reverse_relations,
    train,
)
from ptr.cli import main as cli_main
from ptr.data import Instance, merge_token_sets
from ptr.metrics import sweep_fewshot
from ptr.optim import lr_at
from ptr.training import DEFAULT_FEWSHOT_SEEDS, evaluate_dataset, few_shot_sample, prepare_examples

from conftest import bundled_spec_text
from helpers import brute_force_scores, fd_max_rel_error, random_distributions, random_schema

TABLE_ROWS = {
    "per:country_of_birth": ("person", "was born in", "country"),
    "per:stateorprovince_of_birth": ("person", "was born in", "state"),
    "per:city_of_birth": ("person", "was born in", "city"),
    "per:employee_of": ("person", "'s employee was", "organization"),
    "per:parents": ("person", "'s parent was", "person"),
    "per:age": ("person", "'s age was", "number"),
    "org:founded_by": ("organization", "was founded by", "person"),
    "org:country_of_headquarters": ("organization", "was located in", "country"),
    "org:stateorprovince_of_headquarters": ("organization", "was located in", "state"),
    "org:city_of_headquarters": ("organization", "was located in", "city"),
    "org:number_of_employees/members": ("organization", "'s employer has", "number"),
    "org:members": ("organization", "'s member was", "organization"),
    "org:parents": ("organization", "'s parent was", "organization"),
    "no_relation": ("entity", "is irrelevant to", "entity"),
}

TWAIN = Instance(
    tokens=tuple("Mark Twain was born in Florida .".split()),
    subj_span=(0, 2), obj_span=(5, 6), label="per:city_of_birth", id="twain",
)


def _report(n: int, name: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"[criterion {n}] {name}: PASS{suffix}")


def test_criterion_1_compiler_goldens(tacred_spec, semeval_spec):
    t0 = time.perf_counter()
    schema = compile_spec(tacred_spec)
    assert schema.template_string == "<text> the [MASK] <subj> [MASK] the [MASK] <obj>"
    table = dict(schema.verbalizer_table())
    assert len(table) == 14
    for cls, phrases in TABLE_ROWS.items():
        assert table[cls] == phrases, f"{cls}: {table[cls]} != {phrases}"
    sem = compile_spec(semeval_spec)
    assert sem.template_string == "<text> The [MASK] <subj> was [MASK] to the [MASK] <obj>"
    assert "was [MASK] to the [MASK]" in sem.template_string
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    _report(1, "compiler goldens", f"{elapsed * 1e3:.0f} ms")


def test_criterion_2_scoring_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20_240_001)
    for _ in range(1000):
        schema = random_schema(rng)
        dists = random_distributions(rng, schema)
        for vec in dists.per_position:
            assert abs(float(vec.sum()) - 1.0) <= 1e-6
        scores = joint_class_distribution(dists, schema)
        assert sum(scores.scores.values()) <= 1.0 + 1e-6
        oracle_scores, total, oracle_pred = brute_force_scores(dists, schema)
        assert abs(total - 1.0) <= 1e-6
        for cls in schema.classes:
            assert abs(scores.scores[cls] - oracle_scores[cls]) <= 1e-9
        assert scores.predicted == oracle_pred
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    _report(2, "scoring invariants", f"1000 schemas in {elapsed:.1f} s")


def test_criterion_3_gradient_correctness(synth_spec, synth_schema):
    t0 = time.perf_counter()
    corpus = generate_synthetic(synth_spec, 4, seed=77)
    vocab = Vocab.build(synth_schema, [corpus.token_set()])
    worst = 0.0
    for seed in range(5):
        config = ModelConfig(n_classes=len(synth_schema.classes))  # d=64, L=2
        model = TinyMLM.init(config, vocab, seed=seed)
        examples = prepare_examples(model, synth_schema, corpus, "ptr")
        batch = examples[seed : seed + 4]
        cands = model.candidate_ids(synth_schema)
        err = fd_max_rel_error(model, batch, "ptr", cands,
                               n_coords=64, step=1e-3, seed=seed)
        worst = max(worst, err)
        assert err <= 1e-4, f"seed {seed}: max relative error {err:.3e}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0
    _report(3, "gradient correctness", f"max rel err {worst:.2e} in {elapsed:.1f} s")


def test_criterion_4_learning_works(synth_spec, synth_schema):
    t0 = time.perf_counter()
    train_set = generate_synthetic(synth_spec, 200, seed=11, noise_rate=0.0, split="train")
    dev_set = generate_synthetic(synth_spec, 25, seed=12, split="dev")
    test_set = generate_synthetic(synth_spec, 50, seed=13, split="test")
    vocab = Vocab.build(synth_schema, [merge_token_sets([train_set, dev_set, test_set])])
    model = TinyMLM.init(ModelConfig(n_classes=4), vocab, seed=1)
    cfg = TrainConfig()  # desk defaults: 5 epochs
    result = train(model, synth_schema, train_set, dev_set, cfg)
    report, _ = evaluate_dataset(result.model, synth_schema, test_set, "ptr")
    loss_ratio = result.history[-1].loss / result.history[0].loss
    assert report.micro_f1 >= 0.95, f"test micro-F1 {report.micro_f1:.3f}"
    assert loss_ratio < 0.25, f"final/initial loss ratio {loss_ratio:.3f}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0
    _report(4, "learning works",
            f"test F1 {report.micro_f1:.3f}, loss ratio {loss_ratio:.3f}, {elapsed:.0f} s")


def test_criterion_5_fewshot_beats_baseline(synth_spec):
    t0 = time.perf_counter()
    pool = generate_synthetic(synth_spec, 60, seed=21, split="pool")
    test_set = generate_synthetic(synth_spec, 50, seed=22, split="test")
    table = sweep_fewshot(
        synth_spec, pool, test_set, ModelConfig(n_classes=4),
        ks=(8,), seeds=DEFAULT_FEWSHOT_SEEDS,
        train_cfg=TrainConfig(epochs=5, batch_size=8),
        methods=("ptr", "cls-baseline"),
    )
    ptr_cell = table.cells[("ptr", 8)]
    cls_cell = table.cells[("cls-baseline", 8)]
    assert not ptr_cell.errors and not cls_cell.errors
    margin = ptr_cell.mean - cls_cell.mean
    assert ptr_cell.mean >= cls_cell.mean, (
        f"PTR {ptr_cell.mean:.3f} < baseline {cls_cell.mean:.3f}"
    )
    elapsed = time.perf_counter() - t0
    assert elapsed < 900.0
    _report(5, "few-shot joint-mask objective vs classifier head",
            f"K=8 mean F1 {ptr_cell.mean:.3f} vs {cls_cell.mean:.3f}, "
            f"margin +{margin:.3f}, {elapsed:.0f} s")


def test_criterion_6_reversal_mechanics(tacred_spec, synth_spec):
    # involution
    subset = ("per:parents", "org:members", "per:city_of_birth")
    assert reverse_relations(reverse_relations(tacred_spec, subset), subset) == tacred_spec

    # byte-exact reversed rendering of the fixture sentence
    reversed_schema = compile_spec(reverse_relations(tacred_spec, tacred_spec.classes))
    rendered = render(reversed_schema, TWAIN)
    framed = " ".join(["[CLS]", *rendered.tokens, "[SEP]"])
    assert framed == (
        "[CLS] Mark Twain was born in Florida . "
        "the [MASK] Florida [MASK] the [MASK] Mark Twain [SEP]"
    )

    # direction information survives reversal: train both ways, compare F1
    train_set = generate_synthetic(synth_spec, 100, seed=31, split="train")
    dev_set = generate_synthetic(synth_spec, 20, seed=32, split="dev")
    test_set = generate_synthetic(synth_spec, 40, seed=33, split="test")
    tokens = merge_token_sets([train_set, dev_set, test_set])
    scores = {}
    for name, spec_variant in (
        ("normal", synth_spec),
        ("reversed", reverse_relations(synth_spec, synth_spec.classes)),
    ):
        schema = compile_spec(spec_variant)
        vocab = Vocab.build(schema, [tokens])
        model = TinyMLM.init(ModelConfig(n_classes=4), vocab, seed=5)
        result = train(model, schema, train_set, dev_set, TrainConfig(seed=5))
        report, _ = evaluate_dataset(result.model, schema, test_set, "ptr")
        scores[name] = report.micro_f1
    diff = abs(scores["normal"] - scores["reversed"])
    assert diff <= 0.05, f"normal {scores['normal']:.3f} vs reversed {scores['reversed']:.3f}"
    _report(6, "reversal mechanics",
            f"F1 normal {scores['normal']:.3f} / reversed {scores['reversed']:.3f}, "
            f"|diff| {diff:.3f}")


def test_criterion_7_determinism_via_cli(tmp_path):
    spec = tmp_path / "synth4.ptr"
    spec.write_text(bundled_spec_text("synth4"), encoding="utf-8")
    files = {}
    for name, (n, seed) in {"train": (12, 1), "dev": (4, 2), "test": (6, 3)}.items():
        files[name] = tmp_path / f"{name}.jsonl"
        assert cli_main(["gen", "--spec", str(spec), "--n", str(n), "--seed", str(seed),
                         "--out", str(files[name])]) == 0
    first = tmp_path / "first"
    assert cli_main(["train", "--spec", str(spec), "--data", str(files["train"]),
                     "--dev", str(files["dev"]), "--vocab-data", str(files["test"]),
                     "--seed", "7", "--out", str(first)]) == 0
    manifest = first / "manifest.json"
    runs = []
    for i in (1, 2):
        out = tmp_path / f"rerun{i}"
        assert cli_main(["train", "--manifest", str(manifest), "--out", str(out)]) == 0
        preds = tmp_path / f"preds{i}.jsonl"
        assert cli_main(["eval", "--model", str(out / "model.json"),
                         "--data", str(files["test"]), "--preds", str(preds)]) == 0
        runs.append((out, preds))
    (run_a, preds_a), (run_b, preds_b) = runs
    assert (run_a / "history.csv").read_bytes() == (run_b / "history.csv").read_bytes()
    assert (first / "history.csv").read_bytes() == (run_a / "history.csv").read_bytes()
    assert preds_a.read_bytes() == preds_b.read_bytes()
    _report(7, "determinism", "bit-identical history.csv and test predictions")


def test_criterion_8_protocol_fidelity(synth_spec):
    # frozen subsets for the five default seeds (regenerated identically
    # on every platform by the documented splitmix64 Fisher-Yates sampler)
    pool = generate_synthetic(synth_spec, 20, seed=7, split="pool")
    expected_train = {
        1: ("synth-7-00048", "synth-7-00044", "synth-7-00011", "synth-7-00006",
            "synth-7-00033", "synth-7-00037", "synth-7-00075", "synth-7-00067"),
        2: ("synth-7-00044", "synth-7-00045", "synth-7-00019", "synth-7-00000",
            "synth-7-00026", "synth-7-00025", "synth-7-00077", "synth-7-00079"),
        3: ("synth-7-00052", "synth-7-00040", "synth-7-00002", "synth-7-00018",
            "synth-7-00035", "synth-7-00038", "synth-7-00066", "synth-7-00065"),
        4: ("synth-7-00048", "synth-7-00056", "synth-7-00011", "synth-7-00014",
            "synth-7-00026", "synth-7-00027", "synth-7-00078", "synth-7-00072"),
        5: ("synth-7-00056", "synth-7-00047", "synth-7-00012", "synth-7-00015",
            "synth-7-00029", "synth-7-00026", "synth-7-00077", "synth-7-00063"),
    }
    assert DEFAULT_FEWSHOT_SEEDS == (1, 2, 3, 4, 5)
    for seed in DEFAULT_FEWSHOT_SEEDS:
        sample = few_shot_sample(pool, 2, seed)
        assert tuple(i.id for i in sample.train) == expected_train[seed], f"seed {seed}"
        assert not {i.id for i in sample.train} & {i.id for i in sample.dev}

    # schedule shape, exact at every integer step
    import math

    for total in (10, 100, 237):
        warmup = math.ceil(0.10 * total)
        values = [lr_at(step, total, 3e-5, 0.10) for step in range(total + 1)]
        assert values[warmup] == 3e-5  # peak exactly at the warmup boundary
        assert values[-1] == 0.0
        assert max(values) == 3e-5
        for step in range(total + 1):
            if step <= warmup:
                want = 3e-5 * float(Fraction(step, warmup))
            else:
                want = 3e-5 * float(Fraction(total - step, total - warmup))
            assert values[step] == pytest.approx(want, rel=1e-12)
    _report(8, "protocol fidelity", "frozen subsets + exact schedule shape")
