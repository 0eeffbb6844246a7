#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the NumPy fallback.

Times a full training step (forward + backward over a batch) and the raw
encoder forward at a few sequence lengths, then prints a table with the
speedup.  Run after installing the package:

    python benchmarks/bench_kernels.py [--batch 16] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time
from importlib import resources

from ptr import ModelConfig, TinyMLM, Vocab, compile_spec, generate_synthetic, parse_task_spec
from ptr.kernels import HAVE_COMPILED
from ptr.training import prepare_examples


def _build(backend: str, seed: int = 3):
    spec = parse_task_spec(resources.files("ptr.specs").joinpath("synth4.ptr").read_text())
    schema = compile_spec(spec)
    dataset = generate_synthetic(spec, 40, seed=11)
    vocab = Vocab.build(schema, [dataset.token_set()])
    config = ModelConfig(n_classes=len(schema.classes), backend=backend)
    model = TinyMLM.init(config, vocab, seed)
    examples = prepare_examples(model, schema, dataset, "ptr")
    cands = model.candidate_ids(schema)
    return model, schema, examples, cands


def _time(fn, repeats: int) -> float:
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=16)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = ["numpy"] + (["compiled"] if HAVE_COMPILED else [])
    if not HAVE_COMPILED:
        print("note: compiled extension not built; benchmarking NumPy only\n")

    rows = []
    for backend in backends:
        model, schema, examples, cands = _build(backend)
        batch = examples[: args.batch]
        step = _time(lambda: model.loss_and_grads(batch, "ptr", cands), args.repeats)
        fwd = _time(lambda: model.loss_only(batch, "ptr", cands), args.repeats)
        rows.append((backend, step, fwd))
        # correctness cross-check while we are here
        loss, _ = model.loss_and_grads(batch, "ptr", cands)
        rows[-1] += (loss,)

    print(f"batch={args.batch}  dim=64  layers=2  heads=4  (best of {args.repeats})")
    print(f"{'backend':10s} {'step (fwd+bwd)':>16s} {'forward only':>14s} {'loss':>10s}")
    for backend, step, fwd, loss in rows:
        print(f"{backend:10s} {1e3 * step:13.2f} ms {1e3 * fwd:11.2f} ms {loss:10.6f}")
    if len(rows) == 2:
        print(f"\nspeedup: {rows[0][1] / rows[1][1]:.2f}x on the training step, "
              f"{rows[0][2] / rows[1][2]:.2f}x on the forward pass")
        if abs(rows[0][3] - rows[1][3]) > 1e-9:
            print("WARNING: backends disagree on the loss")


if __name__ == "__main__":
    main()
