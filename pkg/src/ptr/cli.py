"""Command-line entry point: compile, inspect, reverse, gen, init-model,
train, eval, sweep.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric
failure.  The PTR_SEED environment variable overrides any --seed flag.  Every
training run writes a manifest capturing the resolved configuration, seeds,
and input digests; ``ptr train --manifest`` re-runs it bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .compiler import compile_spec, reverse_relations, write_schema
from .data import generate_synthetic, load_jsonl, merge_token_sets, write_jsonl
from .errors import DataError, NumericError, PtrError
from .metrics import (
    EvalReport,
    format_report_csv,
    format_sweep_csv,
    format_sweep_detail_csv,
    sweep_fewshot,
)
from .model import ModelConfig, TinyMLM
from .rules import parse_task_spec, print_task_spec, validate
from .training import TrainConfig, evaluate_dataset, history_csv, train
from .vocab import Vocab

MANIFEST_FORMAT = "ptr-manifest/1"


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _read_spec(path: str):
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such file: {p}")
    return parse_task_spec(p.read_text(encoding="utf-8"))


def _resolve_seed(flag_value: int) -> int:
    env = os.environ.get("PTR_SEED")
    return int(env) if env else flag_value


def _load_profile(name_or_path: str) -> dict:
    path = Path(name_or_path)
    if path.exists():
        return tomllib.loads(path.read_text(encoding="utf-8"))
    builtin = resources.files("ptr.configs").joinpath(f"{name_or_path}.toml")
    if builtin.is_file():
        return tomllib.loads(builtin.read_text(encoding="utf-8"))
    raise DataError(f"no such config profile or file: {name_or_path}")


def _train_config(profile: dict, seed: int | None, objective: str | None) -> TrainConfig:
    cfg = TrainConfig(**profile.get("train", {}))
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if objective is not None:
        cfg = replace(cfg, objective=objective)
    return cfg


def _model_config(profile: dict, n_classes: int) -> ModelConfig:
    return ModelConfig(**profile.get("model", {}), n_classes=n_classes)


def _sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _input_entry(path: str | Path) -> dict:
    return {"path": str(Path(path).resolve()), "sha256": _sha256(path)}


def _echo_report(report: EvalReport) -> None:
    click.echo(
        f"micro-P {report.micro_precision:.4f}  micro-R {report.micro_recall:.4f}  "
        f"micro-F1 {report.micro_f1:.4f}  (negative excluded: "
        f"{report.negative_class or 'none'})"
    )
    click.echo(
        f"all classes pooled: P {report.micro_precision_all:.4f}  "
        f"R {report.micro_recall_all:.4f}  F1 {report.micro_f1_all:.4f}"
    )


def _report_doc(report: EvalReport) -> dict:
    doc = asdict(report)
    doc["per_class"] = {cls: asdict(c) for cls, c in report.per_class.items()}
    return doc


# ---------------------------------------------------------------------------
# command group
# ---------------------------------------------------------------------------


@click.group(name="ptr")
@click.version_option(__version__, prog_name="ptr")
def cli() -> None:
    """Rule-composed prompt templates over a desk-scale masked LM."""


@cli.command("compile")
@click.argument("spec_path", metavar="SPEC")
@click.option("--out", "out_path", required=True, help="Schema JSON destination.")
def compile_cmd(spec_path: str, out_path: str) -> None:
    """Compile a rule file into a canonical prompt schema document."""
    spec = _read_spec(spec_path)
    schema = compile_spec(spec)
    write_schema(schema, out_path)
    for finding in validate(spec).warnings:
        click.echo(f"warning: {finding.message}", err=True)
    click.echo(f"wrote {out_path}")
    click.echo(f"template: {schema.template_string}")


@cli.command("inspect")
@click.argument("spec_path", metavar="SPEC")
def inspect_cmd(spec_path: str) -> None:
    """Pretty-print the compiled template and the per-class phrase table."""
    spec = _read_spec(spec_path)
    schema = compile_spec(spec)
    click.echo(f"template: {schema.template_string}")
    click.echo(f"masks: {schema.n_masks}   learnable tokens: {schema.learnable_count}")
    if schema.reversed_classes:
        click.echo("reversed classes: " + ", ".join(schema.reversed_classes))
    click.echo("")
    rows = schema.verbalizer_table()
    headers = ["class"] + [f"[MASK]{j + 1}" for j in range(schema.n_masks)]
    table = [[cls, *phrases] for cls, phrases in rows]
    widths = [max(len(headers[c]), *(len(r[c]) for r in table)) for c in range(len(headers))]
    click.echo("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for row in table:
        click.echo("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    report = validate(spec)
    for finding in report.warnings:
        click.echo(f"warning: {finding.message}", err=True)


@cli.command("reverse")
@click.argument("spec_path", metavar="SPEC")
@click.option("--classes", "class_list", default="", help="Comma-separated classes to reverse.")
@click.option("--all", "reverse_all", is_flag=True, help="Reverse every class.")
@click.option("--out", "out_path", required=True, help="Destination .ptr file.")
def reverse_cmd(spec_path: str, class_list: str, reverse_all: bool, out_path: str) -> None:
    """Swap subject/object role bindings for selected classes."""
    spec = _read_spec(spec_path)
    if reverse_all:
        subset = list(spec.classes)
    else:
        subset = [c.strip() for c in class_list.split(",") if c.strip()]
        if not subset:
            raise click.UsageError("pass --classes or --all")
    reversed_spec = reverse_relations(spec, subset)
    Path(out_path).write_text(print_task_spec(reversed_spec), encoding="utf-8")
    click.echo(f"wrote {out_path} ({len(subset)} class(es) toggled)")


@cli.command("gen")
@click.option("--spec", "spec_path", required=True)
@click.option("--n", "n_per_class", type=int, required=True, help="Instances per class.")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--noise", type=float, default=0.0, show_default=True,
              help="Fraction relabeled to a random wrong class.")
@click.option("--split", default="synthetic", show_default=True)
@click.option("--out", "out_path", required=True)
def gen_cmd(spec_path: str, n_per_class: int, seed: int, noise: float, split: str,
            out_path: str) -> None:
    """Generate a synthetic labeled corpus from a rule file."""
    spec = _read_spec(spec_path)
    seed = _resolve_seed(seed)
    dataset = generate_synthetic(spec, n_per_class, seed, noise, split)
    write_jsonl(dataset, out_path)
    click.echo(f"wrote {len(dataset)} instances over {len(dataset.classes)} classes "
               f"to {out_path}")


@cli.command("init-model")
@click.option("--spec", "spec_path", required=True)
@click.option("--data", "data_paths", multiple=True,
              help="JSONL files whose tokens enter the vocabulary (repeatable).")
@click.option("--config", "config_name", default="desk", show_default=True,
              help="Profile name (desk, paper) or a TOML path.")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--out", "out_path", required=True)
def init_model_cmd(spec_path: str, data_paths: tuple[str, ...], config_name: str,
                   seed: int, out_path: str) -> None:
    """Initialize a fresh model checkpoint for a compiled rule file."""
    spec = _read_spec(spec_path)
    schema = compile_spec(spec)
    seed = _resolve_seed(seed)
    profile = _load_profile(config_name)
    datasets = [load_jsonl(p) for p in data_paths]
    vocab = Vocab.build(schema, [merge_token_sets(datasets)])
    model = TinyMLM.init(_model_config(profile, len(schema.classes)), vocab, seed)
    model.save(out_path, schema)
    click.echo(f"wrote {out_path} ({model.param_count()} parameters, "
               f"vocab {len(vocab)}, backend {model.backend_name})")


def _run_training(spec_path: str, data_path: str, dev_path: str, config_name: str,
                  seed: int, objective: str | None, negative_class: str | None,
                  vocab_paths: tuple[str, ...], out_dir: str) -> None:
    spec = _read_spec(spec_path)
    schema = compile_spec(spec)
    profile = _load_profile(config_name)
    cfg = _train_config(profile, seed, objective)
    train_set = load_jsonl(data_path, classes=spec.classes)
    dev_set = load_jsonl(dev_path, classes=spec.classes)
    extra_sets = [load_jsonl(p) for p in vocab_paths]
    vocab = Vocab.build(schema, [merge_token_sets([train_set, dev_set, *extra_sets])])
    model = TinyMLM.init(_model_config(profile, len(schema.classes)), vocab, cfg.seed)

    result = train(model, schema, train_set, dev_set, cfg, negative_class)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.model.save(out / "model.json", schema)
    (out / "history.csv").write_text(history_csv(result.history), encoding="utf-8",
                                     newline="\n")
    manifest = {
        "format": MANIFEST_FORMAT,
        "tool_version": __version__,
        "command": "train",
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "seed": cfg.seed,
        "train_config": asdict(cfg),
        "model_config": asdict(result.model.config),
        "backend": result.model.backend_name,
        "negative_class": negative_class,
        "config_profile": config_name,
        "inputs": {
            "spec": _input_entry(spec_path),
            "train": _input_entry(data_path),
            "dev": _input_entry(dev_path),
            "vocab_extra": [_input_entry(p) for p in vocab_paths],
        },
        "outputs": {"model": "model.json", "history": "history.csv"},
        "best_epoch": result.best_epoch,
        "epoch_dev_f1": result.epoch_dev_f1,
        "dev_missing": result.dev_missing,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8", newline="\n",
    )
    if result.dev_missing:
        click.echo("warning: empty dev set; returned the final checkpoint", err=True)
    for epoch, f1 in enumerate(result.epoch_dev_f1, start=1):
        marker = "  <- best" if epoch == result.best_epoch else ""
        click.echo(f"epoch {epoch}: dev micro-F1 {f1:.4f}{marker}")
    click.echo(f"wrote {out / 'model.json'}, history.csv, manifest.json")


@cli.command("train")
@click.option("--spec", "spec_path", default=None)
@click.option("--data", "data_path", default=None, help="Training JSONL.")
@click.option("--dev", "dev_path", default=None, help="Development JSONL.")
@click.option("--config", "config_name", default="desk", show_default=True)
@click.option("--seed", type=int, default=None, help="Overrides the profile seed.")
@click.option("--objective", type=click.Choice(["ptr", "cls-baseline"]), default=None)
@click.option("--negative-class", default=None)
@click.option("--vocab-data", "vocab_paths", multiple=True,
              help="Extra JSONL whose tokens must be in-vocabulary (e.g. the test set).")
@click.option("--manifest", "manifest_path", default=None,
              help="Re-run a previous training from its manifest.")
@click.option("--out", "out_dir", required=True, help="Run directory.")
def train_cmd(spec_path, data_path, dev_path, config_name, seed, objective,
              negative_class, vocab_paths, manifest_path, out_dir) -> None:
    """Train a model; writes model.json, history.csv, and manifest.json."""
    if manifest_path:
        doc = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
        if doc.get("format") != MANIFEST_FORMAT:
            raise DataError(f"unsupported manifest format {doc.get('format')!r}")
        for name in ("spec", "train", "dev"):
            entry = doc["inputs"][name]
            if _sha256(entry["path"]) != entry["sha256"]:
                raise DataError(f"manifest input {name!r} changed on disk: {entry['path']}")
        cfg = doc["train_config"]
        _run_training(
            doc["inputs"]["spec"]["path"], doc["inputs"]["train"]["path"],
            doc["inputs"]["dev"]["path"], doc["config_profile"], cfg["seed"],
            cfg["objective"], doc.get("negative_class"),
            tuple(e["path"] for e in doc["inputs"].get("vocab_extra", [])), out_dir,
        )
        return
    if not (spec_path and data_path and dev_path):
        raise click.UsageError("--spec, --data, and --dev are required (or --manifest)")
    seed = _resolve_seed(seed) if (seed is not None or os.environ.get("PTR_SEED")) else None
    _run_training(spec_path, data_path, dev_path, config_name, seed, objective,
                  negative_class, vocab_paths, out_dir)


@cli.command("eval")
@click.option("--model", "model_path", required=True)
@click.option("--data", "data_path", required=True)
@click.option("--objective", type=click.Choice(["ptr", "cls-baseline"]), default="ptr",
              show_default=True)
@click.option("--negative-class", default=None)
@click.option("--report", "report_path", default=None, help="Report JSON destination.")
@click.option("--csv", "csv_path", default=None, help="Report CSV destination.")
@click.option("--preds", "preds_path", default=None, help="Per-instance predictions JSONL.")
def eval_cmd(model_path, data_path, objective, negative_class, report_path, csv_path,
             preds_path) -> None:
    """Evaluate a checkpoint on a JSONL dataset."""
    model, schema = TinyMLM.load(model_path)
    if schema is None:
        raise DataError("checkpoint carries no schema; re-save it with one")
    dataset = load_jsonl(data_path, classes=schema.classes)
    report, preds = evaluate_dataset(model, schema, dataset, objective, negative_class)
    _echo_report(report)
    if report_path:
        Path(report_path).write_text(
            json.dumps(_report_doc(report), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8", newline="\n",
        )
    if csv_path:
        Path(csv_path).write_text(format_report_csv(report), encoding="utf-8", newline="\n")
    if preds_path:
        with open(preds_path, "w", encoding="utf-8") as fh:
            for inst, pred in zip(dataset, preds):
                fh.write(json.dumps({"id": inst.id, "gold": inst.label, "pred": pred},
                                    ensure_ascii=False) + "\n")


@cli.command("sweep")
@click.option("--fewshot", is_flag=True, default=True, show_default=True,
              help="Few-shot protocol (the only sweep kind).")
@click.option("--spec", "spec_path", required=True)
@click.option("--data", "pool_path", required=True, help="Sampling pool JSONL.")
@click.option("--test", "test_path", required=True, help="Held-out test JSONL.")
@click.option("--config", "config_name", default="desk", show_default=True)
@click.option("--k", "ks", multiple=True, type=int, help="K values (repeatable).")
@click.option("--seeds", "seed_list", default=None, help="Comma-separated seeds.")
@click.option("--methods", default="ptr,cls-baseline", show_default=True)
@click.option("--out", "out_path", required=True, help="Sweep CSV destination.")
@click.option("--detail", "detail_path", default=None, help="Per-cell detail CSV.")
def sweep_cmd(fewshot, spec_path, pool_path, test_path, config_name, ks, seed_list,
              methods, out_path, detail_path) -> None:
    """Run the few-shot sweep; emits a method-by-K CSV of mean F1."""
    spec = _read_spec(spec_path)
    profile = _load_profile(config_name)
    fewshot_cfg = profile.get("fewshot", {})
    ks = tuple(ks) or tuple(fewshot_cfg.get("ks", (8, 16, 32)))
    if seed_list:
        seeds = tuple(int(s) for s in seed_list.split(","))
    else:
        seeds = tuple(fewshot_cfg.get("seeds", (1, 2, 3, 4, 5)))
    if os.environ.get("PTR_SEED"):
        seeds = (int(os.environ["PTR_SEED"]),)
    pool = load_jsonl(pool_path, classes=spec.classes)
    test_set = load_jsonl(test_path, classes=spec.classes)
    cfg = _train_config(profile, None, None)
    model_config = _model_config(profile, len(spec.classes))
    table = sweep_fewshot(spec, pool, test_set, model_config, ks, seeds, cfg,
                          methods=tuple(m.strip() for m in methods.split(",")))
    Path(out_path).write_text(format_sweep_csv(table), encoding="utf-8", newline="\n")
    if detail_path:
        Path(detail_path).write_text(format_sweep_detail_csv(table), encoding="utf-8",
                                     newline="\n")
    click.echo(format_sweep_csv(table), nl=False)
    failures = [
        f"{method} K={k}: {err}"
        for (method, k), cell in table.cells.items() for err in cell.errors
    ]
    for failure in failures:
        click.echo(f"warning: {failure}", err=True)


def main(argv=None) -> int:
    """Console entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except NumericError as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        return 3
    except PtrError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
