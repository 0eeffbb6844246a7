"""Rule-composed multi-mask prompt templates over a desk-scale masked LM.

Declare conditional functions and per-class conjunction rules in a small
rule language, compile them into a multi-mask prompt schema with per-position
label-phrase vocabularies, and train either the joint-mask objective or a
plain classifier-head baseline on a self-contained tiny encoder.
"""

__version__ = "0.1.0"

from .compiler import (
    PromptSchema,
    RenderedInput,
    compile_spec,
    render,
    reverse_relations,
)
from .data import Dataset, Instance, generate_synthetic, load_jsonl, write_jsonl
from .errors import (
    CompileError,
    DataError,
    NumericError,
    PtrError,
    RenderError,
    SpecError,
)
from .metrics import EvalReport, micro_f1, sweep_fewshot
from .model import ModelConfig, TinyMLM
from .rules import (
    Predicate,
    Rule,
    TaskSpec,
    TemplateElement,
    parse_task_spec,
    print_task_spec,
    validate,
)
from .scoring import ClassScores, MaskDistributions, joint_class_distribution, nll_loss, predict
from .training import (
    FewShotConfig,
    TrainConfig,
    TrainResult,
    evaluate_dataset,
    few_shot_sample,
    train,
)
from .vocab import Vocab

__all__ = [
    "ClassScores",
    "CompileError",
    "DataError",
    "Dataset",
    "EvalReport",
    "FewShotConfig",
    "Instance",
    "MaskDistributions",
    "ModelConfig",
    "NumericError",
    "Predicate",
    "PromptSchema",
    "PtrError",
    "RenderError",
    "RenderedInput",
    "Rule",
    "SpecError",
    "TaskSpec",
    "TemplateElement",
    "TinyMLM",
    "TrainConfig",
    "TrainResult",
    "Vocab",
    "compile_spec",
    "evaluate_dataset",
    "few_shot_sample",
    "generate_synthetic",
    "joint_class_distribution",
    "load_jsonl",
    "micro_f1",
    "nll_loss",
    "parse_task_spec",
    "predict",
    "print_task_spec",
    "render",
    "reverse_relations",
    "sweep_fewshot",
    "train",
    "validate",
    "write_jsonl",
]
