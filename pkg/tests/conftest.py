from importlib import resources

import pytest

from ptr import (
    ModelConfig,
    TinyMLM,
    Vocab,
    compile_spec,
    generate_synthetic,
    parse_task_spec,
)


def bundled_spec_text(name: str) -> str:
    return resources.files("ptr.specs").joinpath(f"{name}.ptr").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def tacred_spec():
    return parse_task_spec(bundled_spec_text("tacred"))


@pytest.fixture(scope="session")
def semeval_spec():
    return parse_task_spec(bundled_spec_text("semeval"))


@pytest.fixture(scope="session")
def synth_spec():
    return parse_task_spec(bundled_spec_text("synth4"))


@pytest.fixture(scope="session")
def synth_schema(synth_spec):
    return compile_spec(synth_spec)


@pytest.fixture(scope="session")
def synth_corpus(synth_spec):
    return generate_synthetic(synth_spec, 10, seed=11, split="unit")


@pytest.fixture(scope="session")
def synth_vocab(synth_schema, synth_corpus):
    return Vocab.build(synth_schema, [synth_corpus.token_set()])


@pytest.fixture(scope="session")
def synth_model(synth_schema, synth_vocab):
    config = ModelConfig(n_classes=len(synth_schema.classes))
    return TinyMLM.init(config, synth_vocab, seed=3)
