"""A self-contained desk-scale masked language model with exact backprop.

Architecture: token + position embeddings feed a stack of post-norm encoder
blocks (multi-head self-attention, then a GELU feed-forward, each followed by
a residual add and layer norm).  Mask positions are scored against candidate
label phrases with tied embeddings (the input embedding row of a phrase is
its output weight vector; no output bias), and a separate affine softmax head
over the class set serves the fine-tuning baseline.  Learnable prompt tokens
are ordinary vocabulary entries ([L0], [L1], ...) whose embedding rows train
like any other.

Everything is NumPy/compiled-kernel code with hand-derived gradients; the
test suite checks them against central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .compiler import PromptSchema, RenderedInput, schema_from_doc, schema_to_doc
from .errors import DataError, NumericError
from .scoring import LOG_CLAMP, MaskDistributions
from .vocab import CLS_ID, SEP_ID, Vocab

MODEL_FORMAT = "ptr-model/1"

PTR_OBJECTIVE = "ptr"
CLS_OBJECTIVE = "cls-baseline"
OBJECTIVES = (PTR_OBJECTIVE, CLS_OBJECTIVE)


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 64
    layers: int = 2
    heads: int = 4
    ff_dim: int = 256
    max_len: int = 64
    vocab_size: int = 0
    n_classes: int = 0
    dtype: str = "float64"
    backend: str = "auto"
    ln_eps: float = 1e-5
    init_scale: float = 0.02

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64 or float32, got {self.dtype!r}")


@dataclass(frozen=True)
class EncodedExample:
    """One training example, already framed with [CLS]/[SEP] and indexed.

    ``mask_targets[j]`` is the gold phrase's position within mask j's
    candidate vocabulary; ``gold_class`` indexes the class inventory for the
    baseline head.
    """

    ids: np.ndarray
    instance_id: str
    mask_positions: tuple[int, ...] = ()
    mask_targets: tuple[int, ...] = ()
    gold_class: int = -1


def expected_param_count(config: ModelConfig) -> int:
    """Closed-form parameter count implied by a config."""
    d, ff = config.dim, config.ff_dim
    emb = config.vocab_size * d + config.max_len * d
    attn = 4 * (d * d + d)
    norms = 2 * (2 * d)
    ffn = d * ff + ff + ff * d + d
    head = config.n_classes * d + config.n_classes
    return emb + config.layers * (attn + norms + ffn) + head


class TinyMLM:
    """Parameter container plus forward/backward passes."""

    def __init__(self, config: ModelConfig, vocab: Vocab, params: dict[str, np.ndarray]):
        if config.vocab_size != len(vocab):
            raise ValueError("config vocab_size disagrees with the vocabulary")
        self.config = config
        self.vocab = vocab
        self.params = params
        self._kernels, self.backend_name = kernels.select(config.dtype, config.backend)
        for name, arr in params.items():
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"parameter {name!r} contains non-finite values")

    # -- construction -------------------------------------------------------

    @classmethod
    def init(cls, config: ModelConfig, vocab: Vocab, seed: int) -> "TinyMLM":
        """Fresh model; weight matrices and embeddings drawn from N(0, 0.02)."""
        config = replace(config, vocab_size=len(vocab))
        rng = np.random.default_rng(np.random.PCG64(seed))
        dt = np.dtype(config.dtype)
        d, ff = config.dim, config.ff_dim

        def normal(*shape):
            return (rng.standard_normal(shape) * config.init_scale).astype(dt)

        params: dict[str, np.ndarray] = {
            "tok_emb": normal(config.vocab_size, d),
            "pos_emb": normal(config.max_len, d),
        }
        for i in range(config.layers):
            p = f"block{i}."
            params[p + "attn_wq"] = normal(d, d)
            params[p + "attn_bq"] = np.zeros(d, dtype=dt)
            params[p + "attn_wk"] = normal(d, d)
            params[p + "attn_bk"] = np.zeros(d, dtype=dt)
            params[p + "attn_wv"] = normal(d, d)
            params[p + "attn_bv"] = np.zeros(d, dtype=dt)
            params[p + "attn_wo"] = normal(d, d)
            params[p + "attn_bo"] = np.zeros(d, dtype=dt)
            params[p + "ln1_g"] = np.ones(d, dtype=dt)
            params[p + "ln1_b"] = np.zeros(d, dtype=dt)
            params[p + "ffn_w1"] = normal(d, ff)
            params[p + "ffn_b1"] = np.zeros(ff, dtype=dt)
            params[p + "ffn_w2"] = normal(ff, d)
            params[p + "ffn_b2"] = np.zeros(d, dtype=dt)
            params[p + "ln2_g"] = np.ones(d, dtype=dt)
            params[p + "ln2_b"] = np.zeros(d, dtype=dt)
        params["cls_w"] = normal(config.n_classes, d)
        params["cls_b"] = np.zeros(config.n_classes, dtype=dt)
        return cls(config, vocab, params)

    def copy(self) -> "TinyMLM":
        return TinyMLM(self.config, self.vocab, {k: v.copy() for k, v in self.params.items()})

    def param_count(self) -> int:
        return sum(arr.size for arr in self.params.values())

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    # -- forward ------------------------------------------------------------

    def frame_ids(self, tokens: Sequence[str]) -> np.ndarray:
        """[CLS] tokens [SEP] as an id array, validating vocabulary and length."""
        ids = [CLS_ID] + self.vocab.ids(tokens) + [SEP_ID]
        if len(ids) > self.config.max_len:
            raise DataError(
                f"sequence of {len(ids)} tokens exceeds the maximum length "
                f"{self.config.max_len}"
            )
        return np.asarray(ids, dtype=np.int64)

    def _forward_ids(self, ids: np.ndarray):
        K = self._kernels
        cfg = self.config
        p = self.params
        seq = len(ids)
        if seq > cfg.max_len:
            raise DataError(f"sequence length {seq} exceeds max_len {cfg.max_len}")
        h = p["tok_emb"][ids] + p["pos_emb"][:seq]
        caches = []
        for i in range(cfg.layers):
            b = f"block{i}."
            q = K.linear_forward(h, p[b + "attn_wq"], p[b + "attn_bq"])
            k = K.linear_forward(h, p[b + "attn_wk"], p[b + "attn_bk"])
            v = K.linear_forward(h, p[b + "attn_wv"], p[b + "attn_bv"])
            ctx, probs = K.attention_forward(q, k, v, cfg.heads)
            attn_out = K.linear_forward(ctx, p[b + "attn_wo"], p[b + "attn_bo"])
            res1 = h + attn_out
            y1, mean1, rstd1 = K.ln_forward(res1, p[b + "ln1_g"], p[b + "ln1_b"], cfg.ln_eps)
            f1 = K.linear_forward(y1, p[b + "ffn_w1"], p[b + "ffn_b1"])
            g = K.gelu_forward(f1)
            f2 = K.linear_forward(g, p[b + "ffn_w2"], p[b + "ffn_b2"])
            res2 = y1 + f2
            y2, mean2, rstd2 = K.ln_forward(res2, p[b + "ln2_g"], p[b + "ln2_b"], cfg.ln_eps)
            caches.append(
                dict(h_in=h, q=q, k=k, v=v, probs=probs, ctx=ctx, res1=res1, y1=y1,
                     mean1=mean1, rstd1=rstd1, f1=f1, g=g, res2=res2, mean2=mean2,
                     rstd2=rstd2)
            )
            h = y2
        return h, caches

    def encode(self, rendered: RenderedInput) -> np.ndarray:
        """Hidden vector per position for a rendered input (with framing)."""
        hidden, _ = self._forward_ids(self.frame_ids(rendered.tokens))
        return hidden

    def encode_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        hidden, _ = self._forward_ids(self.frame_ids(tokens))
        return hidden

    def _backward_ids(self, ids: np.ndarray, d_hidden: np.ndarray, caches,
                      grads: dict[str, np.ndarray]) -> None:
        K = self._kernels
        cfg = self.config
        p = self.params
        dh = d_hidden
        for i in reversed(range(cfg.layers)):
            b = f"block{i}."
            c = caches[i]
            dres2, dg2, db2 = K.ln_backward(dh, c["res2"], p[b + "ln2_g"], c["mean2"], c["rstd2"])
            grads[b + "ln2_g"] += dg2
            grads[b + "ln2_b"] += db2
            dgelu, dw2, db2v = K.linear_backward(dres2, c["g"], p[b + "ffn_w2"])
            grads[b + "ffn_w2"] += dw2
            grads[b + "ffn_b2"] += db2v
            df1 = K.gelu_backward(dgelu, c["f1"])
            dy1_ffn, dw1, db1v = K.linear_backward(df1, c["y1"], p[b + "ffn_w1"])
            grads[b + "ffn_w1"] += dw1
            grads[b + "ffn_b1"] += db1v
            dy1 = dres2 + dy1_ffn
            dres1, dg1, db1 = K.ln_backward(dy1, c["res1"], p[b + "ln1_g"], c["mean1"], c["rstd1"])
            grads[b + "ln1_g"] += dg1
            grads[b + "ln1_b"] += db1
            dctx, dwo, dbo = K.linear_backward(dres1, c["ctx"], p[b + "attn_wo"])
            grads[b + "attn_wo"] += dwo
            grads[b + "attn_bo"] += dbo
            dq, dk, dv = K.attention_backward(dctx, c["q"], c["k"], c["v"], c["probs"], cfg.heads)
            dh = dres1.copy()
            for dz, wname, bname in ((dq, "attn_wq", "attn_bq"),
                                     (dk, "attn_wk", "attn_bk"),
                                     (dv, "attn_wv", "attn_bv")):
                dx, dw, db = K.linear_backward(dz, c["h_in"], p[b + wname])
                grads[b + wname] += dw
                grads[b + bname] += db
                dh += dx
        np.add.at(grads["tok_emb"], ids, dh)
        grads["pos_emb"][: len(ids)] += dh

    # -- heads --------------------------------------------------------------

    @staticmethod
    def _softmax(logits: np.ndarray) -> np.ndarray:
        z = logits - logits.max()
        e = np.exp(z)
        return e / e.sum()

    def mask_distribution(self, hidden: np.ndarray, candidate_ids: np.ndarray) -> np.ndarray:
        """Tied-embedding softmax over a candidate phrase set."""
        if len(candidate_ids) == 0:
            raise ValueError("empty candidate set")
        logits = self.params["tok_emb"][candidate_ids] @ hidden
        return self._softmax(logits)

    def cls_head(self, hidden_cls: np.ndarray) -> np.ndarray:
        """Softmax(W h + b) over the class inventory (baseline path)."""
        return self._softmax(self.params["cls_w"] @ hidden_cls + self.params["cls_b"])

    def candidate_ids(self, schema: PromptSchema) -> list[np.ndarray]:
        return [
            np.asarray(self.vocab.ids(vocab_j), dtype=np.int64)
            for vocab_j in schema.mask_vocabs
        ]

    def mask_distributions(self, schema: PromptSchema, rendered: RenderedInput) -> MaskDistributions:
        """Per-mask-position candidate distributions for one rendered input."""
        hidden, _ = self._forward_ids(self.frame_ids(rendered.tokens))
        cands = self.candidate_ids(schema)
        vecs = []
        for j, pos in enumerate(rendered.mask_positions):
            vecs.append(self.mask_distribution(hidden[pos + 1], cands[j]))
        return MaskDistributions(tuple(vecs))

    # -- objectives ---------------------------------------------------------

    def _example_loss(self, example: EncodedExample, objective: str,
                      candidate_ids: Sequence[np.ndarray] | None, hidden: np.ndarray,
                      d_hidden: np.ndarray | None, grads: dict[str, np.ndarray] | None) -> float:
        """Loss for one example; optionally writes dL/d_hidden and head grads."""
        loss = 0.0
        if objective == PTR_OBJECTIVE:
            for j, pos in enumerate(example.mask_positions):
                cand = candidate_ids[j]
                h = hidden[pos]
                probs = self.mask_distribution(h, cand)
                gold = example.mask_targets[j]
                loss -= float(np.log(max(float(probs[gold]), LOG_CLAMP)))
                if grads is not None:
                    dlogits = probs.copy()
                    dlogits[gold] -= 1.0
                    d_hidden[pos] += self.params["tok_emb"][cand].T @ dlogits
                    np.add.at(grads["tok_emb"], cand, np.outer(dlogits, h))
        elif objective == CLS_OBJECTIVE:
            h = hidden[0]
            probs = self.cls_head(h)
            gold = example.gold_class
            loss -= float(np.log(max(float(probs[gold]), LOG_CLAMP)))
            if grads is not None:
                dz = probs.copy()
                dz[gold] -= 1.0
                grads["cls_w"] += np.outer(dz, h)
                grads["cls_b"] += dz
                d_hidden[0] += self.params["cls_w"].T @ dz
        else:
            raise ValueError(f"unknown objective {objective!r}")
        return loss

    def loss_only(self, batch: Sequence[EncodedExample], objective: str,
                  candidate_ids: Sequence[np.ndarray] | None = None) -> float:
        if not batch:
            raise ValueError("empty batch")
        total = 0.0
        for example in batch:
            hidden, _ = self._forward_ids(example.ids)
            total += self._example_loss(example, objective, candidate_ids, hidden, None, None)
        return total / len(batch)

    def loss_and_grads(self, batch: Sequence[EncodedExample], objective: str,
                       candidate_ids: Sequence[np.ndarray] | None = None):
        """Mean batch loss and exact gradients for every parameter tensor."""
        if not batch:
            raise ValueError("empty batch")
        grads = self.zero_grads()
        total = 0.0
        for example in batch:
            hidden, caches = self._forward_ids(example.ids)
            d_hidden = np.zeros_like(hidden)
            loss = self._example_loss(example, objective, candidate_ids, hidden,
                                      d_hidden, grads)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss for instance {example.instance_id!r}"
                )
            total += loss
            self._backward_ids(example.ids, d_hidden, caches, grads)
        scale = 1.0 / len(batch)
        for name in grads:
            grads[name] *= scale
        return total / len(batch), grads

    # -- checkpoints ---------------------------------------------------------

    def save(self, path: str | Path, schema: PromptSchema | None = None) -> None:
        """Write a versioned JSON-of-arrays checkpoint (endianness-free)."""
        doc = {
            "format": MODEL_FORMAT,
            "config": asdict(self.config),
            "vocab": list(self.vocab.tokens),
            "schema": schema_to_doc(schema) if schema is not None else None,
            "params": {k: v.tolist() for k, v in self.params.items()},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, ensure_ascii=False)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path):
        """Read a checkpoint; returns (model, schema-or-None)."""
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("format") != MODEL_FORMAT:
            raise DataError(f"unsupported model format {doc.get('format')!r}")
        config = ModelConfig(**doc["config"])
        vocab = Vocab(tuple(doc["vocab"]))
        dt = np.dtype(config.dtype)
        params = {k: np.asarray(v, dtype=dt) for k, v in doc["params"].items()}
        schema = schema_from_doc(doc["schema"]) if doc.get("schema") else None
        return cls(config, vocab, params), schema
