"""The entity-aware encoder-decoder summarizer.

Encoder layers run a token stream and an entity stream side by side: token
self-attention over [segment memory || segment], entity self-attention over
the document's linked entities, a second token self-attention, token->entity
cross attention, then a position-wise feed-forward block — every sublayer
wrapped in residual + layer norm. Decoder layers: causal token
self-attention, masked token->entity attention over decoder-side entities,
cross attention into the encoder states, a second causal self-attention,
and the feed-forward block. Output logits are tied to the token embedding
(projection by its transpose).

The attention score mode (absolute "vanilla" vs relative "xl") and the
entity channel ("off" / "random" / "kg") are configuration axes, which is
how the four-model comparison grid is expressed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .attention import (
    AbsolutePositionalEncoding,
    RelativePositionalEncoding,
    SegmentMemory,
    concat_memory,
    make_head_params,
    multi_head_attention,
    update_memory,
    xavier_uniform,
)
from .corpus import Vocabulary
from .linking import LinkedDocument
from .tensor import (
    Rng,
    Tensor,
    add,
    concat,
    cross_entropy,
    dropout,
    gather_rows,
    layer_norm,
    matmul_t,
    relu,
    slice_rows,
)

__all__ = [
    "ModelConfig",
    "Summarizer",
    "toy_config",
    "paper_config",
    "expected_parameter_count",
]

BACKBONES = ("vanilla", "xl")
ENTITY_MODES = ("off", "random", "kg")


@dataclass
class ModelConfig:
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 32
    d_ent: int = 16
    d_ff: int = 64
    dropout: float = 0.0
    vocab_size: int = 0
    entity_count: int = 0
    l_max: int = 64
    segment_len: int = 16
    memory_len: int = 16
    backbone: str = "xl"
    entity_mode: str = "off"
    conversion_layers: int = 2

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"n_heads={self.n_heads} must divide d_model={self.d_model}")
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.entity_mode not in ENTITY_MODES:
            raise ValueError(f"entity_mode must be one of {ENTITY_MODES}, got {self.entity_mode!r}")
        if self.segment_len < 1:
            raise ValueError("segment_len must be >= 1")
        if self.segment_len + self.memory_len > self.l_max:
            raise ValueError(
                f"segment_len + memory_len = {self.segment_len + self.memory_len} "
                f"exceeds l_max = {self.l_max}"
            )
        if self.conversion_layers < 1:
            raise ValueError("conversion_layers must be >= 1")


def toy_config(**overrides) -> ModelConfig:
    """Desk-scale preset used by the overfit and ablation experiments."""
    base = dict(
        n_layers=2,
        n_heads=4,
        d_model=32,
        d_ent=16,
        d_ff=64,
        dropout=0.0,
        l_max=64,
        segment_len=16,
        memory_len=16,
        backbone="xl",
        entity_mode="off",
        conversion_layers=2,
    )
    base.update(overrides)
    return ModelConfig(**base)


def paper_config(**overrides) -> ModelConfig:
    """The reported full-scale configuration: 2 layers, 4 heads, 300-dim
    token and entity embeddings, dropout 0.3. Kept as executable
    documentation; training it requires the full corpus and is out of scope
    here."""
    base = dict(
        n_layers=2,
        n_heads=4,
        d_model=300,
        d_ent=300,
        d_ff=1200,
        dropout=0.3,
        l_max=520,
        segment_len=100,
        memory_len=100,
        backbone="xl",
        entity_mode="kg",
        conversion_layers=2,
    )
    base.update(overrides)
    return ModelConfig(**base)


class AttentionBlock:
    """Multi-head attention sublayer: heads, output projection, layer norm."""

    def __init__(self, mode: str, n_heads: int, d_model: int, rng: Rng):
        d_head = d_model // n_heads
        self.mode = mode
        self.heads = [make_head_params(mode, d_model, d_head, rng) for _ in range(n_heads)]
        self.w_o = Tensor(xavier_uniform(rng, d_model, d_model), requires_grad=True)
        self.ln_gain = Tensor(np.ones(d_model), requires_grad=True)
        self.ln_bias = Tensor(np.zeros(d_model), requires_grad=True)

    def apply(self, x, kv, mask, encoding, q_pos, k_pos, drop_p, rng, training):
        att = multi_head_attention(
            x, kv, mask, self.heads, self.w_o, self.mode, encoding, q_pos=q_pos, k_pos=k_pos
        )
        att = dropout(att, drop_p, rng, training)
        return layer_norm(add(x, att), self.ln_gain, self.ln_bias)

    def params(self):
        out = []
        for i, head in enumerate(self.heads):
            out.extend((f"h{i}.{name}", t) for name, t in head.params())
        out.append(("W_O", self.w_o))
        out.append(("ln_gain", self.ln_gain))
        out.append(("ln_bias", self.ln_bias))
        return out


class FeedForwardBlock:
    """Position-wise two-layer FFN with ReLU, residual and layer norm."""

    def __init__(self, d_model: int, d_ff: int, rng: Rng):
        self.w1 = Tensor(xavier_uniform(rng, d_ff, d_model), requires_grad=True)
        self.b1 = Tensor(np.zeros(d_ff), requires_grad=True)
        self.w2 = Tensor(xavier_uniform(rng, d_model, d_ff), requires_grad=True)
        self.b2 = Tensor(np.zeros(d_model), requires_grad=True)
        self.ln_gain = Tensor(np.ones(d_model), requires_grad=True)
        self.ln_bias = Tensor(np.zeros(d_model), requires_grad=True)

    def apply(self, x, drop_p, rng, training):
        h = relu(add(matmul_t(x, self.w1), self.b1))
        y = add(matmul_t(h, self.w2), self.b2)
        y = dropout(y, drop_p, rng, training)
        return layer_norm(add(x, y), self.ln_gain, self.ln_bias)

    def params(self):
        return [
            ("W1", self.w1),
            ("b1", self.b1),
            ("W2", self.w2),
            ("b2", self.b2),
            ("ln_gain", self.ln_gain),
            ("ln_bias", self.ln_bias),
        ]


class EntityConversion:
    """Feed-forward stack mapping frozen entity vectors into token space.

    ``n_layers`` affine maps with ReLU between them, the last one affine
    only; widths d_ent -> d_model -> ... -> d_model.
    """

    def __init__(self, d_ent: int, d_model: int, n_layers: int, rng: Rng):
        self.d_model = d_model
        self.layers = []
        width_in = d_ent
        for _ in range(n_layers):
            w = Tensor(xavier_uniform(rng, d_model, width_in), requires_grad=True)
            b = Tensor(np.zeros(d_model), requires_grad=True)
            self.layers.append((w, b))
            width_in = d_model

    def apply(self, entity_embs: Tensor) -> Tensor:
        if entity_embs.data.shape[0] == 0:
            return Tensor(np.zeros((0, self.d_model)))
        h = entity_embs
        for i, (w, b) in enumerate(self.layers):
            h = add(matmul_t(h, w), b)
            if i < len(self.layers) - 1:
                h = relu(h)
        return h

    def params(self):
        out = []
        for i, (w, b) in enumerate(self.layers):
            out.append((f"l{i}.W", w))
            out.append((f"l{i}.b", b))
        return out


class EncoderLayer:
    def __init__(self, config: ModelConfig, rng: Rng):
        mode, h, d = config.backbone, config.n_heads, config.d_model
        self.token_self_1 = AttentionBlock(mode, h, d, rng)
        self.entity_self = None
        self.cross_entity = None
        if config.entity_mode != "off":
            self.entity_self = AttentionBlock(mode, h, d, rng)
        self.token_self_2 = AttentionBlock(mode, h, d, rng)
        if config.entity_mode != "off":
            self.cross_entity = AttentionBlock(mode, h, d, rng)
        self.ffn = FeedForwardBlock(d, config.d_ff, rng)

    def params(self):
        groups = [("self1", self.token_self_1)]
        if self.entity_self is not None:
            groups.append(("entity_self", self.entity_self))
        groups.append(("self2", self.token_self_2))
        if self.cross_entity is not None:
            groups.append(("cross_entity", self.cross_entity))
        groups.append(("ffn", self.ffn))
        out = []
        for prefix, block in groups:
            out.extend((f"{prefix}.{name}", t) for name, t in block.params())
        return out


class DecoderLayer:
    def __init__(self, config: ModelConfig, rng: Rng):
        mode, h, d = config.backbone, config.n_heads, config.d_model
        self.token_self_1 = AttentionBlock(mode, h, d, rng)
        self.token_entity = AttentionBlock(mode, h, d, rng) if config.entity_mode != "off" else None
        self.cross = AttentionBlock(mode, h, d, rng)
        self.token_self_2 = AttentionBlock(mode, h, d, rng)
        self.ffn = FeedForwardBlock(d, config.d_ff, rng)

    def params(self):
        groups = [("self1", self.token_self_1)]
        if self.token_entity is not None:
            groups.append(("token_entity", self.token_entity))
        groups.extend([("cross", self.cross), ("self2", self.token_self_2), ("ffn", self.ffn)])
        out = []
        for prefix, block in groups:
            out.extend((f"{prefix}.{name}", t) for name, t in block.params())
        return out


class Summarizer:
    """Config, vocabulary, frozen entity table, and all trainable blocks."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, seed: int = 0, entity_vectors=None):
        if config.vocab_size and config.vocab_size != len(vocab):
            raise ValueError(f"config vocab_size {config.vocab_size} != vocabulary size {len(vocab)}")
        config.vocab_size = len(vocab)
        self.config = config
        self.vocab = vocab
        rng = Rng(seed).spawn(0)

        self.embedding = Tensor(
            xavier_uniform(rng, len(vocab), config.d_model), requires_grad=True
        )

        self.entity_table = None
        self.conv_enc = None
        self.conv_dec = None
        if config.entity_mode == "kg":
            if entity_vectors is None:
                raise ValueError("entity_mode='kg' needs pretrained entity vectors")
            entity_vectors = np.asarray(entity_vectors, dtype=np.float64)
        elif config.entity_mode == "random":
            table_rng = Rng(seed).spawn(1)
            bound = 6.0 / np.sqrt(config.d_ent)
            entity_vectors = table_rng.uniform(-bound, bound, (config.entity_count, config.d_ent))
            norms = np.linalg.norm(entity_vectors, axis=1, keepdims=True)
            entity_vectors = entity_vectors / np.where(norms == 0.0, 1.0, norms)
        else:
            entity_vectors = None
        if entity_vectors is not None:
            if entity_vectors.shape[1] != config.d_ent:
                raise ValueError(
                    f"entity vectors have width {entity_vectors.shape[1]}, config d_ent={config.d_ent}"
                )
            config.entity_count = entity_vectors.shape[0]
            # frozen input table: requires_grad stays False in every mode
            self.entity_table = Tensor(entity_vectors)
            self.conv_enc = EntityConversion(config.d_ent, config.d_model, config.conversion_layers, rng)
            self.conv_dec = EntityConversion(config.d_ent, config.d_model, config.conversion_layers, rng)

        self.enc_layers = [EncoderLayer(config, rng) for _ in range(config.n_layers)]
        self.dec_layers = [DecoderLayer(config, rng) for _ in range(config.n_layers)]

        if config.backbone == "vanilla":
            self.encoding = AbsolutePositionalEncoding(config.l_max, config.d_model)
        else:
            self.encoding = RelativePositionalEncoding(config.l_max, config.d_model)

    # ---------------------------------------------------------------- params

    def named_params(self):
        out = [("embedding", self.embedding)]
        if self.conv_enc is not None:
            out.extend((f"conv_enc.{n}", t) for n, t in self.conv_enc.params())
            out.extend((f"conv_dec.{n}", t) for n, t in self.conv_dec.params())
        for i, layer in enumerate(self.enc_layers):
            out.extend((f"enc.{i}.{n}", t) for n, t in layer.params())
        for i, layer in enumerate(self.dec_layers):
            out.extend((f"dec.{i}.{n}", t) for n, t in layer.params())
        return out

    def parameter_count(self) -> int:
        return sum(t.data.size for _, t in self.named_params())

    def zero_grad(self):
        for _, t in self.named_params():
            t.zero_grad()

    # ---------------------------------------------------------------- encode

    def _entity_states(self, conv: EntityConversion, spans) -> Tensor:
        ids = np.array([s.entity_id for s in spans], dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.entity_table.data.shape[0]):
            raise ValueError(f"entity id out of range for table of {self.entity_table.data.shape[0]}")
        return conv.apply(gather_rows(self.entity_table, ids))

    def encode(self, article: LinkedDocument, rng: Rng | None = None, training: bool = False):
        """Run the segmented encoder; returns (states [L x d], positions [L]).

        Entities whose span starts inside a segment join that segment's
        entity channel; their positions are the span-start token positions.
        Per-layer memory caches the layer inputs of earlier segments and is
        excluded from the gradient.
        """
        cfg = self.config
        token_ids = np.asarray(self.vocab.ids(article.tokens), dtype=np.int64)
        n_total = token_ids.shape[0]
        if n_total == 0:
            raise ValueError("cannot encode an empty token segment")
        use_entities = cfg.entity_mode != "off" and self.entity_table is not None

        mems = [SegmentMemory.empty(cfg.d_model) for _ in self.enc_layers]
        seg_outputs = []
        for seg_start in range(0, n_total, cfg.segment_len):
            seg_ids = token_ids[seg_start : seg_start + cfg.segment_len]
            n = seg_ids.shape[0]
            tok_pos = np.arange(seg_start, seg_start + n)
            h = gather_rows(self.embedding, seg_ids)
            h = dropout(h, cfg.dropout, rng, training)

            ent = None
            ent_pos = None
            if use_entities:
                seg_spans = [s for s in article.spans if seg_start <= s.start < seg_start + n]
                if seg_spans:
                    ent = self._entity_states(self.conv_enc, seg_spans)
                    ent_pos = np.array([s.start for s in seg_spans], dtype=np.int64)

            for li, layer in enumerate(self.enc_layers):
                mem = mems[li]
                next_mem = update_memory(mem, h.data, cfg.memory_len)
                k_pos = np.arange(seg_start - mem.rows, seg_start + n)
                kv = concat_memory(mem, h)
                h = layer.token_self_1.apply(
                    h, kv, None, self.encoding, tok_pos, k_pos, cfg.dropout, rng, training
                )
                if ent is not None:
                    ent = layer.entity_self.apply(
                        ent, ent, None, self.encoding, ent_pos, ent_pos, cfg.dropout, rng, training
                    )
                kv = concat_memory(mem, h)
                h = layer.token_self_2.apply(
                    h, kv, None, self.encoding, tok_pos, k_pos, cfg.dropout, rng, training
                )
                if ent is not None:
                    h = layer.cross_entity.apply(
                        h, ent, None, self.encoding, tok_pos, ent_pos, cfg.dropout, rng, training
                    )
                h = layer.ffn.apply(h, cfg.dropout, rng, training)
                mems[li] = next_mem
            seg_outputs.append(h)

        states = seg_outputs[0] if len(seg_outputs) == 1 else concat(seg_outputs, axis=0)
        return states, np.arange(n_total)

    # ---------------------------------------------------------------- decode

    def decode_forward(
        self,
        enc_states: Tensor,
        enc_pos: np.ndarray,
        input_ids,
        positions,
        dec_spans=(),
        rng: Rng | None = None,
        training: bool = False,
        caches=None,
        entity_min_tokens: int = 20,
    ) -> Tensor:
        """Decoder stack over the given input rows; returns vocab logits.

        ``positions`` are global decoder positions (0 = BOS row). In full
        teacher-forced mode ``caches`` is None and causality comes from the
        mask; in incremental mode ``caches`` holds two per-layer key streams
        (sublayer-1 inputs and sublayer-4 inputs) that this call extends.

        A query row at position i may attend a decoder-side entity span only
        when span.end <= i and i >= entity_min_tokens (i equals the number of
        already-generated summary tokens).
        """
        cfg = self.config
        input_ids = np.asarray(input_ids, dtype=np.int64)
        positions = np.asarray(positions, dtype=np.int64)
        if input_ids.size == 0:
            raise ValueError("decoder needs at least one input token")
        use_entities = cfg.entity_mode != "off" and self.entity_table is not None and len(dec_spans) > 0

        x = gather_rows(self.embedding, input_ids)
        x = dropout(x, cfg.dropout, rng, training)

        ent = None
        ent_pos = None
        elig_start = None
        if use_entities:
            ent = self._entity_states(self.conv_dec, dec_spans)
            ent_pos = np.array([s.start + 1 for s in dec_spans], dtype=np.int64)
            elig_start = min(max(s.end, entity_min_tokens) for s in dec_spans)

        for li, layer in enumerate(self.dec_layers):
            cache = caches[li] if caches is not None else None

            mem = cache["self1"] if cache is not None else None
            kv, k_pos = self._causal_keys(x, positions, mem, cfg)
            mask = k_pos[None, :] <= positions[:, None]
            if cache is not None:
                cache["self1"] = update_memory(mem, x.data, cfg.l_max)
            x = layer.token_self_1.apply(
                x, kv, mask, self.encoding, positions, k_pos, cfg.dropout, rng, training
            )

            if ent is not None:
                x = self._apply_token_entity(
                    layer.token_entity, x, positions, ent, ent_pos, dec_spans, elig_start,
                    entity_min_tokens, rng, training,
                )

            x = layer.cross.apply(
                x, enc_states, None, self.encoding, positions, enc_pos, cfg.dropout, rng, training
            )

            mem = cache["self2"] if cache is not None else None
            kv, k_pos = self._causal_keys(x, positions, mem, cfg)
            mask = k_pos[None, :] <= positions[:, None]
            if cache is not None:
                cache["self2"] = update_memory(mem, x.data, cfg.l_max)
            x = layer.token_self_2.apply(
                x, kv, mask, self.encoding, positions, k_pos, cfg.dropout, rng, training
            )

            x = layer.ffn.apply(x, cfg.dropout, rng, training)

        return matmul_t(x, self.embedding)

    @staticmethod
    def _causal_keys(x, positions, mem, cfg):
        # cached rows always hold the positions immediately before this block
        if mem is None or mem.rows == 0:
            return x, positions
        kv = concat_memory(mem, x)
        k_pos = np.concatenate([np.arange(positions[0] - mem.rows, positions[0]), positions])
        return kv, k_pos

    def _apply_token_entity(
        self, block, x, positions, ent, ent_pos, dec_spans, elig_start, entity_min_tokens, rng, training
    ):
        cfg = self.config
        eligible = positions >= elig_start
        if not eligible.any():
            return x
        split = int(np.argmax(eligible))  # eligibility is monotone in position
        suffix = slice_rows(x, split, x.data.shape[0]) if split > 0 else x
        suf_pos = positions[split:]
        ends = np.array([s.end for s in dec_spans], dtype=np.int64)
        mask = ends[None, :] <= suf_pos[:, None]
        att = block.apply(
            suffix, ent, mask, self.encoding, suf_pos, ent_pos, cfg.dropout, rng, training
        )
        if split == 0:
            return att
        prefix = slice_rows(x, 0, split)
        return concat([prefix, att], axis=0)

    # ------------------------------------------------------------------ loss

    def loss(
        self,
        article: LinkedDocument,
        summary: LinkedDocument,
        rng: Rng | None = None,
        training: bool = True,
        entity_min_tokens: int = 20,
        unk_prob: float = 0.0,
    ) -> Tensor:
        """Teacher-forced mean cross-entropy of the summary tokens.

        ``unk_prob`` applies seeded word dropout to encoder and decoder
        *input* tokens (targets stay gold); it regularizes against token-id
        memorization so unseen-at-eval names do not derail the entity path.
        """
        if not summary.tokens:
            raise ValueError("cannot compute a loss on an empty summary")
        article_tokens = list(article.tokens)
        dec_in_tokens = list(summary.tokens)
        if unk_prob > 0.0 and training:
            if rng is None:
                raise ValueError("unk_prob > 0 needs an rng")
            unk = self.vocab.UNK
            article_tokens = [unk if rng.random() < unk_prob else t for t in article_tokens]
            dec_in_tokens = [unk if rng.random() < unk_prob else t for t in dec_in_tokens]

        enc_states, enc_pos = self.encode(
            LinkedDocument(article_tokens, article.spans), rng=rng, training=training
        )
        input_ids = [self.vocab.bos_id] + self.vocab.ids(dec_in_tokens)
        targets = self.vocab.ids(summary.tokens) + [self.vocab.eos_id]
        logits = self.decode_forward(
            enc_states,
            enc_pos,
            input_ids,
            np.arange(len(input_ids)),
            dec_spans=summary.spans,
            rng=rng,
            training=training,
            entity_min_tokens=entity_min_tokens,
        )
        return cross_entropy(logits, targets)


def expected_parameter_count(config: ModelConfig) -> int:
    """Closed-form trainable-parameter count for a configuration."""
    d, d_ff, n_h = config.d_model, config.d_ff, config.n_heads
    d_head = d // n_h
    if config.backbone == "xl":
        head = 4 * d_head * d + 2 * d_head
    else:
        head = 3 * d_head * d
    attn_block = n_h * head + d * d + 2 * d
    ffn_block = d_ff * d + d_ff + d * d_ff + d + 2 * d
    with_entities = config.entity_mode != "off"
    enc_layer = (4 if with_entities else 2) * attn_block + ffn_block
    dec_layer = (4 if with_entities else 3) * attn_block + ffn_block
    total = config.vocab_size * d
    total += config.n_layers * (enc_layer + dec_layer)
    if with_entities:
        conv = (config.d_ent * d + d) + (config.conversion_layers - 1) * (d * d + d)
        total += 2 * conv
    return total
