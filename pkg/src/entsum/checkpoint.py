"""Versioned checkpoint container: config + vocabulary + every named tensor.

Layout: a magic line, one JSON header line (sorted keys), then the raw
little-endian float64 bytes of each manifest entry in order. Save -> load ->
save is bit-identical by construction.
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .corpus import Vocabulary
from .model import ModelConfig, Summarizer

__all__ = ["save_checkpoint", "load_checkpoint"]

MAGIC = "#entsum-checkpoint v1"


def save_checkpoint(model: Summarizer, path):
    params = model.named_params()
    buffers = []
    if model.entity_table is not None:
        buffers.append(("entity_table", model.entity_table))
    header = {
        "config": asdict(model.config),
        "vocab": model.vocab.tokens(),
        "params": [{"name": n, "shape": list(t.data.shape)} for n, t in params],
        "buffers": [{"name": n, "shape": list(t.data.shape)} for n, t in buffers],
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write((MAGIC + "\n").encode("utf-8"))
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for _, t in params:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        for _, t in buffers:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def _read_block(fh, shape):
    n = int(np.prod(shape)) if shape else 1
    raw = fh.read(n * 8)
    if len(raw) != n * 8:
        raise ValueError("checkpoint truncated")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def load_checkpoint(path) -> Summarizer:
    with open(path, "rb") as fh:
        magic = fh.readline().decode("utf-8").rstrip("\n")
        if magic != MAGIC:
            raise ValueError(f"{path}: not an entsum checkpoint (got {magic!r})")
        header = json.loads(fh.readline().decode("utf-8"))
        config = ModelConfig(**header["config"])
        vocab = Vocabulary(header["vocab"])
        if vocab.tokens() != header["vocab"]:
            raise ValueError(f"{path}: vocabulary is not in canonical order")

        blocks = {}
        for entry in header["params"]:
            blocks[entry["name"]] = _read_block(fh, entry["shape"])
        buffer_blocks = {}
        for entry in header["buffers"]:
            buffer_blocks[entry["name"]] = _read_block(fh, entry["shape"])

    entity_vectors = buffer_blocks.get("entity_table")
    model = Summarizer(config, vocab, seed=0, entity_vectors=entity_vectors)
    if entity_vectors is not None:
        model.entity_table.data[:] = entity_vectors
    named = dict(model.named_params())
    if set(named) != set(blocks):
        missing = set(named) ^ set(blocks)
        raise ValueError(f"{path}: parameter names do not match the model: {sorted(missing)[:5]}")
    for name, arr in blocks.items():
        t = named[name]
        if t.data.shape != arr.shape:
            raise ValueError(f"{path}: shape mismatch for {name}: {t.data.shape} vs {arr.shape}")
        t.data[:] = arr
    return model
