"""Teacher-forced evaluation helpers shared by tests, the CLI, and the
ablation runner."""

from __future__ import annotations

import numpy as np

from .corpus import Pair
from .linking import Gazetteer
from .model import Summarizer
from .tensor import no_grad
from .training import prepare_pair

__all__ = ["teacher_forced_eval", "team_token_accuracy"]


def teacher_forced_eval(model: Summarizer, pairs, gazetteer, max_src: int, max_tgt: int):
    """(token accuracy, mean loss) of gold summaries under teacher forcing."""
    correct = total = 0
    losses = []
    with no_grad():
        for pair in pairs:
            article, summary = prepare_pair(pair, gazetteer, max_src, max_tgt)
            enc, enc_pos = model.encode(article, training=False)
            input_ids = [model.vocab.bos_id] + model.vocab.ids(summary.tokens)
            targets = np.array(model.vocab.ids(summary.tokens) + [model.vocab.eos_id])
            logits = model.decode_forward(
                enc, enc_pos, input_ids, np.arange(len(input_ids)), dec_spans=summary.spans,
                training=False,
            )
            pred = logits.data.argmax(axis=1)
            correct += int((pred == targets).sum())
            total += targets.size
            row = logits.data
            m = row.max(axis=1, keepdims=True)
            lse = m[:, 0] + np.log(np.exp(row - m).sum(axis=1))
            losses.append(float(np.mean(lse - row[np.arange(len(targets)), targets])))
    return correct / total, float(np.mean(losses))


def team_token_accuracy(model: Summarizer, pairs, gazetteer: Gazetteer, max_src: int, max_tgt: int):
    """Fraction of pairs whose next-to-last summary token (the team name in
    the entity_lookup task) is predicted correctly under teacher forcing."""
    hits = 0
    with no_grad():
        for pair in pairs:
            article, summary = prepare_pair(pair, gazetteer, max_src, max_tgt)
            enc, enc_pos = model.encode(article, training=False)
            input_ids = [model.vocab.bos_id] + model.vocab.ids(summary.tokens)
            logits = model.decode_forward(
                enc, enc_pos, input_ids, np.arange(len(input_ids)), dec_spans=summary.spans,
                training=False,
            )
            team_pos = len(summary.tokens) - 2  # "<Person> plays for <Team> ."
            gold = model.vocab.id(summary.tokens[team_pos])
            hits += int(logits.data[team_pos].argmax() == gold)
    return hits / len(pairs)
