"""Corpus file handling and the token vocabulary.

Corpora are UTF-8 JSON-lines, one object per line with string fields
"article" and "summary". The vocabulary is built from training text only;
unseen tokens map to <unk> at encode time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

__all__ = ["Pair", "load_corpus", "save_corpus", "Vocabulary"]


@dataclass
class Pair:
    article: str
    summary: str


def load_corpus(path) -> list[Pair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or not isinstance(obj.get("article"), str):
                raise ValueError(f"{path}:{lineno}: missing string field 'article'")
            if not isinstance(obj.get("summary"), str):
                raise ValueError(f"{path}:{lineno}: missing string field 'summary'")
            pairs.append(Pair(obj["article"], obj["summary"]))
    return pairs


def save_corpus(pairs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps({"article": pair.article, "summary": pair.summary}) + "\n")


class Vocabulary:
    """Token <-> id mapping with <bos>/<eos>/<unk> specials at the front.

    Content tokens are stored sorted, so the mapping is a pure function of
    the token *set* — deterministic regardless of corpus order.
    """

    BOS = "<bos>"
    EOS = "<eos>"
    UNK = "<unk>"

    def __init__(self, tokens):
        specials = [self.BOS, self.EOS, self.UNK]
        content = sorted(set(tokens) - set(specials))
        self._tokens = specials + content
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}

    @classmethod
    def from_token_lists(cls, token_lists) -> "Vocabulary":
        seen = set()
        for toks in token_lists:
            seen.update(toks)
        return cls(seen)

    @property
    def bos_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return 1

    @property
    def unk_id(self) -> int:
        return 2

    def __len__(self) -> int:
        return len(self._tokens)

    def id(self, token: str) -> int:
        return self._ids.get(token, self.unk_id)

    def ids(self, tokens) -> list[int]:
        return [self.id(t) for t in tokens]

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def tokens(self) -> list[str]:
        return list(self._tokens)
