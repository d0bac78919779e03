"""Gazetteer-based entity linking: deterministic, case-sensitive, testable.

A gazetteer maps surface forms (token sequences joined by single spaces) to
knowledge-graph entity ids. Linking is greedy longest-match, left to right,
never overlapping. Case is preserved end to end; matching is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "EntitySpan",
    "LinkedDocument",
    "Gazetteer",
    "tokenize",
    "link",
    "link_prefix",
]

# Punctuation peeled from chunk edges; internal punctuation stays attached.
_EDGE_PUNCT = set(".,!?;:\"'()")


def tokenize(text: str) -> list[str]:
    """Whitespace split, then peel leading/trailing punctuation into their
    own tokens. Case is never altered."""
    tokens: list[str] = []
    for chunk in text.split():
        lead: list[str] = []
        trail: list[str] = []
        while chunk and chunk[0] in _EDGE_PUNCT:
            lead.append(chunk[0])
            chunk = chunk[1:]
        while chunk and chunk[-1] in _EDGE_PUNCT:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trail))
    return tokens


@dataclass(frozen=True)
class EntitySpan:
    """Token span [start, end) resolved to a KG entity id."""

    start: int
    end: int
    entity_id: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad span bounds [{self.start}, {self.end})")


@dataclass
class LinkedDocument:
    """Token sequence plus its non-overlapping, start-sorted entity spans."""

    tokens: list[str]
    spans: list[EntitySpan] = field(default_factory=list)

    def __post_init__(self):
        prev_end = 0
        for span in self.spans:
            if span.start < prev_end:
                raise ValueError(f"spans overlap or are unsorted at {span}")
            if span.end > len(self.tokens):
                raise ValueError(f"span {span} exceeds document length {len(self.tokens)}")
            prev_end = span.end


class Gazetteer:
    """Surface form (case-sensitive token sequence) -> entity id."""

    def __init__(self, entries: dict[str, int] | None = None):
        self._map: dict[str, int] = {}
        self.max_surface_len = 0
        for surface, entity_id in (entries or {}).items():
            self.add(surface, entity_id)

    def add(self, surface: str, entity_id: int):
        toks = surface.split()
        if not toks:
            raise ValueError("gazetteer surface form must be a non-empty token sequence")
        key = " ".join(toks)
        if key in self._map:
            raise ValueError(f"duplicate gazetteer surface form {key!r}")
        self._map[key] = int(entity_id)
        self.max_surface_len = max(self.max_surface_len, len(toks))

    def lookup(self, tokens: list[str]) -> int | None:
        return self._map.get(" ".join(tokens))

    def __len__(self) -> int:
        return len(self._map)

    def entity_ids(self) -> set[int]:
        return set(self._map.values())

    def items(self):
        return self._map.items()

    @classmethod
    def load_tsv(cls, path) -> "Gazetteer":
        """UTF-8 TSV of `surface form<TAB>entity_id`; duplicates are an error."""
        gaz = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected `surface<TAB>id`, got {line!r}")
                try:
                    gaz.add(parts[0], int(parts[1]))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
        return gaz

    def save_tsv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for surface, entity_id in self._map.items():
                fh.write(f"{surface}\t{entity_id}\n")


def link(tokens: list[str], gazetteer: Gazetteer) -> list[EntitySpan]:
    """Greedy left-to-right longest-match over the gazetteer.

    At each position the longest matching surface form wins; after a match
    scanning resumes past it, so spans never overlap and come out sorted.
    """
    spans: list[EntitySpan] = []
    n = len(tokens)
    i = 0
    while i < n:
        matched = False
        for length in range(min(gazetteer.max_surface_len, n - i), 0, -1):
            entity_id = gazetteer.lookup(tokens[i : i + length])
            if entity_id is not None:
                spans.append(EntitySpan(i, i + length, entity_id))
                i += length
                matched = True
                break
        if not matched:
            i += 1
    return spans


def link_prefix(generated_tokens: list[str], gazetteer: Gazetteer, min_tokens: int = 20) -> list[EntitySpan]:
    """Decoder-side linking: inactive until the prefix reaches ``min_tokens``."""
    if len(generated_tokens) < min_tokens:
        return []
    return link(generated_tokens, gazetteer)
