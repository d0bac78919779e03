"""Desk-scale synthetic tasks standing in for full-corpus summarization.

Two tasks:

* ``copy`` — articles are random word sequences; the summary is the first
  six tokens. Pure sequence-to-sequence plumbing, no entities.
* ``entity_lookup`` — a small sports knowledge graph (persons play for
  teams; teams are based in cities). Articles mention a person; the gold
  summary names the person's team. Team names never occur in any article,
  so the team is recoverable only through the person's entity embedding —
  which is exactly the pathway the entity channel is supposed to provide.
  Held-out persons appear only in the validation corpus (their facts stay
  in the knowledge graph, which plays the role of world knowledge).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .corpus import Pair, save_corpus
from .linking import Gazetteer
from .tensor import Rng
from .transe import KnowledgeGraph, Triple

__all__ = ["SyntheticTaskSpec", "SyntheticData", "gen_synthetic"]

PLAYS_FOR = 0
BASED_IN = 1

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class SyntheticTaskSpec:
    task: str = "entity_lookup"
    n_entities: int = 40
    n_relations: int = 2
    n_train: int = 12
    n_heldout: int = 8
    vocab_size: int = 40
    seed: int = 0


@dataclass
class SyntheticData:
    train_pairs: list[Pair]
    heldout_pairs: list[Pair]
    kg: KnowledgeGraph
    gazetteer: Gazetteer
    team_of_person: dict[int, int] = field(default_factory=dict)

    def write_files(self, out_dir):
        """train.jsonl / heldout.jsonl / triples.tsv / entity_names.tsv /
        gazetteer.tsv under ``out_dir``."""
        os.makedirs(out_dir, exist_ok=True)
        save_corpus(self.train_pairs, os.path.join(out_dir, "train.jsonl"))
        save_corpus(self.heldout_pairs, os.path.join(out_dir, "heldout.jsonl"))
        with open(os.path.join(out_dir, "triples.tsv"), "w", encoding="utf-8") as fh:
            fh.write(f"# entities={self.kg.entity_count} relations={self.kg.relation_count}\n")
            for tr in self.kg.triples:
                fh.write(f"{tr.h}\t{tr.l}\t{tr.t}\n")
        with open(os.path.join(out_dir, "entity_names.tsv"), "w", encoding="utf-8") as fh:
            for eid in sorted(self.kg.entity_names):
                fh.write(f"{eid}\t{self.kg.entity_names[eid]}\n")
        self.gazetteer.save_tsv(os.path.join(out_dir, "gazetteer.tsv"))


def _pseudo_word(rng: Rng, syllables: int) -> str:
    return "".join(
        _CONSONANTS[rng.integers(0, len(_CONSONANTS))] + _VOWELS[rng.integers(0, len(_VOWELS))]
        for _ in range(syllables)
    )


def _unique_names(rng: Rng, count: int, taken: set, capitalized: bool) -> list[str]:
    names = []
    while len(names) < count:
        word = _pseudo_word(rng, 3)
        if capitalized:
            word = word.capitalize()
        if word in taken:
            continue
        taken.add(word)
        names.append(word)
    return names


def _gen_copy(spec: SyntheticTaskSpec, rng: Rng) -> SyntheticData:
    if spec.vocab_size < 6:
        raise ValueError("copy task needs vocab_size >= 6")
    taken: set = set()
    words = _unique_names(rng, spec.vocab_size, taken, capitalized=False)

    def make_pair() -> Pair:
        length = rng.integers(8, 25)
        toks = [words[rng.integers(0, len(words))] for _ in range(length)]
        return Pair(" ".join(toks), " ".join(toks[:6]))

    train = [make_pair() for _ in range(spec.n_train)]
    heldout = [make_pair() for _ in range(spec.n_heldout)]
    kg = KnowledgeGraph(entity_count=0, relation_count=0, triples=[])
    return SyntheticData(train, heldout, kg, Gazetteer())


def _gen_entity_lookup(spec: SyntheticTaskSpec, rng: Rng) -> SyntheticData:
    if spec.n_relations not in (1, 2):
        raise ValueError(f"entity_lookup supports 1 or 2 relations, got {spec.n_relations}")
    # small teams keep corrupted triples from colliding with true teammate
    # facts too often, which keeps the converged ranking loss near zero
    n_teams = max(2, spec.n_entities // 4)
    n_cities = n_teams if spec.n_relations == 2 else 0
    n_persons = spec.n_entities - n_teams - n_cities
    if n_persons < spec.n_train + spec.n_heldout:
        raise ValueError(
            f"{spec.n_entities} entities leave only {n_persons} persons; "
            f"need n_train + n_heldout = {spec.n_train + spec.n_heldout}"
        )
    if spec.n_train < n_teams:
        raise ValueError(f"n_train={spec.n_train} cannot cover all {n_teams} teams")

    taken: set = set()
    person_names = _unique_names(rng, n_persons, taken, capitalized=True)
    team_names = _unique_names(rng, n_teams, taken, capitalized=True)
    city_names = _unique_names(rng, n_cities, taken, capitalized=True)

    # ids: persons, then teams, then cities
    names = {}
    for i, name in enumerate(person_names):
        names[i] = name
    for j, name in enumerate(team_names):
        names[n_persons + j] = name
    for j, name in enumerate(city_names):
        names[n_persons + n_teams + j] = name

    team_of_person = {p: p % n_teams for p in range(n_persons)}
    triples = [Triple(p, PLAYS_FOR, n_persons + team_of_person[p]) for p in range(n_persons)]
    if spec.n_relations == 2:
        triples += [Triple(n_persons + j, BASED_IN, n_persons + n_teams + j) for j in range(n_teams)]
    kg = KnowledgeGraph(spec.n_entities, spec.n_relations, triples, names)

    gazetteer = Gazetteer({person_names[p]: p for p in range(n_persons)})

    def make_pair(person: int) -> Pair:
        team = team_names[team_of_person[person]]
        article = f"report : {person_names[person]} scored today ."
        summary = f"{person_names[person]} plays for {team} ."
        return Pair(article, summary)

    train = [make_pair(p) for p in range(spec.n_train)]
    heldout = [make_pair(p) for p in range(spec.n_train, spec.n_train + spec.n_heldout)]
    return SyntheticData(train, heldout, kg, gazetteer, team_of_person)


def gen_synthetic(spec: SyntheticTaskSpec) -> SyntheticData:
    rng = Rng(spec.seed)
    if spec.task == "copy":
        return _gen_copy(spec, rng)
    if spec.task == "entity_lookup":
        return _gen_entity_lookup(spec, rng)
    raise ValueError(f"unknown synthetic task {spec.task!r}")
