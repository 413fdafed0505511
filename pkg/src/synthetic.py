"""Seeded synthetic corpora with planted document communities."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Set, Tuple, Union

import numpy as np

from .corpus import ActRegistry, write_act_registry, write_corpus
from .errors import ConfigError
from .evaluation import write_pairs
from .models import CaseDocument, CaseType, NodeType, PairDataset, PairRow, StatuteNode

logger = logging.getLogger(__name__)

_NAME_WORDS = (
    "Harbour", "Forest", "Tenancy", "Excise", "Mining", "Railway", "Wildlife",
    "Customs", "Labour", "Insurance", "Patents", "Waterways", "Salt", "Tea",
    "Grain", "Textile", "Fisheries", "Coinage",
)
_NAME_TAILS = ("Regulation", "Control", "Protection", "Trust", "Tribunals", "Levy")
_SYLLABLES = (
    "ka", "lo", "mi", "ra", "tu", "ve", "so", "ne", "pi", "da", "ge", "fu",
    "bo", "ri", "za", "ch", "wy", "xe",
)


@dataclass(frozen=True)
class SyntheticSpec:
    communities: int = 2
    docs_per_community: int = 20
    acts_per_community: int = 2
    chapters_per_act: int = 2
    sections_per_topic: int = 3
    statute_citations_per_doc: int = 3
    case_citations_per_doc: int = 2
    words_per_doc: int = 60
    community_vocab: int = 30
    shared_vocab: int = 40
    noise: float = 0.0

    def validate(self) -> None:
        if self.communities < 2:
            raise ConfigError("synthetic corpus needs at least 2 communities")
        if self.acts_per_community < 1:
            raise ConfigError("each community needs at least 1 act")
        if self.docs_per_community < 2:
            raise ConfigError("each community needs at least 2 documents")
        if self.chapters_per_act < 1 or self.sections_per_topic < 1:
            raise ConfigError("acts need at least one chapter and one section per topic")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError(f"noise {self.noise} outside [0, 1]")


@dataclass
class SyntheticCorpus:
    cases: List[CaseDocument]
    statutes: List[StatuteNode]
    registry: ActRegistry
    pairs: PairDataset
    community_of: Dict[str, str] = field(default_factory=dict)
    corpus_path: Path = Path()
    registry_path: Path = Path()
    pairs_path: Path = Path()
    groups_path: Path = Path()


@dataclass
class _Act:
    id: str
    title: str
    sections: List[Tuple[int, str]]


def _act_title(k: int) -> str:
    head = _NAME_WORDS[k % len(_NAME_WORDS)]
    tail = _NAME_TAILS[(k // len(_NAME_WORDS)) % len(_NAME_TAILS)]
    return f"{head} {tail} Act, {1901 + 3 * k}"


def _vocabulary(rng: np.random.Generator, size: int, taken: Set[str]) -> List[str]:
    words: List[str] = []
    while len(words) < size:
        word = "".join(rng.choice(_SYLLABLES, size=3))
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def _build_acts(spec: SyntheticSpec, community: int, start: int) -> Tuple[List[_Act], List[StatuteNode]]:
    acts: List[_Act] = []
    nodes: List[StatuteNode] = []
    for a in range(spec.acts_per_community):
        k = start + a
        act_id = f"c{community}_act{a}"
        title = _act_title(k)
        cited = {f"c{community}_act{a - 1}"} if a > 0 else set()
        nodes.append(StatuteNode(id=act_id, node_type=NodeType.ACT, title=title, cited_statutes=cited))
        part_id = f"{act_id}_p1"
        nodes.append(StatuteNode(id=part_id, node_type=NodeType.PART, title="Part I", parent_id=act_id))
        sections: List[Tuple[int, str]] = []
        number = 0
        for ch in range(1, spec.chapters_per_act + 1):
            chapter_id = f"{act_id}_ch{ch}"
            topic_id = f"{act_id}_t{ch}"
            nodes.append(StatuteNode(id=chapter_id, node_type=NodeType.CHAPTER, title=f"Chapter {ch}", parent_id=part_id))
            nodes.append(StatuteNode(id=topic_id, node_type=NodeType.TOPIC, title=f"Topic {ch}", parent_id=chapter_id))
            for _ in range(spec.sections_per_topic):
                number += 1
                sections.append((number, f"{act_id}_s{number}"))
                nodes.append(
                    StatuteNode(
                        id=f"{act_id}_s{number}",
                        node_type=NodeType.SECTION,
                        title=f"Section {number}",
                        parent_id=topic_id,
                        text=f"provision {number} of {title.lower()}",
                        number=number,
                    )
                )
        by_id = {n.id: n for n in nodes}
        # odd sections refer to the next one
        for num, sid in sections:
            if num % 2 == 1 and num < len(sections):
                by_id[sid].cited_statutes.add(f"{act_id}_s{num + 1}")
        acts.append(_Act(id=act_id, title=title, sections=sections))
    return acts, nodes


def _section_phrase(act: _Act, numbers: List[int]) -> str:
    if len(numbers) == 1:
        head = f"Section {numbers[0]}"
    elif numbers == list(range(numbers[0], numbers[-1] + 1)) and len(numbers) > 2:
        head = f"Sections {numbers[0]} to {numbers[-1]}"
    elif len(numbers) == 2:
        head = f"Sections {numbers[0]} and {numbers[1]}"
    else:
        head = "Sections " + ", ".join(str(n) for n in numbers[:-1]) + f" and {numbers[-1]}"
    return f"{head} of the {act.title}"


def write_groups(groups: Dict[str, str], path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc_id in sorted(groups):
            fh.write(f"{doc_id}\t{groups[doc_id]}\n")


def load_groups(path: Union[str, Path]) -> Dict[str, str]:
    groups: Dict[str, str] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ConfigError(f"{path}:{line_no}: expected doc_id<TAB>group")
            groups[parts[0]] = parts[1]
    return groups


def generate_synthetic_corpus(
    spec: SyntheticSpec, seed: int, out_dir: Union[str, Path]
) -> SyntheticCorpus:
    """
    Write ``corpus.jsonl``, ``registry.tsv``, ``pairs.tsv`` and
    ``communities.tsv`` under ``out_dir``. Documents cite sections of their
    own community's acts (and other documents of the community) except for
    a ``noise`` share of citations redirected to another community. Statute
    citations live in the text only, so parsing exercises extraction.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    taken: Set[str] = set()
    shared = _vocabulary(rng, spec.shared_vocab, taken)
    statutes: List[StatuteNode] = []
    acts_by_community: List[List[_Act]] = []
    vocab_by_community: List[List[str]] = []
    for c in range(spec.communities):
        acts, nodes = _build_acts(spec, c, c * spec.acts_per_community)
        acts_by_community.append(acts)
        statutes.extend(nodes)
        vocab_by_community.append(_vocabulary(rng, spec.community_vocab, taken))

    doc_ids = [
        [f"c{c}_d{i:03d}" for i in range(spec.docs_per_community)] for c in range(spec.communities)
    ]

    def _other(c: int) -> int:
        return int((c + 1 + rng.integers(spec.communities - 1)) % spec.communities)

    cases: List[CaseDocument] = []
    community_of: Dict[str, str] = {}
    for c in range(spec.communities):
        case_type = CaseType.CIVIL if c % 2 == 0 else CaseType.CRIMINAL
        for i, doc_id in enumerate(doc_ids[c]):
            community_of[doc_id] = f"c{c}"
            n_own = int(spec.words_per_doc * 0.75)
            words = list(rng.choice(vocab_by_community[c], size=n_own))
            words += list(rng.choice(shared, size=spec.words_per_doc - n_own))
            rng.shuffle(words)

            phrases: List[str] = []
            for _ in range(spec.statute_citations_per_doc):
                target_c = _other(c) if rng.random() < spec.noise else c
                act = acts_by_community[target_c][int(rng.integers(len(acts_by_community[target_c])))]
                width = int(rng.integers(1, 4))
                start = int(rng.integers(1, len(act.sections) + 1))
                numbers = list(range(start, min(len(act.sections), start + width - 1) + 1))
                phrases.append(_section_phrase(act, numbers))
            if rng.random() < 0.5:
                target_c = _other(c) if rng.random() < spec.noise else c
                act = acts_by_community[target_c][int(rng.integers(len(acts_by_community[target_c])))]
                phrases.append(f"as provided under the {act.title}")

            cited_cases: Set[str] = set()
            for _ in range(spec.case_citations_per_doc):
                target_c = _other(c) if rng.random() < spec.noise else c
                pool = [d for d in doc_ids[target_c] if d != doc_id]
                cited_cases.add(pool[int(rng.integers(len(pool)))])

            chunks = np.array_split(np.array(words, dtype=object), len(phrases) + 1)
            body: List[str] = []
            for chunk, phrase in zip(chunks, phrases + [""]):
                body.append(" ".join(chunk))
                if phrase:
                    body.append(f"in view of {phrase} .")
            cases.append(
                CaseDocument(
                    id=doc_id,
                    text=" ".join(part for part in body if part),
                    case_type=case_type,
                    cited_cases=cited_cases,
                )
            )

    registry = ActRegistry()
    for acts in acts_by_community:
        for act in acts:
            registry.add(act.title, act.id)

    all_ids = [d for ids in doc_ids for d in ids]
    pairs = PairDataset(
        [
            PairRow(a, b, 1.0 if community_of[a] == community_of[b] else 0.0)
            for a, b in combinations(all_ids, 2)
        ]
    )

    corpus_path = out / "corpus.jsonl"
    write_corpus(corpus_path, cases, statutes, text_only_case_statutes=True)
    registry_path = out / "registry.tsv"
    write_act_registry(registry_path, registry)
    pairs_path = out / "pairs.tsv"
    write_pairs(pairs, pairs_path)
    write_groups(community_of, out / "communities.tsv")
    logger.info(
        "Synthetic corpus written",
        extra={
            "out_dir": str(out),
            "communities": spec.communities,
            "docs": len(cases),
            "statutes": len(statutes),
            "pairs": len(pairs),
            "noise": spec.noise,
        },
    )
    return SyntheticCorpus(
        cases=cases,
        statutes=statutes,
        registry=registry,
        pairs=pairs,
        community_of=community_of,
        corpus_path=corpus_path,
        registry_path=registry_path,
        pairs_path=pairs_path,
        groups_path=out / "communities.tsv",
    )
