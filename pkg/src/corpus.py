"""Corpus ingestion and statute citation extraction."""
from __future__ import annotations

import json
import logging
import re
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Set, Tuple, Union

import pandas as pd

from .errors import CorpusError
from .models import CaseDocument, CaseType, CitationMatch, NodeType, StatuteNode

logger = logging.getLogger(__name__)

MAX_RANGE_WIDTH = 500

_YEAR = r"(?:1[6-9]|20)\d{2}"
_NAME_WORD = r"(?:[A-Z][A-Za-z'\-]*|\(No\.\s*\d+\))"
_CONNECTOR = r"(?:of|and|for|the|on|in)"
_ACT_NAME = (
    rf"\b(?P<name>(?:{_NAME_WORD}\s+(?:{_CONNECTOR}\s+)?)*?"
    rf"(?:Act|Code(?:\s+of(?:\s+[A-Z][A-Za-z\-]*)+)?|Constitution(?:\s+of\s+India)?))\b"
    rf"(?:\s*,?\s*(?P<year>{_YEAR})\b)?"
)
_NUMBERS = r"(?P<nums>\d+(?:(?:\s*,\s*(?:and\s+)?|\s+and\s+|\s+to\s+)\d+)*)"
_SECTION_CITATION = re.compile(
    rf"\b(?P<kw>Sections?|Articles?|Secs?\.|Arts?\.)\s+{_NUMBERS}\s+of\s+(?:the\s+)?{_ACT_NAME}"
)
_ACT_CITATION = re.compile(_ACT_NAME)
_NON_WORD = re.compile(r"[^\w\s]|_")
_TRAILING_YEAR = re.compile(rf"\s+({_YEAR})$")
_LEADING_NOISE = {"the", "in", "of", "and", "under", "by", "for", "on"}
_SECTION_NUMBER = re.compile(r"^\D*?(\d+)")


def normalize_act_name(name: str) -> str:
    """Case-fold, drop punctuation (the year survives), collapse whitespace."""
    text = _NON_WORD.sub(" ", name.casefold())
    words = text.split()
    while words and words[0] in _LEADING_NOISE:
        words = words[1:]
    return " ".join(words)


def _strip_year(normalized: str) -> Tuple[str, Optional[str]]:
    match = _TRAILING_YEAR.search(normalized)
    if not match:
        return normalized, None
    return normalized[: match.start()], match.group(1)


class ActRegistry:
    """
    Normalized act name -> act node id. Year-less base names are indexed as
    well so a citation without a year resolves when exactly one act carries
    that base name.
    """

    def __init__(self, entries: Optional[Mapping[str, str]] = None) -> None:
        self._names: Dict[str, str] = {}
        self._by_base: Dict[str, Set[str]] = defaultdict(set)
        for name, act_id in (entries or {}).items():
            self.add(name, act_id)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return normalize_act_name(name) in self._names

    def add(self, name: str, act_id: str) -> None:
        normalized = normalize_act_name(name)
        if not normalized:
            return
        self._names[normalized] = act_id
        base, _ = _strip_year(normalized)
        self._by_base[base].add(act_id)

    def merge(self, other: "ActRegistry") -> None:
        for name, act_id in other._names.items():
            self.add(name, act_id)

    def items(self) -> Iterable[Tuple[str, str]]:
        return sorted(self._names.items())

    def lookup(self, name: str) -> Tuple[Optional[str], Optional[str]]:
        """Return (act_id, None) or (None, reason) with reason in {unknown_act, ambiguous_act}."""
        normalized = normalize_act_name(name)
        words = normalized.split()
        # Sentence-initial words can leak into the captured name; try suffixes.
        for start in range(len(words)):
            candidate = " ".join(words[start:])
            if candidate in self._names:
                base, year = _strip_year(candidate)
                if year is None and len(self._by_base.get(base, ())) > 1:
                    return None, "ambiguous_act"
                return self._names[candidate], None
            base, year = _strip_year(candidate)
            ids = self._by_base.get(base, set())
            if year is None:
                if len(ids) == 1:
                    return next(iter(ids)), None
                if len(ids) > 1:
                    return None, "ambiguous_act"
            elif base in self._names and len(ids) == 1:
                # registered without a year, cited with one
                return self._names[base], None
        return None, "unknown_act"

    @classmethod
    def from_statutes(cls, statutes: Iterable[StatuteNode]) -> "ActRegistry":
        registry = cls()
        for node in statutes:
            if node.node_type == NodeType.ACT and node.title:
                registry.add(node.title, node.id)
        return registry


def load_act_registry(path: Union[str, Path]) -> ActRegistry:
    """Read a ``normalized_name<TAB>act_id`` file."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"act registry not found: {path}")
    if path.stat().st_size == 0:
        return ActRegistry()
    frame = pd.read_csv(
        path, sep="\t", header=None, names=["name", "act_id"], dtype=str,
        comment="#", keep_default_na=False, quoting=3,
    )
    registry = ActRegistry()
    for row in frame.itertuples(index=False):
        if not row.name or not row.act_id:
            raise CorpusError(f"registry row needs name and act id: {row.name!r}")
        registry.add(row.name, row.act_id)
    logger.info("Act registry loaded", extra={"path": str(path), "names": len(registry)})
    return registry


def write_act_registry(path: Union[str, Path], registry: ActRegistry) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for name, act_id in registry.items():
            fh.write(f"{name}\t{act_id}\n")


def _expand_numbers(raw: str) -> Optional[List[int]]:
    tokens = re.findall(r"\d+|to", raw)
    numbers: List[int] = []
    pending_range = False
    for token in tokens:
        if token == "to":
            pending_range = True
            continue
        value = int(token)
        if pending_range and numbers:
            low = numbers[-1]
            if value < low or value - low + 1 > MAX_RANGE_WIDTH:
                return None
            numbers.extend(range(low + 1, value + 1))
            pending_range = False
        else:
            numbers.append(value)
    return sorted(set(numbers))


def _as_registry(act_registry: Union[ActRegistry, Mapping[str, str], None]) -> ActRegistry:
    if isinstance(act_registry, ActRegistry):
        return act_registry
    return ActRegistry(act_registry or {})


def _act_label(match: "re.Match[str]") -> str:
    name = match.group("name")
    year = match.group("year")
    return normalize_act_name(f"{name} {year}" if year else name)


def extract_statute_citations(
    text: str,
    act_registry: Union[ActRegistry, Mapping[str, str], None],
    source_id: str = "",
) -> List[CitationMatch]:
    """
    Find "Section(s)/Article(s) <numbers> of the <Act>" citations and bare act
    mentions in ``text``. Matches whose act is not registered come back with
    ``unresolved`` set rather than being dropped.
    """
    registry = _as_registry(act_registry)
    matches: List[CitationMatch] = []
    taken: List[Tuple[int, int]] = []

    for found in _SECTION_CITATION.finditer(text):
        sections = _expand_numbers(found.group("nums"))
        if sections is None:
            logger.warning(
                "Rejected section range",
                extra={"source_id": source_id, "text": found.group(0)[:80]},
            )
            continue
        act_name = _act_label(found)
        act_id, reason = registry.lookup(act_name)
        span = (found.start(), found.end())
        taken.append(span)
        matches.append(
            CitationMatch(
                source_id=source_id,
                act_name=act_name,
                sections=sections,
                span=span,
                act_id=act_id,
                unresolved=reason,
            )
        )

    for found in _ACT_CITATION.finditer(text):
        span = (found.start(), found.end())
        if any(start <= span[0] < end for start, end in taken):
            continue
        act_name = _act_label(found)
        base, _ = _strip_year(act_name)
        # "the said Act" and other bare keywords carry no act identity
        if len(base.split()) < 2 and not base.startswith("constitution"):
            continue
        act_id, reason = registry.lookup(act_name)
        matches.append(
            CitationMatch(
                source_id=source_id,
                act_name=act_name,
                sections=[],
                span=span,
                act_id=act_id,
                unresolved=reason,
            )
        )

    matches.sort(key=lambda m: (m.span, m.act_name))
    return matches


class StatuteIndex:
    """Statutes indexed by id and by (act id, section number)."""

    def __init__(self, statutes: Iterable[StatuteNode], registry: Optional[ActRegistry] = None) -> None:
        self.nodes: Dict[str, StatuteNode] = {s.id: s for s in statutes}
        self.registry = ActRegistry.from_statutes(self.nodes.values())
        if registry is not None:
            self.registry.merge(registry)
        self._sections: Dict[str, Dict[int, str]] = defaultdict(dict)
        for node in self.nodes.values():
            if node.node_type != NodeType.SECTION:
                continue
            number = section_number(node)
            act_id = self.act_of(node.id)
            if number is not None and act_id is not None:
                self._sections[act_id][number] = node.id

    def act_of(self, node_id: str) -> Optional[str]:
        seen: Set[str] = set()
        current = self.nodes.get(node_id)
        while current is not None and current.id not in seen:
            if current.node_type == NodeType.ACT:
                return current.id
            seen.add(current.id)
            current = self.nodes.get(current.parent_id) if current.parent_id else None
        return None

    def section(self, act_id: str, number: int) -> Optional[str]:
        return self._sections.get(act_id, {}).get(number)


def section_number(node: StatuteNode) -> Optional[int]:
    if node.number is not None:
        return node.number
    found = _SECTION_NUMBER.match(node.title or "")
    return int(found.group(1)) if found else None


def resolve_section_ids(
    match: CitationMatch,
    statutes: Union[StatuteIndex, Iterable[StatuteNode]],
) -> List[str]:
    """
    Map a citation to statute node ids: the act node for act-level citations,
    section nodes otherwise. Sections missing from the dump are reported and
    skipped.
    """
    index = statutes if isinstance(statutes, StatuteIndex) else StatuteIndex(statutes)
    act_id = match.act_id
    if act_id is None or act_id not in index.nodes:
        act_id, reason = index.registry.lookup(match.act_name)
        if act_id is None:
            match.unresolved = reason
            logger.warning(
                "Unresolved act citation",
                extra={"source_id": match.source_id, "act": match.act_name, "reason": reason},
            )
            return []
        match.act_id = act_id
        match.unresolved = None

    if match.is_act_level:
        return [act_id]

    resolved: List[str] = []
    missing: List[int] = []
    for number in match.sections:
        section_id = index.section(act_id, number)
        if section_id is None:
            missing.append(number)
        else:
            resolved.append(section_id)
    if missing:
        match.unresolved = "missing_section"
        logger.warning(
            "Cited sections absent from statute dump",
            extra={"source_id": match.source_id, "act_id": act_id, "sections": missing},
        )
    return resolved


def _string_set(record: Mapping[str, Any], key: str, line: int) -> Optional[Set[str]]:
    value = record.get(key)
    if value is None:
        return None
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise CorpusError(f"{key} must be a list of strings", line)
    return set(value)


def _case_from_record(record: Mapping[str, Any], line: int) -> Tuple[CaseDocument, bool]:
    try:
        case_type = CaseType(record.get("case_type") or "unknown")
    except ValueError as exc:
        raise CorpusError(f"bad case_type {record.get('case_type')!r}", line) from exc
    cited_cases = _string_set(record, "cited_cases", line) or set()
    cited_statutes = _string_set(record, "cited_statutes", line)
    doc = CaseDocument(
        id=record["id"],
        text=str(record.get("text") or ""),
        case_type=case_type,
        cited_cases=cited_cases,
        cited_statutes=cited_statutes or set(),
        unresolved=_string_set(record, "unresolved", line) or set(),
    )
    return doc, cited_statutes is None


def _statute_from_record(record: Mapping[str, Any], line: int) -> Tuple[StatuteNode, bool]:
    try:
        node_type = NodeType(record.get("node_type"))
    except ValueError as exc:
        raise CorpusError(f"bad node_type {record.get('node_type')!r}", line) from exc
    if node_type == NodeType.DOCUMENT:
        raise CorpusError("statute record cannot have node_type document", line)
    parent_id = record.get("parent_id") or None
    if (parent_id is None) != (node_type == NodeType.ACT):
        raise CorpusError(f"{record['id']}: parent_id must be absent exactly for acts", line)
    number = record.get("number")
    cited = _string_set(record, "cited_statutes", line)
    node = StatuteNode(
        id=record["id"],
        node_type=node_type,
        title=str(record.get("title") or ""),
        parent_id=parent_id,
        text=str(record.get("text") or ""),
        cited_statutes=cited or set(),
        number=int(number) if number is not None else None,
        unresolved=_string_set(record, "unresolved", line) or set(),
    )
    return node, cited is None


def _resolve_text_citations(
    source_id: str, text: str, index: StatuteIndex
) -> Tuple[Set[str], Set[str]]:
    cited: Set[str] = set()
    unresolved: Set[str] = set()
    for match in extract_statute_citations(text, index.registry, source_id=source_id):
        ids = resolve_section_ids(match, index)
        cited.update(ids)
        if match.unresolved:
            unresolved.add(match.describe())
    cited.discard(source_id)
    return cited, unresolved


def parse_corpus(
    path: Union[str, Path],
    format: str = "jsonlines",
    registry: Optional[ActRegistry] = None,
) -> Tuple[List[CaseDocument], List[StatuteNode]]:
    """
    Read a JSON-lines corpus. Records without ``cited_statutes`` get them
    extracted from their text; dangling references are kept and flagged in
    ``unresolved``.
    """
    if format != "jsonlines":
        raise CorpusError(f"unsupported corpus format: {format}")
    path = Path(path)
    cases: List[CaseDocument] = []
    statutes: List[StatuteNode] = []
    needs_extraction: List[Union[CaseDocument, StatuteNode]] = []
    seen: Set[str] = set()

    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"malformed JSON: {exc.msg}", line_no) from exc
            if not isinstance(record, dict):
                raise CorpusError("record must be a JSON object", line_no)
            record_id = record.get("id")
            if not isinstance(record_id, str) or not record_id:
                raise CorpusError("record id must be a nonempty string", line_no)
            if record_id in seen:
                raise CorpusError(f"duplicate id: {record_id}", line_no)
            seen.add(record_id)

            kind = record.get("kind")
            if kind == "case":
                doc, extract = _case_from_record(record, line_no)
                cases.append(doc)
            elif kind == "statute":
                doc, extract = _statute_from_record(record, line_no)
                statutes.append(doc)
            else:
                raise CorpusError(f"unknown record kind {kind!r}", line_no)
            if extract:
                needs_extraction.append(doc)

    index = StatuteIndex(statutes, registry)
    for item in needs_extraction:
        cited, unresolved = _resolve_text_citations(item.id, item.text, index)
        item.cited_statutes = cited
        item.unresolved |= unresolved

    case_ids = {c.id for c in cases}
    for doc in cases:
        if doc.id in doc.cited_cases or doc.id in doc.cited_statutes:
            logger.warning("Dropping self-citation", extra={"id": doc.id})
            doc.cited_cases.discard(doc.id)
            doc.cited_statutes.discard(doc.id)
        doc.unresolved |= {c for c in doc.cited_cases if c not in case_ids}
        doc.unresolved |= {s for s in doc.cited_statutes if s not in index.nodes}
    for node in statutes:
        node.cited_statutes.discard(node.id)
        node.unresolved |= {s for s in node.cited_statutes if s not in index.nodes}

    flagged = sum(len(d.unresolved) for d in cases) + sum(len(s.unresolved) for s in statutes)
    logger.info(
        "Corpus parsed",
        extra={
            "path": str(path),
            "cases": len(cases),
            "statutes": len(statutes),
            "extracted": len(needs_extraction),
            "unresolved": flagged,
        },
    )
    return cases, statutes


def write_corpus(
    path: Union[str, Path],
    cases: Iterable[CaseDocument],
    statutes: Iterable[StatuteNode],
    text_only_case_statutes: bool = False,
) -> None:
    """
    Write the normalized records back out; ``parse_corpus`` reads them
    unchanged. With ``text_only_case_statutes`` case records omit
    ``cited_statutes`` so the reader extracts them from the text.
    """
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc in cases:
            record: Dict[str, Any] = {
                "id": doc.id,
                "kind": "case",
                "case_type": doc.case_type.value,
                "text": doc.text,
                "cited_cases": sorted(doc.cited_cases),
            }
            if not text_only_case_statutes:
                record["cited_statutes"] = sorted(doc.cited_statutes)
            if doc.unresolved:
                record["unresolved"] = sorted(doc.unresolved)
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        for node in statutes:
            record = {
                "id": node.id,
                "kind": "statute",
                "node_type": node.node_type.value,
                "parent_id": node.parent_id,
                "title": node.title,
                "text": node.text,
                "cited_statutes": sorted(node.cited_statutes),
            }
            if node.number is not None:
                record["number"] = node.number
            if node.unresolved:
                record["unresolved"] = sorted(node.unresolved)
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
