"""Domain models for the case similarity toolkit."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterator, List, Optional, Set, Tuple


class CaseType(str, Enum):
    CIVIL = "civil"
    CRIMINAL = "criminal"
    UNKNOWN = "unknown"


class NodeType(str, Enum):
    DOCUMENT = "document"
    ACT = "act"
    PART = "part"
    CHAPTER = "chapter"
    TOPIC = "topic"
    SECTION = "section"


STATUTE_TYPES: FrozenSet[NodeType] = frozenset(
    {NodeType.ACT, NodeType.PART, NodeType.CHAPTER, NodeType.TOPIC, NodeType.SECTION}
)


class EdgeKind(str, Enum):
    CITATION = "citation"
    HIERARCHY = "hierarchy"


class WalkPolicy(str, Enum):
    UNIFORM = "uniform"
    ICF = "icf"


@dataclass
class CaseDocument:
    id: str
    text: str = ""
    case_type: CaseType = CaseType.UNKNOWN
    cited_cases: Set[str] = field(default_factory=set)
    cited_statutes: Set[str] = field(default_factory=set)
    # ids (or "act name|sections" descriptors) that could not be resolved
    unresolved: Set[str] = field(default_factory=set)


@dataclass
class StatuteNode:
    id: str
    node_type: NodeType
    title: str = ""
    parent_id: Optional[str] = None
    text: str = ""
    cited_statutes: Set[str] = field(default_factory=set)
    number: Optional[int] = None
    unresolved: Set[str] = field(default_factory=set)


@dataclass
class CitationMatch:
    """One statute citation found in a piece of text."""

    source_id: str
    act_name: str
    sections: List[int]
    span: Tuple[int, int]
    act_id: Optional[str] = None
    unresolved: Optional[str] = None

    @property
    def is_act_level(self) -> bool:
        return not self.sections

    def describe(self) -> str:
        nums = ",".join(str(s) for s in self.sections)
        return f"{self.act_name}|{nums}" if nums else self.act_name


@dataclass(frozen=True)
class NodeRef:
    index: int
    id: str
    node_type: NodeType


@dataclass(frozen=True)
class EdgeRef:
    src: NodeRef
    dst: NodeRef
    edge_kind: EdgeKind


@dataclass(frozen=True)
class MetapathSchema:
    name: str
    type_sequence: Tuple[NodeType, ...]

    def __len__(self) -> int:
        return len(self.type_sequence)

    def type_at(self, position: int) -> NodeType:
        """
        Node type expected at ``position`` of a walk; past the end the schema's
        interior repeats (doc-sec-doc-sec-doc...).
        """
        if position < len(self.type_sequence):
            return self.type_sequence[position]
        period = len(self.type_sequence) - 1
        return self.type_sequence[(position - 1) % period + 1]


@dataclass(frozen=True)
class WalkConfig:
    walks_per_root: int = 2000
    walk_length: int = 7
    policy: WalkPolicy = WalkPolicy.UNIFORM
    seed: int = 42
    drop_truncated: bool = False
    workers: int = 1


@dataclass
class WalkCorpus:
    sequences: List[List[int]] = field(default_factory=list)
    # (schema name, root index, walk index) per sequence
    provenance: List[Tuple[str, int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[List[int]]:
        return iter(self.sequences)

    def extend(self, other: "WalkCorpus") -> None:
        self.sequences.extend(other.sequences)
        self.provenance.extend(other.provenance)


@dataclass(frozen=True)
class SgnsConfig:
    dim: int = 200
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    min_count: int = 1
    seed: int = 42
    batch_size: int = 256
    workers: int = 1


class Stemming(str, Enum):
    OFF = "off"
    SUFFIX_STRIP = "suffix_strip"


@dataclass(frozen=True)
class TextPreprocessConfig:
    lowercase: bool = True
    stopword_file: Optional[str] = None
    stemming: Stemming = Stemming.OFF


@dataclass(frozen=True)
class FusionTrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 0.01
    train_fraction: float = 0.8
    epochs: int = 50
    batch_size: int = 64
    seed: int = 42
    alpha: float = 0.5
    denoise_sigma: float = 0.05
    exclude_ids: FrozenSet[str] = frozenset()


@dataclass(frozen=True)
class PairRow:
    id_a: str
    id_b: str
    expert: float
    predicted: Optional[float] = None


@dataclass
class PairDataset:
    rows: List[PairRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def ids(self) -> Set[str]:
        return {r.id_a for r in self.rows} | {r.id_b for r in self.rows}


class WeightScheme(str, Enum):
    SCH1 = "sch1"
    SCH2 = "sch2"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ClassWeights:
    w0: float
    w1: float
    scheme: WeightScheme = WeightScheme.CUSTOM
    p_similar: Optional[float] = None


@dataclass
class EvalReport:
    n: int
    pearson: Optional[float]
    mse: float
    fscore_macro: float
    wtd_fscore: Optional[float] = None
    wtd_mse: Optional[float] = None
    config: Dict[str, object] = field(default_factory=dict)


@dataclass
class Recommendation:
    source_id: str
    k: int
    ranked: List[Tuple[str, float]] = field(default_factory=list)
