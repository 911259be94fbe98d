"""Annotated sentence types.  Token indices are 0-based, span ends exclusive."""

from dataclasses import dataclass, field


@dataclass(frozen=True, order=True)
class EntitySpan:
    begin: int
    end: int
    type: str

    def __post_init__(self):
        if not 0 <= self.begin < self.end:
            raise ValueError(f"invalid span [{self.begin}, {self.end})")

    def overlaps(self, other):
        return self.begin < other.end and other.begin < self.end

    def to_json(self):
        return {"start": self.begin, "end": self.end, "type": self.type}


@dataclass(frozen=True, order=True)
class Relation:
    head: EntitySpan
    tail: EntitySpan
    type: str

    def __post_init__(self):
        if self.head == self.tail:
            raise ValueError("relation head and tail must be distinct spans")


@dataclass
class Sentence:
    tokens: list
    entities: list = field(default_factory=list)
    relations: list = field(default_factory=list)
    id: str = ""

    def __len__(self):
        return len(self.tokens)

    def to_json(self):
        index = {e: k for k, e in enumerate(self.entities)}
        out = {
            "tokens": list(self.tokens),
            "entities": [e.to_json() for e in self.entities],
            "relations": [{"head": index[r.head], "tail": index[r.tail], "type": r.type} for r in self.relations],
        }
        if self.id:
            out["id"] = self.id
        return out
