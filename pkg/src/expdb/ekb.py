"""Knowledge base of standardized rule-based methods.

Each entry records its inputs, output, tunable parameters, a tag vector
describing where it applies, and the id of a registered behavior.  A demand
vector describing the current task and environment selects the closest
entry by cosine similarity of one-hot tag encodings.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import rules

SLOTS: dict[str, tuple] = {
    "task": ("cardinality", "index"),
    "goal": ("accuracy", "cost", "time"),
    "data_model": ("relational", "graph", "kv"),
    "mode": ("online", "offline"),
    "multi": (0, 1),
}

# bare tags accepted in list form, mapped to (slot, value)
_TAG_ALIASES = {"multi": ("multi", 1), "single": ("multi", 0)}


class KnowledgeError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureTagVector:
    task: str
    goal: str
    data_model: str
    mode: str
    multi: int

    def __post_init__(self):
        for slot, allowed in SLOTS.items():
            if getattr(self, slot) not in allowed:
                raise KnowledgeError(f"{slot}: {getattr(self, slot)!r} not in {allowed}")

    def encode(self) -> np.ndarray:
        parts = []
        for slot, allowed in SLOTS.items():
            onehot = np.zeros(len(allowed))
            onehot[allowed.index(getattr(self, slot))] = 1.0
            parts.append(onehot)
        return np.concatenate(parts)

    def as_dict(self) -> dict:
        return {slot: getattr(self, slot) for slot in SLOTS}

    def replace(self, **changes) -> "FeatureTagVector":
        d = self.as_dict()
        d.update(changes)
        return FeatureTagVector(**d)

    @classmethod
    def from_tags(cls, tags: Union[Mapping[str, Any], Iterable], defaults: Optional["FeatureTagVector"] = None):
        """Build from a slot mapping or a flat tag list like ``["index", "cost", "relational", "multi"]``.

        A slot given two different values is an error.
        """
        values: dict[str, Any] = {}

        def put(slot, value):
            if slot in values and values[slot] != value:
                raise KnowledgeError(f"{slot}: more than one value ({values[slot]!r}, {value!r})")
            values[slot] = value

        if isinstance(tags, Mapping):
            for slot, value in tags.items():
                if slot not in SLOTS:
                    raise KnowledgeError(f"unknown feature slot {slot!r}")
                if isinstance(value, (list, tuple)):
                    if len(value) != 1:
                        raise KnowledgeError(f"{slot}: exactly one value required, got {list(value)}")
                    value = value[0]
                if slot == "multi":
                    value = int(value)
                put(slot, value)
        else:
            for tag in tags:
                if tag in _TAG_ALIASES:
                    put(*_TAG_ALIASES[tag])
                    continue
                owners = [s for s, allowed in SLOTS.items() if s != "multi" and tag in allowed]
                if not owners:
                    raise KnowledgeError(f"unknown feature tag {tag!r}")
                put(owners[0], tag)
        if defaults is not None:
            for slot, value in defaults.as_dict().items():
                values.setdefault(slot, value)
        missing = [s for s in SLOTS if s not in values]
        if missing:
            raise KnowledgeError(f"missing feature slots {missing}")
        return cls(**values)


def similarity(a: FeatureTagVector, b: FeatureTagVector) -> float:
    va, vb = a.encode(), b.encode()
    return float(va @ vb / math.sqrt((va @ va) * (vb @ vb)))


# ---------------------------------------------------------------------------
# behavior registry


@dataclass(frozen=True)
class Behavior:
    id: str
    factory: Callable
    input: tuple[str, ...]
    output: str
    parameters: tuple[tuple[str, Any], ...]
    feature: FeatureTagVector


BEHAVIORS: dict[str, Behavior] = {}


def register_behavior(behavior: Behavior) -> None:
    BEHAVIORS[behavior.id] = behavior


for _b in (
    Behavior(
        "histogram",
        rules.histogram_estimator,
        ("table", "query"),
        "cardinality",
        (("bucket_count", 64),),
        FeatureTagVector("cardinality", "accuracy", "relational", "online", 1),
    ),
    Behavior(
        "coldstart",
        rules.coldstart_estimator,
        ("table", "query"),
        "cardinality",
        (),
        FeatureTagVector("cardinality", "time", "relational", "online", 0),
    ),
    Behavior(
        "frequency_rules",
        rules.bind_frequency_rules,
        ("workload", "indexes"),
        "index_revision",
        (("f_low", rules.F_LOW), ("f_high", rules.F_HIGH)),
        FeatureTagVector("index", "cost", "relational", "online", 0),
    ),
    Behavior(
        "drop_infrequent",
        rules.bind_drop_infrequent,
        ("table", "workload"),
        "indexes",
        (("f_low", rules.F_LOW),),
        FeatureTagVector("index", "cost", "relational", "offline", 1),
    ),
    Behavior(
        "frequent_candidate",
        rules.bind_frequent_candidate,
        ("workload", "indexes"),
        "index_revision",
        (("f_high", rules.F_HIGH),),
        FeatureTagVector("index", "time", "relational", "online", 0),
    ),
    Behavior(
        "drop_repeated",
        rules.bind_drop_repeated,
        ("indexes",),
        "index_revision",
        (),
        FeatureTagVector("index", "cost", "relational", "offline", 0),
    ),
):
    register_behavior(_b)


@dataclass(frozen=True)
class RuleMethod:
    name: str
    input: tuple[str, ...]
    output: str
    parameters: tuple[tuple[str, Any], ...]
    feature: FeatureTagVector
    behavior: str

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise KnowledgeError(f"unknown behavior {self.behavior!r}")

    def bind(self, context=None, **overrides) -> Callable:
        """Instantiate the behavior with this entry's parameters (overridable)."""
        params = dict(self.parameters)
        unknown = set(overrides) - set(params)
        if unknown:
            raise KnowledgeError(f"{self.name}: unknown parameters {sorted(unknown)}")
        params.update(overrides)
        return BEHAVIORS[self.behavior].factory(context, **params)

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "input": list(self.input),
            "output": self.output,
            "parameters": [[k, v] for k, v in self.parameters],
            "feature": self.feature.as_dict(),
            "behavior": self.behavior,
        }


def standardize(raw: Mapping[str, Any]) -> RuleMethod:
    """Turn a method descriptor into a validated knowledge-base entry.

    Only ``behavior`` is required; other fields default to the registered
    behavior's own description.
    """
    bid = raw.get("behavior")
    if bid not in BEHAVIORS:
        raise KnowledgeError(f"unknown behavior {bid!r}")
    base = BEHAVIORS[bid]
    params = raw.get("parameters", base.parameters)
    if isinstance(params, Mapping):
        params = params.items()
    feature = raw.get("feature")
    tags = base.feature if feature is None else FeatureTagVector.from_tags(feature, defaults=base.feature)
    return RuleMethod(
        name=str(raw.get("name", bid)),
        input=tuple(raw.get("input", base.input)),
        output=str(raw.get("output", base.output)),
        parameters=tuple((str(k), v) for k, v in params),
        feature=tags,
        behavior=bid,
    )


class KnowledgeBase:
    def __init__(self, entries: Iterable[RuleMethod] = ()):
        self.entries: list[RuleMethod] = []
        for e in entries:
            self.add(e)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def add(self, entry: RuleMethod) -> None:
        if any(e.feature == entry.feature for e in self.entries):
            raise KnowledgeError(f"{entry.name}: feature vector duplicates an existing entry")
        self.entries.append(entry)

    def get(self, name: str) -> RuleMethod:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(e.to_record(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "KnowledgeBase":
        with open(path) as fh:
            return cls(standardize(json.loads(line)) for line in fh if line.strip())


def default_kb() -> KnowledgeBase:
    return KnowledgeBase(standardize({"behavior": b}) for b in BEHAVIORS)


def match_method(kb: Union[KnowledgeBase, Sequence[RuleMethod]], demand: FeatureTagVector) -> RuleMethod:
    """Entry with the highest cosine similarity to ``demand``; ties go to the earliest entry."""
    entries = list(kb)
    if not entries:
        raise KnowledgeError("knowledge base is empty")
    best, best_sim = entries[0], -math.inf
    for e in entries:
        s = similarity(e.feature, demand)
        if s > best_sim:
            best, best_sim = e, s
    return best


def needs_update(current: RuleMethod, env_demand: FeatureTagVector, threshold: float = 0.75) -> bool:
    return similarity(current.feature, env_demand) < threshold
