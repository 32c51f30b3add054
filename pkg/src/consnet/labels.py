"""HOI vocabulary, graph node universe and zero-shot splits."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCENARIOS = ("UC", "UO", "UA", "full")
NODE_KINDS = ("human", "action", "object", "interaction")
HUMAN_LABEL = "human"


class SplitError(ValueError):
    """A zero-shot split that cannot be drawn from the given space."""


def normalize_label(name: str) -> str:
    return "_".join(name.strip().lower().replace(" ", "_").split("_"))


def tokenize_label(name: str) -> list[str]:
    """``"Sit_on"`` -> ``["sit", "on"]``."""
    return [t for t in normalize_label(name).split("_") if t]


@dataclass(frozen=True)
class NodeId:
    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")


@dataclass(frozen=True)
class LabelSpace:
    actions: tuple[str, ...]
    objects: tuple[str, ...]
    hois: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.actions or not self.objects or not self.hois:
            raise ValueError("actions, objects and hois must be non-empty")
        for names, what in ((self.actions, "action"), (self.objects, "object")):
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate {what} names")
        if len(set(self.hois)) != len(self.hois):
            raise ValueError("duplicate hoi pairs")
        for a, o in self.hois:
            if not (0 <= a < len(self.actions) and 0 <= o < len(self.objects)):
                raise ValueError(f"hoi ({a}, {o}) references an unknown action or object")

    @property
    def C(self) -> int:
        return len(self.hois)

    @property
    def num_nodes(self) -> int:
        return 1 + len(self.actions) + len(self.objects) + self.C

    # node ordering: human, actions, objects, interactions
    def node_index(self, node: NodeId) -> int:
        if node.kind == "human":
            if node.index != 0:
                raise IndexError("there is exactly one human node")
            return 0
        if node.kind == "action":
            return 1 + node.index
        if node.kind == "object":
            return 1 + len(self.actions) + node.index
        if not 0 <= node.index < self.C:
            raise IndexError(f"interaction index {node.index} out of range")
        return 1 + len(self.actions) + len(self.objects) + node.index

    def nodes(self) -> list[NodeId]:
        out = [NodeId("human", 0)]
        out += [NodeId("action", i) for i in range(len(self.actions))]
        out += [NodeId("object", i) for i in range(len(self.objects))]
        out += [NodeId("interaction", i) for i in range(self.C)]
        return out

    def node_label(self, node: NodeId) -> str:
        if node.kind == "human":
            return HUMAN_LABEL
        if node.kind == "action":
            return self.actions[node.index]
        if node.kind == "object":
            return self.objects[node.index]
        a, o = self.hois[node.index]
        return f"{HUMAN_LABEL} {self.actions[a]} {self.objects[o]}"

    def kind_slice(self, kind: str) -> slice:
        na, no = len(self.actions), len(self.objects)
        return {
            "human": slice(0, 1),
            "action": slice(1, 1 + na),
            "object": slice(1 + na, 1 + na + no),
            "interaction": slice(1 + na + no, 1 + na + no + self.C),
        }[kind]

    def class_node_rows(self) -> dict[str, np.ndarray]:
        """For each HOI class, the node rows of its human/object/action/interaction."""
        act = np.array([a for a, _ in self.hois])
        obj = np.array([o for _, o in self.hois])
        return {
            "h": np.zeros(self.C, dtype=int),
            "o": 1 + len(self.actions) + obj,
            "a": 1 + act,
            "t": 1 + len(self.actions) + len(self.objects) + np.arange(self.C),
        }

    def hoi_index(self, action: str, obj: str) -> int:
        pair = (self.actions.index(action), self.objects.index(obj))
        return self.hois.index(pair)

    def to_json(self) -> dict:
        return {
            "actions": list(self.actions),
            "objects": list(self.objects),
            "hois": [{"action": self.actions[a], "object": self.objects[o]} for a, o in self.hois],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LabelSpace":
        pairs = [(h["action"], h["object"]) for h in doc["hois"]]
        return build_label_space(doc["actions"], doc["objects"], pairs)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "LabelSpace":
        return cls.from_json(json.loads(Path(path).read_text()))


def build_label_space(actions: Sequence[str], objects: Sequence[str],
                      hoi_pairs: Iterable[tuple[str, str]]) -> LabelSpace:
    """Index actions, objects and (action, object) pairs in input order."""
    actions = tuple(normalize_label(a) for a in actions)
    objects = tuple(normalize_label(o) for o in objects)
    if len(set(actions)) != len(actions):
        raise ValueError("duplicate action names")
    if len(set(objects)) != len(objects):
        raise ValueError("duplicate object names")
    a_idx = {a: i for i, a in enumerate(actions)}
    o_idx = {o: i for i, o in enumerate(objects)}
    hois = []
    for a, o in hoi_pairs:
        a, o = normalize_label(a), normalize_label(o)
        if a not in a_idx or o not in o_idx:
            raise ValueError(f"hoi ({a}, {o}) references an unknown name")
        hois.append((a_idx[a], o_idx[o]))
    return LabelSpace(actions, objects, tuple(hois))


@dataclass(frozen=True)
class ZeroShotSplit:
    scenario: str
    unseen_hoi_ids: frozenset[int] = field(default_factory=frozenset)
    seed: int = 0

    def seen_ids(self, space: LabelSpace) -> list[int]:
        return [i for i in range(space.C) if i not in self.unseen_hoi_ids]

    def to_json(self) -> dict:
        return {"scenario": self.scenario, "seed": self.seed,
                "unseen_hoi_ids": sorted(self.unseen_hoi_ids)}

    @classmethod
    def from_json(cls, doc: dict) -> "ZeroShotSplit":
        return cls(doc["scenario"], frozenset(int(i) for i in doc["unseen_hoi_ids"]), int(doc["seed"]))


def uc_feasible(space: LabelSpace, unseen: Iterable[int]) -> bool:
    """Every action and object of the space still appears in a seen HOI."""
    unseen = set(unseen)
    seen = [space.hois[i] for i in range(space.C) if i not in unseen]
    used_a = {a for a, _ in space.hois}
    used_o = {o for _, o in space.hois}
    return {a for a, _ in seen} == used_a and {o for _, o in seen} == used_o


def make_zero_shot_split(space: LabelSpace, scenario: str, k: int, seed: int,
                         max_tries: int = 10_000) -> ZeroShotSplit:
    """Draw ``k`` unseen HOIs (UC) or ``k`` held-out objects/actions (UO/UA).

    UC draws are rejection-sampled until every action and object remains in
    some seen HOI.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    rng = np.random.default_rng(seed)
    if scenario == "full" or k == 0:
        return ZeroShotSplit(scenario, frozenset(), seed)
    if k < 0:
        raise SplitError("k must be non-negative")
    if scenario == "UC":
        if k >= space.C:
            raise SplitError(f"cannot hold out {k} of {space.C} HOIs")
        for _ in range(max_tries):
            pick = rng.choice(space.C, size=k, replace=False)
            if uc_feasible(space, pick):
                return ZeroShotSplit("UC", frozenset(int(i) for i in pick), seed)
        raise SplitError(f"no feasible UC split with k={k} after {max_tries} draws")
    pool = len(space.objects) if scenario == "UO" else len(space.actions)
    if k >= pool:
        raise SplitError(f"cannot hold out {k} of {pool} categories")
    held = set(int(i) for i in rng.choice(pool, size=k, replace=False))
    pos = 1 if scenario == "UO" else 0
    unseen = frozenset(i for i, pair in enumerate(space.hois) if pair[pos] in held)
    if len(unseen) == space.C:
        raise SplitError("split leaves no seen HOI")
    return ZeroShotSplit(scenario, unseen, seed)


def held_out_categories(space: LabelSpace, split: ZeroShotSplit) -> tuple[set[int], set[int]]:
    """(actions, objects) that no seen HOI mentions."""
    seen = [space.hois[i] for i in split.seen_ids(space)]
    actions = set(range(len(space.actions))) - {a for a, _ in seen}
    objects = set(range(len(space.objects))) - {o for _, o in seen}
    return actions, objects


def filter_training_corpus(corpus: Sequence, split: ZeroShotSplit) -> list:
    """Drop every sample whose positive labels touch an unseen HOI.

    Samples expose ``hoi_ids`` (iterable of class indices; empty for
    negatives).
    """
    unseen = split.unseen_hoi_ids
    if not unseen:
        return list(corpus)
    return [s for s in corpus if not (set(s.hoi_ids) & unseen)]
