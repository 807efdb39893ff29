"""Environment contract.

An environment wraps one problem instance.  States are hashable values that
only the environment interprets; actions are :class:`LabelSet` values.
Successors are returned sorted by action serialization so that every search
built on top of them is deterministic.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any, Hashable, Iterable, Sequence

from ..core import ActionStep, GroundingGraph, LabelSet, Path
from ..errors import IllegalTransition


class Environment(ABC):
    kind: str = "abstract"
    goal_directed: bool = False

    def __init__(self, instance):
        self.instance = instance
        self._succ: dict = {}
        self._graphs: dict = {}

    @abstractmethod
    def initial_state(self) -> Hashable: ...

    @abstractmethod
    def _successors(self, state) -> list[tuple[LabelSet, Hashable]]: ...

    @abstractmethod
    def _graph(self, pre, action: LabelSet, post) -> GroundingGraph: ...

    def is_goal(self, state) -> bool | None:
        """Goal test used by the planner; None when the agent has no goal."""
        return None

    def successors(self, state) -> list[tuple[LabelSet, Hashable]]:
        hit = self._succ.get(state)
        if hit is None:
            hit = sorted(self._successors(state), key=lambda t: t[0].serialize())
            self._succ[state] = hit
        return hit

    def grounding_graph(self, pre, action: LabelSet, post) -> GroundingGraph:
        key = (pre, action)
        g = self._graphs.get(key)
        if g is None:
            nxt = dict(self.successors(pre)).get(action)
            if nxt is None or nxt != post:
                raise IllegalTransition(f"{action!r} from {pre!r} does not reach {post!r}")
            g = self._graphs[key] = self._graph(pre, action, post)
        return g

    def step(self, state, action: LabelSet) -> ActionStep:
        post = dict(self.successors(state)).get(action)
        if post is None:
            raise IllegalTransition(f"{action!r} is not legal in {state!r}")
        return ActionStep(state, action, post, self.grounding_graph(state, action, post))

    def expand(self, state) -> list[ActionStep]:
        return [ActionStep(state, a, s, self.grounding_graph(state, a, s))
                for a, s in self.successors(state)]

    def replay(self, start, actions: Iterable[LabelSet]) -> Path:
        steps, state = [], start
        for a in actions:
            st = self.step(state, a)
            steps.append(st)
            state = st.post_state
        return Path(tuple(steps))

    # -- evaluation hooks ---------------------------------------------------

    def success(self, final_state, gold_final_state) -> bool:
        """Task success of a predicted end state against the demonstrated one."""
        return final_state == gold_final_state

    def transitions(self, path: Path, start=None) -> set:
        return {(s.pre_state, s.post_state) for s in path.steps}

    # -- serialization ------------------------------------------------------

    def state_to_json(self, state) -> Any:
        return state

    def state_from_json(self, obj) -> Hashable:
        return obj


class TableEnv(Environment):
    """Explicit transition table; mostly useful for tests and toy planning.

    ``instance`` is a :class:`TableInstance`.
    """

    kind = "table"

    def __init__(self, instance: "TableInstance"):
        super().__init__(instance)
        self.goal_directed = bool(instance.goals)
        self._table: dict = {}
        for src, labels, dst in instance.transitions:
            self._table.setdefault(src, []).append((labels, dst))

    def initial_state(self):
        return self.instance.start

    def _successors(self, state):
        return list(self._table.get(state, []))

    def _graph(self, pre, action, post):
        from ..core import Edge

        rel = LabelSet.of(rel="self")
        post_labels = self.instance.state_labels.get(post, LabelSet())
        root = LabelSet(action)
        verts = (root, post_labels)
        edges = (Edge(0, 1, LabelSet.of(rel="to")), Edge(0, 0, rel), Edge(1, 1, rel))
        return GroundingGraph(verts, edges, 0)

    def is_goal(self, state):
        if not self.instance.goals:
            return None
        return state in self.instance.goals


class TableInstance:
    def __init__(self, start, transitions: Sequence[tuple], state_labels: dict | None = None,
                 goals: Iterable = ()):
        self.start = start
        self.transitions = [(s, LabelSet(a), d) for s, a, d in transitions]
        self.state_labels = dict(state_labels or {})
        self.goals = frozenset(goals)

    def to_json(self):
        from ..io import labels_to_json

        return {
            "start": self.start,
            "transitions": [[s, labels_to_json(a), d] for s, a, d in self.transitions],
            "state_labels": [[s, labels_to_json(l)] for s, l in sorted(self.state_labels.items())],
            "goals": sorted(self.goals),
        }

    @classmethod
    def from_json(cls, obj):
        from ..io import labels_from_json

        return cls(obj["start"],
                   [(s, labels_from_json(a), d) for s, a, d in obj["transitions"]],
                   {s: labels_from_json(l) for s, l in obj.get("state_labels", [])},
                   obj.get("goals", ()))
