"""State graphs over chained model instances.

A graph is assembled from model instances ("units") joined by non-emitting
links. Building collapses every non-emitting path into direct arcs between
emitting states, so the forward, backward and Viterbi passes below only ever
step frame to frame. Each collapsed arc remembers the model transitions it
used (for re-estimation), the network nodes it entered and whether it crossed
a unit boundary (for segmentation).
"""

import logging
from dataclasses import dataclass
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .errors import NetworkError
from .hmm import ModelSet

logger = logging.getLogger(__name__)

NEG_INF = -np.inf

# (model label, from state, to state) in the model's own transition indexing
ModelArc = Tuple[str, int, int]


@dataclass(frozen=True)
class ArcEvents:
    model_arcs: Tuple[ModelArc, ...] = ()
    nodes: Tuple[str, ...] = ()
    new_segment: bool = False

    def then(self, other: "ArcEvents") -> "ArcEvents":
        return ArcEvents(
            self.model_arcs + other.model_arcs,
            self.nodes + other.nodes,
            self.new_segment or other.new_segment,
        )


@dataclass(frozen=True)
class Unit:
    label: str
    # Network node the unit spells out, if any
    node: Optional[str] = None
    word: Optional[str] = None


@dataclass
class _Path:
    logp: float
    events: ArcEvents


def _entry(unit: int) -> Tuple[str, int]:
    return ("in", unit)


def _exit(unit: int) -> Tuple[str, int]:
    return ("out", unit)


class GraphBuilder:
    def __init__(self, models: ModelSet):
        self.models = models
        self.units: List[Unit] = []
        # Non-emitting adjacency: node -> [(target, logp, events)]
        self._links: Dict[Hashable, List[Tuple[Hashable, float, ArcEvents]]] = {}

    def add_unit(self, label: str, node: Optional[str] = None, word: Optional[str] = None) -> int:
        if label not in self.models:
            raise NetworkError(f"No model for label '{label}'")
        self.units.append(Unit(label, node, word))
        return len(self.units) - 1

    def link(self, source: Hashable, target: Hashable, logp: float = 0.0, node: Optional[str] = None) -> None:
        events = ArcEvents(nodes=(node,) if node is not None else ())
        self._links.setdefault(source, []).append((target, float(logp), events))

    def chain(self, source: Hashable, labels: Sequence[str], target: Hashable, **unit_fields: Optional[str]) -> None:
        """Units for `labels` in sequence between two non-emitting nodes"""
        previous = source
        for label in labels:
            unit = self.add_unit(label, **unit_fields)
            self.link(previous, _entry(unit))
            previous = _exit(unit)
        self.link(previous, target)

    def build(self, start: Hashable, end: Hashable) -> "StateGraph":
        return StateGraph(self, start, end)


class StateGraph:
    def __init__(self, builder: GraphBuilder, start: Hashable, end: Hashable):
        models = builder.models
        self.models = models
        self.units = list(builder.units)
        self._links = builder._links
        self._end = end

        # Emitting states, unit by unit
        self.state_unit: List[int] = []
        self.state_index: List[int] = []
        self._first_state: List[int] = []
        for u, unit in enumerate(self.units):
            self._first_state.append(len(self.state_unit))
            for i in range(1, models[unit.label].n_states + 1):
                self.state_unit.append(u)
                self.state_index.append(i)
        self.n_states = len(self.state_unit)
        if self.n_states == 0:
            raise NetworkError("Graph has no emitting states")

        self._memo: Dict[Hashable, Dict[Hashable, _Path]] = {}
        self._visiting: set = set()

        init = self._reach(start)
        self.init_logp = np.full(self.n_states, NEG_INF)
        self.init_events: List[ArcEvents] = [ArcEvents()] * self.n_states
        for target, path in init.items():
            if isinstance(target, int):
                self.init_logp[target] = path.logp
                self.init_events[target] = path.events

        self.final_logp = np.full(self.n_states, NEG_INF)
        self.final_events: List[ArcEvents] = [ArcEvents()] * self.n_states
        sources: List[int] = []
        targets: List[int] = []
        weights: List[float] = []
        events: List[ArcEvents] = []
        for s in range(self.n_states):
            for target, path in self._successors(s):
                if target == "end":
                    self.final_logp[s] = path.logp
                    self.final_events[s] = path.events
                else:
                    sources.append(s)
                    targets.append(target)
                    weights.append(path.logp)
                    events.append(path.events)

        self.arc_src = np.array(sources, dtype=int)
        self.arc_dst = np.array(targets, dtype=int)
        self.arc_logp = np.array(weights, dtype=float)
        self.arc_events = events
        self._index_arcs()
        self._memo.clear()

    # Graph closure

    def _state_of(self, unit: int, index: int) -> int:
        return self._first_state[unit] + index - 1

    def _unit_targets(self, unit: int, source_index: int) -> List[Tuple[Hashable, float, ArcEvents]]:
        """Arcs out of model state `source_index` (0 = entry) of one unit"""
        label = self.units[unit].label
        model = self.models[label]
        result: List[Tuple[Hashable, float, ArcEvents]] = []
        row = model.trans[source_index]
        for j in np.flatnonzero(row > 0):
            j = int(j)
            events = ArcEvents(model_arcs=((label, source_index, j),))
            if j == model.exit_index:
                result.append((_exit(unit), float(np.log(row[j])), ArcEvents(events.model_arcs, (), True)))
            else:
                result.append((self._state_of(unit, j), float(np.log(row[j])), events))
        return result

    def _out_arcs(self, node: Hashable) -> List[Tuple[Hashable, float, ArcEvents]]:
        if isinstance(node, tuple) and len(node) == 2 and node[0] == "in":
            return self._unit_targets(node[1], 0)
        return self._links.get(node, [])

    def _reach(self, node: Hashable) -> Dict[Hashable, _Path]:
        """Best path from a non-emitting node to each emitting state or the end"""
        if node == self._end:
            return {"end": _Path(0.0, ArcEvents())}
        if node in self._memo:
            return self._memo[node]
        if node in self._visiting:
            raise NetworkError(f"Cycle through non-emitting node {node!r}")
        self._visiting.add(node)
        best: Dict[Hashable, _Path] = {}
        for target, logp, events in self._out_arcs(node):
            if isinstance(target, int):
                candidates = {target: _Path(0.0, ArcEvents())}
            else:
                candidates = self._reach(target)
            for final, path in candidates.items():
                total = logp + path.logp
                if final not in best or total > best[final].logp:
                    best[final] = _Path(total, events.then(path.events))
        self._visiting.discard(node)
        self._memo[node] = best
        return best

    def _successors(self, state: int) -> List[Tuple[Hashable, _Path]]:
        unit = self.state_unit[state]
        result: List[Tuple[Hashable, _Path]] = []
        for target, logp, events in self._unit_targets(unit, self.state_index[state]):
            if isinstance(target, int):
                result.append((target, _Path(logp, events)))
                continue
            for final, path in self._reach(target).items():
                result.append((final, _Path(logp + path.logp, events.then(path.events))))
        return result

    # Arc indexing for grouped reductions

    def _priority(self, state: int) -> Tuple[str, str]:
        unit = self.units[self.state_unit[state]]
        return (unit.word or "", unit.label)

    def _index_arcs(self) -> None:
        n = len(self.arc_src)
        # Exact Viterbi ties go to the lexicographically smaller source, then the earlier arc
        keys = [(int(self.arc_dst[a]), self._priority(int(self.arc_src[a])), a) for a in range(n)]
        self.by_dst = np.array([k[2] for k in sorted(keys)], dtype=int)
        self.by_src = np.argsort(self.arc_src, kind="stable")
        self._dst_groups = _groups(self.arc_dst[self.by_dst])
        self._src_groups = _groups(self.arc_src[self.by_src])

    # Emissions

    def emission_matrix(self, frames: np.ndarray) -> np.ndarray:
        """(T, S) state log-likelihoods, evaluated once per distinct mixture state"""
        self.models.check_frames(frames)
        cache: Dict[int, np.ndarray] = {}
        columns = []
        for s in range(self.n_states):
            state = self.models[self.units[self.state_unit[s]].label].states[self.state_index[s] - 1]
            key = id(state)
            if key not in cache:
                cache[key] = state.log_likelihood(frames)
            columns.append(cache[key])
        return np.column_stack(columns)

    def state_object(self, state: int):
        return self.models[self.units[self.state_unit[state]].label].states[self.state_index[state] - 1]

    # Passes

    def forward(self, emissions: np.ndarray) -> Tuple[np.ndarray, float]:
        n_frames = emissions.shape[0]
        alpha = np.full((n_frames, self.n_states), NEG_INF)
        alpha[0] = self.init_logp + emissions[0]
        order = self.by_dst
        starts, heads = self._dst_groups
        for t in range(1, n_frames):
            if len(order):
                candidates = alpha[t - 1, self.arc_src[order]] + self.arc_logp[order]
                alpha[t, heads] = np.logaddexp.reduceat(candidates, starts) + emissions[t, heads]
        total = float(logsumexp(alpha[-1] + self.final_logp))
        return alpha, total

    def backward(self, emissions: np.ndarray) -> Tuple[np.ndarray, float]:
        n_frames = emissions.shape[0]
        beta = np.full((n_frames, self.n_states), NEG_INF)
        beta[-1] = self.final_logp
        order = self.by_src
        starts, heads = self._src_groups
        for t in range(n_frames - 2, -1, -1):
            if len(order):
                dst = self.arc_dst[order]
                candidates = self.arc_logp[order] + emissions[t + 1, dst] + beta[t + 1, dst]
                beta[t, heads] = np.logaddexp.reduceat(candidates, starts)
        total = float(logsumexp(self.init_logp + emissions[0] + beta[0]))
        return beta, total

    def viterbi(self, emissions: np.ndarray) -> Tuple[float, np.ndarray, List[int]]:
        """Best score, per-frame state path and the arc taken into every frame after the first"""
        n_frames = emissions.shape[0]
        delta = self.init_logp + emissions[0]
        back = np.full((n_frames, self.n_states), -1, dtype=int)
        order = self.by_dst
        starts, heads = self._dst_groups
        if len(order):
            sizes = np.diff(np.append(starts, len(order)))
            positions = np.arange(len(order))
        for t in range(1, n_frames):
            updated = np.full(self.n_states, NEG_INF)
            if len(order):
                candidates = delta[self.arc_src[order]] + self.arc_logp[order]
                best = np.maximum.reduceat(candidates, starts)
                hit = np.where(candidates == np.repeat(best, sizes), positions, len(order))
                first = np.minimum.reduceat(hit, starts)
                updated[heads] = best + emissions[t, heads]
                back[t, heads] = order[np.minimum(first, len(order) - 1)]
            delta = updated

        final = delta + self.final_logp
        last = int(np.argmax(final))
        score = float(final[last])
        path = np.empty(n_frames, dtype=int)
        arcs: List[int] = []
        path[-1] = last
        if np.isfinite(score):
            for t in range(n_frames - 1, 0, -1):
                arc = int(back[t, path[t]])
                arcs.append(arc)
                path[t - 1] = self.arc_src[arc]
        arcs.reverse()
        return score, path, arcs


def _groups(sorted_keys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Start offsets and key values of the runs in a sorted key array"""
    if sorted_keys.size == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    starts = np.flatnonzero(np.concatenate(([True], sorted_keys[1:] != sorted_keys[:-1])))
    return starts, sorted_keys[starts]


def chain_graph(models: ModelSet, labels: Sequence[str]) -> StateGraph:
    """Embedded-training graph: the models of `labels` joined end to end"""
    builder = GraphBuilder(models)
    builder.chain("start", labels, "end")
    return builder.build("start", "end")
