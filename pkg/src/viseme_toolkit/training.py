"""Embedded Baum-Welch re-estimation of a model set.

Every utterance is expanded into the chain of its transcript's models and run
through forward-backward without pruning. Statistics are summed in utterance
order, then all models are updated at once.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import config
from .errors import TrainingError
from .hmm import MixtureState, ModelSet
from .lattice import StateGraph, chain_graph
from .viseme_map import Transcript

logger = logging.getLogger(__name__)

Labels = Union[Transcript, Sequence[str]]
Utterance = Tuple[np.ndarray, Labels]


@dataclass
class IterationStats:
    iteration: int
    log_likelihood: float
    n_used: int
    skipped: List[int] = field(default_factory=list)


class _StateStats:
    def __init__(self, state: MixtureState):
        self.occupancy = np.zeros(state.n_mix)
        self.sum_x = np.zeros((state.n_mix, state.dim))
        self.sum_xx = np.zeros((state.n_mix, state.dim))


class Accumulators:
    def __init__(self, models: ModelSet):
        self.models = models
        self.states: Dict[int, _StateStats] = {id(s): _StateStats(s) for s in models.unique_states()}
        self.transitions: Dict[str, np.ndarray] = {
            label: np.zeros_like(model.trans) for label, model in models.models.items()
        }
        self.log_likelihood = 0.0
        self.n_used = 0

    def add_transitions(self, events, counts: np.ndarray) -> None:
        for arc_events, count in zip(events, counts):
            if count <= 0:
                continue
            for label, i, j in arc_events.model_arcs:
                self.transitions[label][i, j] += count


def _labels(transcript: Labels) -> List[str]:
    return transcript.labels if isinstance(transcript, Transcript) else list(transcript)


def accumulate(models: ModelSet, frames: np.ndarray, labels: Sequence[str], acc: Accumulators) -> Optional[float]:
    """Add one utterance's statistics; None when no path fits the frames"""
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    graph: StateGraph = chain_graph(models, labels)
    emissions = graph.emission_matrix(frames)
    alpha, total = graph.forward(emissions)
    if not np.isfinite(total):
        return None
    beta, _ = graph.backward(emissions)

    with np.errstate(under="ignore"):
        gamma = np.exp(alpha + beta - total)

        init = np.exp(graph.init_logp + emissions[0] + beta[0] - total)
        acc.add_transitions(graph.init_events, init)
        final = np.exp(alpha[-1] + graph.final_logp - total)
        acc.add_transitions(graph.final_events, final)
        if len(frames) > 1 and len(graph.arc_src):
            xi = np.exp(
                alpha[:-1, graph.arc_src]
                + graph.arc_logp
                + emissions[1:, graph.arc_dst]
                + beta[1:, graph.arc_dst]
                - total
            ).sum(axis=0)
            acc.add_transitions(graph.arc_events, xi)

    # Occupancy per distinct mixture state, then per component
    occupancy: Dict[int, np.ndarray] = {}
    objects: Dict[int, MixtureState] = {}
    for s in range(graph.n_states):
        state = graph.state_object(s)
        key = id(state)
        objects[key] = state
        occupancy[key] = occupancy.get(key, 0.0) + gamma[:, s]
    squares = frames * frames
    for key, weight in occupancy.items():
        state = objects[key]
        components = state.component_log_likelihoods(frames)
        with np.errstate(under="ignore"):
            posterior = weight[:, np.newaxis] * np.exp(components - state.log_likelihood(frames)[:, np.newaxis])
        stats = acc.states[key]
        stats.occupancy += posterior.sum(axis=0)
        stats.sum_x += posterior.T @ frames
        stats.sum_xx += posterior.T @ squares

    acc.log_likelihood += total
    acc.n_used += 1
    return total


def _update_state(state: MixtureState, stats: _StateStats, models: ModelSet) -> None:
    total = stats.occupancy.sum()
    if total <= 0:
        return
    starved = stats.occupancy < config.STARVED_OCCUPANCY
    if np.all(starved):
        logger.warning("Mixture state with occupancy %.3f left unchanged", total)
        return
    # Starved components keep their Gaussians; only their weight follows the occupancy
    for m in np.flatnonzero(~starved):
        mean = stats.sum_x[m] / stats.occupancy[m]
        variance = stats.sum_xx[m] / stats.occupancy[m] - mean * mean
        state.means[m] = mean
        state.variances[m] = np.maximum(variance, models.var_floor)
    weights = np.maximum(stats.occupancy / total, config.MIX_WEIGHT_FLOOR)
    state.weights = weights / weights.sum()


def update(models: ModelSet, acc: Accumulators) -> None:
    """Apply accumulated statistics to `models` in place"""
    for state in models.unique_states():
        _update_state(state, acc.states[id(state)], models)
    for label, model in models.models.items():
        counts = acc.transitions[label]
        for i in range(model.exit_index):
            total = counts[i].sum()
            if total > 0:
                model.trans[i] = counts[i] / total


def reestimate(models: ModelSet, utterances: Sequence[Utterance]) -> Tuple[ModelSet, IterationStats]:
    """One EM iteration; the reported likelihood is that of the input models"""
    updated = models.copy()
    acc = Accumulators(updated)
    skipped: List[int] = []
    for index, (frames, transcript) in enumerate(utterances):
        if accumulate(updated, frames, _labels(transcript), acc) is None:
            skipped.append(index)
    if acc.n_used == 0:
        raise TrainingError("Every utterance is shorter than the minimal path through its transcript")
    update(updated, acc)
    return updated, IterationStats(0, acc.log_likelihood, acc.n_used, skipped)


def baum_welch(
    models: ModelSet,
    utterances: Sequence[Utterance],
    iterations: int,
    on_iteration: Optional[Callable[[IterationStats], None]] = None,
) -> ModelSet:
    if iterations < 1:
        raise TrainingError("iterations must be at least 1")
    current = models
    for iteration in range(1, iterations + 1):
        current, stats = reestimate(current, utterances)
        stats.iteration = iteration
        if stats.skipped:
            message = f"Iteration {iteration}: skipped {len(stats.skipped)} infeasible utterances {stats.skipped}"
            logger.warning(message)
            if message not in current.warnings:
                current.warnings.append(message)
        logger.info(
            "Iteration %d: log-likelihood %.6f over %d utterances", iteration, stats.log_likelihood, stats.n_used
        )
        if on_iteration is not None:
            on_iteration(stats)
    current.check()
    return current


def log_likelihood(models: ModelSet, frames: np.ndarray, labels: Labels) -> float:
    """Total forward log-likelihood of one utterance under its transcript"""
    return models.log_likelihood(frames, _labels(labels))
