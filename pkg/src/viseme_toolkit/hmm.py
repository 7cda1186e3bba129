"""Gaussian-mixture HMMs: parameters, flat start, silence tying and model files.

Transition matrices carry a non-emitting entry (row/column 0) and exit (last
row/column) around the emitting states 1..N. Mixture states are plain objects;
states shared between models are the same object, so one update reaches every
model using it.
"""

import copy
import logging
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .config import config
from .errors import DimensionMismatchError, ModelFileError, TrainingError
from .features import format_float, format_vector

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


class MixtureState:
    """Diagonal-covariance Gaussian mixture emitting state."""

    def __init__(
        self,
        weights: np.ndarray,
        means: np.ndarray,
        variances: np.ndarray,
        tag: Optional[str] = None,
    ):
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.variances = np.atleast_2d(np.asarray(variances, dtype=float))
        self.tag = tag
        if self.means.shape != self.variances.shape or self.means.shape[0] != self.weights.shape[0]:
            raise ModelFileError("Mixture weights, means and variances disagree in shape")

    @property
    def n_mix(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_likelihoods(self, frames: np.ndarray) -> np.ndarray:
        """log w_m + log N(x_t; mu_m, diag var_m) as a (T, M) array"""
        frames = np.atleast_2d(frames)
        with np.errstate(divide="ignore"):
            log_weights = np.log(self.weights)
        diff = frames[:, np.newaxis, :] - self.means[np.newaxis, :, :]
        mahalanobis = np.sum(diff * diff / self.variances[np.newaxis, :, :], axis=2)
        log_norm = -0.5 * (self.dim * LOG_2PI + np.sum(np.log(self.variances), axis=1))
        return log_weights + log_norm - 0.5 * mahalanobis

    def log_likelihood(self, frames: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_log_likelihoods(frames), axis=1)


class GmmHmm:
    def __init__(self, label: str, trans: np.ndarray, states: Sequence[MixtureState]):
        self.label = label
        self.trans = np.asarray(trans, dtype=float)
        self.states = list(states)
        n = len(self.states)
        if self.trans.shape != (n + 2, n + 2):
            raise ModelFileError(
                f"Model '{label}': transition matrix must be {n + 2}x{n + 2}, got {self.trans.shape}"
            )

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def exit_index(self) -> int:
        return self.n_states + 1

    @property
    def has_tee(self) -> bool:
        return self.trans[0, self.exit_index] > 0

    def check(self, tolerance: float = 1e-9) -> None:
        """Assert row-stochastic, left-to-right transitions and normalized weights"""
        for i in range(self.exit_index):
            row = self.trans[i]
            total = row.sum()
            if total > 0 and abs(total - 1.0) > tolerance:
                raise TrainingError(f"Model '{self.label}': row {i} sums to {total}")
            if i > 0 and np.any(row[:i] > 0):
                raise TrainingError(f"Model '{self.label}': backward transition from state {i}")
        if np.any(self.trans[:, 0] > 0) or np.any(self.trans[self.exit_index] > 0):
            raise TrainingError(f"Model '{self.label}': arcs into entry or out of exit")
        for state in self.states:
            if abs(state.weights.sum() - 1.0) > tolerance:
                raise TrainingError(f"Model '{self.label}': mixture weights sum to {state.weights.sum()}")


class ModelSet:
    def __init__(
        self,
        models: Dict[str, GmmHmm],
        feature_dim: int,
        global_mean: np.ndarray,
        global_var: np.ndarray,
        var_floor: np.ndarray,
    ):
        self.models = dict(models)
        self.feature_dim = int(feature_dim)
        self.global_mean = np.asarray(global_mean, dtype=float)
        self.global_var = np.asarray(global_var, dtype=float)
        self.var_floor = np.asarray(var_floor, dtype=float)
        self.warnings: List[str] = []
        for label, model in self.models.items():
            if model.label != label:
                raise ModelFileError(f"Model stored under '{label}' is labelled '{model.label}'")
            for state in model.states:
                if state.dim != self.feature_dim:
                    raise DimensionMismatchError(self.feature_dim, state.dim, f"model '{label}' state")

    @property
    def labels(self) -> List[str]:
        return list(self.models)

    def __getitem__(self, label: str) -> GmmHmm:
        try:
            return self.models[label]
        except KeyError:
            raise ModelFileError(f"No model for label '{label}'")

    def __contains__(self, label: object) -> bool:
        return label in self.models

    def unique_states(self) -> List[MixtureState]:
        seen: Dict[int, MixtureState] = {}
        for model in self.models.values():
            for state in model.states:
                seen.setdefault(id(state), state)
        return list(seen.values())

    def copy(self) -> "ModelSet":
        """Deep copy; states shared between models stay shared in the copy"""
        duplicate = copy.deepcopy(self)
        duplicate.warnings = list(self.warnings)
        return duplicate

    def log_likelihood(self, frames: np.ndarray, labels: Sequence[str]) -> float:
        """Forward total of `frames` through the models of `labels` in sequence"""
        from .lattice import chain_graph

        graph = chain_graph(self, labels)
        _, total = graph.forward(graph.emission_matrix(np.atleast_2d(frames)))
        return total

    def check(self) -> None:
        for model in self.models.values():
            model.check()
        for state in self.unique_states():
            if np.any(state.variances < self.var_floor - 1e-15):
                raise TrainingError("Variance below floor")

    def check_frames(self, frames: np.ndarray) -> None:
        if frames.ndim != 2 or frames.shape[1] != self.feature_dim:
            actual = frames.shape[1] if frames.ndim == 2 else frames.ndim
            raise DimensionMismatchError(self.feature_dim, actual, "feature frames")


def left_to_right_transitions(n_states: int) -> np.ndarray:
    """Entry -> 1, then self-loop or advance with equal probability, N -> exit"""
    trans = np.zeros((n_states + 2, n_states + 2))
    trans[0, 1] = 1.0
    for i in range(1, n_states + 1):
        trans[i, i] = 0.5
        trans[i, i + 1] = 0.5
    return trans


def _stack_frames(data: Iterable[np.ndarray]) -> np.ndarray:
    pieces = [np.atleast_2d(np.asarray(d, dtype=float)) for d in data]
    pieces = [p for p in pieces if p.size]
    if not pieces:
        raise TrainingError("Flat start needs at least one training frame")
    dims = {p.shape[1] for p in pieces}
    if len(dims) != 1:
        raise DimensionMismatchError(min(dims), max(dims), "training frames")
    return np.vstack(pieces)


def flat_start(
    labels: Sequence[str],
    n_states: int,
    n_mix: int,
    data: Iterable[np.ndarray],
    jitter: bool = True,
) -> ModelSet:
    """Give every state of every model the global mean and variance"""
    if n_states < 1 or n_mix < 1:
        raise TrainingError("n_states and n_mix must be at least 1")
    frames = _stack_frames(data if not isinstance(data, np.ndarray) else [data])
    dim = frames.shape[1]
    global_mean = frames.mean(axis=0)
    global_var = frames.var(axis=0)

    var_floor = np.maximum(config.VARIANCE_FLOOR_SCALE * global_var, config.MIN_VARIANCE)
    warnings: List[str] = []
    flat = np.flatnonzero(global_var <= 0)
    if flat.size:
        message = f"Zero-variance feature dimensions {flat.tolist()} floored to {config.MIN_VARIANCE}"
        logger.warning(message)
        warnings.append(message)
    variance = np.maximum(global_var, var_floor)

    sigma = np.sqrt(variance)
    offsets = np.zeros(n_mix)
    if jitter:
        offsets = config.JITTER_SCALE * (np.arange(n_mix) - (n_mix - 1) / 2.0) / n_mix
    means = global_mean[np.newaxis, :] + offsets[:, np.newaxis] * sigma[np.newaxis, :]

    models: Dict[str, GmmHmm] = {}
    for label in labels:
        states = [
            MixtureState(np.full(n_mix, 1.0 / n_mix), means.copy(), np.tile(variance, (n_mix, 1)))
            for _ in range(n_states)
        ]
        models[label] = GmmHmm(label, left_to_right_transitions(n_states), states)

    model_set = ModelSet(models, dim, global_mean, variance, var_floor)
    model_set.warnings.extend(warnings)
    logger.info("Flat start: %d models, %d states, %d mixtures, dim %d", len(models), n_states, n_mix, dim)
    return model_set


def tie_silence_models(
    models: ModelSet,
    sil_label: str = "sil",
    sp_label: str = "sp",
    tee_probability: Optional[float] = None,
) -> ModelSet:
    """Rebuild the short pause as a one-state skippable model sharing the
    middle emitting state of the silence model."""
    if sil_label not in models or sp_label not in models:
        raise TrainingError(f"Tying needs both '{sil_label}' and '{sp_label}' models")
    tee = config.TEE_PROBABILITY if tee_probability is None else tee_probability
    if not 0 < tee < 1:
        raise TrainingError("tee probability must lie in (0, 1)")

    tied = models.copy()
    sil = tied[sil_label]
    middle = (sil.n_states + 1) // 2
    shared = sil.states[middle - 1]
    shared.tag = f"tied_{sil_label}_{sp_label}"

    stay = sil.trans[middle, middle]
    if not 0 < stay < 1:
        stay = 0.5
    trans = np.zeros((3, 3))
    trans[0, 1] = 1.0 - tee
    trans[0, 2] = tee
    trans[1, 1] = stay
    trans[1, 2] = 1.0 - stay
    tied.models[sp_label] = GmmHmm(sp_label, trans, [shared])
    logger.info("Tied '%s' to state %d of '%s'", sp_label, middle, sil_label)
    return tied


def _state_names(models: ModelSet) -> Dict[int, str]:
    names: Dict[int, str] = {}
    used = set()
    for label, model in models.models.items():
        for index, state in enumerate(model.states, 1):
            if id(state) in names:
                continue
            name = state.tag or f"{label}.s{index}"
            while name in used:
                name += "'"
            used.add(name)
            names[id(state)] = name
    return names


def save_model_set(models: ModelSet) -> str:
    lines = [
        f"feature_dim {models.feature_dim}",
        "global_mean " + format_vector(models.global_mean),
        "global_var " + format_vector(models.global_var),
        "var_floor " + format_vector(models.var_floor),
    ]
    names = _state_names(models)
    for state in models.unique_states():
        lines.append("")
        lines.append(f"~s {names[id(state)]}")
        if state.tag:
            lines.append(f"tag {state.tag}")
        lines.append(f"mixtures {state.n_mix}")
        for m in range(state.n_mix):
            lines.append(f"weight {format_float(state.weights[m])}")
            lines.append("mean " + format_vector(state.means[m]))
            lines.append("variance " + format_vector(state.variances[m]))
    for label, model in models.models.items():
        lines.append("")
        lines.append(f"~h {label}")
        lines.append(f"states {model.n_states}")
        for index, state in enumerate(model.states, 1):
            lines.append(f"state {index} {names[id(state)]}")
        lines.append(f"transitions {model.n_states + 2}")
        lines.extend(format_vector(row) for row in model.trans)
    return "\n".join(lines) + "\n"


def _floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split()])


def load_model_set(text: str) -> ModelSet:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    position = 0

    def take(keyword: str) -> str:
        nonlocal position
        if position >= len(lines):
            raise ModelFileError(f"Unexpected end of model file, expected '{keyword}'")
        key, _, value = lines[position].partition(" ")
        if key != keyword:
            raise ModelFileError(f"Expected '{keyword}' but found {lines[position]!r}")
        position += 1
        return value.strip()

    try:
        dim = int(take("feature_dim"))
        global_mean = _floats(take("global_mean"))
        global_var = _floats(take("global_var"))
        var_floor = _floats(take("var_floor"))

        states: Dict[str, MixtureState] = {}
        models: Dict[str, GmmHmm] = {}
        while position < len(lines):
            if lines[position].startswith("~s "):
                name = take("~s")
                tag = None
                if lines[position].startswith("tag "):
                    tag = take("tag")
                n_mix = int(take("mixtures"))
                weights, means, variances = [], [], []
                for _ in range(n_mix):
                    weights.append(float(take("weight")))
                    means.append(_floats(take("mean")))
                    variances.append(_floats(take("variance")))
                states[name] = MixtureState(np.array(weights), np.array(means), np.array(variances), tag)
            elif lines[position].startswith("~h "):
                label = take("~h")
                n_states = int(take("states"))
                members = []
                for index in range(1, n_states + 1):
                    number, _, name = take("state").partition(" ")
                    if int(number) != index or name not in states:
                        raise ModelFileError(f"Model '{label}': bad state reference {name!r}")
                    members.append(states[name])
                size = int(take("transitions"))
                trans = np.array([_floats(lines[position + r]) for r in range(size)])
                position += size
                models[label] = GmmHmm(label, trans, members)
            else:
                raise ModelFileError(f"Unexpected line {lines[position]!r}")
    except (IndexError, ValueError) as e:
        raise ModelFileError(f"Malformed model set file: {e}")
    return ModelSet(models, dim, global_mean, global_var, var_floor)
