"""Viterbi decoding through a word network and forced alignment."""

import logging
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import AlignmentError, DecodeError, NetworkError
from .hmm import ModelSet
from .language_model import WordNetwork, linear_network
from .lattice import ArcEvents, GraphBuilder, StateGraph
from .viseme_map import Transcript, TranscriptUnit

logger = logging.getLogger(__name__)


@dataclass
class AlignedSegment:
    label: str
    start: int
    # Exclusive
    end: int
    states: List[int] = field(default_factory=list)
    word: Optional[str] = None

    @property
    def n_frames(self) -> int:
        return self.end - self.start


@dataclass
class DecodeResult:
    words: List[str]
    segments: List[AlignedSegment]
    score: float

    @property
    def transcript(self) -> Transcript:
        return segments_to_transcript(self.segments)


def segments_to_transcript(segments: Sequence[AlignedSegment]) -> Transcript:
    return Transcript(tuple(TranscriptUnit(s.label, s.start, s.end, s.word) for s in segments))


class ViterbiDecoder:
    """Decoder for one model set and network; reusable across utterances."""

    def __init__(
        self,
        models: ModelSet,
        network: WordNetwork,
        lm_scale: float = 1.0,
        insertion_penalty: float = 0.0,
    ):
        self.models = models
        self.network = network
        network.check()
        self._check_pronunciations()

        builder = GraphBuilder(models)
        for node in sorted(network.nodes):
            word = network.word_of(node)
            entry, exit_ = ("word_in", node), ("word_out", node)
            for variant in network.expansions[word]:
                if variant:
                    builder.chain(entry, variant, exit_, node=node, word=word)
                else:
                    builder.link(entry, exit_)
        for a, b, logp in sorted(network.arcs):
            weight = lm_scale * logp
            if b != network.end:
                weight += insertion_penalty
            builder.link(("word_out", a), ("word_in", b), weight, node=b)
        builder.link("start", ("word_in", network.start), 0.0, node=network.start)
        builder.link(("word_out", network.end), "end")
        self.graph: StateGraph = builder.build("start", "end")

    def _check_pronunciations(self) -> None:
        for node, word in self.network.nodes.items():
            if self.network.is_marker(node):
                continue
            for variant in self.network.expansions[word]:
                for label in variant:
                    if label not in self.models:
                        raise NetworkError(f"Word '{word}' uses unknown model '{label}'")
                if not any(not self.models[label].has_tee for label in variant):
                    raise NetworkError(f"Word '{word}' has a pronunciation that can emit no frames")

    def decode(self, frames: np.ndarray) -> DecodeResult:
        frames = np.atleast_2d(np.asarray(frames, dtype=float))
        if frames.shape[0] == 0:
            raise DecodeError("Cannot decode an empty utterance")
        self.models.check_frames(frames)
        emissions = self.graph.emission_matrix(frames)
        score, path, arcs = self.graph.viterbi(emissions)
        if not np.isfinite(score):
            raise DecodeError(f"No complete path through the network for {len(frames)} frames")
        return self._trace(path, arcs, score)

    def _trace(self, path: np.ndarray, arcs: List[int], score: float) -> DecodeResult:
        graph = self.graph
        nodes: List[str] = []
        segments: List[AlignedSegment] = []

        def enter(events: ArcEvents, t: int) -> None:
            nodes.extend(events.nodes)
            state = int(path[t])
            unit = graph.units[graph.state_unit[state]]
            if t == 0 or events.new_segment:
                word = None
                if unit.node in events.nodes and not self.network.is_marker(unit.node):
                    word = unit.word
                segments.append(AlignedSegment(unit.label, t, t + 1, [], word))
            else:
                segments[-1].end = t + 1
            segments[-1].states.append(graph.state_index[state])

        enter(graph.init_events[int(path[0])], 0)
        for t, arc in enumerate(arcs, 1):
            enter(graph.arc_events[arc], t)
        nodes.extend(graph.final_events[int(path[-1])].nodes)

        words = [self.network.word_of(n) for n in nodes if not self.network.is_marker(n)]
        return DecodeResult(words, segments, score)


def viterbi_decode(
    models: ModelSet,
    network: WordNetwork,
    frames: np.ndarray,
    lm_scale: float = 1.0,
    insertion_penalty: float = 0.0,
) -> Tuple[List[str], Transcript, float]:
    result = ViterbiDecoder(models, network, lm_scale, insertion_penalty).decode(frames)
    return result.words, result.transcript, result.score


def force_align_scored(
    models: ModelSet,
    frames: np.ndarray,
    words: Sequence[str],
    viseme_dict: Mapping[str, Sequence[Sequence[str]]],
    sp_optional: bool = True,
    boundary_silence: bool = True,
    sil_label: str = "sil",
    sp_label: str = "sp",
) -> Tuple[List[AlignedSegment], float]:
    network = linear_network(words, viseme_dict, sp_optional, boundary_silence, sil_label, sp_label)
    try:
        result = ViterbiDecoder(models, network).decode(frames)
    except DecodeError:
        raise AlignmentError(
            f"Transcript of {len(words)} words cannot be aligned to {len(np.atleast_2d(frames))} frames"
        )
    return result.segments, result.score


def force_align(
    models: ModelSet,
    frames: np.ndarray,
    words: Sequence[str],
    viseme_dict: Mapping[str, Sequence[Sequence[str]]],
    sp_optional: bool = True,
    boundary_silence: bool = True,
    sil_label: str = "sil",
    sp_label: str = "sp",
) -> List[AlignedSegment]:
    """Timed viseme segmentation of `frames` constrained to the word sequence"""
    segments, _ = force_align_scored(
        models, frames, words, viseme_dict, sp_optional, boundary_silence, sil_label, sp_label
    )
    return segments
