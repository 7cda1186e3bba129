"""Bigram word language model and the word network decoded against it."""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import NetworkError
from .features import format_float

logger = logging.getLogger(__name__)

SENTENCE_START = "<s>"
SENTENCE_END = "</s>"
MARKERS = (SENTENCE_START, SENTENCE_END)


class BigramLM:
    def __init__(self, vocab: Iterable[str], logp: Mapping[Tuple[str, str], float], floor: float):
        self.vocab = sorted(set(vocab))
        self.logp = dict(logp)
        self.floor = floor

    def successors(self, predecessor: str) -> List[str]:
        if predecessor == SENTENCE_START:
            return list(self.vocab)
        return list(self.vocab) + [SENTENCE_END]

    def probability(self, predecessor: str, successor: str) -> float:
        value = self.logp.get((predecessor, successor))
        return 0.0 if value is None else float(np.exp(value))

    def row(self, predecessor: str) -> Dict[str, float]:
        return {w: self.probability(predecessor, w) for w in self.successors(predecessor)}

    def check(self, tolerance: float = 1e-9) -> None:
        for predecessor in [SENTENCE_START] + self.vocab:
            total = sum(self.row(predecessor).values())
            if abs(total - 1.0) > tolerance:
                raise NetworkError(f"Bigram row '{predecessor}' sums to {total}")


def floor_row(probabilities: np.ndarray, floor: float) -> np.ndarray:
    """Raise entries to `floor`, scaling the rest so the row still sums to one"""
    p = np.asarray(probabilities, dtype=float)
    if floor <= 0:
        return p / p.sum()
    fixed = np.zeros(p.shape, dtype=bool)
    while True:
        free_mass = p[~fixed].sum()
        remaining = 1.0 - floor * fixed.sum()
        result = np.where(fixed, floor, p * remaining / free_mass if free_mass > 0 else 0.0)
        below = (~fixed) & (result < floor)
        if not below.any():
            return result
        fixed |= below
        if fixed.all():
            return np.full(p.shape, 1.0 / p.size)


def estimate_bigram(
    transcripts: Sequence[Sequence[str]],
    floor: float = 0.0,
    vocabulary: Optional[Iterable[str]] = None,
) -> BigramLM:
    """Maximum-likelihood bigrams with one start/end marker pair per line, then flooring"""
    lines = [[w.upper() for w in line] for line in transcripts]
    vocab = sorted({w for line in lines for w in line} | {w.upper() for w in (vocabulary or [])})
    if not vocab:
        raise NetworkError("Cannot estimate a bigram model from an empty vocabulary")
    if floor < 0 or floor * (len(vocab) + 1) >= 1:
        raise NetworkError(f"floor must satisfy 0 <= floor < 1/|successors|, got {floor}")

    counts: Dict[str, Counter] = defaultdict(Counter)
    for line in lines:
        tokens = [SENTENCE_START, *line, SENTENCE_END]
        for a, b in zip(tokens, tokens[1:]):
            counts[a][b] += 1

    lm = BigramLM(vocab, {}, floor)
    logp: Dict[Tuple[str, str], float] = {}
    for predecessor in [SENTENCE_START] + vocab:
        successors = lm.successors(predecessor)
        row = np.array([counts[predecessor][w] for w in successors], dtype=float)
        if row.sum() == 0:
            # Vocabulary words never seen in training
            row = np.ones(len(successors))
        probabilities = floor_row(row / row.sum(), floor)
        for successor, p in zip(successors, probabilities):
            if p > 0:
                logp[(predecessor, successor)] = float(np.log(p))
    lm.logp = logp
    logger.info("Bigram model: %d words, %d arcs, floor %g", len(vocab), len(logp), floor)
    return lm


@dataclass
class WordNetwork:
    """Word-level decoding graph.

    ``nodes`` maps node ids to words; start and end nodes carry the sentence
    markers. Arcs hold log probabilities and ``expansions`` the viseme strings
    each word may be spelled with.
    """

    nodes: Dict[str, str]
    arcs: List[Tuple[str, str, float]]
    expansions: Dict[str, List[Tuple[str, ...]]]
    start: str = SENTENCE_START
    end: str = SENTENCE_END
    sil_label: Optional[str] = None
    sp_label: Optional[str] = None

    def check(self) -> None:
        if not self.nodes:
            raise NetworkError("Network has no nodes")
        for node in (self.start, self.end):
            if node not in self.nodes:
                raise NetworkError(f"Network lacks node '{node}'")
        missing = sorted({w for w in self.nodes.values() if w not in self.expansions})
        if missing:
            raise NetworkError(f"No viseme expansion for: {' '.join(missing)}")
        forward = _reachable(self.start, [(a, b) for a, b, _ in self.arcs])
        backward = _reachable(self.end, [(b, a) for a, b, _ in self.arcs])
        stranded = sorted(n for n in self.nodes if n not in forward or n not in backward)
        if stranded:
            raise NetworkError(f"Nodes not on any start-to-end path: {' '.join(stranded)}")

    def word_of(self, node: str) -> str:
        return self.nodes[node]

    def is_marker(self, node: str) -> bool:
        return node in (self.start, self.end)


def _reachable(origin: str, edges: Sequence[Tuple[str, str]]) -> set:
    adjacency: Dict[str, List[str]] = defaultdict(list)
    for a, b in edges:
        adjacency[a].append(b)
    seen = {origin}
    stack = [origin]
    while stack:
        for successor in adjacency[stack.pop()]:
            if successor not in seen:
                seen.add(successor)
                stack.append(successor)
    return seen


def _word_expansions(
    viseme_dict: Mapping[str, Sequence[Sequence[str]]],
    words: Iterable[str],
    sp_label: Optional[str],
    sp_optional: bool,
) -> Dict[str, List[Tuple[str, ...]]]:
    expansions: Dict[str, List[Tuple[str, ...]]] = {}
    missing = []
    for word in words:
        variants = [tuple(v) for v in viseme_dict.get(word, [])]
        if not variants:
            missing.append(word)
            continue
        if sp_optional and sp_label:
            variants = variants + [v + (sp_label,) for v in variants if v[-1:] != (sp_label,)]
        expansions[word] = variants
    if missing:
        raise NetworkError(f"No viseme expansion for: {' '.join(sorted(missing))}")
    return expansions


def _marker_expansions(boundary_silence: bool, sil_label: str) -> Dict[str, List[Tuple[str, ...]]]:
    silence: Tuple[str, ...] = (sil_label,) if boundary_silence else ()
    return {SENTENCE_START: [silence], SENTENCE_END: [silence]}


def build_network(
    lm: BigramLM,
    viseme_dict: Mapping[str, Sequence[Sequence[str]]],
    sp_optional: bool = True,
    boundary_silence: bool = True,
    sil_label: str = "sil",
    sp_label: str = "sp",
) -> WordNetwork:
    expansions = _word_expansions(viseme_dict, lm.vocab, sp_label, sp_optional)
    expansions.update(_marker_expansions(boundary_silence, sil_label))

    arcs = sorted((a, b, lp) for (a, b), lp in lm.logp.items() if np.isfinite(lp))
    nodes = {w: w for w in [SENTENCE_START, SENTENCE_END, *lm.vocab]}

    # Words the model can never reach stay out of the graph
    forward = _reachable(SENTENCE_START, [(a, b) for a, b, _ in arcs])
    backward = _reachable(SENTENCE_END, [(b, a) for a, b, _ in arcs])
    live = {n for n in nodes if n in forward and n in backward}
    dropped = sorted(set(nodes) - live)
    if dropped:
        logger.warning("Dropping unreachable network words: %s", " ".join(dropped))
    network = WordNetwork(
        nodes={n: w for n, w in nodes.items() if n in live},
        arcs=[arc for arc in arcs if arc[0] in live and arc[1] in live],
        expansions={w: v for w, v in expansions.items() if w in live},
        sil_label=sil_label if boundary_silence else None,
        sp_label=sp_label if sp_optional else None,
    )
    network.check()
    return network


def linear_network(
    words: Sequence[str],
    viseme_dict: Mapping[str, Sequence[Sequence[str]]],
    sp_optional: bool = True,
    boundary_silence: bool = True,
    sil_label: str = "sil",
    sp_label: str = "sp",
) -> WordNetwork:
    """One path through `words` in order, for forced alignment"""
    words = [w.upper() for w in words]
    expansions = _word_expansions(viseme_dict, sorted(set(words)), sp_label, sp_optional)
    expansions.update(_marker_expansions(boundary_silence, sil_label))
    sequence = [SENTENCE_START] + [f"{i}:{w}" for i, w in enumerate(words, 1)] + [SENTENCE_END]
    nodes = {SENTENCE_START: SENTENCE_START, SENTENCE_END: SENTENCE_END}
    nodes.update({node: node.split(":", 1)[1] for node in sequence[1:-1]})
    network = WordNetwork(
        nodes=nodes,
        arcs=[(a, b, 0.0) for a, b in zip(sequence, sequence[1:])],
        expansions=expansions,
        sil_label=sil_label if boundary_silence else None,
        sp_label=sp_label if sp_optional else None,
    )
    network.check()
    return network


def save_network(network: WordNetwork) -> str:
    """Canonical text form: node, arc and expansion blocks, each sorted"""
    lines = [f"start {network.start}", f"end {network.end}", "nodes"]
    lines.extend(f"{node} {word}" for node, word in sorted(network.nodes.items()))
    lines.append("arcs")
    lines.extend(f"{a} {b} {format_float(lp)}" for a, b, lp in sorted(network.arcs))
    lines.append("expansions")
    for word in sorted(network.expansions):
        for variant in network.expansions[word]:
            lines.append(f"{word} {' '.join(variant) if variant else '-'}")
    return "\n".join(lines) + "\n"


def load_network(text: str) -> WordNetwork:
    start = end = None
    nodes: Dict[str, str] = {}
    arcs: List[Tuple[str, str, float]] = []
    expansions: Dict[str, List[Tuple[str, ...]]] = {}
    section = None
    for line_number, raw in enumerate(text.splitlines(), 1):
        tokens = raw.split()
        if not tokens:
            continue
        if tokens[0] in ("nodes", "arcs", "expansions") and len(tokens) == 1:
            section = tokens[0]
            continue
        try:
            if section is None and tokens[0] == "start":
                start = tokens[1]
            elif section is None and tokens[0] == "end":
                end = tokens[1]
            elif section == "nodes":
                nodes[tokens[0]] = tokens[1]
            elif section == "arcs":
                arcs.append((tokens[0], tokens[1], float(tokens[2])))
            elif section == "expansions":
                variant = () if tokens[1:] == ["-"] else tuple(tokens[1:])
                expansions.setdefault(tokens[0], []).append(variant)
            else:
                raise NetworkError(f"Network line {line_number}: unexpected {raw.strip()!r}")
        except (IndexError, ValueError):
            raise NetworkError(f"Network line {line_number}: malformed {raw.strip()!r}")
    if start is None or end is None:
        raise NetworkError("Network file lacks start/end declarations")
    network = WordNetwork(nodes, arcs, expansions, start, end)
    network.check()
    return network
