"""Cross-validation folds, corpora on disk and the synthetic corpus generator.

A synthetic corpus is sampled from known Gaussian HMMs, one per viseme class,
so recognition results can be checked against ground truth.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CorpusError, InputFileError
from .features import load_frames, load_segments, read_text, save_frames, save_segments
from .models import FoldSampling, FoldSpec, SyntheticSpec, parse_key_value_text
from .viseme_map import (
    SHORT_PAUSE,
    SILENCE,
    PronunciationDict,
    Transcript,
    TranscriptUnit,
    VisemeMap,
    load_dictionary,
    load_viseme_map,
    load_word_transcripts,
    save_viseme_map,
    save_word_transcripts,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"


def make_folds(
    n_lines: int,
    test_size: int,
    n_folds: int,
    seed: int,
    sampling: FoldSampling = FoldSampling.INDEPENDENT,
) -> FoldSpec:
    """`test_size` distinct lines per fold.

    INDEPENDENT draws every fold afresh, so folds may share test lines.
    DISJOINT slices one permutation, so no line is tested twice.
    """
    if n_folds < 1:
        raise CorpusError("n_folds must be at least 1")
    if test_size < 1 or test_size >= n_lines:
        raise CorpusError(f"test_size must lie in [1, n_lines), got {test_size} for {n_lines} lines")
    if sampling == FoldSampling.DISJOINT and test_size * n_folds > n_lines:
        raise CorpusError(f"{n_folds} disjoint folds of {test_size} lines exceed {n_lines} lines")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_lines)
    folds = []
    for k in range(n_folds):
        if sampling == FoldSampling.DISJOINT:
            drawn = order[k * test_size : (k + 1) * test_size]
        else:
            drawn = rng.choice(n_lines, size=test_size, replace=False)
        test = sorted(int(i) for i in drawn)
        chosen = set(test)
        train = [i for i in range(n_lines) if i not in chosen]
        folds.append((test, train))
    return FoldSpec(n_lines=n_lines, test_size=test_size, seed=seed, folds=folds)


def load_folds(text: str) -> FoldSpec:
    header: Dict[str, int] = {}
    tests: Dict[int, List[int]] = {}
    trains: Dict[int, List[int]] = {}
    for line_number, raw in enumerate(text.splitlines(), 1):
        tokens = raw.split()
        if not tokens:
            continue
        try:
            if tokens[0] == "fold":
                target = tests if tokens[2] == "test" else trains
                target[int(tokens[1])] = [int(t) for t in tokens[3:]]
            else:
                header[tokens[0]] = int(tokens[1])
        except (IndexError, ValueError):
            raise CorpusError(f"Fold file line {line_number}: malformed {raw.strip()!r}")
    try:
        folds = [(tests[k], trains[k]) for k in sorted(tests)]
        return FoldSpec(n_lines=header["n_lines"], test_size=header["test_size"], seed=header["seed"], folds=folds)
    except (KeyError, ValueError) as e:
        raise CorpusError(f"Invalid fold file: {e}")


@dataclass
class Corpus:
    vmap: VisemeMap
    dictionary: PronunciationDict
    lines: List[Tuple[str, List[str]]]
    frames: Dict[str, np.ndarray]
    reference: Dict[str, Transcript] = field(default_factory=dict)
    rate: float = 60.0

    @property
    def ids(self) -> List[str]:
        return [uid for uid, _ in self.lines]

    @property
    def feature_dim(self) -> Optional[int]:
        for frames in self.frames.values():
            return frames.shape[1]
        return None

    def check(self) -> None:
        missing = [uid for uid in self.ids if uid not in self.frames]
        if missing:
            raise CorpusError(f"No feature frames for lines: {' '.join(missing)}")
        dims = {f.shape[1] for f in self.frames.values()}
        if len(dims) > 1:
            raise CorpusError(f"Feature files disagree on dimension: {sorted(dims)}")


@dataclass
class SyntheticCorpus(Corpus):
    spec: Optional[SyntheticSpec] = None
    # Generating parameters per class id: (state means, sigma)
    class_means: Dict[str, np.ndarray] = field(default_factory=dict)


def synthetic_map(n_classes: int, phonemes_per_class: int) -> VisemeMap:
    """Classes v01..vNN of made-up phonemes, then a silence class and ``sp``"""
    classes = []
    for k in range(1, n_classes + 1):
        phones = [f"x{k:02d}{chr(ord('a') + j)}" for j in range(phonemes_per_class)]
        classes.append((f"v{k:02d}", phones))
    classes.append((f"v{n_classes + 1:02d}", [SILENCE]))
    classes.append((SHORT_PAUSE, [SHORT_PAUSE]))
    return VisemeMap(classes)


def _class_means(labels: Sequence[str], silence: str, spec: SyntheticSpec) -> Dict[str, np.ndarray]:
    """Per class, a (states, dim) matrix of state means"""
    means: Dict[str, np.ndarray] = {}
    spread = spec.state_spread * spec.sigma * (np.arange(spec.states_per_class) - (spec.states_per_class - 1) / 2.0)
    offsets = spread[:, np.newaxis] * np.ones(spec.dim) / np.sqrt(spec.dim)
    for k, label in enumerate(labels):
        centre = np.zeros(spec.dim)
        centre[k % spec.dim] = spec.separation * spec.sigma * (1 + k // spec.dim)
        means[label] = centre + offsets
    means[silence] = np.zeros((spec.states_per_class, spec.dim)) + offsets
    return means


def _check_durations(spec: SyntheticSpec) -> None:
    for low, high, what in (
        (spec.min_frames, spec.max_frames, "viseme"),
        (spec.silence_min_frames, spec.silence_max_frames, "silence"),
    ):
        if low < spec.states_per_class or high < low:
            raise CorpusError(
                f"Degenerate {what} duration range [{low}, {high}] for {spec.states_per_class} states"
            )


def _sample_segment(rng: np.random.Generator, means: np.ndarray, n_frames: int, sigma: float) -> np.ndarray:
    n_states = means.shape[0]
    # Frames split across the states as evenly as possible, earlier states first
    counts = np.full(n_states, n_frames // n_states)
    counts[: n_frames % n_states] += 1
    state_of_frame = np.repeat(np.arange(n_states), counts)
    return means[state_of_frame] + sigma * rng.standard_normal((n_frames, means.shape[1]))


def generate_corpus(spec: SyntheticSpec, vmap: Optional[VisemeMap] = None) -> SyntheticCorpus:
    """Sample lines, frames and timed references; fully determined by spec.seed"""
    _check_durations(spec)
    if vmap is None:
        vmap = synthetic_map(spec.n_classes, spec.phonemes_per_class)
    silence = vmap.silence_id
    if silence is None:
        raise CorpusError("Viseme map has no silence class")
    classes = vmap.trainable_ids
    if spec.class_weights and len(spec.class_weights) != len(classes):
        raise CorpusError(f"class_weights has {len(spec.class_weights)} entries for {len(classes)} classes")
    weights = np.asarray(spec.class_weights or [1.0] * len(classes), dtype=float)
    weights = weights / weights.sum()

    rng = np.random.default_rng(spec.seed)
    means = _class_means(classes, silence, spec)

    entries: Dict[str, List[Tuple[str, ...]]] = {}
    spellings: Dict[str, Tuple[str, ...]] = {}
    seen = set()
    for w in range(1, spec.vocabulary_size + 1):
        word = f"W{w:04d}"
        for _ in range(100):
            length = int(rng.integers(spec.min_word_phones, spec.max_word_phones + 1))
            picks = rng.choice(len(classes), size=length, p=weights)
            visemes = tuple(classes[int(k)] for k in picks)
            if visemes not in seen:
                break
        seen.add(visemes)
        phones = tuple(str(rng.choice(vmap.phones(v))) for v in visemes)
        entries[word] = [phones]
        spellings[word] = visemes
    words = list(entries)
    n_successors = min(spec.successors, len(words))
    successors = {w: [words[int(i)] for i in rng.choice(len(words), size=n_successors, replace=False)] for w in words}

    lines: List[Tuple[str, List[str]]] = []
    frames: Dict[str, np.ndarray] = {}
    reference: Dict[str, Transcript] = {}
    for index in range(spec.n_lines):
        uid = f"L{index + 1:03d}"
        n_words = int(rng.integers(spec.min_words, spec.max_words + 1))
        line: List[str] = []
        if n_words:
            line.append(words[int(rng.integers(len(words)))])
            while len(line) < n_words:
                line.append(successors[line[-1]][int(rng.integers(n_successors))])

        units: List[TranscriptUnit] = []
        pieces: List[np.ndarray] = []
        position = 0

        def emit(label: str, low: int, high: int, word: Optional[str] = None) -> None:
            nonlocal position
            n_frames = int(rng.integers(low, high + 1))
            pieces.append(_sample_segment(rng, means[label], n_frames, spec.sigma))
            units.append(TranscriptUnit(label, position, position + n_frames, word))
            position += n_frames

        emit(silence, spec.silence_min_frames, spec.silence_max_frames)
        for word in line:
            for k, viseme in enumerate(spellings[word]):
                emit(viseme, spec.min_frames, spec.max_frames, word if k == 0 else None)
        emit(silence, spec.silence_min_frames, spec.silence_max_frames)

        lines.append((uid, line))
        frames[uid] = np.vstack(pieces)
        reference[uid] = Transcript(tuple(units))

    logger.info("Synthetic corpus: %d lines, %d words, %d classes", len(lines), len(words), len(classes))
    return SyntheticCorpus(
        vmap=vmap,
        dictionary=PronunciationDict(entries),
        lines=lines,
        frames=frames,
        reference=reference,
        rate=spec.rate,
        spec=spec,
        class_means=means,
    )


def write_corpus(corpus: Corpus, directory: Path) -> Path:
    """Write corpus files plus a manifest with relative paths; returns the manifest path"""
    directory = Path(directory)
    features = directory / "features"
    features.mkdir(parents=True, exist_ok=True)
    (directory / "dictionary.txt").write_text(corpus.dictionary.to_text(), encoding="utf-8")
    (directory / "viseme_map.txt").write_text(save_viseme_map(corpus.vmap), encoding="utf-8")
    (directory / "transcripts.txt").write_text(save_word_transcripts(corpus.lines), encoding="utf-8")
    for uid in corpus.ids:
        (features / f"{uid}.frames").write_text(save_frames(corpus.frames[uid], corpus.rate), encoding="utf-8")

    manifest = [
        "dictionary = dictionary.txt",
        "viseme_map = viseme_map.txt",
        "transcripts = transcripts.txt",
        "features = features",
    ]
    if corpus.reference:
        reference = [(uid, corpus.reference[uid]) for uid in corpus.ids if uid in corpus.reference]
        (directory / "reference.lab").write_text(save_segments(reference), encoding="utf-8")
        manifest.append("reference = reference.lab")
    path = directory / MANIFEST_NAME
    path.write_text("\n".join(manifest) + "\n", encoding="utf-8")
    return path


def load_corpus(manifest_path: Path) -> Corpus:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    entries = parse_key_value_text(read_text(manifest_path))
    root = manifest_path.parent
    missing = [key for key in ("dictionary", "viseme_map", "transcripts", "features") if key not in entries]
    if missing:
        raise CorpusError(f"Manifest {manifest_path} lacks: {' '.join(missing)}")

    vmap = load_viseme_map(read_text(root / entries["viseme_map"]))
    dictionary = load_dictionary(read_text(root / entries["dictionary"]), vmap.inventory)
    lines = load_word_transcripts(read_text(root / entries["transcripts"]))

    features = root / entries["features"]
    frames: Dict[str, np.ndarray] = {}
    rate = 60.0
    for uid, _ in lines:
        path = features / f"{uid}.frames"
        if not path.exists():
            raise InputFileError(str(path))
        frames[uid], rate = load_frames(path.read_text(encoding="utf-8"), source=str(path))

    reference: Dict[str, Transcript] = {}
    if "reference" in entries:
        reference_path = root / entries["reference"]
        reference = dict(load_segments(read_text(reference_path), str(reference_path)))
    corpus = Corpus(vmap, dictionary, lines, frames, reference, rate)
    corpus.check()
    return corpus
