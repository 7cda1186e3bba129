"""End-to-end training and recognition, one cross-validation fold at a time.

Per fold: viseme transcripts, garbage merge on training counts, flat start,
re-estimation, silence tying, re-estimation with short pauses between words,
forced alignment against the word transcripts, re-estimation on the aligned
labels, a bigram network from the training lines, decoding of the test lines
and scoring at viseme and word level.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .config import config as env_config
from .corpus import Corpus
from .decoding import AlignedSegment, ViterbiDecoder, force_align
from .errors import (
    AlignmentError,
    DecodeError,
    GarbageMergeError,
    PartitionError,
    RecipeError,
    VisemeToolkitError,
)
from .hmm import ModelSet, flat_start, tie_silence_models
from .language_model import build_network, estimate_bigram
from .models import FoldSpec, RecipeConfig, RecipeStage, ScoreReport, StageRecord
from .scoring import (
    ConfusionMatrix,
    EditAlignment,
    align_labels,
    confusion,
    score,
    score_words,
    strip_labels,
)
from .training import IterationStats, baum_welch
from .viseme_map import (
    SHORT_PAUSE,
    Transcript,
    VisemeMap,
    apply_garbage_threshold,
    count_visemes,
    viseme_dictionary,
    words_to_visemes,
)

logger = logging.getLogger(__name__)

STAGE_PERCENT: Dict[RecipeStage, int] = {
    RecipeStage.TRANSCRIBE: 5,
    RecipeStage.GARBAGE_MERGE: 10,
    RecipeStage.FLAT_START: 15,
    RecipeStage.REESTIMATE_INITIAL: 30,
    RecipeStage.TIE_SILENCE: 40,
    RecipeStage.REESTIMATE_TIED: 50,
    RecipeStage.FORCE_ALIGN: 60,
    RecipeStage.REESTIMATE_ALIGNED: 70,
    RecipeStage.BUILD_NETWORK: 80,
    RecipeStage.DECODE: 90,
    RecipeStage.SCORE: 95,
    RecipeStage.COMPLETED: 100,
}


@dataclass
class FoldResult:
    fold: int
    models: Optional[ModelSet] = None
    report: Optional[ScoreReport] = None
    confusion: Optional[ConfusionMatrix] = None
    trace: List[StageRecord] = field(default_factory=list)
    aborted: bool = False
    reason: str = ""
    vmap: Optional[VisemeMap] = None
    aligned: Dict[str, List[AlignedSegment]] = field(default_factory=dict)
    hypotheses: Dict[str, Transcript] = field(default_factory=dict)
    recognized_words: Dict[str, List[str]] = field(default_factory=dict)
    word_report: Optional[ScoreReport] = None
    iterations: List[IterationStats] = field(default_factory=list)


def update_stage(result: FoldResult, stage: RecipeStage, message: str = "", percent: Optional[int] = None) -> None:
    """Append a stage record to the fold's trace and log it"""
    if percent is None:
        percent = STAGE_PERCENT.get(stage, result.trace[-1].percent if result.trace else 0)
    record = StageRecord(stage=stage, message=message, percent=percent)
    result.trace.append(record)
    logger.info("Fold %d: [%s %d%%] %s", result.fold, stage.value, percent, message)


def format_trace(trace: Sequence[StageRecord]) -> str:
    return "".join(f"{r.stage.value}\t{r.percent}\t{r.message}\n" for r in trace)


def parse_trace(text: str) -> List[StageRecord]:
    records = []
    for line in text.splitlines():
        if not line:
            continue
        stage, percent, message = line.split("\t", 2)
        records.append(StageRecord(stage=RecipeStage(stage), message=message, percent=int(percent)))
    return records


class FoldRunner:
    def __init__(self, config: RecipeConfig, corpus: Corpus, fold: int, test: Sequence[int], train: Sequence[int]):
        self.config = config
        self.corpus = corpus
        self.result = FoldResult(fold=fold)
        self.test = [corpus.lines[i] for i in test]
        self.train = [corpus.lines[i] for i in train]
        self.vdict: Dict[str, List[Tuple[str, ...]]] = {}

    @contextmanager
    def stage(self, stage: RecipeStage, message: str) -> Iterator[None]:
        update_stage(self.result, stage, message)
        try:
            yield
        except RecipeError:
            raise
        except Exception as e:
            update_stage(self.result, RecipeStage.ABORTED, f"{stage.value} failed: {e}")
            raise RecipeError(stage.value, e, self.result.fold)

    def _reestimate(self, models: ModelSet, utterances, iterations: int) -> ModelSet:
        if iterations == 0:
            return models
        return baum_welch(models, utterances, iterations, on_iteration=self.result.iterations.append)

    def _labels(self, vmap: VisemeMap, words: Sequence[str], short_pause: Optional[str] = None) -> List[str]:
        """Silence-bounded viseme labels, with `short_pause` between words when given"""
        labels: List[str] = []
        for index, word in enumerate(words):
            if short_pause and index:
                labels.append(short_pause)
            labels.extend(words_to_visemes(self.corpus.dictionary, vmap, [word]).labels)
        silence = vmap.silence_id
        return [silence, *labels, silence] if silence else labels

    def run(self) -> FoldResult:
        if self.train_models():
            self.evaluate()
        return self.result

    def train_models(self) -> bool:
        """Every stage up to the aligned re-estimation; False if the fold aborted"""
        cfg = self.config
        corpus = self.corpus
        result = self.result

        with self.stage(RecipeStage.TRANSCRIBE, f"Converting {len(self.train)} training lines to visemes"):
            base = corpus.vmap
            if base.silence_id is None:
                raise PartitionError("Viseme map has no silence class")
            transcripts = [words_to_visemes(corpus.dictionary, base, words) for _, words in self.train]

        try:
            with self.stage(RecipeStage.GARBAGE_MERGE, f"Merging classes below {cfg.threshold} training samples"):
                vmap = apply_garbage_threshold(base, count_visemes(transcripts, base), cfg.threshold)
        except RecipeError as e:
            if isinstance(e.cause, GarbageMergeError):
                result.aborted = True
                result.reason = str(e.cause)
                logger.warning("Fold %d aborted: %s", result.fold, e.cause)
                return False
            raise
        result.vmap = vmap
        silence = vmap.silence_id
        short_pause = vmap.short_pause_id or SHORT_PAUSE
        labels = list(dict.fromkeys([*vmap.trainable_ids, silence, short_pause]))
        training = [(corpus.frames[uid], self._labels(vmap, words)) for uid, words in self.train]

        with self.stage(RecipeStage.FLAT_START, f"{len(labels)} models, {cfg.n_states} states, {cfg.n_mix} mixtures"):
            models = flat_start(labels, cfg.n_states, cfg.n_mix, [f for f, _ in training], jitter=cfg.jitter)

        with self.stage(RecipeStage.REESTIMATE_INITIAL, f"{cfg.r1} re-estimations"):
            models = self._reestimate(models, training, cfg.r1)

        with self.stage(RecipeStage.TIE_SILENCE, f"Tying '{short_pause}' to '{silence}'"):
            models = tie_silence_models(models, silence, short_pause, env_config.TEE_PROBABILITY)
            if cfg.sp_optional:
                training = [
                    (frames, self._labels(vmap, words, short_pause))
                    for (frames, _), (_, words) in zip(training, self.train)
                ]

        with self.stage(RecipeStage.REESTIMATE_TIED, f"{cfg.r2} re-estimations"):
            models = self._reestimate(models, training, cfg.r2)

        vdict = viseme_dictionary(corpus.dictionary, vmap)
        with self.stage(RecipeStage.FORCE_ALIGN, f"Aligning {len(self.train)} training lines"):
            aligned_training = []
            for (uid, words), (frames, fallback) in zip(self.train, training):
                try:
                    segments = force_align(
                        models, frames, words, vdict,
                        sp_optional=cfg.sp_optional,
                        boundary_silence=cfg.boundary_silence,
                        sil_label=silence,
                        sp_label=short_pause,
                    )
                except AlignmentError as e:
                    logger.warning("Fold %d: keeping unaligned transcript for %s: %s", result.fold, uid, e)
                    aligned_training.append((frames, fallback))
                    continue
                result.aligned[uid] = segments
                aligned_training.append((frames, [s.label for s in segments]))

        with self.stage(RecipeStage.REESTIMATE_ALIGNED, f"{cfg.r3} re-estimations on aligned labels"):
            models = self._reestimate(models, aligned_training, cfg.r3)
        result.models = models
        self.vdict = vdict
        return True

    def evaluate(self) -> None:
        """Network, decoding and scoring of the test lines with the trained models"""
        cfg = self.config
        corpus = self.corpus
        result = self.result
        models, vmap, vdict = result.models, result.vmap, self.vdict
        assert models is not None and vmap is not None
        silence = vmap.silence_id
        short_pause = vmap.short_pause_id or SHORT_PAUSE

        with self.stage(RecipeStage.BUILD_NETWORK, "Bigram network from the training lines"):
            lm = estimate_bigram([words for _, words in self.train], cfg.lm_floor)
            network = build_network(lm, vdict, cfg.sp_optional, cfg.boundary_silence, silence, short_pause)
            decoder = ViterbiDecoder(models, network, cfg.lm_scale, cfg.insertion_penalty)

        with self.stage(RecipeStage.DECODE, f"Decoding {len(self.test)} test lines"):
            for uid, _ in self.test:
                try:
                    decoded = decoder.decode(corpus.frames[uid])
                except DecodeError as e:
                    logger.warning("Fold %d: %s not decoded: %s", result.fold, uid, e)
                    result.hypotheses[uid] = Transcript()
                    result.recognized_words[uid] = []
                    continue
                result.hypotheses[uid] = decoded.transcript
                result.recognized_words[uid] = decoded.words

        with self.stage(RecipeStage.SCORE, "Scoring viseme labels"):
            alignments: List[EditAlignment] = []
            for uid, words in self.test:
                reference = words_to_visemes(corpus.dictionary, vmap, words).labels
                if cfg.boundary_silence:
                    reference = [silence, *reference, silence]
                hypothesis = strip_labels(result.hypotheses[uid].labels, [short_pause])
                alignments.append(align_labels(reference, hypothesis))
            classes = [v for v in vmap.ids if v != short_pause]
            result.report = score(alignments)
            result.confusion = confusion(alignments, classes)
            if any(words for _, words in self.test):
                result.word_report = score_words(
                    (words, result.recognized_words[uid]) for uid, words in self.test
                )

        update_stage(
            result,
            RecipeStage.COMPLETED,
            f"Correctness {result.report.correctness:.2f}, accuracy {result.report.accuracy:.2f}",
        )


def run_fold(config: RecipeConfig, corpus: Corpus, fold: int, test: Sequence[int], train: Sequence[int]) -> FoldResult:
    return FoldRunner(config, corpus, fold, test, train).run()


def _run_fold_args(args: Tuple[RecipeConfig, Corpus, int, Sequence[int], Sequence[int]]) -> FoldResult:
    return run_fold(*args)


def run_recipe(
    config: RecipeConfig,
    corpus: Corpus,
    folds: FoldSpec,
    jobs: Optional[int] = None,
) -> List[FoldResult]:
    """Run every fold; results come back in fold order whatever `jobs` is"""
    corpus.check()
    if folds.n_lines != len(corpus.lines):
        raise RecipeError(
            RecipeStage.TRANSCRIBE.value,
            VisemeToolkitError(f"Folds cover {folds.n_lines} lines but the corpus has {len(corpus.lines)}"),
        )
    jobs = env_config.JOBS if jobs is None else max(1, jobs)
    tasks = [(config, corpus, index, test, train) for index, (test, train) in enumerate(folds.folds, 1)]
    if jobs == 1 or len(tasks) < 2:
        return [_run_fold_args(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(_run_fold_args, tasks))


def accuracies(results: Sequence[FoldResult]) -> np.ndarray:
    return np.array([r.report.accuracy for r in results if r.report is not None])
