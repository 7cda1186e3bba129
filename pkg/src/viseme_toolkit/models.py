from enum import Enum
from typing import Dict, List, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .config import config
from .errors import ConfigError


class RecipeStage(str, Enum):
    TRANSCRIBE = "transcribe"
    GARBAGE_MERGE = "garbage_merge"
    FLAT_START = "flat_start"
    REESTIMATE_INITIAL = "reestimate_initial"
    TIE_SILENCE = "tie_silence"
    REESTIMATE_TIED = "reestimate_tied"
    FORCE_ALIGN = "force_align"
    REESTIMATE_ALIGNED = "reestimate_aligned"
    BUILD_NETWORK = "build_network"
    DECODE = "decode"
    SCORE = "score"
    COMPLETED = "completed"
    ABORTED = "aborted"


# The order the recipe executes its stages in
RECIPE_STAGE_ORDER: Tuple[RecipeStage, ...] = (
    RecipeStage.TRANSCRIBE,
    RecipeStage.GARBAGE_MERGE,
    RecipeStage.FLAT_START,
    RecipeStage.REESTIMATE_INITIAL,
    RecipeStage.TIE_SILENCE,
    RecipeStage.REESTIMATE_TIED,
    RecipeStage.FORCE_ALIGN,
    RecipeStage.REESTIMATE_ALIGNED,
    RecipeStage.BUILD_NETWORK,
    RecipeStage.DECODE,
    RecipeStage.SCORE,
)


class ProbabilityMode(str, Enum):
    PER_FOLD = "per_fold"
    POOLED = "pooled"


class FoldSampling(str, Enum):
    INDEPENDENT = "independent"
    DISJOINT = "disjoint"


class StageRecord(BaseModel):
    stage: RecipeStage
    message: str = ""
    percent: int = Field(0, ge=0, le=100)


class KeyValueModel(BaseModel):
    """Base for configuration records stored as `key = value` text."""

    model_config = ConfigDict(extra="forbid")

    def to_key_value_text(self) -> str:
        lines = []
        for name, value in self.model_dump(mode="json").items():
            if isinstance(value, list):
                value = " ".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{name} = {value}")
        return "\n".join(lines) + "\n"


M = TypeVar("M", bound=KeyValueModel)


def parse_key_value_text(text: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for line_number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"Line {line_number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"Line {line_number}: empty key")
        values[key] = value
    return values


def load_key_value_model(model_cls: Type[M], text: str, **overrides: object) -> M:
    """Build a configuration record from `key = value` text plus overrides"""
    values: Dict[str, object] = dict(parse_key_value_text(text))
    for field_name, field_info in model_cls.model_fields.items():
        raw = values.get(field_name)
        # Space-separated lists in the text form
        if isinstance(raw, str) and "list" in str(field_info.annotation).lower():
            values[field_name] = raw.split() if raw else []
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return model_cls.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"Invalid {model_cls.__name__}: {e}")


class RecipeConfig(KeyValueModel):
    n_states: int = Field(5, ge=1, description="Emitting states per viseme model")
    n_mix: int = Field(5, ge=1, description="Gaussian mixture components per state")
    r1: int = Field(4, ge=0, description="Re-estimations after flat start")
    r2: int = Field(2, ge=0, description="Re-estimations after silence tying")
    r3: int = Field(2, ge=0, description="Re-estimations on the force-aligned transcript")
    threshold: int = Field(150, ge=0, description="Garbage-merge sample threshold")
    fraction: float = Field(0.95, gt=0.0, le=1.0, description="Retained variance fraction")
    lm_floor: float = Field(1e-4, ge=0.0, lt=1.0, description="Bigram probability floor")
    lm_scale: float = Field(1.0, ge=0.0, description="Language-model scale factor")
    insertion_penalty: float = Field(0.0, description="Log word-insertion penalty")
    seed: int = Field(default_factory=lambda: config.SEED, ge=0)
    test_size: int = Field(42, ge=1, description="Test lines per fold")
    n_folds: int = Field(5, ge=1, description="Number of cross-validation folds")
    fold_sampling: FoldSampling = Field(FoldSampling.INDEPENDENT, description="Independent or disjoint test sets")
    sp_optional: bool = Field(True, description="Optional short pause between words")
    boundary_silence: bool = Field(True, description="Mandatory silence at line boundaries")
    jitter: bool = Field(True, description="Jitter flat-start mixture means")
    prob_mode: ProbabilityMode = Field(ProbabilityMode.PER_FOLD)
    tie_epsilon: float = Field(default_factory=lambda: config.TIE_EPSILON, ge=0.0)


class SyntheticSpec(KeyValueModel):
    n_classes: int = Field(15, ge=1, description="Non-silence viseme classes")
    phonemes_per_class: int = Field(2, ge=1)
    dim: int = Field(10, ge=1, description="Feature dimension")
    separation: float = Field(10.0, gt=0.0, description="Minimum class mean distance in sigma")
    sigma: float = Field(1.0, gt=0.0, description="Per-dimension emission standard deviation")
    states_per_class: int = Field(3, ge=1, description="Emitting states of the generating models")
    state_spread: float = Field(0.5, ge=0.0, description="State mean offset in sigma")
    min_frames: int = Field(6, description="Shortest viseme segment in frames")
    max_frames: int = Field(10, description="Longest viseme segment in frames")
    silence_min_frames: int = Field(8)
    silence_max_frames: int = Field(14)
    n_lines: int = Field(108, ge=0, description="Lines (utterances) in the corpus")
    min_words: int = Field(3, ge=0)
    max_words: int = Field(6, ge=0)
    vocabulary_size: int = Field(40, ge=1)
    min_word_phones: int = Field(2, ge=1)
    max_word_phones: int = Field(4, ge=1)
    successors: int = Field(3, ge=1, description="Allowed successors per word in the line grammar")
    rate: float = Field(60.0, gt=0.0, description="Frame rate written to feature files")
    class_weights: List[float] = Field(default_factory=list, description="Phoneme sampling weight per class")
    seed: int = Field(default_factory=lambda: config.SEED, ge=0)

    @model_validator(mode="after")
    def _check_weights(self) -> "SyntheticSpec":
        if self.class_weights:
            if len(self.class_weights) != self.n_classes:
                raise ValueError("class_weights must have one entry per class")
            if any(w < 0 for w in self.class_weights) or sum(self.class_weights) <= 0:
                raise ValueError("class_weights must be non-negative with a positive sum")
        if self.max_words < self.min_words:
            raise ValueError("max_words must be >= min_words")
        if self.max_word_phones < self.min_word_phones:
            raise ValueError("max_word_phones must be >= min_word_phones")
        return self


class FoldSpec(BaseModel):
    n_lines: int = Field(ge=1)
    test_size: int = Field(ge=1)
    seed: int
    folds: List[Tuple[List[int], List[int]]] = Field(description="(test, train) line indices")

    @model_validator(mode="after")
    def _check_folds(self) -> "FoldSpec":
        for test, train in self.folds:
            if len(test) != self.test_size or len(set(test)) != len(test):
                raise ValueError("each test set must hold test_size distinct lines")
            if sorted(set(test) | set(train)) != list(range(self.n_lines)) or set(test) & set(train):
                raise ValueError("train must be the complement of test")
        return self

    def to_text(self) -> str:
        lines = [f"n_lines {self.n_lines}", f"test_size {self.test_size}", f"seed {self.seed}"]
        for index, (test, train) in enumerate(self.folds, 1):
            lines.append(f"fold {index} test " + " ".join(str(i) for i in test))
            lines.append(f"fold {index} train " + " ".join(str(i) for i in train))
        return "\n".join(lines) + "\n"


class ScoreReport(BaseModel):
    N: int = Field(ge=0, description="Reference labels")
    H: int = Field(ge=0, description="Hits")
    D: int = Field(ge=0, description="Deletions")
    S: int = Field(ge=0, description="Substitutions")
    I: int = Field(ge=0, description="Insertions")  # noqa: E741
    correctness: float = Field(description="100 * H / N")
    accuracy: float = Field(description="100 * (H - I) / N; may be negative")

    @model_validator(mode="after")
    def _check_counts(self) -> "ScoreReport":
        if self.N != self.H + self.D + self.S:
            raise ValueError("N must equal H + D + S")
        return self


class VisemeProbability(BaseModel):
    viseme: str
    p: Optional[float] = Field(None, ge=0.0, le=1.0, description="Pr{v | v-hat}; None when undefined")
    se: float = Field(0.0, ge=0.0, description="Standard error over folds")
    n_folds: int = Field(0, ge=0, description="Folds contributing a defined value")

    @property
    def defined(self) -> bool:
        return self.p is not None


class RankingResult(BaseModel):
    groups: List[List[str]] = Field(description="Viseme groups, best first; ties share a group")
    ranks: Dict[str, float] = Field(description="Fractional rank per defined viseme")
    values: Dict[str, float] = Field(default_factory=dict)
    undefined: List[str] = Field(default_factory=list, description="Ranked last, excluded from correlations")


class CorrelationResult(BaseModel):
    r: float = Field(ge=-1.0, le=1.0)
    p_value: float = Field(ge=0.0, le=1.0)
    n: int = Field(ge=0)
    method: str = Field(description="'exact' permutation or 't' approximation")
    t_p_value: Optional[float] = Field(None, description="t-approximation p-value, always computed when possible")

    @property
    def significant(self) -> bool:
        return self.p_value < config.SIGNIFICANCE


class FoldStatistics(BaseModel):
    mean: float
    standard_error: float = Field(ge=0.0)
    n_folds: int = Field(ge=2)


class DeclinePoint(BaseModel):
    position: int = Field(ge=1)
    viseme: str
    p: float
    se: float


class FeatureComparison(BaseModel):
    viseme: str
    p_a: float
    se_a: float
    p_b: float
    se_b: float


class DeclineComparison(BaseModel):
    slope_a: float = Field(description="Mean first difference of curve a")
    slope_b: float = Field(description="Mean first difference of curve b")
    steeper: str = Field(description="'a', 'b' or 'equal'")
