"""Exception hierarchy. Each error carries the exit status the CLI reports."""

from typing import Iterable, Optional


class VisemeToolkitError(Exception):
    exit_code: int = 1


class InputFileError(VisemeToolkitError):
    exit_code = 2

    def __init__(self, path: str, reason: str = "file not found") -> None:
        self.path = path
        super().__init__(f"{reason}: {path}")


class InventoryError(VisemeToolkitError):
    def __init__(self, symbol: str, context: str = "") -> None:
        self.symbol = symbol
        where = f" ({context})" if context else ""
        super().__init__(f"Phoneme '{symbol}' is not in the inventory{where}")


class DictionaryParseError(VisemeToolkitError):
    def __init__(self, line_number: int, line: str) -> None:
        self.line_number = line_number
        super().__init__(f"Malformed dictionary line {line_number}: {line.strip()!r}")


class OutOfVocabularyError(VisemeToolkitError):
    def __init__(self, words: Iterable[str]) -> None:
        self.words = sorted(set(words))
        super().__init__(f"Out-of-vocabulary words: {' '.join(self.words)}")


class PartitionError(VisemeToolkitError):
    pass


class MapFormatError(VisemeToolkitError):
    pass


class TranscriptError(VisemeToolkitError):
    pass


class GarbageMergeError(VisemeToolkitError):
    pass


class ModelFileError(VisemeToolkitError):
    pass


class DimensionMismatchError(VisemeToolkitError):
    exit_code = 3

    def __init__(self, expected: int, actual: int, what: str = "vector") -> None:
        self.expected = expected
        self.actual = actual
        super().__init__(f"Dimension mismatch for {what}: expected {expected}, got {actual}")


class TrainingError(VisemeToolkitError):
    pass


class AlignmentError(VisemeToolkitError):
    pass


class DecodeError(VisemeToolkitError):
    exit_code = 4


class NetworkError(VisemeToolkitError):
    pass


class ScoringError(VisemeToolkitError):
    pass


class AnalysisError(VisemeToolkitError):
    pass


class CorpusError(VisemeToolkitError):
    pass


class ConfigError(VisemeToolkitError):
    pass


class RecipeError(VisemeToolkitError):
    def __init__(self, stage: str, cause: Exception, fold: Optional[int] = None) -> None:
        self.stage = stage
        self.cause = cause
        self.fold = fold
        where = f"fold {fold}, " if fold is not None else ""
        super().__init__(f"Recipe failed ({where}stage {stage}): {cause}")
        # Keep the most specific exit status of the underlying failure
        self.exit_code = getattr(cause, "exit_code", 1)
