"""Label-sequence scoring: edit alignment, correctness/accuracy and confusion counts."""

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ScoringError
from .models import ScoreReport

SUBSTITUTION_COST = 10
DELETION_COST = 7
INSERTION_COST = 7

HIT, SUBSTITUTION, DELETION, INSERTION = "H", "S", "D", "I"


@dataclass
class EditAlignment:
    """Aligned (op, reference label, hypothesis label) triples; absent side is None"""

    pairs: List[Tuple[str, Optional[str], Optional[str]]] = field(default_factory=list)
    cost: int = 0

    def count(self, op: str) -> int:
        return sum(1 for pair in self.pairs if pair[0] == op)

    @property
    def n_reference(self) -> int:
        return sum(1 for pair in self.pairs if pair[0] != INSERTION)


def align_labels(
    ref: Sequence[str],
    hyp: Sequence[str],
    sub_cost: int = SUBSTITUTION_COST,
    del_cost: int = DELETION_COST,
    ins_cost: int = INSERTION_COST,
) -> EditAlignment:
    """Minimum-cost alignment; equal-cost ties prefer match/substitution, then deletion"""
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=int)
    cost[:, 0] = np.arange(n + 1) * del_cost
    cost[0, :] = np.arange(m + 1) * ins_cost
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diagonal = cost[i - 1, j - 1] + (0 if ref[i - 1] == hyp[j - 1] else sub_cost)
            cost[i, j] = min(diagonal, cost[i - 1, j] + del_cost, cost[i, j - 1] + ins_cost)

    pairs: List[Tuple[str, Optional[str], Optional[str]]] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            same = ref[i - 1] == hyp[j - 1]
            if cost[i, j] == cost[i - 1, j - 1] + (0 if same else sub_cost):
                pairs.append((HIT if same else SUBSTITUTION, ref[i - 1], hyp[j - 1]))
                i, j = i - 1, j - 1
                continue
        if i > 0 and cost[i, j] == cost[i - 1, j] + del_cost:
            pairs.append((DELETION, ref[i - 1], None))
            i -= 1
        else:
            pairs.append((INSERTION, None, hyp[j - 1]))
            j -= 1
    pairs.reverse()
    return EditAlignment(pairs, int(cost[n, m]))


def strip_labels(labels: Iterable[str], drop: Iterable[str] = ("sp",)) -> List[str]:
    dropped = set(drop)
    return [label for label in labels if label not in dropped]


def score(alignments: Iterable[EditAlignment]) -> ScoreReport:
    """Pooled counts over all alignments"""
    hits = deletions = substitutions = insertions = 0
    for alignment in alignments:
        hits += alignment.count(HIT)
        deletions += alignment.count(DELETION)
        substitutions += alignment.count(SUBSTITUTION)
        insertions += alignment.count(INSERTION)
    total = hits + deletions + substitutions
    if total == 0:
        raise ScoringError("No reference labels to score against")
    return ScoreReport(
        N=total,
        H=hits,
        D=deletions,
        S=substitutions,
        I=insertions,
        correctness=100.0 * hits / total,
        accuracy=100.0 * (hits - insertions) / total,
    )


def score_words(pairs: Iterable[Tuple[Sequence[str], Sequence[str]]]) -> ScoreReport:
    """Word-level score of (reference words, recognized words) pairs"""
    return score(align_labels(ref, hyp) for ref, hyp in pairs)


class ConfusionMatrix:
    """Reference x hypothesis counts plus per-label deletion and insertion margins."""

    def __init__(
        self,
        labels: Sequence[str],
        counts: Optional[np.ndarray] = None,
        deletions: Optional[np.ndarray] = None,
        insertions: Optional[np.ndarray] = None,
    ):
        self.labels = list(labels)
        if len(set(self.labels)) != len(self.labels):
            raise ScoringError("Confusion labels must be unique")
        size = len(self.labels)
        self.counts = np.zeros((size, size), dtype=int) if counts is None else np.asarray(counts, dtype=int)
        self.deletions = np.zeros(size, dtype=int) if deletions is None else np.asarray(deletions, dtype=int)
        self.insertions = np.zeros(size, dtype=int) if insertions is None else np.asarray(insertions, dtype=int)
        if self.counts.shape != (size, size) or self.deletions.shape != (size,) or self.insertions.shape != (size,):
            raise ScoringError("Confusion arrays do not match the label list")
        self._index = {label: i for i, label in enumerate(self.labels)}

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise ScoringError(f"Label '{label}' is not in the confusion class list")

    def add(self, alignment: EditAlignment) -> None:
        for op, ref, hyp in alignment.pairs:
            if op == DELETION:
                self.deletions[self.index(ref)] += 1
            elif op == INSERTION:
                self.insertions[self.index(hyp)] += 1
            else:
                self.counts[self.index(ref), self.index(hyp)] += 1

    @property
    def hits(self) -> int:
        return int(np.trace(self.counts))

    @property
    def substitutions(self) -> int:
        return int(self.counts.sum() - np.trace(self.counts))

    def column_total(self, label: str) -> int:
        return int(self.counts[:, self.index(label)].sum())

    def get(self, ref: str, hyp: str) -> int:
        return int(self.counts[self.index(ref), self.index(hyp)])

    @classmethod
    def merge(cls, matrices: Sequence["ConfusionMatrix"]) -> "ConfusionMatrix":
        """Pool matrices over the union of their labels, first-seen order"""
        labels: List[str] = []
        for matrix in matrices:
            labels.extend(label for label in matrix.labels if label not in labels)
        pooled = cls(labels)
        for matrix in matrices:
            positions = [pooled.index(label) for label in matrix.labels]
            pooled.counts[np.ix_(positions, positions)] += matrix.counts
            pooled.deletions[positions] += matrix.deletions
            pooled.insertions[positions] += matrix.insertions
        return pooled

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["", *self.labels, "DEL"])
        for i, label in enumerate(self.labels):
            writer.writerow([label, *self.counts[i].tolist(), int(self.deletions[i])])
        writer.writerow(["INS", *self.insertions.tolist(), ""])
        return buffer.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConfusionMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        try:
            header = rows[0]
            if header[-1] != "DEL" or rows[-1][0] != "INS":
                raise ScoringError("Confusion CSV lacks DEL/INS margins")
            labels = header[1:-1]
            body = rows[1:-1]
            if [row[0] for row in body] != labels:
                raise ScoringError("Confusion CSV row labels differ from column labels")
            size = len(labels)
            counts = np.array([[int(v) for v in row[1:-1]] for row in body], dtype=int).reshape(size, size)
            deletions = np.array([int(row[-1]) for row in body], dtype=int)
            insertions = np.array([int(v) for v in rows[-1][1 : len(labels) + 1]], dtype=int)
        except (IndexError, ValueError) as e:
            raise ScoringError(f"Malformed confusion CSV: {e}")
        return cls(labels, counts, deletions, insertions)


def confusion(alignments: Iterable[EditAlignment], labels: Sequence[str]) -> ConfusionMatrix:
    matrix = ConfusionMatrix(labels)
    for alignment in alignments:
        matrix.add(alignment)
    return matrix


def format_report(report: ScoreReport, title: str = "Overall Results", unit: str = "VISEME") -> str:
    rule = "-" * 24
    return (
        f"{rule} {title} {rule}\n"
        f"{unit}: %Corr={report.correctness:.2f}, Acc={report.accuracy:.2f} "
        f"[H={report.H}, D={report.D}, S={report.S}, I={report.I}, N={report.N}]\n"
        f"{'=' * (len(title) + 50)}\n"
    )
