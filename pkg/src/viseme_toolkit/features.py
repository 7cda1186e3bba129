from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, InputFileError, ModelFileError, TranscriptError
from .viseme_map import Transcript, TranscriptUnit


def format_float(value: float) -> str:
    """17 significant digits: enough for a lossless float64 round trip"""
    return format(float(value), ".17g")


def format_vector(values: Sequence[float]) -> str:
    return " ".join(format_float(v) for v in values)


def _location(source: str, line_number: int) -> str:
    return f"{source}, line {line_number}" if source else f"line {line_number}"


def read_text(path: Path) -> str:
    path = Path(path)
    if not path.exists():
        raise InputFileError(str(path))
    return path.read_text(encoding="utf-8")


def save_frames(frames: np.ndarray, rate: float = 60.0) -> str:
    """Feature frame file: ``#dim N rate R`` header, then one frame per line"""
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    dim = frames.shape[1] if frames.size else 0
    lines = [f"#dim {dim} rate {format_float(rate)}"]
    lines.extend(format_vector(row) for row in frames)
    return "\n".join(lines) + "\n"


def load_frames(
    text: str, expected_dim: Optional[int] = None, source: str = ""
) -> Tuple[np.ndarray, float]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#dim"):
        raise ModelFileError(f"Feature file must start with '#dim N rate R' ({_location(source, 1)})")
    header = lines[0][1:].split()
    try:
        fields = dict(zip(header[0::2], header[1::2]))
        dim = int(fields["dim"])
        rate = float(fields.get("rate", "60"))
    except (KeyError, ValueError) as e:
        raise ModelFileError(f"Bad feature header {lines[0]!r} ({_location(source, 1)}): {e}")
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatchError(expected_dim, dim, "feature frames")

    rows = []
    for line_number, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            row = [float(v) for v in line.split()]
        except ValueError:
            raise ModelFileError(f"Non-numeric frame ({_location(source, line_number)}): {line.strip()!r}")
        if len(row) != dim:
            raise DimensionMismatchError(dim, len(row), f"frame on line {line_number}")
        rows.append(row)
    frames = np.array(rows, dtype=float).reshape(len(rows), dim)
    return frames, rate


def load_observations(text: str, source: str = "") -> np.ndarray:
    """Observation matrix file: one whitespace-separated vector per line"""
    rows: List[List[float]] = []
    for line_number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            row = [float(v) for v in line.split()]
        except ValueError:
            raise ModelFileError(f"Non-numeric observation ({_location(source, line_number)}): {line!r}")
        if rows and len(row) != len(rows[0]):
            raise DimensionMismatchError(len(rows[0]), len(row), f"observation on line {line_number}")
        rows.append(row)
    if not rows:
        return np.zeros((0, 0))
    return np.array(rows, dtype=float)


def save_segments(transcripts: Sequence[Tuple[str, Transcript]]) -> str:
    """Label file: ``start end label`` per unit, utterances separated by blank lines.

    Each block opens with a ``# ID`` comment; untimed units use ``-`` for the
    frame indices and a word annotation follows the label.
    """
    blocks = []
    for uid, transcript in transcripts:
        lines = [f"# {uid}"]
        for unit in transcript.units:
            start = "-" if unit.start is None else str(unit.start)
            end = "-" if unit.end is None else str(unit.end)
            line = f"{start} {end} {unit.label}"
            if unit.word is not None:
                line += f" {unit.word}"
            lines.append(line)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def load_segments(text: str, source: str = "") -> List[Tuple[str, Transcript]]:
    result: List[Tuple[str, Transcript]] = []
    uid: Optional[str] = None
    units: List[TranscriptUnit] = []
    line_number = 0

    def flush() -> None:
        nonlocal uid, units
        if uid is not None or units:
            name = uid if uid is not None else str(len(result) + 1)
            try:
                result.append((name, Transcript(tuple(units))))
            except TranscriptError as e:
                raise ModelFileError(f"Utterance '{name}' ending at {_location(source, line_number)}: {e}")
        uid, units = None, []

    for line_number, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            flush()
            continue
        if line.startswith("#"):
            if units:
                flush()
            uid = line[1:].strip()
            continue
        tokens = line.split()
        if len(tokens) < 3:
            raise ModelFileError(f"Expected 'start end label' ({_location(source, line_number)})")
        try:
            start = None if tokens[0] == "-" else int(tokens[0])
            end = None if tokens[1] == "-" else int(tokens[1])
        except ValueError:
            raise ModelFileError(f"Frame indices must be integers or '-' ({_location(source, line_number)}): {line!r}")
        word = tokens[3] if len(tokens) > 3 else None
        units.append(TranscriptUnit(tokens[2], start, end, word))
    flush()
    return result
