import numpy as np
import pytest

from viseme_toolkit.errors import DimensionMismatchError, InputFileError, ModelFileError
from viseme_toolkit.features import (
    load_frames,
    load_observations,
    load_segments,
    read_text,
    save_frames,
    save_segments,
)
from viseme_toolkit.viseme_map import Transcript, TranscriptUnit


def test_frames_are_lossless():
    frames = np.random.default_rng(0).normal(size=(7, 3)) * 1e3
    loaded, rate = load_frames(save_frames(frames, 29.97))
    assert np.array_equal(loaded, frames)
    assert rate == 29.97


def test_frame_dimension_checks():
    text = save_frames(np.zeros((2, 4)))
    with pytest.raises(DimensionMismatchError) as info:
        load_frames(text, expected_dim=3)
    assert info.value.expected == 3
    with pytest.raises(DimensionMismatchError):
        load_frames("#dim 2 rate 60\n1 2\n1 2 3\n")


def test_frame_header_required():
    with pytest.raises(ModelFileError):
        load_frames("1 2 3\n")


def test_observations():
    data = load_observations("# landmarks\n1 2 3\n4 5 6  # second frame\n")
    assert data.shape == (2, 3)
    with pytest.raises(DimensionMismatchError):
        load_observations("1 2 3\n4 5\n")


def test_missing_file(tmp_path):
    with pytest.raises(InputFileError) as info:
        read_text(tmp_path / "absent.txt")
    assert info.value.exit_code == 2
    assert "absent.txt" in str(info.value)


def test_segments_round_trip():
    timed = Transcript(
        (TranscriptUnit("v18", 0, 4), TranscriptUnit("v07", 4, 9, "RAVEN"), TranscriptUnit("v11", 9, 12))
    )
    untimed = Transcript.from_labels(["v01", "v02"])
    text = save_segments([("L001", timed), ("L002", untimed)])
    loaded = load_segments(text)
    assert loaded == [("L001", timed), ("L002", untimed)]
    assert save_segments(loaded) == text


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("# L1\nzero 5 v01\n", "line 2"),
        ("# L1\n0 5 v01\n3 8 v02\n", "overlaps"),
        ("# L1\n0 - v01\n", "partial timing"),
        ("# L1\n0 5\n", "line 2"),
    ],
)
def test_malformed_label_files(text, fragment):
    with pytest.raises(ModelFileError) as info:
        load_segments(text, "hyp.lab")
    assert "hyp.lab" in str(info.value)
    assert fragment in str(info.value)


def test_non_numeric_values_name_the_line():
    with pytest.raises(ModelFileError, match="L1.frames, line 3"):
        load_frames("#dim 2 rate 60\n1 2\n1 x\n", source="L1.frames")
    with pytest.raises(ModelFileError, match="line 2"):
        load_observations("1 2\n3 four\n")
