import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viseme_toolkit.errors import NetworkError
from viseme_toolkit.language_model import (
    SENTENCE_END,
    SENTENCE_START,
    build_network,
    estimate_bigram,
    floor_row,
    linear_network,
    load_network,
    save_network,
)

VDICT = {"A": [("v01",)], "B": [("v02", "v03")], "C": [("v04",), ("v05",)]}


def test_maximum_likelihood_counts():
    lm = estimate_bigram([["A", "B"], ["A", "B"]])
    assert lm.probability("A", "B") == pytest.approx(1.0)
    assert lm.probability("B", SENTENCE_END) == pytest.approx(1.0)
    assert lm.probability(SENTENCE_START, "A") == pytest.approx(1.0)


def test_split_successors():
    lm = estimate_bigram([["a", "b"], ["A", "C"]])
    assert lm.probability("A", "B") == pytest.approx(0.5)
    assert lm.probability("A", "C") == pytest.approx(0.5)
    assert lm.vocab == ["A", "B", "C"]


def test_floored_rows():
    lm = estimate_bigram([["A", "B"], ["A", "C"]], floor=0.01)
    assert lm.probability("A", "B") == pytest.approx(0.49)
    assert lm.probability("A", "A") == pytest.approx(0.01)
    assert lm.probability("A", SENTENCE_END) == pytest.approx(0.01)
    assert lm.probability("B", SENTENCE_END) == pytest.approx(0.97)
    assert lm.probability(SENTENCE_START, "A") == pytest.approx(0.98)
    for predecessor in [SENTENCE_START, *lm.vocab]:
        assert sum(lm.row(predecessor).values()) == pytest.approx(1.0, abs=1e-9)
    lm.check()


def test_explicit_vocabulary_gets_uniform_row():
    lm = estimate_bigram([["A"]], floor=0.01, vocabulary=["A", "Z"])
    assert lm.row("Z") == pytest.approx({"A": 1 / 3, "Z": 1 / 3, SENTENCE_END: 1 / 3})


def test_estimation_errors():
    with pytest.raises(NetworkError):
        estimate_bigram([[], []])
    with pytest.raises(NetworkError):
        estimate_bigram([["A", "B", "C"]], floor=0.3)


@st.composite
def rows_with_floor(draw):
    values = draw(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2, max_size=8))
    if sum(values) < 1e-6:
        values[0] = 1.0
    floor = draw(st.floats(min_value=0.0, max_value=0.99 / len(values)))
    return np.array(values) / sum(values), floor


@given(rows_with_floor())
@settings(max_examples=200, deadline=None)
def test_floor_row_is_stochastic(case):
    row, floor = case
    floored = floor_row(row, floor)
    assert floored.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(floored >= floor - 1e-12)


def test_single_word_network():
    network = build_network(estimate_bigram([["A"]]), VDICT, sp_optional=False)
    assert sorted((a, b) for a, b, _ in network.arcs) == [("<s>", "A"), ("A", "</s>")]
    assert all(lp == 0.0 for _, _, lp in network.arcs)
    assert network.expansions[SENTENCE_START] == [("sil",)]


def test_arc_weights_are_model_log_probabilities():
    lm = estimate_bigram([["A", "B"], ["B", "C", "A"]], floor=0.01)
    network = build_network(lm, VDICT)
    assert {(a, b): lp for a, b, lp in network.arcs} == lm.logp


def test_short_pause_variants():
    network = build_network(estimate_bigram([["C"]]), VDICT)
    assert network.expansions["C"] == [("v04",), ("v05",), ("v04", "sp"), ("v05", "sp")]


def test_missing_expansion_names_word():
    with pytest.raises(NetworkError, match="B"):
        build_network(estimate_bigram([["A", "B"]]), {"A": [("v01",)]})


def test_unreachable_words_dropped():
    lm = estimate_bigram([["A", "B"]], vocabulary=["C"])
    # C has no incoming arc without a floor
    network = build_network(lm, VDICT)
    assert "C" not in network.nodes
    assert "C" not in network.expansions


def test_serialization_is_canonical():
    lm = estimate_bigram([["A", "B"], ["C", "A"]], floor=0.001)
    first = save_network(build_network(lm, VDICT))
    assert save_network(build_network(lm, VDICT)) == first
    assert save_network(load_network(first)) == first


def test_linear_network_follows_words():
    network = linear_network(["a", "B", "A"], VDICT, sp_optional=False, boundary_silence=False)
    assert [(a, b) for a, b, _ in network.arcs] == [
        ("<s>", "1:A"),
        ("1:A", "2:B"),
        ("2:B", "3:A"),
        ("3:A", "</s>"),
    ]
    assert network.word_of("3:A") == "A"
    assert network.expansions[SENTENCE_END] == [()]
