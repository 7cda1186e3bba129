from typing import Dict, Sequence, Tuple

import numpy as np
import pytest

from viseme_toolkit.corpus import generate_corpus
from viseme_toolkit.hmm import GmmHmm, MixtureState, ModelSet
from viseme_toolkit.models import RecipeConfig, SyntheticSpec
from viseme_toolkit.viseme_map import load_dictionary, standard_map

RAVEN_DICTIONARY = """\
;;; a few entries in CMU layout
RAVEN  r ey v ax n
NEVERMORE  n eh v er m ao r
QUOTH  k w ow th
THE  dh ax
THE(2)  dh iy
"""


@pytest.fixture
def standard():
    return standard_map()


@pytest.fixture
def raven_text():
    return RAVEN_DICTIONARY


@pytest.fixture
def raven_dict(standard):
    return load_dictionary(RAVEN_DICTIONARY, standard.inventory)


@pytest.fixture
def small_spec():
    return SyntheticSpec(
        n_classes=3,
        dim=3,
        separation=8.0,
        states_per_class=2,
        min_frames=3,
        max_frames=5,
        silence_min_frames=4,
        silence_max_frames=6,
        n_lines=16,
        min_words=2,
        max_words=3,
        vocabulary_size=5,
        min_word_phones=1,
        max_word_phones=3,
        seed=11,
    )


@pytest.fixture
def small_corpus(small_spec):
    return generate_corpus(small_spec)


@pytest.fixture
def quick_recipe():
    return RecipeConfig(
        n_states=2,
        n_mix=1,
        r1=1,
        r2=1,
        r3=1,
        threshold=0,
        test_size=4,
        n_folds=2,
        seed=3,
    )


def left_to_right(stay: Sequence[float]) -> np.ndarray:
    n = len(stay)
    trans = np.zeros((n + 2, n + 2))
    trans[0, 1] = 1.0
    for i, p in enumerate(stay, 1):
        trans[i, i] = p
        trans[i, i + 1] = 1.0 - p
    return trans


@pytest.fixture
def build_models():
    """Factory for single-Gaussian model sets: label -> [(mean, variance, stay), ...]"""

    def build(spec: Dict[str, Sequence[Tuple[Sequence[float], Sequence[float], float]]]) -> ModelSet:
        models = {}
        dim = None
        for label, states in spec.items():
            mixtures = []
            for mean, variance, _ in states:
                dim = len(mean)
                mixtures.append(MixtureState(np.ones(1), np.array([mean]), np.array([variance])))
            models[label] = GmmHmm(label, left_to_right([s[2] for s in states]), mixtures)
        assert dim is not None
        ones = np.ones(dim)
        return ModelSet(models, dim, np.zeros(dim), ones, ones * 1e-6)

    return build
