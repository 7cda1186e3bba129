"""Viseme recognition toolkit.

Phoneme-to-viseme maps, linear shape and appearance models, Gaussian-mixture
HMM training and decoding over bigram word networks, recognition scoring and
per-viseme analysis, plus a synthetic corpus and cross-validation recipe.
"""

__version__ = "0.1.0"
