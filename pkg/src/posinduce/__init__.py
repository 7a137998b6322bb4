"""Unsupervised part-of-speech induction with Gaussian emissions over word embeddings.

The package provides two tag-induction models whose emissions are
pre-trained word vectors, plus the word-identity baseline:

* :class:`GaussianHMM` and :class:`MultinomialHMM`, trained with Baum-Welch.
* :class:`CRFAutoencoder`, a CRF encoder with a Gaussian (or categorical)
  reconstruction of each token, trained by block coordinate ascent.

Supporting modules handle corpus and embedding I/O (:mod:`posinduce.corpus`,
:mod:`posinduce.embeddings`), chain inference (:mod:`posinduce.lattice`),
evaluation (:mod:`posinduce.metrics`) and the ``posinduce`` command line
(:mod:`posinduce.cli`).
"""

from .crfae import CRFAutoencoder
from .hmm import GaussianHMM, MultinomialHMM

__version__ = "0.1.0"

__all__ = ["CRFAutoencoder", "GaussianHMM", "MultinomialHMM", "__version__"]
