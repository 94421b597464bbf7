"""Sparse random potentials: geometry, certification, lemma oracles and spectral probes."""

from ._sparseloc import *  # noqa: F401,F403
from ._sparseloc import __version__  # noqa: F401
