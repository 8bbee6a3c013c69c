"""Desk-scale split-inference privacy toolkit.

Core pieces: vocabularies with embedding matrices, the adaptive randomized
response mechanism with exact indistinguishability audits, the secret
tokenizer permutation, closed-form reconstruction-risk bounds, adversary
games and metrics, and the framed client/cloud split protocol.
"""

__version__ = "0.1.0"

from . import arr, adversary, bounds, ltokenizer, metrics, vocab
from .errors import NoirError

__all__ = ["arr", "adversary", "bounds", "ltokenizer", "metrics", "vocab",
           "NoirError", "__version__"]
