"""Client-side secret tokenizer: a seeded uniform permutation of indices.

The permutation is persisted as (size, seed) only and regenerated on load,
so the forward and inverse tables can never desynchronize and the secret
stays 12 bytes. One-hot vectors are represented as indices throughout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, FormatError, IoError, UnknownTokenError, UnsegmentableError
from .vocab import Vocabulary

PERM_MAGIC = b"NPRM"
PERM_VERSION = 1


@dataclass(frozen=True)
class TokenPermutation:
    """Bijection original token index -> local index, plus its inverse."""

    size: int
    seed: int
    forward: np.ndarray
    inverse: np.ndarray

    def __post_init__(self):
        fwd = np.asarray(self.forward, dtype=np.int64)
        inv = np.asarray(self.inverse, dtype=np.int64)
        fwd.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "inverse", inv)
        if len(fwd) != self.size or len(inv) != self.size:
            raise ArgumentError("permutation arrays do not match size")
        if not np.array_equal(fwd[inv], np.arange(self.size)):
            raise ArgumentError("inverse is not the inverse of forward")


def generate_permutation(size: int, seed: int) -> TokenPermutation:
    """Fisher-Yates shuffle of [0, size) driven by a seeded generator."""
    if size < 1:
        raise ArgumentError("size must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    forward = np.arange(size, dtype=np.int64)
    for i in range(size - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        forward[i], forward[j] = forward[j], forward[i]
    inverse = np.empty(size, dtype=np.int64)
    inverse[forward] = np.arange(size, dtype=np.int64)
    return TokenPermutation(size=size, seed=int(seed), forward=forward, inverse=inverse)


def segment(text: str, vocab: Vocabulary) -> list[str]:
    """Greedy longest-match segmentation, scanning left to right.

    Whitespace is matchable when present in the vocabulary and skipped
    otherwise; any other unmatchable character raises UnsegmentableError
    with its byte offset.
    """
    tokens_by_len = sorted({len(t) for t in vocab.tokens}, reverse=True)
    token_set = set(vocab.tokens)
    out: list[str] = []
    i = 0
    while i < len(text):
        match = None
        for tlen in tokens_by_len:
            cand = text[i:i + tlen]
            if len(cand) == tlen and cand in token_set:
                match = cand
                break
        if match is None:
            if text[i].isspace():
                i += 1
                continue
            raise UnsegmentableError(len(text[:i].encode("utf-8")))
        out.append(match)
        i += len(match)
    return out


def encode(tokens, perm: TokenPermutation, vocab: Vocabulary) -> list[int]:
    """Map token strings to local indices through the secret permutation."""
    if perm.size != vocab.size:
        raise ArgumentError("permutation size does not match vocabulary")
    out = []
    for tok in tokens:
        if tok not in vocab:
            raise UnknownTokenError(tok)
        out.append(int(perm.forward[vocab.index_of(tok)]))
    return out


def decode(indices, perm: TokenPermutation, vocab: Vocabulary) -> list[str]:
    """Map local indices back to token strings."""
    if perm.size != vocab.size:
        raise ArgumentError("permutation size does not match vocabulary")
    out = []
    for idx in indices:
        if not 0 <= idx < perm.size:
            raise IndexError(f"local index {idx} out of range [0, {perm.size})")
        out.append(vocab.tokens[int(perm.inverse[idx])])
    return out


def save_permutation(perm: TokenPermutation, path) -> None:
    data = PERM_MAGIC + struct.pack("<HIQ", PERM_VERSION, perm.size, perm.seed)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_permutation(path) -> TokenPermutation:
    """Regenerate the permutation from its persisted (size, seed)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(data) != 4 + struct.calcsize("<HIQ"):
        raise FormatError("permutation file has wrong length")
    if data[:4] != PERM_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {PERM_MAGIC!r}")
    version, size, seed = struct.unpack_from("<HIQ", data, 4)
    if version != PERM_VERSION:
        raise FormatError(f"unsupported permutation version {version}")
    return generate_permutation(size, seed)
