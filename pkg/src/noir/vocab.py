"""Vocabulary and corpus storage.

A vocabulary pairs an ordered list of unique token strings with a |V| x m
float32 embedding matrix. The on-disk layout is fixed little-endian binary
so audits round-trip bit-exactly across machines:

    magic "NVCB" | version u16 | |V| u32 | m u32
    |V| x (token_len u16, utf-8 bytes)
    |V| * m float32, row-major

Corpora are UTF-8 text, one record per line, TAB-separated fields:
prompt tokens (space separated), code tokens, semicolon-separated test ids,
and an optional 0/1 pass bitmap.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ArgumentError,
    FormatError,
    IoError,
    UnknownTokenError,
    ValidationError,
)

VOCAB_MAGIC = b"NVCB"
VOCAB_VERSION = 1


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token strings plus their |V| x m embedding matrix."""

    tokens: tuple[str, ...]
    embeddings: np.ndarray  # float32, shape (|V|, m)

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float32)
        emb.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) < 2:
            raise ValidationError("vocabulary needs at least 2 tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValidationError("duplicate token strings")
        if emb.ndim != 2 or emb.shape[0] != len(self.tokens):
            raise ValidationError(
                f"embedding matrix shape {emb.shape} does not match "
                f"{len(self.tokens)} tokens")
        if emb.shape[1] < 1:
            raise ValidationError("embeddings need at least 1 feature")
        if not np.all(np.isfinite(emb)):
            raise ValidationError("embeddings contain NaN or Inf")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    def index_of(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise UnknownTokenError(token) from None

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def digest(self) -> bytes:
        """SHA-256 of the canonical serialized form (32 bytes)."""
        return hashlib.sha256(serialize_vocabulary(self)).digest()


@dataclass(frozen=True)
class CorpusRecord:
    """One prompt/code pair with its unit-test ids and optional pass truth."""

    prompt: tuple[str, ...]
    code: tuple[str, ...] = ()
    tests: tuple[str, ...] = ()
    pass_truth: tuple[bool, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "prompt", tuple(self.prompt))
        object.__setattr__(self, "code", tuple(self.code))
        object.__setattr__(self, "tests", tuple(self.tests))
        if self.pass_truth is not None:
            object.__setattr__(self, "pass_truth", tuple(bool(b) for b in self.pass_truth))
        if len(self.prompt) < 1:
            raise ValidationError("prompt must contain at least one token")
        if self.pass_truth is not None and len(self.pass_truth) != len(self.tests):
            raise ValidationError("pass bitmap length does not match test count")


def serialize_vocabulary(vocab: Vocabulary) -> bytes:
    buf = io.BytesIO()
    buf.write(VOCAB_MAGIC)
    buf.write(struct.pack("<HII", VOCAB_VERSION, vocab.size, vocab.dim))
    for tok in vocab.tokens:
        raw = tok.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValidationError(f"token longer than 65535 bytes: {tok[:32]!r}...")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
    buf.write(np.ascontiguousarray(vocab.embeddings, dtype="<f4").tobytes())
    return buf.getvalue()


def deserialize_vocabulary(data: bytes) -> Vocabulary:
    view = memoryview(data)
    if len(view) < 14:
        raise FormatError("vocabulary file shorter than header")
    if bytes(view[:4]) != VOCAB_MAGIC:
        raise FormatError(f"bad magic {bytes(view[:4])!r}, expected {VOCAB_MAGIC!r}")
    version, size, dim = struct.unpack_from("<HII", view, 4)
    if version != VOCAB_VERSION:
        raise FormatError(f"unsupported vocabulary version {version}")
    off = 14
    tokens = []
    for _ in range(size):
        if off + 2 > len(view):
            raise FormatError("truncated token table")
        (tlen,) = struct.unpack_from("<H", view, off)
        off += 2
        if off + tlen > len(view):
            raise FormatError("truncated token string")
        tokens.append(bytes(view[off:off + tlen]).decode("utf-8"))
        off += tlen
    body = len(view) - off
    expected = 4 * size * dim
    if body != expected:
        raise FormatError(
            f"embedding body is {body} bytes, header implies {expected}")
    emb = np.frombuffer(view, dtype="<f4", count=size * dim, offset=off)
    emb = emb.reshape(size, dim).copy()
    return Vocabulary(tuple(tokens), emb)


def load_vocabulary(path) -> Vocabulary:
    """Load and validate a vocabulary file."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return deserialize_vocabulary(data)


def save_vocabulary(vocab: Vocabulary, path) -> None:
    """Write a vocabulary; load_vocabulary(path) returns an identical object."""
    data = serialize_vocabulary(vocab)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def synth_vocabulary(size: int, dim: int, seed: int, scale: float = 1.0) -> Vocabulary:
    """Deterministic synthetic vocabulary: uniform features in [-scale, scale].

    Uniform rather than Gaussian features keep every per-token distance gap
    bounded, which makes budget feasibility easy to reason about in tests.
    """
    if size < 2:
        raise ArgumentError("size must be >= 2")
    if dim < 1:
        raise ArgumentError("dim must be >= 1")
    if not (scale > 0):
        raise ArgumentError("scale must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    emb = rng.uniform(-scale, scale, size=(size, dim)).astype(np.float32)
    width = max(4, len(str(size - 1)))
    tokens = tuple(f"tok{i:0{width}d}" for i in range(size))
    return Vocabulary(tokens, emb)


def _parse_corpus_line(line: str, vocab: Vocabulary | None, lineno: int) -> CorpusRecord:
    fields = line.split("\t")
    if not 1 <= len(fields) <= 4:
        raise FormatError(f"line {lineno}: expected 1-4 TAB-separated fields, got {len(fields)}")
    prompt = tuple(fields[0].split())
    code = tuple(fields[1].split()) if len(fields) > 1 else ()
    tests = tuple(t for t in fields[2].split(";") if t) if len(fields) > 2 else ()
    bitmap = None
    if len(fields) > 3 and fields[3].strip():
        bits = fields[3].strip()
        if set(bits) - {"0", "1"}:
            raise FormatError(f"line {lineno}: pass bitmap must be 0/1 characters")
        bitmap = tuple(c == "1" for c in bits)
    if vocab is not None:
        for tok in (*prompt, *code):
            if tok not in vocab:
                raise UnknownTokenError(tok, line=lineno)
    try:
        return CorpusRecord(prompt, code, tests, bitmap)
    except ValidationError as exc:
        raise FormatError(f"line {lineno}: {exc}") from exc


def load_corpus(path, vocab: Vocabulary | None = None) -> list[CorpusRecord]:
    """Load corpus records, resolving every token against vocab when given."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        records.append(_parse_corpus_line(line, vocab, lineno))
    return records


def save_corpus(records, path) -> None:
    lines = []
    for rec in records:
        fields = [" ".join(rec.prompt), " ".join(rec.code), ";".join(rec.tests)]
        if rec.pass_truth is not None:
            fields.append("".join("1" if b else "0" for b in rec.pass_truth))
        lines.append("\t".join(fields))
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
