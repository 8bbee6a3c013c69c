"""Similarity, leakage, and functionality metrics plus perturbation analyses.

All metrics operate on pre-tokenized sequences and are pure; unit-test
execution is externalized behind a pluggable shell runner so the metric
itself never interprets code.
"""

from __future__ import annotations

import keyword
import math
import re
import subprocess
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    ArgumentError,
    DimensionMismatch,
    EmptySequence,
    FormatError,
    IoError,
    LengthMismatch,
)
from .vocab import Vocabulary


def _ngrams(seq, n: int) -> Counter:
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def bleu(candidate, reference, n: int = 1) -> float:
    """Modified n-gram precision times brevity penalty, scaled to [0, 100].

    A single gram order (unigram by default), not a cumulative mean. The
    brevity penalty is exp(1 - |ref|/|cand|) when the candidate is shorter
    than the reference, else 1.
    """
    candidate, reference = list(candidate), list(reference)
    if n < 1:
        raise ArgumentError("n must be >= 1")
    if not candidate or not reference:
        raise EmptySequence("bleu needs nonempty sequences")
    cand_grams = _ngrams(candidate, n)
    ref_grams = _ngrams(reference, n)
    total = sum(cand_grams.values())
    if total == 0:
        return 0.0
    overlap = sum(min(c, ref_grams[g]) for g, c in cand_grams.items())
    precision = overlap / total
    bp = 1.0 if len(candidate) >= len(reference) else math.exp(1 - len(reference) / len(candidate))
    return 100.0 * precision * bp


def rouge_f1(candidate, reference, n: int = 1) -> float:
    """F1 of n-gram multiset recall and precision, in [0, 1]."""
    candidate, reference = list(candidate), list(reference)
    if n < 1:
        raise ArgumentError("n must be >= 1")
    if not candidate or not reference:
        raise EmptySequence("rouge needs nonempty sequences")
    cand_grams = _ngrams(candidate, n)
    ref_grams = _ngrams(reference, n)
    overlap = sum(min(c, ref_grams[g]) for g, c in cand_grams.items())
    cand_total = sum(cand_grams.values())
    ref_total = sum(ref_grams.values())
    if overlap == 0 or cand_total == 0 or ref_total == 0:
        return 0.0
    precision = overlap / cand_total
    recall = overlap / ref_total
    return 2 * precision * recall / (precision + recall)


def crt(truth, recon) -> float:
    """Fraction of correctly reconstructed tokens: multiset intersection
    over the truth length."""
    truth, recon = list(truth), list(recon)
    if not truth:
        raise EmptySequence("crt needs a nonempty truth sequence")
    overlap = sum((Counter(truth) & Counter(recon)).values())
    return overlap / len(truth)


_IMPORT_RE = re.compile(r"^\s*import\s+(.+)$")
_FROM_RE = re.compile(r"^\s*from\s+([\w.]+)\s+import\s+(.+)$")
_DEF_RE = re.compile(r"^\s*def\s+(\w+)\s*\(")
_ASSIGN_RE = re.compile(r"^\s*([\w\s,]+?)\s*=(?!=)")
_IDENT_RE = re.compile(r"^[A-Za-z_]\w*$")


def _sensitive_identifiers(code: str) -> set[str]:
    """Import targets, function names, and assignment targets of code."""
    idents: set[str] = set()
    for line in code.splitlines():
        m = _FROM_RE.match(line)
        if m:
            idents.add(m.group(1).split(".")[0])
            for part in m.group(2).split(","):
                name = part.strip().split(" as ")[0].strip()
                if _IDENT_RE.match(name):
                    idents.add(name)
            continue
        m = _IMPORT_RE.match(line)
        if m:
            for part in m.group(1).split(","):
                name = part.strip().split(" as ")[0].strip().split(".")[0]
                if _IDENT_RE.match(name):
                    idents.add(name)
            continue
        m = _DEF_RE.match(line)
        if m:
            idents.add(m.group(1))
            continue
        m = _ASSIGN_RE.match(line)
        if m:
            for part in m.group(1).split(","):
                name = part.strip()
                if _IDENT_RE.match(name) and not keyword.iskeyword(name):
                    idents.add(name)
    return idents


def leak(truth_code: str, recon_code: str) -> int:
    """1 iff any sensitive identifier of the truth appears as a whole token
    in the reconstruction.

    Sensitive identifiers are imported package names, function names, and
    assignment targets, extracted with a line scanner; unparseable lines are
    skipped. Whole-token matching avoids false positives on one-letter
    substrings.
    """
    idents = _sensitive_identifiers(truth_code)
    if not idents:
        return 0
    recon_tokens = set(re.findall(r"[A-Za-z_]\w*", recon_code))
    return int(bool(idents & recon_tokens))


def fusi(truth_row, recon_row) -> float | None:
    """Fraction of truth-passed unit tests also passed by the reconstruction.

    None (undefined) when the truth passes no test; callers exclude such
    records from functionality rates.
    """
    truth_row, recon_row = list(truth_row), list(recon_row)
    if len(truth_row) != len(recon_row):
        raise LengthMismatch(
            f"pass vectors differ in length: {len(truth_row)} vs {len(recon_row)}")
    denom = sum(1 for t in truth_row if t)
    if denom == 0:
        return None
    both = sum(1 for t, r in zip(truth_row, recon_row) if t and r)
    return both / denom


def pass_at_r(n: int, c: int, r: int) -> float:
    """Probability that at least one of r drawn candidates is correct.

    Exact rational evaluation of 1 - C(n-c, r)/C(n, r), with C(a, b) = 0
    for a < b.
    """
    if not (0 <= c <= n):
        raise ArgumentError("need 0 <= c <= n")
    if not (1 <= r <= n):
        raise ArgumentError("need 1 <= r <= n")
    miss = math.comb(n - c, r) if n - c >= r else 0
    return float(1 - Fraction(miss, math.comb(n, r)))


_PY_KEYWORDS = frozenset(keyword.kwlist)
KEYWORD_WEIGHT = 5.0


def _weighted_unigram_bleu(candidate, reference) -> float:
    cand = Counter(candidate)
    ref = Counter(reference)
    weight = lambda tok: KEYWORD_WEIGHT if tok in _PY_KEYWORDS else 1.0
    total = sum(weight(t) * c for t, c in cand.items())
    if total == 0:
        return 0.0
    overlap = sum(weight(t) * min(c, ref[t]) for t, c in cand.items())
    bp = 1.0 if len(candidate) >= len(reference) else math.exp(1 - len(reference) / len(candidate))
    return 100.0 * (overlap / total) * bp


def codebleu_simple(candidate, reference) -> float:
    """Simplified code-similarity score in [0, 100].

    0.5 * mean(unigram, bigram bleu) + 0.5 * keyword-weighted unigram bleu
    with language keywords weighted 5x. Stands in for full syntax/dataflow
    matching at desk scale; consumers surface this substitution in report
    headers.
    """
    candidate, reference = list(candidate), list(reference)
    if not candidate or not reference:
        raise EmptySequence("codebleu needs nonempty sequences")
    b1 = bleu(candidate, reference, 1)
    b2 = bleu(candidate, reference, 2) if len(candidate) >= 2 and len(reference) >= 2 else 0.0
    return 0.5 * (b1 + b2) / 2 + 0.5 * _weighted_unigram_bleu(candidate, reference)


# ---------------------------------------------------------------------------
# pass matrices and the external test runner

@dataclass(frozen=True)
class PassMatrix:
    """Candidates x unit tests pass/fail grid."""

    cells: np.ndarray  # bool, shape (n_candidates, n_tests)

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        if cells.ndim != 2:
            raise ArgumentError("pass matrix must be 2-D")

    def row(self, i: int) -> tuple[bool, ...]:
        return tuple(bool(b) for b in self.cells[i])


def save_pass_matrix(matrix: PassMatrix, path) -> None:
    lines = ["".join("1" if b else "0" for b in row) for row in matrix.cells]
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_pass_matrix(path) -> PassMatrix:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise FormatError("empty pass matrix file")
    width = len(lines[0])
    rows = []
    for i, ln in enumerate(lines, start=1):
        if len(ln) != width or set(ln) - {"0", "1"}:
            raise FormatError(f"line {i}: rows must be equal-length 0/1 strings")
        rows.append([c == "1" for c in ln])
    return PassMatrix(np.array(rows, dtype=bool))


@dataclass(frozen=True)
class RunnerConfig:
    """Shell command template with {code_file} and {test_id} placeholders."""

    command_template: str
    timeout_seconds: float = 10.0
    max_parallel: int = 4


def run_tests(config: RunnerConfig, code_file: str, test_ids) -> tuple[bool, ...]:
    """Run each test id against one code file; exit code 0 means pass.

    Timeouts and launch failures count as failures, never as errors.
    """
    def one(test_id: str) -> bool:
        cmd = config.command_template.format(code_file=code_file, test_id=test_id)
        try:
            proc = subprocess.run(cmd, shell=True, capture_output=True,
                                  timeout=config.timeout_seconds)
            return proc.returncode == 0
        except (subprocess.TimeoutExpired, OSError):
            return False

    ids = list(test_ids)
    with ThreadPoolExecutor(max_workers=max(1, config.max_parallel)) as pool:
        return tuple(pool.map(one, ids))


# ---------------------------------------------------------------------------
# embedding perturbation analyses

@dataclass(frozen=True)
class PerturbationStats:
    """Embedding-level movement of a randomized vocabulary over a corpus."""

    token_string_change_fraction: float
    embedding_change_fraction: float
    l1_distances: tuple[float, ...]
    bigram_cos_changes: tuple[float, ...]
    pairwise_cos_changes: tuple[float, ...]

    @property
    def mean_l1(self) -> float:
        return float(np.mean(self.l1_distances)) if self.l1_distances else 0.0


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _stats_for(original: np.ndarray, randomized: np.ndarray, corpus_indices,
               pair_samples: int, rng: np.random.Generator,
               tokens_changed: float) -> PerturbationStats:
    orig = original.astype(np.float64)
    rand = randomized.astype(np.float64)
    l1, bigram, changed, total = [], [], 0, 0
    for prompt in corpus_indices:
        for t in prompt:
            total += 1
            if not np.array_equal(original[t], randomized[t]):
                changed += 1
            l1.append(float(np.abs(rand[t] - orig[t]).sum()))
        for a, b in zip(prompt[:-1], prompt[1:]):
            bigram.append(abs(_cos(orig[a], orig[b]) - _cos(rand[a], rand[b])))
    n = len(original)
    pairwise = []
    for _ in range(pair_samples):
        a, b = rng.integers(0, n), rng.integers(0, n)
        while b == a:
            b = rng.integers(0, n)
        pairwise.append(abs(_cos(orig[a], orig[b]) - _cos(rand[a], rand[b])))
    return PerturbationStats(
        token_string_change_fraction=tokens_changed,
        embedding_change_fraction=changed / total if total else 0.0,
        l1_distances=tuple(l1),
        bigram_cos_changes=tuple(bigram),
        pairwise_cos_changes=tuple(pairwise))


def perturbation_stats(original: Vocabulary, randomized, corpus,
                       pair_samples: int = 200, laplace_scale: float | None = None,
                       seed: int = 0) -> tuple[PerturbationStats, PerturbationStats | None]:
    """Movement statistics between a vocabulary and its randomized form.

    ``randomized`` provides `.randomized_embeddings` (or is a raw matrix) of
    the same shape. Reported per prompt-token occurrence over the corpus:
    whether the full embedding changed in any feature, the L1 distance, and
    the absolute change in cosine similarity of adjacent token pairs, plus
    pairwise cosine changes over sampled token pairs. Token strings are
    never altered by the randomization, so that fraction is 0 on the main
    stats. With ``laplace_scale`` set, a second stats object describes an
    i.i.d. Laplace(scale) baseline applied to every feature.
    """
    rand_matrix = getattr(randomized, "randomized_embeddings", randomized)
    rand_matrix = np.asarray(rand_matrix, dtype=np.float32)
    if rand_matrix.shape != original.embeddings.shape:
        raise DimensionMismatch(
            f"randomized shape {rand_matrix.shape} vs source {original.embeddings.shape}")
    corpus_indices = [[original.index_of(t) for t in rec.prompt] for rec in corpus]
    rng = np.random.Generator(np.random.PCG64(seed))
    main = _stats_for(original.embeddings, rand_matrix, corpus_indices,
                      pair_samples, rng, tokens_changed=0.0)
    baseline = None
    if laplace_scale is not None:
        if laplace_scale <= 0:
            raise ArgumentError("laplace scale must be positive")
        noise_rng = np.random.Generator(np.random.PCG64(seed + 1))
        noisy = (original.embeddings.astype(np.float64)
                 + noise_rng.laplace(0.0, laplace_scale, original.embeddings.shape))
        baseline = _stats_for(original.embeddings, noisy.astype(np.float32),
                              corpus_indices, pair_samples,
                              np.random.Generator(np.random.PCG64(seed)),
                              tokens_changed=0.0)
    return main, baseline
