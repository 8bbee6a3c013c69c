"""Deterministic desk-scale fixtures shared by the acceptance suite and CLI.

Everything here is a pure function of hard-coded seeds so the reproduction
suite measures the same objects on every checkout.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .arr import BudgetPlan, DenominatorPolicy, IndVocab, build_indvocab, load_indvocab, save_indvocab
from .errors import MissingFixture
from .vocab import CorpusRecord, Vocabulary, load_corpus, load_vocabulary, save_corpus, save_vocabulary

FIXTURE_VOCAB_SIZE = 6
FIXTURE_DIM = 3
FIXTURE_VOCAB_SEED = 42
FIXTURE_VOCAB_SCALE = 0.25
FIXTURE_BUILD_SEED = 7
FIXTURE_EPS_LEVELS = (0.5, 1.0, 2.0)       # per-feature audit budgets
GAME_EPS_LEVELS = (2.0, 2.5, 3.0)           # per-feature game budgets
MONOTONE_EPS_LEVELS = (0.5, 1.0, 2.0, 5.0, 20.0)

VOCAB_FILE = "vocab.nvcb"
INDVOCAB_FILE = "indvocab.nind"
CORPUS_FILE = "corpus.tsv"


def fixture_vocab() -> Vocabulary:
    from .vocab import synth_vocabulary
    return synth_vocabulary(FIXTURE_VOCAB_SIZE, FIXTURE_DIM,
                            FIXTURE_VOCAB_SEED, FIXTURE_VOCAB_SCALE)


def fixture_plan(eps_per_feature: float) -> BudgetPlan:
    return BudgetPlan.uniform(eps_per_feature * FIXTURE_DIM, FIXTURE_DIM)


def game_prompts(vocab: Vocabulary) -> list[tuple[str, ...]]:
    """Repetition-heavy 8-token prompts: two tokens alternating.

    The closed-form prompt bound has no combinatorial slack, so its
    Monte-Carlo dominance regime requires prompts with few distinct tokens;
    alternating pairs model code-like token reuse.
    """
    pairs = [(0, 3), (1, 4), (2, 5)]
    return [tuple(vocab.tokens[a] if j % 2 == 0 else vocab.tokens[b]
                  for j in range(8)) for a, b in pairs]


def tuning_corpus(vocab: Vocabulary, n_records: int = 20, seed: int = 1) -> list[CorpusRecord]:
    rng = np.random.Generator(np.random.PCG64(seed))
    records = []
    for _ in range(n_records):
        prompt = tuple(vocab.tokens[i] for i in rng.integers(0, vocab.size, 5))
        code = tuple(vocab.tokens[i] for i in rng.integers(0, vocab.size, 4))
        records.append(CorpusRecord(prompt, code, (f"u{k}" for k in range(2)),
                                    (True, bool(rng.integers(0, 2)))))
    return records


@dataclass(frozen=True)
class FrequencyFixture:
    """Synthetic template-prefixed corpus for the frequency-analysis games."""

    vocab: Vocabulary
    indvocab: IndVocab
    template: tuple[str, ...]
    client_corpus: list[list[str]]
    public_corpus: list[list[str]]
    body_tokens: tuple[str, ...]


def frequency_fixture(n_prompts: int = 200, body_len: int = 12) -> FrequencyFixture:
    from .vocab import synth_vocabulary
    vocab = synth_vocabulary(32, 4, 99, 0.5)
    template = vocab.tokens[:5]
    body_tokens = vocab.tokens[5:]
    weights = np.array([1.0 / (r + 1) for r in range(len(body_tokens))])
    weights /= weights.sum()

    def corpus(seed: int) -> list[list[str]]:
        rng = np.random.Generator(np.random.PCG64(seed))
        out = []
        for _ in range(n_prompts):
            body = [body_tokens[i]
                    for i in rng.choice(len(body_tokens), body_len, p=weights)]
            out.append(list(template) + body)
        return out

    ind = build_indvocab(vocab, BudgetPlan.uniform(8.0, 4), 55)
    return FrequencyFixture(vocab=vocab, indvocab=ind, template=template,
                            client_corpus=corpus(1), public_corpus=corpus(2),
                            body_tokens=body_tokens)


def write_fixture_files(directory) -> None:
    """Materialize the on-disk fixtures consumed by the reproduction CLI."""
    os.makedirs(directory, exist_ok=True)
    vocab = fixture_vocab()
    save_vocabulary(vocab, os.path.join(directory, VOCAB_FILE))
    ind = build_indvocab(vocab, fixture_plan(2.0), FIXTURE_BUILD_SEED,
                         DenominatorPolicy.EXCLUDE_SELF)
    save_indvocab(ind, os.path.join(directory, INDVOCAB_FILE))
    save_corpus(tuning_corpus(vocab), os.path.join(directory, CORPUS_FILE))


def load_fixture_files(directory) -> tuple[Vocabulary, IndVocab, list[CorpusRecord]]:
    paths = {name: os.path.join(directory, name)
             for name in (VOCAB_FILE, INDVOCAB_FILE, CORPUS_FILE)}
    for name, path in paths.items():
        if not os.path.exists(path):
            raise MissingFixture(f"fixture {name} not found in {directory}")
    vocab = load_vocabulary(paths[VOCAB_FILE])
    ind = load_indvocab(paths[INDVOCAB_FILE], vocab)
    corpus = load_corpus(paths[CORPUS_FILE], vocab)
    return vocab, ind, corpus
