import itertools
import math
import sys
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noir.arr import BudgetPlan, build_indvocab
from noir.errors import ArgumentError, EmptySequence, FormatError, LengthMismatch
from noir.metrics import (
    PassMatrix,
    RunnerConfig,
    bleu,
    codebleu_simple,
    crt,
    fusi,
    leak,
    load_pass_matrix,
    pass_at_r,
    perturbation_stats,
    rouge_f1,
    run_tests,
    save_pass_matrix,
)
from noir.vocab import CorpusRecord


# ---------------------------------------------------------------------------
# bleu / rouge

def test_bleu_identity():
    assert bleu(["a", "b", "c"], ["a", "b", "c"]) == 100.0


def test_bleu_half_overlap():
    assert bleu(["a", "b", "c", "d"], ["a", "b", "x", "y"]) == pytest.approx(50.0)


def test_bleu_brevity_penalty():
    score = bleu(["a"], ["a", "b"])
    assert score == pytest.approx(100.0 * math.exp(1 - 2))
    assert score < 100.0


def test_bleu_clipped_counts():
    # candidate repeats a token more often than the reference has it
    assert bleu(["a", "a", "a"], ["a", "b", "c"]) == pytest.approx(100.0 / 3)


def test_bleu_bigram():
    assert bleu(["a", "b", "c"], ["a", "b", "x"], n=2) == pytest.approx(50.0)


def test_bleu_empty_rejected():
    with pytest.raises(EmptySequence):
        bleu([], ["a"])


def test_rouge_identity_and_disjoint():
    assert rouge_f1(["a", "b"], ["a", "b"]) == 1.0
    assert rouge_f1(["a", "b"], ["x", "y"]) == 0.0


def test_rouge_equal_length_overlap_identity():
    rng = np.random.Generator(np.random.PCG64(3))
    for _ in range(100):
        n = int(rng.integers(1, 25))
        a = [f"w{i}" for i in rng.integers(0, 6, n)]
        b = [f"w{i}" for i in rng.integers(0, 6, n)]
        overlap = sum((Counter(a) & Counter(b)).values())
        assert rouge_f1(a, b) == pytest.approx(overlap / n, abs=1e-12)
        assert bleu(a, b) == pytest.approx(100.0 * overlap / n, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=20))
def test_identity_scores_max_out(seq):
    assert bleu(seq, seq) == 100.0
    assert rouge_f1(seq, seq) == 1.0


# ---------------------------------------------------------------------------
# crt

def test_crt_cases():
    assert crt(["a", "b"], ["a", "b"]) == 1.0
    assert crt(["a", "b", "c", "d"], ["a", "b", "x", "y"]) == 0.5
    assert crt(["a", "a", "b"], ["a"]) == pytest.approx(1 / 3)


def test_crt_corpus_mean_recount():
    pairs = [(["a", "b"], ["a", "b"]), (["a", "b"], ["a", "x"]),
             (["a", "b", "c"], ["z", "z", "z"])]
    mean = sum(crt(t, r) for t, r in pairs) / len(pairs)
    assert mean == pytest.approx((1.0 + 0.5 + 0.0) / 3)


# ---------------------------------------------------------------------------
# leak

TRUTH_CODE = """\
import numpy as np
from collections import Counter

def find_first_duplicate(arr):
    seen = set()
    limit = 10
    return -1
"""


def test_leak_function_name_hit():
    assert leak(TRUTH_CODE, "x = find_first_duplicate(y)") == 1


def test_leak_import_hit():
    assert leak(TRUTH_CODE, "uses the numpy package") == 1


def test_leak_assignment_target_hit():
    assert leak(TRUTH_CODE, "the seen set") == 1


def test_leak_no_shared_identifiers():
    assert leak(TRUTH_CODE, "completely unrelated words here") == 0


def test_leak_partial_identifier_is_not_a_hit():
    # a garbled reconstruction containing only "def find" does not leak
    # the full identifier find_first_duplicate
    assert leak(TRUTH_CODE, "def find\n\nsum CONSTRAINT condition") == 0


def test_leak_empty_truth():
    assert leak("", "anything at all") == 0


# ---------------------------------------------------------------------------
# fusi

def test_fusi_identity():
    assert fusi([True, False, True], [True, False, True]) == 1.0


def test_fusi_partial():
    assert fusi([True, True, True], [True, False, True]) == pytest.approx(2 / 3)


def test_fusi_undefined():
    assert fusi([False, False], [True, False]) is None


def test_fusi_length_mismatch():
    with pytest.raises(LengthMismatch):
        fusi([True], [True, False])


def test_fusi_invariant_to_truth_failed_tests():
    truth = [True, False, True, False]
    base = fusi(truth, [True, False, False, False])
    flipped = fusi(truth, [True, True, False, True])  # only failed-truth flips
    assert base == flipped


# ---------------------------------------------------------------------------
# pass@r

def test_pass_at_r_certain():
    assert pass_at_r(2, 2, 1) == 1.0


def test_pass_at_r_half():
    assert pass_at_r(2, 1, 1) == 0.5


def test_pass_at_r_matches_exhaustive_enumeration():
    for n, c, r in ((6, 2, 3), (6, 0, 3), (6, 6, 2), (8, 3, 4)):
        hits = sum(1 for subset in itertools.combinations(range(n), r)
                   if any(i < c for i in subset))
        assert pass_at_r(n, c, r) == pytest.approx(hits / math.comb(n, r), abs=0)


def test_pass_at_r_monotone_and_r1_identity():
    for n in (4, 9):
        for c in range(n + 1):
            assert pass_at_r(n, c, 1) == pytest.approx(c / n)
            for r in range(1, n):
                assert pass_at_r(n, c, r + 1) >= pass_at_r(n, c, r)
            if c < n:
                assert pass_at_r(n, c + 1, 1) >= pass_at_r(n, c, 1)


def test_pass_at_r_validation():
    with pytest.raises(ArgumentError):
        pass_at_r(4, 5, 1)
    with pytest.raises(ArgumentError):
        pass_at_r(4, 2, 0)


# ---------------------------------------------------------------------------
# simplified code similarity

def test_codebleu_identity_is_full_score():
    code = ["def", "f", "(", "x", ")", ":", "return", "x"]
    assert codebleu_simple(code, code) == pytest.approx(100.0)


def test_codebleu_weights_keywords():
    truth = ["def", "f", "(", "x", ")"]
    with_kw = ["def", "g", "(", "y", ")"]
    without_kw = ["run", "g", "(", "y", ")"]
    assert codebleu_simple(with_kw, truth) > codebleu_simple(without_kw, truth)


# ---------------------------------------------------------------------------
# pass matrices and the runner

def test_pass_matrix_roundtrip(tmp_path):
    matrix = PassMatrix(np.array([[True, False], [False, True]]))
    path = tmp_path / "m.pass"
    save_pass_matrix(matrix, path)
    loaded = load_pass_matrix(path)
    assert np.array_equal(loaded.cells, matrix.cells)


def test_pass_matrix_ragged_rejected(tmp_path):
    path = tmp_path / "m.pass"
    path.write_text("10\n101\n", encoding="utf-8")
    with pytest.raises(FormatError):
        load_pass_matrix(path)


def test_runner_exit_codes(tmp_path):
    code_file = tmp_path / "code.py"
    code_file.write_text("value = 41\n", encoding="utf-8")
    config = RunnerConfig(
        command_template=(f"{sys.executable} -c \"exec(open('{{code_file}}').read()); "
                          "raise SystemExit(0 if value == 41 and '{test_id}' == 'ok' else 1)\""),
        timeout_seconds=20.0, max_parallel=2)
    row = run_tests(config, str(code_file), ["ok", "bad", "ok"])
    assert row == (True, False, True)


# ---------------------------------------------------------------------------
# perturbation statistics

def _prompt_corpus(vocab, n=10, length=6, seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    return [CorpusRecord(tuple(vocab.tokens[i] for i in rng.integers(0, vocab.size, length)))
            for _ in range(n)]


def test_perturbation_identity_is_zero(fixture_vocab):
    corpus = _prompt_corpus(fixture_vocab)
    stats, _ = perturbation_stats(fixture_vocab, fixture_vocab.embeddings, corpus)
    assert stats.embedding_change_fraction == 0.0
    assert stats.mean_l1 == 0.0
    assert max(stats.bigram_cos_changes) == 0.0


def test_perturbation_token_strings_never_change(fixture_vocab):
    ind = build_indvocab(fixture_vocab, BudgetPlan.uniform(6.0, 3), 7)
    stats, _ = perturbation_stats(fixture_vocab, ind, _prompt_corpus(fixture_vocab))
    assert stats.token_string_change_fraction == 0.0
    assert all(0 <= c <= 2 for c in stats.bigram_cos_changes)
    assert all(0 <= c <= 2 for c in stats.pairwise_cos_changes)


def test_perturbation_arr_beats_matched_laplace(fixture_vocab):
    """At a budget-matched noise scale, the mechanism moves embeddings less."""
    eps_total = 6.0
    ind = build_indvocab(fixture_vocab, BudgetPlan.uniform(eps_total, 3), 7)
    col_span = (fixture_vocab.embeddings.max(axis=0)
                - fixture_vocab.embeddings.min(axis=0)).sum()
    scale = float(col_span) / eps_total  # Laplace scale for the same budget
    stats, baseline = perturbation_stats(fixture_vocab, ind,
                                         _prompt_corpus(fixture_vocab),
                                         laplace_scale=scale, seed=5)
    assert baseline is not None
    assert stats.mean_l1 < baseline.mean_l1
