"""The acceptance gate: one test per criterion, each printing its line.

Run with -s (or read captured output on failure) to see measured values.
Criterion 1 additionally audits the committed on-disk fixtures when present.
"""

import os

from noir import acceptance

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "fixtures")


def _check(result):
    print(result.line())
    assert result.passed, result.line()
    assert result.runtime_seconds < result.budget_seconds


def test_criterion_1_exact_epsilon_audit():
    fixture_dir = FIXTURE_DIR if os.path.isdir(FIXTURE_DIR) else None
    _check(acceptance.criterion_1(fixture_dir))


def test_criterion_2_normalization_and_dominance():
    _check(acceptance.criterion_2())


def test_criterion_3_posterior_containment():
    _check(acceptance.criterion_3())


def test_criterion_4_monte_carlo_bound_dominance():
    _check(acceptance.criterion_4())


def test_criterion_5_narrative_anchors():
    _check(acceptance.criterion_5())


def test_criterion_6_tokenizer_permutation():
    _check(acceptance.criterion_6())


def test_criterion_7_metric_oracles():
    _check(acceptance.criterion_7())


def test_criterion_8_split_vs_monolithic():
    _check(acceptance.criterion_8())


def test_criterion_9_wire_contract():
    _check(acceptance.criterion_9())


def test_criterion_10_frequency_attack():
    _check(acceptance.criterion_10())


def test_criterion_11_attacker_monotonicity():
    _check(acceptance.criterion_11())
