import math

import numpy as np
import pytest

from noir.adversary import (
    BayesAttacker,
    GameThresholds,
    compute_asr,
    frequency_attack,
    reconstruction_game,
    reconstruction_game_generic,
)
from noir.arr import BudgetPlan, DenominatorPolicy, build_indvocab, measure_effective_epsilon
from noir.bounds import PromptBoundParams, prompt_reconstruction_bound, token_inference_bounds
from noir.errors import ArgumentError, LengthMismatch, ZeroLikelihood
from noir.ltokenizer import generate_permutation
from noir.vocab import Vocabulary

from conftest import uniform_plan


# ---------------------------------------------------------------------------
# Bayes posterior

def test_posterior_sums_to_one(fixture_vocab, policy):
    plan = uniform_plan(1.0, 3)
    attacker = BayesAttacker(fixture_vocab, plan, policy)
    ind = build_indvocab(fixture_vocab, plan, 3, policy)
    for t in range(fixture_vocab.size):
        post, _ = attacker.posterior(ind.randomized_embeddings[t])
        assert post.sum() == pytest.approx(1.0, abs=1e-9)


def test_posterior_uniform_on_identical_embeddings(policy):
    emb = np.full((5, 2), 0.125, dtype=np.float32)
    vocab = Vocabulary(tuple(f"t{i}" for i in range(5)), emb)
    attacker = BayesAttacker(vocab, BudgetPlan.uniform(2.0, 2), policy)
    post, guess = attacker.posterior(emb[3])
    assert np.allclose(post, 0.2, atol=1e-12)
    assert guess == 0  # ties break to the lowest index


def test_posterior_within_token_bounds(fixture_vocab, policy):
    plan = uniform_plan(1.0, 3)
    eff = measure_effective_epsilon(fixture_vocab, plan, policy).total
    band = token_inference_bounds(eff, fixture_vocab.size)
    attacker = BayesAttacker(fixture_vocab, plan, policy)
    ind = build_indvocab(fixture_vocab, plan, 17, policy)
    for t in range(fixture_vocab.size):
        post, _ = attacker.posterior(ind.randomized_embeddings[t])
        assert post.min() >= band.lower - 1e-9
        assert post.max() <= band.upper + 1e-9


def test_posterior_rejects_unreachable_observation(fixture_vocab):
    attacker = BayesAttacker(fixture_vocab, uniform_plan(1.0, 3))
    observed = np.full(3, 123.456, dtype=np.float32)
    with pytest.raises(ZeroLikelihood):
        attacker.posterior(observed)


def test_high_budget_recovers_tokens(fixture_vocab):
    plan = uniform_plan(50.0, 3)
    attacker = BayesAttacker(fixture_vocab, plan)
    ind = build_indvocab(fixture_vocab, plan, 5)
    hits = sum(int(attacker.attack(ind.randomized_embeddings[t]) == t)
               for t in range(6))
    assert hits == 6
    assert attacker.exact_accuracy() > 0.99


def test_exact_accuracy_matches_monte_carlo(fixture_vocab):
    plan = uniform_plan(2.0, 3)
    attacker = BayesAttacker(fixture_vocab, plan)
    exact = attacker.exact_accuracy()
    trials = 4000
    hits = 0
    for trial in range(trials):
        ind = build_indvocab(fixture_vocab, plan, 1000 + trial)
        for t in range(6):
            hits += int(attacker.attack(ind.randomized_embeddings[t]) == t)
    emp = hits / (trials * 6)
    sigma = math.sqrt(exact * (1 - exact) / (trials * 6))
    assert abs(emp - exact) <= 4 * sigma


# ---------------------------------------------------------------------------
# reconstruction games

def _prompts(vocab):
    return [tuple(vocab.tokens[i] for i in (0, 3) * 4),
            tuple(vocab.tokens[i] for i in (1, 4) * 4)]


def test_game_rho_zero_always_succeeds(fixture_vocab):
    rep = reconstruction_game(_prompts(fixture_vocab), fixture_vocab,
                              uniform_plan(1.0, 3), 0.0, 500)
    assert rep.success_rate == 1.0


def test_game_bounded_by_closed_form(fixture_vocab):
    plan = uniform_plan(2.0, 3)
    eff = measure_effective_epsilon(fixture_vocab, plan).total
    for rho in (0.5, 1.0):
        rep = reconstruction_game(_prompts(fixture_vocab), fixture_vocab,
                                  plan, rho, 20_000, base_seed=5)
        bound = prompt_reconstruction_bound(
            PromptBoundParams(eff, 6, 8, rho, 0.0)).value
        assert rep.success_rate <= bound + 3 * rep.sigma


def test_uniform_guesser_never_beats_bayes(fixture_vocab):
    plan = uniform_plan(2.0, 3)
    kwargs = dict(rho=1.0, trials=10_000, base_seed=11)
    bayes = reconstruction_game(_prompts(fixture_vocab), fixture_vocab, plan,
                                attacker="bayes", **kwargs)
    uniform = reconstruction_game(_prompts(fixture_vocab), fixture_vocab, plan,
                                  attacker="uniform", **kwargs)
    assert uniform.success_rate <= bayes.success_rate


def test_generic_game_agrees_with_vectorized(fixture_vocab):
    plan = uniform_plan(2.0, 3)
    attacker = BayesAttacker(fixture_vocab, plan)
    generic = reconstruction_game_generic(
        _prompts(fixture_vocab), fixture_vocab,
        lambda seed: build_indvocab(fixture_vocab, plan, seed),
        attacker.attack, rho=1.0, trials=400)
    fast = reconstruction_game(_prompts(fixture_vocab), fixture_vocab, plan,
                               1.0, 20_000, base_seed=3)
    # same game, different sampling streams: agree within Monte-Carlo noise
    sigma = math.sqrt(max(generic.success_rate * (1 - generic.success_rate), 1e-4) / 400)
    assert abs(generic.success_rate - fast.success_rate) <= 4 * sigma


def test_game_argument_validation(fixture_vocab):
    with pytest.raises(ArgumentError):
        reconstruction_game(_prompts(fixture_vocab), fixture_vocab,
                            uniform_plan(1.0, 3), 0.5, 0)
    with pytest.raises(ArgumentError):
        reconstruction_game(_prompts(fixture_vocab), fixture_vocab,
                            uniform_plan(1.0, 3), 0.5, 10, attacker="psychic")


# ---------------------------------------------------------------------------
# frequency analysis

def _stream_observations(index_streams):
    return [[np.array([float(i)], dtype=np.float32) for i in stream]
            for stream in index_streams]


def test_frequency_k1_is_token_frequency_matching():
    # a bijective token->vector map with a skewed corpus: unigram matching
    # recovers the heavy hitters by rank
    streams = [[0, 0, 0, 1, 2], [0, 0, 1, 1, 3], [0, 2, 0, 1, 4]]
    tokens = [["h", "h", "h", "m", "r1"], ["h", "h", "m", "m", "r2"],
              ["h", "r3", "h", "m", "r4"]]
    report = frequency_attack(_stream_observations(streams), tokens,
                              k=1, min_count=3)
    assert ("h",) in report.matched_grams
    assert ("m",) in report.matched_grams
    recovered = report.recovered_tokens()
    assert "h" in recovered and "m" in recovered


def test_frequency_permuted_index_streams_recover_nothing_reliable():
    """Local-index streams from disjoint samples give chance-level matching.

    Uniform random bodies make the client and public frequency rankings
    independent noise, so every rank-matched (index, token) pairing is
    correct only by luck.
    """
    from collections import Counter

    vocab_size = 16
    rng = np.random.Generator(np.random.PCG64(44))
    correct = 0
    total = 0
    for trial in range(30):
        perm = generate_permutation(vocab_size, trial)
        client = [[int(t) for t in rng.integers(0, vocab_size, 12)] for _ in range(150)]
        public = [[f"w{int(t)}" for t in rng.integers(0, vocab_size, 12)]
                  for _ in range(150)]
        streams = [[int(perm.forward[t]) for t in prompt] for prompt in client]
        fp_counts = Counter(idx for stream in streams for idx in stream)
        ranked_idx = sorted(fp_counts, key=lambda i: (-fp_counts[i], i))
        tok_counts = Counter(t for p in public for t in p)
        ranked_tok = sorted(tok_counts, key=lambda t: (-tok_counts[t], t))
        for idx, tok in zip(ranked_idx, ranked_tok):
            total += 1
            correct += int(f"w{int(perm.inverse[idx])}" == tok)
    accuracy = correct / total
    chance = 1 / vocab_size
    sigma = math.sqrt(chance * (1 - chance) / total)
    assert accuracy <= chance + 3 * sigma


def test_frequency_attack_validation():
    with pytest.raises(ArgumentError):
        frequency_attack([], [], k=0)
    with pytest.raises(ArgumentError):
        frequency_attack([], [], k=1, min_count=0)


# ---------------------------------------------------------------------------
# attack success rates

def test_asr_identical_reconstruction():
    truth = [["a", "b", "c"]]
    rep = compute_asr([["a", "b", "c"]], truth, GameThresholds(), mode="prompt")
    assert rep.privacy_rate == 1.0
    assert rep.records[0].privacy_win


def test_asr_disjoint_reconstruction():
    rep = compute_asr([["x", "y", "z"]], [["a", "b", "c"]], GameThresholds(),
                      mode="prompt")
    assert rep.privacy_rate == 0.0


def test_asr_hand_scored_records():
    base = [f"t{i}" for i in range(8)]
    records = [
        (base, base),                                   # win: identical
        (base, base[:2] + [f"x{i}" for i in range(6)]),  # 2/8 = 25 >= 20: win
        (base, base[:1] + [f"y{i}" for i in range(7)]),  # 12.5 / 0.125: lose
        (base, [f"z{i}" for i in range(8)]),             # disjoint: lose
    ]
    truths = [t for t, _ in records]
    recons = [r for _, r in records]
    rep = compute_asr(recons, truths, GameThresholds(), mode="prompt")
    assert [s.privacy_win for s in rep.records] == [True, True, False, False]
    assert rep.privacy_rate == pytest.approx(0.5)


def test_asr_best_of_multiple_candidates():
    truth = [["a", "b", "c", "d"]]
    candidates = [[["x", "y", "z", "w"], ["a", "b", "z", "w"]]]  # best = 50
    rep = compute_asr(candidates, truth, GameThresholds(), mode="prompt")
    assert rep.privacy_rate == 1.0
    assert rep.records[0].best_bleu == pytest.approx(50.0)


def test_asr_code_mode_with_functionality():
    truth = [["def", "f", ":", "return", "x"], ["def", "g", ":", "return", "y"]]
    recon = [["def", "f", ":", "return", "x"], ["q", "w", "e", "r", "t"]]
    truth_passes = [(True, True, False), (False, False, False)]
    recon_passes = [(True, False, False), (True, True, True)]
    rep = compute_asr(recon, truth, GameThresholds(), mode="code",
                      truth_passes=truth_passes, recon_passes=recon_passes)
    assert rep.records[0].functionality_win is True   # fusi 1/2 > 0
    assert rep.records[1].functionality_win is None   # truth passes nothing
    assert rep.functionality_rate == 1.0              # one defined record, one win
    assert rep.confidentiality_rate == pytest.approx(0.5)
    assert "simplified" in rep.notes


def test_asr_length_mismatch():
    with pytest.raises(LengthMismatch):
        compute_asr([["a"]], [["a"], ["b"]], GameThresholds())
