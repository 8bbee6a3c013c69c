"""The honest-but-curious cloud's toolkit.

Implements the strongest analytical attacks available under the threat
model: a Bayes-optimal token reconstructor that knows the original
vocabulary, the budget plan, and the policy (everything except seeds and
the client permutation), Monte-Carlo prompt reconstruction games, k-gram
frequency analysis against observed vector streams, and threshold-game
attack-success-rate scoring.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .arr import (
    AUDIT_MAX_VOCAB,
    BudgetPlan,
    DenominatorPolicy,
    FeatureMechanism,
    keyed_uniform,
)
from .errors import (
    ArgumentError,
    EmptyCorpus,
    LengthMismatch,
    TooLarge,
    ZeroLikelihood,
)
from .metrics import bleu, codebleu_simple, fusi, rouge_f1
from .vocab import Vocabulary

MAX_EXACT_OUTCOMES = 2_000_000


@dataclass(frozen=True)
class GameThresholds:
    """Win thresholds of the reconstruction security games."""

    rho_b: float = 20.0    # token-similarity threshold, 0-100 scale
    rho_r: float = 0.4     # overlap-F1 threshold
    rho_f: float = 0.0     # functionality threshold (leak vs no leak)
    rho_cb: float = 20.0   # code-similarity threshold, 0-100 scale

    def __post_init__(self):
        if not 0 <= self.rho_b <= 100 or not 0 <= self.rho_cb <= 100:
            raise ArgumentError("rho_b and rho_cb must be in [0, 100]")
        if not 0 <= self.rho_r <= 1:
            raise ArgumentError("rho_r must be in [0, 1]")
        if not 0 <= self.rho_f < 1:
            raise ArgumentError("rho_f must be in [0, 1)")


@dataclass(frozen=True)
class RecordScore:
    privacy_win: bool
    confidentiality_win: bool | None
    functionality_win: bool | None
    best_bleu: float
    best_rouge: float
    best_codebleu: float | None
    best_fusi: float | None


@dataclass(frozen=True)
class AsrReport:
    """Attack success rates with per-record win flags and metric values."""

    mode: str
    privacy_rate: float
    confidentiality_rate: float | None
    functionality_rate: float | None
    records: tuple[RecordScore, ...]
    notes: str = ""


class BayesAttacker:
    """Worst-case token reconstructor with exact per-feature likelihoods.

    Knows the source vocabulary, the budget plan, and the denominator
    policy; only build seeds stay secret. Posteriors use a uniform prior.
    """

    def __init__(self, vocab: Vocabulary, plan: BudgetPlan,
                 policy: DenominatorPolicy = DenominatorPolicy.EXCLUDE_SELF):
        if vocab.size > AUDIT_MAX_VOCAB:
            raise TooLarge(f"exact attacker limited to |V| <= {AUDIT_MAX_VOCAB}")
        if len(plan.per_feature) != vocab.dim:
            raise ArgumentError("plan does not match vocabulary dimension")
        self.vocab = vocab
        self.plan = plan
        self.policy = policy
        self._mechs = [FeatureMechanism(vocab, i, eps, policy)
                       for i, eps in enumerate(plan.per_feature)]
        self._group_logp: list[np.ndarray] = []   # hypothesis x group
        self._outcome_group: list[np.ndarray] = []  # outcome token -> group
        self._group_bits: list[dict[int, int]] = []  # f32 bit pattern -> group
        for i, mech in enumerate(self._mechs):
            values, inverse, G = mech.grouped()
            with np.errstate(divide="ignore"):
                self._group_logp.append(np.log(G))
            self._outcome_group.append(inverse)
            col_bits = np.ascontiguousarray(vocab.embeddings[:, i]).view(np.int32)
            self._group_bits.append({int(col_bits[t]): int(inverse[t])
                                     for t in range(vocab.size)})

    def _groups_of(self, observed: np.ndarray) -> list[int]:
        obs = np.asarray(observed, dtype=np.float32)
        if obs.shape != (self.vocab.dim,):
            raise ArgumentError(f"observed embedding must have shape ({self.vocab.dim},)")
        bits = obs.view(np.int32)
        groups = []
        for i in range(self.vocab.dim):
            g = self._group_bits[i].get(int(bits[i]))
            if g is None:
                raise ZeroLikelihood(
                    f"feature {i} value {float(obs[i])!r} is unreachable from every token")
            groups.append(g)
        return groups

    def posterior(self, observed) -> tuple[np.ndarray, int]:
        """(posterior over tokens, argmax index); ties go to the lowest index."""
        groups = self._groups_of(observed)
        loglik = np.zeros(self.vocab.size)
        for i, g in enumerate(groups):
            loglik += self._group_logp[i][:, g]
        loglik -= loglik.max()
        post = np.exp(loglik)
        post /= post.sum()
        return post, int(np.argmax(post))

    def attack(self, observed) -> int:
        return self.posterior(observed)[1]

    def argmax_from_outcomes(self, outcome_idx: np.ndarray) -> np.ndarray:
        """Vectorized argmax attack from outcome token indices.

        ``outcome_idx[..., i]`` is the source-token index whose feature-i
        value was emitted; returns the argmax hypothesis per leading entry.
        """
        outcome_idx = np.asarray(outcome_idx)
        lead = outcome_idx.shape[:-1]
        loglik = np.zeros(lead + (self.vocab.size,))
        for i in range(self.vocab.dim):
            g = self._outcome_group[i][outcome_idx[..., i]]
            loglik += np.moveaxis(self._group_logp[i][:, g], 0, -1)
        return np.argmax(loglik, axis=-1)

    def exact_accuracy(self) -> float:
        """Expected argmax accuracy under a uniform true token, computed by
        exhaustive enumeration of grouped outcome tuples (no sampling)."""
        n = self.vocab.size
        joint_log = np.zeros((n, 1))
        for logp in self._group_logp:
            k = logp.shape[1]
            if joint_log.shape[1] * k > MAX_EXACT_OUTCOMES:
                raise TooLarge("outcome space too large for exact enumeration")
            joint_log = (joint_log[:, :, None] + logp[:, None, :]).reshape(n, -1)
        winner = np.argmax(joint_log, axis=0)
        joint = np.exp(joint_log)
        return float(joint[winner, np.arange(joint.shape[1])].sum() / n)


@dataclass(frozen=True)
class GameReport:
    """Monte-Carlo estimate of a reconstruction game's success probability."""

    rho: float
    trials: int
    successes: int
    success_rate: float
    sigma: float

    @property
    def ci3(self) -> tuple[float, float]:
        return (max(0.0, self.success_rate - 3 * self.sigma),
                min(1.0, self.success_rate + 3 * self.sigma))


def _prompt_indices(prompts, vocab: Vocabulary) -> list[np.ndarray]:
    out = []
    for rec in prompts:
        toks = rec.prompt if hasattr(rec, "prompt") else rec
        out.append(np.array([vocab.index_of(t) if isinstance(t, str) else int(t)
                             for t in toks], dtype=np.int64))
    if not out:
        raise EmptyCorpus("the game needs at least one prompt")
    return out


def _sample_outcome_indices(mechs, trials: int, base_seed: int) -> np.ndarray:
    """Fresh per-trial randomization of every (token, feature) cell.

    Equivalent to building a fresh randomized vocabulary per trial: each
    cell's outcome is drawn from its exact output distribution with the
    keyed generator (trial index folded into the seed lane).
    """
    n = mechs[0].size
    m = len(mechs)
    out = np.empty((trials, n, m), dtype=np.int64)
    trial_seeds = (np.arange(trials, dtype=np.uint64)
                   + np.uint64(int(base_seed) & 0xFFFFFFFFFFFFFFFF))
    for i, mech in enumerate(mechs):
        cum = np.cumsum(np.stack([mech.probabilities(t) for t in range(n)]), axis=1)
        for t in range(n):
            u = keyed_uniform(0xC0FFEE ^ i, trial_seeds, t, 2)
            out[:, t, i] = np.searchsorted(cum[t], u, side="right")
    np.clip(out, 0, n - 1, out=out)
    return out


def reconstruction_game(prompts, vocab: Vocabulary, plan: BudgetPlan,
                        rho: float, trials: int, *,
                        policy: DenominatorPolicy = DenominatorPolicy.EXCLUDE_SELF,
                        base_seed: int = 0,
                        attacker: str = "bayes") -> GameReport:
    """Monte-Carlo estimate of P[C/|x| >= rho] for position-wise attacks.

    Each trial randomizes the vocabulary with a fresh seed, reveals the
    prompt's randomized embeddings, and attacks every position
    independently; C counts correct positions. Trials cycle through the
    prompt list. ``attacker`` is "bayes" (exact posterior argmax) or
    "uniform" (random guessing, for paired comparisons).
    """
    if trials < 1:
        raise ArgumentError("trials must be >= 1")
    if not 0 <= rho <= 1:
        raise ArgumentError("rho must be in [0, 1]")
    prompt_idx = _prompt_indices(prompts, vocab)
    bayes = BayesAttacker(vocab, plan, policy)
    outcomes = _sample_outcome_indices(bayes._mechs, trials, base_seed)

    n = vocab.size
    successes = 0
    trial_ids = np.arange(trials)
    prompt_of_trial = trial_ids % len(prompt_idx)
    success_mask = np.zeros(trials, dtype=bool)
    for p, prompt in enumerate(prompt_idx):
        rows = trial_ids[prompt_of_trial == p]
        if len(rows) == 0:
            continue
        # observations: outcome indices of each prompt position's token
        obs = outcomes[rows][:, prompt, :]          # (rows, |x|, m)
        if attacker == "bayes":
            guesses = bayes.argmax_from_outcomes(obs)    # (rows, |x|)
        elif attacker == "uniform":
            u = keyed_uniform(0xFACE, rows.astype(np.uint64)[:, None]
                              + np.uint64(int(base_seed) & 0xFFFFFFFFFFFFFFFF),
                              np.arange(len(prompt))[None, :], 3)
            guesses = (u * n).astype(np.int64)
        else:
            raise ArgumentError(f"unknown attacker {attacker!r}")
        C = (guesses == prompt[None, :]).sum(axis=1)
        success_mask[rows] = C / len(prompt) >= rho - 1e-12
    successes = int(success_mask.sum())
    rate = successes / trials
    sigma = math.sqrt(max(rate * (1 - rate), 1e-12) / trials)
    return GameReport(rho=rho, trials=trials, successes=successes,
                      success_rate=rate, sigma=sigma)


def reconstruction_game_generic(prompts, vocab: Vocabulary, indvocab_builder,
                                attack_fn, rho: float, trials: int) -> GameReport:
    """Trial loop over literal randomized builds, for arbitrary attackers.

    ``indvocab_builder(seed)`` returns a randomized vocabulary for the trial;
    ``attack_fn(observed_embedding)`` returns a guessed token index per
    position. Use reconstruction_game for the vectorized exact-Bayes path.
    """
    if trials < 1:
        raise ArgumentError("trials must be >= 1")
    prompt_idx = _prompt_indices(prompts, vocab)
    successes = 0
    for trial in range(trials):
        ind = indvocab_builder(trial)
        prompt = prompt_idx[trial % len(prompt_idx)]
        C = sum(int(attack_fn(ind.randomized_embeddings[t]) == t) for t in prompt)
        if C / len(prompt) >= rho - 1e-12:
            successes += 1
    rate = successes / trials
    sigma = math.sqrt(max(rate * (1 - rate), 1e-12) / trials)
    return GameReport(rho=rho, trials=trials, successes=successes,
                      success_rate=rate, sigma=sigma)


# ---------------------------------------------------------------------------
# frequency analysis

@dataclass(frozen=True)
class FrequencyAttackReport:
    """Recovered (position, token k-gram) pairs and their supports."""

    k: int
    min_count: int
    recovered: tuple[tuple[int, tuple[str, ...]], ...]
    matched_grams: tuple[tuple[str, ...], ...]
    fingerprint_supports: tuple[int, ...]

    def recovered_tokens(self) -> set[str]:
        return {tok for _, gram in self.recovered for tok in gram}


def frequency_attack(observations, public_corpus, k: int = 3,
                     min_count: int = 2) -> FrequencyAttackReport:
    """Codebook-style k-gram frequency matching against vector streams.

    Each observed vector is fingerprinted by its exact bytes; k-gram
    fingerprints are counted across prompts, rank-ordered, and matched to
    the rank-ordered token k-grams of the public corpus. Only fingerprints
    whose total support reaches ``min_count`` produce matches; each match
    is emitted at every aligned position where the fingerprint occurred.
    """
    if k < 1:
        raise ArgumentError("k must be >= 1")
    if min_count < 1:
        raise ArgumentError("min_count must be >= 1")
    fp_counts: Counter = Counter()
    fp_positions: dict[bytes, Counter] = {}
    for prompt_vecs in observations:
        vec_bytes = [np.ascontiguousarray(v, dtype=np.float32).tobytes()
                     for v in prompt_vecs]
        for j in range(len(vec_bytes) - k + 1):
            fp = b"".join(vec_bytes[j:j + k])
            fp_counts[fp] += 1
            fp_positions.setdefault(fp, Counter())[j] += 1

    gram_counts: Counter = Counter()
    for rec in public_corpus:
        toks = list(rec.prompt if hasattr(rec, "prompt") else rec)
        for j in range(len(toks) - k + 1):
            gram_counts[tuple(toks[j:j + k])] += 1

    ranked_fps = sorted((fp for fp, c in fp_counts.items() if c >= min_count),
                        key=lambda fp: (-fp_counts[fp], fp))
    ranked_grams = sorted((g for g, c in gram_counts.items() if c >= min_count),
                          key=lambda g: (-gram_counts[g], g))
    recovered = []
    matched = []
    supports = []
    for fp, gram in zip(ranked_fps, ranked_grams):
        matched.append(gram)
        supports.append(fp_counts[fp])
        for pos in sorted(fp_positions[fp]):
            recovered.append((pos, gram))
    return FrequencyAttackReport(
        k=k, min_count=min_count, recovered=tuple(recovered),
        matched_grams=tuple(matched), fingerprint_supports=tuple(supports))


# ---------------------------------------------------------------------------
# attack success rates

_CODEBLEU_NOTE = ("confidentiality scored with a simplified code-similarity "
                  "metric: 0.5*mean(unigram,bigram precision) + "
                  "0.5*keyword-weighted unigram precision, keywords weighted 5x")


def _candidates(entry):
    if entry and isinstance(entry[0], (list, tuple)) and not isinstance(entry[0], str):
        return [list(c) for c in entry]
    return [list(entry)]


def compute_asr(reconstructions, ground_truth, thresholds: GameThresholds,
                mode: str = "prompt", truth_passes=None,
                recon_passes=None) -> AsrReport:
    """Threshold-game success rates over a record set.

    Multiple reconstructions per record are scored by their maximum (the
    worst case for the client). Prompt mode wins on the token-similarity or
    overlap threshold; code mode adds confidentiality (simplified
    code-similarity score) and functionality (pass-overlap > rho_f) flags.
    Records whose truth passes no test are excluded from the functionality
    denominator.
    """
    recs = list(reconstructions)
    truths = list(ground_truth)
    if len(recs) != len(truths):
        raise LengthMismatch(f"{len(recs)} reconstructions vs {len(truths)} truths")
    if mode not in ("prompt", "code"):
        raise ArgumentError("mode must be 'prompt' or 'code'")
    if mode == "code" and truth_passes is not None:
        if recon_passes is None or len(truth_passes) != len(truths) or len(recon_passes) != len(truths):
            raise LengthMismatch("pass vectors must align with the record count")

    scores = []
    fusi_wins, fusi_total = 0, 0
    for i, (entry, truth) in enumerate(zip(recs, truths)):
        truth = list(truth)
        cands = _candidates(entry)
        best_b = max(bleu(c, truth) for c in cands)
        best_r = max(rouge_f1(c, truth) for c in cands)
        privacy = best_b >= thresholds.rho_b or best_r >= thresholds.rho_r
        best_cb = conf = None
        best_f = func = None
        if mode == "code":
            best_cb = max(codebleu_simple(c, truth) for c in cands)
            conf = best_cb >= thresholds.rho_cb
            if truth_passes is not None:
                rec_rows = recon_passes[i]
                if rec_rows and not isinstance(rec_rows[0], (list, tuple)):
                    rec_rows = [rec_rows]
                vals = [fusi(truth_passes[i], row) for row in rec_rows]
                defined = [v for v in vals if v is not None]
                if any(v is None for v in vals) and not defined:
                    best_f, func = None, None   # truth passes nothing: excluded
                else:
                    best_f = max(defined)
                    func = best_f > thresholds.rho_f
                    fusi_total += 1
                    fusi_wins += int(func)
        scores.append(RecordScore(
            privacy_win=privacy, confidentiality_win=conf, functionality_win=func,
            best_bleu=best_b, best_rouge=best_r, best_codebleu=best_cb, best_fusi=best_f))

    privacy_rate = sum(s.privacy_win for s in scores) / len(scores) if scores else 0.0
    conf_rate = None
    if mode == "code":
        conf_rate = sum(bool(s.confidentiality_win) for s in scores) / len(scores) if scores else 0.0
    func_rate = fusi_wins / fusi_total if fusi_total else None
    return AsrReport(mode=mode, privacy_rate=privacy_rate,
                     confidentiality_rate=conf_rate, functionality_rate=func_rate,
                     records=tuple(scores),
                     notes=_CODEBLEU_NOTE if mode == "code" else "")
