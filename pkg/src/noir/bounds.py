"""Closed-form reconstruction-risk bounds and brute-force-time translation.

Token-level bounds: with budget eps over a vocabulary of size V, the
probability that a fixed token is the ground truth of an observed
randomized embedding lies in

    [ 1 / (1 + (V-1) e^eps) ,  e^eps / (e^eps + V - 1) ].

Prompt-level bound: with psi = V - 1, gist threshold rho, prompt length x,
and sequential-attack advantage gamma,

    P[C/x >= rho] <= ((psi e^eps + 1)/(psi e^eps + psi^2) + gamma)^ceil(rho x)
                     * (psi e^eps/(psi e^eps + 1) - gamma)^(x - ceil(rho x)).

gamma = 0 recovers the plain product form exactly. Everything is evaluated
in log space so large eps * V combinations stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ArgumentError, EmptyCorpus

SECONDS_PER_YEAR = 31_557_600


@dataclass(frozen=True)
class TokenBound:
    """Per-token posterior bounds at a given budget and vocabulary size."""

    epsilon: float
    vocab_size: int
    lower: float
    upper: float


@dataclass(frozen=True)
class PromptBoundParams:
    epsilon: float
    vocab_size: int
    prompt_len: int
    gist_threshold: float          # rho in (0, 1]
    sequence_advantage: float = 0.0  # gamma in [0, 1]

    def __post_init__(self):
        if self.epsilon < 0:
            raise ArgumentError("epsilon must be nonnegative")
        if self.vocab_size < 2:
            raise ArgumentError("vocab_size must be >= 2")
        if self.prompt_len < 1:
            raise ArgumentError("prompt_len must be >= 1")
        if not 0 < self.gist_threshold <= 1:
            raise ArgumentError("gist_threshold must be in (0, 1]")
        if not 0 <= self.sequence_advantage <= 1:
            raise ArgumentError("sequence_advantage must be in [0, 1]")


@dataclass(frozen=True)
class PromptBoundReport:
    """Prompt-level bound with its inputs echoed for sweep tables."""

    params: PromptBoundParams
    correct_count: int      # ceil(rho * |x|)
    value: float
    log10_value: float
    vacuous: bool


@dataclass(frozen=True)
class BruteForceReport:
    """Expected search time for a success probability at a guess rate."""

    success_probability: float
    guesses_per_second: float
    expected_years: float       # with the 1/2 expected-fraction factor
    exhaustive_years: float     # full 1/p sweep, no 1/2 factor


def token_inference_bounds(epsilon: float, vocab_size: int) -> TokenBound:
    """Exact closed-form posterior bounds, computed in log space."""
    if epsilon < 0:
        raise ArgumentError("epsilon must be nonnegative")
    if vocab_size < 2:
        raise ArgumentError("vocab_size must be >= 2")
    log_psi = math.log(vocab_size - 1)
    # upper = e^eps / (e^eps + psi); lower = 1 / (1 + psi e^eps)
    upper = math.exp(epsilon - _logaddexp(epsilon, log_psi))
    lower = math.exp(-_logaddexp(0.0, log_psi + epsilon))
    return TokenBound(epsilon=epsilon, vocab_size=vocab_size, lower=lower, upper=upper)


def _logaddexp(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    if b == -math.inf:
        return a
    return a + math.log1p(math.exp(b - a))


def _ceil_count(rho: float, length: int) -> int:
    """ceil(rho * length), robust to float representation of rho."""
    raw = rho * length
    nearest = round(raw)
    if abs(raw - nearest) < 1e-9:
        return int(nearest)
    return int(math.ceil(raw))


def prompt_reconstruction_bound(params: PromptBoundParams) -> PromptBoundReport:
    """Upper bound on recovering at least a rho fraction of a prompt.

    When the advantage term pushes either factor outside [0, 1], the bound
    is vacuous and reported as 1.
    """
    eps = params.epsilon
    psi = params.vocab_size - 1
    x = params.prompt_len
    k = _ceil_count(params.gist_threshold, x)
    gamma = params.sequence_advantage

    log_pe = math.log(psi) + eps
    # A = (psi e^eps + 1) / (psi e^eps + psi^2)
    log_a = _logaddexp(log_pe, 0.0) - _logaddexp(log_pe, 2 * math.log(psi))
    # B = psi e^eps / (psi e^eps + 1)
    log_b = log_pe - _logaddexp(log_pe, 0.0)
    f_correct = math.exp(log_a) + gamma
    f_incorrect = math.exp(log_b) - gamma

    if f_correct > 1.0 or f_incorrect < 0.0:
        return PromptBoundReport(params, k, 1.0, 0.0, vacuous=True)
    if f_incorrect == 0.0 and x - k > 0:
        return PromptBoundReport(params, k, 0.0, -math.inf, vacuous=False)
    log_val = 0.0
    if k > 0:
        if f_correct == 0.0:
            return PromptBoundReport(params, k, 0.0, -math.inf, vacuous=False)
        log_val += k * math.log(f_correct)
    if x - k > 0:
        log_val += (x - k) * math.log(f_incorrect)
    value = math.exp(log_val)
    return PromptBoundReport(params, k, value, log_val / math.log(10.0), vacuous=False)


def estimate_gamma(corpus, attacker) -> float:
    """Max over positions of the attacker's per-position corpus accuracy.

    ``attacker(prompt_index, position, previous_guesses)`` must return one
    reconstructed token; it sees its own earlier outputs, never the truth.
    """
    records = list(corpus)
    if not records:
        raise EmptyCorpus("gamma estimation needs at least one record")
    max_len = max(len(_prompt_of(rec)) for rec in records)
    hits = [0] * max_len
    for idx, rec in enumerate(records):
        prompt = _prompt_of(rec)
        guesses: list[str] = []
        for j in range(len(prompt)):
            guess = attacker(idx, j, tuple(guesses))
            guesses.append(guess)
            if guess == prompt[j]:
                hits[j] += 1
    return max(h / len(records) for h in hits)


def _prompt_of(rec):
    return rec.prompt if hasattr(rec, "prompt") else tuple(rec)


def brute_force_time(success_probability: float, guesses_per_second: float) -> BruteForceReport:
    """Expected years to hit a success at one independent guess per period.

    The expected fraction of the search space visited before success is 1/2,
    so the headline figure halves the exhaustive sweep time; both values are
    reported because narrative summaries sometimes quote the full sweep.
    """
    p = float(success_probability)
    rate = float(guesses_per_second)
    if not 0 < p <= 1:
        raise ArgumentError("success probability must be in (0, 1]")
    if rate <= 0:
        raise ArgumentError("guess rate must be positive")
    exhaustive = (1.0 / p) / rate / SECONDS_PER_YEAR
    return BruteForceReport(
        success_probability=p, guesses_per_second=rate,
        expected_years=0.5 * exhaustive, exhaustive_years=exhaustive)
