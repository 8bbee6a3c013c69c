"""Adaptive randomized response over vocabulary embeddings.

Each feature of each token embedding is randomized exactly once with a
keep-or-replace coin. Replacement values are drawn from the same feature
column of the other tokens, weighted by exp(-|gap|/m), so nearer values are
likelier substitutes. The keep weight exp(beta) is chosen per feature as
the largest value for which the exact worst-case output likelihood ratio
between any two tokens stays within exp(eps_i); the per-token diagnostic
band is exposed separately through beta_bounds.

Two readings of the replacement normalization are supported:

* EXCLUDE_SELF (default): replacement weights are normalized over the
  other tokens only, so keep + replacements sum to 1 directly.
* PAPER_VERBATIM: the normalizing sum additionally includes the token's
  own unit self-similarity term, which leaves a probability deficit; the
  residual mass is assigned to the keep outcome.

All ratio-sensitive quantities are evaluated in log space; distance
statistics are computed in float64 regardless of the stored float32
embeddings. Randomness comes from a counter-based keyed generator over
(seed, token, feature), so partitioned builds are bitwise identical to
serial ones.
"""

from __future__ import annotations

import enum
import io
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ArgumentError,
    DigestMismatch,
    FormatError,
    InfeasibleBudget,
    IoError,
    TooLarge,
    ValidationError,
)
from .vocab import Vocabulary

AUDIT_MAX_VOCAB = 4096
INDVOCAB_MAGIC = b"NIND"
INDVOCAB_VERSION = 1

_REL_TOL = 1e-12


class DenominatorPolicy(enum.Enum):
    """Resolution of the replacement-weight normalization ambiguity."""

    EXCLUDE_SELF = "exclude_self"
    PAPER_VERBATIM = "paper_verbatim"


@dataclass(frozen=True)
class BudgetPlan:
    """Total privacy budget and its per-feature split (nats)."""

    total_epsilon: float
    per_feature: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_feature", tuple(float(e) for e in self.per_feature))
        if any(e < 0 for e in self.per_feature):
            raise ArgumentError("per-feature budgets must be nonnegative")
        if self.total_epsilon < 0:
            raise ArgumentError("total budget must be nonnegative")
        total = math.fsum(self.per_feature)
        tol = _REL_TOL * max(1.0, abs(self.total_epsilon))
        if abs(total - self.total_epsilon) > tol:
            raise ArgumentError(
                f"per-feature budgets sum to {total!r}, not {self.total_epsilon!r}")

    @classmethod
    def uniform(cls, total_epsilon: float, dim: int) -> "BudgetPlan":
        if dim < 1:
            raise ArgumentError("dim must be >= 1")
        if total_epsilon < 0:
            raise ArgumentError("total budget must be nonnegative")
        share = total_epsilon / dim
        per = (share,) * dim
        return cls(math.fsum(per), per)


@dataclass(frozen=True)
class FeatureDistribution:
    """Explicit output distribution of one randomized feature."""

    support: tuple[float, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) != len(self.probabilities):
            raise ValidationError("support and probabilities differ in length")
        probs = np.asarray(self.probabilities, dtype=np.float64)
        if np.any(probs < 0):
            raise ValidationError("negative probability")
        if abs(float(probs.sum()) - 1.0) > 1e-12:
            raise ValidationError(f"probabilities sum to {probs.sum()!r}")


@dataclass(frozen=True)
class IndVocab:
    """A vocabulary whose embeddings were randomized exactly once."""

    tokens: tuple[str, ...]
    randomized_embeddings: np.ndarray  # float32, same shape as the source
    plan: BudgetPlan
    seed: int
    policy: DenominatorPolicy
    source_digest: bytes

    def __post_init__(self):
        emb = np.asarray(self.randomized_embeddings, dtype=np.float32)
        emb.setflags(write=False)
        object.__setattr__(self, "randomized_embeddings", emb)
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if emb.ndim != 2 or emb.shape[0] != len(self.tokens):
            raise ValidationError("randomized matrix shape does not match tokens")
        if len(self.source_digest) != 32:
            raise ValidationError("source digest must be 32 bytes")

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def dim(self) -> int:
        return int(self.randomized_embeddings.shape[1])

    def validate_against(self, source: Vocabulary) -> None:
        """Check digest, dimensions, and per-column support closure."""
        if source.digest() != self.source_digest:
            raise DigestMismatch("source vocabulary digest mismatch")
        if source.embeddings.shape != self.randomized_embeddings.shape:
            raise ValidationError("randomized matrix shape differs from source")
        src = source.embeddings.view(np.int32)
        rnd = self.randomized_embeddings.view(np.int32)
        for i in range(self.dim):
            if not np.all(np.isin(rnd[:, i], src[:, i])):
                raise ValidationError(
                    f"feature {i} contains a value absent from the source column")


# ---------------------------------------------------------------------------
# keyed counter-based RNG (splitmix64 chain)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x: np.ndarray | np.uint64) -> np.ndarray | np.uint64:
    # uint64 arithmetic wraps mod 2^64 by design
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def keyed_uniform(seed: int, token, feature, counter) -> np.ndarray:
    """Uniforms in [0, 1) keyed by (seed, token, feature, counter).

    Arguments broadcast; evaluation order never matters, which is what makes
    partitioned builds bitwise-identical to serial ones.
    """
    s = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    t = np.asarray(token, dtype=np.uint64)
    f = np.asarray(feature, dtype=np.uint64)
    c = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = _mix64(s)
        x = _mix64(x ^ _mix64(t))
        x = _mix64(x ^ _mix64(f + np.uint64(0x632BE59BD9B4E019)))
        x = _mix64(x ^ _mix64(c + np.uint64(0xD1B54A32D192ED03)))
    return (x >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


# ---------------------------------------------------------------------------
# per-column statistics

def _logaddexp_accumulate(a: np.ndarray) -> np.ndarray:
    return np.logaddexp.accumulate(a)


def _logsubexp(a: float, b: float) -> float:
    """log(e^a - e^b) for a >= b; -inf when the difference underflows."""
    if b >= a:
        return -math.inf
    d = b - a
    return a + math.log1p(-math.exp(d))


@dataclass(frozen=True)
class ColumnStats:
    """Sorted-order similarity statistics for one feature column.

    The prefix/suffix log-sum-exp arrays make every per-token normalizer and
    every replacement draw an O(log |V|) operation instead of O(|V|).
    """

    values: np.ndarray        # float64 column in token order
    order: np.ndarray         # token index sorted by value
    sorted_pos: np.ndarray    # token -> position in sorted order
    u: np.ndarray             # sorted values
    scale: float              # m, the feature count divisor
    prefix_pos: np.ndarray    # prefix logsumexp of +u/m
    suffix_neg: np.ndarray    # suffix logsumexp of -u/m, padded with -inf
    log_s_excl: np.ndarray    # per token: log sum_{k != t} exp(-|v_t - v_k|/m)
    log_s_incl: np.ndarray    # per token: same including the self term
    dmin: np.ndarray          # per token: min_{k != t} |v_t - v_k|
    dmax: np.ndarray          # per token: max_{k != t} |v_t - v_k|

    @property
    def size(self) -> int:
        return len(self.values)


def column_stats(values: np.ndarray, scale: float) -> ColumnStats:
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    if n < 2:
        raise ArgumentError("a feature column needs at least 2 tokens")
    order = np.argsort(v, kind="stable")
    sorted_pos = np.empty(n, dtype=np.int64)
    sorted_pos[order] = np.arange(n)
    u = v[order]
    su = u / scale
    prefix_pos = _logaddexp_accumulate(su)
    suffix_neg = np.full(n + 1, -np.inf)
    suffix_neg[:n] = _logaddexp_accumulate((-su)[::-1])[::-1]

    idx = np.arange(n)
    left = np.where(idx > 0, -su + np.concatenate(([-np.inf], prefix_pos[:-1])), -np.inf)
    right = np.where(idx < n - 1, su + suffix_neg[idx + 1], -np.inf)
    log_s_excl_sorted = np.logaddexp(left, right)
    log_s_incl_sorted = np.logaddexp(log_s_excl_sorted, 0.0)

    gap_prev = np.where(idx > 0, u - np.concatenate(([np.inf], u[:-1])), np.inf)
    gap_next = np.where(idx < n - 1, np.concatenate((u[1:], [np.inf])) - u, np.inf)
    dmin_sorted = np.minimum(np.abs(gap_prev), np.abs(gap_next))
    dmax_sorted = np.maximum(u - u[0], u[-1] - u)

    inv = np.empty(n, dtype=np.int64)
    inv[order] = np.arange(n)
    return ColumnStats(
        values=v, order=order, sorted_pos=sorted_pos, u=u, scale=scale,
        prefix_pos=prefix_pos, suffix_neg=suffix_neg,
        log_s_excl=log_s_excl_sorted[inv], log_s_incl=log_s_incl_sorted[inv],
        dmin=dmin_sorted[inv], dmax=dmax_sorted[inv])


# ---------------------------------------------------------------------------
# feasibility and the shared per-feature keep weight

def min_feasible_epsilon(vocab: Vocabulary, token: int, feature: int) -> float:
    """Smallest budget admitting a nonempty per-token exponent band.

    Equals (max gap - min gap) / m over the other tokens' values in this
    feature column; zero exactly when all other values are equidistant.
    """
    _check_indices(vocab, token, feature)
    stats = column_stats(vocab.embeddings[:, feature], float(vocab.dim))
    return float((stats.dmax[token] - stats.dmin[token]) / stats.scale)


def beta_bounds(vocab: Vocabulary, token: int, feature: int, eps_i: float,
                policy: DenominatorPolicy = DenominatorPolicy.EXCLUDE_SELF,
                ) -> tuple[float, float]:
    """Per-token diagnostic band for the keep exponent, in log space.

    The lower end is where the keep probability stops dominating every
    replacement probability; the upper end is where the worst within-band
    likelihood ratio reaches exp(eps_i). Both use the chosen policy's
    normalizing sum. The sampler itself uses the feature-wide intersection
    of these bands (see feature_keep_weight), not any single token's band.
    """
    _check_indices(vocab, token, feature)
    stats = column_stats(vocab.embeddings[:, feature], float(vocab.dim))
    feas = float((stats.dmax[token] - stats.dmin[token]) / stats.scale)
    if eps_i < feas - 1e-12 * max(1.0, feas):
        raise InfeasibleBudget(
            f"eps_i={eps_i!r} below the per-token feasibility bound",
            minimal_feasible=feas, violations=[(token, feature)])
    log_s = _log_s(stats, policy)
    psi = stats.size - 1
    lower = math.log(psi) - stats.dmin[token] / stats.scale - log_s[token]
    upper = eps_i + math.log(psi) - stats.dmax[token] / stats.scale - log_s[token]
    return float(lower), float(upper)


def _log_s(stats: ColumnStats, policy: DenominatorPolicy) -> np.ndarray:
    return stats.log_s_excl if policy is DenominatorPolicy.EXCLUDE_SELF else stats.log_s_incl


def _check_indices(vocab: Vocabulary, token: int, feature: int) -> None:
    if not 0 <= token < vocab.size:
        raise IndexError(f"token index {token} out of range [0, {vocab.size})")
    if not 0 <= feature < vocab.dim:
        raise IndexError(f"feature index {feature} out of range [0, {vocab.dim})")


def feature_min_epsilon(stats: ColumnStats, policy: DenominatorPolicy) -> float:
    """Smallest budget for which the feature-wide exponent band is nonempty."""
    m = stats.scale
    if policy is DenominatorPolicy.EXCLUDE_SELF:
        lower_terms = -stats.dmin / m - stats.log_s_excl   # per-token band floor - ln psi
        upper_terms = -stats.dmax / m - stats.log_s_excl   # per-token band ceiling - eps - ln psi
        return float(np.max(lower_terms) - np.min(upper_terms))
    # PAPER_VERBATIM: need exp(eps) * mn_{t'} / S_{t'} >= 1 / S_t over distinct pairs
    h = stats.log_s_incl - (-stats.dmax / m)  # per t': ln(S_{t'} / mn_{t'})
    g = -stats.log_s_incl                     # per t : ln(1 / S_t)
    return float(_max_distinct_pair_sum(h, g))


def _max_distinct_pair_sum(a: np.ndarray, b: np.ndarray) -> float:
    """max over i != j of a[i] + b[j]."""
    ia = int(np.argmax(a))
    jb = int(np.argmax(b))
    if ia != jb:
        return float(a[ia] + b[jb])
    best = -np.inf
    if len(a) > 1:
        a2 = np.delete(a, ia).max()
        b2 = np.delete(b, jb).max()
        best = max(a2 + b[jb], a[ia] + b2)
    return float(best)


def feature_keep_weight(stats: ColumnStats, eps_i: float,
                        policy: DenominatorPolicy) -> float:
    """Shared log keep weight for one feature, tight at the audit bound.

    Raises InfeasibleBudget when the feature-wide band is empty; the error
    carries this feature's minimal feasible budget.
    """
    if eps_i < 0:
        raise ArgumentError("eps_i must be nonnegative")
    feas = feature_min_epsilon(stats, policy)
    if eps_i < feas - 1e-12 * max(1.0, abs(feas)):
        raise InfeasibleBudget(
            f"eps_i={eps_i!r} below the feature-wide feasibility bound",
            minimal_feasible=feas)
    psi = stats.size - 1
    m = stats.scale
    if policy is DenominatorPolicy.EXCLUDE_SELF:
        return float(eps_i + math.log(psi) + np.min(-stats.dmax / m - stats.log_s_excl))
    with np.errstate(over="ignore"):
        f = np.exp(eps_i + (-stats.dmax / m) - stats.log_s_incl)
        g = np.exp(-stats.log_s_incl)
    w = psi * (-_max_distinct_pair_sum(g, -f))
    w = max(float(w), 0.0)
    return math.log(w) if w > 0 else -math.inf


# ---------------------------------------------------------------------------
# the per-feature mechanism

class FeatureMechanism:
    """Exact randomization probabilities for one feature column."""

    def __init__(self, vocab: Vocabulary, feature: int, eps_i: float,
                 policy: DenominatorPolicy = DenominatorPolicy.EXCLUDE_SELF):
        _check_indices(vocab, 0, feature)
        self.vocab = vocab
        self.feature = feature
        self.eps_i = float(eps_i)
        self.policy = policy
        self.stats = column_stats(vocab.embeddings[:, feature], float(vocab.dim))
        self.log_w = feature_keep_weight(self.stats, self.eps_i, policy)
        psi = self.stats.size - 1
        self._log_psi = math.log(psi)
        self._log_denom = np.logaddexp(self.log_w, self._log_psi)
        log_s = _log_s(self.stats, policy)
        # total replacement mass per token
        self._log_rsum = (self._log_psi + self.stats.log_s_excl
                          - log_s - self._log_denom)
        self._log_s = log_s

    @property
    def size(self) -> int:
        return self.stats.size

    def keep_probability(self, token: int) -> float:
        return 1.0 - float(np.exp(self._log_rsum[token]))

    def probabilities(self, token: int) -> np.ndarray:
        """Outcome probabilities in token-index order; index t is the keep."""
        stats = self.stats
        v = stats.values
        log_a = -np.abs(v[token] - v) / stats.scale
        log_r = self._log_psi + log_a - self._log_s[token] - self._log_denom
        r = np.exp(log_r)
        r[token] = 0.0
        probs = r.copy()
        probs[token] = 1.0 - float(r.sum())
        return probs

    def grouped(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(group values, token->group index, n_tokens x n_groups matrix).

        Outcomes are grouped by bitwise-equal float32 value; tokens sharing a
        value have their masses summed. Near-equal values stay distinct.
        """
        col32 = self.vocab.embeddings[:, self.feature]
        bits = np.ascontiguousarray(col32).view(np.int32)
        _, first, inverse = np.unique(bits, return_index=True, return_inverse=True)
        n = self.size
        G = np.zeros((n, len(first)))
        for t in range(n):
            np.add.at(G[t], inverse, self.probabilities(t))
        G /= G.sum(axis=1, keepdims=True)  # remove summation-order dust
        return col32[first].astype(np.float64), inverse, G

    def sample(self, token, u_keep, u_repl) -> np.ndarray:
        """Sampled source indices for one token; broadcasts over uniforms."""
        u_keep = np.atleast_1d(np.asarray(u_keep, dtype=np.float64))
        u_repl = np.atleast_1d(np.asarray(u_repl, dtype=np.float64))
        keep = self.keep_probability(token)
        out = np.full(u_keep.shape, token, dtype=np.int64)
        replace = u_keep >= keep
        if np.any(replace):
            out[replace] = self._sample_replacements(token, u_repl[replace])
        return out

    def _sample_replacements(self, token: int, u: np.ndarray) -> np.ndarray:
        """Two-sided inverse-CDF draw of a replacement index, O(log n) each."""
        stats = self.stats
        s = int(stats.sorted_pos[token])
        n = stats.size
        su_s = stats.u[s] / stats.scale
        llm = -su_s + stats.prefix_pos[s - 1] if s > 0 else -math.inf
        lrm = su_s + stats.suffix_neg[s + 1] if s < n - 1 else -math.inf
        log_total = np.logaddexp(llm, lrm)
        with np.errstate(divide="ignore"):
            target = np.log(u) + log_total
        out_sorted = np.empty(len(u), dtype=np.int64)
        left = target <= llm
        if np.any(left):
            j = np.searchsorted(stats.prefix_pos[:s], target[left] + su_s, side="left")
            out_sorted[left] = np.minimum(j, s - 1)
        right = ~left
        if np.any(right):
            rem = np.array([_logsubexp(t, llm) for t in target[right]])
            t3 = np.array([_logsubexp(lrm - su_s, r - su_s) for r in rem])
            tail = -stats.suffix_neg[s + 2:n + 1]     # nondecreasing
            j = np.searchsorted(tail, -t3, side="left")
            out_sorted[right] = s + 1 + np.minimum(j, n - 2 - s)
        return stats.order[out_sorted]


def arr_probabilities(vocab: Vocabulary, token: int, feature: int, eps_i: float,
                      policy: DenominatorPolicy = DenominatorPolicy.EXCLUDE_SELF,
                      ) -> FeatureDistribution:
    """Distribution over the feature values of all tokens for one cell.

    Entry k is the probability of outputting token k's value; entry token
    itself is the keep outcome. Values repeated across tokens appear as
    separate entries; exact_feature_distribution merges them.
    """
    _check_indices(vocab, token, feature)
    mech = FeatureMechanism(vocab, feature, eps_i, policy)
    probs = mech.probabilities(token)
    support = vocab.embeddings[:, feature].astype(np.float64)
    return FeatureDistribution(tuple(support), tuple(probs))


def randomize_feature(vocab: Vocabulary, token: int, feature: int, eps_i: float,
                      policy: DenominatorPolicy = DenominatorPolicy.EXCLUDE_SELF,
                      rng_key: tuple[int, int, int] | None = None,
                      seed: int | None = None) -> float:
    """One keyed draw of the randomized value for (token, feature).

    The key is (seed, token, feature); the same key always returns the same
    value, and build_indvocab produces exactly this value for every cell.
    """
    _check_indices(vocab, token, feature)
    if rng_key is None:
        if seed is None:
            raise ArgumentError("provide rng_key or seed")
        rng_key = (seed, token, feature)
    key_seed, key_token, key_feature = rng_key
    mech = FeatureMechanism(vocab, feature, eps_i, policy)
    u_keep = keyed_uniform(key_seed, key_token, key_feature, 0)
    u_repl = keyed_uniform(key_seed, key_token, key_feature, 1)
    idx = int(mech.sample(token, u_keep, u_repl)[0])
    return float(vocab.embeddings[idx, feature])


def build_indvocab(vocab: Vocabulary, plan: BudgetPlan, seed: int,
                   policy: DenominatorPolicy = DenominatorPolicy.EXCLUDE_SELF,
                   ) -> IndVocab:
    """Randomize every (token, feature) cell exactly once.

    Infeasible plans raise InfeasibleBudget aggregating the violating
    (token, feature) pairs and the minimal feasible total budget.
    """
    if len(plan.per_feature) != vocab.dim:
        raise ArgumentError(
            f"plan has {len(plan.per_feature)} feature budgets, vocab has {vocab.dim}")
    mechs = []
    violations: list[tuple[int, int]] = []
    minimal_total = 0.0
    infeasible = False
    for i, eps_i in enumerate(plan.per_feature):
        stats = column_stats(vocab.embeddings[:, i], float(vocab.dim))
        feas = feature_min_epsilon(stats, policy)
        minimal_total += max(feas, 0.0)
        if eps_i < feas - 1e-12 * max(1.0, abs(feas)):
            infeasible = True
            per_token_feas = (stats.dmax - stats.dmin) / stats.scale
            bad = np.nonzero(per_token_feas > eps_i)[0]
            violations.extend((int(t), i) for t in (bad if len(bad) else [int(np.argmax(per_token_feas))]))
        else:
            mechs.append(FeatureMechanism(vocab, i, eps_i, policy))
    if infeasible:
        raise InfeasibleBudget(
            f"plan infeasible for {len(violations)} (token, feature) cells",
            minimal_feasible=minimal_total, violations=violations)

    n, m = vocab.size, vocab.dim
    randomized = np.array(vocab.embeddings, dtype=np.float32, copy=True)
    tokens_idx = np.arange(n)
    for i, mech in enumerate(mechs):
        u_keep = keyed_uniform(seed, tokens_idx, i, 0)
        u_repl = keyed_uniform(seed, tokens_idx, i, 1)
        for t in range(n):
            idx = int(mech.sample(t, u_keep[t], u_repl[t])[0])
            randomized[t, i] = vocab.embeddings[idx, i]
    return IndVocab(
        tokens=vocab.tokens, randomized_embeddings=randomized, plan=plan,
        seed=int(seed), policy=policy, source_digest=vocab.digest())


def exact_feature_distribution(vocab: Vocabulary, token: int, feature: int,
                               eps_i: float,
                               policy: DenominatorPolicy = DenominatorPolicy.EXCLUDE_SELF,
                               ) -> FeatureDistribution:
    """Outcome distribution aggregated over bitwise-distinct output values."""
    _check_indices(vocab, token, feature)
    if vocab.size > AUDIT_MAX_VOCAB:
        raise TooLarge(f"exact audit limited to |V| <= {AUDIT_MAX_VOCAB}")
    mech = FeatureMechanism(vocab, feature, eps_i, policy)
    values, _, G = mech.grouped()
    return FeatureDistribution(tuple(values), tuple(G[token]))


@dataclass(frozen=True)
class EffectiveEpsilonReport:
    """Measured worst-case log likelihood ratios of the built mechanism."""

    per_feature: tuple[float, ...]
    total: float


def measure_effective_epsilon(vocab: Vocabulary, plan: BudgetPlan,
                              policy: DenominatorPolicy = DenominatorPolicy.EXCLUDE_SELF,
                              ) -> EffectiveEpsilonReport:
    """Exhaustive per-feature max log ratio over token pairs and outputs.

    Reports ground truth for the distributions the sampler actually uses,
    whatever the policy. An output reachable by one token with zero
    probability under another yields +inf.
    """
    if vocab.size > AUDIT_MAX_VOCAB:
        raise TooLarge(f"exact audit limited to |V| <= {AUDIT_MAX_VOCAB}")
    if len(plan.per_feature) != vocab.dim:
        raise ArgumentError("plan does not match vocabulary dimension")
    per_feature = []
    for i, eps_i in enumerate(plan.per_feature):
        mech = FeatureMechanism(vocab, i, eps_i, policy)
        _, _, G = mech.grouped()
        with np.errstate(divide="ignore"):
            L = np.log(G)
        spread = L.max(axis=0) - L.min(axis=0)
        per_feature.append(float(spread.max()))
    return EffectiveEpsilonReport(tuple(per_feature), float(math.fsum(per_feature)))


def compose_budget(per_feature) -> float:
    """Total budget of independently randomized features: the exact sum."""
    vals = [float(e) for e in per_feature]
    if any(e < 0 for e in vals):
        raise ArgumentError("per-feature budgets must be nonnegative")
    return math.fsum(vals)


# ---------------------------------------------------------------------------
# persistence

_POLICY_CODES = {DenominatorPolicy.EXCLUDE_SELF: 0, DenominatorPolicy.PAPER_VERBATIM: 1}
_CODE_POLICIES = {v: k for k, v in _POLICY_CODES.items()}


def save_indvocab(ind: IndVocab, path) -> None:
    buf = io.BytesIO()
    buf.write(INDVOCAB_MAGIC)
    buf.write(struct.pack("<H", INDVOCAB_VERSION))
    buf.write(ind.source_digest)
    buf.write(struct.pack("<dIIBQ", ind.plan.total_epsilon, ind.dim, ind.size,
                          _POLICY_CODES[ind.policy], ind.seed))
    buf.write(np.asarray(ind.plan.per_feature, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(ind.randomized_embeddings, dtype="<f4").tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_indvocab(path, source: Vocabulary) -> IndVocab:
    """Load a randomized vocabulary and validate it against its source."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    view = memoryview(data)
    if len(view) < 6 + 32 + 25:
        raise FormatError("randomized vocabulary file shorter than header")
    if bytes(view[:4]) != INDVOCAB_MAGIC:
        raise FormatError(f"bad magic {bytes(view[:4])!r}, expected {INDVOCAB_MAGIC!r}")
    (version,) = struct.unpack_from("<H", view, 4)
    if version != INDVOCAB_VERSION:
        raise FormatError(f"unsupported version {version}")
    digest = bytes(view[6:38])
    total_eps, dim, size, pol_code, seed = struct.unpack_from("<dIIBQ", view, 38)
    off = 38 + struct.calcsize("<dIIBQ")
    if pol_code not in _CODE_POLICIES:
        raise FormatError(f"unknown policy code {pol_code}")
    per = np.frombuffer(view, dtype="<f8", count=dim, offset=off).tolist()
    off += 8 * dim
    expected = 4 * size * dim
    if len(view) - off != expected:
        raise FormatError(f"matrix body is {len(view) - off} bytes, header implies {expected}")
    emb = np.frombuffer(view, dtype="<f4", count=size * dim, offset=off).reshape(size, dim).copy()
    ind = IndVocab(
        tokens=source.tokens, randomized_embeddings=emb,
        plan=BudgetPlan(total_eps, tuple(per)), seed=seed,
        policy=_CODE_POLICIES[pol_code], source_digest=digest)
    ind.validate_against(source)
    return ind
