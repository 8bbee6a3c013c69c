"""Operator command line.

Every subcommand is a thin adapter over the library modules: no numeric
logic lives here. Randomized commands require --seed (environment variable
NOIR_SEED is the fallback). Exit codes: 0 success, 1 domain error, 2 usage
error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import bounds as bounds_mod
from . import fixtures as fx
from .acceptance import run_suite
from .adversary import (
    BayesAttacker,
    GameThresholds,
    compute_asr,
    frequency_attack,
    reconstruction_game,
)
from .arr import (
    BudgetPlan,
    DenominatorPolicy,
    build_indvocab,
    load_indvocab,
    measure_effective_epsilon,
    save_indvocab,
)
from .errors import ArgumentError, NoirError
from .ltokenizer import generate_permutation, load_permutation, save_permutation
from .metrics import (
    bleu,
    crt,
    fusi,
    leak,
    pass_at_r,
    perturbation_stats,
    rouge_f1,
)
from .protocol import (
    ClientSession,
    GenerationConfig,
    MiddleServer,
    SocketTransport,
    ToyStack,
    client_generate,
    serve_middle,
    stuning_round,
)
from .protocol.frames import Mode
from .protocol.server import TcpListener
from .vocab import load_corpus, load_vocabulary, save_vocabulary, synth_vocabulary


def _policy(name: str) -> DenominatorPolicy:
    try:
        return DenominatorPolicy(name)
    except ValueError:
        raise ArgumentError(f"unknown policy {name!r}") from None


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("NOIR_SEED")
    if env is not None:
        return int(env)
    raise ArgumentError("this command is randomized: pass --seed or set NOIR_SEED")


def _parse_prob(text: str) -> float:
    """Accept '26^-8', '1/208827064576', or a plain float."""
    if "^" in text:
        base, _, exp = text.partition("^")
        return float(base) ** float(exp)
    if "/" in text:
        num, _, den = text.partition("/")
        return float(num) / float(den)
    return float(text)


def _plan_for(vocab, args) -> BudgetPlan:
    if getattr(args, "split_file", None):
        with open(args.split_file, "r", encoding="utf-8") as fh:
            per = tuple(float(x) for x in fh.read().split())
        return BudgetPlan(math.fsum(per), per)
    return BudgetPlan.uniform(args.eps, vocab.dim)


def _tokens_arg(text: str) -> list[str]:
    toks = text.split()
    if not toks:
        raise ArgumentError("empty token sequence")
    return toks


# ---------------------------------------------------------------------------
# subcommand handlers

def _cmd_vocab_gen(args) -> int:
    vocab = synth_vocabulary(args.size, args.dim, _seed(args), args.scale)
    save_vocabulary(vocab, args.out)
    print(f"wrote vocabulary |V|={vocab.size} m={vocab.dim} to {args.out}")
    return 0


def _cmd_vocab_inspect(args) -> int:
    vocab = load_vocabulary(args.path)
    emb = vocab.embeddings
    print(f"size      {vocab.size}")
    print(f"dim       {vocab.dim}")
    print(f"digest    {vocab.digest().hex()}")
    print(f"min/max   {emb.min():.6g} / {emb.max():.6g}")
    for tok, row in list(zip(vocab.tokens, emb))[:args.show_tokens]:
        print(f"  {tok}\t{np.array2string(row, precision=5)}")
    return 0


def _cmd_indvocab_build(args) -> int:
    vocab = load_vocabulary(args.vocab)
    plan = _plan_for(vocab, args)
    ind = build_indvocab(vocab, plan, _seed(args), _policy(args.policy))
    save_indvocab(ind, args.out)
    rep = measure_effective_epsilon(vocab, plan, ind.policy)
    print(f"wrote randomized vocabulary to {args.out}")
    print(f"nominal total eps {plan.total_epsilon:.6g}; measured effective "
          f"{rep.total:.6g} (per-feature max {max(rep.per_feature):.6g})")
    return 0


def _cmd_indvocab_audit(args) -> int:
    vocab = load_vocabulary(args.vocab)
    ind = load_indvocab(args.ind, vocab)
    rep = measure_effective_epsilon(vocab, ind.plan, ind.policy)
    print(f"policy            {ind.policy.value}")
    print(f"nominal total eps {ind.plan.total_epsilon:.9g}")
    print(f"measured total    {rep.total:.9g}")
    for i, (nominal, measured) in enumerate(zip(ind.plan.per_feature, rep.per_feature)):
        flag = "ok" if measured <= nominal + 1e-9 else "VIOLATION"
        print(f"  feature {i}: nominal {nominal:.9g} measured {measured:.9g} {flag}")
    if any(m > n + 1e-9 for m, n in zip(rep.per_feature, ind.plan.per_feature)):
        print("audit FAILED")
        return 1
    print("audit ok (support closure and digest verified on load)")
    return 0


def _cmd_ltok_gen(args) -> int:
    perm = generate_permutation(args.size, _seed(args))
    save_permutation(perm, args.out)
    print(f"wrote permutation secret (size={args.size}, seed={perm.seed}) to {args.out}")
    if args.reveal:
        print("forward:", " ".join(map(str, perm.forward.tolist())))
    else:
        print("forward table withheld (pass --reveal to print the secret)")
    return 0


def _cmd_bounds_token(args) -> int:
    b = bounds_mod.token_inference_bounds(args.eps, args.vocab_size)
    print(f"eps {b.epsilon:g} |V| {b.vocab_size}")
    print(f"lower {b.lower:.9g}")
    print(f"upper {b.upper:.9g}")
    return 0


def _cmd_bounds_prompt(args) -> int:
    rep = bounds_mod.prompt_reconstruction_bound(bounds_mod.PromptBoundParams(
        args.eps, args.vocab_size, args.len, args.rho, args.gamma))
    print(f"eps {args.eps:g} |V| {args.vocab_size} |x| {args.len} "
          f"rho {args.rho:g} gamma {args.gamma:g}")
    print(f"correct-token count {rep.correct_count}")
    print(f"bound {rep.value:.6e} (log10 {rep.log10_value:.3f})"
          + (" VACUOUS" if rep.vacuous else ""))
    return 0


def _cmd_bounds_sweep(args) -> int:
    eps_list = [float(e) for e in args.eps.split(",")]
    rho_list = [float(r) for r in args.rho.split(",")]
    print("eps\t|V|\t|x|\trho\tgamma\tbound\tlog10\tyears@1gps")
    for eps in eps_list:
        for rho in rho_list:
            rep = bounds_mod.prompt_reconstruction_bound(bounds_mod.PromptBoundParams(
                eps, args.vocab_size, args.len, rho, args.gamma))
            years = (bounds_mod.brute_force_time(rep.value, 1.0).expected_years
                     if rep.value > 0 else math.inf)
            print(f"{eps:g}\t{args.vocab_size}\t{args.len}\t{rho:g}\t{args.gamma:g}"
                  f"\t{rep.value:.3e}\t{rep.log10_value:.2f}\t{years:.3e}")
    return 0


def _cmd_bounds_years(args) -> int:
    rep = bounds_mod.brute_force_time(_parse_prob(args.prob), args.rate)
    print(f"success probability {rep.success_probability:.6e} at "
          f"{rep.guesses_per_second:g} guesses/s")
    print(f"expected years      {rep.expected_years:,.2f}")
    print(f"exhaustive years    {rep.exhaustive_years:,.2f}")
    return 0


def _cmd_attack_bayes(args) -> int:
    vocab = load_vocabulary(args.vocab)
    plan = _plan_for(vocab, args)
    policy = _policy(args.policy)
    ind = build_indvocab(vocab, plan, _seed(args), policy)
    attacker = BayesAttacker(vocab, plan, policy)
    hits = 0
    for t in range(vocab.size):
        post, guess = attacker.posterior(ind.randomized_embeddings[t])
        hits += int(guess == t)
        if args.verbose:
            print(f"token {t} ({vocab.tokens[t]}): argmax {guess} "
                  f"posterior max {post.max():.4f}")
    print(f"argmax accuracy over all tokens: {hits}/{vocab.size} = {hits / vocab.size:.4f}")
    print(f"exact expected accuracy: {attacker.exact_accuracy():.6f}")
    return 0


def _cmd_attack_game(args) -> int:
    vocab = load_vocabulary(args.vocab)
    plan = _plan_for(vocab, args)
    prompts = ([_tokens_arg(args.prompt)] if args.prompt
               else fx.game_prompts(vocab) if vocab.size == fx.FIXTURE_VOCAB_SIZE
               else [list(vocab.tokens)])
    rep = reconstruction_game(prompts, vocab, plan, args.rho, args.trials,
                              policy=_policy(args.policy), base_seed=_seed(args))
    eff = measure_effective_epsilon(vocab, plan, _policy(args.policy)).total
    bound = bounds_mod.prompt_reconstruction_bound(bounds_mod.PromptBoundParams(
        eff, vocab.size, len(prompts[0]), args.rho, 0.0)).value
    lo, hi = rep.ci3
    print(f"empirical P[C/|x| >= {args.rho:g}] = {rep.success_rate:.6f} "
          f"(3-sigma CI [{lo:.6f}, {hi:.6f}], {rep.trials} trials)")
    print(f"closed-form bound at measured eps {eff:.4f}: {bound:.6f}")
    print("dominated" if rep.success_rate <= bound + 3 * rep.sigma else "NOT dominated")
    return 0


def _cmd_attack_freq(args) -> int:
    fixture = fx.frequency_fixture(n_prompts=args.prompts)
    vocab = fixture.vocab
    stack = ToyStack.random(m=vocab.dim, d=8, vocab_size=vocab.size, seed=77,
                            middle="identity")
    observations = []
    for prompt in fixture.client_corpus:
        idx = np.array([vocab.index_of(t) for t in prompt])
        x = fixture.indvocab.randomized_embeddings[idx]
        vecs = (stack.encoder.forward(x.astype(np.float32))
                if args.mixing else x)
        observations.append([vecs[j] for j in range(len(prompt))])
    report = frequency_attack(observations, fixture.public_corpus,
                              k=args.k, min_count=args.min_count)
    recovered = report.recovered_tokens()
    template = set(fixture.template)
    print(f"k={args.k} min_count={args.min_count} encoder mixing={args.mixing}")
    print(f"matched grams: {len(report.matched_grams)}; recovered tokens: {sorted(recovered)}")
    print(f"template tokens recovered: {sorted(recovered & template)}")
    print(f"body tokens recovered:     {sorted(recovered - template)}")
    return 0


def _cmd_attack_asr(args) -> int:
    truths = [rec.prompt if args.mode == "prompt" else rec.code
              for rec in load_corpus(args.truth)]
    recons = [rec.prompt if args.mode == "prompt" else rec.code
              for rec in load_corpus(args.recon)]
    thresholds = GameThresholds(rho_b=args.rho_b, rho_r=args.rho_r,
                                rho_f=args.rho_f, rho_cb=args.rho_cb)
    rep = compute_asr(recons, truths, thresholds, mode=args.mode)
    if rep.notes:
        print(f"# {rep.notes}")
    if args.per_record:
        for i, score in enumerate(rep.records):
            print(f"record: {i}")
            print(f"  privacy_win: {score.privacy_win}")
            print(f"  best_similarity: {score.best_bleu:.4f}")
            print(f"  best_overlap: {score.best_rouge:.4f}")
            if score.best_codebleu is not None:
                print(f"  best_code_similarity: {score.best_codebleu:.4f}")
    print(f"records               {len(rep.records)}")
    print(f"privacy ASR           {rep.privacy_rate:.4f}")
    if rep.confidentiality_rate is not None:
        print(f"confidentiality ASR   {rep.confidentiality_rate:.4f}")
    if rep.functionality_rate is not None:
        print(f"functionality ASR     {rep.functionality_rate:.4f}")
    return 0


def _cmd_metrics(args) -> int:
    if args.metric == "bleu":
        print(f"{bleu(_tokens_arg(args.cand), _tokens_arg(args.ref), args.n):.4f}")
    elif args.metric == "rouge":
        print(f"{rouge_f1(_tokens_arg(args.cand), _tokens_arg(args.ref), args.n):.6f}")
    elif args.metric == "crt":
        print(f"{crt(_tokens_arg(args.ref), _tokens_arg(args.cand)):.6f}")
    elif args.metric == "leak":
        with open(args.truth_file, encoding="utf-8") as fh:
            truth = fh.read()
        with open(args.recon_file, encoding="utf-8") as fh:
            recon = fh.read()
        print(leak(truth, recon))
    elif args.metric == "fusi":
        truth = [c == "1" for c in args.truth]
        recon = [c == "1" for c in args.recon]
        value = fusi(truth, recon)
        print("undefined" if value is None else f"{value:.6f}")
    elif args.metric == "passr":
        print(f"{pass_at_r(args.n_total, args.c, args.r):.6f}")
    return 0


def _cmd_metrics_perturb(args) -> int:
    vocab = load_vocabulary(args.vocab)
    ind = load_indvocab(args.ind, vocab)
    corpus = (load_corpus(args.corpus, vocab) if args.corpus
              else fx.tuning_corpus(vocab) if vocab.size == fx.FIXTURE_VOCAB_SIZE
              else [])
    if not corpus:
        raise ArgumentError("pass --corpus for non-fixture vocabularies")
    main, base = perturbation_stats(vocab, ind, corpus,
                                    pair_samples=args.pair_samples,
                                    laplace_scale=args.laplace_scale,
                                    seed=_seed(args))
    print(f"token strings changed    {main.token_string_change_fraction:.4f}")
    print(f"embeddings changed       {main.embedding_change_fraction:.4f}")
    print(f"mean L1 distance         {main.mean_l1:.6f}")
    print(f"mean bigram cos change   {np.mean(main.bigram_cos_changes):.6f}")
    print(f"mean pairwise cos change {np.mean(main.pairwise_cos_changes):.6f}")
    if base is not None:
        print(f"laplace baseline mean L1 {base.mean_l1:.6f} "
              f"(scale {args.laplace_scale:g})")
    return 0


def _cmd_serve(args) -> int:
    host, _, port = args.listen.rpartition(":")
    stack = ToyStack.random(args.m, args.d, args.vocab_size, _seed(args),
                            middle=args.model, lora_rank=args.lora_rank)
    listener = TcpListener(host or "127.0.0.1", int(port))
    server = MiddleServer(stack.middle, args.m, args.d, args.vocab_size,
                          lora_lr=args.lora_lr)
    print(f"serving middle model '{args.model}' on {listener.address[0]}:{listener.address[1]}")
    try:
        serve_middle(listener, server)
    except KeyboardInterrupt:
        pass
    finally:
        listener.close()
    return 0


def _client_session(args, mode: Mode):
    import socket
    host, _, port = args.connect.rpartition(":")
    sock = socket.create_connection((host or "127.0.0.1", int(port)))
    vocab = load_vocabulary(args.vocab)
    ind = load_indvocab(args.ind, vocab)
    perm = load_permutation(args.perm)
    stack = ToyStack.random(vocab.dim, args.d, vocab.size, args.stack_seed,
                            middle=args.model, lora_rank=args.lora_rank)
    session = ClientSession(SocketTransport(sock), stack, mode,
                            lora=args.lora_rank > 0)
    return vocab, ind, perm, stack, session


def _cmd_client_generate(args) -> int:
    vocab, ind, perm, stack, session = _client_session(args, Mode.INFERENCE)
    cfg = GenerationConfig(temperature=args.temperature,
                           max_tokens=args.max_tokens, seed=_seed(args))
    out = client_generate(_tokens_arg(args.prompt), ind, perm, stack, session,
                          cfg, vocab)
    session.bye()
    print("local indices:", " ".join(map(str, out)))
    print("tokens:", " ".join(vocab.tokens[int(perm.inverse[i])] for i in out))
    return 0


def _cmd_client_tune(args) -> int:
    vocab, ind, perm, stack, session = _client_session(args, Mode.TUNING)
    corpus = load_corpus(args.corpus, vocab)
    losses = [stuning_round(corpus, stack, session, args.lr, ind, perm, vocab)
              for _ in range(args.rounds)]
    session.bye()
    print(f"rounds {args.rounds}: loss {losses[0]:.6f} -> {losses[-1]:.6f}")
    return 0


def _cmd_repro(args) -> int:
    if args.generate:
        fx.write_fixture_files(args.fixtures)
        print(f"regenerated fixtures in {args.fixtures}")
    results = run_suite(args.fixtures)
    for res in results:
        # timings off by default so identical argv and seeds give
        # byte-identical reports
        print(res.line(show_runtime=args.timings))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# parser wiring

def _add_seed(p, required_hint=True):
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (falls back to NOIR_SEED)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noir", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    # vocab
    vocab_p = sub.add_parser("vocab", help="vocabulary files")
    vocab_sub = vocab_p.add_subparsers(dest="subcommand", required=True)
    p = vocab_sub.add_parser("gen", help="synthesize a vocabulary")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=_cmd_vocab_gen)
    p = vocab_sub.add_parser("inspect", help="print vocabulary facts")
    p.add_argument("path")
    p.add_argument("--show-tokens", type=int, default=0)
    p.set_defaults(func=_cmd_vocab_inspect)

    # indvocab
    ind_p = sub.add_parser("indvocab", help="randomized vocabularies")
    ind_sub = ind_p.add_subparsers(dest="subcommand", required=True)
    p = ind_sub.add_parser("build", help="randomize a vocabulary once")
    p.add_argument("--vocab", required=True)
    p.add_argument("--eps", type=float, required=True,
                   help="total budget; split uniformly unless --split-file")
    p.add_argument("--split-file", default=None,
                   help="whitespace-separated per-feature budgets")
    p.add_argument("--policy", default=DenominatorPolicy.EXCLUDE_SELF.value,
                   choices=[pol.value for pol in DenominatorPolicy])
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=_cmd_indvocab_build)
    p = ind_sub.add_parser("audit", help="measure effective budgets")
    p.add_argument("--vocab", required=True)
    p.add_argument("--ind", required=True)
    p.set_defaults(func=_cmd_indvocab_audit)

    # ltok
    ltok_p = sub.add_parser("ltok", help="secret tokenizer permutations")
    ltok_sub = ltok_p.add_subparsers(dest="subcommand", required=True)
    p = ltok_sub.add_parser("gen", help="generate a permutation secret")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reveal", action="store_true",
                   help="print the forward table (it is a secret)")
    _add_seed(p)
    p.set_defaults(func=_cmd_ltok_gen)

    # bounds
    bounds_p = sub.add_parser("bounds", help="closed-form risk bounds")
    bounds_sub = bounds_p.add_subparsers(dest="subcommand", required=True)
    p = bounds_sub.add_parser("token")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--vocab-size", type=int, required=True)
    p.set_defaults(func=_cmd_bounds_token)
    p = bounds_sub.add_parser("prompt")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--len", type=int, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--gamma", type=float, default=0.0)
    p.set_defaults(func=_cmd_bounds_prompt)
    p = bounds_sub.add_parser("sweep")
    p.add_argument("--eps", required=True, help="comma-separated budgets")
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--len", type=int, required=True)
    p.add_argument("--rho", required=True, help="comma-separated thresholds")
    p.add_argument("--gamma", type=float, default=0.0)
    p.set_defaults(func=_cmd_bounds_sweep)
    p = bounds_sub.add_parser("years")
    p.add_argument("--prob", required=True, help="e.g. 26^-8 or 4.79e-12")
    p.add_argument("--rate", type=float, default=1.0)
    p.set_defaults(func=_cmd_bounds_years)

    # attack
    attack_p = sub.add_parser("attack", help="adversary games")
    attack_sub = attack_p.add_subparsers(dest="subcommand", required=True)
    p = attack_sub.add_parser("bayes")
    p.add_argument("--vocab", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--split-file", default=None)
    p.add_argument("--policy", default=DenominatorPolicy.EXCLUDE_SELF.value,
                   choices=[pol.value for pol in DenominatorPolicy])
    p.add_argument("--verbose", action="store_true")
    _add_seed(p)
    p.set_defaults(func=_cmd_attack_bayes)
    p = attack_sub.add_parser("game")
    p.add_argument("--vocab", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--split-file", default=None)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--prompt", default=None, help="space-separated tokens")
    p.add_argument("--policy", default=DenominatorPolicy.EXCLUDE_SELF.value,
                   choices=[pol.value for pol in DenominatorPolicy])
    _add_seed(p)
    p.set_defaults(func=_cmd_attack_game)
    p = attack_sub.add_parser("freq")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--min-count", type=int, default=100)
    p.add_argument("--prompts", type=int, default=200)
    p.add_argument("--mixing", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=_cmd_attack_freq)
    p = attack_sub.add_parser("asr")
    p.add_argument("--truth", required=True, help="corpus file of ground truth")
    p.add_argument("--recon", required=True, help="corpus file of reconstructions")
    p.add_argument("--mode", choices=["prompt", "code"], default="prompt")
    p.add_argument("--rho-b", type=float, default=20.0)
    p.add_argument("--rho-r", type=float, default=0.4)
    p.add_argument("--rho-f", type=float, default=0.0)
    p.add_argument("--rho-cb", type=float, default=20.0)
    p.add_argument("--per-record", action="store_true",
                   help="print one key: value block per record")
    p.set_defaults(func=_cmd_attack_asr)

    # metrics
    metrics_p = sub.add_parser("metrics", help="similarity and functionality metrics")
    metrics_sub = metrics_p.add_subparsers(dest="subcommand", required=True)
    for name in ("bleu", "rouge"):
        p = metrics_sub.add_parser(name)
        p.add_argument("--cand", required=True)
        p.add_argument("--ref", required=True)
        p.add_argument("-n", type=int, default=1)
        p.set_defaults(func=_cmd_metrics, metric=name)
    p = metrics_sub.add_parser("crt")
    p.add_argument("--cand", required=True, help="reconstruction tokens")
    p.add_argument("--ref", required=True, help="ground-truth tokens")
    p.set_defaults(func=_cmd_metrics, metric="crt")
    p = metrics_sub.add_parser("leak")
    p.add_argument("--truth-file", required=True)
    p.add_argument("--recon-file", required=True)
    p.set_defaults(func=_cmd_metrics, metric="leak")
    p = metrics_sub.add_parser("fusi")
    p.add_argument("--truth", required=True, help="0/1 pass string of the truth")
    p.add_argument("--recon", required=True, help="0/1 pass string of the reconstruction")
    p.set_defaults(func=_cmd_metrics, metric="fusi")
    p = metrics_sub.add_parser("passr")
    p.add_argument("--n", dest="n_total", type=int, required=True)
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.set_defaults(func=_cmd_metrics, metric="passr")
    p = metrics_sub.add_parser("perturb")
    p.add_argument("--vocab", required=True)
    p.add_argument("--ind", required=True)
    p.add_argument("--corpus", default=None)
    p.add_argument("--pair-samples", type=int, default=200)
    p.add_argument("--laplace-scale", type=float, default=None)
    _add_seed(p)
    p.set_defaults(func=_cmd_metrics_perturb)

    # serve / client
    p = sub.add_parser("serve", help="run the cloud middle server")
    p.add_argument("--listen", required=True, help="host:port")
    p.add_argument("--model", choices=["identity", "affine", "attention"],
                   default="affine")
    p.add_argument("--m", type=int, default=fx.FIXTURE_DIM)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--vocab-size", type=int, default=fx.FIXTURE_VOCAB_SIZE)
    p.add_argument("--lora-rank", type=int, default=0)
    p.add_argument("--lora-lr", type=float, default=0.0)
    _add_seed(p)
    p.set_defaults(func=_cmd_serve)

    client_p = sub.add_parser("client", help="client-side split operations")
    client_sub = client_p.add_subparsers(dest="subcommand", required=True)
    for name, func in (("generate", _cmd_client_generate), ("tune", _cmd_client_tune)):
        p = client_sub.add_parser(name)
        p.add_argument("--connect", required=True, help="host:port")
        p.add_argument("--vocab", required=True)
        p.add_argument("--ind", required=True)
        p.add_argument("--perm", required=True)
        p.add_argument("--stack-seed", type=int, required=True,
                       help="seed of the shared toy weights")
        p.add_argument("--model", choices=["identity", "affine", "attention"],
                       default="affine")
        p.add_argument("--d", type=int, default=8)
        p.add_argument("--lora-rank", type=int, default=0)
        if name == "generate":
            p.add_argument("--prompt", required=True)
            p.add_argument("--max-tokens", type=int, default=8)
            p.add_argument("--temperature", type=float, default=0.25)
        else:
            p.add_argument("--corpus", required=True)
            p.add_argument("--rounds", type=int, default=10)
            p.add_argument("--lr", type=float, default=0.05)
        _add_seed(p)
        p.set_defaults(func=func)

    # repro
    p = sub.add_parser("repro", help="run the acceptance reproduction suite")
    p.add_argument("--fixtures", default="fixtures")
    p.add_argument("--generate", action="store_true",
                   help="rewrite fixture files before running")
    p.add_argument("--timings", action="store_true",
                   help="append per-criterion runtimes (non-reproducible)")
    p.set_defaults(func=_cmd_repro)
    return parser


def _load_config(path) -> dict[str, str]:
    entries = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ArgumentError(f"{path}:{lineno}: expected key=value")
                key, _, value = line.partition("=")
                entries[key.strip()] = value.strip()
    except OSError as exc:
        raise ArgumentError(f"cannot read config {path}: {exc}") from exc
    return entries


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if like is None:
        for cast in (int, float):
            try:
                return cast(value)
            except ValueError:
                pass
    return value


def _apply_config(args, config: dict[str, str], argv: list[str]) -> None:
    """Config entries fill in flags the command line left unset."""
    for key, value in config.items():
        if f"--{key}" in argv:
            continue
        attr = key.replace("-", "_")
        if hasattr(args, attr):
            setattr(args, attr, _coerce(value, getattr(args, attr)))


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    config = {}
    if "--config" in argv:
        at = argv.index("--config")
        if at + 1 >= len(argv):
            print("error: --config needs a path", file=sys.stderr)
            return 2
        try:
            config = _load_config(argv[at + 1])
        except NoirError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        del argv[at:at + 2]
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_config(args, config, argv)
    try:
        return args.func(args)
    except NoirError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
