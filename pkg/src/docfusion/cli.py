"""Command-line interface: one subcommand per pipeline step.

Configuration precedence, lowest to highest: built-in defaults, ``--config``
file, ``--set key=value`` overrides, explicit flags such as ``--beam``.

Exit status: 0 on success, 1 on usage errors (bad flags, unknown config
keys), 2 on data errors (missing or malformed files, inconsistent inputs).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .backtranslation import back_translate_docs, combine_balanced, make_pseudo_documents
from .config import RunConfig
from .core import (Document, FormatError, ParallelDocument, Vocabulary, encode_docs, read_corpus, read_parallel,
                   write_corpus, write_parallel)
from .decoder import DecodeConfig, FusionModels, decode_document, rerank_pronouns, score_reference
from .evaluation import (contrastive_accuracy, corpus_bleu, format_report, keyword_accuracy,
                         read_challenge_set, read_keywords, targeted_f1)
from .fusion import FusionScales, full_grid, restricted_grid
from .ngram_lm import load_arpa, perplexity, save_arpa, train_ngram
from .scale_tuning import (compute_features, examples_from_docs, grid_search_scales, learn_subword_scales,
                           load_scale_table, save_scale_table)
from .syncorpus import PRONOUNS
from .translation_model import TranslationModel, train_tm

logger = logging.getLogger("docfusion")

COMMANDS = ("gen-corpus", "train-tm", "train-lm", "tune-grid", "learn-scales", "translate", "rerank",
            "backtranslate", "make-pseudo-docs", "combine", "evaluate", "score-contrastive", "perplexity")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this CLI reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- config plumbing -----------------------------------------------------------

# flag destination -> RunConfig key
_FLAG_KEYS = {
    "seed": "seed", "k": "k", "order": "order", "discount": "discount", "mu": "mu", "iterations": "ibm_iterations",
    "beam": "beam", "bt_beam": "bt_beam", "alpha": "alpha", "fusion": "fusion_mode", "objective": "objective",
    "grid_step": "grid_step", "lr": "lr", "epochs": "epochs", "batch_size": "batch_size",
    "init_std": "init_std", "pseudo_min": "pseudo_doc_min", "pseudo_max": "pseudo_doc_max",
}


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    try:
        cfg = cfg.override(args.set or [])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pairs = [(key, str(getattr(args, dest))) for dest, key in _FLAG_KEYS.items()
             if getattr(args, dest, None) is not None]
    if getattr(args, "restricted", None) is not None:
        pairs.append(("restricted", str(args.restricted)))
    try:
        return cfg.update(pairs, origin="command line")
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def decode_config(cfg: RunConfig, **kw) -> DecodeConfig:
    grid = (restricted_grid if cfg.restricted else full_grid)(cfg.grid_step, cfg.grid_upper)
    return DecodeConfig(beam_size=cfg.beam, length_norm_alpha=cfg.alpha, grid=grid).with_(**kw)


def _vocab(args) -> Vocabulary:
    return Vocabulary.load(args.vocab)


def _docs(path, vocab: Vocabulary, prefix: str = "doc") -> list[Document]:
    return encode_docs(vocab, read_corpus(path), prefix)


def _write_docs(path, vocab: Vocabulary, docs) -> None:
    write_corpus(path, [[vocab.decode(s).split() for s in d] for d in docs])


def _fusion_models(args, vocab: Vocabulary) -> FusionModels:
    tm = TranslationModel.load(args.tm, vocab)
    lm = load_arpa(args.lm, vocab) if getattr(args, "lm", None) else None
    ilm = load_arpa(args.ilm, vocab) if getattr(args, "ilm", None) else (tm.target_ngram if lm else None)
    return FusionModels(tm, lm, ilm)


def _decode_kwargs(args, cfg: RunConfig, vocab: Vocabulary) -> dict:
    kw = {"fusion_mode": cfg.fusion_mode}
    if getattr(args, "scales", None):
        try:
            kw["scales"] = FusionScales.parse(args.scales)
        except ValueError as exc:
            raise UsageError(f"--scales: {exc}") from None
    elif getattr(args, "scales_file", None):
        kw["scales"] = FusionScales.load(args.scales_file)
    if cfg.fusion_mode == "learned":
        if not getattr(args, "scale_table", None):
            raise UsageError("fusion mode 'learned' needs --scale-table")
        kw["scale_table"] = load_scale_table(args.scale_table, vocab)
    return kw


# -- subcommands ------------------------------------------------------------------


def cmd_gen_corpus(args, cfg: RunConfig) -> None:
    from .experiments import corpus_vocab, make_corpus

    corpus = make_corpus(cfg)
    out = Path(args.out)
    corpus.write(out)
    corpus_vocab(corpus).save(out / "vocab.txt")
    cfg.save(out / "run.cfg")
    print(format_report(corpus.manifest), end="")


def cmd_train_tm(args, cfg: RunConfig) -> None:
    vocab = _vocab(args)
    docs = read_parallel(args.src, args.tgt, vocab)
    if args.reverse:
        docs = [ParallelDocument(d.id, d.target, d.source) for d in docs]
    pairs = [p for d in docs for p in d.pairs]
    k = args.context_k or 0
    tm = train_tm(pairs, vocab, order=cfg.order, discount=cfg.discount, mu=cfg.mu, iterations=cfg.ibm_iterations,
                  target_docs=[d.target_doc() for d in docs] if k else None, context_k=k)
    tm.save(args.out)


def cmd_train_lm(args, cfg: RunConfig) -> None:
    vocab = _vocab(args)
    lm = train_ngram(_docs(args.corpus, vocab), vocab, cfg.order, cfg.discount, context_k=args.context_k)
    save_arpa(lm, args.out)


def cmd_tune_grid(args, cfg: RunConfig) -> None:
    vocab = _vocab(args)
    models = _fusion_models(args, vocab)
    valid = read_parallel(args.src, args.tgt, vocab)
    mode = args.mode
    grid = decode_config(cfg).grid
    rep = grid_search_scales(models, valid, grid, objective=cfg.objective, config=decode_config(cfg), k=cfg.k,
                             mode=mode)
    print(rep.format())
    if args.out:
        rep.best.save(args.out)


def cmd_learn_scales(args, cfg: RunConfig) -> None:
    vocab = _vocab(args)
    models = _fusion_models(args, vocab)
    docs = read_parallel(args.src, args.tgt, vocab)
    feats = compute_features(examples_from_docs(docs, cfg.k), models)
    res = learn_subword_scales(feats, vocab_size=len(vocab), restricted=cfg.restricted, tied=args.tied,
                               init_std=cfg.init_std, lr=cfg.lr, epochs=cfg.epochs, batch_size=cfg.batch_size,
                               seed=cfg.seed)
    save_scale_table(res.table, vocab, args.out)
    print(format_report({"initial_ce": res.trace[0], "final_ce": res.trace[-1]}), end="")


def cmd_translate(args, cfg: RunConfig) -> None:
    vocab = _vocab(args)
    models = _fusion_models(args, vocab)
    dc = decode_config(cfg, **_decode_kwargs(args, cfg, vocab))
    trace = bool(args.trace) and dc.fusion_mode == "on_the_fly"
    out_docs, trace_lines = [], []
    for doc in _docs(args.input, vocab):
        results = decode_document(models, dc, doc, cfg.k, trace=trace)
        out_docs.append([r.tokens for r in results])
        for r in results:
            trace_lines += [f"{i}\t{vocab.decode_id(t)}\t" + "\t".join(f"{x:.6f}" for x in s) for i, t, s in r.trace]
            trace_lines.append("")
    _write_docs(args.out, vocab, out_docs)
    if args.trace:
        Path(args.trace).write_text("\n".join(trace_lines) + ("\n" if trace_lines else ""), encoding="utf-8")


def cmd_rerank(args, cfg: RunConfig) -> None:
    vocab = _vocab(args)
    lm = load_arpa(args.lm, vocab)
    pronouns = [vocab.lookup(p) for p in args.pronouns.split(",") if p]
    if vocab.unk in pronouns:
        raise ValueError("pronoun list contains out-of-vocabulary tokens")
    out_docs = []
    for doc in _docs(args.input, vocab):
        hyps: list = []
        for h in doc.sentences:
            ctx = hyps[-cfg.k:] if cfg.k else []
            hyps.append(rerank_pronouns(h, lm, ctx, pronouns))
        out_docs.append(hyps)
    _write_docs(args.out, vocab, out_docs)


def cmd_backtranslate(args, cfg: RunConfig) -> None:
    vocab = _vocab(args)
    reverse = TranslationModel.load(args.tm, vocab)
    mono = _docs(args.mono, vocab, "mono")
    bt = back_translate_docs(reverse, mono, beam=cfg.bt_beam, config=decode_config(cfg))
    write_parallel(args.out_src, args.out_tgt, vocab, bt)


def cmd_make_pseudo_docs(args, cfg: RunConfig) -> None:
    vocab = _vocab(args)
    pairs = [p for d in read_parallel(args.src, args.tgt, vocab) for p in d.pairs]
    docs = make_pseudo_documents(pairs, (cfg.pseudo_doc_min, cfg.pseudo_doc_max), seed=cfg.seed)
    write_parallel(args.out_src, args.out_tgt, vocab, docs)


def cmd_combine(args, cfg: RunConfig) -> None:
    vocab = _vocab(args)
    auth = read_parallel(args.auth_src, args.auth_tgt, vocab)
    syn = read_parallel(args.syn_src, args.syn_tgt, vocab)
    bundle = combine_balanced(auth, syn)
    write_parallel(args.out_src, args.out_tgt, vocab, bundle.documents())
    if args.manifest:
        bundle.write_manifest(args.manifest, {"authentic": f"{args.auth_src},{args.auth_tgt}",
                                              "synthetic": f"{args.syn_src},{args.syn_tgt}"})


def cmd_evaluate(args, cfg: RunConfig) -> None:
    if args.report:
        from .experiments import SYSTEMS, Experiment, format_table

        systems = args.systems.split(",") if args.systems else list(SYSTEMS)
        unknown = [s for s in systems if s not in SYSTEMS]
        if unknown:
            raise UsageError(f"unknown systems {unknown}; expected names from {SYSTEMS}")
        table = format_table(Experiment(cfg).run(systems))
        print(table, end="")
        if args.out:
            Path(args.out).write_text(table, encoding="utf-8")
        return
    rows: dict[str, float | str] = {}
    if args.hyp or args.ref:
        if not (args.hyp and args.ref):
            raise UsageError("--hyp and --ref go together")
        hyps = [s for d in read_corpus(args.hyp) for s in d]
        refs = [s for d in read_corpus(args.ref) for s in d]
        rows["BLEU"] = corpus_bleu(hyps, refs)
    if args.challenge_hyp:
        ch = [s for d in read_corpus(args.challenge_hyp) for s in d]
        if args.challenge:
            examples = read_challenge_set(args.challenge)
            cats = {g: [p] for g, p in PRONOUNS.items()}
            rows["pronF1"] = targeted_f1(ch, [list(e.reference) for e in examples], cats).f1
        if args.keywords:
            rows["kwAcc"] = keyword_accuracy(ch, read_keywords(args.keywords))
    if not rows:
        raise UsageError("nothing to evaluate: pass --hyp/--ref, --challenge-hyp, or --report")
    text = format_report(rows)
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")


def cmd_score_contrastive(args, cfg: RunConfig) -> None:
    vocab = _vocab(args)
    models = _fusion_models(args, vocab)
    dc = decode_config(cfg, **_decode_kwargs(args, cfg, vocab))
    examples = read_challenge_set(args.challenge)
    enc = lambda seq: vocab.encode(list(seq))  # noqa: E731

    def scorer(sent, ctx, src):
        return score_reference(models, dc, enc(src), [enc(c) for c in ctx], enc(sent))

    lines = []
    for i, ex in enumerate(examples):
        scores = [scorer(ex.reference, ex.context, ex.source)] + [scorer(a, ex.context, ex.source)
                                                                   for a in ex.contrastive]
        lines.append(f"{i}\t" + "\t".join(f"{s:.6f}" for s in scores))
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(format_report({"contrAcc": contrastive_accuracy(scorer, examples)}), end="")


def cmd_perplexity(args, cfg: RunConfig) -> None:
    vocab = _vocab(args)
    lm = load_arpa(args.lm, vocab)
    docs = _docs(args.corpus, vocab)
    corpus = docs if lm.context_k else [s for d in docs for s in d.sentences]
    print(format_report({"perplexity": perplexity(lm, corpus)}), end="")


# -- parser -----------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("-v", "--verbose", action="store_true")


def _models(p: argparse.ArgumentParser, tm_required: bool = True) -> None:
    p.add_argument("--vocab", required=True)
    p.add_argument("--tm", required=tm_required, help="translation model directory")
    p.add_argument("--lm", help="document LM (ARPA)")
    p.add_argument("--ilm", help="internal LM (ARPA); defaults to the TM's own target n-gram")


def _fusion_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fusion", choices=("none", "static", "context_delta", "on_the_fly", "learned"))
    p.add_argument("--scales", help="static scales 'l0,l1,l2'")
    p.add_argument("--scales-file")
    p.add_argument("--scale-table")
    p.add_argument("--beam", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--k", type=int)


def _grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid-step", type=float)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--restricted", dest="restricted", action="store_const", const=True)
    g.add_argument("--full", dest="restricted", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="docfusion", description="Document-level LM fusion for sentence-level translation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-corpus", help="generate the synthetic bilingual corpus")
    _common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train-tm", help="train a sentence-level (or context-aware) translation model")
    _common(p)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True, help="model directory")
    p.add_argument("--reverse", action="store_true", help="train target-to-source")
    p.add_argument("--context-k", type=int, default=0, help="target context sentences for the n-gram component")
    for flag, typ in (("--order", int), ("--discount", float), ("--mu", float), ("--iterations", int)):
        p.add_argument(flag, type=typ)
    p.set_defaults(func=cmd_train_tm)

    p = sub.add_parser("train-lm", help="train an n-gram LM and write ARPA")
    _common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--context-k", type=int, default=0)
    p.add_argument("--order", type=int)
    p.add_argument("--discount", type=float)
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("tune-grid", help="grid-search static fusion scales on validation data")
    _common(p)
    _models(p)
    _grid_flags(p)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--objective", choices=("bleu", "ce"))
    p.add_argument("--mode", choices=("static", "context_delta"), default="static")
    p.add_argument("--beam", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--out", help="write the best scales here")
    p.set_defaults(func=cmd_tune_grid)

    p = sub.add_parser("learn-scales", help="learn per-token fusion scales by cross-entropy")
    _common(p)
    _models(p)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tied", action="store_true", help="one scale shared by all tokens")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--restricted", dest="restricted", action="store_const", const=True)
    g.add_argument("--full", dest="restricted", action="store_const", const=False)
    for flag, typ in (("--lr", float), ("--epochs", int), ("--batch-size", int), ("--init-std", float),
                      ("--k", int)):
        p.add_argument(flag, type=typ)
    p.set_defaults(func=cmd_learn_scales)

    p = sub.add_parser("translate", help="decode a source corpus document by document")
    _common(p)
    _models(p)
    _fusion_flags(p)
    _grid_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="per-step chosen scales (on-the-fly mode)")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("rerank", help="swap pronouns in hypotheses by document-LM score")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pronouns", default=",".join(PRONOUNS.values()))
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("backtranslate", help="translate monolingual target documents with a reverse model")
    _common(p)
    p.add_argument("--tm", required=True, help="reverse (target-to-source) model directory")
    p.add_argument("--mono", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out-src", required=True)
    p.add_argument("--out-tgt", required=True)
    p.add_argument("--beam", dest="bt_beam", type=int, help="back-translation beam size")
    p.set_defaults(func=cmd_backtranslate)

    p = sub.add_parser("make-pseudo-docs", help="cut shuffled sentence pairs into pseudo-documents")
    _common(p)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out-src", required=True)
    p.add_argument("--out-tgt", required=True)
    p.add_argument("--pseudo-min", type=int)
    p.add_argument("--pseudo-max", type=int)
    p.set_defaults(func=cmd_make_pseudo_docs)

    p = sub.add_parser("combine", help="balance authentic and synthetic documents")
    _common(p)
    for flag in ("--auth-src", "--auth-tgt", "--syn-src", "--syn-tgt", "--out-src", "--out-tgt", "--vocab"):
        p.add_argument(flag, required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("evaluate", help="score outputs, or run every system with --report")
    _common(p)
    p.add_argument("--hyp")
    p.add_argument("--ref")
    p.add_argument("--challenge-hyp")
    p.add_argument("--challenge")
    p.add_argument("--keywords")
    p.add_argument("--report", action="store_true", help="build and evaluate systems, print the comparison table")
    p.add_argument("--systems", help="comma-separated subset for --report")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("score-contrastive", help="contrastive accuracy on a challenge set")
    _common(p)
    _models(p)
    _fusion_flags(p)
    _grid_flags(p)
    p.add_argument("--challenge", required=True)
    p.add_argument("--out", help="per-example scores: index, reference, variants")
    p.set_defaults(func=cmd_score_contrastive)

    p = sub.add_parser("perplexity", help="perplexity of an ARPA LM on a corpus")
    _common(p)
    p.add_argument("--lm", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.set_defaults(func=cmd_perplexity)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        cfg = resolve_config(args)
        args.func(args, cfg)
    except UsageError as exc:
        print(f"docfusion: usage error: {exc}", file=sys.stderr)
        return 1
    except KeyError as exc:
        print(f"docfusion: usage error: {exc.args[0]}", file=sys.stderr)
        return 1
    except (FormatError, OSError, ValueError) as exc:
        print(f"docfusion: data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
