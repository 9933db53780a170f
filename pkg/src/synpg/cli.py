"""Command-line surface tying the toolkit into reproducible runs.

Commands: gen-corpus, train, eval, generate, augment, parse-tools. Every
command is deterministic given its inputs and seed, echoes its effective
configuration, and writes outputs atomically. Exit codes: 0 success, 2 input
error, 3 numeric failure.

Settings may come from a key=value config file (--config); command-line
flags override file values, which override defaults. Unknown keys in the
file are rejected.
"""

from __future__ import annotations

import argparse
import sys
from collections import Counter

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .evalkit import evaluate_pairs
from .fileio import atomic_write_text
from .model import (
    ParseGeneratorModel,
    SynPGModel,
    TrainingConfig,
    train,
    train_parse_generator,
)
from .numerics import Rng
from .parsekit import (
    Grammar,
    GrammarError,
    ParseError,
    StructureError,
    cky_parse,
    linearize,
    parse_ptb_line,
    pcfg_sample,
    sentences_with_same_words,
    tag_sequence,
    template_string,
)
from .pipeline import FilterThresholds, Rejection, paraphrase_from_template, run_batch
from .tokenizer import build_vocab

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class InputError(ValueError):
    """User-facing input problem; reported and mapped to exit code 2."""


# -- configuration plumbing ------------------------------------------------------


def _parse_config_file(path):
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise InputError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise InputError(f"cannot read config file: {exc}") from None
    return values


class _Req:
    """Marks a setting as required and records its type for file parsing."""

    def __init__(self, typ=str):
        self.typ = typ


def _coerce(raw: str, typ):
    if typ is bool:
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise InputError(f"expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise InputError(f"cannot read {raw!r} as {typ.__name__}") from None


def _effective(args, settings: dict, command: str) -> dict:
    """defaults <- config file <- CLI flags, echoed for provenance."""
    file_vals = _parse_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_vals) - set(settings)
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for name, default in settings.items():
        required = isinstance(default, _Req)
        cli_val = getattr(args, name, None)
        if cli_val is not None:
            out[name] = cli_val
        elif name in file_vals:
            typ = default.typ if required else (str if default is None else type(default))
            out[name] = _coerce(file_vals[name], typ)
        elif required:
            raise InputError(f"missing required setting {name!r}")
        else:
            out[name] = default
    for name in sorted(out):
        print(f"config {command}.{name} = {out[name]}")
    return out


def _load_grammar(path) -> Grammar:
    try:
        return Grammar.load(path)
    except OSError as exc:
        raise InputError(f"cannot read grammar: {exc}") from None
    except GrammarError as exc:
        raise InputError(f"grammar: {exc}") from None


def _read_lines(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return [line.rstrip("\n") for line in fh]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _read_trees(path):
    trees = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            trees.append(parse_ptb_line(line))
        except ParseError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
    return trees


def _load_model(path, expected=None):
    try:
        model = load_checkpoint(path)
    except OSError as exc:
        raise InputError(f"cannot read checkpoint: {exc}") from None
    except CheckpointError as exc:
        raise InputError(str(exc)) from None
    if expected is not None and not isinstance(model, expected):
        raise InputError(f"{path} holds a {model.kind} model")
    return model


# -- evaluation-pair construction --------------------------------------------------


def _closed_class_words(grammar: Grammar, max_size: int = 3):
    """Words of tiny preterminal classes (punctuation, interjections, ...)."""
    words = []
    for pos in sorted(grammar.lex_by_pos):
        lex = grammar.lex_by_pos[pos]
        if len(lex) <= max_size:
            words.extend(w for w, _ in lex)
    return sorted(set(words))


def _partners_for_multiset(grammar, counter, exclude_sentence):
    out = []
    for alt in sentences_with_same_words(grammar, list(counter.elements())):
        if list(alt) == exclude_sentence:
            continue
        tree = cky_parse(grammar, list(alt))
        if tree is not None:
            out.append(tree)
    return out


def resample_partner(grammar: Grammar, tree, rng: Rng):
    """A grammar tree over the same word multiset (or a near variant).

    Preference order: exact multiset resample; then one closed-class token
    added, removed, or swapped; then two closed-class removals. Returns None
    when nothing qualifies.
    """
    words = tree.words()
    base = Counter(words)
    exact = _partners_for_multiset(grammar, base, words)
    if exact:
        return rng.choice(exact)
    closed = _closed_class_words(grammar)
    stages = []
    present = [c for c in closed if base[c] > 0]
    stages.append([base - Counter([c]) for c in present]
                  + [base + Counter([c]) for c in closed])
    stages.append([base - Counter([a]) + Counter([b])
                   for a in present for b in closed if a != b])
    stages.append([base - Counter([a, b])
                   for i, a in enumerate(present) for b in present[i:]
                   if base[a] + base[b] >= (3 if a == b else 2)])
    for variants in stages:
        candidates = []
        for variant in variants:
            if sum(variant.values()) == 0:
                continue
            candidates.extend(_partners_for_multiset(grammar, variant, words))
        if candidates:
            return rng.choice(candidates)
    return None


def make_eval_pairs(grammar: Grammar, n_pairs: int, rng: Rng, max_depth: int = 16):
    """(source, reference) tree pairs; the reference reuses the source's
    words where the grammar allows it and falls back to a fresh sample."""
    pairs = []
    for _ in range(n_pairs):
        _, x1 = pcfg_sample(grammar, rng, max_depth=max_depth)
        x2 = resample_partner(grammar, x1, rng)
        if x2 is None:
            _, x2 = pcfg_sample(grammar, rng, max_depth=max_depth)
        pairs.append((x1, x2))
    return pairs


# -- commands ----------------------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    cfg = _effective(args, {
        "grammar": _Req(),
        "n": _Req(int),
        "seed": 0,
        "out": _Req(),
        "max_depth": 16,
        "pairs": 0,
        "pairs_out": None,
    }, "gen-corpus")
    grammar = _load_grammar(cfg["grammar"])
    rng = Rng(cfg["seed"])
    lines = []
    lengths = []
    words = set()
    templates = Counter()
    for _ in range(cfg["n"]):
        sentence, tree = pcfg_sample(grammar, rng, max_depth=cfg["max_depth"])
        lines.append(tree.to_ptb())
        lengths.append(len(sentence))
        words.update(sentence)
        templates[template_string(tree)] += 1
    atomic_write_text(cfg["out"], "".join(line + "\n" for line in lines))
    mean_len = sum(lengths) / len(lengths) if lengths else 0.0
    print(f"wrote {len(lines)} trees to {cfg['out']}")
    print(f"distinct words = {len(words)}")
    print(f"mean sentence length = {mean_len:.2f}")
    print(f"templates = {len(templates)}")
    for tpl, count in templates.most_common():
        print(f"  {count}\t{tpl}")
    if cfg["pairs"] > 0:
        if not cfg["pairs_out"]:
            raise InputError("pairs requested but no pairs_out path given")
        pair_rng = rng.fork(1)
        pairs = make_eval_pairs(grammar, cfg["pairs"], pair_rng, cfg["max_depth"])
        text = "".join(f"{a.to_ptb()}\t{b.to_ptb()}\n" for a, b in pairs)
        atomic_write_text(cfg["pairs_out"], text)
        same_words = sum(Counter(a.words()) == Counter(b.words()) for a, b in pairs)
        print(f"wrote {len(pairs)} evaluation pairs to {cfg['pairs_out']} "
              f"({same_words} with identical word multisets)")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _effective(args, {
        "kind": _Req(),
        "corpus": _Req(),
        "out": _Req(),
        "loss_csv": None,
        "learning_rate": 1e-4,
        "weight_decay": 1e-5,
        "epochs": 5,
        "word_dropout": 0.4,
        "batch_size": 1,
        "seed": 0,
        "min_count": 1,
        "d_model": 64,
        "n_heads": 4,
        "n_layers": 2,
        "d_ffn": 256,
        "init_seed": 0,
        "embeddings": None,
        "warm_start": False,
    }, "train")
    if cfg["kind"] not in ("synpg", "parsegen", "ablation"):
        raise InputError(f"unknown model kind {cfg['kind']!r}")
    trees = _read_trees(cfg["corpus"])
    if not trees:
        raise InputError("training corpus is empty")
    vocab = build_vocab([t.to_ptb() for t in trees], min_count=cfg["min_count"])
    arch = dict(d_model=cfg["d_model"], n_heads=cfg["n_heads"],
                n_layers_enc_sem=cfg["n_layers"], n_layers_enc_syn=cfg["n_layers"],
                n_layers_dec=cfg["n_layers"], d_ffn=cfg["d_ffn"])
    train_cfg = TrainingConfig(
        learning_rate=cfg["learning_rate"], weight_decay=cfg["weight_decay"],
        epochs=cfg["epochs"], word_dropout=cfg["word_dropout"],
        batch_size=cfg["batch_size"], seed=cfg["seed"])
    try:
        if cfg["kind"] == "parsegen":
            model = ParseGeneratorModel.build(vocab, seed=cfg["init_seed"], **arch)
            if cfg["warm_start"]:
                from .embeddings import warm_start

                warm_start(model)
            report = train_parse_generator(model, trees, train_cfg)
        else:
            disentangled = cfg["kind"] == "synpg"
            model = SynPGModel.build(vocab, seed=cfg["init_seed"],
                                     disentangled=disentangled, **arch)
            if cfg["embeddings"]:
                from .embeddings import apply_word_embeddings, load_embedding_file

                try:
                    table = load_embedding_file(cfg["embeddings"])
                except (OSError, ValueError) as exc:
                    raise InputError(f"embeddings: {exc}") from None
                applied = apply_word_embeddings(model, table)
                print(f"initialized {applied} word embeddings from {cfg['embeddings']}")
            if cfg["warm_start"]:
                from .embeddings import warm_start

                applied = warm_start(model, [t.words() for t in trees])
                print(f"warm start applied ({applied} pretrained embeddings)")
            report = train(model, trees, train_cfg)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    save_checkpoint(model, cfg["out"])
    loss_csv = cfg["loss_csv"] or (cfg["out"] + ".loss.csv")
    atomic_write_text(loss_csv, report.to_csv())
    for key, count in sorted(report.truncations.items()):
        print(f"warning: {count} inputs {key.replace('_', ' ')}")
    print(f"checkpoint written to {cfg['out']}")
    print(f"loss curve written to {loss_csv}")
    print(f"final loss = {report.final_loss:.6f}")
    return EXIT_OK


def _read_pairs(path):
    pairs = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise InputError(f"{path}:{lineno}: expected two tab-separated trees")
        try:
            pairs.append((parse_ptb_line(parts[0]), parse_ptb_line(parts[1])))
        except ParseError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
    return pairs


def cmd_eval(args) -> int:
    cfg = _effective(args, {
        "checkpoint": None,
        "parsegen": None,
        "grammar": _Req(),
        "pairs": _Req(),
        "mode": "parse",
        "baseline": "none",
        "report_out": None,
        "tsv_out": None,
        "min_overlap": 0.3,
        "min_similarity": 0.7,
    }, "eval")
    if cfg["mode"] not in ("parse", "template"):
        raise InputError(f"unknown eval mode {cfg['mode']!r}")
    if cfg["baseline"] not in ("none", "copyinput"):
        raise InputError(f"unknown baseline {cfg['baseline']!r}")
    grammar = _load_grammar(cfg["grammar"])
    pairs = _read_pairs(cfg["pairs"])
    if not pairs:
        raise InputError("pairs file is empty")
    copy_input = cfg["baseline"] == "copyinput"
    synpg_model = parsegen_model = None
    if not copy_input:
        if not cfg["checkpoint"]:
            raise InputError("checkpoint required unless baseline=copyinput")
        synpg_model = _load_model(cfg["checkpoint"], SynPGModel)
        if cfg["mode"] == "template":
            if not cfg["parsegen"]:
                raise InputError("template mode needs a parsegen checkpoint")
            parsegen_model = _load_model(cfg["parsegen"], ParseGeneratorModel)
    thresholds = FilterThresholds(cfg["min_overlap"], cfg["min_similarity"])
    report = evaluate_pairs(synpg_model, parsegen_model, grammar, pairs,
                            mode=cfg["mode"], thresholds=thresholds, copy_input=copy_input)
    print(report.to_text(), end="")
    if cfg["report_out"]:
        atomic_write_text(cfg["report_out"], report.to_text())
    if cfg["tsv_out"]:
        atomic_write_text(cfg["tsv_out"], report.records_tsv())
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _effective(args, {
        "checkpoint": _Req(),
        "parsegen": None,
        "sentence": None,
        "parse": None,
        "template": None,
        "grammar": None,
        "batch_in": None,
        "batch_out": None,
        "strategy": "greedy",
        "min_overlap": 0.3,
        "min_similarity": 0.7,
    }, "generate")
    synpg_model = _load_model(cfg["checkpoint"], SynPGModel)
    thresholds = FilterThresholds(cfg["min_overlap"], cfg["min_similarity"])

    if cfg["batch_in"]:
        if not cfg["batch_out"]:
            raise InputError("batch mode needs batch_out")
        if not cfg["parsegen"]:
            raise InputError("batch mode needs a parsegen checkpoint")
        parsegen_model = _load_model(cfg["parsegen"], ParseGeneratorModel)
        lines = _read_lines(cfg["batch_in"])
        try:
            out_lines = list(run_batch(synpg_model, parsegen_model, lines, thresholds,
                                       cfg["strategy"]))
        except (ParseError, ValueError) as exc:
            raise InputError(str(exc)) from None
        atomic_write_text(cfg["batch_out"], "".join(line + "\n" for line in out_lines))
        print(f"wrote {len(out_lines)} results to {cfg['batch_out']}")
        return EXIT_OK

    if not cfg["sentence"]:
        raise InputError("need sentence (or batch_in)")
    words = cfg["sentence"].split()
    source_tree = None
    if cfg["parse"]:
        try:
            source_tree = parse_ptb_line(cfg["parse"])
        except ParseError as exc:
            raise InputError(f"parse: {exc}") from None
    elif cfg["grammar"]:
        source_tree = cky_parse(_load_grammar(cfg["grammar"]), words)
        if source_tree is None:
            raise InputError("sentence is outside the grammar; pass an explicit parse")

    if cfg["template"]:
        if not cfg["parsegen"]:
            raise InputError("template generation needs a parsegen checkpoint")
        if source_tree is None:
            raise InputError("template generation needs the source parse (or a grammar)")
        parsegen_model = _load_model(cfg["parsegen"], ParseGeneratorModel)
        try:
            template = parse_ptb_line(cfg["template"])
        except ParseError as exc:
            raise InputError(f"template: {exc}") from None
        result = paraphrase_from_template(synpg_model, parsegen_model, words,
                                          source_tree, template, thresholds,
                                          cfg["strategy"])
        if isinstance(result, Rejection):
            print(f"REJECTED {result.reason}")
        else:
            print(" ".join(result))
        return EXIT_OK

    if source_tree is None:
        raise InputError("need a target template or a source parse")
    # no template given: reuse the source's own parse (reconstruction probe)
    try:
        out = synpg_model.paraphrase(words, linearize(source_tree), strategy=cfg["strategy"])
    except StructureError as exc:
        raise InputError(str(exc)) from None
    print(" ".join(out))
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = _effective(args, {
        "checkpoint": _Req(),
        "parsegen": _Req(),
        "grammar": _Req(),
        "dataset": _Req(),
        "out": _Req(),
        "k": 4,
        "seed": 0,
        "min_overlap": 0.3,
        "min_similarity": 0.7,
    }, "augment")
    synpg_model = _load_model(cfg["checkpoint"], SynPGModel)
    parsegen_model = _load_model(cfg["parsegen"], ParseGeneratorModel)
    grammar = _load_grammar(cfg["grammar"])
    thresholds = FilterThresholds(cfg["min_overlap"], cfg["min_similarity"])

    examples = []
    for lineno, line in enumerate(_read_lines(cfg["dataset"]), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise InputError(f"{cfg['dataset']}:{lineno}: expected label<TAB>sentence<TAB>parse")
        label, sentence, tree_text = parts
        try:
            tree = parse_ptb_line(tree_text)
        except ParseError as exc:
            raise InputError(f"{cfg['dataset']}:{lineno}: {exc}") from None
        examples.append((label, sentence, tree))

    # frequency-ranked template inventory observed in the dataset itself
    inventory = Counter(template_string(tree) for _, _, tree in examples)
    ranked = [tpl for tpl, _ in inventory.most_common()]
    rng = Rng(cfg["seed"])
    attempted = Counter()
    accepted = Counter()
    rejected = Counter()
    out_lines = []
    for label, sentence, tree in examples:
        out_lines.append(f"{label}\t{sentence}\t{tree.to_ptb()}")
        own = template_string(tree)
        choices = [t for t in ranked if t != own]
        weights = [inventory[t] for t in choices]
        total = sum(weights)
        picked = []
        pool = list(zip(choices, weights))
        for _ in range(min(cfg["k"], len(pool))):
            probs = [w / total for _, w in pool]
            tpl = rng.choice_weighted([t for t, _ in pool], probs)
            idx = next(i for i, (t, _) in enumerate(pool) if t == tpl)
            total -= pool[idx][1]
            pool.pop(idx)
            picked.append(tpl)
        source_words = sentence.split()
        for tpl in picked:
            attempted[tpl] += 1
            result = paraphrase_from_template(
                synpg_model, parsegen_model, source_words, tree,
                parse_ptb_line(tpl), thresholds)
            if isinstance(result, Rejection):
                rejected[result.reason] += 1
                continue
            cand_tree = cky_parse(grammar, result)
            if cand_tree is None:
                rejected["unparseable"] += 1
                continue
            if template_string(cand_tree) == own:
                rejected["template-unchanged"] += 1
                continue
            accepted[tpl] += 1
            out_lines.append(f"{label}\t{' '.join(result)}\t{cand_tree.to_ptb()}")

    atomic_write_text(cfg["out"], "".join(line + "\n" for line in out_lines))
    kept = sum(accepted.values())
    tried = sum(attempted.values())
    print(f"wrote {len(out_lines)} lines to {cfg['out']} "
          f"({len(examples)} originals + {kept} paraphrases)")
    if tried:
        print(f"acceptance rate = {kept}/{tried}")
        for tpl in ranked:
            if attempted[tpl]:
                print(f"  {accepted[tpl]}/{attempted[tpl]}\t{tpl}")
        for reason, count in rejected.most_common():
            print(f"rejected {reason} = {count}")
    return EXIT_OK


def cmd_parse_tools(args) -> int:
    tool = args.tool
    if tool == "cky":
        if not args.grammar:
            raise InputError("cky needs --grammar")
        grammar = _load_grammar(args.grammar)
        if not args.text:
            raise InputError("cky needs --text with the sentence words")
        tree = cky_parse(grammar, args.text.split())
        print(tree.to_ptb() if tree is not None else "NOPARSE")
        return EXIT_OK
    if not args.text:
        raise InputError(f"{tool} needs --text with a PTB tree")
    try:
        tree = parse_ptb_line(args.text)
    except ParseError as exc:
        raise InputError(str(exc)) from None
    if tool == "linearize":
        print(str(linearize(tree)))
    elif tool == "template":
        print(template_string(tree))
    elif tool == "tags":
        print(" ".join(tag_sequence(tree)))
    else:
        raise InputError(f"unknown parse tool {tool!r}")
    return EXIT_OK


# -- argument wiring ---------------------------------------------------------------


def _add_option(sub, *names, **kw):
    kw.setdefault("default", None)
    sub.add_argument(*names, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synpg",
        description="Syntactically controlled paraphrasing on closed toy grammars.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-corpus", help="sample a parsed corpus from a grammar")
    _add_option(p, "--config")
    _add_option(p, "--grammar")
    _add_option(p, "--n", type=int)
    _add_option(p, "--seed", type=int)
    _add_option(p, "--out")
    _add_option(p, "--max-depth", dest="max_depth", type=int)
    _add_option(p, "--pairs", type=int)
    _add_option(p, "--pairs-out", dest="pairs_out")
    p.set_defaults(handler=cmd_gen_corpus)

    p = subs.add_parser("train", help="train a paraphraser, ablation, or parse generator")
    _add_option(p, "--config")
    _add_option(p, "--kind", choices=["synpg", "parsegen", "ablation"])
    _add_option(p, "--corpus")
    _add_option(p, "--out")
    _add_option(p, "--loss-csv", dest="loss_csv")
    _add_option(p, "--learning-rate", dest="learning_rate", type=float)
    _add_option(p, "--weight-decay", dest="weight_decay", type=float)
    _add_option(p, "--epochs", type=int)
    _add_option(p, "--word-dropout", dest="word_dropout", type=float)
    _add_option(p, "--batch-size", dest="batch_size", type=int)
    _add_option(p, "--seed", type=int)
    _add_option(p, "--min-count", dest="min_count", type=int)
    _add_option(p, "--d-model", dest="d_model", type=int)
    _add_option(p, "--n-heads", dest="n_heads", type=int)
    _add_option(p, "--n-layers", dest="n_layers", type=int)
    _add_option(p, "--d-ffn", dest="d_ffn", type=int)
    _add_option(p, "--init-seed", dest="init_seed", type=int)
    _add_option(p, "--embeddings")
    p.add_argument("--warm-start", dest="warm_start",
                   action="store_const", const=True, default=None)
    p.set_defaults(handler=cmd_train)

    p = subs.add_parser("eval", help="score a checkpoint over evaluation pairs")
    _add_option(p, "--config")
    _add_option(p, "--checkpoint")
    _add_option(p, "--parsegen")
    _add_option(p, "--grammar")
    _add_option(p, "--pairs")
    _add_option(p, "--mode", choices=["parse", "template"])
    _add_option(p, "--baseline", choices=["none", "copyinput"])
    _add_option(p, "--report-out", dest="report_out")
    _add_option(p, "--tsv-out", dest="tsv_out")
    _add_option(p, "--min-overlap", dest="min_overlap", type=float)
    _add_option(p, "--min-similarity", dest="min_similarity", type=float)
    p.set_defaults(handler=cmd_eval)

    p = subs.add_parser("generate", help="paraphrase one sentence or a batch file")
    _add_option(p, "--config")
    _add_option(p, "--checkpoint")
    _add_option(p, "--parsegen")
    _add_option(p, "--sentence")
    _add_option(p, "--parse")
    _add_option(p, "--template")
    _add_option(p, "--grammar")
    _add_option(p, "--batch-in", dest="batch_in")
    _add_option(p, "--batch-out", dest="batch_out")
    _add_option(p, "--strategy", choices=["greedy", "beam"])
    _add_option(p, "--min-overlap", dest="min_overlap", type=float)
    _add_option(p, "--min-similarity", dest="min_similarity", type=float)
    p.set_defaults(handler=cmd_generate)

    p = subs.add_parser("augment", help="add template-diverse paraphrases to a dataset")
    _add_option(p, "--config")
    _add_option(p, "--checkpoint")
    _add_option(p, "--parsegen")
    _add_option(p, "--grammar")
    _add_option(p, "--dataset")
    _add_option(p, "--out")
    _add_option(p, "--k", type=int)
    _add_option(p, "--seed", type=int)
    _add_option(p, "--min-overlap", dest="min_overlap", type=float)
    _add_option(p, "--min-similarity", dest="min_similarity", type=float)
    p.set_defaults(handler=cmd_augment)

    p = subs.add_parser("parse-tools", help="linearize/template/tags/cky utilities")
    p.add_argument("tool", choices=["linearize", "template", "tags", "cky"])
    _add_option(p, "--text")
    _add_option(p, "--grammar")
    p.set_defaults(handler=cmd_parse_tools)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ParseError, GrammarError, StructureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
