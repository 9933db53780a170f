"""Automatic metrics: corpus BLEU, template matching accuracy, and the
paired-corpus evaluation protocol.

Evaluation pairs are (source tree, reference tree). The model only ever sees
the source words and the reference's parse or template, never the
reference's words; the reference yield is used purely for scoring.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .parsekit import (
    Grammar,
    cky_parse,
    extract_template,
    linearize,
    template_string,
)
from .pipeline import FilterThresholds, Rejection, paraphrase_from_template

__all__ = [
    "bleu_corpus",
    "template_matching_accuracy",
    "EvalReport",
    "evaluate_pairs",
]

_BLEU_EPSILON = 1e-9


def _ngram_counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_corpus(hypotheses, references) -> float:
    """Corpus BLEU in [0, 1]: geometric mean of modified n-gram precisions
    (n = 1..4) with the brevity penalty.

    Zero clipped counts are smoothed by adding 1e-9 to the numerator only.
    Orders with no hypothesis n-grams at all (corpus shorter than n) drop
    out of the geometric mean rather than zeroing it.
    """
    hypotheses = [list(h) for h in hypotheses]
    references = [list(r) for r in references]
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis/reference count mismatch")
    if not hypotheses:
        raise ValueError("empty corpus")
    c = sum(len(h) for h in hypotheses)
    r = sum(len(g) for g in references)
    if c == 0:
        return 0.0
    log_precisions = []
    for n in range(1, 5):
        clipped = 0
        total = 0
        for hyp, ref in zip(hypotheses, references):
            hc = _ngram_counts(hyp, n)
            rc = _ngram_counts(ref, n)
            clipped += sum((hc & rc).values())
            total += sum(hc.values())
        if total == 0:
            continue
        log_precisions.append(math.log((clipped + _BLEU_EPSILON if clipped == 0 else clipped)
                                       / total))
    if not log_precisions:
        return 0.0
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(sum(log_precisions) / len(log_precisions))


def template_matching_accuracy(hyp_trees, ref_trees) -> float:
    """Percentage of pairs whose templates match exactly as strings.

    A None hypothesis (unparseable output) counts as a non-match.
    """
    hyp_trees = list(hyp_trees)
    ref_trees = list(ref_trees)
    if len(hyp_trees) != len(ref_trees):
        raise ValueError("hypothesis/reference count mismatch")
    if not ref_trees:
        raise ValueError("empty tree lists")
    matches = 0
    for hyp, ref in zip(hyp_trees, ref_trees):
        if hyp is not None and template_string(hyp) == template_string(ref):
            matches += 1
    return 100.0 * matches / len(ref_trees)


@dataclass
class EvalReport:
    """Metrics plus bookkeeping over one paired corpus.

    evaluated + parse_failed + filtered always equals the pair count; BLEU
    covers the evaluated (hypothesis-producing) pairs, TMA all of them.
    """

    bleu: float
    tma: float
    evaluated: int
    parse_failed: int
    filtered: int
    records: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.evaluated + self.parse_failed + self.filtered

    def to_text(self) -> str:
        lines = [
            f"pairs = {self.total}",
            f"evaluated = {self.evaluated}",
            f"parse_failed = {self.parse_failed}",
            f"filtered = {self.filtered}",
            f"bleu = {self.bleu:.6f}",
            f"bleu_x100 = {100.0 * self.bleu:.2f}",
            f"tma = {self.tma:.2f}",
        ]
        return "\n".join(lines) + "\n"

    def records_tsv(self) -> str:
        lines = ["source\treference\thypothesis\tstatus\ttemplate_match"]
        for rec in self.records:
            lines.append("\t".join([
                " ".join(rec["source"]),
                " ".join(rec["reference"]),
                " ".join(rec["hypothesis"]) if rec["hypothesis"] is not None else "",
                rec["status"],
                "1" if rec["match"] else "0",
            ]))
        return "\n".join(lines) + "\n"


def evaluate_pairs(synpg_model, parsegen_model, grammar: Grammar, pairs,
                   mode: str = "parse", thresholds: FilterThresholds | None = None,
                   strategy: str = "greedy", copy_input: bool = False) -> EvalReport:
    """Score a model over (source tree, reference tree) pairs.

    mode="parse" feeds the reference's full linearized parse straight to the
    paraphraser; mode="template" runs the whole template pipeline (parse
    generator plus post-processing filters). Hypotheses are parsed under the
    closed grammar for template matching. With copy_input=True the source
    sentence itself is echoed as the hypothesis (baseline; no model needed).
    """
    if mode not in ("parse", "template"):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no evaluation pairs")
    if thresholds is None:
        thresholds = FilterThresholds()

    records = []
    parse_failed = 0
    filtered = 0
    for source_tree, ref_tree in pairs:
        source_words = source_tree.words()
        status = "ok"
        if copy_input:
            hyp = list(source_words)
        elif mode == "parse":
            hyp = synpg_model.paraphrase(source_words, linearize(ref_tree), strategy=strategy)
        else:
            result = paraphrase_from_template(
                synpg_model, parsegen_model, source_words, source_tree,
                extract_template(ref_tree), thresholds, strategy)
            if isinstance(result, Rejection):
                hyp = None
                status = result.reason
                if result.reason == "parse-failure":
                    parse_failed += 1
                else:
                    filtered += 1
            else:
                hyp = result
        hyp_tree = cky_parse(grammar, hyp) if hyp else None
        match = hyp_tree is not None and template_string(hyp_tree) == template_string(ref_tree)
        records.append({
            "source": source_words,
            "reference": ref_tree.words(),
            "hypothesis": hyp,
            "status": status,
            "match": match,
        })

    scored = [(r["hypothesis"], r["reference"]) for r in records if r["hypothesis"] is not None]
    bleu = bleu_corpus([h for h, _ in scored], [r for _, r in scored]) if scored else 0.0
    tma = 100.0 * sum(r["match"] for r in records) / len(records)
    return EvalReport(
        bleu=bleu,
        tma=tma,
        evaluated=len(scored),
        parse_failed=parse_failed,
        filtered=filtered,
        records=records,
    )
