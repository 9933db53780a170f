"""Template-driven paraphrasing end to end, plus the post-processing gate.

Three steps: read the source's POS tags, expand (tags, template) to a full
parse with the parse generator, then decode a paraphrase from (source
words, generated parse). Candidates that share too little vocabulary with
the source or drift semantically are removed; every failure mode comes back
as a typed Rejection, never an exception.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .model import GenerationError, ParseGeneratorModel, SynPGModel
from .parsekit import ParseTree, StructureError, parse_ptb_line, tag_sequence
from .tokenizer import WORD, encode, to_bag

__all__ = [
    "FilterThresholds",
    "Rejection",
    "ngram_overlap",
    "similarity_proxy",
    "postprocess_filter",
    "paraphrase_from_template",
    "run_batch",
]


@dataclass(frozen=True)
class FilterThresholds:
    """Post-processing gates. A candidate passes when its n-gram overlap and
    paraphrastic similarity both reach their minima.

    min_similarity may go down to -1 (cosine range) so the gate can be
    disabled outright.
    """

    min_ngram_overlap: float = 0.3
    min_similarity: float = 0.7

    def __post_init__(self):
        if not 0.0 <= self.min_ngram_overlap <= 1.0:
            raise ValueError("min_ngram_overlap must lie in [0, 1]")
        if not -1.0 <= self.min_similarity <= 1.0:
            raise ValueError("min_similarity must lie in [-1, 1]")


@dataclass(frozen=True)
class Rejection:
    """Why a candidate was dropped: parse-failure | overlap-too-low |
    similarity-too-low."""

    reason: str
    detail: str = ""


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def ngram_overlap(a, b) -> float:
    """Mean over n in {1, 2} of multiset n-gram intersection over the larger
    n-gram count; orders with no n-grams on either side are skipped, so
    length-1 inputs use unigrams only.
    """
    a, b = list(a), list(b)
    if not a or not b:
        raise ValueError("ngram_overlap needs non-empty token lists")
    scores = []
    for n in (1, 2):
        ca, cb = _ngrams(a, n), _ngrams(b, n)
        if not ca or not cb:
            continue
        inter = sum((ca & cb).values())
        scores.append(inter / max(sum(ca.values()), sum(cb.values())))
    return sum(scores) / len(scores)


def similarity_proxy(model: SynPGModel, a, b) -> float:
    """Cosine of mean-pooled semantic-encoder outputs of two sentences.

    Position-free and bag-canonical on both sides, so the score is invariant
    to token order. Stands in for an external paraphrase similarity scorer.
    """

    def pooled(words):
        seq = encode(list(words), model.vocab, WORD)
        mem = model.encode_semantic(list(to_bag(seq).ids), ordered=False)
        if mem.length == 0:
            raise ValueError("cannot pool an empty sentence")
        return mem.matrix.data.mean(axis=0)

    va, vb = pooled(a), pooled(b)
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm pooled embedding")
    return float(np.dot(va, vb) / (na * nb))


def postprocess_filter(source, candidate, model: SynPGModel,
                       thresholds: FilterThresholds = FilterThresholds()):
    """(True, None) when the candidate clears both gates, else
    (False, reason)."""
    overlap = ngram_overlap(source, candidate)
    if overlap < thresholds.min_ngram_overlap:
        return False, "overlap-too-low"
    similarity = similarity_proxy(model, source, candidate)
    if similarity < thresholds.min_similarity:
        return False, "similarity-too-low"
    return True, None


def paraphrase_from_template(synpg_model: SynPGModel, parsegen_model: ParseGeneratorModel,
                             sentence, source_tree: ParseTree, template,
                             thresholds: FilterThresholds = FilterThresholds(),
                             strategy: str = "greedy"):
    """Run the tags -> full parse -> paraphrase chain and filter the result.

    Returns the accepted word list or a Rejection; generation problems never
    propagate as exceptions.
    """
    words = list(sentence)
    tags = tag_sequence(source_tree)
    try:
        full_parse = parsegen_model.generate_full_parse(tags, template, strategy=strategy)
    except (GenerationError, StructureError) as exc:
        return Rejection("parse-failure", str(exc))
    candidate = synpg_model.paraphrase(words, full_parse, strategy=strategy)
    if not candidate:
        return Rejection("overlap-too-low", "empty output")
    ok, reason = postprocess_filter(words, candidate, synpg_model, thresholds)
    if not ok:
        return Rejection(reason)
    return candidate


def run_batch(synpg_model: SynPGModel, parsegen_model: ParseGeneratorModel,
              lines, thresholds: FilterThresholds = FilterThresholds(),
              strategy: str = "greedy"):
    """Batch mode over "sentence<TAB>ptb-parse<TAB>template" lines.

    Yields "source<TAB>paraphrase<TAB>status" lines; a rejected pair keeps an
    empty paraphrase column and carries the reason as its status.
    """
    for line in lines:
        line = line.rstrip("\n")
        if not line:
            continue
        sentence_text, tree_text, template_text = line.split("\t")
        source_tree = parse_ptb_line(tree_text)
        template = parse_ptb_line(template_text)
        result = paraphrase_from_template(synpg_model, parsegen_model,
                                          sentence_text.split(), source_tree, template,
                                          thresholds, strategy)
        if isinstance(result, Rejection):
            yield f"{sentence_text}\t\t{result.reason}"
        else:
            yield f"{sentence_text}\t{' '.join(result)}\tok"
