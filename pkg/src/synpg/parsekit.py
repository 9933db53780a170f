"""Constituency-parse data model and grammar machinery.

Covers PTB-style bracket ingestion, linearization to fused bracket tokens
("(S", "(NP", ")"), template extraction (top two tree levels), POS tag
sequences, a probabilistic CFG with a top-down sampler, a CKY parser over
closed grammars, and an exact enumerator of grammar sentences sharing a word
multiset.

Linearized parse tokens fuse the opening parenthesis with its label, so the
tree of "he runs ." linearizes to tokens (S (NP (PRP ) ) (VP (VBZ ) ) (. ) )
which render without spaces as "(S(NP(PRP))(VP(VBZ))(.))". Terminal words
are always omitted from linearized parses.
"""

from __future__ import annotations

import itertools
from collections import Counter

__all__ = [
    "ParseError",
    "StructureError",
    "GrammarError",
    "ParseTree",
    "LinearizedParse",
    "parse_ptb_line",
    "linearize",
    "delinearize",
    "extract_template",
    "template_string",
    "tag_sequence",
    "Grammar",
    "pcfg_sample",
    "cky_parse",
    "sentences_with_same_words",
]


class ParseError(ValueError):
    """Malformed PTB text; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class StructureError(ValueError):
    """Unbalanced or otherwise malformed linearized parse."""


class GrammarError(ValueError):
    """Invalid grammar description."""


def _check_label(label: str):
    if not label or "(" in label or ")" in label or any(c.isspace() for c in label):
        raise ValueError(f"invalid node label {label!r}")


class ParseTree:
    """A constituency tree node.

    A node has children XOR a terminal word, except in terminal-stripped
    evaluation form where preterminals carry neither.
    """

    __slots__ = ("label", "children", "terminal")

    def __init__(self, label: str, children=(), terminal: str | None = None):
        _check_label(label)
        if children and terminal is not None:
            raise ValueError("a node cannot have both children and a terminal")
        self.label = label
        self.children = tuple(children)
        self.terminal = terminal

    def is_preterminal(self) -> bool:
        return self.terminal is not None

    def words(self) -> list:
        """Left-to-right terminal words (the yield)."""
        if self.terminal is not None:
            return [self.terminal]
        out = []
        for c in self.children:
            out.extend(c.words())
        return out

    def preterminals(self) -> list:
        """Left-to-right preterminal nodes."""
        if self.terminal is not None:
            return [self]
        out = []
        for c in self.children:
            out.extend(c.preterminals())
        return out

    def strip_terminals(self) -> "ParseTree":
        """Same shape with all terminal words removed (evaluation form)."""
        if self.terminal is not None:
            return ParseTree(self.label)
        return ParseTree(self.label, [c.strip_terminals() for c in self.children])

    def to_ptb(self) -> str:
        """Canonical bracket text with single spaces between siblings."""
        if self.terminal is not None:
            return f"({self.label} {self.terminal})"
        if not self.children:
            return f"({self.label})"
        inner = " ".join(c.to_ptb() for c in self.children)
        return f"({self.label} {inner})"

    def key(self):
        """Hashable structural identity."""
        return (self.label, self.terminal, tuple(c.key() for c in self.children))

    def __eq__(self, other):
        return isinstance(other, ParseTree) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"ParseTree({self.to_ptb()!r})"


class LinearizedParse:
    """Balanced sequence of fused bracket tokens ("(X" or ")")."""

    __slots__ = ("tokens",)

    def __init__(self, tokens):
        tokens = list(tokens)
        if not tokens:
            raise StructureError("empty parse token sequence")
        depth = 0
        for i, tok in enumerate(tokens):
            if tok == ")":
                depth -= 1
            elif tok.startswith("(") and len(tok) > 1:
                depth += 1
            else:
                raise StructureError(f"bad parse token {tok!r} at position {i}")
            if depth <= 0 and i < len(tokens) - 1:
                raise StructureError(f"parse closes early at position {i}")
        if depth != 0:
            raise StructureError(f"unbalanced parse ({depth} unclosed)")
        self.tokens = tokens

    def __iter__(self):
        return iter(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        other_tokens = other.tokens if isinstance(other, LinearizedParse) else list(other)
        return self.tokens == other_tokens

    def __str__(self):
        return "".join(self.tokens)

    def __repr__(self):
        return f"LinearizedParse({str(self)!r})"


def parse_ptb_line(text: str) -> ParseTree:
    """Read one whitespace-tolerant PTB S-expression into a ParseTree.

    Accepts label-only nodes like "(NP)" (terminal-stripped form). Raises
    ParseError with a byte offset on unbalanced input, empty labels, or
    trailing garbage.
    """
    n = len(text)

    def skip_ws(p):
        while p < n and text[p].isspace():
            p += 1
        return p

    def read_atom(p):
        start = p
        while p < n and not text[p].isspace() and text[p] not in "()":
            p += 1
        return text[start:p], p

    def read_node(p):
        p = skip_ws(p)
        if p >= n or text[p] != "(":
            raise ParseError("expected '('", p)
        p = skip_ws(p + 1)
        label, p = read_atom(p)
        if not label:
            raise ParseError("empty node label", p)
        children = []
        terminal = None
        while True:
            p = skip_ws(p)
            if p >= n:
                raise ParseError("unbalanced parentheses", p)
            if text[p] == ")":
                p += 1
                break
            if text[p] == "(":
                if terminal is not None:
                    raise ParseError("subtree after terminal word", p)
                child, p = read_node(p)
                children.append(child)
            else:
                word, p = read_atom(p)
                if children or terminal is not None:
                    raise ParseError("more than one terminal under a node", p)
                terminal = word
        try:
            return ParseTree(label, children, terminal), p
        except ValueError as exc:
            raise ParseError(str(exc), p) from None

    tree, pos = read_node(0)
    pos = skip_ws(pos)
    if pos != n:
        raise ParseError("trailing garbage after tree", pos)
    return tree


def linearize(tree: ParseTree) -> LinearizedParse:
    """Depth-first bracket tokens for a tree; terminal words are omitted."""
    tokens = []

    def walk(node):
        tokens.append("(" + node.label)
        for c in node.children:
            walk(c)
        tokens.append(")")

    walk(tree)
    return LinearizedParse(tokens)


def delinearize(tokens) -> ParseTree:
    """Inverse of linearize; yields a terminal-stripped tree.

    Accepts a LinearizedParse or a raw token sequence; raises StructureError
    on empty or unbalanced input.
    """
    tokens = list(tokens)
    if not tokens:
        raise StructureError("empty parse token sequence")
    stack = []
    root = None
    for i, tok in enumerate(tokens):
        if tok.startswith("(") and len(tok) > 1:
            label = tok[1:]
            try:
                _check_label(label)
            except ValueError:
                raise StructureError(f"bad parse token {tok!r} at position {i}") from None
            stack.append((label, []))
        elif tok == ")":
            if not stack:
                raise StructureError(f"unmatched ')' at position {i}")
            label, children = stack.pop()
            node = ParseTree(label, children)
            if stack:
                stack[-1][1].append(node)
            elif root is None:
                root = node
            else:
                raise StructureError(f"multiple roots at position {i}")
        else:
            raise StructureError(f"bad parse token {tok!r} at position {i}")
    if stack:
        raise StructureError(f"unbalanced parse ({len(stack)} unclosed)")
    if root is None:
        raise StructureError("empty parse")
    return root


def extract_template(tree: ParseTree) -> ParseTree:
    """Top two levels of a tree: root label plus its children's labels."""
    return ParseTree(tree.label, [ParseTree(c.label) for c in tree.children])


def template_string(tree: ParseTree) -> str:
    """Canonical text of a tree's template, e.g. "(S(NP)(VP)(.))"."""
    return str(linearize(extract_template(tree)))


def tag_sequence(tree: ParseTree) -> list:
    """Left-to-right preterminal labels (the POS tag sequence)."""
    return [p.label for p in tree.preterminals()]


# -- grammar ---------------------------------------------------------------------


class Grammar:
    """A probabilistic CFG with phrase rules and a preterminal lexicon.

    Text format, one rule per line::

        # comment
        S   -> NP VP PERIOD   # 0.30
        NNP -> "rex"

    The number after '#' on a rule line is the rule probability; rules
    without one split the probability mass left over within their left-hand
    side equally. A symbol must be either phrase-level (only symbol rules)
    or a preterminal (only quoted-word rules). Per-LHS probabilities must
    sum to 1, and every symbol must be reachable and productive. Phrase
    rules may have any arity >= 1; the CKY parser binarizes internally.
    """

    def __init__(self, start: str, phrase_rules, lexical_rules):
        self.start = start
        self.phrase_by_lhs = {}
        for lhs, rhs, prob in phrase_rules:
            self.phrase_by_lhs.setdefault(lhs, []).append((tuple(rhs), float(prob)))
        self.lex_by_pos = {}
        self.lex_by_word = {}
        for pos, word, prob in lexical_rules:
            self.lex_by_pos.setdefault(pos, []).append((word, float(prob)))
            self.lex_by_word.setdefault(word, []).append((pos, float(prob)))
        self._validate()
        self._cky_tables = None
        self._yield_bounds = None

    # construction ------------------------------------------------------------

    @classmethod
    def from_text(cls, text: str) -> "Grammar":
        phrase = []
        lexical = []
        start = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            head, _, tail = line.partition("#")
            prob = None
            tail = tail.strip()
            if tail:
                try:
                    prob = float(tail.split()[0])
                except ValueError:
                    raise GrammarError(f"line {lineno}: bad probability {tail!r}") from None
            if "->" not in head:
                raise GrammarError(f"line {lineno}: missing '->'")
            lhs, _, rhs_text = head.partition("->")
            lhs = lhs.strip()
            if not lhs:
                raise GrammarError(f"line {lineno}: empty left-hand side")
            rhs_tokens = rhs_text.split()
            if not rhs_tokens:
                raise GrammarError(f"line {lineno}: empty right-hand side")
            if start is None:
                start = lhs
            if any(t.startswith('"') for t in rhs_tokens):
                if len(rhs_tokens) != 1:
                    raise GrammarError(f"line {lineno}: lexical rule must have one quoted word")
                word = rhs_tokens[0]
                if len(word) < 3 or not word.endswith('"'):
                    raise GrammarError(f"line {lineno}: bad quoted word {word!r}")
                lexical.append((lhs, word[1:-1], prob, lineno))
            else:
                phrase.append((lhs, tuple(rhs_tokens), prob, lineno))
        if start is None:
            raise GrammarError("grammar has no rules")

        def fill_probs(rules):
            by_lhs = {}
            for lhs, payload, prob, lineno in rules:
                by_lhs.setdefault(lhs, []).append([payload, prob, lineno])
            out = []
            for lhs, group in by_lhs.items():
                explicit = sum(p for _, p, _ in group if p is not None)
                missing = [g for g in group if g[1] is None]
                if missing:
                    if explicit > 1.0 + 1e-9:
                        raise GrammarError(
                            f"line {missing[0][2]}: probabilities for {lhs} exceed 1")
                    share = (1.0 - explicit) / len(missing)
                    for g in missing:
                        g[1] = share
                out.extend((lhs, payload, p) for payload, p, _ in group)
            return out

        return cls(start, fill_probs(phrase), fill_probs(lexical))

    @classmethod
    def load(cls, path) -> "Grammar":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    # validation ----------------------------------------------------------------

    def _validate(self):
        both = set(self.phrase_by_lhs) & set(self.lex_by_pos)
        if both:
            raise GrammarError(f"symbols with both phrase and lexical rules: {sorted(both)}")
        for lhs, rules in itertools.chain(self.phrase_by_lhs.items(), self.lex_by_pos.items()):
            total = sum(p for _, p in rules)
            if abs(total - 1.0) > 1e-9:
                raise GrammarError(f"probabilities for {lhs} sum to {total!r}, not 1")
            for _, p in rules:
                if p < 0:
                    raise GrammarError(f"negative probability under {lhs}")
        symbols = set(self.phrase_by_lhs) | set(self.lex_by_pos)
        if self.start not in symbols:
            raise GrammarError(f"start symbol {self.start} has no rules")
        for lhs, rules in self.phrase_by_lhs.items():
            for rhs, _ in rules:
                for s in rhs:
                    if s not in symbols:
                        raise GrammarError(f"undefined symbol {s} in a rule for {lhs}")
        seen = {self.start}
        frontier = [self.start]
        while frontier:
            sym = frontier.pop()
            for rhs, _ in self.phrase_by_lhs.get(sym, ()):
                for s in rhs:
                    if s not in seen:
                        seen.add(s)
                        frontier.append(s)
        unreachable = symbols - seen
        if unreachable:
            raise GrammarError(f"unreachable symbols: {sorted(unreachable)}")
        productive = set(self.lex_by_pos)
        changed = True
        while changed:
            changed = False
            for lhs, rules in self.phrase_by_lhs.items():
                if lhs in productive:
                    continue
                if any(all(s in productive for s in rhs) for rhs, _ in rules):
                    productive.add(lhs)
                    changed = True
        dead = symbols - productive
        if dead:
            raise GrammarError(f"unproductive symbols: {sorted(dead)}")

    # derived tables -----------------------------------------------------------

    @property
    def preterminals(self):
        return set(self.lex_by_pos)

    def vocabulary(self):
        """All words the lexicon can produce."""
        return set(self.lex_by_word)

    def yield_bounds(self, cap: int = 64):
        """(min, max) yield length per symbol; max is clipped at `cap`."""
        if self._yield_bounds is not None and self._yield_bounds[0] == cap:
            return self._yield_bounds[1]
        lo = {s: 1 for s in self.lex_by_pos}
        hi = {s: 1 for s in self.lex_by_pos}
        # fixed point; phrase symbols start unbounded-high, infinite-low
        for s in self.phrase_by_lhs:
            lo[s] = cap
            hi[s] = 1
        for _ in range(len(self.phrase_by_lhs) + len(self.lex_by_pos) + 2):
            changed = False
            for lhs, rules in self.phrase_by_lhs.items():
                for rhs, _ in rules:
                    l = sum(lo[s] for s in rhs)
                    h = min(cap, sum(hi[s] for s in rhs))
                    if l < lo[lhs]:
                        lo[lhs] = l
                        changed = True
                    if h > hi[lhs]:
                        hi[lhs] = h
                        changed = True
            if not changed:
                break
        self._yield_bounds = (cap, (lo, hi))
        return lo, hi


class SampleError(RuntimeError):
    """Sampling kept overflowing the depth bound."""


def pcfg_sample(grammar: Grammar, rng, max_depth: int = 16, max_retries: int = 100):
    """Draw (sentence word list, tree) by top-down rule sampling.

    Trees deeper than max_depth are discarded and resampled, up to
    max_retries attempts.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")

    class _Overflow(Exception):
        pass

    def expand(symbol, depth):
        if depth > max_depth:
            raise _Overflow()
        lex = grammar.lex_by_pos.get(symbol)
        if lex is not None:
            word = rng.choice_weighted([w for w, _ in lex], [p for _, p in lex])
            return ParseTree(symbol, terminal=word)
        rules = grammar.phrase_by_lhs[symbol]
        rhs = rng.choice_weighted([r for r, _ in rules], [p for _, p in rules])
        return ParseTree(symbol, [expand(s, depth + 1) for s in rhs])

    for _ in range(max_retries):
        try:
            tree = expand(grammar.start, 1)
        except _Overflow:
            continue
        return tree.words(), tree
    raise SampleError(f"no sample within depth {max_depth} after {max_retries} tries")


def _cky_tables(grammar: Grammar):
    """Binarized rule tables for CKY, cached on the grammar.

    N-ary rules are right-binarized through intermediate symbols named
    "<lhs~i~k" which never collide with user labels (they contain '~' plus a
    leading '<'). Unary phrase rules are kept as-is and closed over during
    parsing.
    """
    if grammar._cky_tables is not None:
        return grammar._cky_tables
    import math

    unary = []  # (A, B, logp)
    binary = {}  # (B, C) -> list of (A, logp)
    intermediates = set()
    for lhs, rules in grammar.phrase_by_lhs.items():
        for idx, (rhs, prob) in enumerate(rules):
            logp = math.log(prob) if prob > 0 else -1e30
            if len(rhs) == 1:
                unary.append((lhs, rhs[0], logp))
            elif len(rhs) == 2:
                binary.setdefault((rhs[0], rhs[1]), []).append((lhs, logp))
            else:
                prev = lhs
                carry = logp
                for k in range(len(rhs) - 2):
                    mid = f"<{lhs}~{idx}~{k}"
                    intermediates.add(mid)
                    binary.setdefault((rhs[k], mid), []).append((prev, carry))
                    prev = mid
                    carry = 0.0
                binary.setdefault((rhs[-2], rhs[-1]), []).append((prev, carry))
    grammar._cky_tables = (unary, binary, intermediates)
    return grammar._cky_tables


def cky_parse(grammar: Grammar, sentence) -> ParseTree | None:
    """Max-probability parse of a word sequence, or None if out of language.

    Sound by construction: any returned tree yields the input sentence and
    uses only grammar rules. Words outside the lexicon give None, not an
    error.
    """
    words = list(sentence)
    n = len(words)
    if n == 0:
        return None
    for w in words:
        if w not in grammar.lex_by_word:
            return None
    import math

    unary, binary, intermediates = _cky_tables(grammar)

    # chart[(i, j)]: symbol -> (logprob, backpointer)
    chart = {}

    def close_unary(cell):
        changed = True
        while changed:
            changed = False
            for a, b, lp in unary:
                got = cell.get(b)
                if got is None:
                    continue
                cand = got[0] + lp
                cur = cell.get(a)
                if cur is None or cand > cur[0]:
                    cell[a] = (cand, ("un", b))
                    changed = True

    for i, w in enumerate(words):
        cell = {}
        for pos, p in grammar.lex_by_word[w]:
            lp = math.log(p) if p > 0 else -1e30
            if pos not in cell or lp > cell[pos][0]:
                cell[pos] = (lp, ("lex", w))
        close_unary(cell)
        chart[(i, i + 1)] = cell

    for span in range(2, n + 1):
        for i in range(0, n - span + 1):
            j = i + span
            cell = {}
            for k in range(i + 1, j):
                left = chart[(i, k)]
                right = chart[(k, j)]
                if len(left) <= len(right):
                    for bsym, (bp, _) in left.items():
                        for csym, (cp, _) in right.items():
                            for a, lp in binary.get((bsym, csym), ()):
                                cand = bp + cp + lp
                                cur = cell.get(a)
                                if cur is None or cand > cur[0]:
                                    cell[a] = (cand, ("bin", k, bsym, csym))
                else:
                    for csym, (cp, _) in right.items():
                        for bsym, (bp, _) in left.items():
                            for a, lp in binary.get((bsym, csym), ()):
                                cand = bp + cp + lp
                                cur = cell.get(a)
                                if cur is None or cand > cur[0]:
                                    cell[a] = (cand, ("bin", k, bsym, csym))
            close_unary(cell)
            chart[(i, j)] = cell

    top = chart[(0, n)].get(grammar.start)
    if top is None:
        return None

    def build_children(sym, i, j):
        """Subtrees for sym over span (i, j); intermediates splice upward."""
        _, back = chart[(i, j)][sym]
        kind = back[0]
        if kind == "lex":
            return [ParseTree(sym, terminal=back[1])]
        if kind == "un":
            inner = build_children(back[1], i, j)
            if sym in intermediates:
                return inner
            return [ParseTree(sym, inner)]
        _, k, bsym, csym = back
        parts = build_children(bsym, i, k) + build_children(csym, k, j)
        if sym in intermediates:
            return parts
        return [ParseTree(sym, parts)]

    return build_children(grammar.start, 0, n)[0]


def sentences_with_same_words(grammar: Grammar, words, cap: int = 200):
    """All grammar sentences using exactly the given word multiset.

    Exhaustive dynamic program over (symbol, sub-multiset) items; per-item
    result sets are cut off at `cap` entries (deterministically, after
    sorting), so pathological grammars stay bounded. Returns sorted word
    tuples; callers can CKY-parse each for the tree.
    """
    words = list(words)
    total = Counter(words)
    lo, hi = grammar.yield_bounds(cap=max(len(words) + 1, 8))

    def key_of(counter):
        return tuple(sorted(counter.items()))

    memo = {}

    def derive(symbol, counter, size):
        if not (lo[symbol] <= size <= hi[symbol]):
            return ()
        k = (symbol, key_of(counter))
        if k in memo:
            return memo[k]
        memo[k] = ()  # cycle guard; recursion depth bounded by multiset size
        results = set()
        lex = grammar.lex_by_pos.get(symbol)
        if lex is not None:
            if size == 1:
                (word, count), = counter.items()
                if count == 1 and any(w == word for w, _ in lex):
                    results.add((word,))
        else:
            for rhs, _ in grammar.phrase_by_lhs[symbol]:
                for combo in split_across(rhs, counter, size):
                    results.add(combo)
                    if len(results) >= cap * 4:
                        break
        out = tuple(sorted(results)[:cap])
        memo[k] = out
        return out

    def split_across(symbols, counter, size):
        """Concatenations u1..uk with symbol_i deriving a sub-multiset."""
        if len(symbols) == 1:
            return derive(symbols[0], counter, size)
        first, rest = symbols[0], symbols[1:]
        rest_lo = sum(lo[s] for s in rest)
        rest_hi = sum(hi[s] for s in rest)
        items = sorted(counter.items())
        out = []
        for take in range(max(lo[first], size - rest_hi), min(hi[first], size - rest_lo) + 1):
            for sub in _submultisets(items, take):
                heads = derive(first, sub, take)
                if not heads:
                    continue
                remainder = counter - sub
                tails = split_across(rest, remainder, size - take)
                for h in heads:
                    for t in tails:
                        out.append(h + t)
        return out

    def _submultisets(items, size):
        """Counters of exactly `size` drawn from (word, count) items."""
        def rec(idx, remaining, acc):
            if remaining == 0:
                yield Counter(dict(acc))
                return
            if idx >= len(items):
                return
            word, count = items[idx]
            for take in range(min(count, remaining), -1, -1):
                if take:
                    yield from rec(idx + 1, remaining - take, acc + [(word, take)])
                else:
                    yield from rec(idx + 1, remaining, acc)
        yield from rec(0, size, [])

    return list(derive(grammar.start, total, len(words)))
