"""Perplexity, parameter counts and the four-model comparison table."""

import math
from typing import List, NamedTuple

from slm.errors import FormatError, MissingParse
from slm.lm import classify_context
from slm.transitions import EOS, Leaf, Node, Predict, derivation_of, walk
from slm.treebank import complete_with_boundaries


class PPResult(NamedTuple):
    pp: float
    logprob: float  # natural-log sum over scored events
    words: int  # scored events
    sentences: int
    oov: int


def flat_parse(tokens):
    """Left-branching, left-headed tree over raw tokens; stands in when no parse exists."""
    tree = Leaf(tokens[0])
    for tok in tokens[1:]:
        tree = Node(tree, Leaf(tok), tree.head, "left")
    return tree


def _as_tree(item, scheme):
    if isinstance(item, (Leaf, Node)):
        return item
    if scheme.uses_heads:
        raise MissingParse("scheme %s needs parse trees; corpus is raw text" % scheme)
    return flat_parse(list(item))


def sentence_logprob(model, scheme, tree, include_boundary=False):
    """Sum of ln P(w_k | context) over one sentence; returns (sum, words scored, oov)."""
    total = 0.0
    n = 0
    oov = 0
    for prefix, t in walk(derivation_of(complete_with_boundaries(tree))):
        if not isinstance(t, Predict):
            continue
        if t.word == EOS and not include_boundary:
            continue
        surface = t.word.surface
        if surface not in model.outcome_index:
            oov += 1
        p = model.cond_prob(classify_context(prefix, scheme), surface)
        total += math.log(p) if p > 0.0 else -math.inf
        n += 1
    return total, n, oov


def perplexity(model, scheme, corpus, include_boundary=False):
    """Word perplexity of ``corpus`` (trees, or token lists for word-only schemes).

    ``</s>`` predictions are left out unless ``include_boundary`` is set;
    ``<s>`` only ever appears as context.
    """
    total = 0.0
    n = 0
    oov = 0
    sentences = 0
    for item in corpus:
        s, k, o = sentence_logprob(model, scheme, _as_tree(item, scheme), include_boundary)
        total += s
        n += k
        oov += o
        sentences += 1
    pp = math.exp(-total / n) if n else float("nan")
    return PPResult(pp, total, n, sentences, oov)


def count_params(model):
    """Retained template features; the GIS slack feature is not counted."""
    return len(model.weights)


class ReportRow(NamedTuple):
    name: str
    pp: float
    params: int


class PPReport(NamedTuple):
    rows: List[ReportRow]
    sentences: int
    words: int
    oov: List[int]


def compare_report(models, corpus):
    """``models``: sequence of ``(name, model, scheme)``, scored on the same corpus."""
    corpus = list(corpus)
    rows = []
    oov = []
    stats = None
    for name, model, scheme in models:
        r = perplexity(model, scheme, corpus)
        rows.append(ReportRow(name, r.pp, count_params(model)))
        oov.append(r.oov)
        stats = (r.sentences, r.words)
    sentences, words = stats if stats else (0, 0)
    return PPReport(rows, sentences, words, oov)


def render_table(report):
    """Fixed-width ``LM | PP | param`` table with one-decimal PP."""
    cells = [("LM", "PP", "param")]
    cells += [(r.name, "%.1f" % r.pp, str(r.params)) for r in report.rows]
    w0 = max(len(c[0]) for c in cells)
    w1 = max(len(c[1]) for c in cells)
    w2 = max(len(c[2]) for c in cells)
    lines = ["sentences %d words %d" % (report.sentences, report.words)]
    for i, (a, b, c) in enumerate(cells):
        lines.append("%s | %s | %s" % (a.ljust(w0), b.rjust(w1), c.rjust(w2)))
        if i == 0:
            lines.append("%s-+-%s-+-%s" % ("-" * w0, "-" * w1, "-" * w2))
    return "\n".join(lines) + "\n"


def render_tsv(report):
    lines = ["LM\tPP\tparam\toov"]
    for r, o in zip(report.rows, report.oov):
        lines.append("%s\t%s\t%d\t%d" % (r.name, format(r.pp, ".17g"), r.params, o))
    return "\n".join(lines) + "\n"


def parse_table(text):
    """Rows of a rendered table back as ``ReportRow`` (PP at printed precision)."""
    rows = []
    seen_header = False
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.startswith("#") or line.startswith("sentences ") or not line.strip():
            continue
        cells = [c.strip() for c in line.split("|")]
        if len(cells) != 3:
            if set(line.strip()) <= set("-+"):
                continue
            raise FormatError("expected 3 columns", lineno)
        if not seen_header:
            if cells != ["LM", "PP", "param"]:
                raise FormatError("missing 'LM | PP | param' header", lineno)
            seen_header = True
            continue
        try:
            rows.append(ReportRow(cells[0], float(cells[1]), int(cells[2])))
        except ValueError:
            raise FormatError("bad row", lineno)
    return rows


__all__ = [
    "PPResult", "PPReport", "ReportRow", "perplexity", "count_params", "compare_report",
    "render_table", "render_tsv", "parse_table", "flat_parse", "sentence_logprob"
]
