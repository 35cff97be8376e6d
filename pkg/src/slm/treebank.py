"""Treebank ingestion: bracketed parses to headed binary trees and training events.

Pipeline per sentence: ``parse_bracketed`` -> ``strip_empty`` ->
``percolate_heads`` -> ``binarize`` -> ``extract_events``.
"""

import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Tuple, Union

from slm import lm
from slm.errors import BracketSyntaxError, FormatError
from slm.textio import join_pair, split_pair, unescape, escape
from slm.transitions import (
    BOS,
    EOS,
    Leaf,
    Node,
    Predict,
    Token,
    derivation_of,
    is_complete_parse,
    leaves,
    make_token,
    parser_choices,
    walk,
)


@dataclass(frozen=True)
class NaryTree:
    label: str
    children: Tuple[Union["NaryTree", Token], ...]

    def __str__(self):
        parts = []
        for c in self.children:
            parts.append("(%s %s)" % (c.tag, c.surface) if isinstance(c, Token) else str(c))
        return "(%s %s)" % (self.label, " ".join(parts))


def nary_leaves(tree):
    if isinstance(tree, Token):
        return [tree]
    out = []
    for c in tree.children:
        out.extend(nary_leaves(c))
    return out


# ---------------------------------------------------------------------------
# bracketed input

_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


_COMMENT_RE = re.compile(r"^#[^\n]*", re.M)


def _tokenize(text):
    line, line_start = 1, 0
    pos = 0
    for m in _TOKEN_RE.finditer(text):
        # advance line bookkeeping over the skipped whitespace
        nl = text.count("\n", pos, m.start())
        if nl:
            line += nl
            line_start = text.rfind("\n", 0, m.start()) + 1
        pos = m.start()
        yield m.group(), line, m.start() - line_start + 1


def parse_bracketed(text):
    """Read Penn-style ``(LABEL (TAG word) ...)`` trees.

    An outer unlabeled bracket around a single tree is removed.  Lines
    starting with ``#`` are comments.
    """
    text = _COMMENT_RE.sub("", text)
    trees = []
    stack = []  # entries: [label, children, line, col]
    expect_label = False
    for tok, line, col in _tokenize(text):
        if tok == "(":
            stack.append([None, [], line, col])
            expect_label = True
        elif tok == ")":
            if not stack:
                raise BracketSyntaxError("unbalanced ')'", line, col)
            label, children, l0, c0 = stack.pop()
            expect_label = False
            if not children:
                raise BracketSyntaxError("empty constituent", l0, c0)
            if len(children) == 1 and isinstance(children[0], str):
                if label is None:
                    raise BracketSyntaxError("preterminal without a tag", l0, c0)
                node = make_token(children[0], label)
            elif any(isinstance(c, str) for c in children):
                raise BracketSyntaxError("bare word among constituents", l0, c0)
            elif label is None:
                if len(children) == 1:
                    node = children[0]
                else:
                    node = NaryTree("", tuple(children))
            else:
                node = NaryTree(label, tuple(children))
            if stack:
                stack[-1][1].append(node)
            elif isinstance(node, Token):
                trees.append(NaryTree("", (node,)))
            else:
                trees.append(node)
        else:
            if not stack:
                raise BracketSyntaxError("text outside brackets", line, col)
            if expect_label:
                stack[-1][0] = tok
                expect_label = False
            else:
                stack[-1][1].append(tok)
    if stack:
        raise BracketSyntaxError("unbalanced '('", stack[-1][2], stack[-1][3])
    return trees


def _base_label(label):
    if label.startswith("-"):
        return label
    return re.split(r"[-=]", label, 1)[0] or label


def strip_empty(tree):
    """Drop ``-NONE-`` leaves, empty constituents and function labels.

    Returns None when nothing is left.
    """
    if isinstance(tree, Token):
        return None if tree.tag == "-NONE-" else tree
    kids = tuple(k for k in (strip_empty(c) for c in tree.children) if k is not None)
    if not kids:
        return None
    return NaryTree(_base_label(tree.label), kids)


# ---------------------------------------------------------------------------
# head rules

DEFAULT_HEAD_RULES = """\
# Head-percolation table: LABEL DIRECTION prio1 prio2 ...
# DIRECTION is the scan order over the children ('left' = left to right).
# For each priority label in turn the first matching child is the head;
# with no match the first child in scan order wins.
ADJP left NNS QP NN $ ADVP JJ VBN VBG ADJP JJR NP JJS DT FW RBR RBS SBAR RB
ADVP right RB RBR RBS FW ADVP TO CD JJR JJ IN NP JJS NN
CONJP right CC RB IN
FRAG right
INTJ left
LST right LS :
NAC left NN NNS NNP NNPS NP NAC EX $ CD QP PRP VBG JJ JJS JJR ADJP FW
NP right NN NNP NNPS NNS NX POS JJR NP
NX right NN NNP NNPS NNS NX
PP left IN TO VBG VBN RP FW
PRN left
PRT right RP
QP left $ IN NNS NN JJ RB DT CD NCD QP JJR JJS
RRC right VP NP ADVP ADJP PP
S left TO IN VP S SBAR ADJP UCP NP
SBAR left WHNP WHPP WHADVP WHADJP IN DT S SQ SINV SBAR FRAG
SBARQ left SQ S SINV SBARQ FRAG
SINV left VBZ VBD VBP VB MD VP S SINV ADJP NP
SQ left VBZ VBD VBP VB MD VP SQ
UCP right
VP left TO VBD VBN MD VBZ VB VBG VBP VP ADJP NN NNS NP
WHADJP left CC WRB JJ ADJP
WHADVP right CC WRB
WHNP left WDT WP WP$ WHADJP WHPP WHNP
WHPP right IN TO FW
# binary labels written by the synthetic corpus generator
HL left
HR right
*default* left
"""


class HeadRule(NamedTuple):
    direction: str
    priorities: Tuple[str, ...]


class HeadRules:
    def __init__(self, rules, default):
        self.rules = dict(rules)
        self.default = default

    @classmethod
    def parse(cls, text):
        rules = {}
        default = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) < 2 or fields[1] not in ("left", "right"):
                raise FormatError("expected 'LABEL left|right prio...'", lineno)
            rule = HeadRule(fields[1], tuple(fields[2:]))
            if fields[0] == "*default*":
                default = rule
            else:
                rules[fields[0]] = rule
        if default is None:
            raise FormatError("head rules need a '*default*' line")
        return cls(rules, default)

    @classmethod
    def default_rules(cls):
        return cls.parse(DEFAULT_HEAD_RULES)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.parse(f.read())

    def head_index(self, label, child_labels):
        rule = self.rules.get(label, self.default)
        order = range(len(child_labels))
        if rule.direction == "right":
            order = reversed(order)
        order = list(order)
        for prio in rule.priorities:
            for i in order:
                if child_labels[i] == prio:
                    return i
        return order[0]


@dataclass(frozen=True)
class HeadedNary:
    label: str
    children: Tuple[Union["HeadedNary", Token], ...]
    head_child: int
    head: Token


def _label(node):
    return node.tag if isinstance(node, Token) else node.label


def percolate_heads(tree, rules):
    if isinstance(tree, Token):
        return tree
    kids = tuple(percolate_heads(c, rules) for c in tree.children)
    h = 0 if len(kids) == 1 else rules.head_index(tree.label, [_label(k) for k in kids])
    head = kids[h] if isinstance(kids[h], Token) else kids[h].head
    return HeadedNary(tree.label, kids, h, head)


def binarize(tree):
    """Headed n-ary tree to a headed binary tree.

    Left siblings of the head child attach first (nearest first), then the
    right siblings, so every intermediate node keeps the head token.
    Unary nodes collapse into their child.
    """
    if isinstance(tree, Token):
        return Leaf(tree)
    kids = [binarize(c) for c in tree.children]
    h = tree.head_child
    cur = kids[h]
    for sib in reversed(kids[:h]):
        cur = Node(sib, cur, cur.head, "right")
    for sib in kids[h + 1:]:
        cur = Node(cur, sib, cur.head, "left")
    return cur


def complete_with_boundaries(body):
    """Wrap a sentence tree with ``</s>`` (adjoin-right) and the final ``<s>`` adjoin."""
    if isinstance(body, Node) and is_complete_parse(body):
        return body
    with_eos = Node(body, Leaf(EOS), EOS, "right")
    return Node(Leaf(BOS), with_eos, EOS, "right")


# ---------------------------------------------------------------------------
# events

class Event(NamedTuple):
    kind: str  # "P" predictor, "T" parser
    context: Tuple[Token, ...]
    outcome: str


def extract_events(tree, scheme):
    """Predictor and (non-forced) parser events in derivation order."""
    complete = complete_with_boundaries(tree)
    out = []
    for prefix, t in walk(derivation_of(complete)):
        if isinstance(t, Predict):
            out.append(Event("P", tuple(lm.classify_context(prefix, scheme)), t.word.surface))
        elif len(parser_choices(prefix)) > 1:
            out.append(Event("T", tuple(lm.parser_context(prefix)), t.value))
    return out


def format_event(ev):
    return "\t".join([ev.kind] + [join_pair(*tok) for tok in ev.context] + [escape(ev.outcome)])


def parse_event(line, lineno=None):
    fields = line.rstrip("\n").split("\t")
    if len(fields) < 2 or fields[0] not in ("P", "T"):
        raise FormatError("bad event line", lineno)
    try:
        ctx = tuple(Token(*split_pair(f)) for f in fields[1:-1])
        outcome = unescape(fields[-1])
    except ValueError as exc:
        raise FormatError(str(exc), lineno)
    if fields[0] == "T" and (len(ctx) != 2 or outcome not in ("AL", "AR", "N")):
        raise FormatError("bad parser event", lineno)
    return Event(fields[0], ctx, outcome)


def read_events(path):
    """Return ``(events, meta)``; meta holds ``# key value`` header entries."""
    events = []
    meta = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if line.startswith("#"):
                parts = line[1:].strip().split(None, 1)
                if len(parts) == 2:
                    meta.setdefault(parts[0], parts[1])
                continue
            if not line.strip():
                continue
            events.append(parse_event(line, lineno))
    return events, meta


def sentence_tree(tree, rules):
    """Bracketed tree -> headed binary sentence tree (no boundaries); None if empty."""
    tree = strip_empty(tree)
    if tree is None:
        return None
    return binarize(percolate_heads(tree, rules))


def _events_for_chunk(args):
    trees, rules, scheme = args
    out = []
    for t in trees:
        body = sentence_tree(t, rules)
        if body is not None:
            out.append(extract_events(body, scheme))
    return out


def prepare(trees, rules, scheme, threads=1, chunk=256):
    """Events for every tree, grouped per sentence, in input order."""
    chunks = [(trees[i:i + chunk], rules, scheme) for i in range(0, len(trees), chunk)]
    if threads > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(_events_for_chunk, chunks))
    else:
        parts = [_events_for_chunk(c) for c in chunks]
    return [sent for part in parts for sent in part]


def read_treebank(path, rules):
    """Headed binary sentence trees from a bracketed file."""
    with open(path, encoding="utf-8") as f:
        trees = parse_bracketed(f.read())
    out = []
    for t in trees:
        body = sentence_tree(t, rules)
        if body is not None:
            out.append(body)
    return out


def to_bracketed(body):
    """Render a headed binary tree with ``HL``/``HR`` labels that the default rules invert."""
    if isinstance(body, Leaf):
        return "(%s %s)" % (body.token.tag, body.token.surface)
    label = "HL" if body.head_from == "left" else "HR"
    return "(%s %s %s)" % (label, to_bracketed(body.left), to_bracketed(body.right))


__all__ = [
    "NaryTree", "HeadRules", "HeadedNary", "Event", "parse_bracketed", "strip_empty",
    "percolate_heads", "binarize", "extract_events", "complete_with_boundaries",
    "format_event", "parse_event", "read_events", "prepare", "read_treebank",
    "to_bracketed", "nary_leaves", "leaves",
]
