"""Word-parse prefixes, headed binary trees and the PREDICTOR/PARSER transitions.

A sentence ``w_1 .. w_l`` is generated left to right.  The predictor pushes
one word at a time; the parser then merges the two topmost trees zero or
more times (adjoin-left keeps the left child's head, adjoin-right the right
child's) and hands control back with a null transition.  Once ``</s>`` has
been absorbed and only ``<s>`` lies to its left, a final deterministic
adjoin puts ``<s>`` under the root.
"""

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Tuple, Union

from slm.errors import FormatError, IllegalTransition, NotCompleteParse
from slm.textio import join_pair, split_pair


class Token(NamedTuple):
    surface: str
    tag: str


BOS = Token("<s>", "SB")
EOS = Token("</s>", "SE")
UNK_TAG = "UNK-TAG"
_RESERVED = {BOS.surface: BOS.tag, EOS.surface: EOS.tag}


def make_token(surface, tag=UNK_TAG):
    """Build a token, enforcing the reserved ``<s>``/``</s>`` tags."""
    if not surface:
        raise ValueError("empty token surface")
    if surface in _RESERVED:
        if tag not in (_RESERVED[surface], UNK_TAG):
            raise ValueError("%s must carry tag %s, got %s" % (surface, _RESERVED[surface], tag))
        tag = _RESERVED[surface]
    if not tag:
        raise ValueError("empty tag for %r" % surface)
    return Token(surface, tag)


@dataclass(frozen=True)
class Leaf:
    token: Token

    @property
    def head(self):
        return self.token

    def __str__(self):
        return self.token.surface


@dataclass(frozen=True)
class Node:
    left: "HeadedTree"
    right: "HeadedTree"
    head: Token
    head_from: str

    def __post_init__(self):
        if self.head_from not in ("left", "right"):
            raise ValueError("head_from must be 'left' or 'right'")
        child = self.left if self.head_from == "left" else self.right
        if child.head != self.head:
            raise ValueError("head %r does not percolate from the %s child" % (self.head, self.head_from))

    def __str__(self):
        return "(%s %s)|%s" % (self.left, self.right, self.head.surface)


HeadedTree = Union[Leaf, Node]


def adjoin(left, right, head_from):
    head = left.head if head_from == "left" else right.head
    return Node(left, right, head, head_from)


def leaves(tree):
    """Leaf tokens of ``tree`` from left to right."""
    out = []
    stack = [tree]
    while stack:
        t = stack.pop()
        if isinstance(t, Leaf):
            out.append(t.token)
        else:
            stack.append(t.right)
            stack.append(t.left)
    return out


class Op(Enum):
    ADJOIN_LEFT = "AL"
    ADJOIN_RIGHT = "AR"
    NULL = "N"

    def __repr__(self):
        return self.value


AdjoinLeft = Op.ADJOIN_LEFT
AdjoinRight = Op.ADJOIN_RIGHT
Null = Op.NULL
PARSER_OPS = (AdjoinLeft, AdjoinRight, Null)


@dataclass(frozen=True)
class Predict:
    word: Token

    def __post_init__(self):
        if self.word.surface == BOS.surface:
            raise ValueError("<s> cannot be predicted")

    def __repr__(self):
        return "Predict(%s_%s)" % self.word


Transition = Union[Predict, Op]

PREDICTOR = "predictor"
PARSER = "parser"


@dataclass(frozen=True)
class WordParsePrefix:
    """Stack of adjacent headed trees; ``stack[0]`` is always ``Leaf(<s>)``.

    ``phase`` says which module moves next.
    """

    stack: Tuple[HeadedTree, ...]
    k: int
    phase: str = PREDICTOR

    @classmethod
    def from_trees(cls, trees, phase=PARSER):
        trees = tuple(trees)
        k = 0
        for t in trees:
            for tok in leaves(t):
                if tok.surface == BOS.surface:
                    raise ValueError("<s> inside a prefix tree")
                k += 1
        return cls((Leaf(BOS),) + trees, k, phase)

    @property
    def h0(self):
        return self.stack[-1].head

    @property
    def t_minus1_is_bos(self):
        return len(self.stack) == 2

    @property
    def finished(self):
        """True when only the final ``<s>`` adjunction remains."""
        return self.phase == PREDICTOR and len(self.stack) == 2 and self.h0 == EOS

    def words(self):
        out = []
        for t in self.stack[1:]:
            out.extend(leaves(t))
        return out


def init_prefix():
    return WordParsePrefix((Leaf(BOS),), 0, PREDICTOR)


_NONE = frozenset()
_ONLY_NULL = frozenset([Null])
_ONLY_AR = frozenset([AdjoinRight])
_ANY_OP = frozenset(PARSER_OPS)


def parser_choices(p):
    """Parser transitions allowed in ``p`` (ignoring whose turn it is)."""
    n = len(p.stack)
    if n < 2:
        return _NONE
    if n == 2:
        return _ONLY_NULL
    if p.stack[-1].head == EOS:
        return _ONLY_AR
    return _ANY_OP


def legal_transitions(p, phase=None, vocab=()):
    """Transitions allowed from ``p``.

    In the predictor phase the candidate words come from ``vocab``; ``</s>``
    is always included and ``<s>`` never is.
    """
    phase = phase or p.phase
    if phase == PARSER:
        return parser_choices(p)
    if p.finished:
        return frozenset()
    words = {w for w in vocab if w.surface != BOS.surface}
    words.add(EOS)
    return frozenset(Predict(w) for w in words)


def apply_transition(p, t, index=None):
    if isinstance(t, Predict):
        if p.phase != PREDICTOR:
            raise IllegalTransition("Predict during the parser phase", index)
        if p.finished:
            raise IllegalTransition("Predict after the sentence is complete", index)
        if p.stack[-1].head == EOS:
            raise IllegalTransition("Predict after </s>", index)
        return WordParsePrefix(p.stack + (Leaf(t.word),), p.k + 1, PARSER)
    if p.phase != PARSER:
        raise IllegalTransition("%s during the predictor phase" % t.value, index)
    if t not in parser_choices(p):
        raise IllegalTransition("%s not allowed with h_0=%s, %d trees" % (t.value, p.h0.surface, len(p.stack) - 1), index)
    if t is Null:
        return WordParsePrefix(p.stack, p.k, PREDICTOR)
    left, right = p.stack[-2], p.stack[-1]
    merged = adjoin(left, right, "left" if t is AdjoinLeft else "right")
    return WordParsePrefix(p.stack[:-2] + (merged,), p.k, PARSER)


def finish(p, index=None):
    """The deterministic final adjoin of ``<s>``; returns the complete parse."""
    if not p.finished:
        raise IllegalTransition("derivation is incomplete", index)
    return adjoin(p.stack[0], p.stack[1], "right")


def exposed_heads(p, m):
    """``[h_0, h_-1, ...]`` up to ``m`` entries, padded with ``<s>``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    heads = [t.head for t in reversed(p.stack[1:])][:m]
    heads.extend([BOS] * (m - len(heads)))
    return heads


@dataclass(frozen=True)
class Derivation:
    """Transition sequence of a complete parse, without the final ``<s>`` adjoin."""

    steps: Tuple[Transition, ...]

    @property
    def counts(self):
        """``N_k`` for each position k: parser operations up to and including the null."""
        out = []
        for t in self.steps:
            if isinstance(t, Predict):
                out.append(0)
            else:
                out[-1] += 1
        return tuple(out)

    @property
    def words(self):
        return [t.word for t in self.steps if isinstance(t, Predict)]

    def __len__(self):
        return len(self.steps)


def is_complete_parse(tree):
    if not isinstance(tree, Node) or tree.head != EOS or tree.head_from != "right":
        return False
    if tree.left != Leaf(BOS):
        return False
    body = tree.right
    toks = leaves(body)
    if not toks or toks[-1] != EOS:
        return False
    if any(tok.surface in (BOS.surface, EOS.surface) for tok in toks[:-1]):
        return False
    # every constituent containing </s> lies on the right spine
    t = body
    while isinstance(t, Node):
        if t.head != EOS or t.head_from != "right":
            return False
        t = t.right
    return True


def derivation_of(tree):
    if not is_complete_parse(tree):
        raise NotCompleteParse("not a complete parse: %s" % tree)
    steps = []
    # post-order over the body; each Predict after the first is preceded by a null
    stack = [(tree.right, False)]
    while stack:
        t, expanded = stack.pop()
        if isinstance(t, Leaf):
            if steps:
                steps.append(Null)
            steps.append(Predict(t.token))
        elif expanded:
            steps.append(AdjoinLeft if t.head_from == "left" else AdjoinRight)
        else:
            stack.append((t, True))
            stack.append((t.right, False))
            stack.append((t.left, False))
    steps.append(Null)
    return Derivation(tuple(steps))


def walk(derivation):
    """Yield ``(prefix_before, transition)`` for every step, validating legality."""
    p = init_prefix()
    for i, t in enumerate(derivation.steps):
        yield p, t
        p = apply_transition(p, t, index=i)
    if not p.finished:
        raise IllegalTransition("derivation is incomplete", len(derivation.steps))


def replay(derivation):
    p = init_prefix()
    for i, t in enumerate(derivation.steps):
        p = apply_transition(p, t, index=i)
    return finish(p, index=len(derivation.steps))


def format_derivation(derivation):
    """One line: ``P:<word>_<tag>``, ``AL``, ``AR``, ``N`` codes ending in ``DONE``."""
    parts = []
    for t in derivation.steps:
        if isinstance(t, Predict):
            parts.append("P:" + join_pair(*t.word))
        else:
            parts.append(t.value)
    parts.append("DONE")
    return " ".join(parts)


_OPS_BY_CODE = {op.value: op for op in PARSER_OPS}


def parse_derivation(line, lineno=None):
    codes = line.split()
    if not codes or codes[-1] != "DONE":
        raise FormatError("derivation must end with DONE", lineno)
    steps = []
    for code in codes[:-1]:
        if code.startswith("P:"):
            try:
                steps.append(Predict(make_token(*split_pair(code[2:]))))
            except ValueError as exc:
                raise FormatError("bad predict code %r: %s" % (code, exc), lineno)
        elif code in _OPS_BY_CODE:
            steps.append(_OPS_BY_CODE[code])
        else:
            raise FormatError("unknown action code %r" % code, lineno)
    return Derivation(tuple(steps))
