"""The joint model P(W, T): context classification, predictor and parser probabilities.

The predictor sees the prefix only through a ``ContextScheme``: some number
of exposed heads (``h_0``, ``h_-1`` ...) and previous words.  The parser
model always sees ``(h_0, h_-1)``.  Two parser states are forced: with only
``<s>`` to the left of the top tree the parser must take ``null``, and with
``</s>`` on top it must adjoin right.
"""

import math
import re
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from slm.maxent import PARSER_OUTCOMES, CondMaxEntModel
from slm.transitions import (
    BOS,
    EOS,
    UNK_TAG,
    Leaf,
    Op,
    Predict,
    Token,
    apply_transition,
    derivation_of,
    exposed_heads,
    finish,
    init_prefix,
    parser_choices,
    walk,
)

BLANK_TAG = "<*>"


@dataclass(frozen=True)
class ContextScheme:
    """Which history a predictor conditions on.

    ``p - 1`` exposed heads followed by ``n - 1`` previous words; tags are
    blanked when ``use_tags`` is off.
    """

    kind: str
    p: int
    n: int
    use_tags: bool

    def __post_init__(self):
        if self.p < 1 or self.n < 1:
            raise ValueError("p and n must be >= 1")

    @property
    def arity(self):
        return (self.p - 1) + (self.n - 1)

    @property
    def uses_heads(self):
        return self.p > 1

    def __str__(self):
        if self.kind != "gen":
            return self.kind
        return "gen:p=%d,n=%d,tags=%d" % (self.p, self.n, int(self.use_tags))


NAMED_SCHEMES = {
    "W": ContextScheme("W", 1, 2, True),
    "w": ContextScheme("w", 1, 2, False),
    "H": ContextScheme("H", 2, 1, True),
    "h": ContextScheme("h", 2, 1, False),
}

_GEN_RE = re.compile(r"^gen:p=(\d+),n=(\d+),tags=([01])$")


def parse_scheme(text):
    text = text.strip()
    if text in NAMED_SCHEMES:
        return NAMED_SCHEMES[text]
    m = _GEN_RE.match(text)
    if not m:
        raise ValueError("unknown context scheme %r (expected W, w, H, h or gen:p=,n=,tags=)" % text)
    return ContextScheme("gen", int(m.group(1)), int(m.group(2)), m.group(3) == "1")


# constraint templates per named scheme; parser templates see (h_0, h_-1)
DEFAULT_TEMPLATES = {
    "W": "4 <= <*>_<*> <?>; 2 <= <?>_<*> <?>; 2 <= <?>_<?> <?>; 8 <= <*>_<?> <?>",
    "H": "4 <= <*>_<*> <?>; 2 <= <?>_<*> <?>; 2 <= <?>_<?> <?>; 8 <= <*>_<?> <?>",
    "w": "4 <= <*>_<*> <?>; 2 <= <?>_<*> <?>",
    "h": "4 <= <*>_<*> <?>; 2 <= <?>_<*> <?>",
}
PARSER_TEMPLATES = (
    "1 <= <*>_<*> <*>_<*> <?>; 2 <= <*>_<?> <*>_<*> <?>; 2 <= <*>_<?> <*>_<?> <?>; "
    "2 <= <?>_<?> <*>_<?> <?>; 2 <= <*>_<?> <?>_<?> <?>; 2 <= <?>_<?> <?>_<?> <?>"
)


def default_templates(scheme):
    """Template string for a scheme: fixed lists for W/w/H/h, generated for ``gen``."""
    if scheme.kind in DEFAULT_TEMPLATES:
        return DEFAULT_TEMPLATES[scheme.kind]
    a = scheme.arity
    blank = ["<*>_<*>"] * a
    out = ["4 <= %s <?>" % " ".join(blank)]
    for i in range(a):
        for pair, cutoff in (("<?>_<*>", 2),) + ((("<?>_<?>", 2), ("<*>_<?>", 8)) if scheme.use_tags else ()):
            slots = list(blank)
            slots[i] = pair
            out.append("%d <= %s <?>" % (cutoff, " ".join(slots)))
    return "; ".join(" ".join(t.split()) for t in out)


def _reverse_leaves(tree):
    stack = [tree]
    while stack:
        t = stack.pop()
        if isinstance(t, Leaf):
            yield t.token
        else:
            stack.append(t.left)
            stack.append(t.right)


def previous_words(prefix, count):
    """``[w_k, w_k-1, ...]`` (most recent first), padded with ``<s>``."""
    out = []
    for tree in reversed(prefix.stack[1:]):
        for tok in _reverse_leaves(tree):
            out.append(tok)
            if len(out) == count:
                return out
    out.extend([BOS] * (count - len(out)))
    return out


def classify_context(prefix, scheme):
    """Equivalence class of a word-parse prefix: heads first, then previous words."""
    fields = []
    if scheme.p > 1:
        fields.extend(exposed_heads(prefix, scheme.p - 1))
    if scheme.n > 1:
        fields.extend(previous_words(prefix, scheme.n - 1))
    if not scheme.use_tags:
        fields = [Token(t.surface, BLANK_TAG) for t in fields]
    return fields


def parser_context(prefix):
    return exposed_heads(prefix, 2)


@dataclass
class JointModel:
    predictor: CondMaxEntModel
    scheme: ContextScheme
    parser: CondMaxEntModel
    lexicon: dict = field(default_factory=dict)

    def __post_init__(self):
        if tuple(self.parser.outcomes) != PARSER_OUTCOMES:
            raise ValueError("parser outcomes must be exactly %s" % (PARSER_OUTCOMES,))
        if EOS.surface not in self.predictor.outcome_index:
            raise ValueError("predictor vocabulary lacks </s>")
        if not self.lexicon:
            self.lexicon = dict(self.predictor.lexicon)

    def token(self, surface):
        if surface == EOS.surface:
            return EOS
        return Token(surface, self.lexicon.get(surface, UNK_TAG))

    @property
    def epsilon(self):
        """Guaranteed lower bound on P(</s> | any prefix)."""
        return self.predictor.alpha / len(self.predictor.outcomes)


def predictor_prob(jm, prefix, word):
    if word.surface == BOS.surface:
        raise ValueError("<s> is never predicted")
    return jm.predictor.cond_prob(classify_context(prefix, jm.scheme), word.surface)


def parser_prob(jm, prefix, t):
    choices = parser_choices(prefix)
    if len(choices) == 1:
        return 1.0 if t in choices else 0.0
    if t not in choices:
        return 0.0
    return jm.parser.cond_prob(parser_context(prefix), t.value)


def step_logprob(jm, prefix, t):
    p = predictor_prob(jm, prefix, t.word) if isinstance(t, Predict) else parser_prob(jm, prefix, t)
    return math.log(p) if p > 0.0 else -math.inf


def joint_prob(jm, sentence, parse):
    """log P(W, T) summed over the unique derivation of ``parse``."""
    d = derivation_of(parse)
    words = [w.surface for w in d.words[:-1]]
    if sentence is not None and [getattr(w, "surface", w) for w in sentence] != words:
        raise ValueError("sentence %r does not match the parse leaves %r" % (list(sentence), words))
    total = 0.0
    for prefix, t in walk(d):
        total += step_logprob(jm, prefix, t)
    return total


class Truncated(NamedTuple):
    words: list


class Sample(NamedTuple):
    words: list
    parse: object
    logprob: float


def _draw(rng, dist):
    cdf = np.cumsum(dist)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, len(dist) - 1)


def sample_sentence(jm, seed, max_words):
    """Ancestral sample of (W, T); ``Truncated`` if ``</s>`` does not come within ``max_words`` words.

    ``seed`` is an int or a ``numpy.random.Generator``.
    """
    if max_words < 1:
        raise ValueError("max_words must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    outcomes = jm.predictor.outcomes
    prefix = init_prefix()
    logp = 0.0
    while not prefix.finished:
        ctx = classify_context(prefix, jm.scheme)
        dist = jm.predictor.cond_dist(ctx)
        surface = outcomes[_draw(rng, dist)]
        t = Predict(jm.token(surface))
        if prefix.k == max_words and t.word != EOS:
            return Truncated([tok.surface for tok in prefix.words()] + [surface])
        logp += step_logprob(jm, prefix, t)
        prefix = apply_transition(prefix, t)
        while True:
            choices = parser_choices(prefix)
            if len(choices) == 1:
                (op,) = choices
            else:
                pdist = jm.parser.cond_dist(parser_context(prefix))
                op = Op(jm.parser.outcomes[_draw(rng, pdist)])
            logp += step_logprob(jm, prefix, op)
            prefix = apply_transition(prefix, op)
            if op is Op.NULL:
                break
    parse = finish(prefix)
    words = [tok.surface for tok in prefix.words()[:-1]]
    return Sample(words, parse, logp)


def uniform_joint_model(words, alpha=0.0, unk=False):
    """Zero-weight joint model over ``words`` (list of surfaces or Tokens) plus ``</s>``."""
    lexicon = {}
    surfaces = []
    for w in words:
        if isinstance(w, Token):
            lexicon[w.surface] = w.tag
            surfaces.append(w.surface)
        else:
            surfaces.append(w)
    outcomes = sorted(set(surfaces) | {EOS.surface} | ({"<unk>"} if unk else set()))
    pred = CondMaxEntModel([], outcomes, {}, alpha, scheme="W", lexicon=lexicon)
    parser = CondMaxEntModel([], PARSER_OUTCOMES, {}, alpha)
    return JointModel(pred, NAMED_SCHEMES["W"], parser, lexicon)
