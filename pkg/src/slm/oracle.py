"""Brute-force checks on tiny instances and a planted synthetic corpus generator."""

import math
from dataclasses import dataclass
from itertools import product
from typing import List, NamedTuple

import numpy as np

from slm.lm import NAMED_SCHEMES, JointModel, sample_sentence, step_logprob, Truncated
from slm.maxent import PARSER_OUTCOMES, CondMaxEntModel, parse_template
from slm.transitions import (
    EOS,
    PREDICTOR,
    Leaf,
    Node,
    Predict,
    Token,
    apply_transition,
    finish,
    init_prefix,
    is_complete_parse,
    parser_choices,
)
from slm.treebank import to_bracketed


class EnumerationResult(NamedTuple):
    l: int
    parses: list
    count: int


def _tokens(words):
    return [w if isinstance(w, Token) else Token(w, "X") for w in words]


def enumerate_complete_parses(words):
    """All complete parses of a fixed sentence, by DFS over legal transitions."""
    words = _tokens(words)
    if not 1 <= len(words) <= 6:
        raise ValueError("enumeration is limited to 1..6 words")
    parses = []
    stack = [init_prefix()]
    while stack:
        p = stack.pop()
        if p.finished:
            parses.append(finish(p))
            continue
        if p.phase == PREDICTOR:
            w = words[p.k] if p.k < len(words) else EOS
            stack.append(apply_transition(p, Predict(w)))
        else:
            for op in sorted(parser_choices(p), key=lambda o: o.value, reverse=True):
                stack.append(apply_transition(p, op))
    if len(set(parses)) != len(parses):
        raise AssertionError("DFS produced duplicate parses")
    return EnumerationResult(len(words), parses, len(parses))


def binary_shapes(n):
    """Every binary bracketing of ``n`` leaves as nested pairs; leaves are ``None``."""
    if n == 1:
        return [None]
    out = []
    for m in range(1, n):
        for a in binary_shapes(m):
            for b in binary_shapes(n - m):
                out.append((a, b))
    return out


def shape_count(l):
    """Complete-parse count from shapes: 2 head choices per node not containing ``</s>``."""

    def free_nodes(shape, has_eos):
        if shape is None:
            return 0
        left, right = shape
        return free_nodes(left, False) + free_nodes(right, has_eos) + (0 if has_eos else 1)

    return sum(2 ** free_nodes(s, True) for s in binary_shapes(l + 1))


def all_headed_trees(tokens):
    """Every headed binary tree over ``tokens`` (no constraints)."""
    if len(tokens) == 1:
        return [Leaf(tokens[0])]
    out = []
    for m in range(1, len(tokens)):
        for a in all_headed_trees(tokens[:m]):
            for b in all_headed_trees(tokens[m:]):
                out.append(Node(a, b, a.head, "left"))
                out.append(Node(a, b, b.head, "right"))
    return out


def total_mass(jm, L):
    """Sum of P(W, T) over every sentence of at most ``L`` words and each of its parses."""
    if L > 6 or len(jm.predictor.outcomes) > 4:
        raise ValueError("total_mass is for tiny models (|vocab| <= 3, L <= 6)")
    vocab = [jm.token(o) for o in jm.predictor.outcomes if o != EOS.surface]
    terms = []
    stack = [(init_prefix(), 0.0)]
    while stack:
        p, logp = stack.pop()
        if p.finished:
            terms.append(math.exp(logp))
            continue
        if p.phase == PREDICTOR:
            moves = [Predict(EOS)] + ([Predict(w) for w in vocab] if p.k < L else [])
        else:
            moves = sorted(parser_choices(p), key=lambda o: o.value)
        for t in moves:
            lp = step_logprob(jm, p, t)
            if lp == -math.inf:
                continue
            stack.append((apply_transition(p, t), logp + lp))
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# planted synthetic corpus

BIG = 40.0


@dataclass(frozen=True)
class SynthSpec:
    """Vocabulary and branching probabilities of the planted generator.

    Sentences look like ``noun (opener closer)* verb adverb*``.  Each
    opener/closer pair attaches to the noun, so when the verb is predicted
    the noun is the exposed head while the previous word is a modifier.
    """

    nouns: int = 40
    verbs: int = 40
    openers: int = 1000
    closers: int = 10
    adverbs: int = 10
    modifier_prob: float = 0.6
    adverb_prob: float = 0.5
    focus: float = 0.8
    alpha: float = 1e-6


def _words(prefix, n, tag):
    return [Token("%s%d" % (prefix, i), tag) for i in range(n)]


def planted_joint_model(spec=SynthSpec()):
    """JointModel whose predictor conditions on ``h_0`` only (scheme H)."""
    nouns = _words("n", spec.nouns, "NN")
    verbs = _words("v", spec.verbs, "VB")
    openers = _words("r", spec.openers, "RB")
    closers = _words("j", spec.closers, "JJ")
    adverbs = _words("a", spec.adverbs, "ADV")
    lexicon = {t.surface: t.tag for t in nouns + verbs + openers + closers + adverbs}
    outcomes = sorted(list(lexicon) + [EOS.surface])
    by_word = parse_template("1 <= <?>_<*> <?>")
    by_tag = parse_template("1 <= <*>_<?> <?>")
    weights = {}

    def plant(ti, binding, dist):
        for word, p in dist.items():
            if p > 0.0:
                weights[(ti, binding, word)] = math.log(p) + BIG

    plant(0, ("<s>",), {n.surface: 1.0 / len(nouns) for n in nouns})
    if spec.modifier_prob > 0:
        plant(1, ("NN",), {r.surface: spec.modifier_prob / len(openers) for r in openers})
    plant(1, ("RB",), {j.surface: 1.0 / len(closers) for j in closers})

    def focused(items, i, mass):
        rest = (1.0 - spec.focus) * mass / (len(items) - 1) if len(items) > 1 else 0.0
        d = {t.surface: rest for t in items}
        d[items[i % len(items)].surface] = spec.focus * mass if len(items) > 1 else mass
        return d

    for i, n in enumerate(nouns):
        plant(0, (n.surface,), focused(verbs, i, 1.0 - spec.modifier_prob))
    for i, v in enumerate(verbs):
        d = focused(adverbs, i, spec.adverb_prob) if spec.adverb_prob > 0 else {}
        d[EOS.surface] = 1.0 - spec.adverb_prob
        plant(0, (v.surface,), d)
    predictor = CondMaxEntModel([by_word, by_tag], outcomes, weights, spec.alpha, scheme="H", lexicon=lexicon)

    pair = parse_template("1 <= <*>_<?> <*>_<?> <?>")
    moves = {("RB", "NN"): "N", ("JJ", "RB"): "AR", ("JJ", "NN"): "AL", ("VB", "NN"): "AR", ("ADV", "VB"): "AL"}
    pweights = {(0, tags, op): BIG for tags, op in moves.items()}
    parser = CondMaxEntModel([pair], PARSER_OUTCOMES, pweights, 0.0)
    return JointModel(predictor, NAMED_SCHEMES["H"], parser, lexicon)


class SynthSentence(NamedTuple):
    words: List[str]
    tree: object  # headed binary tree over the words, no boundary tokens


def synth_corpus_gen(seed, sentences, spec=SynthSpec(), max_words=200):
    """Sample sentences with parses from the planted model.

    Samples whose words do not form one constituent under ``</s>`` are
    redrawn, so every tree can be written as a single bracketing.
    """
    if sentences < 1:
        raise ValueError("sentences must be >= 1")
    jm = planted_joint_model(spec)
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < sentences:
        s = sample_sentence(jm, rng, max_words)
        if isinstance(s, Truncated):
            continue
        body = s.parse.right
        if not (isinstance(body.right, Leaf) and body.right.token == EOS) or not is_complete_parse(s.parse):
            continue
        out.append(SynthSentence(s.words, body.left))
    return out


def corpus_to_bracketed(corpus):
    return "".join(to_bracketed(s.tree) + "\n" for s in corpus)


def all_sentences(vocab, L):
    """Every word sequence over ``vocab`` of length 0..L."""
    for l in range(L + 1):
        yield from product(vocab, repeat=l)
