import math
from collections import Counter

import pytest

from slm.evaluate import perplexity
from slm.lm import NAMED_SCHEMES, uniform_joint_model
from slm.maxent import build_model, parse_templates, train_gis
from slm.oracle import (
    SynthSpec,
    all_sentences,
    binary_shapes,
    corpus_to_bracketed,
    enumerate_complete_parses,
    planted_joint_model,
    shape_count,
    synth_corpus_gen,
    total_mass,
)
from slm.transitions import derivation_of, is_complete_parse, leaves, replay
from slm.treebank import HeadRules, extract_events, parse_bracketed, sentence_tree

COUNTS = {1: 1, 2: 3, 3: 13, 4: 67, 5: 381, 6: 2307}


@pytest.mark.parametrize("l", sorted(COUNTS))
def test_enumeration_counts(l):
    r = enumerate_complete_parses(["w%d" % i for i in range(l)])
    assert r.count == len(r.parses) == COUNTS[l]
    assert shape_count(l) == COUNTS[l]


def test_enumeration_parses_are_distinct_and_complete():
    r = enumerate_complete_parses(["a", "b", "c", "d"])
    assert len(set(r.parses)) == r.count
    for t in r.parses:
        assert is_complete_parse(t)
        assert [tok.surface for tok in leaves(t)] == ["<s>", "a", "b", "c", "d", "</s>"]


@pytest.mark.parametrize("l", [1, 2, 3, 4, 5])
def test_enumeration_derivation_bijection(l):
    parses = enumerate_complete_parses(["w%d" % i for i in range(l)]).parses
    derivations = {derivation_of(t) for t in parses}
    assert len(derivations) == len(parses)
    assert all(replay(derivation_of(t)) == t for t in parses)


def test_enumeration_limits():
    with pytest.raises(ValueError):
        enumerate_complete_parses([])
    with pytest.raises(ValueError):
        enumerate_complete_parses(["w"] * 7)


def test_binary_shapes_catalan():
    assert [len(binary_shapes(n)) for n in range(1, 7)] == [1, 1, 2, 5, 14, 42]


def test_total_mass_hand_expansion():
    jm = uniform_joint_model(["a", "b"], alpha=0.1)
    # l=0: P(</s>)=1/3; l=1: two words, each (1/3)(1/3), parser steps forced
    assert total_mass(jm, 0) == pytest.approx(1 / 3, abs=1e-15)
    assert total_mass(jm, 1) == pytest.approx(1 / 3 + 2 / 9, abs=1e-15)


def test_total_mass_closed_form_and_bound():
    jm = uniform_joint_model(["a", "b"], alpha=0.1)
    eps = jm.epsilon
    prev = 0.0
    for L in range(1, 7):
        m = total_mass(jm, L)
        # parser mass over all parses sums to one, so only the length distribution remains
        assert m == pytest.approx(1 - (2 / 3) ** (L + 1), abs=1e-12)
        assert m >= prev
        assert 1 - m <= (1 - eps) ** L + 1e-12
        prev = m


def test_total_mass_rejects_big_instances():
    with pytest.raises(ValueError):
        total_mass(uniform_joint_model(["a", "b", "c", "d"]), 2)


def test_all_sentences():
    assert len(list(all_sentences("ab", 3))) == 1 + 2 + 4 + 8


def test_synth_seed_determinism():
    a = corpus_to_bracketed(synth_corpus_gen(5, 50))
    b = corpus_to_bracketed(synth_corpus_gen(5, 50))
    c = corpus_to_bracketed(synth_corpus_gen(6, 50))
    assert a == b
    assert a != c


def test_synth_trees_survive_the_treebank_path():
    corpus = synth_corpus_gen(1, 100)
    rules = HeadRules.default_rules()
    trees = parse_bracketed(corpus_to_bracketed(corpus))
    assert [sentence_tree(t, rules) for t in trees] == [s.tree for s in corpus]


def test_synth_has_long_modifier_spans():
    corpus = synth_corpus_gen(2, 300)
    gaps = []
    for s in corpus:
        tags = [tok.tag for tok in leaves(s.tree)]
        gaps.append(tags.index("VB") - 1)
    # the verb is separated from its noun by at least two words whenever a modifier occurs
    assert all(g == 0 or g >= 2 for g in gaps)
    assert sum(g >= 2 for g in gaps) > 100


def test_synth_reproduces_planted_conditionals():
    spec = SynthSpec()
    corpus = synth_corpus_gen(3, 10000, spec)
    H = NAMED_SCHEMES["H"]
    pairs = Counter()
    ctx = Counter()
    for s in corpus:
        for e in extract_events(s.tree, H):
            if e.kind == "P" and e.context[0].tag == "NN":
                ctx[e.context[0].surface] += 1
                pairs[(e.context[0].surface, e.outcome)] += 1
    jm = planted_joint_model(spec)
    checked = 0
    for noun, n in ctx.items():
        focus = "v%s" % noun[1:]
        # planted P(focus verb | h_0 = noun) and P(any opener | noun)
        for outcome_set, p in (({focus}, (1 - spec.modifier_prob) * spec.focus),
                               ({w for w in jm.lexicon if w.startswith("r")}, spec.modifier_prob)):
            k = sum(pairs[(noun, o)] for o in outcome_set)
            sigma = math.sqrt(n * p * (1 - p))
            assert abs(k - n * p) <= 3 * sigma + 1, (noun, outcome_set == {focus}, k, n * p)
            checked += 1
    assert checked == 2 * spec.nouns


def test_degenerate_spec_makes_h_and_w_coincide():
    spec = SynthSpec(modifier_prob=0.0, adverb_prob=0.0)
    corpus = synth_corpus_gen(4, 400, spec)
    W, H = NAMED_SCHEMES["W"], NAMED_SCHEMES["H"]
    for s in corpus[:50]:
        assert [e.context for e in extract_events(s.tree, W) if e.kind == "P"] == \
               [e.context for e in extract_events(s.tree, H) if e.kind == "P"]
    pps = []
    for scheme in (W, H):
        events = [e for s in corpus for e in extract_events(s.tree, scheme) if e.kind == "P"]
        m = train_gis(build_model(events, parse_templates("2 <= <*>_<*> <?>; 2 <= <?>_<*> <?>"),
                                  scheme=str(scheme)), events, max_iters=30)
        pps.append(perplexity(m, scheme, [s.tree for s in corpus]).pp)
    assert pps[0] == pps[1]
