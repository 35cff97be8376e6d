import math
import random
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slm.errors import ArityMismatch, FormatError, NoEvents, NonfiniteWeight, TemplateSyntaxError
from slm.maxent import (
    UNK,
    CondMaxEntModel,
    build_model,
    empirical_and_model_expectations,
    harvest_features,
    load_model,
    parse_template,
    parse_templates,
    save_model,
    train_gis,
)
from slm.transitions import Token
from slm.treebank import Event


def ev(outcome, *ctx):
    return Event("P", tuple(Token(w, t) for w, t in ctx), outcome)


def test_parse_template_unigram():
    t = parse_template("4 <= <*>_<*> <?>")
    assert t.cutoff == 4
    assert t.slots == ((False, False),)
    assert t.match_positions == ()
    assert str(t) == "4 <= <*>_<*> <?>"


def test_parse_template_list():
    ts = parse_templates("4 <= <*>_<*> <?>; 2 <= <?>_<*> <?>")
    assert [t.cutoff for t in ts] == [4, 2]
    assert ts[1].bind([Token("dog", "NN")]) == ("dog",)


@pytest.mark.parametrize("text", ["0 <= <?>", "-1 <= <*>_<*> <?>", "x <= <?>", "4 <= <!>_<*> <?>",
                                  "4 <= <*>_<*>", "4 < <*>_<*> <?>", "4 <= <*><*> <?>"])
def test_parse_template_errors(text):
    with pytest.raises(TemplateSyntaxError):
        parse_template(text)
    with pytest.raises(SyntaxError):
        parse_template(text)


def test_cutoff_three_dropped_four_kept():
    t = [parse_template("4 <= <?>_<*> <?>")]
    events = [ev("barked", ("dog", "NN"))] * 4 + [ev("meowed", ("cat", "NN"))] * 3
    kept = harvest_features(events, t)
    assert kept == {(0, ("dog",), "barked"): 4}
    assert harvest_features([ev("barked", ("dog", "NN"))] * 5, t) == {(0, ("dog",), "barked"): 5}


def test_unigram_gives_one_feature_per_outcome():
    events = [ev(w, ("x", "X")) for w in "abcdefg"] * 2
    assert len(harvest_features(events, [parse_template("2 <= <*>_<*> <?>")])) == 7
    m = build_model(events, [parse_template("2 <= <*>_<*> <?>")])
    assert m.param_count == 7
    assert set(m.weights.values()) == {0.0}


def test_arity_mismatch():
    with pytest.raises(ArityMismatch):
        harvest_features([ev("a", ("x", "X"))], [parse_template("1 <= <?>_<*> <?>_<*> <?>")])


def test_brute_force_recount():
    rng = random.Random(5)
    events = [ev(rng.choice("abcd"), (rng.choice("xyz"), rng.choice("PQ")), (rng.choice("xy"), "R"))
              for _ in range(300)]
    templates = parse_templates("3 <= <*>_<*> <*>_<*> <?>; 5 <= <?>_<*> <*>_<*> <?>; 7 <= <?>_<?> <?>_<*> <?>")
    brute = set()
    for ti, t in enumerate(templates):
        for e in events:
            key = (ti, _bind(t, e), e.outcome)
            n = sum(1 for e2 in events if e2.outcome == e.outcome and _bind(t, e2) == key[1])
            if n >= t.cutoff:
                brute.add(key)
    assert set(harvest_features(events, templates)) == brute


def _bind(t, e):
    out = []
    for (mw, mt), tok in zip(t.slots, e.context):
        if mw:
            out.append(tok.surface)
        if mt:
            out.append(tok.tag)
    return tuple(out)


def test_zero_weights_uniform():
    m = CondMaxEntModel([], list("abcde"), {}, alpha=0.0)
    assert np.allclose(m.cond_dist(()), 0.2)


def test_alpha_one_is_uniform():
    t = parse_template("1 <= <*>_<*> <?>")
    m = CondMaxEntModel([t], list("abc"), {(0, (), "a"): 30.0}, alpha=1.0)
    assert np.allclose(m.cond_dist([Token("x", "X")]), 1 / 3)


def test_floor_and_normalization():
    t = parse_template("1 <= <?>_<*> <?>")
    m = CondMaxEntModel([t], ["</s>", "a", "b"], {(0, ("x",), "a"): 500.0}, alpha=0.01)
    d = m.cond_dist([Token("x", "X")])
    assert abs(d.sum() - 1.0) < 1e-12
    assert d.min() >= 0.01 / 3
    assert m.cond_prob([Token("x", "X")], "</s>") >= 0.01 / 3


def test_cond_prob_unk_mapping():
    m = CondMaxEntModel([], ["a", UNK], {}, alpha=0.0)
    assert m.cond_prob((), "never-seen") == m.cond_prob((), UNK) == 0.5
    no_unk = CondMaxEntModel([], ["a"], {}, alpha=0.0)
    assert no_unk.cond_prob((), "never-seen") == 0.0


def _toy_model(seed=0, alpha=0.05, observed_only=True):
    rng = random.Random(seed)
    words = ["w%d" % i for i in range(6)]
    events = [ev(rng.choice(words[:4]), (rng.choice(words), rng.choice("AB"))) for _ in range(500)]
    templates = parse_templates("1 <= <*>_<*> <?>; 2 <= <?>_<*> <?>; 3 <= <*>_<?> <?>")
    # outcomes never seen in training have no finite ML weight, so GIS only approaches them
    outcomes = sorted({e.outcome for e in events}) if observed_only else None
    return build_model(events, templates, outcomes=outcomes, alpha=alpha), events


def test_cond_prob_matches_dist():
    m, events = _toy_model()
    m = train_gis(m, events, max_iters=20)
    rng = random.Random(1)
    for _ in range(100):
        ctx = [Token("w%d" % rng.randrange(8), rng.choice("ABC"))]
        y = rng.randrange(len(m.outcomes))
        assert m.cond_prob(ctx, m.outcomes[y]) == m.cond_dist(ctx)[y]
        assert abs(sum(m.cond_prob(ctx, o) for o in m.outcomes) - 1.0) < 1e-9


def test_closed_form_seven_three():
    # one feature on outcome a; P~(a)=0.7 -> exp(w)/(exp(w)+1)=0.7
    t = [parse_template("1 <= <?>_<*> <?>")]
    events = [ev("a", ("x", "X"))] * 7 + [ev("b", ("x", "X"))] * 3
    m = CondMaxEntModel(t, ["a", "b"], {(0, ("x",), "a"): 0.0}, alpha=0.0)
    trained = train_gis(m, events, max_iters=1000, tol=1e-12)
    assert abs(trained.weights[(0, ("x",), "a")] - math.log(7 / 3)) < 1e-6
    assert abs(trained.cond_prob([Token("x", "X")], "a") - 0.7) < 1e-6


def test_closed_form_three_outcomes():
    # P~(a)=0.5 over {a,b,c} with one feature on a: exp(w)/(exp(w)+2)=0.5 -> w = log 2
    t = [parse_template("1 <= <*>_<*> <?>")]
    events = [ev("a", ("x", "X"))] * 2 + [ev("b", ("x", "X")), ev("c", ("x", "X"))]
    m = CondMaxEntModel(t, ["a", "b", "c"], {(0, (), "a"): 0.0}, alpha=0.0)
    trained = train_gis(m, events, max_iters=1000, tol=1e-12)
    assert abs(trained.weights[(0, (), "a")] - math.log(2)) < 1e-6


def test_certain_outcome_weight_grows():
    t = [parse_template("1 <= <?>_<*> <?>")]
    events = [ev("a", ("x", "X"))] * 5
    m = CondMaxEntModel(t, ["a", "b"], {(0, ("x",), "a"): 0.0}, alpha=0.0)
    w10 = train_gis(m, events, max_iters=10, tol=0.0)
    w100 = train_gis(m, events, max_iters=100, tol=0.0)
    assert w100.weights[(0, ("x",), "a")] > w10.weights[(0, ("x",), "a")] > 0
    assert w100.cond_prob([Token("x", "X")], "a") > 0.98
    assert w100.train_log.iterations == 100
    assert not w100.train_log.converged


def test_gis_converges_and_is_monotone():
    m, events = _toy_model()
    trained = train_gis(m, events, max_iters=2000, tol=1e-4)
    tl = trained.train_log
    assert tl.converged
    assert tl.violation[-1] <= 1e-4
    assert all(b >= a - 1e-10 for a, b in zip(tl.loglik, tl.loglik[1:]))
    emp, mod = empirical_and_model_expectations(trained, events)
    assert np.max(np.abs(emp - mod)) <= 1e-4


def test_unseen_outcomes_still_monotone():
    m, events = _toy_model(observed_only=False)
    assert UNK in m.outcomes
    tl = train_gis(m, events, max_iters=300, tol=1e-4).train_log
    assert all(b >= a - 1e-10 for a, b in zip(tl.loglik, tl.loglik[1:]))
    assert tl.violation[-1] < tl.violation[0]


def test_two_outcome_expectation():
    t = [parse_template("1 <= <?>_<*> <?>")]
    events = [ev("a", ("x", "X"))] * 7 + [ev("b", ("x", "X"))] * 3 + [ev("b", ("y", "X"))] * 4
    m = build_model(events, t, outcomes=["a", "b"], alpha=0.0)
    trained = train_gis(m, events, max_iters=5000, tol=1e-4)
    emp, mod = empirical_and_model_expectations(trained, events)
    i = sorted(trained.weights).index((0, ("x",), "a"))
    assert abs(emp[i] - 0.5) < 1e-12
    assert abs(mod[i] - 0.5) <= 1e-4


def test_no_events():
    m = CondMaxEntModel([], ["a"], {}, alpha=0.0)
    with pytest.raises(NoEvents):
        train_gis(m, [])


def test_nonfinite_weight_rejected():
    with pytest.raises(NonfiniteWeight):
        CondMaxEntModel([parse_template("1 <= <?>")], ["a"], {(0, (), "a"): float("nan")})


def test_threads_bitwise_identical():
    m, events = _toy_model(3)
    a = train_gis(m, events, max_iters=15, threads=1)
    b = train_gis(m, events, max_iters=15, threads=4)
    assert a.dumps() == b.dumps()


def test_round_trip(tmp_path):
    m, events = _toy_model(4)
    m = train_gis(m, events, max_iters=25)
    m.lexicon = {"w1": "A"}
    path = tmp_path / "m.model"
    save_model(m, str(path))
    back = load_model(str(path))
    assert back.dumps() == m.dumps()
    rng = random.Random(2)
    for _ in range(20):
        ctx = [Token("w%d" % rng.randrange(8), rng.choice("AB"))]
        assert np.array_equal(back.cond_dist(ctx), m.cond_dist(ctx))
    assert back.lexicon == {"w1": "A"}


def test_truncated_file(tmp_path):
    m, events = _toy_model(4)
    text = train_gis(m, events, max_iters=3).dumps()
    lines = text.splitlines()
    for cut in (1, len(lines) // 2, len(lines) - 1):
        with pytest.raises(FormatError) as info:
            CondMaxEntModel.loads("\n".join(lines[:cut]) + "\n")
        assert info.value.lineno is not None


def test_bad_feature_line_reports_line():
    text = "slm-maxent v1\nalpha 0\noutcomes 1\na\ntemplates 1\n1 <= <?>_<*> <?>\nfeatures 1\n0\tx\ta\tnotanumber\n"
    with pytest.raises(FormatError) as info:
        CondMaxEntModel.loads(text)
    assert info.value.lineno == 8


@settings(max_examples=300, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_weight_text_is_bit_exact(w):
    m = CondMaxEntModel([parse_template("1 <= <*>_<*> <?>")], ["a"], {(0, (), "a"): w}, alpha=0.0)
    back = CondMaxEntModel.loads(m.dumps())
    assert struct.pack("<d", back.weights[(0, (), "a")]) == struct.pack("<d", w)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(0.0, 1.0))
def test_dist_normalized_with_floor(ws, alpha):
    t = parse_template("1 <= <*>_<*> <?>")
    m = CondMaxEntModel([t], ["a", "b", "c"], {(0, (), o): w for o, w in zip("abc", ws)}, alpha=alpha)
    d = m.cond_dist([Token("x", "X")])
    assert abs(d.sum() - 1.0) <= 1e-12
    assert d.min() >= alpha / 3 - 1e-15
