"""Conditional maximum-entropy models over binary template features.

A template such as ``2 <= <?>_<*> <?>`` names, for each (word, tag) history
slot, which halves are matched (``<?>``) or ignored (``<*>``); the trailing
``<?>`` is the predicted outcome.  Every distinct (binding, outcome) pair
seen at least ``cutoff`` times becomes an indicator feature.

Training is Generalized Iterative Scaling.  The slack ("correction")
feature is folded into the stored weights: its contribution
``lam_c * (C - active)`` differs from ``-lam_c * active`` only by a
per-context constant, so saving ``lam_f - lam_c`` gives the same
conditional distributions.
"""

import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from slm import kernels
from slm.errors import ArityMismatch, FormatError, NoEvents, NonfiniteWeight, TemplateSyntaxError
from slm.textio import atomic_write, escape, unescape

UNK = "<unk>"
PARSER_OUTCOMES = ("AL", "AR", "N")
MAGIC = "slm-maxent v1"
SHARD_CONTEXTS = 2048

_SLOT = r"<[*?]>"
_PAIR_RE = re.compile(r"^(%s)_(%s)$" % (_SLOT, _SLOT))


@dataclass(frozen=True)
class FeatureTemplate:
    cutoff: int
    slots: Tuple[Tuple[bool, bool], ...]  # per history slot: (match word, match tag)

    def __post_init__(self):
        positions = tuple((i, j) for i, pair in enumerate(self.slots) for j in (0, 1) if pair[j])
        object.__setattr__(self, "match_positions", positions)

    @property
    def arity(self):
        return len(self.slots)

    def bind(self, context):
        return tuple([context[i][j] for i, j in self.match_positions])

    def __str__(self):
        pairs = ["%s_%s" % ("<?>" if w else "<*>", "<?>" if t else "<*>") for w, t in self.slots]
        return " ".join(["%d <=" % self.cutoff] + pairs + ["<?>"])


def parse_template(text):
    """Parse ``CUTOFF <= (SLOT_SLOT)* <?>``."""
    fields = text.strip().rstrip(";").split()
    if len(fields) < 3 or fields[1] != "<=" or fields[-1] != "<?>":
        raise TemplateSyntaxError("malformed template %r" % text)
    try:
        cutoff = int(fields[0])
    except ValueError:
        raise TemplateSyntaxError("cutoff must be an integer in %r" % text)
    if cutoff < 1:
        raise TemplateSyntaxError("cutoff must be positive in %r" % text)
    slots = []
    for pair in fields[2:-1]:
        m = _PAIR_RE.match(pair)
        if not m:
            raise TemplateSyntaxError("bad slot pair %r in %r" % (pair, text))
        slots.append((m.group(1) == "<?>", m.group(2) == "<?>"))
    return FeatureTemplate(cutoff, tuple(slots))


def parse_templates(text):
    """Semicolon-separated template list."""
    return [parse_template(part) for part in text.split(";") if part.strip()]


def harvest_features(events, templates):
    """Count every (template, binding, outcome) and keep those at or above the cutoff.

    Returns ``{(template_index, binding, outcome): count}``.
    """
    counts = Counter()
    for ev in events:
        ctx = ev.context
        for ti, t in enumerate(templates):
            if t.arity > len(ctx):
                raise ArityMismatch("template %s needs %d slots, event has %d" % (t, t.arity, len(ctx)))
            counts[(ti, t.bind(ctx), ev.outcome)] += 1
    return {key: n for key, n in counts.items() if n >= templates[key[0]].cutoff}


class CondMaxEntModel:
    """``P(outcome | context)`` from template features, floored with a uniform mixture.

    ``weights`` maps ``(template_index, binding, outcome)`` to a real weight.
    """

    def __init__(self, templates, outcomes, weights=None, alpha=1e-3, scheme=None, lexicon=None, header=()):
        if not outcomes:
            raise ValueError("empty outcome vocabulary")
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        self.templates = list(templates)
        self.outcomes = tuple(outcomes)
        self.outcome_index = {o: i for i, o in enumerate(self.outcomes)}
        if len(self.outcome_index) != len(self.outcomes):
            raise ValueError("duplicate outcomes")
        self.alpha = float(alpha)
        self.scheme = scheme
        self.lexicon = dict(lexicon or {})
        self.header = list(header)
        self.weights = {}
        for key, w in (weights or {}).items():
            w = float(w)
            if not math.isfinite(w):
                raise NonfiniteWeight("weight for %r is %r" % (key, w))
            if key[2] not in self.outcome_index:
                raise ValueError("feature outcome %r not in vocabulary" % (key[2],))
            self.weights[key] = w
        self.train_log = None
        self._build_table()

    def _build_table(self):
        grouped = {}
        for (ti, binding, outcome), w in sorted(self.weights.items()):
            grouped.setdefault((ti, binding), ([], []))
            grouped[(ti, binding)][0].append(self.outcome_index[outcome])
            grouped[(ti, binding)][1].append(w)
        self._table = {k: (np.array(ix, dtype=np.intp), np.array(ws)) for k, (ix, ws) in grouped.items()}
        self._cache = {}

    @property
    def param_count(self):
        return len(self.weights)

    def with_weights(self, weights):
        return CondMaxEntModel(self.templates, self.outcomes, weights, self.alpha, self.scheme, self.lexicon, self.header)

    def scores(self, context):
        s = np.zeros(len(self.outcomes))
        for ti, t in enumerate(self.templates):
            hit = self._table.get((ti, t.bind(context)))
            if hit is not None:
                s[hit[0]] += hit[1]
        return s

    def cond_dist(self, context):
        """Probability vector over ``self.outcomes``; never below ``alpha / |outcomes|``."""
        key = tuple(t.bind(context) for t in self.templates)
        dist = self._cache.get(key)
        if dist is None:
            s = self.scores(context)
            e = np.exp(s - s.max())
            dist = (1.0 - self.alpha) * (e / e.sum()) + self.alpha / len(self.outcomes)
            dist.setflags(write=False)
            if len(self._cache) < 200000:
                self._cache[key] = dist
        return dist

    def cond_prob(self, context, outcome):
        i = self.outcome_index.get(outcome)
        if i is None:
            i = self.outcome_index.get(UNK)
            if i is None:
                return 0.0
        return float(self.cond_dist(context)[i])

    # -- persistence -------------------------------------------------------

    def dumps(self):
        lines = [MAGIC]
        lines.extend(self.header)
        if self.scheme is not None:
            lines.append("scheme %s" % self.scheme)
        lines.append("alpha %s" % format(self.alpha, ".17g"))
        lines.append("outcomes %d" % len(self.outcomes))
        lines.extend(escape(o) for o in self.outcomes)
        lines.append("templates %d" % len(self.templates))
        lines.extend(str(t) for t in self.templates)
        lines.append("features %d" % len(self.weights))
        for (ti, binding, outcome), w in sorted(self.weights.items()):
            fields = [str(ti)] + [escape(b) for b in binding] + [escape(outcome), format(w, ".17g")]
            lines.append("\t".join(fields))
        if self.lexicon:
            lines.append("lexicon %d" % len(self.lexicon))
            for word in sorted(self.lexicon):
                lines.append("%s\t%s" % (escape(word), escape(self.lexicon[word])))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text):
        return _ModelReader(text.split("\n")).read()


class _ModelReader:
    def __init__(self, lines):
        if lines and lines[-1] == "":
            lines = lines[:-1]
        self.lines = lines
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.lines):
            raise FormatError("unexpected end of file, expected %s" % what, self.pos + 1)
        self.pos += 1
        return self.lines[self.pos - 1]

    def keyed(self, key):
        line = self.next(key)
        parts = line.split(" ", 1)
        if parts[0] != key or len(parts) != 2:
            raise FormatError("expected '%s <value>'" % key, self.pos)
        return parts[1]

    def count(self, key):
        try:
            n = int(self.keyed(key))
        except ValueError:
            raise FormatError("bad %s count" % key, self.pos)
        if n < 0:
            raise FormatError("negative %s count" % key, self.pos)
        return n

    def read(self):
        if self.next("header") != MAGIC:
            raise FormatError("missing '%s' header" % MAGIC, 1)
        header = []
        while self.pos < len(self.lines) and self.lines[self.pos].startswith("#"):
            header.append(self.next("comment"))
        scheme = None
        if self.pos < len(self.lines) and self.lines[self.pos].startswith("scheme "):
            scheme = self.keyed("scheme")
        try:
            alpha = float(self.keyed("alpha"))
        except ValueError:
            raise FormatError("bad alpha", self.pos)
        outcomes = [unescape(self.next("outcome")) for _ in range(self.count("outcomes"))]
        templates = []
        for _ in range(self.count("templates")):
            line = self.next("template")
            try:
                templates.append(parse_template(line))
            except TemplateSyntaxError as exc:
                raise FormatError(str(exc), self.pos)
        weights = {}
        for _ in range(self.count("features")):
            fields = self.next("feature").split("\t")
            try:
                ti = int(fields[0])
                arity = len(templates[ti].match_positions)
                if len(fields) != arity + 3:
                    raise ValueError("expected %d fields" % (arity + 3))
                binding = tuple(unescape(b) for b in fields[1:1 + arity])
                weights[(ti, binding, unescape(fields[-2]))] = float(fields[-1])
            except (ValueError, IndexError) as exc:
                raise FormatError("bad feature line: %s" % exc, self.pos)
        lexicon = {}
        if self.pos < len(self.lines):
            for _ in range(self.count("lexicon")):
                fields = self.next("lexicon entry").split("\t")
                if len(fields) != 2:
                    raise FormatError("bad lexicon line", self.pos)
                lexicon[unescape(fields[0])] = unescape(fields[1])
        if self.pos != len(self.lines):
            raise FormatError("trailing content", self.pos + 1)
        try:
            return CondMaxEntModel(templates, outcomes, weights, alpha, scheme, lexicon, header)
        except ValueError as exc:
            raise FormatError(str(exc))


def save_model(model, path):
    atomic_write(path, model.dumps())


def load_model(path):
    with open(path, encoding="utf-8") as f:
        return CondMaxEntModel.loads(f.read())


def build_model(events, templates, outcomes=None, alpha=1e-3, **kw):
    """Harvest features from ``events`` and return an untrained (all-zero) model."""
    retained = harvest_features(events, templates)
    if outcomes is None:
        outcomes = sorted({ev.outcome for ev in events} | {"</s>", UNK})
    return CondMaxEntModel(templates, outcomes, {k: 0.0 for k in retained}, alpha, **kw)


# ---------------------------------------------------------------------------
# GIS


@dataclass
class TrainLog:
    loglik: List[float] = field(default_factory=list)  # mean log-likelihood per event, per pass
    violation: List[float] = field(default_factory=list)
    correction: int = 0
    converged: bool = False

    @property
    def iterations(self):
        return max(len(self.loglik) - 1, 0)


class _Problem:
    """Events grouped by context signature, in CSR form for the kernels."""

    def __init__(self, model, events):
        keys = sorted(model.weights)
        self.keys = keys
        nfeat = len(keys)
        V = len(model.outcomes)
        by_binding = {}
        glob_y, glob_f = [], []
        for f, (ti, binding, outcome) in enumerate(keys):
            y = model.outcome_index[outcome]
            if model.templates[ti].match_positions:
                by_binding.setdefault((ti, binding), []).append((y, f))
            else:
                glob_y.append(y)
                glob_f.append(f)
        self.glob_y = np.array(glob_y, dtype=np.int32)
        self.glob_f = np.array(glob_f, dtype=np.int64)

        ctx_ids = {}
        ctx_entries = []
        obs = []
        for ev in events:
            sig = tuple(t.bind(ev.context) for t in model.templates)
            c = ctx_ids.get(sig)
            if c is None:
                c = ctx_ids[sig] = len(ctx_entries)
                ents = []
                for ti, t in enumerate(model.templates):
                    if t.match_positions:
                        ents.extend(by_binding.get((ti, sig[ti]), ()))
                ctx_entries.append(ents)
                obs.append(Counter())
            y = model.outcome_index.get(ev.outcome)
            if y is None:
                y = model.outcome_index.get(UNK)
                if y is None:
                    raise ValueError("event outcome %r not in vocabulary" % ev.outcome)
            obs[c][y] += 1
        self.N = len(events)
        self.nctx = len(ctx_entries)
        self.V = V
        self.nfeat = nfeat

        sizes = np.array([len(e) for e in ctx_entries], dtype=np.int64)
        self.ctx_ptr = np.zeros(self.nctx + 1, dtype=np.int64)
        np.cumsum(sizes, out=self.ctx_ptr[1:])
        flat = [ent for ents in ctx_entries for ent in ents]
        self.ent_y = np.array([y for y, _ in flat], dtype=np.int32)
        self.ent_f = np.array([f for _, f in flat], dtype=np.int32)
        self.ctx_n = np.array([sum(o.values()) for o in obs], dtype=np.float64)
        osizes = np.array([len(o) for o in obs], dtype=np.int64)
        self.obs_ptr = np.zeros(self.nctx + 1, dtype=np.int64)
        np.cumsum(osizes, out=self.obs_ptr[1:])
        self.obs_y = np.array([y for o in obs for y in sorted(o)], dtype=np.int32)
        self.obs_n = np.array([o[y] for o in obs for y in sorted(o)], dtype=np.float64)

        # empirical feature counts and the GIS constant C
        gcount = np.bincount(self.glob_y, minlength=V).astype(np.int64)
        emp = np.zeros(nfeat)
        glob_obs = np.zeros(V)
        np.add.at(glob_obs, self.obs_y, self.obs_n)
        emp[self.glob_f] = glob_obs[self.glob_y]
        C = int(gcount.max()) if V else 0
        for c, ents in enumerate(ctx_entries):
            if not ents:
                continue
            per_y = Counter(y for y, _ in ents)
            C = max(C, max(gcount[y] + k for y, k in per_y.items()))
            o = obs[c]
            for y, f in ents:
                if y in o:
                    emp[f] += o[y]
        self.C = C
        self.emp_counts = emp
        # total active-feature count over observed events, exact in integers
        self.active_total = int(round(emp.sum()))

    def expectations(self, weights, threads=1, backend=None):
        """Model feature counts (sum over events) and total log-likelihood."""
        accumulate = backend or kernels.accumulate_shard
        gbase = np.zeros(self.V)
        np.add.at(gbase, self.glob_y, weights[self.glob_f])
        bounds = [(c0, min(c0 + SHARD_CONTEXTS, self.nctx)) for c0 in range(0, self.nctx, SHARD_CONTEXTS)]

        def run(bound):
            feat = np.zeros(self.nfeat)
            glob = np.zeros(self.V)
            ll = accumulate(self.ctx_ptr, self.ent_y, self.ent_f, self.ctx_n, self.obs_ptr, self.obs_y,
                            self.obs_n, weights, gbase, bound[0], bound[1], feat, glob)
            return feat, glob, ll

        if threads > 1 and len(bounds) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                parts = list(ex.map(run, bounds))
        else:
            parts = [run(b) for b in bounds]
        feat = np.zeros(self.nfeat)
        glob = np.zeros(self.V)
        ll = 0.0
        # fixed shard order keeps the sums independent of the thread count
        for pf, pg, pl in parts:
            feat += pf
            glob += pg
            ll += pl
        feat[self.glob_f] = glob[self.glob_y]
        return feat, ll


def train_gis(model, events, max_iters=200, tol=1e-4, threads=1, backend=None):
    """Fit ``model``'s feature weights to ``events`` by GIS.

    Stops once every retained feature's model expectation is within ``tol``
    of its empirical expectation (both per event) or after ``max_iters``
    updates.  Returns a new model whose ``train_log`` records the mean
    log-likelihood and maximum violation of every pass.
    """
    events = list(events)
    if not events:
        raise NoEvents("no training events")
    prob = _Problem(model, events)
    log = TrainLog(correction=prob.C)
    if prob.nfeat == 0:
        log.converged = True
        trained = model.with_weights({})
        trained.train_log = log
        return trained
    N = float(prob.N)
    C = float(prob.C)
    lam = np.array([model.weights[k] for k in prob.keys])
    lam_c = 0.0
    emp = prob.emp_counts / N
    emp_corr = (prob.N * prob.C - prob.active_total) / N
    it = 0
    while True:
        expected, ll = prob.expectations(lam - lam_c, threads, backend)
        expected /= N
        viol = float(np.max(np.abs(expected - emp)))
        log.loglik.append(ll / N)
        log.violation.append(viol)
        if viol <= tol:
            log.converged = True
            break
        if it >= max_iters:
            break
        with np.errstate(divide="ignore"):
            lam = lam + np.log(emp / expected) / C
        model_corr = C - float(expected.sum())
        if emp_corr > 0.0 and model_corr > 0.0:
            lam_c += math.log(emp_corr / model_corr) / C
        if not (np.all(np.isfinite(lam)) and math.isfinite(lam_c)):
            raise NonfiniteWeight("GIS update produced a non-finite weight at iteration %d" % (it + 1))
        it += 1
    eff = lam - lam_c
    trained = model.with_weights({k: float(w) for k, w in zip(prob.keys, eff)})
    trained.train_log = log
    return trained


def empirical_and_model_expectations(model, events):
    """Per-event empirical and model feature expectations for the model's own weights.

    Independent of the GIS bookkeeping: loops over events and outcomes directly.
    """
    keys = sorted(model.weights)
    index = {k: i for i, k in enumerate(keys)}
    emp = np.zeros(len(keys))
    mod = np.zeros(len(keys))
    floorless = model.with_weights(model.weights)
    floorless.alpha = 0.0
    for ev in events:
        bindings = [t.bind(ev.context) for t in model.templates]
        dist = floorless.cond_dist(ev.context)
        for ti, b in enumerate(bindings):
            for yi, y in enumerate(model.outcomes):
                i = index.get((ti, b, y))
                if i is not None:
                    mod[i] += dist[yi]
                    if y == ev.outcome:
                        emp[i] += 1
    return emp / len(events), mod / len(events)
