"""``slm`` command line: prep, train, ppl, report, sample, enum, joint.

Every artifact starts with ``#`` comment lines recording the package
version, the command and input digests; they contain nothing run-dependent,
so identical inputs give byte-identical outputs.
"""

import argparse
import logging
import os
import sys
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from slm import kernels
from slm.errors import SLMError, UsageError, exit_code_for
from slm.evaluate import compare_report, perplexity, render_table, render_tsv
from slm.lm import (
    PARSER_TEMPLATES,
    JointModel,
    Truncated,
    default_templates,
    joint_prob,
    parse_scheme,
    sample_sentence,
)
from slm.maxent import PARSER_OUTCOMES, build_model, load_model, parse_templates, train_gis
from slm.oracle import SynthSpec, enumerate_complete_parses, synth_corpus_gen
from slm.textio import atomic_write, repro_header, split_pair
from slm.transitions import BOS, UNK_TAG, Token, derivation_of, format_derivation, make_token
from slm.treebank import (
    Event,
    HeadRules,
    complete_with_boundaries,
    format_event,
    parse_bracketed,
    prepare,
    read_events,
    read_treebank,
    to_bracketed,
)

log = logging.getLogger("slm")

COMMANDS = ("prep", "train", "ppl", "report", "sample", "enum", "joint")
_INPUT_DESTS = ("input", "events", "model", "parser", "head_rules", "config")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError("%s\n\n%s" % (message, self.format_usage().strip()))


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser():
    parser = _Parser(prog="slm", description="Structured language model toolkit")
    parser.add_argument("--config", help="key=value file with option defaults; flags override")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
        p.add_argument("--threads", type=_positive_int, default=1)
        return p

    p = add("prep", "bracketed treebank -> event file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--head-rules")
    p.add_argument("--scheme", default="H")

    p = add("train", "event file -> maxent model")
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scheme")
    p.add_argument("--templates")
    p.add_argument("--alpha", type=float, default=1e-3)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--parser", action="store_true", help="train the parser model on the T events")
    p.add_argument("--unk-singletons", action="store_true", help="map outcome words seen once to <unk>")

    p = add("ppl", "perplexity of one model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--head-rules")
    p.add_argument("--out")
    p.add_argument("--include-boundary", action="store_true")

    p = add("report", "LM | PP | param table for several models")
    p.add_argument("--model", action="append", required=True, metavar="[NAME=]PATH")
    p.add_argument("--input", required=True)
    p.add_argument("--head-rules")
    p.add_argument("--out", required=True)
    p.add_argument("--tsv")

    p = add("sample", "draw sentences with parses")
    p.add_argument("--model")
    p.add_argument("--parser")
    p.add_argument("--planted", action="store_true", help="use the built-in head-conditioned generator")
    p.add_argument("--count", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-words", type=_positive_int, default=100)
    p.add_argument("--format", choices=("derivation", "bracketed"))
    p.add_argument("--out", required=True)

    p = add("enum", "all complete parses of a fixed sentence")
    p.add_argument("--len", type=int, required=True)
    p.add_argument("--words", help="space-separated words (default w1 .. wL)")
    p.add_argument("--out")

    p = add("joint", "log P(W,T) of treebank sentences")
    p.add_argument("--model", required=True)
    p.add_argument("--parser", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--head-rules")
    p.add_argument("--out")
    return parser


@dataclass
class RunPlan:
    command: str
    options: Dict[str, object]
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)

    def __getattr__(self, name):
        try:
            return self.options[name]
        except KeyError:
            raise AttributeError(name)


def _read_config(path):
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError("%s:%d: expected key=value" % (path, lineno))
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def parse_args(argv):
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.config:
        if not os.path.exists(ns.config):
            raise UsageError("config file not found: %s" % ns.config)
        sub = parser._subparsers._group_actions[0].choices[ns.command]
        known = {a.dest for a in sub._actions}
        values = _read_config(ns.config)
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError("unknown config keys for %s: %s" % (ns.command, ", ".join(unknown)))
        for key, value in values.items():
            action = next(a for a in sub._actions if a.dest == key)
            if action.nargs == 0:
                values[key] = value.lower() in ("1", "true", "yes")
            elif isinstance(action, argparse._AppendAction):
                values[key] = [v.strip() for v in value.split(",") if v.strip()]
        sub.set_defaults(**values)
        ns = parser.parse_args(argv)
    opts = vars(ns)
    command = opts.pop("command")
    opts.pop("config", None)
    plan = RunPlan(command, opts)
    if command == "sample":
        if opts["planted"] == bool(opts["model"]):
            raise UsageError("sample needs exactly one of --planted or --model (with --parser)")
        if opts["model"] and not opts["parser"]:
            raise UsageError("sample --model also needs --parser")
    if command == "enum" and not 1 <= opts["len"] <= 6:
        raise UsageError("--len must be between 1 and 6")
    for dest in _INPUT_DESTS:
        value = opts.get(dest)
        paths = value if isinstance(value, list) else [value]
        for path in paths:
            if path is None or path is True or path is False:
                continue
            if dest == "model" and command == "report" and "=" in path:
                path = path.split("=", 1)[1]
            if not os.path.exists(path):
                raise UsageError("%s not found: %s" % (dest.replace("_", "-"), path))
            plan.inputs.append(path)
    out = opts.get("out")
    for path in (out, opts.get("tsv")):
        if path:
            directory = os.path.dirname(os.path.abspath(path))
            if not os.path.isdir(directory) or not os.access(directory, os.W_OK):
                raise UsageError("output directory not writable: %s" % directory)
            plan.outputs.append(path)
    return plan


# ---------------------------------------------------------------------------
# stages


def _rules(plan):
    return HeadRules.load(plan.head_rules) if plan.head_rules else HeadRules.default_rules()


def _scheme(text):
    try:
        return parse_scheme(text)
    except ValueError as exc:
        raise UsageError(str(exc))


def _header(plan, extra=()):
    args = []
    for k, v in sorted(plan.options.items()):
        if v is None or v is False or k in ("out", "tsv", "threads"):
            continue
        for item in v if isinstance(v, list) else [v]:
            args.append("--%s" % k.replace("_", "-") if item is True else "--%s=%s" % (k.replace("_", "-"), item))
    args = " ".join(args)
    return repro_header("%s %s" % (plan.command, args), plan.options.get("seed"), plan.inputs, extra)


def _emit(plan, text):
    if plan.options.get("out"):
        atomic_write(plan.out, text)
    else:
        sys.stdout.write(text)


def run_prep(plan):
    scheme = _scheme(plan.scheme)
    with open(plan.input, encoding="utf-8") as f:
        trees = parse_bracketed(f.read())
    per_sentence = prepare(trees, _rules(plan), scheme, threads=plan.threads)
    lines = _header(plan, [("scheme", str(scheme)), ("sentences", len(per_sentence))])
    for events in per_sentence:
        lines.extend(format_event(ev) for ev in events)
    atomic_write(plan.out, "\n".join(lines) + "\n")
    log.info("prep: %d sentences, %d events", len(per_sentence), sum(map(len, per_sentence)))
    return 0


def _lexicon(events):
    """Most frequent tag of every word seen with a real tag in some context."""
    tags = {}
    for ev in events:
        for tok in ev.context:
            if tok.surface != BOS.surface and tok.tag not in ("<*>", UNK_TAG):
                tags.setdefault(tok.surface, Counter())[tok.tag] += 1
    return {w: min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0] for w, c in tags.items()}


def _adapt(events, source, target):
    """Reuse events extracted under ``source`` for ``target`` (same slots, maybe blanked tags)."""
    if source is None or (source.p, source.n) == (target.p, target.n) and (source.use_tags or not target.use_tags):
        if source is not None and source.use_tags and not target.use_tags:
            return [Event(ev.kind, tuple(Token(t.surface, "<*>") for t in ev.context), ev.outcome) for ev in events]
        return events
    raise UsageError("events were extracted with scheme %s; cannot train scheme %s" % (source, target))


def run_train(plan):
    events, meta = read_events(plan.events)
    source = _scheme(meta["scheme"]) if "scheme" in meta else None
    lexicon = _lexicon(events)
    extra = []
    if plan.parser:
        events = [ev for ev in events if ev.kind == "T"]
        templates = parse_templates(plan.templates or PARSER_TEMPLATES)
        model = build_model(events, templates, outcomes=PARSER_OUTCOMES, alpha=plan.alpha)
    else:
        scheme = _scheme(plan.scheme) if plan.scheme else source
        if scheme is None:
            raise UsageError("no --scheme given and the event file does not record one")
        events = _adapt([ev for ev in events if ev.kind == "P"], source, scheme)
        if plan.unk_singletons:
            counts = Counter(ev.outcome for ev in events)
            events = [ev if counts[ev.outcome] > 1 else Event("P", ev.context, "<unk>") for ev in events]
        templates = parse_templates(plan.templates or default_templates(scheme))
        model = build_model(events, templates, alpha=plan.alpha, scheme=str(scheme), lexicon=lexicon)
    trained = train_gis(model, events, max_iters=plan.iters, tol=plan.tol, threads=plan.threads)
    tl = trained.train_log
    extra = [("events", len(events)), ("iterations", tl.iterations), ("converged", int(tl.converged)),
             ("max-violation", "%.6g" % tl.violation[-1] if tl.violation else "0")]
    trained.header = _header(plan, extra)
    atomic_write(plan.out, trained.dumps())
    log.info("train: %d events, %d features, %d iterations (%s backend)", len(events), trained.param_count,
             tl.iterations, kernels.BACKEND)
    return 0


def _read_corpus(path, rules):
    with open(path, encoding="utf-8") as f:
        text = f.read()
    body = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if body and body[0].lstrip().startswith("("):
        return read_treebank(path, rules)
    sentences = []
    for line in body:
        words = line.split()
        toks = []
        for w in words:
            try:
                toks.append(make_token(*split_pair(w)))
            except ValueError:
                toks.append(make_token(w))
        sentences.append(toks)
    return sentences


def _model_scheme(model, path):
    if model.scheme is None:
        raise UsageError("model %s records no context scheme" % path)
    return _scheme(model.scheme)


def run_ppl(plan):
    model = load_model(plan.model)
    scheme = _model_scheme(model, plan.model)
    corpus = _read_corpus(plan.input, _rules(plan))
    r = perplexity(model, scheme, corpus, include_boundary=plan.include_boundary)
    text = "\n".join(_header(plan)) + "\nPP %.1f\tsentences %d\twords %d\toov %d\tlogprob %s\n" % (
        r.pp, r.sentences, r.words, r.oov, format(r.logprob, ".17g"))
    _emit(plan, text)
    return 0


def run_report(plan):
    corpus = _read_corpus(plan.input, _rules(plan))
    models = []
    for spec in plan.model:
        name, _, path = spec.rpartition("=")
        model = load_model(path)
        models.append((name or model.scheme or os.path.basename(path), model, _model_scheme(model, path)))
    report = compare_report(models, corpus)
    header = "\n".join(_header(plan)) + "\n"
    atomic_write(plan.out, header + render_table(report))
    if plan.tsv:
        atomic_write(plan.tsv, header + render_tsv(report))
    sys.stdout.write(render_table(report))
    return 0


def _joint_model(plan):
    pred = load_model(plan.model)
    parser = load_model(plan.parser)
    return JointModel(pred, _model_scheme(pred, plan.model), parser)


def run_sample(plan):
    lines = _header(plan)
    if plan.planted:
        corpus = synth_corpus_gen(plan.seed, plan.count, SynthSpec(), max_words=plan.max_words)
        fmt = plan.format or "bracketed"
        for s in corpus:
            parse = complete_with_boundaries(s.tree)
            lines.append(to_bracketed(s.tree) if fmt == "bracketed" else format_derivation(derivation_of(parse)))
    else:
        jm = _joint_model(plan)
        rng = np.random.default_rng(plan.seed)
        fmt = plan.format or "derivation"
        truncated = 0
        for _ in range(plan.count):
            s = sample_sentence(jm, rng, plan.max_words)
            if isinstance(s, Truncated):
                truncated += 1
                lines.append("# truncated after %d words" % len(s.words))
            elif fmt == "derivation":
                lines.append(format_derivation(derivation_of(s.parse)))
            elif s.parse.right.right.__class__.__name__ == "Leaf":
                lines.append(to_bracketed(s.parse.right.left))
            else:
                lines.append("# words do not form one constituent: %s" % " ".join(s.words))
        log.info("sample: %d drawn, %d truncated", plan.count, truncated)
    atomic_write(plan.out, "\n".join(lines) + "\n")
    return 0


def run_enum(plan):
    words = plan.words.split() if plan.words else ["w%d" % (i + 1) for i in range(plan.len)]
    if len(words) != plan.len:
        raise UsageError("--words has %d words, --len is %d" % (len(words), plan.len))
    result = enumerate_complete_parses([make_token(*split_pair(w)) if "_" in w else Token(w, "X") for w in words])
    lines = _header(plan, [("parses", result.count)])
    lines.extend(sorted(format_derivation(derivation_of(t)) for t in result.parses))
    _emit(plan, "\n".join(lines) + "\n")
    log.info("enum: %d complete parses for %d words", result.count, plan.len)
    return 0


def run_joint(plan):
    jm = _joint_model(plan)
    lines = _header(plan)
    for tree in read_treebank(plan.input, _rules(plan)):
        parse = complete_with_boundaries(tree)
        lp = joint_prob(jm, None, parse)
        words = [t.word.surface for t in derivation_of(parse).steps if hasattr(t, "word")][:-1]
        lines.append("%s\t%s" % (format(lp, ".17g"), " ".join(words)))
    _emit(plan, "\n".join(lines) + "\n")
    return 0


STAGES = {
    "prep": run_prep,
    "train": run_train,
    "ppl": run_ppl,
    "report": run_report,
    "sample": run_sample,
    "enum": run_enum,
    "joint": run_joint,
}


def run(plan):
    return STAGES[plan.command](plan)


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        plan = parse_args(sys.argv[1:] if argv is None else argv)
        return run(plan)
    except SLMError as exc:
        log.error("slm: %s", exc)
        return exit_code_for(exc)
    except OSError as exc:
        log.error("slm: %s", exc)
        return 8
