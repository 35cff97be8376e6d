"""Small text-format helpers: token escaping and atomic file output."""

import hashlib
import os
import platform
import tempfile

_ESCAPES = {"\\": "\\\\", "_": "\\_", "\t": "\\t", "\n": "\\n", " ": "\\s"}
_UNESCAPES = {"\\": "\\", "_": "_", "t": "\t", "n": "\n", "s": " "}


def escape(text):
    """Backslash-escape ``\\``, ``_``, tab, newline and space."""
    if not any(c in text for c in _ESCAPES):
        return text
    return "".join(_ESCAPES.get(c, c) for c in text)


def unescape(text):
    if "\\" not in text:
        return text
    out = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\":
            if i + 1 >= len(text) or text[i + 1] not in _UNESCAPES:
                raise ValueError("bad escape in %r" % text)
            out.append(_UNESCAPES[text[i + 1]])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def split_pair(text):
    """Split ``word_tag`` on the first unescaped underscore and unescape both halves."""
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\":
            i += 2
            continue
        if c == "_":
            return unescape(text[:i]), unescape(text[i + 1:])
        i += 1
    raise ValueError("no unescaped '_' in %r" % text)


def join_pair(word, tag):
    return escape(word) + "_" + escape(tag)


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def repro_header(command, seed=None, inputs=(), extra=()):
    """Comment lines recording how an artifact was produced.

    Only deterministic facts go here so reruns stay byte-identical.
    """
    from slm import __version__

    lines = ["# slm %s python %s" % (__version__, platform.python_version())]
    lines.append("# command %s" % command)
    if seed is not None:
        lines.append("# seed %d" % seed)
    for path in inputs:
        lines.append("# input %s sha256=%s" % (os.path.basename(path), file_digest(path)))
    for key, value in extra:
        lines.append("# %s %s" % (key, value))
    return lines


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temp file in the same directory and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
