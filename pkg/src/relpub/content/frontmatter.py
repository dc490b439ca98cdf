"""YAML frontmatter between ``---`` lines, edited without reflowing the rest.

Only the top-level ``data`` key is ever rewritten, and it is rewritten as
text: every other byte of the page stays exactly as it was, which keeps
diffs in the site repository minimal and sync idempotent.
"""

import io
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import ParseError

DATA_KEY = "data"

_DELIM = re.compile(r"^---[ \t]*\r?$")
# a top-level mapping key; block sequences at column 0 ("- x") continue the previous key
_TOP_KEY = re.compile(r"^(?![-#\s])(?:\"[^\"]*\"|'[^']*'|[^:\s][^:]*?)\s*:(?:\s|$)")
_DATA_LINE = re.compile(r"^(?:data|\"data\"|'data')\s*:(?:\s|$)")
# YAML reads these as line breaks, PyYAML writes them raw under allow_unicode
_UNICODE_BREAKS = ("\x85", "\u2028", "\u2029")


@dataclass
class PageDocument:
    path: Path
    frontmatter: dict = field(default_factory=dict)
    body: str = ""
    raw_frontmatter: str = ""
    has_frontmatter: bool = True
    delimiters: tuple = ("---\n", "---\n")  # kept verbatim, including line endings

    def render(self):
        if not self.has_frontmatter:
            return self.body
        opening, closing = self.delimiters
        return opening + self.raw_frontmatter + closing + self.body


def split_page(text, path=None):
    """Split page text into ``(raw_frontmatter, body, delimiters)``.

    ``raw_frontmatter`` is None when the page has no frontmatter.
    """
    lines = _lines(text)
    if not lines or not _DELIM.match(lines[0].rstrip("\n")):
        return None, text, None
    for i in range(1, len(lines)):
        if _DELIM.match(lines[i].rstrip("\n")):
            return "".join(lines[1:i]), "".join(lines[i + 1:]), (lines[0], lines[i])
    raise ParseError("frontmatter is not closed by a '---' line", path=path, line=1)


def parse_page(text, path=None):
    raw, body, delimiters = split_page(text, path)
    if raw is None:
        return PageDocument(Path(path) if path else None, {}, body, "", has_frontmatter=False)
    try:
        data = yaml.safe_load(raw) if raw.strip() else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 2 if mark is not None else None  # +1 for the opening delimiter
        raise ParseError(f"invalid frontmatter YAML: {getattr(exc, 'problem', exc)}",
                         path=path, line=line) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParseError("frontmatter must be a mapping", path=path, line=2)
    return PageDocument(Path(path) if path else None, data, body, raw, True, delimiters)


def read_page(path):
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8: {exc.reason}", path=path) from None
    return parse_page(text, path)


def _lines(text):
    # str.splitlines would also split on form feeds and unicode separators
    return io.StringIO(text, newline="").readlines()


def dump_data(value):
    text = yaml.safe_dump({DATA_KEY: value}, sort_keys=False, allow_unicode=True,
                          default_flow_style=False, width=4096)
    if any(c in text for c in _UNICODE_BREAKS):
        text = yaml.safe_dump({DATA_KEY: value}, sort_keys=False, allow_unicode=False,
                              default_flow_style=False, width=4096)
    return text


def _data_span(lines):
    """Line range ``[start, end)`` of the top-level data key, or None."""
    start = None
    for i, line in enumerate(lines):
        if start is None:
            if _DATA_LINE.match(line):
                start = i
        elif _TOP_KEY.match(line):
            end = i
            # trailing blank and comment lines belong to the next key
            while end > start + 1 and (not lines[end - 1].strip() or lines[end - 1].lstrip().startswith("#")):
                end -= 1
            return start, end
    if start is None:
        return None
    return start, len(lines)


def set_data(page, value):
    """Return a copy of ``page`` whose ``data`` key holds ``value``."""
    lines = _lines(page.raw_frontmatter)
    block = _lines(dump_data(value))
    span = _data_span(lines)
    if span is None:
        if lines and not lines[-1].endswith("\n"):
            lines[-1] += "\n"
        new_lines = lines + block
    else:
        new_lines = lines[: span[0]] + block + lines[span[1]:]
    raw = "".join(new_lines)

    # guard the textual edit: other keys must parse back unchanged
    reparsed = yaml.safe_load(raw) or {}
    expected = dict(page.frontmatter)
    expected[DATA_KEY] = value
    if reparsed != expected:
        raise ParseError("could not rewrite the data key without disturbing other keys",
                         path=page.path)
    return PageDocument(page.path, reparsed, page.body, raw, True, page.delimiters)


def write_atomic(path, text):
    """Replace ``path`` with ``text`` via a temporary file in the same directory."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(text.encode("utf-8"))
        if path.exists():
            os.chmod(tmp, path.stat().st_mode & 0o7777)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
