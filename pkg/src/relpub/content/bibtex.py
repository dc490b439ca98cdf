"""Minimal BibTeX reader and the publication list built from it.

Field values are unwrapped from their outer braces or quotes and kept
otherwise verbatim, including LaTeX accent commands and inner braces.
``@string`` macros and ``#`` concatenation are expanded; ``@comment``,
``@preamble`` and unknown entry types are skipped with a warning.
"""

import logging
import re
from dataclasses import dataclass, field

from ..errors import ParseError

log = logging.getLogger(__name__)

ENTRY_TYPES = frozenset({
    "article", "book", "booklet", "conference", "dataset", "inbook", "incollection",
    "inproceedings", "manual", "mastersthesis", "misc", "online", "phdthesis",
    "proceedings", "report", "software", "techreport", "thesis", "unpublished",
})

MONTHS = {m: name for m, name in zip(
    ("jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"),
    ("January", "February", "March", "April", "May", "June", "July", "August",
     "September", "October", "November", "December"))}

_IDENT = re.compile(r"[A-Za-z_][\w\-:.+/]*")
_KEY = re.compile(r"[^\s,{}()\"=#%]+")


@dataclass
class BibEntry:
    entry_type: str
    citekey: str
    fields: dict = field(default_factory=dict)
    line: int = 0

    def __eq__(self, other):
        if not isinstance(other, BibEntry):
            return NotImplemented
        return (self.entry_type, self.citekey, self.fields) == (other.entry_type, other.citekey, other.fields)


class _Reader:
    def __init__(self, text, path):
        self.text = text
        self.pos = 0
        self.path = path

    def line_at(self, pos):
        return self.text.count("\n", 0, pos) + 1

    def error(self, message, pos=None):
        return ParseError(message, path=self.path, line=self.line_at(self.pos if pos is None else pos))

    def skip_ws(self):
        n = len(self.text)
        while self.pos < n:
            c = self.text[self.pos]
            if c.isspace():
                self.pos += 1
            elif c == "%":  # line comment inside an entry
                end = self.text.find("\n", self.pos)
                self.pos = n if end < 0 else end + 1
            else:
                break

    def peek(self):
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, chars):
        self.skip_ws()
        c = self.peek()
        if not c or c not in chars:
            found = repr(c) if c else "end of input"
            raise self.error(f"expected {' or '.join(repr(x) for x in chars)}, found {found}")
        self.pos += 1
        return c

    def match(self, pattern, what):
        self.skip_ws()
        m = pattern.match(self.text, self.pos)
        if not m:
            raise self.error(f"expected {what}")
        self.pos = m.end()
        return m.group(0)

    def braced(self):
        """Read ``{...}`` starting at the opening brace; return the inner text.

        As in BibTeX itself, every brace counts, escaped or not.
        """
        start = self.pos
        depth = 0
        for i in range(self.pos, len(self.text)):
            c = self.text[i]
            if c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    self.pos = i + 1
                    return self.text[start + 1:i]
        raise self.error("unbalanced braces", start)

    def quoted(self):
        start = self.pos
        depth = 0
        for i in range(self.pos + 1, len(self.text)):
            c = self.text[i]
            if c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth < 0:
                    raise self.error("unbalanced braces in quoted value", start)
            elif c == '"' and depth == 0:
                self.pos = i + 1
                return self.text[start + 1:i]
        raise self.error("unterminated quoted value", start)

    def skip_block(self, close):
        """Skip the rest of an entry whose opener was just consumed."""
        start = self.pos - 1
        if close == "}":
            self.pos = start
            self.braced()
            return
        depth = 0
        for i in range(self.pos, len(self.text)):
            c = self.text[i]
            if c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
            elif c == ")" and depth == 0:
                self.pos = i + 1
                return
        raise self.error("unbalanced parentheses", start)


def _value(reader, macros):
    """Parse ``part (# part)*`` and return the concatenated string."""
    parts = []
    while True:
        reader.skip_ws()
        c = reader.peek()
        if c == "{":
            parts.append(reader.braced())
        elif c == '"':
            parts.append(reader.quoted())
        elif c.isdigit():
            parts.append(reader.match(re.compile(r"\d+"), "number"))
        elif c and (c.isalpha() or c == "_"):
            pos = reader.pos
            name = reader.match(_IDENT, "string name").lower()
            if name in macros:
                parts.append(macros[name])
            elif name in MONTHS:
                parts.append(MONTHS[name])
            else:
                raise reader.error(f"undefined string macro {name!r}", pos)
        else:
            raise reader.error("expected a field value")
        reader.skip_ws()
        if reader.peek() == "#":
            reader.pos += 1
            continue
        return "".join(parts)


def parse_bibtex(text, path=None, warnings=None):
    """Parse BibTeX ``text`` into a list of :class:`BibEntry` in file order.

    Messages about skipped content are logged and, if ``warnings`` is a
    list, appended to it.
    """

    def warn(message, pos):
        message = f"line {reader.line_at(pos)}: {message}"
        log.warning(message)
        if warnings is not None:
            warnings.append(message)

    reader = _Reader(text, path)
    macros = {}
    entries = []
    seen = {}
    while True:
        at = text.find("@", reader.pos)
        if at < 0:
            break
        reader.pos = at + 1
        kind = reader.match(_IDENT, "entry type after '@'").lower()
        opener = reader.expect("{(")
        close = "}" if opener == "{" else ")"

        if kind == "comment":
            warn("@comment skipped", at)
            reader.skip_block(close)
            continue
        if kind == "preamble":
            warn("@preamble skipped", at)
            reader.skip_block(close)
            continue
        if kind == "string":
            name = reader.match(_IDENT, "string name").lower()
            reader.expect("=")
            macros[name] = _value(reader, macros)
            reader.expect(close)
            continue
        if kind not in ENTRY_TYPES:
            warn(f"unknown entry type @{kind} skipped", at)
            reader.skip_block(close)
            continue

        key_pos = reader.pos
        citekey = reader.match(_KEY, "citation key")
        if citekey in seen:
            raise reader.error(f"duplicate citation key {citekey!r} (first defined on line {seen[citekey]})",
                               key_pos)
        seen[citekey] = reader.line_at(at)
        entry = BibEntry(kind, citekey, {}, reader.line_at(at))
        while True:
            reader.skip_ws()
            if not reader.peek():
                raise reader.error(f"unbalanced braces: entry {citekey!r} is never closed", at)
            sep = reader.expect("," + close)
            if sep == close:
                break
            reader.skip_ws()
            if reader.peek() == close:  # trailing comma
                reader.pos += 1
                break
            name_pos = reader.pos
            name = reader.match(_IDENT, "field name").lower()
            reader.expect("=")
            value = _value(reader, macros)
            if name in entry.fields:
                warn(f"{citekey}: repeated field {name!r} ignored", name_pos)
            else:
                entry.fields[name] = value
        entries.append(entry)
    return entries


def serialize_bibtex(entries):
    out = []
    for e in entries:
        out.append(f"@{e.entry_type}{{{e.citekey},\n")
        for name, value in e.fields.items():
            out.append(f"  {name} = {{{value}}},\n")
        out.append("}\n\n")
    return "".join(out)


# --- publication list ------------------------------------------------------

def _split_and(value):
    """Split an author list on top-level ``and``."""
    names, depth, start, i = [], 0, 0, 0
    sep = re.compile(r"\s+and\s+", re.IGNORECASE)
    while i < len(value):
        c = value[i]
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
        elif depth == 0 and c.isspace():
            m = sep.match(value, i)
            if m:
                names.append(value[start:i])
                start = i = m.end()
                continue
        i += 1
    names.append(value[start:])
    return [n for n in (" ".join(n.split()) for n in names) if n]


def display_name(name):
    """``Last, First`` becomes ``First Last``; ``Last, Jr, First`` becomes ``First Last, Jr``."""
    parts = [p.strip() for p in name.split(",")]
    if len(parts) == 2 and parts[1]:
        return f"{parts[1]} {parts[0]}"
    if len(parts) == 3 and parts[2]:
        return f"{parts[2]} {parts[0]}, {parts[1]}"
    return name


def doi_url(doi):
    doi = doi.strip()
    doi = re.sub(r"^(?:https?://(?:dx\.)?doi\.org/|doi:)", "", doi, flags=re.IGNORECASE)
    return "https://doi.org/" + doi if doi else None


VENUE_FIELDS = ("journal", "booktitle", "publisher", "school", "institution", "howpublished")


def render_publication(entry):
    f = {k: " ".join(v.split()) for k, v in entry.fields.items()}
    item = {
        "authors": [display_name(n) for n in _split_and(entry.fields.get("author", ""))],
        "title": f.get("title"),
        "venue": next((f[k] for k in VENUE_FIELDS if f.get(k)), None),
        "year": f.get("year"),
        "doi_url": doi_url(f["doi"]) if f.get("doi") else None,
    }
    return {k: v for k, v in item.items() if v}


def _year_key(item):
    year = item.get("year", "")
    m = re.match(r"\d+", year)
    return -int(m.group(0)) if m else float("inf")


def render_publications(entries):
    """Publication list sorted by year (newest first), ties kept in file order."""
    items = [render_publication(e) for e in entries]
    return sorted(items, key=_year_key)
