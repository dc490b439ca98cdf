"""Syntax checks for ORCID iDs, ROR ids, URLs and XML-safe text."""

import re
from urllib.parse import urlsplit

ORCID_RE = re.compile(r"^(\d{4})-(\d{4})-(\d{4})-(\d{3}[\dX])$")
ORCID_URL_PREFIXES = ("https://orcid.org/", "http://orcid.org/")
# ROR ids: leading 0, six Crockford base32 characters, two check digits.
ROR_RE = re.compile(r"^https://ror\.org/0[0-9a-hjkmnp-tv-z]{6}[0-9]{2}$")

# Characters not allowed in XML 1.0 documents.
_XML_ILLEGAL_RE = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ufffe\uffff\ud800-\udfff]")


def orcid_check_digit(base_digits):
    """ISO 7064 MOD 11-2 check character over the first 15 digits."""
    total = 0
    for ch in base_digits:
        total = (total + int(ch)) * 2
    result = (12 - total % 11) % 11
    return "X" if result == 10 else str(result)


def normalize_orcid(value):
    """Strip an orcid.org URL prefix; returns the bare hyphenated iD."""
    value = str(value).strip()
    for prefix in ORCID_URL_PREFIXES:
        if value.startswith(prefix):
            return value[len(prefix):]
    return value


def is_valid_orcid(value):
    m = ORCID_RE.match(normalize_orcid(value))
    if not m:
        return False
    digits = "".join(m.groups())
    return orcid_check_digit(digits[:15]) == digits[15]


def is_valid_ror(value):
    return bool(ROR_RE.match(str(value)))


def is_absolute_url(value):
    if not isinstance(value, str) or not value or any(c.isspace() for c in value):
        return False
    try:
        parts = urlsplit(value)
    except ValueError:
        return False
    return bool(parts.scheme and parts.netloc) and parts.scheme in ("http", "https", "ftp")


def is_xml_safe(text):
    return _XML_ILLEGAL_RE.search(text) is None
