import random

import pytest

from relpub.identifiers import (
    is_absolute_url,
    is_valid_orcid,
    is_valid_ror,
    is_xml_safe,
    normalize_orcid,
    orcid_check_digit,
)


def oracle_check_char(digits15):
    """MOD 11-2 written as the closed-form weighted sum: sum(d_i * 2^(15-i)), i = 0..14."""
    weighted = sum(int(d) * pow(2, 15 - i) for i, d in enumerate(digits15))
    value = (12 - weighted % 11) % 11
    return "X" if value == 10 else str(value)


def hyphenate(sixteen):
    return "-".join(sixteen[i:i + 4] for i in range(0, 16, 4))


@pytest.mark.parametrize("orcid", [
    "0000-0002-1825-0097",  # ORCID's documentation example
    "0000-0001-5109-3700",
    "0000-0002-1694-233X",  # check character X
])
def test_known_valid_orcids(orcid):
    assert is_valid_orcid(orcid)
    assert oracle_check_char(orcid.replace("-", "")[:15]) == orcid[-1]


@pytest.mark.parametrize("orcid", [
    "0000-0002-1825-0098",
    "0000-0002-1825-009",
    "0000000218250097",
    "0000-0002-1825-009x",
    "",
])
def test_invalid_orcids(orcid):
    assert not is_valid_orcid(orcid)


def test_orcid_url_prefix_is_accepted():
    assert normalize_orcid("https://orcid.org/0000-0002-1825-0097") == "0000-0002-1825-0097"
    assert is_valid_orcid("https://orcid.org/0000-0002-1825-0097")


def test_orcid_agrees_with_oracle_on_random_strings():
    rng = random.Random(20210728)
    for _ in range(5000):
        base = "".join(rng.choice("0123456789") for _ in range(15))
        last = rng.choice("0123456789X")
        candidate = hyphenate(base + last)
        assert is_valid_orcid(candidate) == (oracle_check_char(base) == last)
        assert orcid_check_digit(base) == oracle_check_char(base)


@pytest.mark.parametrize("ror,ok", [
    ("https://ror.org/04t3en479", True),
    ("https://ror.org/018mejw64", True),
    ("http://ror.org/04t3en479", False),
    ("https://ror.org/14t3en479", False),   # must start with 0
    ("https://ror.org/04t3en4l9", False),   # 'l' is not Crockford base32
    ("https://ror.org/04t3en47", False),
    ("04t3en479", False),
])
def test_ror_pattern(ror, ok):
    assert is_valid_ror(ror) is ok


@pytest.mark.parametrize("url,ok", [
    ("https://openCARP.org/download/license", True),
    ("http://id.loc.gov/authorities/subjects/sh85082124", True),
    ("not a url", False),
    ("openCARP.org/download", False),
    ("mailto:someone@example.org", False),
    ("https://exa mple.org", False),
    ("", False),
])
def test_absolute_url(url, ok):
    assert is_absolute_url(url) is ok


def test_xml_safe():
    assert is_xml_safe("a<b&c äß \U0001f600")
    assert not is_xml_safe("bell\x07")
    assert not is_xml_safe("￾")
