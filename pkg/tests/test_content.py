import hashlib
import json
import shutil

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES, RELEASE
from relpub.content import (
    BibEntry,
    SyncRule,
    parse_bibtex,
    parse_page,
    read_page,
    render_publications,
    scan_pages,
    serialize_bibtex,
    sync_page,
    sync_site,
)
from relpub.content.bibtex import display_name, doi_url
from relpub.content.frontmatter import set_data, split_page, write_atomic
from relpub.errors import MissingSourceError, ParseError

SITE = FIXTURES / "site"
BIB = FIXTURES / "bibtex"
TAGGED = {"05.contributors/default.md", "10.metadata/default.md", "11.changelog/default.md"}


@pytest.fixture
def site(tmp_path):
    dest = tmp_path / "site"
    shutil.copytree(SITE, dest)
    return dest


def tree_digests(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def bodies(root):
    out = {}
    for p in sorted(root.rglob("*.md")):
        raw, body, _ = split_page(p.read_bytes().decode("utf-8"))
        out[p.relative_to(root).as_posix()] = body.encode("utf-8")
    return out


# --- frontmatter -----------------------------------------------------------

def test_parse_page():
    page = parse_page("---\ntitle: T\npipeline: openCARP\n---\nbody\n")
    assert page.frontmatter == {"title": "T", "pipeline": "openCARP"}
    assert page.body == "body\n"
    assert page.render() == "---\ntitle: T\npipeline: openCARP\n---\nbody\n"


def test_page_without_frontmatter():
    page = parse_page("just text\n")
    assert not page.has_frontmatter
    assert page.render() == "just text\n"


def test_unclosed_frontmatter():
    with pytest.raises(ParseError) as exc:
        parse_page("---\ntitle: T\nbody\n", "p.md")
    assert exc.value.line == 1


def test_bad_frontmatter_yaml_line():
    with pytest.raises(ParseError) as exc:
        parse_page("---\ntitle: T\nlist: [a, b\n---\n", "p.md")
    assert exc.value.line is not None and exc.value.line >= 3


def test_crlf_page_round_trips(site):
    path = site / "pages" / "03.download" / "default.md"
    assert read_page(path).render().encode("utf-8") == path.read_bytes()


def test_set_data_appends_and_keeps_other_bytes():
    text = "---\ntitle: T\n# a comment\ntaxonomy:\n    tag: [x]\n---\nbody  \n"
    page = set_data(parse_page(text), {"creators": [{"name": "Doe, Jane"}]})
    assert page.render() == (
        "---\ntitle: T\n# a comment\ntaxonomy:\n    tag: [x]\n"
        "data:\n  creators:\n  - name: Doe, Jane\n---\nbody  \n")


def test_set_data_replaces_existing_block():
    text = "---\ntitle: T\ndata:\n  stale: true\n  more:\n  - 1\n\n# keep me\nvisible: false\n---\nB\n"
    page = set_data(parse_page(text), "fresh")
    assert page.render() == "---\ntitle: T\ndata: fresh\n\n# keep me\nvisible: false\n---\nB\n"
    assert page.frontmatter == {"title": "T", "data": "fresh", "visible": False}


def test_set_data_block_sequence_at_column_zero():
    text = "---\ndata:\n- a\n- b\nnext: 1\n---\n"
    page = set_data(parse_page(text), ["c"])
    assert page.render() == "---\ndata:\n- c\nnext: 1\n---\n"


yaml_values = st.recursive(
    st.none() | st.booleans() | st.integers() | st.text(max_size=20),
    lambda inner: st.lists(inner, max_size=3) | st.dictionaries(st.text(min_size=1, max_size=8), inner, max_size=3),
    max_leaves=10,
)


@settings(max_examples=150, deadline=None)
@given(first=yaml_values, second=yaml_values)
def test_set_data_touches_only_the_data_key(first, second):
    text = "---\ntitle: T\n# comment\ndata:\n  old: 1\nz_last: [1, 2]\n---\nbody\n"
    page = set_data(parse_page(text), first)
    assert page.frontmatter["data"] == first
    assert page.frontmatter["title"] == "T" and page.frontmatter["z_last"] == [1, 2]
    rendered = page.render()
    assert rendered.startswith("---\ntitle: T\n# comment\ndata:")
    assert rendered.endswith("z_last: [1, 2]\n---\nbody\n")
    again = set_data(parse_page(rendered), second)
    assert set_data(parse_page(again.render()), first).render() == rendered


@pytest.mark.parametrize("value", ["\x85", "a\u2028b", "p\u2029", "form\x0cfeed", "Übersicht"])
def test_set_data_with_unicode_line_separators(value):
    text = "---\ntitle: T\ndata: 1\nz: 2\n---\nbody\x0cwith\u2028separators\n"
    page = set_data(parse_page(text), value)
    assert yaml.safe_load(page.raw_frontmatter) == {"title": "T", "data": value, "z": 2}
    assert page.body == "body\x0cwith\u2028separators\n"
    assert parse_page(page.render()).frontmatter["data"] == value


def test_write_atomic_keeps_mode(tmp_path):
    path = tmp_path / "p.md"
    path.write_text("old")
    path.chmod(0o640)
    write_atomic(path, "new")
    assert path.read_text() == "new"
    assert path.stat().st_mode & 0o777 == 0o640
    assert [p.name for p in tmp_path.iterdir()] == ["p.md"]


# --- scan_pages ------------------------------------------------------------

def test_scan_finds_tagged_pages(site):
    result = scan_pages(site, "openCARP")
    found = {page.path.relative_to(site / "pages").as_posix() for page, _ in result.pages}
    assert found == TAGGED
    assert result.errors == []
    rules = {rule.source for _, rule in result.pages}
    assert rules == {"CONTRIBUTORS.yml", "METADATA.yml", "CHANGELOG.md"}


def test_scan_three_of_ten(tmp_path):
    for i in range(10):
        tag = "pipeline: openCARP\nsource: METADATA.yml\n" if i in (1, 4, 7) else ""
        (tmp_path / f"p{i}.md").write_text(f"---\ntitle: {i}\n{tag}---\n")
    assert len(scan_pages(tmp_path, "openCARP").pages) == 3


def test_scan_other_pipeline_excluded(site):
    found = [page.path.parent.name for page, _ in scan_pages(site, "other").pages]
    assert found == ["03.download"]


def test_scan_tagged_page_without_source(site):
    (site / "pages" / "13.broken").mkdir()
    (site / "pages" / "13.broken" / "default.md").write_text("---\npipeline: openCARP\n---\n")
    result = scan_pages(site, "openCARP")
    assert len(result.pages) == 3
    assert len(result.errors) == 1
    assert isinstance(result.errors[0], ParseError)
    assert "13.broken" in str(result.errors[0].path)


def test_scan_collects_malformed_pages(site):
    (site / "pages" / "14.bad.md").write_text("---\ntitle: [unclosed\n---\n")
    result = scan_pages(site, "openCARP")
    assert len(result.pages) == 3
    assert len(result.errors) == 1


def test_sync_rule_needs_both_parts():
    with pytest.raises(ValueError):
        SyncRule("openCARP", "")


# --- sync_page -------------------------------------------------------------

def test_sync_contributors_page(site):
    page = read_page(site / "pages" / "05.contributors" / "default.md")
    synced = sync_page(page, SyncRule("openCARP", "CONTRIBUTORS.yml"), RELEASE)
    expected = yaml.safe_load((RELEASE / "CONTRIBUTORS.yml").read_text())
    assert synced.frontmatter["data"] == expected
    assert synced.frontmatter["data"]["creators"][0]["family_name"] == "Doe"
    assert synced.body == page.body
    assert synced.raw_frontmatter.startswith(page.raw_frontmatter)


def test_sync_text_source(site):
    page = read_page(site / "pages" / "11.changelog" / "default.md")
    synced = sync_page(page, SyncRule("openCARP", "CHANGELOG.md"), RELEASE)
    assert synced.frontmatter["data"] == (RELEASE / "CHANGELOG.md").read_text()


def test_resync_is_identity(site):
    page = read_page(site / "pages" / "05.contributors" / "default.md")
    rule = SyncRule("openCARP", "CONTRIBUTORS.yml")
    once = sync_page(page, rule, RELEASE)
    twice = sync_page(parse_page(once.render(), once.path), rule, RELEASE)
    assert twice.render() == once.render()


def test_missing_source(site, tmp_path):
    page = read_page(site / "pages" / "05.contributors" / "default.md")
    with pytest.raises(MissingSourceError) as exc:
        sync_page(page, SyncRule("openCARP", "CONTRIBUTORS.yml"), tmp_path)
    assert exc.value.source == "CONTRIBUTORS.yml"
    assert "CONTRIBUTORS.yml" in str(exc.value)


def test_source_outside_repo(site, tmp_path):
    (tmp_path / "secret.yml").write_text("a: 1\n")
    repo = tmp_path / "repo"
    repo.mkdir()
    page = read_page(site / "pages" / "05.contributors" / "default.md")
    with pytest.raises(MissingSourceError):
        sync_page(page, SyncRule("openCARP", "../secret.yml"), repo)


def test_invalid_source_yaml(site, tmp_path):
    (tmp_path / "CONTRIBUTORS.yml").write_text("creators: [a\n")
    page = read_page(site / "pages" / "05.contributors" / "default.md")
    with pytest.raises(ParseError):
        sync_page(page, SyncRule("openCARP", "CONTRIBUTORS.yml"), tmp_path)


# --- sync_site -------------------------------------------------------------

def test_sync_site(site):
    before = tree_digests(site)
    before_bodies = bodies(site)
    result = sync_site(site, RELEASE, "openCARP")
    assert result.errors == []
    updated = {p.relative_to(site / "pages").as_posix() for p in result.updated}
    assert updated == TAGGED
    after = tree_digests(site)
    changed = {k for k in after if after[k] != before[k]}
    assert changed == {f"pages/{p}" for p in TAGGED}
    assert bodies(site) == before_bodies

    second = sync_site(site, RELEASE, "openCARP")
    assert second.updated == []
    assert len(second.unchanged) == 3
    assert tree_digests(site) == after


def test_sync_site_dry_run(site):
    before = tree_digests(site)
    result = sync_site(site, RELEASE, "openCARP", dry_run=True)
    assert len(result.updated) == 3
    assert tree_digests(site) == before


def test_sync_site_keeps_going_after_missing_source(site, tmp_path):
    repo = tmp_path / "repo"
    repo.mkdir()
    shutil.copy(RELEASE / "METADATA.yml", repo)
    result = sync_site(site, repo, "openCARP")
    assert [p.parent.name for p in result.updated] == ["10.metadata"]
    assert sorted(e.source for e in result.errors) == ["CHANGELOG.md", "CONTRIBUTORS.yml"]


# --- BibTeX parsing --------------------------------------------------------

def test_minimal_entry():
    entries = parse_bibtex("@article{key, title={T}, year={2020}}")
    assert entries == [BibEntry("article", "key", {"title": "T", "year": "2020"})]


def test_duplicate_key():
    text = "@article{dup, title={A}}\n\n@book{dup, title={B}}\n"
    with pytest.raises(ParseError) as exc:
        parse_bibtex(text)
    assert "dup" in str(exc.value)
    assert exc.value.line == 3


def test_fixture_has_five_entries_in_order():
    entries = parse_bibtex((BIB / "publications.bib").read_text(encoding="utf-8"))
    assert [e.citekey for e in entries] == [
        "doe2019models", "mueller2021gpu", "opencarp2020", "roe2018thesis", "curator2021sustain"]


def test_fixture_field_values():
    warnings = []
    entries = parse_bibtex((BIB / "publications.bib").read_text(encoding="utf-8"), warnings=warnings)
    by_key = {e.citekey: e for e in entries}
    assert by_key["doe2019models"].fields["journal"] == "Journal of Computational Electrophysiology"
    gpu = by_key["mueller2021gpu"].fields
    assert gpu["booktitle"] == "Proceedings of the Cardiac Modeling Workshop"
    assert gpu["author"] == 'M{\\"u}ller, Hans and Doe, Jane'
    assert gpu["year"] == "2021"
    assert gpu["month"] == "June"
    assert by_key["opencarp2020"].fields["author"] == "{openCARP consortium}"
    assert any("@comment" in w for w in warnings)


def test_unbalanced_braces_line():
    text = "@article{a, title={ok}}\n\n@article{b,\n  title = {never closed,\n  year = 2020\n"
    with pytest.raises(ParseError) as exc:
        parse_bibtex(text)
    # points at the brace that is never closed
    assert exc.value.line == 4
    assert "unbalanced" in str(exc.value)


def test_unclosed_entry_line():
    with pytest.raises(ParseError) as exc:
        parse_bibtex("@misc{a, title={ok}}\n@misc{b,\n  title = {x}\n")
    assert exc.value.line == 2


def test_skipped_blocks_warn():
    warnings = []
    text = ("@preamble{\"\\newcommand{\\x}{y}\"}\n"
            "@comment{nothing}\n"
            "@patent{p, title={P}}\n"
            "@misc{m, title={M}}\n")
    entries = parse_bibtex(text, warnings=warnings)
    assert [e.citekey for e in entries] == ["m"]
    assert len(warnings) == 3
    assert any("@patent" in w for w in warnings)


def test_concatenation_and_macros():
    text = ('@string{pre = "Proc. of "}\n'
            '@inproceedings{k, booktitle = pre # {the } # "Workshop", month = dec, number = 7}\n')
    fields = parse_bibtex(text)[0].fields
    assert fields == {"booktitle": "Proc. of the Workshop", "month": "December", "number": "7"}


def test_undefined_macro():
    with pytest.raises(ParseError):
        parse_bibtex("@article{k, journal = nosuchmacro}")


def test_parenthesised_entry_and_quotes_with_braces():
    entries = parse_bibtex('@article(k, title = "A {"}quoted{"} word")')
    assert entries[0].fields["title"] == 'A {"}quoted{"} word'


def test_repeated_field_keeps_first():
    warnings = []
    entries = parse_bibtex("@misc{k, title={A}, title={B}}", warnings=warnings)
    assert entries[0].fields == {"title": "A"}
    assert warnings


field_values = st.recursive(
    st.text(alphabet=st.characters(blacklist_characters="{}\\", blacklist_categories=("Cs",)), max_size=15),
    lambda inner: st.builds(lambda a, b, c: f"{a}{{{b}}}{c}", inner, inner, inner),
    max_leaves=4,
)

entry_lists = st.lists(
    st.builds(
        BibEntry,
        st.sampled_from(["article", "book", "misc", "inproceedings", "software"]),
        st.from_regex(r"[a-z][a-z0-9:_-]{0,12}", fullmatch=True),
        st.dictionaries(st.from_regex(r"[a-z]{1,8}", fullmatch=True), field_values, max_size=5),
    ),
    max_size=6,
    unique_by=lambda e: e.citekey,
)


@settings(max_examples=200, deadline=None)
@given(entry_lists)
def test_bibtex_round_trip(entries):
    parsed = parse_bibtex(serialize_bibtex(entries))
    assert parsed == entries
    assert parse_bibtex(serialize_bibtex(parsed)) == parsed


def test_fixture_round_trip():
    entries = parse_bibtex((BIB / "publications.bib").read_text(encoding="utf-8"))
    assert parse_bibtex(serialize_bibtex(entries)) == entries


# --- publication list ------------------------------------------------------

def test_render_empty():
    assert render_publications([]) == []


def test_render_sorts_by_year_desc():
    entries = [BibEntry("article", "a", {"title": "Old", "year": "2019"}),
               BibEntry("article", "b", {"title": "New", "year": "2021"})]
    assert [p["year"] for p in render_publications(entries)] == ["2021", "2019"]


def test_render_missing_year_last_and_stable():
    entries = [BibEntry("misc", "a", {"title": "A"}),
               BibEntry("misc", "b", {"title": "B", "year": "2020"}),
               BibEntry("misc", "c", {"title": "C", "year": "2020"})]
    assert [p["title"] for p in render_publications(entries)] == ["B", "C", "A"]
    assert "year" not in render_publications(entries)[2]


def test_fixture_matches_hand_checked_expectation():
    entries = parse_bibtex((BIB / "publications.bib").read_text(encoding="utf-8"))
    expected = json.loads((BIB / "expected.json").read_text(encoding="utf-8"))
    assert render_publications(entries) == expected


@pytest.mark.parametrize("raw,shown", [
    ("Doe, Jane", "Jane Doe"),
    ("Jane Doe", "Jane Doe"),
    ("King, Jr, Martin", "Martin King, Jr"),
    ("{openCARP consortium}", "{openCARP consortium}"),
])
def test_display_name(raw, shown):
    assert display_name(raw) == shown


@pytest.mark.parametrize("raw", [
    "10.5072/x", "doi:10.5072/x", "https://doi.org/10.5072/x", "http://dx.doi.org/10.5072/x",
])
def test_doi_url(raw):
    assert doi_url(raw) == "https://doi.org/10.5072/x"
