"""Copy structured files from a source checkout into CMS page frontmatter.

A page opts in with two frontmatter keys::

    pipeline: openCARP
    source: CONTRIBUTORS.yml

``source`` is relative to the source repository root. YAML sources are
stored parsed under ``data``; any other file is stored as text.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import MissingSourceError, ParseError
from .frontmatter import DATA_KEY, read_page, set_data, write_atomic

log = logging.getLogger(__name__)

PAGE_SUFFIXES = (".md",)
YAML_SUFFIXES = (".yml", ".yaml")


@dataclass(frozen=True)
class SyncRule:
    pipeline: str
    source: str

    def __post_init__(self):
        if not self.pipeline or not self.source:
            raise ValueError("sync rule needs a pipeline and a source")


@dataclass
class ScanResult:
    pages: list = field(default_factory=list)  # (PageDocument, SyncRule)
    errors: list = field(default_factory=list)  # ParseError


@dataclass
class SyncResult:
    updated: list = field(default_factory=list)
    unchanged: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def to_dict(self):
        return {
            "updated": [str(p) for p in self.updated],
            "unchanged": [str(p) for p in self.unchanged],
            "errors": [str(e) for e in self.errors],
        }


def _page_files(site_root):
    return sorted(p for p in Path(site_root).rglob("*")
                  if p.is_file() and p.suffix in PAGE_SUFFIXES)


def scan_pages(site_root, pipeline):
    """Find pages tagged with ``pipeline``; malformed pages are collected as errors."""
    site_root = Path(site_root)
    if not site_root.is_dir():
        raise FileNotFoundError(f"site root not found: {site_root}")
    result = ScanResult()
    for path in _page_files(site_root):
        try:
            page = read_page(path)
        except ParseError as exc:
            result.errors.append(exc)
            continue
        if str(page.frontmatter.get("pipeline", "")) != pipeline:
            continue
        source = page.frontmatter.get("source")
        if not isinstance(source, str) or not source.strip():
            result.errors.append(ParseError(f"page has pipeline {pipeline!r} but no source", path=path))
            continue
        result.pages.append((page, SyncRule(pipeline, source.strip())))
    return result


def load_source(rule, repo_root):
    repo_root = Path(repo_root).resolve()
    source = (repo_root / rule.source).resolve()
    if not source.is_relative_to(repo_root) or not source.is_file():
        raise MissingSourceError(rule.source)
    text = source.read_text(encoding="utf-8")
    if source.suffix.lower() in YAML_SUFFIXES:
        try:
            return yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ParseError(f"invalid YAML: {getattr(exc, 'problem', exc)}", path=rule.source,
                             line=mark.line + 1 if mark is not None else None) from None
    return text


def sync_page(page, rule, repo_root):
    """Return ``page`` with its ``data`` key replaced by the rule's source content."""
    value = load_source(rule, repo_root)
    if DATA_KEY in page.frontmatter and page.frontmatter[DATA_KEY] == value:
        return page
    return set_data(page, value)


def sync_site(site_root, repo_root, pipeline, dry_run=False):
    """Sync every tagged page; write only pages whose text changes."""
    scan = scan_pages(site_root, pipeline)
    result = SyncResult(errors=list(scan.errors))
    for page, rule in scan.pages:
        try:
            new = sync_page(page, rule, repo_root)
        except (MissingSourceError, ParseError) as exc:
            result.errors.append(exc)
            continue
        if new.render() == page.render():
            result.unchanged.append(page.path)
            continue
        if not dry_run:
            write_atomic(page.path, new.render())
        log.info("%s %s from %s", "would update" if dry_run else "updated", page.path, rule.source)
        result.updated.append(page.path)
    return result
