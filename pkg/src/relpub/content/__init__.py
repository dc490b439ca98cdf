"""Website integration: page frontmatter sync and the publication list."""

from .bibtex import BibEntry, parse_bibtex, render_publications, serialize_bibtex
from .frontmatter import PageDocument, parse_page, read_page
from .sync import ScanResult, SyncResult, SyncRule, scan_pages, sync_page, sync_site

__all__ = [
    "BibEntry", "PageDocument", "ScanResult", "SyncResult", "SyncRule",
    "parse_bibtex", "parse_page", "read_page", "render_publications",
    "scan_pages", "serialize_bibtex", "sync_page", "sync_site",
]
