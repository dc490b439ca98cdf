"""Loading and validation of the in-repo release metadata files.

Three YAML files describe a release:

``METADATA.yml``
    descriptive metadata (title, subjects, rights, funding, ...)
``CONTRIBUTORS.yml``
    ``creators`` and ``contributors``, each a list of persons
``ASSETS.yml``
    list of ``{role, path, media_type}`` entries naming the release files

Loaders raise on structural problems (bad YAML, wrong types, unknown
vocabulary terms, malformed identifiers). :func:`validate_metadata` re-checks
every invariant on already-built values and reports findings as data.
"""

import datetime
import hashlib
import logging
import mimetypes
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import vocab
from .errors import (
    DuplicateRoleError,
    IdentifierError,
    MissingAssetError,
    ParseError,
    SchemaError,
)
from .identifiers import (
    is_absolute_url,
    is_valid_orcid,
    is_valid_ror,
    is_xml_safe,
    normalize_orcid,
)
from .report import ValidationReport

log = logging.getLogger(__name__)

PROJECT_KEYS = (
    "title", "additional_titles", "keywords", "publisher", "descriptions",
    "subjects", "radar_subjects", "resource", "resource_type",
    "alternate_identifiers", "related_identifiers", "rights", "rights_url",
    "rights_holder", "funding_references",
)

ASSET_ROLES = frozenset({
    "source-tarball", "docker-image", "rpm", "deb", "macos-pkg",
    "user-manual-pdf", "companion-revision", "other",
})


@dataclass(frozen=True)
class AdditionalTitle:
    title: str
    title_type: str


@dataclass(frozen=True)
class Description:
    text: str
    description_type: str


@dataclass(frozen=True)
class SubjectEntry:
    subject: str
    value_uri: str = ""
    scheme_uri: str = ""


@dataclass(frozen=True)
class AlternateIdentifier:
    value: str
    identifier_type: str


@dataclass(frozen=True)
class RelatedIdentifier:
    relation_type: str
    related_identifier: str = ""
    related_identifier_type: str = "DOI"


@dataclass(frozen=True)
class FundingReference:
    name: str
    ror: str = ""
    award_number: str = ""
    award_uri: str = ""
    award_title: str = ""


@dataclass(frozen=True)
class ProjectMetadata:
    title: str
    additional_titles: tuple = ()
    keywords: tuple = ()
    publisher: str = ""
    descriptions: tuple = ()
    subjects: tuple = ()
    radar_subjects: tuple = ()
    resource: str = ""
    resource_type: str = "Software"
    alternate_identifiers: tuple = ()
    related_identifiers: tuple = ()
    rights: str = ""
    rights_url: str = ""
    rights_holder: str = ""
    funding_references: tuple = ()
    # unknown top-level keys, carried through untouched
    extra: dict = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class Affiliation:
    name: str
    ror: str = ""


@dataclass(frozen=True)
class PersonEntry:
    name: str
    given_name: str = ""
    family_name: str = ""
    orcid: str = ""
    affiliations: tuple = ()


@dataclass(frozen=True)
class Contributor:
    person: PersonEntry
    contributor_type: str


@dataclass(frozen=True)
class ContributorsFile:
    creators: tuple
    contributors: tuple = ()


@dataclass(frozen=True)
class ReleaseContext:
    version_tag: str
    created_date: datetime.date
    issued_date: datetime.date
    release_page_url: str = ""
    doi: str = ""
    previous_doi: str = ""
    concept_doi: str = ""

    def __post_init__(self):
        if not self.version_tag:
            raise SchemaError("version_tag must not be empty", key="version_tag")
        if self.created_date > self.issued_date:
            raise SchemaError(
                f"created_date {self.created_date} is after issued_date {self.issued_date}",
                key="created_date",
            )


@dataclass(frozen=True)
class Asset:
    role: str
    path: Path
    media_type: str
    size: int
    sha256: str

    @property
    def name(self):
        return self.path.name


@dataclass(frozen=True)
class AssetSet:
    assets: tuple = ()

    def __iter__(self):
        return iter(self.assets)

    def __len__(self):
        return len(self.assets)

    def __getitem__(self, i):
        return self.assets[i]


# --- YAML helpers ----------------------------------------------------------

def _read_yaml(path):
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 ({exc.reason})", path=path) from exc
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(f"malformed YAML: {problem}", path=path, line=line) from exc


def _text(data, key, where, required=False):
    value = data.get(key)
    if value is None or value == "":
        if required:
            raise SchemaError(f"{where}{key}: missing mandatory field", key=key)
        return ""
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise SchemaError(f"{where}{key}: expected text, got {type(value).__name__}", key=key)
    return str(value).strip()


def _items(data, key, where):
    value = data.get(key)
    if value is None:
        return []
    if not isinstance(value, list):
        raise SchemaError(f"{where}{key}: expected a list, got {type(value).__name__}", key=key)
    return value


def _mapping(item, where):
    if not isinstance(item, dict):
        raise SchemaError(f"{where}: expected a mapping, got {type(item).__name__}", key=where)
    return item


def _url(value, key):
    if value and not is_absolute_url(value):
        raise SchemaError(f"{key}: {value!r} is not an absolute URL", key=key)
    return value


def _term(value, vocabulary, key):
    if value not in vocabulary:
        raise SchemaError(
            f"{key}: {value!r} is not in the DataCite vocabulary (allowed: {vocab.allowed(vocabulary)})",
            key=key,
        )
    return value


# --- METADATA.yml ----------------------------------------------------------

def project_metadata_from_dict(data):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise SchemaError("metadata document must be a mapping")

    title = _text(data, "title", "", required=True)

    titles = []
    for i, item in enumerate(_items(data, "additional_titles", "")):
        where = f"additional_titles[{i}]"
        item = _mapping(item, where)
        titles.append(AdditionalTitle(
            _text(item, "additional_title", where + ".", required=True),
            _term(_text(item, "additional_title_type", where + ".") or "AlternativeTitle",
                  vocab.TITLE_TYPES, where + ".additional_title_type"),
        ))

    keywords = []
    for i, kw in enumerate(_items(data, "keywords", "")):
        if isinstance(kw, (dict, list)) or kw is None:
            raise SchemaError(f"keywords[{i}]: expected text", key="keywords")
        keywords.append(str(kw))

    descriptions = []
    for i, item in enumerate(_items(data, "descriptions", "")):
        where = f"descriptions[{i}]"
        item = _mapping(item, where)
        descriptions.append(Description(
            _text(item, "description", where + ".", required=True),
            _term(_text(item, "description_type", where + ".") or "Abstract",
                  vocab.DESCRIPTION_TYPES, where + ".description_type"),
        ))

    subjects = []
    for i, item in enumerate(_items(data, "subjects", "")):
        where = f"subjects[{i}]"
        item = _mapping(item, where)
        subjects.append(SubjectEntry(
            _text(item, "subject", where + ".", required=True),
            _url(_text(item, "value_uri", where + "."), where + ".value_uri"),
            _url(_text(item, "scheme_uri", where + "."), where + ".scheme_uri"),
        ))

    radar_subjects = []
    for i, s in enumerate(_items(data, "radar_subjects", "")):
        if isinstance(s, (dict, list)) or s is None:
            raise SchemaError(f"radar_subjects[{i}]: expected text", key="radar_subjects")
        radar_subjects.append(str(s))

    resource_type = _text(data, "resource_type", "") or "Software"
    _term(resource_type, vocab.RESOURCE_TYPES, "resource_type")

    alternates = []
    for i, item in enumerate(_items(data, "alternate_identifiers", "")):
        where = f"alternate_identifiers[{i}]"
        item = _mapping(item, where)
        alternates.append(AlternateIdentifier(
            _text(item, "alternate_identifier", where + ".", required=True),
            _text(item, "alternate_identifier_type", where + ".") or "URL",
        ))

    related = []
    for i, item in enumerate(_items(data, "related_identifiers", "")):
        where = f"related_identifiers[{i}]"
        item = _mapping(item, where)
        rel = RelatedIdentifier(
            _term(_text(item, "relation_type", where + ".", required=True),
                  vocab.RELATION_TYPES, where + ".relation_type"),
            _text(item, "related_identifier", where + "."),
            _term(_text(item, "related_identifier_type", where + ".") or "DOI",
                  vocab.RELATED_IDENTIFIER_TYPES, where + ".related_identifier_type"),
        )
        if not rel.related_identifier:
            log.warning("%s: unfilled related identifier (%s)", where, rel.relation_type)
        related.append(rel)

    funding = []
    for i, item in enumerate(_items(data, "funding_references", "")):
        where = f"funding_references[{i}]"
        item = _mapping(item, where)
        ror = _text(item, "ror", where + ".")
        if ror and not is_valid_ror(ror):
            raise IdentifierError(f"{where}.ror: {ror!r} is not a ROR id", key=where + ".ror")
        funding.append(FundingReference(
            _text(item, "name", where + ".", required=True),
            ror,
            _text(item, "award_number", where + "."),
            _url(_text(item, "award_uri", where + "."), where + ".award_uri"),
            _text(item, "award_title", where + "."),
        ))

    extra = {k: v for k, v in data.items() if k not in PROJECT_KEYS}
    for key in extra:
        log.warning("unknown metadata key %r preserved as pass-through", key)

    return ProjectMetadata(
        title=title,
        additional_titles=tuple(titles),
        keywords=tuple(keywords),
        publisher=_text(data, "publisher", ""),
        descriptions=tuple(descriptions),
        subjects=tuple(subjects),
        radar_subjects=tuple(radar_subjects),
        resource=_text(data, "resource", ""),
        resource_type=resource_type,
        alternate_identifiers=tuple(alternates),
        related_identifiers=tuple(related),
        rights=_text(data, "rights", ""),
        rights_url=_url(_text(data, "rights_url", ""), "rights_url"),
        rights_holder=_text(data, "rights_holder", ""),
        funding_references=tuple(funding),
        extra=extra,
    )


def load_project_metadata(path):
    """Load ``METADATA.yml`` into a :class:`ProjectMetadata`."""
    return project_metadata_from_dict(_read_yaml(path))


def project_metadata_to_dict(meta):
    """Inverse of :func:`project_metadata_from_dict`; keys follow the file layout."""
    data = {"title": meta.title}
    if meta.additional_titles:
        data["additional_titles"] = [
            {"additional_title": t.title, "additional_title_type": t.title_type}
            for t in meta.additional_titles
        ]
    if meta.keywords:
        data["keywords"] = list(meta.keywords)
    if meta.publisher:
        data["publisher"] = meta.publisher
    if meta.descriptions:
        data["descriptions"] = [
            {"description": d.text, "description_type": d.description_type}
            for d in meta.descriptions
        ]
    if meta.subjects:
        data["subjects"] = [
            {k: v for k, v in (("subject", s.subject), ("value_uri", s.value_uri),
                               ("scheme_uri", s.scheme_uri)) if v}
            for s in meta.subjects
        ]
    if meta.radar_subjects:
        data["radar_subjects"] = list(meta.radar_subjects)
    if meta.resource:
        data["resource"] = meta.resource
    data["resource_type"] = meta.resource_type
    if meta.alternate_identifiers:
        data["alternate_identifiers"] = [
            {"alternate_identifier": a.value, "alternate_identifier_type": a.identifier_type}
            for a in meta.alternate_identifiers
        ]
    if meta.related_identifiers:
        data["related_identifiers"] = [
            {"relation_type": r.relation_type,
             "related_identifier": r.related_identifier or None,
             "related_identifier_type": r.related_identifier_type}
            for r in meta.related_identifiers
        ]
    for key in ("rights", "rights_url", "rights_holder"):
        if getattr(meta, key):
            data[key] = getattr(meta, key)
    if meta.funding_references:
        data["funding_references"] = [
            {k: v for k, v in (("name", f.name), ("ror", f.ror),
                               ("award_number", f.award_number), ("award_uri", f.award_uri),
                               ("award_title", f.award_title)) if v}
            for f in meta.funding_references
        ]
    data.update(meta.extra)
    return data


def dump_project_metadata(meta):
    return yaml.safe_dump(project_metadata_to_dict(meta), sort_keys=False, allow_unicode=True)


# --- CONTRIBUTORS.yml ------------------------------------------------------

def person_from_dict(data, where):
    data = _mapping(data, where)
    given = _text(data, "given_name", where + ".")
    family = _text(data, "family_name", where + ".")
    name = _text(data, "name", where + ".")
    if not name:
        if not (given and family):
            raise SchemaError(f"{where}: needs name or both given_name and family_name", key=where)
        name = f"{family}, {given}"

    orcid = _text(data, "orcid", where + ".")
    if orcid:
        orcid = normalize_orcid(orcid)
        if not is_valid_orcid(orcid):
            raise IdentifierError(f"{where}.orcid: {orcid!r} fails the ORCID check digit",
                                  key=where + ".orcid")

    affiliations = []
    for i, aff in enumerate(_items(data, "affiliations", where + ".")):
        awhere = f"{where}.affiliations[{i}]"
        if isinstance(aff, str):
            affiliations.append(Affiliation(aff))
            continue
        aff = _mapping(aff, awhere)
        ror = _text(aff, "ror", awhere + ".")
        if ror and not is_valid_ror(ror):
            raise IdentifierError(f"{awhere}.ror: {ror!r} is not a ROR id", key=awhere + ".ror")
        affiliations.append(Affiliation(_text(aff, "name", awhere + ".", required=True), ror))

    return PersonEntry(name, given, family, orcid, tuple(affiliations))


def contributors_from_dict(data):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise SchemaError("contributors document must be a mapping")
    raw_creators = _items(data, "creators", "")
    if not raw_creators:
        raise SchemaError("creators: at least one creator is mandatory", key="creators")
    creators = tuple(person_from_dict(p, f"creators[{i}]") for i, p in enumerate(raw_creators))

    contributors = []
    for i, item in enumerate(_items(data, "contributors", "")):
        where = f"contributors[{i}]"
        person = person_from_dict(item, where)
        ctype = _text(item, "contributor_type", where + ".", required=True)
        _term(ctype, vocab.CONTRIBUTOR_TYPES, where + ".contributor_type")
        contributors.append(Contributor(person, ctype))
    return ContributorsFile(creators, tuple(contributors))


def load_contributors(path):
    """Load ``CONTRIBUTORS.yml`` into a :class:`ContributorsFile`."""
    return contributors_from_dict(_read_yaml(path))


def person_to_dict(person):
    data = {"name": person.name}
    if person.given_name:
        data["given_name"] = person.given_name
    if person.family_name:
        data["family_name"] = person.family_name
    if person.orcid:
        data["orcid"] = person.orcid
    if person.affiliations:
        data["affiliations"] = [
            {"name": a.name, "ror": a.ror} if a.ror else {"name": a.name}
            for a in person.affiliations
        ]
    return data


def contributors_to_dict(contribs):
    data = {"creators": [person_to_dict(p) for p in contribs.creators]}
    if contribs.contributors:
        data["contributors"] = [
            dict(person_to_dict(c.person), contributor_type=c.contributor_type)
            for c in contribs.contributors
        ]
    return data


# --- ASSETS.yml ------------------------------------------------------------

def sha256_file(path, chunk_size=1 << 16):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve_assets(manifest_path, base_dir):
    """Resolve ``ASSETS.yml`` entries against ``base_dir``.

    Every entry's size and SHA-256 are recorded. All absent files are
    reported together in one :class:`MissingAssetError`.
    """
    entries = _read_yaml(manifest_path)
    if entries is None:
        entries = []
    if not isinstance(entries, list):
        raise SchemaError("asset manifest must be a list of {role, path, media_type}")

    base_dir = Path(base_dir)
    seen_roles = set()
    missing = []
    resolved = []
    for i, entry in enumerate(entries):
        where = f"assets[{i}]"
        entry = _mapping(entry, where)
        role = _text(entry, "role", where + ".", required=True)
        if role not in ASSET_ROLES:
            raise SchemaError(f"{where}.role: {role!r} is not one of {', '.join(sorted(ASSET_ROLES))}",
                              key=where + ".role")
        if role != "other":
            if role in seen_roles:
                raise DuplicateRoleError(f"{where}.role: role {role!r} listed twice", key=where + ".role")
            seen_roles.add(role)
        rel = _text(entry, "path", where + ".", required=True)
        path = (base_dir / rel).resolve()
        if not path.is_file() or not os.access(path, os.R_OK):
            missing.append(rel)
            continue
        media_type = _text(entry, "media_type", where + ".")
        if not media_type:
            media_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        resolved.append((role, path, media_type))

    if missing:
        raise MissingAssetError(missing)

    names = [p.name for _, p, _ in resolved]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise SchemaError("asset file names must be unique: " + ", ".join(dupes), key="path")

    return AssetSet(tuple(
        Asset(role, path, media_type, path.stat().st_size, sha256_file(path))
        for role, path, media_type in resolved
    ))


# --- validation ------------------------------------------------------------

def _check_text(report, path, value):
    if value and not is_xml_safe(value):
        report.error(path, "contains characters not allowed in XML")


def _check_url(report, path, value):
    if value and not is_absolute_url(value):
        report.error(path, f"{value!r} is not an absolute URL")


def _check_term(report, path, value, vocabulary):
    if value not in vocabulary:
        report.error(path, f"{value!r} is not in the DataCite vocabulary")


def _validate_person(report, where, person):
    if not person.name:
        report.error(where + ".name", "missing name")
    for attr in ("name", "given_name", "family_name"):
        _check_text(report, f"{where}.{attr}", getattr(person, attr))
    if person.orcid and not is_valid_orcid(person.orcid):
        report.error(where + ".orcid", f"{person.orcid!r} is not a valid ORCID iD")
    for j, aff in enumerate(person.affiliations):
        awhere = f"{where}.affiliations[{j}]"
        if not aff.name:
            report.error(awhere + ".name", "missing affiliation name")
        _check_text(report, awhere + ".name", aff.name)
        if aff.ror and not is_valid_ror(aff.ror):
            report.error(awhere + ".ror", f"{aff.ror!r} is not a ROR id")


def validate_metadata(meta, contribs):
    """Check every metadata invariant and return a :class:`ValidationReport`.

    Errors block record generation; warnings (e.g. unfilled related
    identifiers, which are placeholders by design) do not.
    """
    report = ValidationReport()

    if not meta.title:
        report.error("title", "title must not be empty")
    for key in ("title", "publisher", "resource", "rights", "rights_holder"):
        _check_text(report, key, getattr(meta, key))
    for i, kw in enumerate(meta.keywords):
        _check_text(report, f"keywords[{i}]", kw)

    for i, t in enumerate(meta.additional_titles):
        _check_term(report, f"additional_titles[{i}].additional_title_type", t.title_type, vocab.TITLE_TYPES)
        _check_text(report, f"additional_titles[{i}].additional_title", t.title)
    for i, d in enumerate(meta.descriptions):
        _check_term(report, f"descriptions[{i}].description_type", d.description_type, vocab.DESCRIPTION_TYPES)
        _check_text(report, f"descriptions[{i}].description", d.text)

    for i, s in enumerate(meta.subjects):
        where = f"subjects[{i}]"
        _check_text(report, where + ".subject", s.subject)
        _check_url(report, where + ".value_uri", s.value_uri)
        _check_url(report, where + ".scheme_uri", s.scheme_uri)
        if s.value_uri and s.scheme_uri and not s.value_uri.startswith(s.scheme_uri):
            report.error(where, f"value_uri {s.value_uri!r} is not under scheme_uri {s.scheme_uri!r}")

    _check_term(report, "resource_type", meta.resource_type, vocab.RESOURCE_TYPES)
    if meta.resource_type != "Software":
        report.warning("resource_type", "resourceTypeGeneral is always rendered as Software")

    for i, a in enumerate(meta.alternate_identifiers):
        _check_text(report, f"alternate_identifiers[{i}].alternate_identifier", a.value)
        _check_text(report, f"alternate_identifiers[{i}].alternate_identifier_type", a.identifier_type)

    for i, r in enumerate(meta.related_identifiers):
        where = f"related_identifiers[{i}]"
        _check_term(report, where + ".relation_type", r.relation_type, vocab.RELATION_TYPES)
        _check_term(report, where + ".related_identifier_type", r.related_identifier_type,
                    vocab.RELATED_IDENTIFIER_TYPES)
        if not r.related_identifier:
            report.warning(where, f"unfilled related identifier ({r.relation_type})")
        _check_text(report, where + ".related_identifier", r.related_identifier)

    _check_url(report, "rights_url", meta.rights_url)

    for i, f in enumerate(meta.funding_references):
        where = f"funding_references[{i}]"
        if not f.name:
            report.error(where + ".name", "missing funder name")
        for attr in ("name", "award_number", "award_title"):
            _check_text(report, f"{where}.{attr}", getattr(f, attr))
        if f.ror and not is_valid_ror(f.ror):
            report.error(where + ".ror", f"{f.ror!r} is not a ROR id")
        _check_url(report, where + ".award_uri", f.award_uri)

    if not contribs.creators:
        report.error("creators", "at least one creator is mandatory")
    for i, p in enumerate(contribs.creators):
        _validate_person(report, f"creators[{i}]", p)
    for i, c in enumerate(contribs.contributors):
        _validate_person(report, f"contributors[{i}]", c.person)
        _check_term(report, f"contributors[{i}].contributor_type", c.contributor_type,
                    vocab.CONTRIBUTOR_TYPES)

    return report
