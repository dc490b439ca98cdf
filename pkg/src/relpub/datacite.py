"""DataCite 4.3 records for software releases.

Only the subset of DataCite properties relevant for a software release is
produced: identifier, creators, titles, publisher, publication year,
subjects, contributors, dates, language, resource type, alternate and
related identifiers, version, rights, descriptions and funding references.
Size, format and geolocation are never emitted.
"""

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

from . import vocab
from .errors import PreconditionError
from .metadata import (
    AlternateIdentifier,
    Contributor,
    PersonEntry,
    RelatedIdentifier,
    validate_metadata,
)
from .report import ValidationReport

FILENAME = "datacite.xml"
LANGUAGE = "en-US"
RESOURCE_TYPE_GENERAL = "Software"

ORCID_SCHEME_URI = "http://orcid.org"
ROR_SCHEME_URI = "http://ror.org"
FUNDER_ROR_SCHEME_URI = "https://ror.org"

# Element order of the rendered record.
PROPERTY_ORDER = (
    "identifier", "creators", "titles", "publisher", "publicationYear", "subjects",
    "contributors", "dates", "language", "resourceType", "alternateIdentifiers",
    "relatedIdentifiers", "version", "rightsList", "descriptions", "fundingReferences",
)

# Every element name the renderer may produce.
ELEMENT_NAMES = frozenset(PROPERTY_ORDER) | {
    "resource", "creator", "creatorName", "givenName", "familyName", "nameIdentifier",
    "affiliation", "title", "subject", "contributor", "contributorName", "date",
    "alternateIdentifier", "relatedIdentifier", "rights", "description",
    "fundingReference", "funderName", "funderIdentifier", "awardNumber", "awardTitle",
}

# Relations whose targets come from the release context rather than METADATA.yml.
CONTEXT_RELATIONS = ("IsVersionOf", "IsNewVersionOf")


@dataclass(frozen=True)
class DataCiteRecord:
    identifier: str
    creators: tuple
    titles: tuple  # (text, titleType or "")
    publisher: str
    publication_year: str
    subjects: tuple = ()
    contributors: tuple = ()
    dates: tuple = ()  # (dateType, ISO date)
    language: str = LANGUAGE
    resource_type: tuple = ("", RESOURCE_TYPE_GENERAL)  # (free text, resourceTypeGeneral)
    alternate_identifiers: tuple = ()
    related_identifiers: tuple = ()
    version: str = ""
    rights: tuple = ()  # (statement, uri) or empty
    descriptions: tuple = ()
    funding_references: tuple = ()

    @property
    def title(self):
        return self.titles[0][0] if self.titles else ""


def _merge_related(meta, release):
    from_context = {
        "IsVersionOf": release.concept_doi,
        "IsNewVersionOf": release.previous_doi,
    }
    merged = []
    filled = set()
    for rel in meta.related_identifiers:
        target = from_context.get(rel.relation_type)
        if target:
            if rel.relation_type not in filled:
                merged.append(RelatedIdentifier(rel.relation_type, target, "DOI"))
                filled.add(rel.relation_type)
        elif rel.related_identifier:
            merged.append(rel)
    for relation in CONTEXT_RELATIONS:
        target = from_context[relation]
        if target and relation not in filled:
            merged.append(RelatedIdentifier(relation, target, "DOI"))
    return tuple(merged)


def build_record(meta, contribs, release):
    """Combine metadata, contributors and release context into a record.

    Raises :class:`PreconditionError` when :func:`validate_metadata` reports
    errors.
    """
    report = validate_metadata(meta, contribs)
    if not report.ok:
        raise PreconditionError(
            "metadata has validation errors: " + "; ".join(str(f) for f in report.errors))

    titles = [(meta.title, "")]
    titles += [(t.title, t.title_type) for t in meta.additional_titles]

    contributors = list(contribs.contributors)
    if meta.rights_holder and not any(
            c.contributor_type == "RightsHolder" and c.person.name == meta.rights_holder
            for c in contributors):
        contributors.append(Contributor(PersonEntry(meta.rights_holder), "RightsHolder"))

    alternates = list(meta.alternate_identifiers)
    if release.release_page_url and release.release_page_url not in [a.value for a in alternates]:
        alternates.append(AlternateIdentifier(release.release_page_url, "URL"))

    return DataCiteRecord(
        identifier=release.doi,
        creators=tuple(contribs.creators),
        titles=tuple(titles),
        publisher=meta.publisher,
        publication_year=f"{release.created_date.year:04d}",
        subjects=tuple(meta.subjects),
        contributors=tuple(contributors),
        dates=(("Created", release.created_date.isoformat()),
               ("Issued", release.issued_date.isoformat())),
        language=LANGUAGE,
        resource_type=(meta.resource, RESOURCE_TYPE_GENERAL),
        alternate_identifiers=tuple(alternates),
        related_identifiers=_merge_related(meta, release),
        version=release.version_tag,
        rights=(meta.rights, meta.rights_url) if meta.rights else (),
        descriptions=tuple(meta.descriptions),
        funding_references=tuple(meta.funding_references),
    )


def check_mandatory(record, require_identifier=False):
    """Report each DataCite-mandatory property missing from ``record``."""
    report = ValidationReport()
    if require_identifier and not record.identifier:
        report.error("Identifier", "missing mandatory property")
    if not record.creators or not all(p.name for p in record.creators):
        report.error("Creator", "missing mandatory property")
    if not record.title:
        report.error("Title", "missing mandatory property")
    if not record.publisher:
        report.error("Publisher", "missing mandatory property")
    year = record.publication_year
    if not (len(year) == 4 and year.isdigit()):
        report.error("PublicationYear", "missing mandatory property")
    if record.resource_type[1] not in vocab.RESOURCE_TYPES:
        report.error("ResourceType", "missing mandatory property")
    return report


# --- XML -------------------------------------------------------------------

def _sub(parent, tag, text=None, **attrs):
    el = ET.SubElement(parent, tag, {k: v for k, v in attrs.items() if v})
    if text is not None:
        el.text = text
    return el


def _person(parent, person, name_tag):
    _sub(parent, name_tag, person.name)
    if person.given_name:
        _sub(parent, "givenName", person.given_name)
    if person.family_name:
        _sub(parent, "familyName", person.family_name)
    if person.orcid:
        _sub(parent, "nameIdentifier", person.orcid,
             nameIdentifierScheme="ORCID", schemeURI=ORCID_SCHEME_URI)
    for aff in person.affiliations:
        if aff.ror:
            _sub(parent, "affiliation", aff.name, affiliationIdentifier=aff.ror,
                 affiliationIdentifierScheme="ROR", schemeURI=ROR_SCHEME_URI)
        else:
            _sub(parent, "affiliation", aff.name)


def to_element(record):
    root = ET.Element("resource", {
        "xmlns": vocab.NAMESPACE,
        "xmlns:xsi": "http://www.w3.org/2001/XMLSchema-instance",
        "xsi:schemaLocation": f"{vocab.NAMESPACE} {vocab.SCHEMA_LOCATION}",
    })

    if record.identifier:
        _sub(root, "identifier", record.identifier, identifierType="DOI")

    creators = _sub(root, "creators")
    for person in record.creators:
        _person(_sub(creators, "creator"), person, "creatorName")

    titles = _sub(root, "titles")
    for text, title_type in record.titles:
        _sub(titles, "title", text, titleType=title_type)

    _sub(root, "publisher", record.publisher)
    _sub(root, "publicationYear", record.publication_year)

    if record.subjects:
        subjects = _sub(root, "subjects")
        for s in record.subjects:
            _sub(subjects, "subject", s.subject, schemeURI=s.scheme_uri, valueURI=s.value_uri)

    if record.contributors:
        contributors = _sub(root, "contributors")
        for c in record.contributors:
            _person(_sub(contributors, "contributor", contributorType=c.contributor_type),
                    c.person, "contributorName")

    if record.dates:
        dates = _sub(root, "dates")
        for date_type, value in record.dates:
            _sub(dates, "date", value, dateType=date_type)

    _sub(root, "language", record.language)
    text, general = record.resource_type
    _sub(root, "resourceType", text, resourceTypeGeneral=general)

    if record.alternate_identifiers:
        alts = _sub(root, "alternateIdentifiers")
        for a in record.alternate_identifiers:
            _sub(alts, "alternateIdentifier", a.value, alternateIdentifierType=a.identifier_type)

    if record.related_identifiers:
        rels = _sub(root, "relatedIdentifiers")
        for r in record.related_identifiers:
            _sub(rels, "relatedIdentifier", r.related_identifier,
                 relatedIdentifierType=r.related_identifier_type, relationType=r.relation_type)

    if record.version:
        _sub(root, "version", record.version)

    if record.rights:
        statement, uri = record.rights
        _sub(_sub(root, "rightsList"), "rights", statement, rightsURI=uri)

    if record.descriptions:
        descs = _sub(root, "descriptions")
        for d in record.descriptions:
            _sub(descs, "description", d.text, descriptionType=d.description_type)

    if record.funding_references:
        refs = _sub(root, "fundingReferences")
        for f in record.funding_references:
            ref = _sub(refs, "fundingReference")
            _sub(ref, "funderName", f.name)
            if f.ror:
                _sub(ref, "funderIdentifier", f.ror,
                     funderIdentifierType="ROR", schemeURI=FUNDER_ROR_SCHEME_URI)
            if f.award_number:
                _sub(ref, "awardNumber", f.award_number, awardURI=f.award_uri)
            if f.award_title:
                _sub(ref, "awardTitle", f.award_title)

    return root


def render_xml(record):
    """Serialize ``record`` as UTF-8 XML bytes (2-space indent, trailing newline)."""
    root = to_element(record)
    ET.indent(root, space="  ")
    body = ET.tostring(root, encoding="unicode")
    return ('<?xml version="1.0" encoding="UTF-8"?>\n' + body + "\n").encode("utf-8")


def write_datacite(record, dest_dir):
    path = Path(dest_dir) / FILENAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(render_xml(record))
    return path
