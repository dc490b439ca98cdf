"""Dataset deposit in a RADAR-like research-data archive.

Lifecycle of a dataset: ``draft`` -> ``in_review`` -> ``published``. The
client creates drafts, attaches metadata, uploads files and submits for
review. Publication (and DOI minting) is a curator action in the archive
and is never triggered from here; :func:`poll_doi` only observes it.

Reference protocol (JSON over HTTPS, bearer token)::

    POST /datasets                      -> 201 {"id", "state": "draft"}
    PUT  /datasets/{id}/metadata        -> 200 dataset | 422 {"errors": [...]}
    POST /datasets/{id}/files           multipart "file" -> 201 {"name", "size", "sha256"}
    POST /datasets/{id}/submit          -> 200 dataset (state in_review)
    GET  /datasets/{id}                 -> 200 {"id", "state", "doi", "metadata", "files"}

Other archives plug in through :data:`ADAPTERS`.
"""

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock

from .datacite import check_mandatory
from .errors import (
    DigestMismatch,
    PreconditionError,
    StateError,
    TransportError,
    ValidationRejected,
)
from .http import RestClient, check_base_url, raise_for_auth, unexpected

log = logging.getLogger(__name__)

TOKEN_ENV = "RELPUB_ARCHIVE_TOKEN"
STATE_FILE = ".relpub-state.json"

DRAFT = "draft"
IN_REVIEW = "in_review"
PUBLISHED = "published"
STATES = (DRAFT, IN_REVIEW, PUBLISHED)

ISSUED_NOTE = ("Issued is the date the release was uploaded to the archive; "
               "curator publication may happen later.")


@dataclass(frozen=True)
class ArchiveTarget:
    base_url: str
    token: str
    adapter: str = "generic-radar-like"

    def __post_init__(self):
        object.__setattr__(self, "base_url", check_base_url(self.base_url))
        if not self.token:
            raise ValueError("archive token must not be empty")

    def __repr__(self):
        return f"ArchiveTarget(base_url={self.base_url!r}, adapter={self.adapter!r})"


@dataclass(frozen=True)
class UploadedFile:
    name: str
    size: int
    digest: str


@dataclass(frozen=True)
class ArchiveDataset:
    dataset_id: str
    state: str
    doi: str = ""
    metadata_payload: dict = field(default_factory=dict, hash=False)
    uploaded_files: tuple = ()

    def __post_init__(self):
        if self.state not in STATES:
            raise ValueError(f"unknown dataset state {self.state!r}")
        if bool(self.doi) != (self.state == PUBLISHED):
            raise ValueError("a DOI is present exactly when the dataset is published")

    @classmethod
    def from_json(cls, data):
        return cls(
            dataset_id=str(data["id"]),
            state=data["state"],
            doi=data.get("doi") or "",
            metadata_payload=data.get("metadata") or {},
            uploaded_files=tuple(UploadedFile(f["name"], f["size"], f["sha256"])
                                 for f in data.get("files") or ()),
        )


# --- metadata mapping ------------------------------------------------------

def _drop_empty(d):
    return {k: v for k, v in d.items() if v not in (None, "", [], {})}


def _person(p):
    return _drop_empty({
        "name": p.name,
        "givenName": p.given_name,
        "familyName": p.family_name,
        "orcid": p.orcid,
        "affiliations": [_drop_empty({"name": a.name, "ror": a.ror}) for a in p.affiliations],
    })


def map_metadata(record, meta):
    """Translate a DataCite record into the archive's JSON metadata document.

    Carries every record property plus the archive-only subject list and
    keywords from ``meta``. The identifier is left out until the archive
    mints one.
    """
    report = check_mandatory(record, require_identifier=False)
    if not report.ok:
        raise PreconditionError("record lacks mandatory properties: "
                                + ", ".join(f.path for f in report.errors))
    main_title, *alternatives = record.titles
    doc = {
        "title": main_title[0],
        "additionalTitles": [{"title": t, "titleType": tt} for t, tt in alternatives],
        "creators": [_person(p) for p in record.creators],
        "contributors": [dict(_person(c.person), contributorType=c.contributor_type)
                         for c in record.contributors],
        "publisher": record.publisher,
        "publicationYear": record.publication_year,
        "subjects": [_drop_empty({"subject": s.subject, "schemeURI": s.scheme_uri,
                                  "valueURI": s.value_uri}) for s in record.subjects],
        "radarSubjects": list(meta.radar_subjects),
        "keywords": list(meta.keywords),
        "dates": [{"dateType": t, "date": d} for t, d in record.dates],
        "language": record.language,
        "resourceType": _drop_empty({"value": record.resource_type[0],
                                     "general": record.resource_type[1]}),
        "alternateIdentifiers": [{"value": a.value, "type": a.identifier_type}
                                 for a in record.alternate_identifiers],
        "relatedIdentifiers": [{"value": r.related_identifier, "type": r.related_identifier_type,
                                "relationType": r.relation_type}
                               for r in record.related_identifiers],
        "version": record.version,
        "rights": _drop_empty({"statement": record.rights[0], "uri": record.rights[1]})
        if record.rights else {},
        "descriptions": [{"description": d.text, "descriptionType": d.description_type}
                         for d in record.descriptions],
        "fundingReferences": [_drop_empty({
            "funderName": f.name,
            "funderIdentifier": f.ror,
            "funderIdentifierType": "ROR" if f.ror else "",
            "awardNumber": f.award_number,
            "awardURI": f.award_uri,
            "awardTitle": f.award_title,
        }) for f in record.funding_references],
        "provenance": {"issued": ISSUED_NOTE},
    }
    if record.identifier:
        doc["identifier"] = {"value": record.identifier, "type": "DOI"}
    return _drop_empty(doc)


# --- adapters --------------------------------------------------------------

class RadarLikeAdapter:
    """Client for the reference protocol described in the module docstring."""

    def __init__(self, target, retry=None, session=None, sleep=None):
        kwargs = {"retry": retry, "session": session}
        if sleep is not None:
            kwargs["sleep"] = sleep
        self.rest = RestClient(target.base_url, {"Authorization": f"Bearer {target.token}"}, **kwargs)

    def _check(self, resp, what, ok=(200, 201)):
        raise_for_auth(resp, what)
        if resp.status_code == 404:
            raise TransportError(f"{what}: not found (HTTP 404)", status=404, body=resp.text)
        if resp.status_code == 409:
            raise StateError(f"{what}: {resp.text[:300]}", status=409, body=resp.text)
        if resp.status_code not in ok:
            raise unexpected(resp, what)
        return resp.json()

    def create(self):
        return self._check(self.rest.request("POST", "/datasets", json={}), "create dataset")

    def attach_metadata(self, dataset_id, doc):
        resp = self.rest.request("PUT", f"/datasets/{dataset_id}/metadata", json=doc)
        if resp.status_code in (400, 422):
            raise ValidationRejected(f"archive rejected metadata: {resp.text}",
                                     status=resp.status_code, body=resp.text)
        return self._check(resp, "attach metadata")

    def upload(self, dataset_id, asset):
        return self._check(self.rest.request(
            "POST", f"/datasets/{dataset_id}/files",
            upload=(asset.path, lambda fh: {"files": {"file": (asset.name, fh, asset.media_type)}}),
        ), f"upload {asset.name}")

    def submit(self, dataset_id):
        resp = self.rest.request("POST", f"/datasets/{dataset_id}/submit")
        if resp.status_code == 422:
            raise PreconditionError(f"archive refused submission: {resp.text}")
        return self._check(resp, "submit dataset")

    def status(self, dataset_id):
        return self._check(self.rest.request("GET", f"/datasets/{dataset_id}"), "get dataset")


ADAPTERS = {"generic-radar-like": RadarLikeAdapter}


def get_adapter(target, **options):
    try:
        cls = ADAPTERS[target.adapter]
    except KeyError:
        raise ValueError(f"no archive adapter registered under {target.adapter!r}") from None
    return cls(target, **options)


# --- operations ------------------------------------------------------------

def get_dataset(target, dataset_id, **options):
    return ArchiveDataset.from_json(get_adapter(target, **options).status(dataset_id))


def create_dataset(target, doc, **options):
    """Create a draft dataset and attach ``doc`` as its metadata."""
    adapter = get_adapter(target, **options)
    created = adapter.create()
    dataset_id = str(created["id"])
    log.info("created draft dataset %s", dataset_id)
    adapter.attach_metadata(dataset_id, doc)
    return ArchiveDataset(dataset_id, DRAFT, "", doc, ())


def upload_assets(target, dataset_id, assets, **options):
    """Upload every asset not yet present; verify each server digest."""
    adapter = get_adapter(target, **options)
    current = ArchiveDataset.from_json(adapter.status(dataset_id))
    if current.state != DRAFT:
        raise StateError(f"dataset {dataset_id} is {current.state}; uploads need a draft")
    present = {f.name: f.digest for f in current.uploaded_files}
    for asset in assets:
        if present.get(asset.name) == asset.sha256:
            log.info("%s already in dataset %s", asset.name, dataset_id)
            continue
        ack = adapter.upload(dataset_id, asset)
        if ack.get("sha256") != asset.sha256:
            raise DigestMismatch(asset.name, asset.sha256, ack.get("sha256"))
        log.info("uploaded %s to dataset %s", asset.name, dataset_id)
    return ArchiveDataset.from_json(adapter.status(dataset_id))


def submit_for_review(target, dataset_id, **options):
    """Hand a complete draft to the curators."""
    adapter = get_adapter(target, **options)
    current = ArchiveDataset.from_json(adapter.status(dataset_id))
    if current.state != DRAFT:
        raise StateError(f"dataset {dataset_id} is {current.state}; only drafts can be submitted")
    if not current.uploaded_files:
        raise PreconditionError(f"dataset {dataset_id} has no files")
    if not current.metadata_payload:
        raise PreconditionError(f"dataset {dataset_id} has no metadata")
    return ArchiveDataset.from_json(adapter.submit(dataset_id))


def poll_doi(target, dataset_id, timeout, interval=5.0, clock=time.monotonic, sleep=time.sleep,
             **options):
    """Wait until the dataset is published; return its DOI or None on timeout."""
    adapter = get_adapter(target, **options)
    deadline = clock() + timeout
    while True:
        dataset = ArchiveDataset.from_json(adapter.status(dataset_id))
        if dataset.state == PUBLISHED:
            return dataset.doi
        remaining = deadline - clock()
        if remaining <= 0:
            return None
        sleep(min(interval, remaining))


# --- pipeline state --------------------------------------------------------

class DepositState:
    """Per-tag record of archive datasets, so pipeline re-runs resume."""

    def __init__(self, path=STATE_FILE):
        self.path = Path(path)
        self.lock = FileLock(str(self.path) + ".lock")

    def _load(self):
        if not self.path.exists():
            return {"releases": {}}
        return json.loads(self.path.read_text(encoding="utf-8"))

    def get(self, tag):
        with self.lock:
            return self._load()["releases"].get(tag)

    def record(self, tag, **values):
        with self.lock:
            data = self._load()
            entry = data["releases"].setdefault(tag, {})
            entry.update(values)
            tmp = self.path.with_name(self.path.name + ".tmp")
            tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            tmp.replace(self.path)
            return dict(entry)
