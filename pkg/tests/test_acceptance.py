"""Acceptance criteria 1-8, one test each.

Run alone with ``pytest tests/test_acceptance.py -v``; every line of the
verbose output is the verdict for one criterion.
"""

import datetime
import hashlib
import json
import os
import random
import shutil
import subprocess
import sys
import time
from pathlib import Path

import bagit
from hypothesis import given, settings
from lxml import etree

import strategies as gen
from conftest import ARCHIVE_TOKEN, FIXTURES, GITLAB_TOKEN, RELEASE, TAG
from relpub import vocab
from relpub.archive import (
    DRAFT,
    IN_REVIEW,
    PUBLISHED,
    ArchiveTarget,
    create_dataset,
    get_adapter,
    get_dataset,
    poll_doi,
    submit_for_review,
    upload_assets,
)
from relpub.bagpack import BagInfo, build_bag, validate_bag
from relpub.content import parse_bibtex, render_publications, sync_site
from relpub.content.frontmatter import split_page
from relpub.datacite import build_record, render_xml
from relpub.errors import RelpubError
from relpub.http import RetryPolicy
from relpub.metadata import (
    Asset,
    AssetSet,
    ReleaseContext,
    contributors_from_dict,
    load_contributors,
    load_project_metadata,
    project_metadata_from_dict,
)
from relpub.mocks import MockArchive

NS = {"d": vocab.NAMESPACE}
FAST = {"retry": RetryPolicy(max_attempts=3, base_delay=0)}
BAGGING_DATE = datetime.date(2021, 7, 5)
INFO = BagInfo.create("Karlsruhe Institute of Technology (KIT)", "info@opencarp.org",
                      "10.5072/opencarp.v5", bagging_date=BAGGING_DATE)
DATACITE_STUB = b'<?xml version="1.0" encoding="UTF-8"?>\n<resource/>\n'


def relpub(*args, env=None):
    """Run the installed command line tool in a child process."""
    return subprocess.run([sys.executable, "-m", "relpub", *args], capture_output=True, text=True,
                          env=env, timeout=120)


def child_env(**extra):
    env = {k: v for k, v in os.environ.items() if not k.startswith(("CI_", "RELPUB_"))}
    env.update(extra)
    return env


def find_oxum(root):
    """Octets and stream count of ``root`` recounted with find(1)."""
    sizes = subprocess.run(["find", str(root), "-type", "f", "-printf", "%s\\n"],
                           capture_output=True, text=True, check=True).stdout.split()
    return f"{sum(int(s) for s in sizes)}.{len(sizes)}"


def reference_bag(dest, bagging_date=BAGGING_DATE):
    """The 4-asset release fixture packed by ``relpub bag``."""
    work = dest / "release"
    shutil.copytree(RELEASE, work)
    proc = relpub("bag", "--metadata", str(work / "METADATA.yml"), "--contributors", str(work / "CONTRIBUTORS.yml"),
                  "--assets", str(work / "ASSETS.yml"), "--output", str(work / "out"), "--workdir", str(work),
                  "--tag", TAG, "--issued", "2021-07-05", "--contact-email", "info@opencarp.org",
                  "--bagging-date", bagging_date.isoformat(), "--format", "json", env=child_env())
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout)


# --- 1 ---------------------------------------------------------------------

def test_criterion_1_example_golden():
    start = time.perf_counter()
    meta = load_project_metadata(RELEASE / "METADATA.yml")
    contribs = load_contributors(RELEASE / "CONTRIBUTORS.yml")
    release = ReleaseContext(TAG, datetime.date(2021, 7, 1), datetime.date(2021, 7, 5))
    xml = render_xml(build_record(meta, contribs, release))
    elapsed = time.perf_counter() - start

    root = etree.fromstring(xml)

    def texts(path):
        return [el.text for el in root.xpath(path, namespaces=NS)]

    assert len(contribs.creators) == 2
    assert texts("d:titles/d:title[not(@titleType)]") == ["openCARP"]
    assert texts("d:titles/d:title[@titleType='AlternativeTitle']") == ["Cardiac Electrophysiology Simulator"]
    assert texts("d:publisher") == ["Karlsruhe Institute of Technology (KIT)"]
    lcsh = root.xpath("d:subjects/d:subject[@schemeURI='http://id.loc.gov/authorities/subjects']",
                      namespaces=NS)
    assert len(lcsh) == 5
    assert "http://id.loc.gov/authorities/subjects/sh85082124" in [s.get("valueURI") for s in lcsh]
    assert texts("d:language") == ["en-US"]
    assert [el.get("resourceTypeGeneral") for el in root.xpath("d:resourceType", namespaces=NS)] == ["Software"]
    assert texts("d:version") == ["v5.0"]
    rights = root.xpath("d:rightsList/d:rights", namespaces=NS)
    assert [(r.text, r.get("rightsURI")) for r in rights] == [
        ("ACADEMIC PUBLIC LICENSE (openCARP, v1.0)", "https://openCARP.org/download/license")]
    funding = root.xpath("d:fundingReferences/d:fundingReference", namespaces=NS)
    assert [f.findtext("d:awardNumber", namespaces=NS) for f in funding] == ["391128822"]
    funder = funding[0].find("d:funderIdentifier", NS)
    assert (funder.text, funder.get("funderIdentifierType")) == ("https://ror.org/018mejw64", "ROR")
    assert elapsed < 1.0


# --- 2 ---------------------------------------------------------------------

@settings(max_examples=50, deadline=None, database=None)
@given(doc=gen.metadata_doc, cdoc=gen.contributors_doc, release=gen.release_context())
def test_criterion_2_schema_validity(doc, cdoc, release, xsd_validator):
    record = build_record(project_metadata_from_dict(doc), contributors_from_dict(cdoc), release)
    root = etree.fromstring(render_xml(record))
    xsd_validator.assertValid(root)


# --- 3 ---------------------------------------------------------------------

def random_asset_set(rng, directory):
    """Up to 100 files with at most 1 MiB in total; names may repeat stems and use unicode."""
    count = rng.randint(0, 100)
    budget = rng.randint(0, 1 << 20)
    cuts = sorted(rng.randint(0, budget) for _ in range(count))
    sizes = [b - a for a, b in zip([0] + cuts, cuts)]
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789._-% Ü"
    directory.mkdir(parents=True)
    assets, names = [], set()
    for size in sizes:
        name = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
        if name in names or name in (".", ".."):
            continue
        names.add(name)
        content = rng.randbytes(size)
        path = directory / name
        path.write_bytes(content)
        assets.append(Asset("other", path, "application/octet-stream", size,
                            hashlib.sha256(content).hexdigest()))
    return AssetSet(tuple(assets))


def test_criterion_3_bag_round_trip(tmp_path):
    start = time.perf_counter()
    cases = 200
    clean = oxum_agree = tampers = detected = 0
    for seed in range(cases):
        rng = random.Random(seed)
        case = tmp_path / str(seed)
        assets = random_asset_set(rng, case / "src")
        bag = build_bag(assets, DATACITE_STUB, INFO, case / "bag")
        clean += len(validate_bag(bag.root)) == 0
        oxum_agree += bag.payload_oxum == find_oxum(bag.root / "data")

        candidates = sorted(p for p in bag.root.rglob("*") if p.is_file() and p.stat().st_size)
        victim = rng.choice(candidates)
        content = bytearray(victim.read_bytes())
        content[rng.randrange(len(content))] ^= rng.randint(1, 255)
        victim.write_bytes(bytes(content))
        tampers += 1
        detected += len(validate_bag(bag.root).errors) > 0
        shutil.rmtree(case)
    elapsed = time.perf_counter() - start
    print(f"clean {clean}/{cases}, oxum {oxum_agree}/{cases}, tamper {detected}/{tampers}, {elapsed:.1f}s")
    assert clean == cases
    assert oxum_agree == cases
    assert detected == tampers == cases
    assert elapsed < 60


# --- 4 ---------------------------------------------------------------------

def test_criterion_4_deterministic_tar(tmp_path):
    first = reference_bag(tmp_path / "one")
    time.sleep(1.1)  # a clock-dependent build would now differ
    second = reference_bag(tmp_path / "two")
    digests = [hashlib.sha256(Path(doc["tar"]).read_bytes()).hexdigest() for doc in (first, second)]
    assert digests[0] == digests[1]


# --- 5 ---------------------------------------------------------------------

def test_criterion_5_bagit_python_interop(tmp_path):
    doc = reference_bag(tmp_path)
    assert len(doc["payload"]) == 4
    bag = bagit.Bag(doc["bag"])
    bag.validate(completeness_only=False)
    assert bag.is_valid()
    assert bag.info["Payload-Oxum"] == doc["payload_oxum"]


# --- 6 ---------------------------------------------------------------------

def test_criterion_6_end_to_end(tmp_path, gitlab_mock, archive_mock):
    work = tmp_path / "release"
    shutil.copytree(RELEASE, work)
    argv = ("release", "--metadata", str(work / "METADATA.yml"), "--contributors", str(work / "CONTRIBUTORS.yml"),
            "--assets", str(work / "ASSETS.yml"), "--output", str(work / "out"), "--workdir", str(work),
            "--gitlab-url", gitlab_mock.url, "--archive-url", archive_mock.url,
            "--contact-email", "info@opencarp.org", "--format", "json")
    env = child_env(RELPUB_GITLAB_TOKEN=GITLAB_TOKEN, RELPUB_ARCHIVE_TOKEN=ARCHIVE_TOKEN,
                    CI_COMMIT_TAG=TAG, CI_PROJECT_ID="1")
    start = time.perf_counter()
    proc = relpub(*argv, env=env)
    elapsed = time.perf_counter() - start
    assert proc.returncode == 0, proc.stdout + proc.stderr

    # the files published: every asset plus datacite.xml
    published = sorted((work / "dist").iterdir()) + [work / "out" / "datacite.xml"]
    n = len(published)

    def kind(req):
        if req.path.startswith("/api/v4/") and req.method == "PUT" and "/packages/generic/" in req.path:
            return "package-upload"
        if req.path.endswith("/releases") and req.method == "POST":
            return "create-release"
        if req.path == "/datasets" and req.method == "POST":
            return "dataset-create"
        if req.path.endswith("/metadata") and req.method == "PUT":
            return "metadata-put"
        if req.path.endswith("/files") and req.method == "POST":
            return "file-upload"
        if req.path.endswith("/submit") and req.method == "POST":
            return "submit"
        return "other-" + req.method

    mutating = [kind(r) for r in gitlab_mock.mutating_requests() + archive_mock.mutating_requests()]
    assert mutating == (["package-upload"] * n + ["create-release", "dataset-create", "metadata-put"]
                        + ["file-upload"] * n + ["submit"])

    expected = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in published}
    assert len(gitlab_mock.releases) == 1
    assert len(gitlab_mock.releases[TAG]["assets"]["links"]) == n
    assert len(archive_mock.datasets) == 1
    (dataset,) = archive_mock.datasets.values()
    assert dataset["state"] == IN_REVIEW
    assert {f["name"]: f["sha256"] for f in dataset["files"]} == expected

    before = (gitlab_mock.state(), archive_mock.state())
    gitlab_mock.clear_log()
    archive_mock.clear_log()
    again = relpub(*argv, env=env)
    assert again.returncode == 0, again.stdout + again.stderr
    assert gitlab_mock.mutating_requests() == []
    assert archive_mock.mutating_requests() == []
    assert all(r.method == "GET" for r in gitlab_mock.requests + archive_mock.requests)
    assert (gitlab_mock.state(), archive_mock.state()) == before
    assert elapsed < 10


# --- 7 ---------------------------------------------------------------------

ORDER = {DRAFT: 0, IN_REVIEW: 1, PUBLISHED: 2}
OPS = ("create", "metadata", "upload", "submit", "poll", "get", "curator")


def test_criterion_7_lifecycle_safety(tmp_path):
    doc = {"title": "openCARP", "creators": [{"name": "Doe, Jane"}], "publisher": "KIT",
           "publicationYear": "2021", "resourceType": {"resourceTypeGeneral": "Software"}}
    payload = tmp_path / "openCARP.deb"
    payload.write_bytes(b"package")
    assets = AssetSet((Asset("deb", payload, "application/octet-stream", 7,
                             hashlib.sha256(b"package").hexdigest()),))
    sequences = 1000
    violations = []
    with MockArchive(token=ARCHIVE_TOKEN) as mock:
        target = ArchiveTarget(mock.url, ARCHIVE_TOKEN)
        adapter = get_adapter(target, **FAST)
        for seed in range(sequences):
            rng = random.Random(seed)
            ids, observed = [], {}
            for _ in range(rng.randint(1, 20)):
                op = rng.choice(OPS)
                dataset_id = rng.choice(ids) if ids else str(rng.randint(1, 3))
                try:
                    if op == "create":
                        ids.append(create_dataset(target, doc, **FAST).dataset_id)
                        dataset_id = ids[-1]
                    elif op == "metadata":
                        adapter.attach_metadata(dataset_id, doc)
                    elif op == "upload":
                        upload_assets(target, dataset_id, assets, **FAST)
                    elif op == "submit":
                        submit_for_review(target, dataset_id, **FAST)
                    elif op == "poll":
                        poll_doi(target, dataset_id, timeout=0, **FAST)
                    elif op == "curator":
                        mock.curator_publish(dataset_id)
                    seen = get_dataset(target, dataset_id, **FAST)
                except (RelpubError, ValueError, KeyError):
                    continue
                history = observed.setdefault(dataset_id, [])
                if history and ORDER[seen.state] < ORDER[history[-1]]:
                    violations.append((seed, dataset_id, history[-1], seen.state))
                history.append(seen.state)
                if seen.state == PUBLISHED and (dataset_id, IN_REVIEW, PUBLISHED) not in mock.transitions:
                    violations.append((seed, dataset_id, "published without review"))
                if bool(seen.doi) != (seen.state == PUBLISHED):
                    violations.append((seed, dataset_id, "doi", seen.state))
        allowed = {(DRAFT, IN_REVIEW), (IN_REVIEW, PUBLISHED)}
        bad = [t for t in mock.transitions if (t[1], t[2]) not in allowed]
    print(f"{sequences} sequences, {len(mock.transitions)} transitions, {len(bad) + len(violations)} violations")
    assert bad == []
    assert violations == []
    # the sequences must actually reach review and publication
    assert sum(1 for t in mock.transitions if t[2] == PUBLISHED) >= 10


# --- 8 ---------------------------------------------------------------------

def test_criterion_8_content_sync(tmp_path):
    site = tmp_path / "site"
    shutil.copytree(FIXTURES / "site", site)
    pages = sorted(site.rglob("*.md"))
    assert len(pages) == 12

    def snapshot():
        return {p: p.read_bytes() for p in pages}

    def body(raw):
        return split_page(raw.decode("utf-8"))[1]

    before = snapshot()
    first = sync_site(site, RELEASE, "openCARP")
    after = snapshot()
    changed = [p for p in pages if before[p] != after[p]]
    assert first.errors == []
    assert len(first.updated) == 3
    assert sorted(first.updated) == changed
    assert all(body(before[p]) == body(after[p]) for p in pages)

    second = sync_site(site, RELEASE, "openCARP")
    assert second.updated == []
    assert snapshot() == after

    entries = parse_bibtex((FIXTURES / "bibtex" / "publications.bib").read_text(encoding="utf-8"))
    rendered = render_publications(entries)
    assert len(rendered) == 5
    years = [int(p["year"]) for p in rendered]
    assert years == sorted(years, reverse=True)
    assert rendered == json.loads((FIXTURES / "bibtex" / "expected.json").read_text(encoding="utf-8"))
