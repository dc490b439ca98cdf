import shutil
from pathlib import Path

import pytest

from relpub.mocks import MockArchive, MockGitLab

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
RELEASE = FIXTURES / "release"
XSD = HERE / "data" / "datacite-4.3" / "metadata.xsd"

GITLAB_TOKEN = "glpat-secret-0123456789"
ARCHIVE_TOKEN = "archive-secret-9876543210"
TAG = "v5.0"


@pytest.fixture
def release_dir(tmp_path):
    """Writable copy of the release fixture (metadata files and dist/)."""
    dest = tmp_path / "release"
    shutil.copytree(RELEASE, dest)
    return dest


@pytest.fixture
def gitlab_mock():
    with MockGitLab(token=GITLAB_TOKEN, project_id="1", tags={TAG}) as mock:
        yield mock


@pytest.fixture
def archive_mock():
    with MockArchive(token=ARCHIVE_TOKEN) as mock:
        yield mock


@pytest.fixture
def ci_env():
    return {
        "RELPUB_GITLAB_TOKEN": GITLAB_TOKEN,
        "RELPUB_ARCHIVE_TOKEN": ARCHIVE_TOKEN,
        "CI_COMMIT_TAG": TAG,
        "CI_PROJECT_ID": "1",
    }


@pytest.fixture(scope="session")
def xsd_validator():
    etree = pytest.importorskip("lxml.etree")
    schema = etree.XMLSchema(etree.parse(str(XSD)))
    return schema


@pytest.fixture(scope="session")
def xsd_validator_no_identifier():
    """The official schema with ``identifier`` made optional.

    Records built before the archive mints a DOI carry no identifier,
    everything else stays as strict as the official schema.
    """
    etree = pytest.importorskip("lxml.etree")
    text = XSD.read_text(encoding="utf-8")
    needle = '<xs:element name="identifier">'
    assert text.count(needle) == 1
    text = text.replace(needle, '<xs:element name="identifier" minOccurs="0">')
    doc = etree.fromstring(text.encode("utf-8"), base_url=str(XSD))
    return etree.XMLSchema(doc)
