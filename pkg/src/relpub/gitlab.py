"""GitLab releases and generic package registry uploads."""

import logging
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import quote

from .errors import ConflictError, TagNotFound
from .http import RestClient, check_base_url, raise_for_auth, unexpected
from .metadata import sha256_file

log = logging.getLogger(__name__)

TOKEN_ENV = "RELPUB_GITLAB_TOKEN"


@dataclass(frozen=True)
class GitLabTarget:
    base_url: str
    project_id: object  # numeric id or "group/project" path
    token: str = ""

    def __post_init__(self):
        base = check_base_url(self.base_url)
        if base.endswith("/api/v4"):
            base = base[: -len("/api/v4")]
        object.__setattr__(self, "base_url", base)

    @property
    def project_ref(self):
        return quote(str(self.project_id), safe="")

    def __repr__(self):
        return f"GitLabTarget(base_url={self.base_url!r}, project_id={self.project_id!r})"


@dataclass(frozen=True)
class AssetLink:
    name: str
    url: str
    link_type: str = "package"


@dataclass(frozen=True)
class ReleaseRecord:
    tag_name: str
    name: str
    description: str
    asset_links: tuple = ()

    def to_json(self):
        return {
            "tag_name": self.tag_name,
            "name": self.name,
            "description": self.description,
            "assets": {"links": [
                {"name": a.name, "url": a.url, "link_type": a.link_type} for a in self.asset_links
            ]},
        }

    @classmethod
    def from_json(cls, data):
        links = (data.get("assets") or {}).get("links") or []
        return cls(
            tag_name=data.get("tag_name", ""),
            name=data.get("name") or "",
            description=data.get("description") or "",
            asset_links=tuple(AssetLink(l["name"], l["url"], l.get("link_type") or "other")
                              for l in links),
        )

    def same_content(self, other):
        def key(r):
            links = sorted((a.name, a.url, a.link_type) for a in r.asset_links)
            return r.tag_name, r.name, r.description.strip(), links
        return key(self) == key(other)


def release_description(version, changelog=None):
    """Release page text: the changelog file if given, else a one-line note."""
    if changelog is not None:
        with open(changelog, encoding="utf-8") as f:
            return f.read()
    return f"Release {version}"


class GitLabClient:
    def __init__(self, target, retry=None, session=None, sleep=None):
        self.target = target
        kwargs = {"retry": retry, "session": session}
        if sleep is not None:
            kwargs["sleep"] = sleep
        self.rest = RestClient(target.base_url + "/api/v4", {"PRIVATE-TOKEN": target.token}, **kwargs)

    def _project(self, suffix):
        return f"/projects/{self.target.project_ref}{suffix}"

    def package_url(self, package_name, version, filename):
        path = self._project("/packages/generic/{}/{}/{}".format(
            quote(package_name, safe=""), quote(version, safe=""), quote(filename, safe="")))
        return self.rest.url(path)

    def find_package_file(self, package_name, version, filename):
        """Return the registry's record for one file of a generic package, or None."""
        resp = self.rest.request("GET", self._project("/packages"), params={
            "package_type": "generic", "package_name": package_name, "package_version": version,
        })
        raise_for_auth(resp, "list packages")
        if resp.status_code != 200:
            raise unexpected(resp, "list packages")
        for pkg in resp.json():
            if pkg.get("name") != package_name or pkg.get("version") != version:
                continue
            files = self.rest.request("GET", self._project(f"/packages/{pkg['id']}/package_files"))
            raise_for_auth(files, "list package files")
            if files.status_code != 200:
                raise unexpected(files, "list package files")
            for entry in files.json():
                if entry.get("file_name") == filename:
                    return entry
        return None

    def upload_package(self, package_name, version, file, overwrite=False):
        """PUT ``file`` into the generic registry and return its download URL.

        An identical file already present counts as success; a different
        file under the same name raises :class:`ConflictError` unless
        ``overwrite`` is set.
        """
        file = Path(file)
        if not file.is_file():
            raise FileNotFoundError(file)
        filename = file.name
        url = self.package_url(package_name, version, filename)

        local = sha256_file(file)
        existing = self.find_package_file(package_name, version, filename)
        if existing is not None and not overwrite:
            if existing.get("file_sha256") == local:
                log.info("package file %s/%s/%s already uploaded", package_name, version, filename)
                return url
            raise ConflictError(f"{package_name}/{version}/{filename} exists with different content")

        path = url[len(self.rest.base_url):]
        resp = self.rest.request("PUT", path, upload=(file, lambda fh: {"data": fh}))
        raise_for_auth(resp, f"upload {filename}")
        if resp.status_code == 409:
            raise ConflictError(f"{filename}: duplicate package file", status=409, body=resp.text)
        if resp.status_code not in (200, 201):
            raise unexpected(resp, f"upload {filename}")
        log.info("uploaded %s to package registry", filename)
        return url

    def get_release(self, tag_name):
        resp = self.rest.request("GET", self._project(f"/releases/{quote(tag_name, safe='')}"))
        raise_for_auth(resp, "get release")
        if resp.status_code == 404:
            return None
        if resp.status_code != 200:
            raise unexpected(resp, "get release")
        return ReleaseRecord.from_json(resp.json())

    def create_release(self, release):
        """Create the release; an existing identical release is left alone."""
        existing = self.get_release(release.tag_name)
        if existing is not None:
            if existing.same_content(release):
                log.info("release %s already exists; nothing to do", release.tag_name)
                return existing
            raise ConflictError(f"release {release.tag_name} exists with different content")

        resp = self.rest.request("POST", self._project("/releases"), json=release.to_json())
        raise_for_auth(resp, "create release")
        if resp.status_code in (400, 404, 422):
            raise TagNotFound(f"cannot create release: tag {release.tag_name!r} not found ({resp.text[:200]})",
                              status=resp.status_code, body=resp.text)
        if resp.status_code == 409:
            raise ConflictError(f"release {release.tag_name} already exists", status=409, body=resp.text)
        if resp.status_code not in (200, 201):
            raise unexpected(resp, "create release")
        log.info("created release %s with %d asset link(s)", release.tag_name, len(release.asset_links))
        return ReleaseRecord.from_json(resp.json())


def upload_package(target, package_name, version, file, **client_options):
    return GitLabClient(target, **client_options).upload_package(package_name, version, file)


def create_release(target, release, **client_options):
    return GitLabClient(target, **client_options).create_release(release)

