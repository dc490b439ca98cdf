import hashlib
import itertools

from .base import MockServer, Response


class MockGitLab(MockServer):
    """Subset of the GitLab v4 API: generic packages and releases.

    Routes (all under ``/api/v4/projects/:id``)::

        PUT  /packages/generic/:name/:version/:file
        GET  /packages/generic/:name/:version/:file
        GET  /packages?package_name=&package_version=
        GET  /packages/:package_id/package_files
        GET  /releases/:tag
        POST /releases
    """

    def __init__(self, token="gitlab-test-token", project_id="1", tags=(), **kwargs):
        super().__init__(**kwargs)
        self.token = token
        self.project_id = str(project_id)
        self.tags = set(tags)
        self.packages = {}  # (name, version) -> {"id", "files": {filename: bytes}}
        self.releases = {}  # tag -> release json
        self._ids = itertools.count(1)

    def state(self):
        """Comparable snapshot of everything stored."""
        with self.lock:
            return {
                "packages": {f"{n}/{v}": {f: hashlib.sha256(b).hexdigest() for f, b in p["files"].items()}
                             for (n, v), p in self.packages.items()},
                "releases": {t: {k: v for k, v in r.items() if k != "id"}
                             for t, r in self.releases.items()},
            }

    def handle(self, req):
        if req.headers.get("PRIVATE-TOKEN") != self.token:
            return Response(401, {"message": "401 Unauthorized"})
        seg = req.segments
        if seg[:2] != ["api", "v4"] or len(seg) < 4 or seg[2] != "projects":
            return Response(404, {"message": "404 Not Found"})
        if seg[3] != self.project_id:
            return Response(404, {"message": "404 Project Not Found"})
        rest = seg[4:]

        if rest[:2] == ["packages", "generic"] and len(rest) == 5:
            name, version, filename = rest[2:]
            if req.method == "PUT":
                return self._put_package(name, version, filename, req.body)
            if req.method == "GET":
                pkg = self.packages.get((name, version))
                if pkg and filename in pkg["files"]:
                    return Response(200, pkg["files"][filename], "application/octet-stream")
                return Response(404, {"message": "404 Not Found"})

        if rest == ["packages"] and req.method == "GET":
            out = []
            for (name, version), pkg in self.packages.items():
                if req.query.get("package_name", name) != name:
                    continue
                if req.query.get("package_version", version) != version:
                    continue
                out.append({"id": pkg["id"], "name": name, "version": version,
                            "package_type": "generic"})
            return Response(200, out)

        if len(rest) == 3 and rest[0] == "packages" and rest[2] == "package_files" and req.method == "GET":
            for pkg in self.packages.values():
                if str(pkg["id"]) == rest[1]:
                    return Response(200, [
                        {"id": i, "file_name": f, "size": len(b),
                         "file_sha256": hashlib.sha256(b).hexdigest()}
                        for i, (f, b) in enumerate(pkg["files"].items(), 1)
                    ])
            return Response(404, {"message": "404 Package Not Found"})

        if rest == ["releases"] and req.method == "POST":
            return self._post_release(req.json())

        if len(rest) == 2 and rest[0] == "releases" and req.method == "GET":
            release = self.releases.get(rest[1])
            if release is None:
                return Response(404, {"message": "404 Not Found"})
            return Response(200, release)

        return Response(404, {"message": "404 Not Found"})

    def _put_package(self, name, version, filename, body):
        pkg = self.packages.setdefault((name, version), {"id": next(self._ids), "files": {}})
        if filename in pkg["files"]:
            return Response(409, {"message": "Duplicate package is not allowed"})
        pkg["files"][filename] = body
        return Response(201, {"message": "201 Created"})

    def _post_release(self, body):
        tag = (body or {}).get("tag_name")
        if not tag or tag not in self.tags:
            return Response(400, {"message": f"Tag {tag} does not exist"})
        if tag in self.releases:
            return Response(409, {"message": "Release already exists"})
        links = [
            {"id": i, "name": l["name"], "url": l["url"], "link_type": l.get("link_type", "other")}
            for i, l in enumerate((body.get("assets") or {}).get("links") or [], 1)
        ]
        release = {
            "tag_name": tag,
            "name": body.get("name") or tag,
            "description": body.get("description") or "",
            "assets": {"links": links},
        }
        self.releases[tag] = release
        return Response(201, release)
