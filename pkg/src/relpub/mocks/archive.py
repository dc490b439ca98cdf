import copy
import hashlib
import itertools

from .base import MockServer, Response

MANDATORY_FIELDS = ("title", "creators", "publisher", "publicationYear", "resourceType")


class MockArchive(MockServer):
    """Reference deposit protocol with a simulated curator.

    ``auto_publish_after_polls``: once a dataset is in review, the curator
    publishes it on the N-th status request. DOIs are ``<prefix>/test.<n>``.
    Every state change is appended to ``transitions`` for lifecycle checks.
    """

    def __init__(self, token="archive-test-token", doi_prefix="10.5072",
                 auto_publish_after_polls=None, **kwargs):
        super().__init__(**kwargs)
        self.token = token
        self.doi_prefix = doi_prefix
        self.auto_publish_after_polls = auto_publish_after_polls
        self.datasets = {}
        self.transitions = []  # (dataset_id, from_state, to_state)
        self._ids = itertools.count(1)
        self._dois = itertools.count(1)
        self._corrupt = set()

    def corrupt_next_upload(self, filename):
        """Acknowledge the next upload of ``filename`` with a wrong digest."""
        with self.lock:
            self._corrupt.add(filename)

    def curator_publish(self, dataset_id):
        """The human publication step; only datasets in review can be published."""
        with self.lock:
            ds = self.datasets[dataset_id]
            if ds["state"] != "in_review":
                raise ValueError(f"dataset {dataset_id} is {ds['state']}, not in review")
            self._transition(ds, "published")
            ds["doi"] = f"{self.doi_prefix}/test.{next(self._dois)}"

    def state(self):
        with self.lock:
            return {i: {k: v for k, v in d.items() if k != "polls"}
                    for i, d in copy.deepcopy(self.datasets).items()}

    def _transition(self, ds, new):
        self.transitions.append((ds["id"], ds["state"], new))
        ds["state"] = new

    def _view(self, ds):
        return {
            "id": ds["id"],
            "state": ds["state"],
            "doi": ds["doi"],
            "metadata": ds["metadata"],
            "files": [dict(f) for f in ds["files"]],
        }

    def handle(self, req):
        if req.headers.get("Authorization") != f"Bearer {self.token}":
            return Response(401, {"message": "unauthorized"})
        seg = req.segments
        if not seg or seg[0] != "datasets":
            return Response(404, {"message": "not found"})

        if seg == ["datasets"] and req.method == "POST":
            dataset_id = str(next(self._ids))
            self.datasets[dataset_id] = {
                "id": dataset_id, "state": "draft", "doi": None,
                "metadata": None, "files": [], "polls": 0,
            }
            return Response(201, {"id": dataset_id, "state": "draft"})

        ds = self.datasets.get(seg[1]) if len(seg) > 1 else None
        if ds is None:
            return Response(404, {"message": f"dataset {seg[1] if len(seg) > 1 else ''} not found"})
        action = seg[2] if len(seg) > 2 else None

        if action is None and req.method == "GET":
            if ds["state"] == "in_review" and self.auto_publish_after_polls is not None:
                ds["polls"] += 1
                if ds["polls"] >= self.auto_publish_after_polls:
                    self.curator_publish(ds["id"])
            return Response(200, self._view(ds))

        if action == "metadata" and req.method == "PUT":
            if ds["state"] != "draft":
                return Response(409, {"message": f"dataset is {ds['state']}"})
            doc = req.json()
            missing = [f for f in MANDATORY_FIELDS if not (doc or {}).get(f)]
            if missing:
                return Response(422, {"errors": [{"field": f, "message": "required"} for f in missing]})
            ds["metadata"] = doc
            return Response(200, self._view(ds))

        if action == "files" and req.method == "POST":
            if ds["state"] != "draft":
                return Response(409, {"message": f"dataset is {ds['state']}"})
            name, content = req.multipart_file("file")
            if name is None:
                return Response(400, {"message": "multipart field 'file' missing"})
            digest = hashlib.sha256(content).hexdigest()
            if name in self._corrupt:
                self._corrupt.discard(name)
                digest = hashlib.sha256(content + b"\0").hexdigest()
            entry = {"name": name, "size": len(content), "sha256": digest}
            ds["files"] = [f for f in ds["files"] if f["name"] != name] + [entry]
            return Response(201, entry)

        if action == "submit" and req.method == "POST":
            if ds["state"] != "draft":
                return Response(409, {"message": f"dataset is {ds['state']}"})
            if not ds["files"] or not ds["metadata"]:
                return Response(422, {"message": "dataset needs metadata and at least one file"})
            self._transition(ds, "in_review")
            return Response(200, self._view(ds))

        return Response(404, {"message": "not found"})
