import email
import email.policy
import json
import re
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlsplit


@dataclass(frozen=True)
class RequestRecord:
    method: str
    path: str
    status: int


class Request:
    def __init__(self, method, raw_path, headers, body):
        parts = urlsplit(raw_path)
        self.method = method
        self.raw_path = parts.path
        # segments are unquoted individually so %2F inside an id survives
        self.segments = [unquote(s) for s in parts.path.strip("/").split("/")]
        self.query = {k: v[0] for k, v in parse_qs(parts.query).items()}
        self.headers = headers
        self.body = body

    def json(self):
        return json.loads(self.body.decode("utf-8") or "null")

    def multipart_file(self, field="file"):
        """Return ``(filename, content)`` of one multipart/form-data part."""
        ctype = self.headers.get("Content-Type", "")
        msg = email.message_from_bytes(
            b"Content-Type: " + ctype.encode("latin-1") + b"\r\n\r\n" + self.body,
            policy=email.policy.HTTP)
        for part in msg.iter_parts():
            if part.get_param("name", header="content-disposition") == field:
                return part.get_filename(), part.get_payload(decode=True)
        return None, None


class Response:
    def __init__(self, status, body=None, content_type="application/json"):
        self.status = status
        if body is None:
            self.body = b""
        elif isinstance(body, bytes):
            self.body = body
        else:
            self.body = json.dumps(body).encode("utf-8")
        self.content_type = content_type


class MockServer:
    """Threaded HTTP server dispatching to :meth:`handle`.

    Subclasses implement ``handle(request) -> Response``. Use as a context
    manager or call :meth:`start`/:meth:`stop`.
    """

    def __init__(self, host="127.0.0.1", port=0):
        self.host = host
        self.port = port
        self.lock = threading.RLock()
        self.requests = []
        self._faults = []
        self._httpd = None
        self._thread = None

    # lifecycle
    def start(self):
        mock = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"
            # headers and body go out in separate writes; without this each
            # response waits for the client's delayed ACK
            disable_nagle_algorithm = True

            def _dispatch(self):
                length = int(self.headers.get("Content-Length") or 0)
                body = self.rfile.read(length) if length else b""
                resp = mock._respond(Request(self.command, self.path, self.headers, body))
                self.send_response(resp.status)
                self.send_header("Content-Type", resp.content_type)
                self.send_header("Content-Length", str(len(resp.body)))
                self.end_headers()
                self.wfile.write(resp.body)

            do_GET = do_POST = do_PUT = do_DELETE = do_HEAD = _dispatch

            def log_message(self, format, *args):
                pass

        self._httpd = ThreadingHTTPServer((self.host, self.port), Handler)
        self._httpd.daemon_threads = True
        self.port = self._httpd.server_address[1]
        self._thread = threading.Thread(target=self._httpd.serve_forever, args=(0.05,), daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    @property
    def url(self):
        return f"http://{self.host}:{self.port}"

    # scripting
    def inject(self, method, path_pattern, statuses):
        """Answer the next matching requests with ``statuses`` before normal handling."""
        with self.lock:
            self._faults.append([method, re.compile(path_pattern), list(statuses)])

    def mutating_requests(self):
        with self.lock:
            return [r for r in self.requests if r.method not in ("GET", "HEAD")]

    def clear_log(self):
        with self.lock:
            self.requests.clear()

    def _respond(self, request):
        with self.lock:
            resp = None
            for fault in self._faults:
                method, pattern, statuses = fault
                if statuses and method == request.method and pattern.search(request.raw_path):
                    resp = Response(statuses.pop(0), {"message": "injected fault"})
                    break
            if resp is None:
                try:
                    resp = self.handle(request)
                except Exception as exc:  # surface handler bugs as 500s
                    resp = Response(500, {"message": f"mock error: {exc}"})
            self.requests.append(RequestRecord(request.method, request.raw_path, resp.status))
            return resp

    def handle(self, request):
        raise NotImplementedError
