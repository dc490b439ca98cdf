"""Small REST helper with the retry policy shared by the remote clients.

Only transport failures and 5xx responses are retried. Headers are never
logged, so tokens cannot leak through this module.
"""

import ipaddress
import logging
import time
from dataclasses import dataclass
from urllib.parse import urlsplit

import requests

from .errors import AuthError, RemoteError, TransportError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.5

    def delay(self, attempt):
        return self.base_delay * (2 ** (attempt - 1))


def is_loopback(url):
    host = urlsplit(url).hostname or ""
    if host == "localhost":
        return True
    try:
        return ipaddress.ip_address(host).is_loopback
    except ValueError:
        return False


def check_base_url(url):
    """Require https, except for loopback hosts (the bundled mock servers)."""
    parts = urlsplit(url)
    if parts.scheme == "https" and parts.netloc:
        return url.rstrip("/")
    if parts.scheme == "http" and is_loopback(url):
        return url.rstrip("/")
    raise ValueError(f"base URL must use https: {url!r}")


class RestClient:
    def __init__(self, base_url, headers, retry=None, timeout=30, session=None, sleep=time.sleep):
        self.base_url = base_url.rstrip("/")
        self.headers = dict(headers)
        self.retry = retry or RetryPolicy()
        self.timeout = timeout
        self.session = session or requests.Session()
        self.sleep = sleep

    def url(self, path):
        return self.base_url + path

    def request(self, method, path, *, upload=None, **kwargs):
        """Send a request, retrying transport errors and 5xx replies.

        ``upload`` is an optional ``(path, callback)`` pair; the callback
        receives the freshly opened file on every attempt and returns the
        keyword arguments for :mod:`requests`.
        """
        url = self.url(path)
        attempts = self.retry.max_attempts
        last = None
        last_status = None
        for attempt in range(1, attempts + 1):
            try:
                if upload is not None:
                    file_path, make_kwargs = upload
                    with open(file_path, "rb") as fh:
                        resp = self.session.request(
                            method, url, headers=self.headers, timeout=self.timeout,
                            **make_kwargs(fh), **kwargs)
                else:
                    resp = self.session.request(
                        method, url, headers=self.headers, timeout=self.timeout, **kwargs)
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}"
                log.warning("%s %s: transport failure (attempt %d/%d)", method, path, attempt, attempts)
            else:
                log.debug("%s %s -> %d", method, path, resp.status_code)
                if resp.status_code < 500:
                    return resp
                last_status = resp.status_code
                last = f"HTTP {resp.status_code}"
                log.warning("%s %s: %s (attempt %d/%d)", method, path, last, attempt, attempts)
            if attempt < attempts:
                self.sleep(self.retry.delay(attempt))
        raise TransportError(f"{method} {path} failed after {attempts} attempts ({last})",
                             status=last_status,
                             attempts=attempts)


def raise_for_auth(resp, what):
    if resp.status_code in (401, 403):
        raise AuthError(f"{what}: not authorized (HTTP {resp.status_code})",
                        status=resp.status_code, body=resp.text)


def unexpected(resp, what):
    return RemoteError(f"{what}: unexpected HTTP {resp.status_code}: {resp.text[:500]}",
                       status=resp.status_code, body=resp.text)
