"""In-process HTTP mocks of GitLab and the deposit archive.

Both servers record every request (method, path, status) and accept
scripted faults, so tests and dry pipeline runs can assert exactly what
the clients sent. Start them with ``python -m relpub.mocks``.
"""

from .archive import MockArchive
from .base import MockServer, RequestRecord
from .gitlab import MockGitLab

__all__ = ["MockArchive", "MockGitLab", "MockServer", "RequestRecord"]
