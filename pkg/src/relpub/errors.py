"""Exception hierarchy shared by all relpub jobs.

Every error carries the CLI exit code it maps to, so subcommands can
translate failures without knowing which job raised them.
"""

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_IO = 2
EXIT_REMOTE = 3
EXIT_CONFLICT = 4


class RelpubError(Exception):
    exit_code = EXIT_IO


class IoError(RelpubError):
    exit_code = EXIT_IO


# --- input files -----------------------------------------------------------

class ParseError(RelpubError):
    """Malformed input text (YAML, BibTeX, frontmatter)."""

    exit_code = EXIT_FINDINGS

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = str(path)
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class SchemaError(RelpubError, ValueError):
    """A document is well-formed but violates the expected schema."""

    exit_code = EXIT_FINDINGS

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)


class IdentifierError(SchemaError):
    """An ORCID or ROR identifier failed its syntax or checksum test."""


class MissingAssetError(RelpubError):
    exit_code = EXIT_IO

    def __init__(self, paths):
        self.paths = list(paths)
        super().__init__("missing asset(s): " + ", ".join(self.paths))


class DuplicateRoleError(SchemaError):
    pass


class PreconditionError(RelpubError):
    exit_code = EXIT_FINDINGS


# --- bags ------------------------------------------------------------------

class DestinationNotEmpty(RelpubError):
    exit_code = EXIT_IO


class ValidationFailed(RelpubError):
    exit_code = EXIT_FINDINGS

    def __init__(self, report):
        self.report = report
        first = report.findings[0] if report.findings else None
        super().__init__(f"bag validation failed: {first}" if first else "bag validation failed")


# --- remote services -------------------------------------------------------

class RemoteError(RelpubError):
    exit_code = EXIT_REMOTE

    def __init__(self, message, status=None, body=None):
        self.status = status
        self.body = body
        super().__init__(message)


class AuthError(RemoteError):
    pass


class TransportError(RemoteError):
    def __init__(self, message, status=None, body=None, attempts=1):
        self.attempts = attempts
        super().__init__(message, status=status, body=body)


class ConflictError(RemoteError):
    exit_code = EXIT_CONFLICT


class TagNotFound(RemoteError):
    pass


class ValidationRejected(RemoteError):
    """The archive refused the metadata document; ``body`` is the server reply."""

    exit_code = EXIT_FINDINGS


class StateError(RemoteError):
    exit_code = EXIT_CONFLICT


class DigestMismatch(RemoteError):
    def __init__(self, name, local, remote):
        self.name = name
        self.local = local
        self.remote = remote
        super().__init__(f"digest mismatch for {name}: local {local}, server {remote}")


# --- content sync ----------------------------------------------------------

class MissingSourceError(RelpubError):
    exit_code = EXIT_IO

    def __init__(self, source):
        self.source = source
        super().__init__(f"sync source not found: {source}")
