"""BagIt 1.0 bags with a BagPack ``metadata/`` directory.

Layout written by :func:`build_bag`::

    bagit.txt
    bag-info.txt
    manifest-<alg>.txt        payload digests, one per algorithm
    tagmanifest-<alg>.txt     digests of every other tag file
    data/<asset files>
    metadata/datacite.xml

``metadata/`` holds tag files: it is covered by the tag manifests and never
by the payload manifests.
"""

import datetime
import hashlib
import os
import re
import shutil
import tarfile
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DestinationNotEmpty, IoError, ValidationFailed
from .report import ValidationReport

BAGIT_VERSION = "1.0"
BAGIT_TXT = b"BagIt-Version: 1.0\nTag-File-Character-Encoding: UTF-8\n"
DEFAULT_ALGORITHMS = ("sha256", "sha512")
SUPPORTED_ALGORITHMS = ("sha256", "sha512")
REQUIRED_INFO_LABELS = (
    "Bagging-Date", "Payload-Oxum", "Source-Organization", "Contact-Email", "External-Identifier",
)
DATACITE_PATH = "metadata/datacite.xml"
FOLD_WIDTH = 79

_MANIFEST_RE = re.compile(r"^(manifest|tagmanifest)-([a-z0-9]+)\.txt$")
_LINE_RE = re.compile(r"^([0-9a-fA-F]+)(?: {2}| |\t)(.+)$")


@dataclass(frozen=True)
class BagInfo:
    entries: tuple = ()  # ((label, value), ...)

    @classmethod
    def create(cls, source_organization, contact_email, external_identifier,
               bagging_date=None, extra=()):
        bagging_date = bagging_date or datetime.date.today()
        entries = [
            ("Bagging-Date", bagging_date.isoformat()),
            ("Source-Organization", source_organization),
            ("Contact-Email", contact_email),
            ("External-Identifier", external_identifier),
        ]
        entries.extend(extra)
        return cls(tuple(entries))

    def get(self, label, default=None):
        for k, v in self.entries:
            if k == label:
                return v
        return default

    def replace(self, label, value):
        """Return a copy with ``label`` set to ``value`` (appended if absent)."""
        entries = [(k, value if k == label else v) for k, v in self.entries]
        if label not in [k for k, _ in entries]:
            entries.append((label, value))
        return BagInfo(tuple(entries))

    @property
    def bagging_date(self):
        return datetime.date.fromisoformat(self.get("Bagging-Date"))

    def serialize(self):
        lines = []
        for label, value in self.entries:
            if "\n" in value or "\r" in value:
                raise ValueError(f"bag-info value for {label} must be a single line")
            lines.extend(_fold(f"{label}: {value}"))
        return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""

    @classmethod
    def parse(cls, text):
        entries = []
        # only LF, CR and CRLF end a line; str.splitlines knows more
        for line in re.split(r"\r\n|\r|\n", text):
            if not line.strip():
                continue
            if line[0] in " \t":
                if not entries:
                    raise ValueError("continuation line before first label")
                label, value = entries[-1]
                entries[-1] = (label, value + " " + line.strip())
                continue
            if ":" not in line:
                raise ValueError(f"invalid tag line: {line!r}")
            label, value = line.split(":", 1)
            entries.append((label.strip(), value.strip()))
        return cls(tuple(entries))


def _fold(line, width=FOLD_WIDTH):
    # Break only at a single space followed by a non-space, so unfolding
    # (join with one space) restores the value exactly.
    out = []
    while len(line) > width:
        cut = -1
        for i in range(width, 0, -1):
            if line[i] == " " and line[i - 1] != " " and i + 1 < len(line) and line[i + 1] != " ":
                cut = i
                break
        if cut <= 0 or (not out and ":" not in line[:cut]):
            break
        out.append(line[:cut])
        line = " " + line[cut + 1:]
    out.append(line)
    return out


@dataclass(frozen=True)
class Bag:
    root: Path
    info: BagInfo
    payload: tuple = ()
    manifests: dict = field(default_factory=dict, hash=False)
    tag_manifests: dict = field(default_factory=dict, hash=False)

    @property
    def payload_oxum(self):
        return self.info.get("Payload-Oxum")


# --- paths and digests -----------------------------------------------------

def encode_path(path):
    return path.replace("%", "%25").replace("\r", "%0D").replace("\n", "%0A")


def decode_path(path):
    return re.sub(r"%(25|0D|0A|0d|0a)",
                  lambda m: {"25": "%", "0D": "\r", "0A": "\n"}[m.group(1).upper()], path)


def file_digests(path, algorithms, chunk_size=1 << 16):
    hashers = {alg: hashlib.new(alg) for alg in algorithms}
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(chunk_size), b""):
                for h in hashers.values():
                    h.update(chunk)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror}") from exc
    return {alg: h.hexdigest() for alg, h in hashers.items()}


def _walk_files(top):
    """Yield regular files under ``top`` as sorted POSIX paths relative to ``top``."""
    found = []
    for dirpath, dirnames, filenames in os.walk(top):
        dirnames.sort()
        for name in filenames:
            full = os.path.join(dirpath, name)
            if os.path.isfile(full) and not os.path.islink(full):
                found.append(Path(os.path.relpath(full, top)).as_posix())
    return sorted(found)


def compute_payload_oxum(payload_root):
    """Return ``"<octets>.<files>"`` for the regular files under ``payload_root``."""
    octets = 0
    count = 0
    try:
        for rel in _walk_files(payload_root):
            octets += os.stat(os.path.join(payload_root, rel)).st_size
            count += 1
    except OSError as exc:
        raise IoError(f"cannot scan {payload_root}: {exc.strerror}") from exc
    return f"{octets}.{count}"


def _manifest_bytes(entries):
    lines = [f"{digest}  {encode_path(rel)}\n" for rel, digest in sorted(entries.items())]
    return "".join(lines).encode("utf-8")


# --- build -----------------------------------------------------------------

def build_bag(assets, datacite_xml, info, dest, algorithms=DEFAULT_ALGORITHMS):
    """Write a BagPack for ``assets`` into ``dest`` and return the :class:`Bag`.

    ``dest`` must be absent or an empty directory. Payload-Oxum in
    ``bag-info.txt`` is computed from the files actually written.
    """
    algorithms = tuple(sorted(set(algorithms)))
    if not algorithms:
        raise ValueError("at least one checksum algorithm is required")
    for alg in algorithms:
        if alg not in SUPPORTED_ALGORITHMS:
            raise ValueError(f"unsupported algorithm {alg!r}")

    dest = Path(dest)
    if dest.exists() and (not dest.is_dir() or any(dest.iterdir())):
        raise DestinationNotEmpty(f"bag destination is not empty: {dest}")

    data_dir = dest / "data"
    try:
        data_dir.mkdir(parents=True, exist_ok=True)
        (dest / "metadata").mkdir()
    except OSError as exc:
        raise IoError(f"cannot create bag at {dest}: {exc.strerror}") from exc

    manifests = {alg: {} for alg in algorithms}
    payload = []
    for asset in assets:
        target = data_dir / asset.name
        if target.exists():
            raise ValueError(f"duplicate payload file name: {asset.name}")
        try:
            shutil.copyfile(asset.path, target)
        except OSError as exc:
            raise IoError(f"cannot copy {asset.path}: {exc.strerror}") from exc
        rel = f"data/{asset.name}"
        payload.append(rel)
        for alg, digest in file_digests(target, algorithms).items():
            manifests[alg][rel] = digest

    info = info.replace("Payload-Oxum", compute_payload_oxum(data_dir))

    tag_files = {
        "bagit.txt": BAGIT_TXT,
        "bag-info.txt": info.serialize(),
        DATACITE_PATH: bytes(datacite_xml),
    }
    for alg in algorithms:
        tag_files[f"manifest-{alg}.txt"] = _manifest_bytes(manifests[alg])

    tag_manifests = {alg: {} for alg in algorithms}
    for rel, content in sorted(tag_files.items()):
        path = dest / rel
        try:
            path.write_bytes(content)
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc.strerror}") from exc
        for alg in algorithms:
            tag_manifests[alg][rel] = hashlib.new(alg, content).hexdigest()

    for alg in algorithms:
        (dest / f"tagmanifest-{alg}.txt").write_bytes(_manifest_bytes(tag_manifests[alg]))

    return Bag(dest, info, tuple(sorted(payload)), manifests, tag_manifests)


# --- validate --------------------------------------------------------------

def _read_manifest(path, report, rel_name):
    """Parse a manifest into {path: digest}; malformed lines become findings."""
    entries = {}
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError:
        report.error(rel_name, "manifest is not valid UTF-8")
        return entries
    for lineno, line in enumerate(text.split("\n"), 1):
        if not line:
            continue
        m = _LINE_RE.match(line)
        if not m:
            report.error(rel_name, f"malformed manifest line {lineno}")
            continue
        digest, target = m.group(1), decode_path(m.group(2))
        if digest != digest.lower():
            # valid per RFC 8493, but flagged so a flipped case bit is never silent
            report.warning(rel_name, f"line {lineno}: digest is not lowercase hex")
            digest = digest.lower()
        if target in entries:
            report.error(rel_name, f"duplicate entry for {target}")
        entries[target] = digest
    return entries


def _check_declaration(root, report):
    path = root / "bagit.txt"
    if not path.is_file():
        report.error("bagit.txt", "bag declaration missing")
        return
    try:
        info = BagInfo.parse(path.read_bytes().decode("utf-8"))
    except (UnicodeDecodeError, ValueError):
        report.error("bagit.txt", "bag declaration is malformed")
        return
    version = info.get("BagIt-Version")
    encoding = info.get("Tag-File-Character-Encoding")
    if not version or not re.fullmatch(r"\d+\.\d+", version):
        report.error("bagit.txt", "BagIt-Version missing or malformed")
    if not encoding or encoding.upper() not in ("UTF-8", "UTF8"):
        report.error("bagit.txt", "Tag-File-Character-Encoding must be UTF-8")
    if len(info.entries) != 2:
        report.error("bagit.txt", "bag declaration must contain exactly two tags")


def _check_info(root, report):
    path = root / "bag-info.txt"
    if not path.is_file():
        report.error("bag-info.txt", "bag-info.txt missing")
        return
    try:
        info = BagInfo.parse(path.read_bytes().decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        report.error("bag-info.txt", f"bag-info.txt is malformed: {exc}")
        return
    for label in REQUIRED_INFO_LABELS:
        if info.get(label) is None:
            report.error("bag-info.txt", f"required label {label} missing")
    date = info.get("Bagging-Date")
    if date is not None:
        try:
            datetime.date.fromisoformat(date)
        except ValueError:
            report.error("bag-info.txt", f"Bagging-Date {date!r} is not an ISO date")
    oxum = info.get("Payload-Oxum")
    if oxum is not None:
        actual = compute_payload_oxum(root / "data") if (root / "data").is_dir() else "0.0"
        if oxum != actual:
            report.error("bag-info.txt", f"Payload-Oxum {oxum} does not match payload ({actual})")


def _check_manifests(root, report, kind, expected_files):
    """Verify every ``<kind>-<alg>.txt`` against ``expected_files``."""
    found_any = False
    mismatched = {}
    for path in sorted(root.iterdir()):
        m = _MANIFEST_RE.match(path.name)
        if not m or m.group(1) != kind:
            continue
        alg = m.group(2)
        if alg not in hashlib.algorithms_available:
            report.warning(path.name, f"unsupported algorithm {alg}; manifest skipped")
            continue
        found_any = True
        entries = _read_manifest(path, report, path.name)
        for rel, digest in sorted(entries.items()):
            target = root / rel
            if kind == "manifest" and not rel.startswith("data/"):
                report.error(path.name, f"payload entry outside data/: {rel}")
                continue
            if not target.is_file():
                report.error(rel, f"listed in {path.name} but missing")
                continue
            if file_digests(target, [alg])[alg] != digest:
                mismatched.setdefault(rel, []).append(alg)
        for rel in sorted(set(expected_files) - set(entries)):
            if kind == "manifest":
                report.error(rel, f"orphan payload file (not in {path.name})")
            else:
                report.error(rel, f"tag file not in {path.name}")
    for rel, algs in sorted(mismatched.items()):
        report.error(rel, f"digest mismatch ({', '.join(algs)})")
    return found_any


def validate_bag(root, bagpack=True):
    """Check a bag on disk; every problem becomes a finding."""
    root = Path(root)
    report = ValidationReport()
    if not root.is_dir():
        report.error(str(root), "bag directory does not exist")
        return report

    _check_declaration(root, report)

    all_files = _walk_files(root)
    payload_files = [f for f in all_files if f.startswith("data/")]
    tag_files = [f for f in all_files
                 if not f.startswith("data/") and not _is_tagmanifest(f)]

    if not (root / "data").is_dir():
        report.error("data", "payload directory missing")
    if not _check_manifests(root, report, "manifest", payload_files):
        report.error("manifest-*.txt", "no payload manifest found")
    if not _check_manifests(root, report, "tagmanifest", tag_files):
        report.error("tagmanifest-*.txt", "no tag manifest found")

    _check_info(root, report)

    if bagpack and not (root / DATACITE_PATH).is_file():
        report.error(DATACITE_PATH, "BagPack requires metadata/datacite.xml")
    return report


def _is_tagmanifest(rel):
    m = _MANIFEST_RE.match(rel)
    return bool(m) and m.group(1) == "tagmanifest"


# --- serialize -------------------------------------------------------------

def serialize_bag(root, out, arcname=None):
    """Write ``root`` as a reproducible tar archive at ``out``.

    Entries are sorted, owned by 0/0 and stamped with the Bagging-Date
    (midnight UTC), so identical bags give byte-identical archives.
    """
    root = Path(root)
    report = validate_bag(root)
    if report.findings:
        raise ValidationFailed(report)

    info = BagInfo.parse((root / "bag-info.txt").read_text(encoding="utf-8"))
    mtime = int(datetime.datetime.combine(
        info.bagging_date, datetime.time(), tzinfo=datetime.timezone.utc).timestamp())
    arcname = arcname or root.name

    dirs = set()
    files = _walk_files(root)
    for rel in files:
        parent = Path(rel).parent
        while parent != Path("."):
            dirs.add(parent.as_posix())
            parent = parent.parent
    entries = sorted([(d, True) for d in dirs] + [(f, False) for f in files])

    out = Path(out)
    try:
        with tarfile.open(out, "w", format=tarfile.PAX_FORMAT) as tar:
            tar.addfile(_tarinfo(arcname, True, 0, mtime))
            for rel, is_dir in entries:
                name = f"{arcname}/{rel}"
                if is_dir:
                    tar.addfile(_tarinfo(name, True, 0, mtime))
                else:
                    path = root / rel
                    with open(path, "rb") as f:
                        tar.addfile(_tarinfo(name, False, path.stat().st_size, mtime), f)
    except OSError as exc:
        raise IoError(f"cannot write {out}: {exc.strerror}") from exc
    return out


def _tarinfo(name, is_dir, size, mtime):
    ti = tarfile.TarInfo(name)
    ti.type = tarfile.DIRTYPE if is_dir else tarfile.REGTYPE
    ti.mode = 0o755 if is_dir else 0o644
    ti.size = size
    ti.mtime = mtime
    ti.uid = ti.gid = 0
    ti.uname = ti.gname = ""
    return ti
