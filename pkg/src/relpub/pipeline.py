"""Configuration and the composed release pipeline.

Settings are resolved with the precedence: command-line flags, then
environment variables, then ``relpub.yml``, then the variables GitLab CI
provides. Tokens are read from the environment only.
"""

import datetime
import logging
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import yaml
from filelock import FileLock, Timeout

from . import archive, datacite, gitlab
from .bagpack import DEFAULT_ALGORITHMS, BagInfo, build_bag, serialize_bag
from .errors import IoError, PreconditionError, SchemaError
from .metadata import (
    Asset,
    AssetSet,
    ReleaseContext,
    load_contributors,
    load_project_metadata,
    resolve_assets,
    sha256_file,
)

log = logging.getLogger(__name__)

CONFIG_FILE = "relpub.yml"
LOCK_FILE = ".relpub.lock"

# Jobs of the release pipeline, in execution order.
STEPS = ("datacite", "packages", "release", "bag", "dataset", "upload", "submit")
# Names accepted by --skip; "deposit" covers the three archive steps.
SKIPPABLE = ("packages", "release", "bag", "deposit")

# Settings that may come from RELPUB_* variables (the env tier).
ENV_SETTINGS = {
    "tag": "RELPUB_TAG",
    "gitlab_url": "RELPUB_GITLAB_URL",
    "project_id": "RELPUB_PROJECT_ID",
    "archive_url": "RELPUB_ARCHIVE_URL",
    "output": "RELPUB_OUTPUT",
}
# Lowest tier: what GitLab CI exports into every job.
CI_SETTINGS = {
    "tag": "CI_COMMIT_TAG",
    "gitlab_url": "CI_API_V4_URL",
    "project_id": "CI_PROJECT_ID",
}

# relpub.yml key -> setting name; nested sections are flattened with "_".
PATH_SETTINGS = ("metadata", "contributors", "assets", "asset_root", "output", "changelog",
                 "site", "repo", "bibtex", "publications_page")


@dataclass
class PipelineConfig:
    metadata: Path = Path("METADATA.yml")
    contributors: Path = Path("CONTRIBUTORS.yml")
    assets: Path = Path("ASSETS.yml")
    asset_root: Path = None  # default: directory of the asset manifest
    output: Path = Path("relpub-out")
    workdir: Path = Path(".")
    tag: str = ""
    created: datetime.date = None
    issued: datetime.date = None
    doi: str = ""
    previous_doi: str = ""
    concept_doi: str = ""
    release_url: str = ""
    changelog: Path = None
    gitlab_url: str = ""
    project_id: str = ""
    package_name: str = ""
    gitlab_token: str = field(default="", repr=False)
    archive_url: str = ""
    archive_adapter: str = "generic-radar-like"
    archive_token: str = field(default="", repr=False)
    source_organization: str = ""
    contact_email: str = ""
    bagging_date: datetime.date = None
    algorithms: tuple = DEFAULT_ALGORITHMS
    site: Path = None
    repo: Path = None
    pipeline: str = ""
    bibtex: Path = None
    publications_page: Path = None
    dry_run: bool = False
    skip: frozenset = frozenset()

    def __post_init__(self):
        unknown = set(self.skip) - set(SKIPPABLE)
        if unknown:
            raise SchemaError(f"cannot skip {', '.join(sorted(unknown))}; "
                              f"choose from {', '.join(SKIPPABLE)}", key="skip")

    @property
    def state_file(self):
        return Path(self.workdir) / archive.STATE_FILE

    def gitlab_target(self):
        missing = [n for n, v in (("gitlab url", self.gitlab_url), ("project id", self.project_id)) if not v]
        if missing:
            raise PreconditionError("GitLab " + " and ".join(missing) + " not configured")
        if not self.gitlab_token:
            raise PreconditionError(f"{gitlab.TOKEN_ENV} is not set")
        return gitlab.GitLabTarget(self.gitlab_url, self.project_id, self.gitlab_token)

    def archive_target(self):
        if not self.archive_url:
            raise PreconditionError("archive url not configured")
        if not self.archive_token:
            raise PreconditionError(f"{archive.TOKEN_ENV} is not set")
        return archive.ArchiveTarget(self.archive_url, self.archive_token, self.archive_adapter)


def _flatten(data, prefix=""):
    out = {}
    for key, value in data.items():
        key = str(key).replace("-", "_")
        if isinstance(value, dict):
            out.update(_flatten(value, f"{prefix}{key}_"))
        else:
            out[prefix + key] = value
    return out


# relpub.yml uses short names inside sections; map them onto config fields
_FILE_ALIASES = {
    "gitlab_url": "gitlab_url", "gitlab_project_id": "project_id",
    "gitlab_package_name": "package_name", "archive_url": "archive_url",
    "archive_adapter": "archive_adapter", "bag_source_organization": "source_organization",
    "bag_contact_email": "contact_email", "bag_algorithms": "algorithms",
    "bag_bagging_date": "bagging_date", "release_created": "created", "release_url": "release_url",
    "release_previous_doi": "previous_doi", "release_concept_doi": "concept_doi",
    "release_doi": "doi", "release_changelog": "changelog", "sync_site": "site",
    "sync_repo": "repo", "sync_pipeline": "pipeline", "sync_bibtex": "bibtex",
    "sync_publications_page": "publications_page",
}


def read_config_file(path):
    """Return the settings in ``relpub.yml``; relative paths are made relative to its directory."""
    path = Path(path)
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: configuration must be a mapping")
    settings = {}
    known = set(PipelineConfig.__dataclass_fields__)
    for key, value in _flatten(data).items():
        name = _FILE_ALIASES.get(key, key)
        if name not in known or name in ("gitlab_token", "archive_token", "dry_run", "workdir"):
            raise SchemaError(f"{path}: unknown setting {key!r}", key=key)
        if name in PATH_SETTINGS and value is not None:
            value = path.parent / str(value)
        settings[name] = value
    return settings


def _coerce(name, value):
    if value is None:
        return None
    if name in ("created", "issued", "bagging_date") and not isinstance(value, datetime.date):
        try:
            return datetime.date.fromisoformat(str(value))
        except ValueError:
            raise SchemaError(f"{name}: {value!r} is not an ISO date", key=name) from None
    if name in PATH_SETTINGS:
        return Path(value)
    if name == "algorithms":
        return tuple([value] if isinstance(value, str) else value)
    if name == "skip":
        return frozenset(value)
    if name in ("project_id", "tag"):
        return str(value)
    return value


def resolve_config(flags, env=None, config_path=None):
    """Merge settings; ``flags`` holds only options given on the command line."""
    env = os.environ if env is None else env
    merged = {}
    for name, var in CI_SETTINGS.items():
        if env.get(var):
            merged[name] = env[var]
    if config_path is not None:
        merged.update(read_config_file(config_path))
    for name, var in ENV_SETTINGS.items():
        if env.get(var):
            merged[name] = env[var]
    merged.update({k: v for k, v in flags.items() if v is not None})

    # the release page is predictable in CI
    if not merged.get("release_url") and env.get("CI_PROJECT_URL") and merged.get("tag"):
        merged["release_url"] = f"{env['CI_PROJECT_URL'].rstrip('/')}/-/releases/{merged['tag']}"

    merged["gitlab_token"] = env.get(gitlab.TOKEN_ENV, "")
    merged["archive_token"] = env.get(archive.TOKEN_ENV, "")
    return PipelineConfig(**{k: _coerce(k, v) for k, v in merged.items() if v is not None})


# --- pipeline --------------------------------------------------------------

@dataclass
class StepResult:
    name: str
    status: str  # done | skipped | planned | failed
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"step": self.name, "status": self.status, **self.detail}


@dataclass
class Inputs:
    meta: object
    contribs: object
    assets: AssetSet
    release: ReleaseContext


def load_inputs(config, today=None):
    today = today or datetime.date.today()
    if not config.tag:
        raise PreconditionError("no release tag: pass --tag or set CI_COMMIT_TAG")
    meta = load_project_metadata(config.metadata)
    contribs = load_contributors(config.contributors)
    asset_root = config.asset_root or Path(config.assets).parent
    assets = resolve_assets(config.assets, asset_root)
    # a re-run of the same tag reuses the first run's date, so uploads stay identical
    previous = archive.DepositState(config.state_file).get(config.tag) or {}
    issued = config.issued or _date_or_none(previous.get("issued")) or today
    release = ReleaseContext(
        version_tag=config.tag,
        created_date=config.created or issued,
        issued_date=issued,
        release_page_url=config.release_url,
        doi=config.doi,
        previous_doi=config.previous_doi,
        concept_doi=config.concept_doi,
    )
    return Inputs(meta, contribs, assets, release)


def _date_or_none(value):
    try:
        return datetime.date.fromisoformat(value) if value else None
    except ValueError:
        return None


def datacite_asset(path):
    path = Path(path)
    return Asset("other", path.resolve(), "application/xml", path.stat().st_size, sha256_file(path))


def make_datacite(config, inputs):
    record = datacite.build_record(inputs.meta, inputs.contribs, inputs.release)
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    return record, datacite.write_datacite(record, out)


def make_bag(config, inputs, xml_path):
    """Build the BagPack directory and its tar; an earlier bag for the tag is replaced."""
    out = Path(config.output)
    stem = f"{_package_name(config, inputs)}-{config.tag}-bagpack"
    bag_dir = out / stem
    if bag_dir.exists():
        if not (bag_dir / "bagit.txt").is_file():
            raise IoError(f"{bag_dir} exists and is not a bag; refusing to replace it")
        shutil.rmtree(bag_dir)
    contact = config.contact_email
    if not contact:
        raise PreconditionError("bag contact email not configured (bag.contact_email)")
    info = BagInfo.create(
        source_organization=config.source_organization or inputs.meta.publisher,
        contact_email=contact,
        external_identifier=config.doi or config.release_url or f"{_package_name(config, inputs)} {config.tag}",
        bagging_date=config.bagging_date or inputs.release.issued_date,
    )
    bag = build_bag(inputs.assets, Path(xml_path).read_bytes(), info, bag_dir, config.algorithms)
    tar = serialize_bag(bag_dir, out / f"{stem}.tar")
    return bag, tar


def _package_name(config, inputs):
    return config.package_name or inputs.meta.title


def release_assets(inputs, xml_path):
    """Files published with the release: the asset set plus the DataCite record."""
    return list(inputs.assets) + [datacite_asset(xml_path)]


class StepRunner:
    """Collects step results and tags the first failure with its step name."""

    def __init__(self, on_step=None):
        self.results = []
        self.on_step = on_step

    def report(self, name, status, **detail):
        result = StepResult(name, status, detail)
        self.results.append(result)
        log.info("step %s: %s", name, status)
        if self.on_step:
            self.on_step(result)

    def run(self, name, func):
        try:
            return func()
        except Exception as exc:
            exc.step = name
            exc.results = self.results
            self.report(name, "failed", error=str(exc))
            raise


class workdir_lock:
    """One pipeline run per working directory."""

    def __init__(self, workdir):
        self.path = Path(workdir) / LOCK_FILE
        self.lock = FileLock(str(self.path))

    def __enter__(self):
        try:
            self.lock.acquire(timeout=0)
        except Timeout:
            raise IoError(f"another relpub run holds {self.path}") from None
        return self

    def __exit__(self, *exc):
        self.lock.release()


def prepare(config, runner, today=None):
    """Load the inputs and write ``datacite.xml``; return (inputs, record, files)."""
    inputs = runner.run("datacite", lambda: load_inputs(config, today))
    record, xml_path = runner.run("datacite", lambda: make_datacite(config, inputs))
    if not config.dry_run:
        archive.DepositState(config.state_file).record(
            config.tag, issued=inputs.release.issued_date.isoformat())
    runner.report("datacite", "done", path=str(xml_path))
    return inputs, record, xml_path, release_assets(inputs, xml_path)


def run_release(config, client_options=None, today=None, on_step=None):
    """Run the whole release pipeline; return the list of :class:`StepResult`.

    The first failing step raises; its name is available as the
    exception's ``step`` attribute.
    """
    client_options = client_options or {}
    runner = StepRunner(on_step)
    with workdir_lock(config.workdir):
        inputs, record, xml_path, files = prepare(config, runner, today)
        package = _package_name(config, inputs)

        if config.dry_run:
            for name in STEPS[1:]:
                if name == "bag" and "bag" not in config.skip:
                    bag, tar = runner.run("bag", lambda: make_bag(config, inputs, xml_path))
                    runner.report("bag", "done", path=str(tar), oxum=bag.payload_oxum)
                else:
                    runner.report(name, "skipped" if _skipped(name, config) else "planned",
                                  **_plan(name, config, package, files))
            return runner.results

        links = None
        if "packages" in config.skip:
            runner.report("packages", "skipped")
        else:
            client = runner.run("packages", lambda: gitlab.GitLabClient(config.gitlab_target(), **client_options))
            links = runner.run("packages", lambda: [
                gitlab.AssetLink(a.name, client.upload_package(package, config.tag, a.path))
                for a in files])
            runner.report("packages", "done", files=[a.name for a in files])

        if "release" in config.skip:
            runner.report("release", "skipped")
        else:
            def create():
                client = gitlab.GitLabClient(config.gitlab_target(), **client_options)
                asset_links = links if links is not None else [
                    gitlab.AssetLink(a.name, client.package_url(package, config.tag, a.name)) for a in files]
                return client.create_release(gitlab.ReleaseRecord(
                    tag_name=config.tag,
                    name=f"{record.title} {config.tag}",
                    description=gitlab.release_description(config.tag, config.changelog),
                    asset_links=tuple(asset_links),
                ))
            created = runner.run("release", create)
            runner.report("release", "done", links=len(created.asset_links))

        if "bag" in config.skip:
            runner.report("bag", "skipped")
        else:
            bag, tar = runner.run("bag", lambda: make_bag(config, inputs, xml_path))
            runner.report("bag", "done", path=str(tar), oxum=bag.payload_oxum)

        if "deposit" in config.skip:
            for name in ("dataset", "upload", "submit"):
                runner.report(name, "skipped")
        else:
            deposit(config, record, inputs.meta, files, runner, client_options)
        return runner.results


def run_deposit(config, client_options=None, today=None, on_step=None, wait=0, poll_interval=5.0):
    """Only the archive part of the pipeline, optionally waiting for the DOI."""
    client_options = client_options or {}
    runner = StepRunner(on_step)
    with workdir_lock(config.workdir):
        inputs, record, _, files = prepare(config, runner, today)
        if config.dry_run:
            for name in ("dataset", "upload", "submit"):
                runner.report(name, "planned", **_plan(name, config, "", files))
            return runner.results
        dataset_id = deposit(config, record, inputs.meta, files, runner, client_options)
        if wait > 0:
            target = config.archive_target()
            doi = runner.run("publish", lambda: archive.poll_doi(
                target, dataset_id, wait, interval=poll_interval, **client_options))
            if doi:
                archive.DepositState(config.state_file).record(config.tag, state=archive.PUBLISHED, doi=doi)
            runner.report("publish", "done" if doi else "pending", dataset_id=dataset_id, doi=doi or "")
        return runner.results


def _skipped(name, config):
    return name in config.skip or (name in ("dataset", "upload", "submit") and "deposit" in config.skip)


def _plan(name, config, package, files):
    if name == "packages":
        return {"package": package, "version": config.tag, "files": [a.name for a in files]}
    if name == "release":
        return {"tag": config.tag, "links": len(files)}
    if name == "upload":
        return {"files": [a.name for a in files]}
    return {}


def deposit(config, record, meta, files, runner, client_options):
    """Create or resume the archive dataset for ``config.tag``, upload and submit.

    Returns the dataset id.
    """
    state = archive.DepositState(config.state_file)
    target = runner.run("dataset", config.archive_target)
    known = state.get(config.tag) or {}
    dataset_id = known.get("dataset_id")

    doc = archive.map_metadata(record, meta)
    if dataset_id:
        current = runner.run("dataset", lambda: archive.get_dataset(target, dataset_id, **client_options))
        if current.state != archive.DRAFT:
            state.record(config.tag, state=current.state, doi=current.doi)
            for name in ("dataset", "upload", "submit"):
                runner.report(name, "done", dataset_id=dataset_id, state=current.state, resumed=True)
            return dataset_id
        if not current.metadata_payload:
            runner.run("dataset", lambda: archive.get_adapter(target, **client_options)
                       .attach_metadata(dataset_id, doc))
        runner.report("dataset", "done", dataset_id=dataset_id, resumed=True)
    else:
        adapter = archive.get_adapter(target, **client_options)
        dataset_id = str(runner.run("dataset", adapter.create)["id"])
        # recorded before the metadata call so a failure there resumes this draft
        state.record(config.tag, dataset_id=dataset_id, state=archive.DRAFT)
        runner.run("dataset", lambda: adapter.attach_metadata(dataset_id, doc))
        runner.report("dataset", "done", dataset_id=dataset_id)

    runner.run("upload", lambda: archive.upload_assets(target, dataset_id, files, **client_options))
    state.record(config.tag, uploaded=sorted(a.name for a in files))
    runner.report("upload", "done", dataset_id=dataset_id, files=len(files))

    submitted = runner.run("submit", lambda: archive.submit_for_review(target, dataset_id, **client_options))
    state.record(config.tag, state=submitted.state)
    runner.report("submit", "done", dataset_id=dataset_id, state=submitted.state)
    return dataset_id
