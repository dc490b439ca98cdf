"""Command-line entry point: ``relpub <subcommand>``.

Exit codes are the same for every subcommand: 0 success, 1 validation
findings, 2 I/O problems, 3 remote or authorization failures, 4 conflicts
with existing remote state.
"""

import argparse
import datetime
import json
import logging
import sys
import tarfile
import tempfile
from pathlib import Path

from . import __version__, datacite, pipeline
from .bagpack import validate_bag
from .content import bibtex, frontmatter
from .content.sync import sync_site
from .errors import EXIT_FINDINGS, EXIT_IO, EXIT_OK, ParseError, RelpubError, SchemaError
from .metadata import load_contributors, load_project_metadata, resolve_assets, validate_metadata
from .report import ValidationReport

log = logging.getLogger("relpub")


def _date(value):
    try:
        return datetime.date.fromisoformat(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {value!r}") from None


def _skip_list(value):
    return [v.strip() for v in value.split(",") if v.strip()]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="configuration file (default: ./relpub.yml if present)")
    common.add_argument("--workdir", type=Path, default=None,
                        help="directory holding the state and lock files (default: current directory)")
    common.add_argument("--format", choices=("text", "json"), default="text", help="output format")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    inputs = argparse.ArgumentParser(add_help=False)
    g = inputs.add_argument_group("release inputs")
    g.add_argument("--metadata", type=Path, help="METADATA.yml")
    g.add_argument("--contributors", type=Path, help="CONTRIBUTORS.yml")
    g.add_argument("--assets", type=Path, help="ASSETS.yml")
    g.add_argument("--asset-root", type=Path, help="base directory of asset paths (default: next to ASSETS.yml)")
    g.add_argument("--output", type=Path, help="output directory (default: relpub-out)")
    g.add_argument("--tag", help="release tag (default: $CI_COMMIT_TAG)")
    g.add_argument("--created", type=_date, help="creation date of the release (default: issued date)")
    g.add_argument("--issued", type=_date, help="issue date (default: today)")
    g.add_argument("--doi", help="DOI of this release, if already known")
    g.add_argument("--previous-doi", help="DOI of the previous release")
    g.add_argument("--concept-doi", help="version-independent DOI")
    g.add_argument("--release-url", help="release page URL (default derived from $CI_PROJECT_URL)")

    bag = argparse.ArgumentParser(add_help=False)
    g = bag.add_argument_group("bag")
    g.add_argument("--source-organization", help="bag-info Source-Organization (default: publisher)")
    g.add_argument("--contact-email", help="bag-info Contact-Email")
    g.add_argument("--bagging-date", type=_date, help="bag-info Bagging-Date (default: issued date)")
    g.add_argument("--algorithm", dest="algorithms", action="append", choices=("sha256", "sha512"),
                   help="manifest algorithm; repeat for several (default: sha256 and sha512)")

    remote = argparse.ArgumentParser(add_help=False)
    g = remote.add_argument_group("remote services (tokens: $RELPUB_GITLAB_TOKEN, $RELPUB_ARCHIVE_TOKEN)")
    g.add_argument("--gitlab-url", help="GitLab base or API URL (default: $CI_API_V4_URL)")
    g.add_argument("--project-id", help="GitLab project id or path (default: $CI_PROJECT_ID)")
    g.add_argument("--package-name", help="generic package name (default: metadata title)")
    g.add_argument("--changelog", type=Path, help="file used as the release description")
    g.add_argument("--archive-url", help="archive API base URL")
    g.add_argument("--archive-adapter", help="archive protocol adapter")
    g.add_argument("--dry-run", action="store_true", default=None,
                   help="run local steps only and print the remote plan")

    parser = argparse.ArgumentParser(
        prog="relpub",
        description="Publish a tagged software release: DataCite record, GitLab release, "
                    "BagPack archive package and archive deposit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("validate", parents=[common, inputs], help="check the metadata files")
    p.add_argument("--check-assets", action="store_true", help="also resolve ASSETS.yml")

    sub.add_parser("datacite", parents=[common, inputs], help="write datacite.xml")
    sub.add_parser("bag", parents=[common, inputs, bag], help="build the BagPack directory and tar")

    p = sub.add_parser("bag-validate", parents=[common], help="validate a bag directory or tar")
    p.add_argument("bag_path", type=Path, metavar="BAG")
    p.add_argument("--plain-bagit", action="store_true", help="do not require metadata/datacite.xml")

    p = sub.add_parser("deposit", parents=[common, inputs, remote], help="create, fill and submit the archive dataset")
    p.add_argument("--wait", type=float, default=0, metavar="SECONDS",
                   help="poll until the curator publishes the dataset")

    p = sub.add_parser("sync", parents=[common], help="sync repository files into CMS pages")
    p.add_argument("--site", type=Path, help="site checkout (pages directory)")
    p.add_argument("--repo", type=Path, help="source repository checkout")
    p.add_argument("--pipeline", help="pipeline tag to match in page frontmatter")
    p.add_argument("--bibtex", type=Path, help="BibTeX file for the publication list")
    p.add_argument("--publications-page", type=Path, help="page that receives the publication list")
    p.add_argument("--dry-run", action="store_true", default=None, help="report changes without writing")

    p = sub.add_parser("release", parents=[common, inputs, bag, remote], help="run the whole release pipeline")
    p.add_argument("--skip", type=_skip_list, action="extend", default=None,
                   help=f"comma-separated jobs to skip: {', '.join(pipeline.SKIPPABLE)}")
    return parser


# Argument names that are not pipeline settings.
_NON_SETTINGS = {"command", "config", "format", "verbose", "bag_path", "plain_bagit", "wait", "check_assets"}


def load_config(args, env=None):
    flags = {k: v for k, v in vars(args).items() if k not in _NON_SETTINGS}
    workdir = flags.pop("workdir", None) or Path(".")
    config_path = args.config
    if config_path is None and (workdir / pipeline.CONFIG_FILE).is_file():
        config_path = workdir / pipeline.CONFIG_FILE
    if config_path is not None and not Path(config_path).is_file():
        raise FileNotFoundError(f"configuration file not found: {config_path}")
    flags["workdir"] = workdir
    return pipeline.resolve_config(flags, env=env, config_path=config_path)


# --- output ----------------------------------------------------------------

class Output:
    """Collects one result document; text mode prints as it goes."""

    def __init__(self, command, fmt, stream=None):
        self.command = command
        self.fmt = fmt
        self.stream = stream or sys.stdout
        self.doc = {"command": command}

    def line(self, text):
        if self.fmt == "text":
            print(text, file=self.stream)

    def set(self, **values):
        self.doc.update(values)

    def finish(self, exit_code, error=None):
        self.doc["exit_code"] = exit_code
        self.doc["ok"] = exit_code == EXIT_OK
        if error is not None:
            err = {"type": type(error).__name__, "message": str(error)}
            if getattr(error, "step", None):
                err["step"] = error.step
            self.doc["error"] = err
        if self.fmt == "json":
            json.dump(self.doc, self.stream, indent=2, sort_keys=True, default=str)
            self.stream.write("\n")
        elif error is not None:
            step = getattr(error, "step", None)
            where = f" (step {step})" if step else ""
            print(f"relpub {self.command}: error{where}: {error}", file=sys.stderr)
        return exit_code


def _print_report(out, report):
    for f in report:
        out.line(str(f))
    out.line(f"{len(report.errors)} error(s), {len(report.warnings)} warning(s)")
    out.set(findings=report.to_dict()["findings"], errors=len(report.errors),
            warnings=len(report.warnings))


def _step_printer(out):
    def show(result):
        extra = ", ".join(f"{k}={v}" for k, v in result.detail.items() if k != "files")
        out.line(f"{result.name:<9} {result.status}" + (f"  ({extra})" if extra else ""))
    return show


# --- subcommands -----------------------------------------------------------

def cmd_validate(args, out, config):
    report = ValidationReport()
    try:
        meta = load_project_metadata(config.metadata)
    except (SchemaError, ParseError) as exc:
        report.error(getattr(exc, "key", None) or str(config.metadata), str(exc))
        meta = None
    try:
        contribs = load_contributors(config.contributors)
    except (SchemaError, ParseError) as exc:
        report.error(getattr(exc, "key", None) or str(config.contributors), str(exc))
        contribs = None

    if meta is not None and contribs is not None:
        report.extend(validate_metadata(meta, contribs))
        if report.ok:
            release = pipeline.ReleaseContext(config.tag or "unreleased", datetime.date.today(),
                                              datetime.date.today())
            record = datacite.build_record(meta, contribs, release)
            report.extend(datacite.check_mandatory(record))
    if args.check_assets:
        try:
            assets = resolve_assets(config.assets, config.asset_root or Path(config.assets).parent)
            out.set(assets=len(assets))
        except SchemaError as exc:
            report.error(getattr(exc, "key", None) or str(config.assets), str(exc))
    _print_report(out, report)
    return EXIT_OK if report.ok else EXIT_FINDINGS


def cmd_datacite(args, out, config):
    inputs = pipeline.load_inputs(config)
    record, path = pipeline.make_datacite(config, inputs)
    out.line(str(path))
    out.set(path=str(path), identifier=record.identifier, version=record.version)
    return EXIT_OK


def cmd_bag(args, out, config):
    inputs = pipeline.load_inputs(config)
    _, xml_path = pipeline.make_datacite(config, inputs)
    bag, tar = pipeline.make_bag(config, inputs, xml_path)
    out.line(f"bag:  {bag.root}")
    out.line(f"tar:  {tar}")
    out.line(f"Payload-Oxum: {bag.payload_oxum}")
    out.set(bag=str(bag.root), tar=str(tar), payload_oxum=bag.payload_oxum,
            payload=list(bag.payload))
    return EXIT_OK


def _bag_root(extracted):
    entries = [p for p in Path(extracted).iterdir()]
    if len(entries) == 1 and entries[0].is_dir():
        return entries[0]
    return Path(extracted)


def cmd_bag_validate(args, out, config):
    path = args.bag_path
    if not path.exists():
        raise FileNotFoundError(f"no such bag: {path}")
    if path.is_dir():
        report = validate_bag(path, bagpack=not args.plain_bagit)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            try:
                with tarfile.open(path) as tar:
                    tar.extractall(tmp, filter="data")
            except (tarfile.TarError, OSError) as exc:
                raise ParseError(f"cannot read bag archive: {exc}", path=path) from None
            report = validate_bag(_bag_root(tmp), bagpack=not args.plain_bagit)
    _print_report(out, report)
    out.set(bag=str(path), valid=report.ok)
    return EXIT_OK if report.ok else EXIT_FINDINGS


def cmd_deposit(args, out, config):
    results = pipeline.run_deposit(config, on_step=_step_printer(out), wait=args.wait)
    out.set(steps=[r.to_dict() for r in results], dry_run=config.dry_run)
    return EXIT_OK


def cmd_sync(args, out, config):
    updated, unchanged, errors = [], [], []
    if config.site is not None:
        if config.repo is None or not config.pipeline:
            raise SchemaError("sync needs --repo and --pipeline together with --site")
        result = sync_site(config.site, config.repo, config.pipeline, dry_run=config.dry_run)
        updated += result.updated
        unchanged += result.unchanged
        errors += result.errors
    if config.bibtex is not None:
        if config.publications_page is None:
            raise SchemaError("--bibtex needs --publications-page")
        warnings = []
        entries = bibtex.parse_bibtex(config.bibtex.read_text(encoding="utf-8"), path=config.bibtex,
                                      warnings=warnings)
        for w in warnings:
            out.line(f"warning: {config.bibtex}: {w}")
        page = frontmatter.read_page(config.publications_page)
        new = frontmatter.set_data(page, bibtex.render_publications(entries))
        if new.render() != page.render():
            if not config.dry_run:
                frontmatter.write_atomic(page.path, new.render())
            updated.append(page.path)
        else:
            unchanged.append(page.path)
        out.set(publications=len(entries))
    if config.site is None and config.bibtex is None:
        raise SchemaError("nothing to sync: give --site or --bibtex")

    verb = "would update" if config.dry_run else "updated"
    for p in updated:
        out.line(f"{verb}: {p}")
    for e in errors:
        out.line(f"error: {e}")
    out.line(f"{len(updated)} {verb}, {len(unchanged)} unchanged, {len(errors)} error(s)")
    out.set(updated=[str(p) for p in updated], unchanged=[str(p) for p in unchanged],
            sync_errors=[str(e) for e in errors], dry_run=bool(config.dry_run))
    return max((e.exit_code for e in errors), default=EXIT_OK)


def cmd_release(args, out, config):
    results = pipeline.run_release(config, on_step=_step_printer(out))
    out.set(tag=config.tag, dry_run=bool(config.dry_run), steps=[r.to_dict() for r in results])
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "datacite": cmd_datacite,
    "bag": cmd_bag,
    "bag-validate": cmd_bag_validate,
    "deposit": cmd_deposit,
    "sync": cmd_sync,
    "release": cmd_release,
}


def exit_code_for(exc):
    if isinstance(exc, RelpubError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_FINDINGS
    raise exc


def main(argv=None, env=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out = Output(args.command, args.format)
    try:
        config = load_config(args, env)
        code = COMMANDS[args.command](args, out, config)
    except Exception as exc:
        code = exit_code_for(exc)
        return out.finish(code, exc)
    return out.finish(code)


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
