"""Run the mock GitLab and archive servers until interrupted."""

import argparse
import threading

from .archive import MockArchive
from .gitlab import MockGitLab


def main(argv=None):
    parser = argparse.ArgumentParser(prog="python -m relpub.mocks", description=__doc__)
    parser.add_argument("--gitlab-port", type=int, default=8081)
    parser.add_argument("--archive-port", type=int, default=8082)
    parser.add_argument("--project-id", default="1")
    parser.add_argument("--tag", action="append", default=[], help="tag known to the mock GitLab")
    parser.add_argument("--gitlab-token", default="gitlab-test-token")
    parser.add_argument("--archive-token", default="archive-test-token")
    args = parser.parse_args(argv)

    gitlab = MockGitLab(token=args.gitlab_token, project_id=args.project_id, tags=args.tag,
                        port=args.gitlab_port).start()
    archive = MockArchive(token=args.archive_token, port=args.archive_port).start()
    print(f"mock GitLab:  {gitlab.url}  (project {args.project_id}, tags {args.tag})")
    print(f"mock archive: {archive.url}")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        gitlab.stop()
        archive.stop()


if __name__ == "__main__":
    main()
