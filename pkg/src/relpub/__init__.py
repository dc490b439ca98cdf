"""Release publishing for research software.

Turns a tagged release plus ``METADATA.yml``, ``CONTRIBUTORS.yml`` and
``ASSETS.yml`` into a DataCite 4.3 record, a BagPack preservation package,
a GitLab release and an archive deposit, and keeps website pages in sync
with repository files.
"""

__version__ = "0.1.0"
