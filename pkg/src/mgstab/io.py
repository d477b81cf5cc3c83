"""CSV output with provenance comments and full-precision numbers."""

from __future__ import annotations

import csv
from pathlib import Path

from . import __version__


def fmt(value):
    if isinstance(value, (bool, str)):
        return str(value)
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".17g")


def provenance(digest=None):
    line = f"mgstab {__version__}"
    if digest:
        line += f" config={digest}"
    return [line]


def write_csv(path, header, rows, comments=(), footer=()):
    """Write ``rows`` under a ``#``-prefixed comment block.

    Numbers are written with 17 significant digits so files round-trip
    exactly and reruns are byte-identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
        for c in footer:
            fh.write(f"# {c}\n")
    return path


def read_csv(path):
    """Return (comments, header, rows-as-strings) of a file written by ``write_csv``."""
    comments, data = [], []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            else:
                data.append(line)
    rows = list(csv.reader(data))
    return comments, (rows[0] if rows else []), rows[1:]
