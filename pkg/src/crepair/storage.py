"""Versioned file helpers: every artifact starts with a format_version field."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from contextlib import contextmanager

from .errors import FormatVersionError

FORMAT_VERSION = 1


def check_header(header: dict, expected_kind: str | None = None) -> None:
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(version, FORMAT_VERSION)
    if expected_kind is not None and header.get("kind") not in (None, expected_kind):
        raise FormatVersionError(header.get("kind"), expected_kind)


def write_json(path, payload: dict, kind: str | None = None) -> None:
    doc = {"format_version": FORMAT_VERSION}
    if kind is not None:
        doc["kind"] = kind
    doc.update(payload)
    with atomic_write(path) as fh:
        json.dump(doc, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def read_json(path, kind: str | None = None) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    check_header(doc, kind)
    return doc


@contextmanager
def atomic_write(path, mode: str = "w"):
    """Write to a temp file and rename, so aborts never leave partial output."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def derive_seed(root_seed: int, *names) -> int:
    """Named sub-stream derivation: all randomness flows from one root seed."""
    material = ":".join([str(root_seed)] + [str(n) for n in names])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
