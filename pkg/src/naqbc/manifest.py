"""Run manifests: atomic JSON records with checksums of every emitted file."""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import tempfile
from typing import Optional


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory and ``os.replace``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir, config_ini: str, seeds, trials, files, started: str,
                   finished: Optional[str] = None, command: str = "run") -> str:
    """Write ``manifest.json`` in ``out_dir`` and return its path.

    ``files`` are paths relative to ``out_dir``; each is listed with its
    SHA-256 digest.
    """
    from . import __version__

    manifest = {
        "command": command,
        "software": {"name": "naqbc", "version": __version__},
        "config": config_ini,
        "seeds": list(seeds),
        "started": started,
        "finished": finished or utc_now(),
        "trials": list(trials),
        "files": {name: sha256_file(os.path.join(out_dir, name)) for name in sorted(files)},
    }
    path = os.path.join(out_dir, "manifest.json")
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    for key in ("config", "files", "trials"):
        if key not in data:
            raise ValueError(f"{path}: manifest lacks {key!r}")
    return data


def verify_manifest(path) -> dict:
    """Map each listed file to ``True`` when its checksum still matches."""
    data = read_manifest(path)
    base = os.path.dirname(os.path.abspath(path))
    out = {}
    for name, digest in data["files"].items():
        full = os.path.join(base, name)
        out[name] = os.path.exists(full) and sha256_file(full) == digest
    return out
