"""Artifact persistence: atomic writes, fingerprints and lineage.

Every pipeline artifact is written atomically (temp file then rename)
and carries lineage: the hash of the configuration that produced it
plus the fingerprints of its upstream artifacts. JSON artifacts embed
lineage inline under a "lineage" key; CSV artifacts keep the bare
tabular schema and carry lineage in a sidecar `<name>.meta.json`.
Downstream commands refuse inputs whose recorded fingerprints do not
match the bytes on disk.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def config_hash(config: dict) -> str:
    return sha256_bytes(json.dumps(config, sort_keys=True).encode("utf-8"))


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_artifact(path, payload: dict, lineage: dict) -> None:
    doc = dict(payload)
    doc["lineage"] = lineage
    atomic_write_text(path, json.dumps(doc, sort_keys=True, indent=1))


def read_json_artifact(path) -> tuple[dict, dict]:
    doc = json.loads(Path(path).read_text())
    lineage = doc.pop("lineage", {})
    return doc, lineage


def meta_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_csv_meta(path, lineage: dict) -> None:
    atomic_write_text(meta_path(path), json.dumps(lineage, sort_keys=True, indent=1))


def read_csv_meta(path) -> dict:
    p = meta_path(path)
    if not p.exists():
        return {}
    return json.loads(p.read_text())


class LineageError(RuntimeError):
    pass


def check_upstream(lineage: dict, name: str, path) -> None:
    """Verify that a recorded upstream fingerprint matches the file."""
    recorded = lineage.get("upstream", {}).get(name)
    if recorded is None:
        raise LineageError(f"artifact lineage lacks an entry for {name!r}")
    actual = sha256_file(path)
    if actual != recorded:
        raise LineageError(
            f"fingerprint mismatch for {name}: recorded {recorded[:12]}..., "
            f"file is {actual[:12]}..."
        )


def make_lineage(cfg: dict, upstream: dict[str, str] | None = None) -> dict:
    return {"config_hash": config_hash(cfg), "upstream": upstream or {}}
