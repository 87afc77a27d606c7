"""Snapshot retrieval with a content-addressed cache.

Every payload is persisted under its sha256 before any parsing happens;
a manifest maps (source, origin, hash) so that pipeline runs are
reproducible from cached bytes alone.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import httpx

from ..errors import FetchError
from ..model import SourceId


@dataclass(frozen=True)
class RawSnapshot:
    source: SourceId
    retrieved_at: str  # ISO timestamp
    payload: bytes
    origin: str

    def __post_init__(self):
        if not self.payload:
            raise FetchError(f"empty payload from {self.origin}")

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.payload).hexdigest()


def _is_url(endpoint: str) -> bool:
    return endpoint.startswith(("http://", "https://"))


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def cache_snapshot(snapshot: RawSnapshot, cache_dir) -> str:
    """Store the payload under its hash; returns the hash."""
    cache = Path(cache_dir)
    blobs = cache / "blobs"
    blobs.mkdir(parents=True, exist_ok=True)
    digest = snapshot.sha256
    blob = blobs / f"{digest}.bin"
    if not blob.exists():
        _atomic_write(blob, snapshot.payload)
    manifest_path = cache / "manifest.json"
    manifest = {"entries": []}
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
    known = {(e["source"], e["origin"], e["sha256"]) for e in manifest["entries"]}
    if (snapshot.source.value, snapshot.origin, digest) not in known:
        manifest["entries"].append({
            "source": snapshot.source.value,
            "origin": snapshot.origin,
            "sha256": digest,
            "retrieved_at": snapshot.retrieved_at,
            "size": len(snapshot.payload),
        })
        _atomic_write(manifest_path, json.dumps(manifest, indent=1).encode())
    return digest


def fetch_source(source: SourceId, endpoint: str, *, offline: bool = False,
                 cache_dir=None, timeout: float = 30.0) -> RawSnapshot:
    """Read one source's payload from a URL or a local fixture path.

    Offline mode refuses URLs outright.  Network trouble is retryable;
    HTTP non-success is permanent and carries the status code.
    """
    retrieved_at = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
    if _is_url(endpoint):
        if offline:
            raise FetchError(f"offline: refusing to fetch {endpoint}", retryable=False)
        try:
            response = httpx.get(endpoint, timeout=timeout, follow_redirects=True)
        except httpx.HTTPError as exc:
            raise FetchError(f"network failure fetching {endpoint}: {exc}",
                             retryable=True) from exc
        if response.status_code != 200:
            raise FetchError(f"HTTP {response.status_code} from {endpoint}",
                             retryable=False, status=response.status_code)
        payload = response.content
    else:
        path = Path(endpoint)
        if not path.exists():
            raise FetchError(f"fixture path does not exist: {endpoint}", retryable=False)
        payload = path.read_bytes()
    snapshot = RawSnapshot(source=source, retrieved_at=retrieved_at,
                           payload=payload, origin=endpoint)
    if cache_dir is not None:
        cache_snapshot(snapshot, cache_dir)
    return snapshot
