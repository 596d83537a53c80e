"""File-backed persistence: an append-only event log plus a content-addressed
image store. Every acknowledged write is fsynced so a kill -9 after the ack
never loses it."""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path
from typing import Iterator, Optional


class EventLog:
    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._handle = open(self.path, "a", encoding="utf-8")

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, separators=(",", ":"))
        with self._lock:
            self._handle.write(line + "\n")
            self._handle.flush()
            os.fsync(self._handle.fileno())

    def replay(self) -> Iterator[dict]:
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line:
                    yield json.loads(line)

    def close(self) -> None:
        with self._lock:
            self._handle.close()


class ImageStore:
    """Raw bytes keyed by content digest."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def digest(blob: bytes) -> str:
        return hashlib.sha256(blob).hexdigest()

    def put(self, blob: bytes) -> str:
        ref = self.digest(blob)
        path = self.root / ref
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            with open(tmp, "wb") as handle:
                handle.write(blob)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp, path)
        return ref

    def get(self, ref: str) -> Optional[bytes]:
        path = self.root / ref
        if not path.exists():
            return None
        return path.read_bytes()


class MemoryImageStore:
    """In-memory variant for embedded runs with no data directory."""

    def __init__(self):
        self._blobs: dict[str, bytes] = {}

    @staticmethod
    def digest(blob: bytes) -> str:
        return hashlib.sha256(blob).hexdigest()

    def put(self, blob: bytes) -> str:
        ref = self.digest(blob)
        self._blobs[ref] = blob
        return ref

    def get(self, ref: str) -> Optional[bytes]:
        return self._blobs.get(ref)
