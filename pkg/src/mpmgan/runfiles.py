"""Run-directory bookkeeping: content manifest and the advisory lock."""

from __future__ import annotations

import contextlib
import hashlib
import json
from pathlib import Path

from filelock import FileLock, Timeout

MANIFEST_NAME = "run_manifest.json"
LOCK_NAME = ".mpmgan.lock"
_SKIP = {MANIFEST_NAME, LOCK_NAME}


class RunBusy(RuntimeError):
    pass


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(run_dir: str | Path) -> Path:
    run_dir = Path(run_dir)
    files = sorted(p for p in run_dir.rglob("*") if p.is_file() and p.name not in _SKIP)
    entries = [{"path": p.relative_to(run_dir).as_posix(), "sha256": sha256_file(p), "bytes": p.stat().st_size}
               for p in files]
    out = run_dir / MANIFEST_NAME
    out.write_text(json.dumps({"files": entries}, indent=2) + "\n", encoding="utf-8")
    return out


@contextlib.contextmanager
def run_lock(run_dir: str | Path):
    """Non-blocking advisory lock on a run directory; raises :class:`RunBusy` when held elsewhere."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(run_dir / LOCK_NAME))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise RunBusy(f"run directory busy: another mpmgan command holds {run_dir}") from None
    try:
        yield run_dir
    finally:
        lock.release()
