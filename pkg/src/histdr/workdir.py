"""Work directory bookkeeping: artifact hashes, staleness checks and the lock.

``manifest.json`` maps each stage to the config hash it ran with and the
sha256 of every input and output file. A stage refuses to consume an
artifact whose bytes no longer match what its producer recorded, or whose
producer ran under a different configuration.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional

from filelock import FileLock, Timeout

from .errors import HistdrError, MissingArtifactError, StaleArtifactError

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
LOCK = ".histdr.lock"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class WorkDir:
    def __init__(self, root, force: bool = False):
        self.root = Path(root)
        self.force = force
        self._lock: Optional[FileLock] = None

    # locking ------------------------------------------------------------------

    def __enter__(self) -> "WorkDir":
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.root / LOCK))
        try:
            self._lock.acquire(timeout=0)
        except Timeout:
            raise HistdrError(f"{self.root} is locked by another histdr process") from None
        return self

    def __exit__(self, *exc):
        if self._lock is not None:
            self._lock.release()
            self._lock = None

    # manifest -----------------------------------------------------------------

    def path(self, name: str) -> Path:
        return self.root / name

    def manifest(self) -> dict:
        p = self.path(MANIFEST)
        if not p.exists():
            return {}
        return json.loads(p.read_text(encoding="utf-8"))

    def _save(self, manifest: dict) -> None:
        tmp = self.path(MANIFEST + ".tmp")
        tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(self.path(MANIFEST))

    def producer(self, artifact: str) -> Optional[str]:
        for stage, entry in self.manifest().items():
            if artifact in entry.get("outputs", {}):
                return stage
        return None

    def require(self, names: Iterable[str], expected_config: Mapping[str, str]) -> Dict[str, Path]:
        """Check that artifacts exist and are current. ``expected_config`` maps
        a stage name to the config hash it should have run with now."""
        manifest = self.manifest()
        out = {}
        for name in names:
            p = self.path(name)
            stage = next((s for s, e in manifest.items() if name in e.get("outputs", {})), None)
            if not p.exists():
                hint = f"; run `histdr {stage}` first" if stage else ""
                raise MissingArtifactError(f"missing artifact {p}{hint}")
            if stage is not None:
                entry = manifest[stage]
                problems = []
                if entry["outputs"][name] != file_sha256(p):
                    problems.append(f"{name} was modified after `{stage}` wrote it")
                want = expected_config.get(stage)
                if want is not None and entry.get("config_hash") != want:
                    problems.append(f"`{stage}` ran with a different configuration")
                if problems:
                    msg = "; ".join(problems) + f"; re-run `histdr {stage}` or pass --force"
                    if not self.force:
                        raise StaleArtifactError(msg)
                    log.warning("stale artifact accepted (--force): %s", msg)
            out[name] = p
        return out

    def up_to_date(self, stage: str, config_hash: str, inputs: Mapping[str, Path]) -> bool:
        entry = self.manifest().get(stage)
        if entry is None or self.force or entry.get("config_hash") != config_hash:
            return False
        if entry.get("inputs") != {k: file_sha256(v) for k, v in inputs.items()}:
            return False
        for name, digest in entry.get("outputs", {}).items():
            p = self.path(name)
            if not p.exists() or file_sha256(p) != digest:
                return False
        return True

    def record(self, stage: str, config_hash: str, inputs: Mapping[str, Path],
               outputs: Iterable[str]) -> None:
        manifest = self.manifest()
        manifest[stage] = {
            "config_hash": config_hash,
            "inputs": {k: file_sha256(v) for k, v in sorted(inputs.items())},
            "outputs": {name: file_sha256(self.path(name)) for name in sorted(outputs)},
        }
        self._save(manifest)
