"""Run manifest: stage completion flags, artifact checksums, and the run lock.

The manifest gates stage order (a stage may only run once every prior stage
has completed against the same config) and records artifact digests so a
downstream stage fails fast when an upstream artifact was edited or replaced
out of band.
"""

from __future__ import annotations

import hashlib
import json
import os
from contextlib import contextmanager
from pathlib import Path

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
LOCK_NAME = ".graffmap.lock"

STAGES = ("sampled", "fetched", "detected", "scored", "aggregated", "rendered")


class StageOrderViolation(RuntimeError):
    """A stage ran before its prerequisites, or against changed inputs."""


class ManifestLocked(RuntimeError):
    """Another command holds the output directory lock."""


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    def __init__(self, output_dir: str | Path, config_hash: str) -> None:
        self.output_dir = Path(output_dir)
        self.config_hash = config_hash
        self.stages: dict[str, bool] = {s: False for s in STAGES}
        self.checksums: dict[str, dict[str, str]] = {}

    @property
    def path(self) -> Path:
        return self.output_dir / MANIFEST_NAME

    # -- persistence --------------------------------------------------------

    @classmethod
    def load_or_create(cls, output_dir: str | Path, config_hash: str) -> "RunManifest":
        manifest = cls(output_dir, config_hash)
        if manifest.path.exists():
            doc = json.loads(manifest.path.read_text(encoding="utf-8"))
            if doc.get("manifest_version") != MANIFEST_VERSION:
                raise StageOrderViolation(f"unknown manifest version in {manifest.path}")
            manifest.config_hash = doc.get("config_hash", config_hash)
            for s in STAGES:
                manifest.stages[s] = bool(doc.get("stages", {}).get(s, False))
            manifest.checksums = doc.get("checksums", {})
            manifest._check_monotonic()
        return manifest

    def save(self) -> None:
        doc = {
            "manifest_version": MANIFEST_VERSION,
            "config_hash": self.config_hash,
            "stages": {s: self.stages[s] for s in STAGES},
            "checksums": self.checksums,
        }
        self.path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

    def _check_monotonic(self) -> None:
        seen_false = False
        for s in STAGES:
            if self.stages[s] and seen_false:
                raise StageOrderViolation(f"manifest corrupt: stage '{s}' set after an unset stage")
            if not self.stages[s]:
                seen_false = True

    # -- stage gating -------------------------------------------------------

    def require_stage(self, stage: str, current_config_hash: str) -> None:
        """Gate `stage`: prerequisites done, same config, artifacts untouched."""
        idx = STAGES.index(stage)
        for prior in STAGES[:idx]:
            if not self.stages[prior]:
                raise StageOrderViolation(
                    f"{stage}: stage '{prior}' has not completed; run 'graffmap {COMMAND_FOR_STAGE[prior]}' first"
                )
        if any(self.stages[s] for s in STAGES) and self.config_hash != current_config_hash:
            raise StageOrderViolation(
                f"{stage}: configuration changed since earlier stages ran (use --force to redo them)"
            )
        for prior in STAGES[:idx]:
            for rel, digest in self.checksums.get(prior, {}).items():
                path = self.output_dir / rel
                if not path.exists():
                    raise StageOrderViolation(f"{stage}: artifact {rel} from stage '{prior}' is missing")
                if _sha256_file(path) != digest:
                    raise StageOrderViolation(
                        f"{stage}: artifact {rel} changed since stage '{prior}' ran (use --force)"
                    )

    def complete_stage(self, stage: str, artifacts: list[Path]) -> None:
        """Mark `stage` done, recording digests of its artifacts (relative paths)."""
        self.stages[stage] = True
        self.checksums[stage] = {
            str(p.relative_to(self.output_dir)): _sha256_file(p) for p in artifacts
        }
        self.save()

    def clear_from(self, stage: str) -> None:
        """--force: clear this stage and everything downstream."""
        idx = STAGES.index(stage)
        for s in STAGES[idx:]:
            self.stages[s] = False
            self.checksums.pop(s, None)
        self.save()


COMMAND_FOR_STAGE = {
    "sampled": "sample",
    "fetched": "fetch",
    "detected": "detect",
    "scored": "score",
    "aggregated": "aggregate",
    "rendered": "render",
}

STAGE_FOR_COMMAND = {v: k for k, v in COMMAND_FOR_STAGE.items()}


@contextmanager
def run_lock(output_dir: str | Path):
    """Exclusive lock file; commands must not share an output directory."""
    lock_path = Path(output_dir) / LOCK_NAME
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ManifestLocked(
            f"another command holds {lock_path} (remove it if the previous run crashed)"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        try:
            lock_path.unlink()
        except FileNotFoundError:
            pass
