"""Run manifests: content digests for inputs and outputs of every stage."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_tree(path: str | Path) -> str:
    """Digest of a file, or of a directory's files keyed by relative path."""
    path = Path(path)
    if path.is_file():
        return sha256_file(path)
    digest = hashlib.sha256()
    for sub in sorted(p for p in path.rglob("*") if p.is_file()):
        digest.update(str(sub.relative_to(path)).encode("utf-8"))
        digest.update(bytes.fromhex(sha256_file(sub)))
    return digest.hexdigest()


@dataclass
class RunManifest:
    stage: str
    command: str
    config_hash: str
    seed: int
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    version: str = ""
    duration_s: float = 0.0

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "version": self.version,
            "duration_s": self.duration_s,
        }

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, ensure_ascii=False, indent=2)
            fh.write("\n")
