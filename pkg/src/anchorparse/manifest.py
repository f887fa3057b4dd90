"""Run manifests: everything needed to replay a CLI invocation."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List

from . import __version__
from .errors import CorpusError

MANIFEST_NAME = "run_manifest.json"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    subcommand: str
    argv: List[str]
    config: Dict[str, Any]
    seeds: Dict[str, int] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    version: str = __version__
    started_at: str = field(default_factory=_now)
    finished_at: str | None = None

    def finish(self) -> None:
        self.finished_at = _now()

    def write(self, out_dir: Path) -> Path:
        """Atomically write `run_manifest.json` into `out_dir`."""

        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / MANIFEST_NAME
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, path)
        return path


def load_manifest(path: Path) -> RunManifest:
    if not path.exists():
        raise FileNotFoundError(f"manifest {path} does not exist")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return RunManifest(**data)
    except (json.JSONDecodeError, TypeError) as exc:
        raise CorpusError(f"{path}: not a run manifest ({exc})") from exc
