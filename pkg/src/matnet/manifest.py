"""Run manifest written into every output directory."""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config):
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """Collects provenance for one command and writes ``manifest.json``."""

    def __init__(self, command, config, seed, out_dir):
        self.out_dir = Path(out_dir)
        self.data = {
            "tool": "matnet",
            "version": __version__,
            "command": command,
            "config_hash": config_hash(config),
            "seed": seed,
            "inputs": {},
            "outputs": {},
            "stages": {},
            "started": _now(),
            "finished": None,
        }

    def add_input(self, path):
        path = Path(path)
        if path.is_file():
            self.data["inputs"][str(path)] = file_hash(path)

    def stage(self, name, status):
        self.data["stages"][name] = status

    def finish(self, status="ok"):
        for p in sorted(self.out_dir.iterdir()):
            if p.is_file() and p.name != MANIFEST_NAME:
                self.data["outputs"][p.name] = file_hash(p)
        self.data["status"] = status
        self.data["finished"] = _now()
        (self.out_dir / MANIFEST_NAME).write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
