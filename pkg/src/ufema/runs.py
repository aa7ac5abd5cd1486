"""Run directories: location, locking and the manifest of produced files."""
from __future__ import annotations

import contextlib
import hashlib
import json
import os
import subprocess
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .config import ExperimentConfig
from .errors import UfemaError


class RunLockedError(UfemaError):
    """Another process is writing to the same run directory."""


def data_dir() -> Path:
    return Path(os.environ.get("UFEMA_DATA_DIR", "data"))


def runs_dir() -> Path:
    return Path(os.environ.get("UFEMA_RUNS_DIR", "runs"))


def artifact_key(config: ExperimentConfig) -> str:
    """Hash of the config keys that determine enhancers and the pretrained encoder."""
    from .training import _ARTIFACT_KEYS

    blob = json.dumps({k: getattr(config, k) for k in _ARTIFACT_KEYS}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def artifact_dir(config: ExperimentConfig) -> Path:
    return data_dir() / f"artifacts-{artifact_key(config)}"


def source_revision() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=here, capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"ufema-{__version__}"


@contextlib.contextmanager
def run_lock(directory):
    """Exclusive lock on a run directory via an O_EXCL lock file."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lock = d / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        holder = lock.read_text().strip() if lock.exists() else "?"
        raise RunLockedError(f"{d} is locked by pid {holder}; remove {lock} if that process is gone") from None
    with os.fdopen(fd, "w") as f:
        f.write(str(os.getpid()))
    try:
        yield d
    finally:
        lock.unlink(missing_ok=True)


@dataclass
class RunManifest:
    run_id: str
    config_hash: str
    source_revision: str
    seeds: dict
    stages: dict = field(default_factory=dict)  # stage -> {"artifacts": [...], "seconds": float}

    @classmethod
    def for_config(cls, run_id: str, config: ExperimentConfig) -> "RunManifest":
        return cls(run_id, config.hash(), source_revision(),
                   {"seed": config.seed, "corpus_seed": config.corpus_seed})

    def record(self, stage: str, artifacts, seconds: float) -> None:
        entry = self.stages.setdefault(stage, {"artifacts": [], "seconds": 0.0})
        for a in artifacts:
            if str(a) not in entry["artifacts"]:
                entry["artifacts"].append(str(a))
        entry["seconds"] = round(entry["seconds"] + seconds, 3)

    @contextlib.contextmanager
    def stage(self, name: str):
        produced: list = []
        t0 = time.perf_counter()
        yield produced
        self.record(name, produced, time.perf_counter() - t0)

    def files(self) -> list:
        return [a for s in self.stages.values() for a in s["artifacts"]]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))
