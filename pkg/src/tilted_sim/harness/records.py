"""Append-only JSON-lines result records.

Each line is one independently parseable record; timestamps are stored but
excluded from anything used for reproducibility comparisons.
"""
from __future__ import annotations

import json
import subprocess
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .. import __version__


def code_version() -> str:
    """Package version, with the git commit appended when available."""
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).parent)
        if out.returncode == 0:
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


@dataclass(frozen=True)
class ResultRecord:
    experiment_id: str
    config_hash: str
    code_version: str
    timestamp: str
    metric: str
    value: float | None
    se: float | None = None
    metadata: dict = field(default_factory=dict)

    @classmethod
    def make(cls, experiment_id: str, config_hash: str, metric: str,
             value, se=None, **metadata) -> "ResultRecord":
        val = None if value is None else float(value)
        return cls(experiment_id=experiment_id, config_hash=config_hash,
                   code_version=code_version(),
                   timestamp=datetime.now(timezone.utc).isoformat(),
                   metric=metric, value=val,
                   se=None if se is None else float(se),
                   metadata=_jsonable(metadata))


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):  # numpy scalar
        return value.item()
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def write_records(path: str | Path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
    return path


def read_records(path: str | Path) -> list[ResultRecord]:
    out = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            out.append(ResultRecord(**data))
    return out
