"""On-disk formats: CSV tables, model checkpoints and run manifests.

CSV: comma separated, one header row, '.' decimal, UTF-8, LF endings. Floats
are written with ``repr`` so re-parsing yields the identical float.

Checkpoint (``.ckpt``), little-endian::

    magic   8 bytes  b"SAMLABCK"
    version u32      CHECKPOINT_VERSION
    meta    u32 length + UTF-8 JSON (model spec, dataset spec, run facts)
    params  u64 count + count float64 values
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .data import DatasetSpec
from .errors import ConfigError
from .models import ModelSpec
from .training import MetricRow, TrainedModel

CHECKPOINT_MAGIC = b"SAMLABCK"
CHECKPOINT_VERSION = 1


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([str(x) for x in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def parse_cell(text: str):
    """Inverse of the CSV cell formatting: int, float, ``undef`` -> None, else str."""
    if text == "undef":
        return None
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def write_report(path: str | Path, report) -> Path:
    return write_csv(path, report.header(), report.rows())


# -- metrics ----------------------------------------------------------------

METRIC_HEADER = ["epoch", "split", "loss", "accuracy"]


def write_metrics(path: str | Path, rows: Sequence[MetricRow]) -> Path:
    return write_csv(path, METRIC_HEADER, ([r.epoch, r.split, repr(r.loss), repr(r.accuracy)] for r in rows))


def read_metrics(path: str | Path) -> list[MetricRow]:
    header, rows = read_csv(path)
    if header != METRIC_HEADER:
        raise ConfigError(f"{path}: not a metrics file")
    return [MetricRow(int(e), s, float(l), float(a)) for e, s, l, a in rows]


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(path: str | Path, tm: TrainedModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "model": tm.spec.to_dict(),
        "dataset": tm.dataset_spec.to_dict(),
        "batch_size": tm.batch_size,
        "seed": tm.seed,
        "method": tm.method,
        "probe_batch_loss": tm.probe_batch_loss,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    params = np.ascontiguousarray(tm.params, dtype="<f8")
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", params.size))
        fh.write(params.tobytes())
    return path


def load_checkpoint(path: str | Path) -> TrainedModel:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: not a samlab checkpoint")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    (mlen,) = struct.unpack_from("<I", data, 12)
    meta = json.loads(data[16:16 + mlen].decode("utf-8"))
    off = 16 + mlen
    (count,) = struct.unpack_from("<Q", data, off)
    params = np.frombuffer(data, dtype="<f8", count=count, offset=off + 8).astype(np.float64)
    spec = ModelSpec.from_dict(meta["model"])
    if params.size != spec.num_params:
        raise ConfigError(f"{path}: parameter count {params.size} does not match model ({spec.num_params})")
    return TrainedModel(
        spec=spec,
        params=params,
        dataset_spec=DatasetSpec(**meta["dataset"]),
        batch_size=int(meta["batch_size"]),
        seed=int(meta["seed"]),
        method=meta["method"],
        probe_batch_loss=float(meta["probe_batch_loss"]),
    )


# -- manifest -----------------------------------------------------------------

def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Manifest:
    command: str
    config_hash: str
    summaries: dict
    files: list[str]


def write_manifest(directory: str | Path, command: str, config_hash: str, summaries: dict,
                   files: Iterable[str | Path]) -> Path:
    """Write ``manifest.json`` listing each file (relative to ``directory``) with its sha256."""
    directory = Path(directory)
    inventory = []
    for f in sorted({Path(f).resolve() for f in files}):
        inventory.append({
            "path": f.relative_to(directory.resolve()).as_posix(),
            "sha256": sha256_file(f),
            "bytes": f.stat().st_size,
        })
    doc = {
        "tool": "samlab",
        "tool_version": __version__,
        "command": command,
        "config_hash": config_hash,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "summaries": summaries,
        "files": inventory,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def verify_manifest(directory: str | Path) -> list[str]:
    """Paths whose checksum no longer matches (empty when everything validates)."""
    directory = Path(directory)
    doc = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    bad = []
    for entry in doc["files"]:
        p = directory / entry["path"]
        if not p.exists() or sha256_file(p) != entry["sha256"]:
            bad.append(entry["path"])
    return bad
