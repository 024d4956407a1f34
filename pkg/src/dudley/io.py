"""Deterministic CSV and JSON writers.

Floats are written with ``repr`` so the bytes depend only on the values.
Every file carries the seed and the config digest: CSV files as leading
columns, JSON reports as top-level keys.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        # JSON has no inf/nan literals
        return x if math.isfinite(x) else repr(x)
    return x


def config_digest(cfg: dict) -> str:
    blob = json.dumps(_plain(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence], seed: int, digest: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["seed", "config_digest", *header])
    for r in rows:
        w.writerow([str(seed), digest, *(_cell(v) for v in r)])
    return buf.getvalue()


def write_csv(path, header, rows, seed: int, digest: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(header, rows, seed, digest))
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def report_text(payload: dict, seed: int, digest: str, config: dict | None = None) -> str:
    doc = {"version": __version__, "seed": seed, "config_digest": digest}
    if config is not None:
        doc["config"] = config
    doc["result"] = payload
    return json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n"


def write_json(path, payload: dict, seed: int, digest: str, config: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report_text(payload, seed, digest, config))
    return path
