"""Deterministic artifact I/O: headers, JSON / JSON-Lines files, seeded substreams.

Every file this package writes embeds a header with the tool version, a hash
of the producing configuration, and the seed, so reruns can be verified
byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Any, Iterable

import numpy as np

from . import __version__


def config_hash(config: dict) -> str:
    """Stable 16-hex-digit digest of a JSON-serializable config dict."""
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def make_header(seed: int, config: dict | None = None) -> dict:
    header = {
        "tool_version": __version__,
        "config_hash": config_hash(config or {}),
        "seed": seed,
    }
    if config:
        header["config"] = config
    return header


def dumps_record(record: dict) -> str:
    # Insertion order is kept on purpose so files follow the documented schema.
    return json.dumps(record, ensure_ascii=True)


def write_jsonl(path: str, header: dict, records: Iterable[dict]) -> None:
    """Write a JSON-Lines file whose first line is {"header": ...}."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_record({"header": header}) + "\n")
        for rec in records:
            f.write(dumps_record(rec) + "\n")


def read_jsonl(path: str) -> tuple[dict, list[dict]]:
    """Read a JSON-Lines file written by write_jsonl; returns (header, records)."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise ValueError(f"empty dataset file: {path}")
    first = json.loads(lines[0])
    if "header" in first and len(first) == 1:
        return first["header"], [json.loads(line) for line in lines[1:]]
    return {}, [json.loads(line) for line in lines]


def write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, ensure_ascii=True, indent=2)
        f.write("\n")


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def index_hash(index: int, mod: int = 100) -> int:
    """Platform-stable bucket for dataset splitting (unsalted, unlike hash())."""
    digest = hashlib.sha256(str(index).encode("ascii")).hexdigest()
    return int(digest[:8], 16) % mod


def derived_rng(seed: int, *tags: object) -> np.random.Generator:
    """Independent RNG stream keyed by (seed, *tags).

    Streams depend only on the key, never on draw order elsewhere, so
    per-record work can run in any order (or in parallel) without changing
    results.
    """
    material = ":".join([str(seed)] + [str(t) for t in tags])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
