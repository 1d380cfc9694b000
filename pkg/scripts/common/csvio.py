#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import csv
import json
import math
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

ARTIFACT = "torus-flow-lab"
VERSION = "0.1.0"


def ensure_dir(path: str) -> None:
    if path:
        os.makedirs(path, exist_ok=True)


def artifact_meta(config_hash: Optional[str] = None, **extra: Any) -> Dict[str, Any]:
    meta = {"artifact": ARTIFACT, "version": VERSION, "config_hash": config_hash or "none"}
    meta.update(extra)
    return meta


def _meta_lines(meta: Optional[Dict[str, Any]]) -> List[str]:
    meta = meta or artifact_meta()
    return [f"# {k}={meta[k]}" for k in meta]


def write_csv(path: str, rows: List[Dict], field_order: Sequence[str], meta: Optional[Dict[str, Any]] = None) -> None:
    """CSV with a leading '# key=value' metadata block; numbers are written with repr()."""
    ensure_dir(os.path.dirname(path))
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in _meta_lines(meta):
            f.write(line + "\n")
        w = csv.DictWriter(f, fieldnames=list(field_order), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _plain(v) for k, v in r.items()})


def write_rows(path: str, rows: List[Dict], meta: Optional[Dict[str, Any]] = None) -> None:
    """
    Convenience writer that infers field order from the rows (in encounter order).
    """
    field_order: List[str] = []
    for row in rows:
        for key in row.keys():
            if key not in field_order:
                field_order.append(key)
    write_csv(path, rows, field_order, meta=meta)


def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def read_meta(path: str) -> Dict[str, str]:
    meta: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
    return meta


# ---------- JSON ----------
def _plain(value: Any) -> Any:
    """numpy scalars/arrays to builtins; non-finite floats to None (strict JSON)."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(path: str, payload: Dict[str, Any], meta: Optional[Dict[str, Any]] = None) -> None:
    ensure_dir(os.path.dirname(path))
    doc = dict(_plain(payload))
    doc["meta"] = meta or artifact_meta()
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, indent=2, allow_nan=False)
        f.write("\n")


def write_jsonl(path: str, rows: List[Dict], meta: Optional[Dict[str, Any]] = None) -> None:
    """One JSON object per line; the first line is {"meta": ...}."""
    ensure_dir(os.path.dirname(path))
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"meta": meta or artifact_meta()}, sort_keys=True) + "\n")
        for r in rows:
            f.write(json.dumps(_plain(r), sort_keys=True, allow_nan=False) + "\n")


def read_json(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
