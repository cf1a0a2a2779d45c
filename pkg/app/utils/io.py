"""
Output Writers
Atomic file writes, input digests and the run manifest
"""

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

MANIFEST_NAME = 'manifest.json'


class RunManifest(BaseModel):
    """What a command read, what it wrote and how long it took"""

    command: str
    config: Dict[str, Any] = Field(default_factory=dict)
    input_file: Optional[str] = None
    input_sha256: Optional[str] = None
    seed: Optional[int] = None
    outputs: List[str] = Field(default_factory=list)
    exit_code: int = 0
    duration_seconds: float = 0.0


def write_text_atomic(path, text: str) -> Path:
    """Write through a temp file in the target directory, then rename over the target"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(handle, 'w', encoding='utf-8', newline='') as stream:
            stream.write(text)
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise
    return path


def write_frame(path, frame: pd.DataFrame, index: bool = False) -> Path:
    return write_text_atomic(path, frame.to_csv(index=index, lineterminator='\n'))


def to_jsonable(value):
    """Plain JSON types; non-finite floats become null"""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path, document) -> Path:
    text = json.dumps(to_jsonable(document), indent=2, sort_keys=True, ensure_ascii=False)
    return write_text_atomic(path, text + '\n')


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(65536), b''):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(out_dir, manifest: RunManifest) -> Path:
    """Write manifest.json listing every output relative to out_dir"""
    return write_json(Path(out_dir) / MANIFEST_NAME, manifest.model_dump())


class OutputDirectory:
    """Writes command outputs under one directory and remembers their names"""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.names: List[str] = []

    def path(self, name: str) -> Path:
        return self.root / name

    def _track(self, name: str) -> Path:
        if name not in self.names:
            self.names.append(name)
        return self.path(name)

    def frame(self, name: str, frame: pd.DataFrame, index: bool = False) -> Path:
        return write_frame(self._track(name), frame, index=index)

    def json(self, name: str, document) -> Path:
        return write_json(self._track(name), document)

    def text(self, name: str, text: str) -> Path:
        return write_text_atomic(self._track(name), text)
