"""Writer for the embedding wire format consumed by vlpl-lab.

Layout: magic ``VLPLEMB1``, u32 rows, u32 dim (little-endian), rows*dim
float32 little-endian values, then a 32-byte SHA-256 of the float data.
A JSON manifest sits next to the file at ``<path>.json`` with keys
``label_names``, ``prompt_template``, ``source``, ``dim``, ``checksum``.
Writes go through a temp file and an atomic rename.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

MAGIC = b"VLPLEMB1"


def write_embedding_file(
    path: str,
    data: np.ndarray,
    label_names=(),
    prompt_template: str = "",
    source: str = "",
) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
        raise ValueError(f"need a non-empty 2-D matrix, got shape {data.shape}")
    payload = data.tobytes()
    digest = hashlib.sha256(payload).digest()

    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", data.shape[0], data.shape[1]))
        fh.write(payload)
        fh.write(digest)
    os.replace(tmp, path)

    manifest = {
        "label_names": list(label_names),
        "prompt_template": prompt_template,
        "source": source,
        "dim": int(data.shape[1]),
        "checksum": digest.hex(),
    }
    tmp = path + ".json.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path + ".json")
