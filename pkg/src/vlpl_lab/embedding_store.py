"""Load, save, validate, and synthesize embedding matrices.

On-disk layout of an embedding file:

    bytes 0..7    magic ``VLPLEMB1``
    bytes 8..11   u32 little-endian row count
    bytes 12..15  u32 little-endian dimension
    ...           rows*dim float32 little-endian values, row-major
    last 32 bytes SHA-256 of the float data section

A JSON manifest lives next to the file at ``<path>.json`` with keys
``label_names``, ``prompt_template``, ``source``, ``dim``, ``checksum``.
The checksum covers the data section only, so manifest edits never
invalidate the binary payload.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ChecksumMismatch,
    DimensionMismatch,
    InvalidSpec,
    IoFailure,
    MalformedHeader,
    NonFiniteValue,
    ZeroNormRow,
)

MAGIC = b"VLPLEMB1"
_HEADER_LEN = len(MAGIC) + 8
_CHECKSUM_LEN = 32
_KINDS = ("image", "label")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """A rows x dim float32 matrix of image or label embeddings."""

    data: np.ndarray
    kind: str = "image"

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        object.__setattr__(self, "data", data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise MalformedHeader(f"embedding matrix must be 2-D and non-empty, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise NonFiniteValue("embedding matrix contains NaN or Inf")
        if self.kind not in _KINDS:
            raise MalformedHeader(f"kind must be one of {_KINDS}, got {self.kind!r}")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Manifest:
    """Sidecar metadata describing an embedding file."""

    label_names: tuple[str, ...]
    prompt_template: str
    source: str
    dim: int
    checksum: str

    def __post_init__(self):
        names = tuple(self.label_names)
        object.__setattr__(self, "label_names", names)
        if any(not isinstance(n, str) or not n for n in names):
            raise InvalidSpec("label names must be non-empty strings")
        if len(set(names)) != len(names):
            raise InvalidSpec("label names must be unique")
        if self.dim < 1:
            raise InvalidSpec(f"manifest dim must be >= 1, got {self.dim}")

    def to_dict(self) -> dict:
        return {
            "label_names": list(self.label_names),
            "prompt_template": self.prompt_template,
            "source": self.source,
            "dim": self.dim,
            "checksum": self.checksum,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        try:
            return cls(
                label_names=tuple(d["label_names"]),
                prompt_template=d["prompt_template"],
                source=d["source"],
                dim=int(d["dim"]),
                checksum=d["checksum"],
            )
        except KeyError as exc:
            raise MalformedHeader(f"manifest missing key {exc}") from exc


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the planted-structure generator."""

    n_samples: int
    n_labels: int
    dim: int
    avg_positives: float = 1.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1 or self.n_labels < 1 or self.dim < 1:
            raise InvalidSpec("n_samples, n_labels, and dim must all be >= 1")
        if not (0.0 < self.avg_positives <= self.n_labels):
            raise InvalidSpec(
                f"avg_positives must be in (0, n_labels], got {self.avg_positives} with n_labels={self.n_labels}"
            )
        if self.noise_sigma < 0.0:
            raise InvalidSpec(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def data_checksum(data: np.ndarray) -> bytes:
    """SHA-256 over the little-endian float32 bytes of the data section."""
    buf = np.ascontiguousarray(data, dtype="<f4").tobytes()
    return hashlib.sha256(buf).digest()


def save_embeddings(matrix: EmbeddingMatrix, manifest: Manifest, path: str) -> None:
    """Write the binary embedding file plus its JSON manifest sidecar.

    The manifest checksum is recomputed from the matrix so the pair on
    disk is always self-consistent.
    """
    if manifest.dim != matrix.dim:
        raise DimensionMismatch(f"manifest dim {manifest.dim} != matrix dim {matrix.dim}")
    digest = data_checksum(matrix.data)
    manifest = Manifest(
        label_names=manifest.label_names,
        prompt_template=manifest.prompt_template,
        source=manifest.source,
        dim=manifest.dim,
        checksum=digest.hex(),
    )
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", matrix.rows, matrix.dim))
            fh.write(np.ascontiguousarray(matrix.data, dtype="<f4").tobytes())
            fh.write(digest)
        with open(path + ".json", "w", encoding="utf-8") as fh:
            json.dump(manifest.to_dict(), fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"failed to write {path}: {exc}") from exc


def load_embeddings(path: str, kind: str | None = None) -> tuple[EmbeddingMatrix, Manifest]:
    """Read an embedding file and its manifest, verifying the checksum.

    ``kind`` defaults to "label" when the manifest vocabulary length
    equals the row count and "image" otherwise; pass it explicitly to
    override the inference.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"failed to read {path}: {exc}") from exc

    if len(blob) < _HEADER_LEN + _CHECKSUM_LEN or blob[: len(MAGIC)] != MAGIC:
        raise MalformedHeader(f"{path} does not start with the {MAGIC!r} header")
    rows = int(np.frombuffer(blob, dtype="<u4", count=1, offset=len(MAGIC))[0])
    dim = int(np.frombuffer(blob, dtype="<u4", count=1, offset=len(MAGIC) + 4)[0])
    expected_len = _HEADER_LEN + rows * dim * 4 + _CHECKSUM_LEN
    if rows < 1 or dim < 1 or len(blob) != expected_len:
        raise MalformedHeader(
            f"{path}: header declares {rows}x{dim} but file length is {len(blob)} (expected {expected_len})"
        )

    data_bytes = blob[_HEADER_LEN : _HEADER_LEN + rows * dim * 4]
    stored_digest = blob[-_CHECKSUM_LEN:]
    if hashlib.sha256(data_bytes).digest() != stored_digest:
        raise ChecksumMismatch(f"{path}: data section does not match its trailing checksum")

    data = np.frombuffer(data_bytes, dtype="<f4").reshape(rows, dim).astype(np.float32)
    if not np.isfinite(data).all():
        raise NonFiniteValue(f"{path}: data section contains NaN or Inf")

    manifest_path = path + ".json"
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = Manifest.from_dict(json.load(fh))
    except OSError as exc:
        raise IoFailure(f"failed to read manifest {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedHeader(f"manifest {manifest_path} is not valid JSON: {exc}") from exc

    if manifest.dim != dim:
        raise DimensionMismatch(f"manifest dim {manifest.dim} != matrix dim {dim}")
    if manifest.checksum != stored_digest.hex():
        raise ChecksumMismatch(f"{path}: manifest checksum does not match the data section")

    if kind is None:
        kind = "label" if manifest.label_names and len(manifest.label_names) == rows else "image"
    return EmbeddingMatrix(data=data, kind=kind), manifest


def normalize(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit L2 norm, preserving direction."""
    data = matrix.data.astype(np.float64)
    norms = np.linalg.norm(data, axis=1)
    if np.any(norms < 1e-30):
        bad = int(np.argmin(norms))
        raise ZeroNormRow(f"row {bad} has zero norm and cannot be normalized")
    return EmbeddingMatrix(data=(data / norms[:, None]).astype(np.float32), kind=matrix.kind)


def _unit_rows(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    vecs = rng.standard_normal((rows, dim))
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def synthesize(spec: SyntheticSpec) -> tuple[EmbeddingMatrix, EmbeddingMatrix, np.ndarray]:
    """Generate planted image/label embeddings plus the full label matrix.

    Each label is a random unit prototype. Each sample draws a positive
    set (every label independently with probability avg_positives /
    n_labels, redrawn while empty), takes the normalized mean of its
    positive prototypes, adds per-component Gaussian noise of standard
    deviation ``noise_sigma``, and renormalizes. Returns (image matrix,
    label matrix, boolean ground-truth matrix). Pure function of the
    spec, including the seed.
    """
    rng = np.random.default_rng(spec.seed)
    protos = _unit_rows(rng, spec.n_labels, spec.dim)

    p = spec.avg_positives / spec.n_labels
    positives = rng.random((spec.n_samples, spec.n_labels)) < p
    for i in np.flatnonzero(~positives.any(axis=1)):
        row = positives[i]
        while not row.any():
            row = rng.random(spec.n_labels) < p
        positives[i] = row

    counts = positives.sum(axis=1).astype(np.float64)
    means = (positives.astype(np.float64) @ protos) / counts[:, None]
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    images = means + spec.noise_sigma * rng.standard_normal((spec.n_samples, spec.dim))
    images /= np.linalg.norm(images, axis=1, keepdims=True)

    image_matrix = EmbeddingMatrix(data=images.astype(np.float32), kind="image")
    label_matrix = EmbeddingMatrix(data=protos.astype(np.float32), kind="label")
    return image_matrix, label_matrix, positives


def synthetic_label_names(n_labels: int) -> tuple[str, ...]:
    width = max(2, int(math.log10(max(n_labels - 1, 1))) + 1)
    return tuple(f"label_{i:0{width}d}" for i in range(n_labels))


def synthetic_manifests(spec: SyntheticSpec) -> tuple[Manifest, Manifest]:
    """Image and label manifests for a synthesized pair (checksums filled at save)."""
    names = synthetic_label_names(spec.n_labels)
    image = Manifest(
        label_names=(),
        prompt_template="",
        source=f"synthetic(seed={spec.seed})",
        dim=spec.dim,
        checksum="",
    )
    label = Manifest(
        label_names=names,
        prompt_template="A photo of {}",
        source=f"synthetic(seed={spec.seed})",
        dim=spec.dim,
        checksum="",
    )
    return image, label


def resolve_path(path: str) -> str:
    return os.path.abspath(os.path.expanduser(path))
